"""
Probabilistic mixtures and remote preparation.

An `Ensemble` is a weighted list of pure states. Many ensembles share one
density matrix; `hjw_ensemble` walks that whole family through an isometry
acting on the square-root spectral decomposition, and `design_steering` /
`steer` realize any member of the family by measuring the complement of a
purification.
"""

from __future__ import annotations

import logging
from collections.abc import Iterable, Iterator
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np
import numpy.typing as npt
from scipy import linalg

from linearity_lab.errors import (
    InvalidInputError,
    IsometryError,
    MeasurementError,
    SteeringError,
    StructuralError,
)
from linearity_lab.models import (
    EnsembleMember,
    EnsemblePayload,
    SteeringBasisPayload,
    decode_vector,
    encode_vector,
)
from linearity_lab.qstatics import (
    SUPPORT_TOL,
    DensityMatrix,
    FactorSubset,
    PureState,
    TensorStructure,
    as_complex_matrix,
    density_from_computation,
    partial_trace,
    spectral_decomposition,
    split_factors,
    state_overlap,
    tensor_product,
    trace_distance,
)

logger = logging.getLogger(__name__)

WEIGHT_SUM_TOL = 1e-12
WEIGHT_DRIFT_TOL = 1e-10
ISOMETRY_TOL = 1e-10
ORTHONORMAL_TOL = 1e-10
EQUIVALENCE_TOL = 1e-10
MATCH_TOL = 1e-10


# ── Ensemble ────────────────────────────────────────────────────────────────

@dataclass(frozen=True, eq=False)
class Ensemble:
    """Weighted pure states ``{p_i, |psi_i>}``; weights positive and summing to one."""

    weights: np.ndarray
    states: tuple[PureState, ...]

    def __post_init__(self) -> None:
        weights = np.array(self.weights, dtype=float).ravel()
        states = tuple(self.states)
        if len(states) == 0 or len(states) != weights.size:
            raise InvalidInputError(
                "bad_ensemble", f"{weights.size} weights for {len(states)} states"
            )
        if np.any(weights <= 0.0):
            raise InvalidInputError("bad_weights", "ensemble weights must be strictly positive")
        total = float(np.sum(weights))
        if abs(total - 1.0) > WEIGHT_SUM_TOL:
            raise InvalidInputError("bad_weights", f"ensemble weights sum to {total:.15g}")
        if len({s.dim for s in states}) != 1:
            raise StructuralError("dimension_mismatch", "ensemble members have different dims")
        weights.setflags(write=False)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "states", states)

    @classmethod
    def from_members(
        cls,
        members: Iterable[tuple[float, Union[PureState, npt.ArrayLike]]],
    ) -> "Ensemble":
        """Build from ``(p, state)`` pairs, dropping members below 1e-12.

        Weight sums that drift from one by at most 1e-10 are renormalized.
        """
        kept: list[tuple[float, PureState]] = []
        for p, state in members:
            if p < SUPPORT_TOL:
                continue
            psi = state if isinstance(state, PureState) else PureState.from_vector(state)
            kept.append((float(p), psi))
        if not kept:
            raise InvalidInputError("empty_ensemble", "no member has weight above 1e-12")
        weights = np.array([p for p, _ in kept])
        total = float(weights.sum())
        if abs(total - 1.0) > WEIGHT_DRIFT_TOL:
            raise InvalidInputError("bad_weights", f"ensemble weights sum to {total:.15g}")
        return cls(weights / total, tuple(psi for _, psi in kept))

    @classmethod
    def from_payload(cls, payload: EnsemblePayload) -> "Ensemble":
        return cls.from_members((m.p, decode_vector(m.state)) for m in payload.members)

    @property
    def dim(self) -> int:
        return self.states[0].dim

    def __len__(self) -> int:
        return len(self.states)

    def __iter__(self) -> Iterator[tuple[float, PureState]]:
        return iter(zip(self.weights.tolist(), self.states))

    def state_matrix(self) -> np.ndarray:
        """Member amplitudes as rows."""
        return np.array([s.amplitudes for s in self.states])

    def to_payload(self) -> EnsemblePayload:
        return EnsemblePayload(
            members=[
                EnsembleMember(p=float(p), state=encode_vector(s.amplitudes)) for p, s in self
            ]
        )


def mixture_density(e: Ensemble) -> DensityMatrix:
    """``rho = sum_i p_i |psi_i><psi_i|``."""
    rows = e.state_matrix()
    return density_from_computation((rows.T * e.weights) @ rows.conj())


def ensembles_equivalent(e1: Ensemble, e2: Ensemble, tol: float = EQUIVALENCE_TOL) -> bool:
    if e1.dim != e2.dim:
        raise StructuralError("dimension_mismatch", f"ensemble dims differ: {e1.dim} vs {e2.dim}")
    return trace_distance(mixture_density(e1), mixture_density(e2)) < tol


def eigen_ensemble(rho: DensityMatrix) -> Ensemble:
    spectrum = spectral_decomposition(rho)
    vectors = spectrum.support_vectors
    return Ensemble.from_members(
        (float(lam), vectors[:, k]) for k, lam in enumerate(spectrum.support_values)
    )


def hjw_ensemble(rho: DensityMatrix, isometry: npt.ArrayLike) -> Ensemble:
    """Ensemble with ``sqrt(p_i)|psi_i> = sum_k V[i,k] sqrt(lambda_k)|e_k>``.

    Columns of the isometry index the support eigenvectors of `rho` in
    nondecreasing eigenvalue order.
    """
    v = as_complex_matrix(isometry, name="isometry")
    spectrum = spectral_decomposition(rho)
    r = spectrum.rank
    m, cols = v.shape
    if m < r:
        raise IsometryError("too_few_rows", f"isometry has {m} rows but rank(rho) = {r}")
    if cols != r:
        raise IsometryError("rank_mismatch", f"isometry has {cols} columns but rank(rho) = {r}")
    deviation = float(np.max(np.abs(v.conj().T @ v - np.eye(r))))
    if deviation > ISOMETRY_TOL:
        raise IsometryError("not_isometric", f"max|V^dag V - I| = {deviation:.3e}")
    rows = (v * np.sqrt(spectrum.support_values)) @ spectrum.support_vectors.T
    weights = np.sum(np.abs(rows) ** 2, axis=1)
    return Ensemble.from_members(
        (float(p), rows[i] / np.sqrt(p)) for i, p in enumerate(weights) if p >= SUPPORT_TOL
    )


# ── Matching ────────────────────────────────────────────────────────────────

@dataclass(frozen=True)
class EnsembleMatch:
    """Greedy maximal-overlap assignment of candidate members onto target members."""

    pairs: tuple[tuple[int, int], ...]
    fidelities: tuple[float, ...]
    weight_errors: tuple[float, ...]
    complete: bool

    @property
    def min_fidelity(self) -> float:
        return min(self.fidelities) if self.fidelities else 0.0

    @property
    def max_weight_error(self) -> float:
        return max(self.weight_errors) if self.weight_errors else float("inf")

    def agrees(self, fidelity_tol: float = MATCH_TOL, weight_tol: float = MATCH_TOL) -> bool:
        return (
            self.complete
            and self.min_fidelity > 1.0 - fidelity_tol
            and self.max_weight_error < weight_tol
        )


def match_ensembles(target: Ensemble, candidate: Ensemble) -> EnsembleMatch:
    """Pair members by phase-insensitive overlap; ties go to the lower index."""
    if target.dim != candidate.dim:
        raise StructuralError("dimension_mismatch", "ensembles live on different dims")
    overlaps = np.array(
        [[state_overlap(a, b) ** 2 for b in candidate.states] for a in target.states]
    )
    n = min(len(target), len(candidate))
    pairs, fids, errs = [], [], []
    masked = overlaps.copy()
    for _ in range(n):
        i, j = np.unravel_index(int(np.argmax(masked)), masked.shape)
        pairs.append((int(i), int(j)))
        fids.append(float(overlaps[i, j]))
        errs.append(abs(float(target.weights[i]) - float(candidate.weights[j])))
        masked[i, :] = -1.0
        masked[:, j] = -1.0
    return EnsembleMatch(
        pairs=tuple(pairs),
        fidelities=tuple(fids),
        weight_errors=tuple(errs),
        complete=len(target) == len(candidate),
    )


# ── Purification and steering ───────────────────────────────────────────────

def purify(rho: DensityMatrix, complement_dim: Optional[int] = None) -> tuple[PureState, TensorStructure]:
    """Schmidt-diagonal purification ``sum_k sqrt(lambda_k)|e_k>|k>``.

    The complement has dimension ``max(rank, complement_dim, 2)``.
    """
    spectrum = spectral_decomposition(rho)
    r = spectrum.rank
    d_b = max(r, complement_dim or 0, 2)
    vector = np.zeros(rho.dim * d_b, dtype=np.complex128)
    for k, (lam, e_k) in enumerate(zip(spectrum.support_values, spectrum.support_vectors.T)):
        marker = np.zeros(d_b, dtype=np.complex128)
        marker[k] = 1.0
        vector += np.sqrt(lam) * np.kron(e_k, marker)
    return PureState.from_vector(vector), TensorStructure((rho.dim, d_b))


@dataclass(frozen=True, eq=False)
class SteeringBasis:
    """Orthonormal rank-1 measurement vectors (rows) on the complement space."""

    vectors: np.ndarray

    def __post_init__(self) -> None:
        vectors = as_complex_matrix(self.vectors, name="steering basis")
        count, dim = vectors.shape
        if count > dim:
            raise InvalidInputError("overcomplete_basis", f"{count} vectors in dimension {dim}")
        gram = vectors.conj() @ vectors.T
        deviation = float(np.max(np.abs(gram - np.eye(count))))
        if deviation > ORTHONORMAL_TOL:
            raise InvalidInputError("not_orthonormal", f"basis Gram deviation {deviation:.3e}")
        vectors.setflags(write=False)
        object.__setattr__(self, "vectors", vectors)

    @classmethod
    def from_columns(cls, unitary: npt.ArrayLike) -> "SteeringBasis":
        return cls(np.asarray(unitary, dtype=np.complex128).T)

    @classmethod
    def computational(cls, dim: int) -> "SteeringBasis":
        return cls(np.eye(dim, dtype=np.complex128))

    @classmethod
    def from_payload(cls, payload: SteeringBasisPayload) -> "SteeringBasis":
        return cls(np.array([decode_vector(v) for v in payload]))

    @property
    def dim(self) -> int:
        return int(self.vectors.shape[1])

    def __len__(self) -> int:
        return int(self.vectors.shape[0])

    def states(self) -> list[PureState]:
        return [PureState(v) for v in self.vectors]

    def to_payload(self) -> SteeringBasisPayload:
        return [encode_vector(v) for v in self.vectors]


def _bipartite_amplitudes(
    purification: PureState,
    structure: TensorStructure,
    keep: FactorSubset,
) -> tuple[np.ndarray, int, int]:
    if purification.dim != structure.total_dim:
        raise StructuralError(
            "dimension_mismatch",
            f"purification dim {purification.dim} != structure total {structure.total_dim}",
        )
    split = split_factors(structure, keep)
    d_a = structure.subset_dim(keep)
    d_b = structure.total_dim // d_a
    if d_b == 1:
        raise StructuralError("empty_complement", "steering needs a nonempty complement")
    return split.apply_vector(purification.amplitudes).reshape(d_a, d_b), d_a, d_b


def _default_keep(keep: Optional[FactorSubset]) -> FactorSubset:
    return keep if keep is not None else FactorSubset((0,))


def steer(
    purification: PureState,
    basis: SteeringBasis,
    structure: TensorStructure,
    keep: Optional[FactorSubset] = None,
) -> Ensemble:
    """Measure the complement in `basis`; return the ensemble prepared on the kept factors."""
    keep = _default_keep(keep)
    amplitudes, _, d_b = _bipartite_amplitudes(purification, structure, keep)
    if basis.dim != d_b:
        raise StructuralError(
            "basis_dimension_mismatch", f"basis lives in dim {basis.dim}, complement has {d_b}"
        )
    conditional = amplitudes @ basis.vectors.conj().T
    weights = np.sum(np.abs(conditional) ** 2, axis=0)
    total = float(weights.sum())
    if total < 1.0 - WEIGHT_DRIFT_TOL:
        raise MeasurementError(
            "basis_incomplete",
            f"basis captures probability {total:.12f}; it must span the complement's support",
        )
    return Ensemble.from_members(
        (float(p), conditional[:, i] / np.sqrt(p))
        for i, p in enumerate(weights)
        if p >= SUPPORT_TOL
    )


def _nearest_unitary(matrix: np.ndarray) -> np.ndarray:
    u, _, vh = np.linalg.svd(matrix)
    return u @ vh


def design_steering(
    purification: PureState,
    target: Ensemble,
    structure: TensorStructure,
    keep: Optional[FactorSubset] = None,
) -> SteeringBasis:
    """Orthonormal complement basis whose measurement steers the kept factors to `target`.

    The complex-conjugation convention is fixed by verification through
    `steer`: the conjugated construction is tried first, the plain one second.
    """
    keep = _default_keep(keep)
    amplitudes, d_a, d_b = _bipartite_amplitudes(purification, structure, keep)
    if target.dim != d_a:
        raise StructuralError(
            "dimension_mismatch", f"target lives in dim {target.dim}, kept factors have {d_a}"
        )
    marginal = partial_trace(purification, structure, keep)
    distance = trace_distance(mixture_density(target), marginal)
    if distance > EQUIVALENCE_TOL:
        raise SteeringError(
            "inconsistent_target",
            f"target mixture differs from the kept marginal by trace distance {distance:.3e}",
            trace_distance=distance,
        )
    m = len(target)
    if m > d_b:
        raise SteeringError(
            "complement_too_small",
            f"target has {m} members but the complement has dimension {d_b}; "
            f"enlarge it with purify(rho, complement_dim={m})",
        )

    u, s, wh = np.linalg.svd(amplitudes)
    r = int(np.count_nonzero(s**2 > SUPPORT_TOL))
    schmidt_kept, schmidt_values = u[:, :r], s[:r]
    scaled = target.state_matrix() * np.sqrt(target.weights)[:, None]
    v = (scaled @ schmidt_kept.conj()) / schmidt_values
    completion = linalg.null_space(v.conj().T) if m > r else np.zeros((m, 0), dtype=complex)
    v_full = _nearest_unitary(np.hstack([v, completion]))
    complement_rows = wh[:m, :]

    for label, coefficients in (("conjugated", v_full.conj()), ("plain", v_full)):
        basis = SteeringBasis(coefficients @ complement_rows)
        match = match_ensembles(target, steer(purification, basis, structure, keep))
        if match.agrees():
            logger.debug("steering basis verified with %s coefficients", label)
            return basis
        logger.debug(
            "%s steering candidate rejected: min fidelity %.3e, max weight error %.3e",
            label,
            1.0 - match.min_fidelity,
            match.max_weight_error,
        )
    raise SteeringError(
        "verification_failed", "no conjugation convention reproduces the target ensemble"
    )


# ── Collapse ────────────────────────────────────────────────────────────────

@dataclass(frozen=True, eq=False)
class OutcomeRecord:
    """One outcome of a maximal measurement on the complement factors."""

    outcome_index: int
    probability: float
    post_state_kept: DensityMatrix
    post_state_kept_pure: Optional[PureState]
    post_state_complement: PureState
    post_state_joint: DensityMatrix


def collapse_measurement(
    joint: Union[DensityMatrix, PureState],
    basis: SteeringBasis,
    structure: TensorStructure,
    keep: Optional[FactorSubset] = None,
) -> list[OutcomeRecord]:
    """Project the complement onto each basis vector; outcomes below 1e-12 are dropped."""
    keep = _default_keep(keep)
    if isinstance(joint, PureState):
        joint = joint.projector()
    if joint.dim != structure.total_dim:
        raise StructuralError(
            "dimension_mismatch", f"joint dim {joint.dim} != structure total {structure.total_dim}"
        )
    split = split_factors(structure, keep)
    d_a = structure.subset_dim(keep)
    d_b = structure.total_dim // d_a
    if d_b == 1:
        raise StructuralError("empty_complement", "collapse needs a nonempty complement")
    if basis.dim != d_b:
        raise StructuralError(
            "basis_dimension_mismatch", f"basis lives in dim {basis.dim}, complement has {d_b}"
        )
    blocks = split.apply_operator(joint.matrix).reshape(d_a, d_b, d_a, d_b)
    conditionals = np.einsum("ib,xbyc,ic->ixy", basis.vectors.conj(), blocks, basis.vectors)
    probabilities = np.real(np.einsum("ixx->i", conditionals))
    total = float(probabilities.sum())
    if total < 1.0 - WEIGHT_DRIFT_TOL:
        raise MeasurementError(
            "incomplete_basis", f"outcome probabilities sum to {total:.12f} < 1"
        )

    records = []
    for i, p in enumerate(probabilities):
        if p < SUPPORT_TOL:
            continue
        kept = density_from_computation(conditionals[i] / p)
        values, vectors = np.linalg.eigh(kept.matrix)
        kept_pure = PureState.from_vector(vectors[:, -1]) if values[-1] > 1.0 - EQUIVALENCE_TOL else None
        complement = PureState(basis.vectors[i])
        product = tensor_product(kept.matrix, complement.projector().matrix)
        records.append(
            OutcomeRecord(
                outcome_index=i,
                probability=float(p),
                post_state_kept=kept,
                post_state_kept_pure=kept_pure,
                post_state_complement=complement,
                post_state_joint=density_from_computation(split.restore_operator(product)),
            )
        )
    return records


def average_outcomes(records: list[OutcomeRecord]) -> DensityMatrix:
    """Outcome-averaged joint state ``sum_i p_i rho_i``."""
    total = sum(r.probability for r in records)
    return density_from_computation(
        sum(r.probability * r.post_state_joint.matrix for r in records) / total
    )


def product_deviation(
    joint: DensityMatrix,
    structure: TensorStructure,
    keep: Optional[FactorSubset] = None,
) -> float:
    """Trace distance between `joint` and the product of its kept and complement marginals."""
    keep = _default_keep(keep)
    split = split_factors(structure, keep)
    rest = structure.complement(keep)
    product = tensor_product(
        partial_trace(joint, structure, keep).matrix,
        partial_trace(joint, structure, rest).matrix,
    )
    return trace_distance(joint, split.restore_operator(product))
