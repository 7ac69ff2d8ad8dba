"""
Quantum statics: states, tensor-product structure, partial traces, distance
metrics and seeded sampling.

Index convention: composite basis indices are row-major with factor 0 most
significant. For factor dims ``(d0, d1)`` the basis vector ``|i0, i1>`` sits
at index ``i0 * d1 + i1``; every reshape in this package relies on it.

All values are immutable after construction (their arrays are read-only) and
every function here is pure.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field
from typing import Literal, Union, overload

import numpy as np
import numpy.typing as npt

from linearity_lab.errors import InvalidInputError, StructuralError
from linearity_lab.models import DensityMatrixPayload, StatePayload, StructurePayload

logger = logging.getLogger(__name__)

ComplexMatrix = npt.NDArray[np.complex128]

NORM_TOL = 1e-12
HERMITIAN_TOL = 1e-12
TRACE_TOL = 1e-12
MIN_EIGENVALUE = -1e-10
SUPPORT_TOL = 1e-12
SEED_MAX = 2**64 - 1

PAULI_I = np.eye(2, dtype=complex)
PAULI_X = np.array([[0, 1], [1, 0]], dtype=complex)
PAULI_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
PAULI_Z = np.array([[1, 0], [0, -1]], dtype=complex)
HADAMARD = np.array([[1, 1], [1, -1]], dtype=complex) / math.sqrt(2)

for _op in (PAULI_I, PAULI_X, PAULI_Y, PAULI_Z, HADAMARD):
    _op.setflags(write=False)


# ── Matrix helpers ──────────────────────────────────────────────────────────

def as_complex_matrix(a: npt.ArrayLike, *, name: str = "matrix") -> ComplexMatrix:
    """Copy `a` into a finite 2-D complex array or raise."""
    matrix = np.array(a, dtype=np.complex128)
    if matrix.ndim != 2:
        raise StructuralError("not_a_matrix", f"{name} must be 2-dimensional, got ndim={matrix.ndim}")
    if not np.all(np.isfinite(matrix)):
        raise InvalidInputError("non_finite_entries", f"{name} contains NaN or Inf entries")
    return matrix


def hermitian_deviation(matrix: np.ndarray) -> float:
    if matrix.size == 0:
        return 0.0
    return float(np.max(np.abs(matrix - matrix.conj().T)))


def hermitize(matrix: np.ndarray) -> ComplexMatrix:
    return (matrix + matrix.conj().T) / 2


def _read_only(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


def tensor_product(a: npt.ArrayLike, b: npt.ArrayLike) -> ComplexMatrix:
    """Kronecker product; composite index ``i = i_a * dim_b + i_b``."""
    return np.kron(as_complex_matrix(a, name="a"), as_complex_matrix(b, name="b"))


def fourier_matrix(dim: int) -> ComplexMatrix:
    """Unitary DFT matrix; column k is the k-th conjugate-coordinate basis vector."""
    j, k = np.meshgrid(np.arange(dim), np.arange(dim), indexing="ij")
    return np.exp(2j * np.pi * j * k / dim) / math.sqrt(dim)


# ── States ──────────────────────────────────────────────────────────────────

@dataclass(frozen=True, eq=False)
class PureState:
    """Normalized state vector."""

    amplitudes: np.ndarray
    norm_tol: float = field(default=NORM_TOL, repr=False)

    def __post_init__(self) -> None:
        vector = np.array(self.amplitudes, dtype=np.complex128).ravel()
        if vector.size == 0:
            raise InvalidInputError("empty_state", "a state needs at least one amplitude")
        if not np.all(np.isfinite(vector)):
            raise InvalidInputError("non_finite_entries", "state contains NaN or Inf amplitudes")
        drift = abs(float(np.linalg.norm(vector)) - 1.0)
        if drift > self.norm_tol:
            raise InvalidInputError(
                "not_normalized",
                f"state norm deviates from 1 by {drift:.3e} (tolerance {self.norm_tol:.1e})",
            )
        object.__setattr__(self, "amplitudes", _read_only(vector))

    @classmethod
    def from_vector(cls, vector: npt.ArrayLike, *, normalize: bool = True) -> "PureState":
        v = np.array(vector, dtype=np.complex128).ravel()
        if normalize:
            norm = np.linalg.norm(v)
            if norm == 0.0:
                raise InvalidInputError("zero_vector", "cannot normalize the zero vector")
            v = v / norm
        return cls(v)

    @classmethod
    def basis(cls, dim: int, index: int) -> "PureState":
        v = np.zeros(dim, dtype=np.complex128)
        v[index] = 1.0
        return cls(v)

    @classmethod
    def from_payload(cls, payload: StatePayload) -> "PureState":
        return cls(payload.to_array())

    @property
    def dim(self) -> int:
        return int(self.amplitudes.shape[0])

    def projector(self) -> "DensityMatrix":
        v = self.amplitudes / np.linalg.norm(self.amplitudes)
        return DensityMatrix(np.outer(v, v.conj()))

    def to_payload(self) -> StatePayload:
        return StatePayload.from_array(self.amplitudes)


def tensor_states(*states: PureState) -> PureState:
    vector = np.ones(1, dtype=np.complex128)
    for s in states:
        vector = np.kron(vector, s.amplitudes)
    return PureState.from_vector(vector)


def state_overlap(phi: PureState, psi: PureState) -> float:
    """Phase-insensitive overlap ``|<phi|psi>|``."""
    if phi.dim != psi.dim:
        raise StructuralError("dimension_mismatch", f"state dims differ: {phi.dim} vs {psi.dim}")
    return float(abs(np.vdot(phi.amplitudes, psi.amplitudes)))


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    """Hermitian, unit-trace, positive semidefinite matrix."""

    matrix: np.ndarray

    def __post_init__(self) -> None:
        m = as_complex_matrix(self.matrix, name="density matrix")
        if m.shape[0] != m.shape[1]:
            raise StructuralError("not_square", f"density matrix must be square, got {m.shape}")
        dev = hermitian_deviation(m)
        if dev > HERMITIAN_TOL:
            raise InvalidInputError("not_hermitian", f"density matrix hermiticity deviation {dev:.3e}")
        trace = complex(np.trace(m))
        if abs(trace - 1.0) > TRACE_TOL:
            raise InvalidInputError("bad_trace", f"density matrix trace is {trace.real:.15g}")
        min_eig = float(np.linalg.eigvalsh(m)[0])
        if min_eig < MIN_EIGENVALUE:
            raise InvalidInputError("not_positive", f"density matrix eigenvalue {min_eig:.3e} < 0")
        object.__setattr__(self, "matrix", _read_only(m))

    @classmethod
    def from_payload(cls, payload: DensityMatrixPayload) -> "DensityMatrix":
        return cls(payload.to_array())

    @classmethod
    def maximally_mixed(cls, dim: int) -> "DensityMatrix":
        return cls(np.eye(dim, dtype=np.complex128) / dim)

    @classmethod
    def diagonal(cls, weights: Sequence[float]) -> "DensityMatrix":
        return cls(np.diag(np.asarray(weights, dtype=np.complex128)))

    @property
    def dim(self) -> int:
        return int(self.matrix.shape[0])

    def to_payload(self) -> DensityMatrixPayload:
        return DensityMatrixPayload.from_array(self.matrix)


def density_from_computation(matrix: np.ndarray) -> DensityMatrix:
    """Wrap an internally computed matrix, absorbing rounding in hermiticity."""
    return DensityMatrix(hermitize(np.asarray(matrix, dtype=np.complex128)))


StateLike = Union[PureState, DensityMatrix]


def _as_density(state: StateLike) -> DensityMatrix:
    return state.projector() if isinstance(state, PureState) else state


# ── Tensor structure ────────────────────────────────────────────────────────

@dataclass(frozen=True)
class TensorStructure:
    """Ordered factor dimensions of a composite Hilbert space."""

    factor_dims: tuple[int, ...]

    def __post_init__(self) -> None:
        dims = tuple(int(d) for d in self.factor_dims)
        if not dims:
            raise StructuralError("empty_structure", "a tensor structure needs at least one factor")
        if any(d < 2 for d in dims):
            raise StructuralError("factor_too_small", f"every factor dimension must be >= 2: {dims}")
        object.__setattr__(self, "factor_dims", dims)

    @classmethod
    def from_payload(cls, payload: StructurePayload) -> "TensorStructure":
        return cls(tuple(payload.factor_dims))

    @property
    def total_dim(self) -> int:
        return math.prod(self.factor_dims)

    @property
    def n_factors(self) -> int:
        return len(self.factor_dims)

    def subset(self, indices: Iterable[int]) -> "FactorSubset":
        return FactorSubset.of(indices, self)

    def complement(self, subset: "FactorSubset") -> "FactorSubset":
        return FactorSubset(tuple(i for i in range(self.n_factors) if i not in subset.indices))

    def subset_dim(self, subset: "FactorSubset") -> int:
        return math.prod(self.factor_dims[i] for i in subset.indices)

    def to_payload(self) -> StructurePayload:
        return StructurePayload(factor_dims=list(self.factor_dims))


@dataclass(frozen=True)
class FactorSubset:
    """Sorted, distinct factor positions into a TensorStructure."""

    indices: tuple[int, ...]

    def __post_init__(self) -> None:
        idx = tuple(sorted(int(i) for i in self.indices))
        if len(set(idx)) != len(idx):
            raise StructuralError("duplicate_factors", f"factor indices must be distinct: {idx}")
        object.__setattr__(self, "indices", idx)

    @classmethod
    def of(cls, indices: Iterable[int], structure: TensorStructure) -> "FactorSubset":
        subset = cls(tuple(indices))
        subset.check_within(structure)
        return subset

    def check_within(self, structure: TensorStructure) -> None:
        bad = [i for i in self.indices if not 0 <= i < structure.n_factors]
        if bad:
            raise StructuralError(
                "factor_out_of_range",
                f"factor indices {bad} out of range for {structure.n_factors} factors",
            )

    def __len__(self) -> int:
        return len(self.indices)


def _check_state_dim(dim: int, structure: TensorStructure) -> None:
    if dim != structure.total_dim:
        raise StructuralError(
            "dimension_mismatch",
            f"state dim {dim} does not match structure {structure.factor_dims} "
            f"(total {structure.total_dim})",
        )


def partial_trace_matrix(matrix: np.ndarray, dims: Sequence[int], keep: Sequence[int]) -> ComplexMatrix:
    """Trace out every factor not in `keep` from an arbitrary square operator."""
    n = len(dims)
    tensor = np.asarray(matrix, dtype=np.complex128).reshape(tuple(dims) * 2)
    kept = sorted(keep)
    rows = list(range(n))
    cols = [i if i not in kept else n + i for i in range(n)]
    out = kept + [n + i for i in kept]
    reduced = np.einsum(tensor, rows + cols, out)
    d = math.prod(dims[i] for i in kept)
    return reduced.reshape(d, d)


def partial_trace(rho: StateLike, structure: TensorStructure, keep: FactorSubset) -> DensityMatrix:
    """Reduced density matrix over the kept factors, factor order preserved."""
    rho = _as_density(rho)
    _check_state_dim(rho.dim, structure)
    keep.check_within(structure)
    if len(keep) == 0:
        raise StructuralError("empty_keep", "partial_trace needs at least one kept factor")
    return density_from_computation(
        partial_trace_matrix(rho.matrix, structure.factor_dims, keep.indices)
    )


# ── Spectra and metrics ─────────────────────────────────────────────────────

@dataclass(frozen=True, eq=False)
class Spectrum:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    support: np.ndarray

    @property
    def rank(self) -> int:
        return int(np.count_nonzero(self.support))

    @property
    def support_values(self) -> np.ndarray:
        return self.eigenvalues[self.support]

    @property
    def support_vectors(self) -> np.ndarray:
        return self.eigenvectors[:, self.support]


def spectral_decomposition(rho: DensityMatrix) -> Spectrum:
    """Eigenvalues in nondecreasing order; support is eigenvalues above 1e-12."""
    values, vectors = np.linalg.eigh(rho.matrix)
    support = values > SUPPORT_TOL
    return Spectrum(_read_only(values), _read_only(vectors), _read_only(support))


def _matrix_of(x: Union[DensityMatrix, np.ndarray]) -> np.ndarray:
    return x.matrix if isinstance(x, DensityMatrix) else np.asarray(x, dtype=np.complex128)


def trace_distance(rho: Union[DensityMatrix, np.ndarray], sigma: Union[DensityMatrix, np.ndarray]) -> float:
    """``T = 1/2 sum |lambda_k|`` over the eigenvalues of ``rho - sigma``."""
    a, b = _matrix_of(rho), _matrix_of(sigma)
    if a.shape != b.shape:
        raise StructuralError("dimension_mismatch", f"cannot compare {a.shape} with {b.shape}")
    diff = hermitize(a - b)
    return float(0.5 * np.sum(np.abs(np.linalg.eigvalsh(diff))))


def _psd_sqrt(matrix: np.ndarray) -> np.ndarray:
    values, vectors = np.linalg.eigh(hermitize(matrix))
    return (vectors * np.sqrt(np.clip(values, 0.0, None))) @ vectors.conj().T


def fidelity(rho: DensityMatrix, sigma: DensityMatrix) -> float:
    """Uhlmann fidelity ``(Tr sqrt(sqrt(rho) sigma sqrt(rho)))**2``."""
    if rho.dim != sigma.dim:
        raise StructuralError("dimension_mismatch", f"cannot compare dims {rho.dim} and {sigma.dim}")
    root = _psd_sqrt(rho.matrix)
    inner = np.linalg.eigvalsh(hermitize(root @ sigma.matrix @ root))
    return float(np.sum(np.sqrt(np.clip(inner, 0.0, None))) ** 2)


# ── Seeded sampling ─────────────────────────────────────────────────────────

def _check_seed(seed: int) -> int:
    seed = int(seed)
    if not 0 <= seed <= SEED_MAX:
        raise InvalidInputError("bad_seed", f"seed must be a non-negative 64-bit integer, got {seed}")
    return seed


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(_check_seed(seed)))


def task_rng(seed: int, task: int) -> np.random.Generator:
    """Independent stream for task `task`; identical regardless of scheduling."""
    sequence = np.random.SeedSequence(_check_seed(seed), spawn_key=(int(task),))
    return np.random.Generator(np.random.PCG64(sequence))


def _complex_gaussian(rng: np.random.Generator, shape: tuple[int, ...]) -> np.ndarray:
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / math.sqrt(2)


def haar_state(dim: int, rng: np.random.Generator) -> PureState:
    if dim < 2:
        raise InvalidInputError("dim_too_small", f"haar sampling needs dim >= 2, got {dim}")
    return PureState.from_vector(_complex_gaussian(rng, (dim,)))


def haar_unitary(dim: int, rng: np.random.Generator) -> ComplexMatrix:
    if dim < 2:
        raise InvalidInputError("dim_too_small", f"haar sampling needs dim >= 2, got {dim}")
    q, r = np.linalg.qr(_complex_gaussian(rng, (dim, dim)))
    diag = np.diag(r)
    return q * (diag / np.abs(diag))


@overload
def haar_sample(kind: Literal["state"], dim: int, seed: int) -> PureState: ...
@overload
def haar_sample(kind: Literal["unitary"], dim: int, seed: int) -> ComplexMatrix: ...


def haar_sample(kind: str, dim: int, seed: int):
    """Deterministic Haar-random state or unitary for a given seed."""
    rng = make_rng(seed)
    if kind == "state":
        return haar_state(dim, rng)
    if kind == "unitary":
        return haar_unitary(dim, rng)
    raise InvalidInputError("bad_kind", f"haar_sample kind must be 'state' or 'unitary', got {kind!r}")


def random_isometry(m: int, r: int, rng: np.random.Generator) -> ComplexMatrix:
    """First `r` columns of a Haar unitary on dimension `m`."""
    if not 1 <= r <= m:
        raise InvalidInputError("bad_isometry_shape", f"need 1 <= r <= m, got m={m}, r={r}")
    if m == 1:
        return np.ones((1, 1), dtype=np.complex128)
    return haar_unitary(m, rng)[:, :r]


def random_hermitian(dim: int, rng: np.random.Generator) -> ComplexMatrix:
    return hermitize(_complex_gaussian(rng, (dim, dim)))


def random_density_matrix(
    dim: int,
    rng: np.random.Generator,
    members: int | None = None,
    floor: float = 0.05,
) -> DensityMatrix:
    """Mixture of Haar states with Dirichlet-uniform weights, each at least `floor`.

    The floor is capped at ``1/(2n)`` so that large mixtures stay valid.
    """
    n = members or dim
    if n < 1 or floor < 0.0:
        raise InvalidInputError("bad_mixture", f"need members >= 1 and floor >= 0, got {n}, {floor}")
    floor = min(floor, 0.5 / n)
    weights = floor + (1.0 - floor * n) * rng.dirichlet(np.ones(n))
    states = np.array([haar_state(dim, rng).amplitudes for _ in range(n)])
    matrix = (states.T * weights) @ states.conj()
    return density_from_computation(matrix / np.real(np.trace(matrix)))


# ── Regrouping ──────────────────────────────────────────────────────────────

@dataclass(frozen=True, eq=False)
class Regrouping:
    """Relabeling of a structure into merged, reordered factor groups.

    ``index_map[old] = new`` for every basis index of the source structure.
    """

    source: TensorStructure
    structure: TensorStructure
    groups: tuple[tuple[int, ...], ...]
    index_map: np.ndarray

    @property
    def inverse_map(self) -> np.ndarray:
        return np.argsort(self.index_map)

    def permutation_matrix(self) -> ComplexMatrix:
        n = self.source.total_dim
        p = np.zeros((n, n), dtype=np.complex128)
        p[self.index_map, np.arange(n)] = 1.0
        return p

    def ungroup(self) -> "Regrouping":
        """Inverse relabeling back onto the source structure; it carries no groups."""
        return Regrouping(self.structure, self.source, (), _read_only(self.inverse_map))

    def apply_vector(self, vector: np.ndarray) -> np.ndarray:
        out = np.empty_like(vector)
        out[self.index_map] = vector
        return out

    def restore_vector(self, vector: np.ndarray) -> np.ndarray:
        return np.asarray(vector)[self.index_map]

    def apply_operator(self, matrix: np.ndarray) -> np.ndarray:
        inv = self.inverse_map
        return np.asarray(matrix)[np.ix_(inv, inv)]

    def restore_operator(self, matrix: np.ndarray) -> np.ndarray:
        return np.asarray(matrix)[np.ix_(self.index_map, self.index_map)]

    def apply_state(self, psi: PureState) -> PureState:
        _check_state_dim(psi.dim, self.source)
        return PureState(self.apply_vector(psi.amplitudes))

    def apply_density(self, rho: DensityMatrix) -> DensityMatrix:
        _check_state_dim(rho.dim, self.source)
        return DensityMatrix(self.apply_operator(rho.matrix))

    def restore_density(self, rho: DensityMatrix) -> DensityMatrix:
        _check_state_dim(rho.dim, self.structure)
        return DensityMatrix(self.restore_operator(rho.matrix))


GroupSpec = Union[int, Sequence[int]]


def regroup_factors(structure: TensorStructure, grouping: Sequence[GroupSpec]) -> Regrouping:
    """Merge factors into ordered groups; each group's dim is the product of its members."""
    groups = tuple((g,) if isinstance(g, (int, np.integer)) else tuple(int(i) for i in g) for g in grouping)
    flat = [i for g in groups for i in g]
    if any(len(g) == 0 for g in groups) or sorted(flat) != list(range(structure.n_factors)):
        raise StructuralError(
            "not_a_partition",
            f"grouping {groups} is not a partition of factors 0..{structure.n_factors - 1}",
        )
    dims = structure.factor_dims
    merged = TensorStructure(tuple(math.prod(dims[i] for i in g) for g in groups))
    new_to_old = np.arange(structure.total_dim).reshape(dims).transpose(flat).ravel()
    index_map = np.empty_like(new_to_old)
    index_map[new_to_old] = np.arange(structure.total_dim)
    return Regrouping(structure, merged, groups, _read_only(index_map))


def split_factors(structure: TensorStructure, keep: FactorSubset) -> Regrouping:
    """Regroup into ``[keep, complement]`` (or just ``[keep]`` when nothing is left)."""
    keep.check_within(structure)
    if len(keep) == 0:
        raise StructuralError("empty_keep", "the kept factor subset must be nonempty")
    rest = structure.complement(keep)
    grouping = [keep.indices] if len(rest) == 0 else [keep.indices, rest.indices]
    return regroup_factors(structure, grouping)
