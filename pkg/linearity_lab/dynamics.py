"""
Candidate dynamical maps and componentwise ensemble evolution.

`DynamicalMap` is the abstract base every evolution law implements:

    class MyMap(DynamicalMap):
        kind = MapKind.CHANNEL
        def _act(self, matrix): ...
        def describe(self): ...

`apply_map` validates whatever a map returns, so a buggy or unphysical map
surfaces as `MapFaultError` instead of a silently corrupted state.
"""

from __future__ import annotations

import abc
import logging
import math
from collections.abc import Callable, Sequence
from functools import partial
from typing import Any, Optional

import numpy as np
import numpy.typing as npt

from linearity_lab.ensembles import Ensemble
from linearity_lab.errors import (
    InvalidInputError,
    MapFaultError,
    StructuralError,
    UnsupportedMapError,
)
from linearity_lab.models import (
    BlackboxSpec,
    ChannelPreset,
    ChannelSpec,
    MapKind,
    MapSpec,
    PurityPowerSpec,
    WeinbergSpec,
    decode_matrix,
    encode_matrix,
)
from linearity_lab.qstatics import (
    HERMITIAN_TOL,
    MIN_EIGENVALUE,
    PAULI_I,
    PAULI_X,
    PAULI_Y,
    PAULI_Z,
    SUPPORT_TOL,
    DensityMatrix,
    FactorSubset,
    PureState,
    TensorStructure,
    as_complex_matrix,
    haar_unitary,
    hermitian_deviation,
    hermitize,
    make_rng,
    random_hermitian,
    split_factors,
)
from linearity_lab.settings import get_settings

logger = logging.getLogger(__name__)

TRACE_PRESERVATION_TOL = 1e-10
MAP_FAULT_TOL = 1e-10
WEINBERG_NORM_TOL = 1e-9


# ── Map abstraction ─────────────────────────────────────────────────────────

class DynamicalMap(abc.ABC):
    """A candidate evolution ``g_t`` acting on density matrices of dimension `dim`."""

    kind: MapKind

    def __init__(self, dim: int, label: str):
        self._dim = int(dim)
        self._label = label

    @property
    def dim(self) -> int:
        return self._dim

    @property
    def label(self) -> str:
        return self._label

    @abc.abstractmethod
    def _act(self, matrix: np.ndarray) -> np.ndarray:
        """Raw action on a density-matrix array."""
        ...

    def _act_pure(self, psi: PureState) -> np.ndarray:
        """Raw action on a pure state; laws defined on vectors override this."""
        return self._act(psi.projector().matrix)

    @abc.abstractmethod
    def describe(self) -> dict[str, Any]:
        """Structural description (what an inspector is allowed to see)."""
        ...

    def at_resolution(self, steps_per_unit_time: int) -> "DynamicalMap":
        """Copy integrated with at most `steps_per_unit_time` steps per unit time.

        Maps without a time integrator return themselves.
        """
        return self

    def __repr__(self) -> str:
        return f"{type(self).__name__}(dim={self.dim}, label={self.label!r})"


class KrausChannel(DynamicalMap):
    """Linear trace-preserving map ``rho -> sum_k K_k rho K_k^dag``."""

    kind = MapKind.CHANNEL

    def __init__(self, operators: Sequence[npt.ArrayLike], label: str = "kraus"):
        ops = np.array([as_complex_matrix(k, name="Kraus operator") for k in operators])
        if ops.ndim != 3 or ops.shape[0] == 0 or ops.shape[1] != ops.shape[2]:
            raise StructuralError("bad_kraus_shape", "Kraus operators must be equal square matrices")
        deviation = float(np.max(np.abs(np.einsum("kba,kbc->ac", ops.conj(), ops) - np.eye(ops.shape[1]))))
        if deviation > TRACE_PRESERVATION_TOL:
            raise InvalidInputError(
                "not_trace_preserving", f"max|sum K^dag K - I| = {deviation:.3e}"
            )
        ops.setflags(write=False)
        self._operators = ops
        super().__init__(ops.shape[1], label)

    @property
    def operators(self) -> np.ndarray:
        return self._operators

    def _act(self, matrix: np.ndarray) -> np.ndarray:
        k = self._operators
        return np.einsum("kab,bc,kdc->ad", k, matrix, k.conj())

    def describe(self) -> dict[str, Any]:
        return {"kind": self.kind.value, "label": self.label, "kraus": self._operators}


class NonlinearMap(DynamicalMap):
    kind = MapKind.NONLINEAR
    family: str


class PurityPowerMap(NonlinearMap):
    """``sigma -> sigma^k / Tr sigma^k``; pure states are fixed points."""

    family = "purity_power"

    def __init__(self, k: int, dim: int):
        if int(k) < 2:
            raise InvalidInputError("bad_exponent", f"purity_power needs k >= 2, got {k}")
        self.k = int(k)
        super().__init__(dim, f"purity_power(k={self.k})")

    def _act(self, matrix: np.ndarray) -> np.ndarray:
        powered = np.linalg.matrix_power(matrix, self.k)
        return powered / np.trace(powered)

    def describe(self) -> dict[str, Any]:
        return {"kind": self.kind.value, "family": self.family, "k": self.k}


class WeinbergMap(NonlinearMap):
    """Pure-state law ``i dpsi/dt = (H + eps <psi|V|psi> V) psi`` integrated by fixed-step RK4.

    Mixed inputs evolve eigencomponent by eigencomponent.
    """

    family = "weinberg"

    def __init__(
        self,
        h: npt.ArrayLike,
        v: npt.ArrayLike,
        eps: float,
        t: float,
        steps: Optional[int] = None,
    ):
        h = as_complex_matrix(h, name="H")
        v = as_complex_matrix(v, name="V")
        if h.shape != v.shape or h.shape[0] != h.shape[1]:
            raise StructuralError("dimension_mismatch", f"H {h.shape} and V {v.shape} must match")
        for name, op in (("H", h), ("V", v)):
            dev = hermitian_deviation(op)
            if dev > HERMITIAN_TOL:
                raise InvalidInputError("not_hermitian", f"{name} hermiticity deviation {dev:.3e}")
        if steps is None:
            steps = max(1, math.ceil(get_settings().steps_per_unit_time * abs(t)))
        if int(steps) < 1:
            raise InvalidInputError("bad_steps", f"step count must be >= 1, got {steps}")
        self.h = hermitize(h)
        self.v = hermitize(v)
        self.h.setflags(write=False)
        self.v.setflags(write=False)
        self.eps = float(eps)
        self.t = float(t)
        self.steps = int(steps)
        # rows [0, d) give -iH psi, rows [d, 2d) give V psi
        self._generator = np.vstack([-1j * self.h, self.v])
        super().__init__(h.shape[0], f"weinberg(eps={self.eps:g}, t={self.t:g})")

    def at_resolution(self, steps_per_unit_time: int) -> "WeinbergMap":
        steps = max(1, math.ceil(steps_per_unit_time * abs(self.t)))
        if steps >= self.steps:
            return self
        return WeinbergMap(self.h, self.v, self.eps, self.t, steps)

    def _rhs(self, psi: np.ndarray) -> np.ndarray:
        stacked = self._generator @ psi
        d = self.dim
        v_psi = stacked[d:]
        expectation = np.real(np.sum(psi.conj() * v_psi, axis=0))
        return stacked[:d] - (1j * self.eps) * expectation * v_psi

    def integrate(self, columns: np.ndarray) -> np.ndarray:
        """Evolve each column of `columns` independently over the full duration."""
        psi = np.array(columns, dtype=np.complex128)
        dt = self.t / self.steps
        for _ in range(self.steps):
            k1 = self._rhs(psi)
            k2 = self._rhs(psi + 0.5 * dt * k1)
            k3 = self._rhs(psi + 0.5 * dt * k2)
            k4 = self._rhs(psi + dt * k3)
            psi = psi + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        return psi

    def _projectors(self, columns: np.ndarray, weights: np.ndarray) -> np.ndarray:
        evolved = self.integrate(columns)
        norms = np.sum(np.abs(evolved) ** 2, axis=0)
        return (evolved * (weights / norms)) @ evolved.conj().T

    def _act(self, matrix: np.ndarray) -> np.ndarray:
        values, vectors = np.linalg.eigh(hermitize(matrix))
        support = values > SUPPORT_TOL
        return self._projectors(vectors[:, support], values[support])

    def _act_pure(self, psi: PureState) -> np.ndarray:
        return self._projectors(psi.amplitudes[:, None], np.ones(1))

    def describe(self) -> dict[str, Any]:
        return {
            "kind": self.kind.value,
            "family": self.family,
            "H": self.h,
            "V": self.v,
            "eps": self.eps,
            "t": self.t,
            "steps": self.steps,
        }


class BlackBoxMap(DynamicalMap):
    """Opaque map: only the dimension and an application function are visible."""

    kind = MapKind.BLACKBOX

    def __init__(self, fn: Callable[[np.ndarray], np.ndarray], dim: int, label: str = "blackbox"):
        self._fn = fn
        super().__init__(dim, label)

    @property
    def structure(self) -> str:
        return "opaque"

    def _act(self, matrix: np.ndarray) -> np.ndarray:
        return self._fn(matrix)

    def describe(self) -> dict[str, Any]:
        return {"kind": self.kind.value, "label": self.label, "structure": self.structure}


# ── Application ─────────────────────────────────────────────────────────────

def _check_dim(map: DynamicalMap, dim: int) -> None:
    if map.dim != dim:
        raise StructuralError(
            "dimension_mismatch", f"map {map.label!r} acts on dim {map.dim}, state has dim {dim}"
        )


def _validated(map: DynamicalMap, output: np.ndarray) -> DensityMatrix:
    out = np.asarray(output, dtype=np.complex128)
    if out.shape != (map.dim, map.dim):
        raise MapFaultError("bad_output_shape", f"map {map.label!r} returned shape {out.shape}")
    if not np.all(np.isfinite(out)):
        raise MapFaultError("non_finite_output", f"map {map.label!r} returned NaN or Inf")
    dev = hermitian_deviation(out)
    if dev > MAP_FAULT_TOL:
        raise MapFaultError("not_hermitian", f"map {map.label!r} output hermiticity deviation {dev:.3e}")
    if dev > HERMITIAN_TOL:
        logger.warning("hermitizing output of %s (deviation %.3e)", map.label, dev)
    out = hermitize(out)
    trace = float(np.real(np.trace(out)))
    if abs(trace - 1.0) > MAP_FAULT_TOL:
        raise MapFaultError("bad_trace", f"map {map.label!r} output trace {trace:.15g}")
    out = out / trace
    min_eig = float(np.linalg.eigvalsh(out)[0])
    if min_eig < MIN_EIGENVALUE:
        raise MapFaultError("not_positive", f"map {map.label!r} output eigenvalue {min_eig:.3e}")
    return DensityMatrix(out)


def apply_map(map: DynamicalMap, rho: DensityMatrix) -> DensityMatrix:
    """``g(rho)`` for a density matrix, with output validation."""
    _check_dim(map, rho.dim)
    return _validated(map, map._act(rho.matrix))


def apply_pure(map: DynamicalMap, psi: PureState) -> DensityMatrix:
    """``g(|psi><psi|)``."""
    _check_dim(map, psi.dim)
    return _validated(map, map._act_pure(psi))


def weinberg_evolve(map: DynamicalMap, psi: PureState) -> PureState:
    """Integrate the Weinberg law on a pure state; renormalize only past 1e-9 norm drift."""
    if not isinstance(map, WeinbergMap):
        raise UnsupportedMapError("not_weinberg", f"map {map.label!r} is not a weinberg map")
    _check_dim(map, psi.dim)
    out = map.integrate(psi.amplitudes[:, None])[:, 0]
    drift = abs(float(np.linalg.norm(out)) - 1.0)
    if drift > WEINBERG_NORM_TOL:
        logger.warning("weinberg norm drift %.3e over %d steps; renormalizing", drift, map.steps)
        out = out / np.linalg.norm(out)
    return PureState(out, norm_tol=WEINBERG_NORM_TOL)


def evolve_ensemble(map: DynamicalMap, e: Ensemble) -> DensityMatrix:
    """Componentwise evolution ``sum_i p_i g(|psi_i><psi_i|)``."""
    _check_dim(map, e.dim)
    if isinstance(map, WeinbergMap):
        return _validated(map, map._projectors(e.state_matrix().T, e.weights))
    total = np.zeros((map.dim, map.dim), dtype=np.complex128)
    for p, psi in e:
        total += p * apply_pure(map, psi).matrix
    return _validated(map, total)


# ── Local embedding ─────────────────────────────────────────────────────────

def embed_local(map: DynamicalMap, structure: TensorStructure, acting_on: FactorSubset) -> KrausChannel:
    """``g_A (x) id`` on the full space; the complement marginal is untouched."""
    if not isinstance(map, KrausChannel):
        raise UnsupportedMapError(
            "not_embeddable",
            f"only Kraus channels can be embedded locally, got {map.kind.value} map {map.label!r}",
        )
    split = split_factors(structure, acting_on)
    d = structure.subset_dim(acting_on)
    if map.dim != d:
        raise StructuralError(
            "dimension_mismatch", f"map acts on dim {map.dim}, factors {acting_on.indices} span {d}"
        )
    p = split.permutation_matrix()
    rest = np.eye(structure.total_dim // d, dtype=np.complex128)
    ops = [p.T @ np.kron(k, rest) @ p for k in map.operators]
    return KrausChannel(ops, label=f"{map.label}@{list(acting_on.indices)}")


def _apply_hidden(secret: DynamicalMap, matrix: np.ndarray) -> np.ndarray:
    return apply_map(secret, DensityMatrix(matrix)).matrix


def make_blackbox(secret: DynamicalMap) -> BlackBoxMap:
    return BlackBoxMap(partial(_apply_hidden, secret), secret.dim)


# ── Factories ───────────────────────────────────────────────────────────────

def identity_channel(dim: int) -> KrausChannel:
    return KrausChannel([np.eye(dim)], label="identity")


def unitary_channel(u: npt.ArrayLike, label: str = "unitary") -> KrausChannel:
    u = as_complex_matrix(u, name="unitary")
    deviation = float(np.max(np.abs(u.conj().T @ u - np.eye(u.shape[0]))))
    if deviation > TRACE_PRESERVATION_TOL:
        raise InvalidInputError("not_unitary", f"max|U^dag U - I| = {deviation:.3e}")
    return KrausChannel([u], label=label)


def depolarizing_channel(p: float = 1.0) -> KrausChannel:
    """Qubit depolarizing channel; ``p = 1`` maps every state to I/2."""
    return KrausChannel(
        [
            math.sqrt(1.0 - 3.0 * p / 4.0) * PAULI_I,
            math.sqrt(p / 4.0) * PAULI_X,
            math.sqrt(p / 4.0) * PAULI_Y,
            math.sqrt(p / 4.0) * PAULI_Z,
        ],
        label=f"depolarizing(p={p:g})",
    )


def amplitude_damping_channel(gamma: float) -> KrausChannel:
    k0 = np.array([[1.0, 0.0], [0.0, math.sqrt(1.0 - gamma)]])
    k1 = np.array([[0.0, math.sqrt(gamma)], [0.0, 0.0]])
    return KrausChannel([k0, k1], label=f"amplitude_damping(gamma={gamma:g})")


def random_channel(dim: int, n_kraus: int, rng: np.random.Generator) -> KrausChannel:
    """Kraus blocks of a Haar-random Stinespring isometry."""
    isometry = haar_unitary(dim * n_kraus, rng)[:, :dim]
    return KrausChannel(
        [isometry[k * dim:(k + 1) * dim] for k in range(n_kraus)],
        label=f"random_channel(dim={dim}, n_kraus={n_kraus})",
    )


def random_unitary_channel(dim: int, rng: np.random.Generator) -> KrausChannel:
    return unitary_channel(haar_unitary(dim, rng), label=f"random_unitary(dim={dim})")


def transpose_map(dim: int) -> BlackBoxMap:
    """Transposition: linear and positive, but not completely positive."""
    return BlackBoxMap(np.transpose, dim, label="transpose")


def purity_power_map(k: int, dim: int) -> PurityPowerMap:
    return PurityPowerMap(k, dim)


def weinberg_map(
    h: npt.ArrayLike,
    v: npt.ArrayLike,
    eps: float,
    t: float,
    steps: Optional[int] = None,
) -> WeinbergMap:
    """Steps default to ``ceil(steps_per_unit_time * |t|)`` from settings."""
    return WeinbergMap(h, v, eps, t, steps)


# ── Spec codec ──────────────────────────────────────────────────────────────

def _channel_from_spec(spec: ChannelSpec, seed: int) -> KrausChannel:
    if spec.kraus is not None:
        return KrausChannel([decode_matrix(k) for k in spec.kraus], label=spec.label or "kraus")
    rng = make_rng(spec.seed if spec.seed is not None else seed)
    dim = spec.dim or 2
    if spec.preset == ChannelPreset.IDENTITY:
        return identity_channel(dim)
    if spec.preset in (ChannelPreset.DEPOLARIZING, ChannelPreset.AMPLITUDE_DAMPING) and dim != 2:
        raise InvalidInputError("qubit_only_preset", f"preset {spec.preset.value} is defined for dim 2")
    if spec.preset == ChannelPreset.DEPOLARIZING:
        return depolarizing_channel(spec.p)
    if spec.preset == ChannelPreset.AMPLITUDE_DAMPING:
        return amplitude_damping_channel(spec.gamma)
    if spec.preset == ChannelPreset.RANDOM_UNITARY:
        return random_unitary_channel(dim, rng)
    return random_channel(dim, spec.n_kraus, rng)


def map_from_spec(spec: MapSpec, *, seed: int = 0) -> DynamicalMap:
    """Build a map from its JSON spec; seeded presets fall back to `seed`."""
    if isinstance(spec, ChannelSpec):
        return _channel_from_spec(spec, seed)
    if isinstance(spec, WeinbergSpec):
        rng = make_rng(spec.seed if spec.seed is not None else seed)
        dim = spec.dim or len(spec.H or spec.V)
        h = decode_matrix(spec.H) if spec.H is not None else random_hermitian(dim, rng)
        v = decode_matrix(spec.V) if spec.V is not None else random_hermitian(dim, rng)
        return WeinbergMap(h, v, spec.eps, spec.t, spec.steps)
    if isinstance(spec, PurityPowerSpec):
        return PurityPowerMap(spec.k, spec.dim)
    if isinstance(spec, BlackboxSpec):
        return transpose_map(spec.dim)
    raise InvalidInputError("unknown_map_spec", f"unsupported map spec {type(spec).__name__}")


def map_to_spec(map: DynamicalMap) -> MapSpec:
    if isinstance(map, KrausChannel):
        return ChannelSpec(kraus=[encode_matrix(k) for k in map.operators], label=map.label)
    if isinstance(map, WeinbergMap):
        return WeinbergSpec(
            H=encode_matrix(map.h), V=encode_matrix(map.v), eps=map.eps, t=map.t, steps=map.steps
        )
    if isinstance(map, PurityPowerMap):
        return PurityPowerSpec(k=map.k, dim=map.dim)
    if isinstance(map, BlackBoxMap) and map.label == "transpose":
        return BlackboxSpec(dim=map.dim)
    raise UnsupportedMapError("opaque_map", f"map {map.label!r} has no serializable spec")
