"""
Linearity certification and signaling-witness search.

A linear map evolves every ensemble of a density matrix to the same state.
`certify_linearity` probes that identity on seeded random ensembles (and
compares componentwise evolution with direct application), `witness_search`
optimizes over the decomposition freedom to find the pair of equivalent
ensembles a nonlinear map separates the most, and the Choi helpers check
complete positivity of maps that pass.

Choi convention: ``C = sum_ij E_ij (x) g(E_ij)``, input factor first.
"""

from __future__ import annotations

import logging
import math
import multiprocessing
import pickle
from concurrent.futures import ProcessPoolExecutor, ThreadPoolExecutor
from dataclasses import dataclass
from functools import partial
from typing import Optional

import numpy as np
from scipy import linalg, optimize

from linearity_lab.dynamics import (
    DynamicalMap,
    KrausChannel,
    apply_map,
    evolve_ensemble,
)
from linearity_lab.ensembles import (
    Ensemble,
    eigen_ensemble,
    ensembles_equivalent,
    hjw_ensemble,
)
from linearity_lab.errors import (
    InvalidInputError,
    IsometryError,
    StructuralError,
    UnsupportedMapError,
)
from linearity_lab.models import (
    CptpReport,
    DensityMatrixPayload,
    LinearityCertificate,
    ProbeKind,
    Verdict,
    WitnessReport,
    WorstCase,
)
from linearity_lab.qstatics import (
    DensityMatrix,
    PureState,
    as_complex_matrix,
    density_from_computation,
    hermitian_deviation,
    hermitize,
    partial_trace_matrix,
    random_density_matrix,
    random_isometry,
    spectral_decomposition,
    task_rng,
    trace_distance,
)

logger = logging.getLogger(__name__)

DEFAULT_THRESHOLD = 1e-8
CHOI_TOL = 1e-10
SIMPLEX_XATOL = 1e-6
DEFAULT_SEARCH_RESOLUTION = 50
REPORT_TOL = 1e-12


# ── Certification ───────────────────────────────────────────────────────────

@dataclass(frozen=True, eq=False)
class _Comparison:
    probe: ProbeKind
    rho: DensityMatrix
    ensemble_a: Ensemble
    ensemble_b: Optional[Ensemble]
    evolved_a: DensityMatrix
    evolved_b: DensityMatrix
    deviation: float

    def to_worst_case(self) -> WorstCase:
        return WorstCase(
            probe=self.probe,
            rho=self.rho.to_payload(),
            ensemble_a=self.ensemble_a.to_payload(),
            ensemble_b=self.ensemble_b.to_payload() if self.ensemble_b is not None else None,
            evolved_a=self.evolved_a.to_payload(),
            evolved_b=self.evolved_b.to_payload(),
            deviation=self.deviation,
        )


def anchor_probes(dim: int) -> list[DensityMatrix]:
    """Fixed diagonal probe with weights proportional to 2k+1 (diag(1/4, 3/4) for a qubit)."""
    weights = (2.0 * np.arange(dim) + 1.0) / dim**2
    return [DensityMatrix.diagonal(weights)]


def _direct_probe(map: DynamicalMap, rho: DensityMatrix) -> _Comparison:
    spectral = eigen_ensemble(rho)
    componentwise = evolve_ensemble(map, spectral)
    direct = apply_map(map, rho)
    return _Comparison(
        ProbeKind.DIRECT, rho, spectral, None, componentwise, direct,
        trace_distance(componentwise, direct),
    )


def _decomposition_probe(
    map: DynamicalMap,
    rho: DensityMatrix,
    rng: np.random.Generator,
) -> _Comparison:
    r = spectral_decomposition(rho).rank
    ensembles = [
        hjw_ensemble(rho, random_isometry(int(rng.integers(r, 2 * r + 1)), r, rng))
        for _ in range(2)
    ]
    evolved = [evolve_ensemble(map, e) for e in ensembles]
    return _Comparison(
        ProbeKind.DECOMPOSITION, rho, ensembles[0], ensembles[1], evolved[0], evolved[1],
        trace_distance(evolved[0], evolved[1]),
    )


def certify_linearity(
    map: DynamicalMap,
    dim: int,
    trials: int = 100,
    threshold: float = DEFAULT_THRESHOLD,
    seed: int = 0,
) -> LinearityCertificate:
    """Probe decomposition independence; any deviation above `threshold` refutes linearity."""
    if map.dim != dim:
        raise StructuralError("dimension_mismatch", f"map acts on dim {map.dim}, asked for {dim}")
    if trials < 1:
        raise InvalidInputError("bad_trials", f"trials must be >= 1, got {trials}")
    if threshold <= 0:
        raise InvalidInputError("bad_threshold", f"threshold must be positive, got {threshold}")

    worst: Optional[_Comparison] = None
    comparisons = 0

    def consider(comparison: _Comparison) -> None:
        nonlocal worst, comparisons
        comparisons += 1
        if worst is None or comparison.deviation > worst.deviation:
            worst = comparison

    for rho in anchor_probes(dim):
        consider(_direct_probe(map, rho))
    for trial in range(trials):
        rng = task_rng(seed, trial)
        rho = random_density_matrix(dim, rng)
        consider(_decomposition_probe(map, rho, rng))
        consider(_direct_probe(map, rho))
        logger.debug("trial %d: running max deviation %.3e", trial, worst.deviation)

    assert worst is not None
    verdict = Verdict.NONLINEAR if worst.deviation > threshold else Verdict.LINEAR_CONSISTENT
    logger.info(
        "certified %s over %d comparisons: %s (max deviation %.3e)",
        map.label, comparisons, verdict.value, worst.deviation,
    )
    return LinearityCertificate(
        map_label=map.label,
        dim=dim,
        trials=trials,
        comparisons=comparisons,
        threshold=threshold,
        max_deviation=worst.deviation,
        verdict=verdict,
        worst_case=worst.to_worst_case() if verdict == Verdict.NONLINEAR else None,
        seed=seed,
    )


# ── Choi matrix ─────────────────────────────────────────────────────────────

@dataclass(frozen=True, eq=False)
class ChoiMatrix:
    dim: int
    matrix: np.ndarray

    def __post_init__(self) -> None:
        m = as_complex_matrix(self.matrix, name="Choi matrix")
        if m.shape != (self.dim**2, self.dim**2):
            raise StructuralError(
                "bad_choi_shape", f"Choi matrix of dim {self.dim} must be {self.dim**2} square"
            )
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    def blocks(self) -> np.ndarray:
        """``blocks()[i, :, j, :] == g(E_ij)``."""
        d = self.dim
        return self.matrix.reshape(d, d, d, d)


def _probe_state(vector: np.ndarray) -> DensityMatrix:
    return PureState.from_vector(vector).projector()


def reconstruct_choi(map: DynamicalMap, dim: int) -> ChoiMatrix:
    """Assemble the Choi matrix from physical probes only.

    Off-diagonal images come from linear recombination of the map on
    ``|i>, |j>, (|i>+|j>)/sqrt2, (|i>+i|j>)/sqrt2``; the result is
    meaningful only for maps that passed `certify_linearity`.
    """
    if map.dim != dim:
        raise StructuralError("dimension_mismatch", f"map acts on dim {map.dim}, asked for {dim}")
    eye = np.eye(dim, dtype=np.complex128)
    images = [apply_map(map, _probe_state(eye[i])).matrix for i in range(dim)]
    blocks = [[np.zeros((dim, dim), dtype=np.complex128) for _ in range(dim)] for _ in range(dim)]
    for i in range(dim):
        blocks[i][i] = images[i]
        for j in range(i + 1, dim):
            plus = apply_map(map, _probe_state(eye[i] + eye[j])).matrix
            plus_i = apply_map(map, _probe_state(eye[i] + 1j * eye[j])).matrix
            symmetric = 2.0 * plus - images[i] - images[j]
            antisymmetric = 2.0 * plus_i - images[i] - images[j]
            blocks[i][j] = (symmetric + 1j * antisymmetric) / 2.0
            blocks[j][i] = (symmetric - 1j * antisymmetric) / 2.0
    return ChoiMatrix(dim, np.block(blocks))


def check_cptp(choi: ChoiMatrix, tol: float = CHOI_TOL) -> CptpReport:
    dev = hermitian_deviation(choi.matrix)
    if dev > tol:
        raise InvalidInputError("not_hermitian", f"Choi hermiticity deviation {dev:.3e}")
    min_eig = float(np.linalg.eigvalsh(hermitize(choi.matrix))[0])
    reduced = partial_trace_matrix(choi.matrix, (choi.dim, choi.dim), [0])
    tp_deviation = float(np.max(np.abs(reduced - np.eye(choi.dim))))
    return CptpReport(
        cp=min_eig >= -tol,
        tp=tp_deviation <= tol,
        min_eigenvalue=min_eig,
        tp_deviation=tp_deviation,
        tol=tol,
    )


def apply_choi(choi: ChoiMatrix, rho: DensityMatrix) -> DensityMatrix:
    """``Tr_in[(rho^T (x) I) C]``."""
    if rho.dim != choi.dim:
        raise StructuralError("dimension_mismatch", f"Choi dim {choi.dim}, state dim {rho.dim}")
    return density_from_computation(np.einsum("ij,iajb->ab", rho.matrix, choi.blocks()))


def choi_to_kraus(choi: ChoiMatrix, tol: float = CHOI_TOL) -> KrausChannel:
    values, vectors = np.linalg.eigh(hermitize(choi.matrix))
    if values[0] < -tol:
        raise UnsupportedMapError(
            "not_completely_positive", f"Choi eigenvalue {values[0]:.3e} has no Kraus form"
        )
    d = choi.dim
    ops = [
        math.sqrt(lam) * vectors[:, k].reshape(d, d).T
        for k, lam in enumerate(values)
        if lam > tol
    ]
    return KrausChannel(ops, label="choi_kraus")


# ── Witness search ──────────────────────────────────────────────────────────

@dataclass(frozen=True)
class WitnessConfig:
    """Search controls.

    Restarts integrate nonlinear laws at `search_steps_per_unit_time` (None
    keeps the map's own resolution); the reported states are always evolved
    by the map as given.
    """

    restarts: int = 16
    max_iters: int = 200
    ensemble_size: Optional[int] = None
    seed: int = 0
    workers: int = 1
    search_steps_per_unit_time: Optional[int] = DEFAULT_SEARCH_RESOLUTION


@dataclass(frozen=True)
class _RestartResult:
    index: int
    theta: np.ndarray
    deviation: float
    iterations: int
    evaluations: int


@dataclass(frozen=True, eq=False)
class _RestartTask:
    map: DynamicalMap
    rho: DensityMatrix
    reference: DensityMatrix
    members: int
    rank: int
    seed: int
    max_iters: int

    def objective(self, theta: np.ndarray) -> float:
        candidate = hjw_ensemble(self.rho, _isometry(theta, self.members, self.rank))
        return trace_distance(evolve_ensemble(self.map, candidate), self.reference)


def _isometry(theta: np.ndarray, m: int, r: int) -> np.ndarray:
    """First `r` columns of ``exp(iH(theta))`` with H Hermitian from ``m**2`` reals."""
    upper = np.zeros((m, m), dtype=np.complex128)
    iu = np.triu_indices(m, 1)
    n_off = len(iu[0])
    upper[iu] = theta[m:m + n_off] + 1j * theta[m + n_off:]
    h = np.diag(theta[:m]).astype(np.complex128) + upper + upper.conj().T
    return linalg.expm(1j * h)[:, :r]


def _run_restart(task: _RestartTask, index: int) -> _RestartResult:
    rng = task_rng(task.seed, index)
    start = rng.uniform(-math.pi, math.pi, task.members * task.members)
    result = optimize.minimize(
        lambda theta: -task.objective(theta),
        start,
        method="Nelder-Mead",
        options={"maxiter": task.max_iters, "xatol": SIMPLEX_XATOL, "fatol": math.inf},
    )
    logger.debug("restart %d: deviation %.6e after %d iterations", index, -result.fun, result.nit)
    return _RestartResult(index, result.x, float(-result.fun), int(result.nit), int(result.nfev))


def _picklable(task: _RestartTask) -> bool:
    try:
        pickle.dumps(task)
    except (pickle.PicklingError, AttributeError, TypeError):
        return False
    return True


def _run_restarts(task: _RestartTask, restarts: int, workers: int) -> list[_RestartResult]:
    """Restarts in index order; worker processes when the task can be shipped, else threads."""
    run = partial(_run_restart, task)
    indices = range(restarts)
    if workers <= 1 or restarts == 1:
        return [run(i) for i in indices]
    if not _picklable(task):
        logger.info("map %s cannot be sent to worker processes; using threads", task.map.label)
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(run, indices))
    context = multiprocessing.get_context("spawn")
    with ProcessPoolExecutor(max_workers=min(workers, restarts), mp_context=context) as pool:
        return list(pool.map(run, indices))


def witness_search(map: DynamicalMap, rho: DensityMatrix, config: WitnessConfig) -> WitnessReport:
    """Maximize ``T(g[hjw(rho, V)], g[eigen(rho)])`` over isometries V.

    Each restart runs Nelder-Mead from its own seeded stream, so the result
    does not depend on `config.workers`.
    """
    if map.dim != rho.dim:
        raise StructuralError("dimension_mismatch", f"map acts on dim {map.dim}, rho has {rho.dim}")
    if config.restarts < 1:
        raise InvalidInputError("bad_restarts", f"restarts must be >= 1, got {config.restarts}")
    if config.search_steps_per_unit_time is not None and config.search_steps_per_unit_time < 1:
        raise InvalidInputError(
            "bad_resolution",
            f"search_steps_per_unit_time must be >= 1, got {config.search_steps_per_unit_time}",
        )
    r = spectral_decomposition(rho).rank
    m = config.ensemble_size or rho.dim
    if m < r:
        raise IsometryError("too_few_members", f"ensemble size {m} below rank(rho) = {r}")

    search_map = (
        map
        if config.search_steps_per_unit_time is None
        else map.at_resolution(config.search_steps_per_unit_time)
    )
    reference_ensemble = eigen_ensemble(rho)
    task = _RestartTask(
        map=search_map,
        rho=rho,
        reference=evolve_ensemble(search_map, reference_ensemble),
        members=m,
        rank=r,
        seed=config.seed,
        max_iters=config.max_iters,
    )
    results = _run_restarts(task, config.restarts, config.workers)

    best = results[0]
    for candidate in results[1:]:
        if candidate.deviation > best.deviation:
            best = candidate

    ensemble_a = hjw_ensemble(rho, _isometry(best.theta, m, r))
    evolved_a = evolve_ensemble(map, ensemble_a)
    reference = evolve_ensemble(map, reference_ensemble)
    deviation = trace_distance(evolved_a, reference)
    logger.info(
        "witness search on %s: deviation %.6e (restart %d of %d)",
        map.label, deviation, best.index, config.restarts,
    )
    return WitnessReport(
        map_label=map.label,
        deviation=deviation,
        rho=rho.to_payload(),
        ensemble_a=ensemble_a.to_payload(),
        ensemble_b=reference_ensemble.to_payload(),
        evolved_a=evolved_a.to_payload(),
        evolved_b=reference.to_payload(),
        ensemble_size=m,
        iterations=sum(res.iterations for res in results),
        evaluations=sum(res.evaluations for res in results),
        restarts=config.restarts,
        best_restart=best.index,
        seed=config.seed,
    )


def verify_witness_report(
    report: WitnessReport,
    map: Optional[DynamicalMap] = None,
    tol: float = 1e-9,
) -> float:
    """Recompute a report's deviation from its stored data alone.

    With `map`, the stored ensembles are evolved again and must reproduce the
    stored evolved states within `tol`.
    """
    ensemble_a = Ensemble.from_payload(report.ensemble_a)
    ensemble_b = Ensemble.from_payload(report.ensemble_b)
    if not ensembles_equivalent(ensemble_a, ensemble_b, tol=1e-10):
        raise InvalidInputError("not_equivalent", "witness ensembles have different mixtures")
    deviation = _stored_distance(report.evolved_a, report.evolved_b)
    if abs(deviation - report.deviation) > REPORT_TOL:
        raise InvalidInputError(
            "deviation_mismatch",
            f"stored deviation {report.deviation!r} but evolved states give {deviation!r}",
        )
    if map is not None:
        for ensemble, stored in ((ensemble_a, report.evolved_a), (ensemble_b, report.evolved_b)):
            drift = trace_distance(evolve_ensemble(map, ensemble), stored.to_array())
            if drift > tol:
                raise InvalidInputError(
                    "evolution_mismatch", f"re-evolved ensemble differs by {drift:.3e}"
                )
    return deviation


def _stored_distance(a: DensityMatrixPayload, b: DensityMatrixPayload) -> float:
    return trace_distance(a.to_array(), b.to_array())
