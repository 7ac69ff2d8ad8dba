"""
Scenario runners.

particle3d
    A particle with three momentum components, discretized to ``d`` levels
    each. Measuring the x component remotely prepares an ensemble of the
    (y, z) factors; the configured map then acts on (y, z) only. A linear
    map evolves every such ensemble, and the marginal itself, identically.

projection
    An entangled pair is disentangled by a maximal measurement on B. Each
    outcome is a product state and the outcome-averaged A marginal is the
    pre-measurement one.

Every report stores the states it compared, so `verify_run_report` can
recompute each deviation without running the simulation again.
"""

from __future__ import annotations

import logging
import math
import time
from typing import Any, Optional, Union

import numpy as np

from linearity_lab.dynamics import (
    BlackBoxMap,
    DynamicalMap,
    KrausChannel,
    WeinbergMap,
    apply_map,
    evolve_ensemble,
    map_from_spec,
    random_unitary_channel,
)
from linearity_lab.ensembles import (
    Ensemble,
    OutcomeRecord,
    SteeringBasis,
    average_outcomes,
    collapse_measurement,
    mixture_density,
    product_deviation,
    steer,
)
from linearity_lab.errors import InvalidInputError, StructuralError
from linearity_lab.models import (
    BasisChoice,
    DensityMatrixPayload,
    EnsemblePayload,
    InitialState,
    RunReport,
    Scenario,
    ScenarioConfig,
    StatePayload,
    VectorJSON,
    canonical_digest,
)
from linearity_lab.qstatics import (
    DensityMatrix,
    FactorSubset,
    PureState,
    Regrouping,
    TensorStructure,
    density_from_computation,
    fourier_matrix,
    haar_state,
    haar_unitary,
    partial_trace,
    regroup_factors,
    split_factors,
    task_rng,
    tensor_product,
    tensor_states,
    trace_distance,
)

logger = logging.getLogger(__name__)

REPORT_TOL = 1e-12

# Independent PRNG streams per scenario ingredient.
STATE_STREAM = 0
BASIS_STREAM = 1
SECOND_BASIS_STREAM = 2
MAP_STREAM = 3

BasisConfig = Union[BasisChoice, list[VectorJSON], None]


def resolve_basis(
    choice: BasisConfig,
    dim: int,
    rng: np.random.Generator,
    default: BasisChoice = BasisChoice.COMPUTATIONAL,
) -> SteeringBasis:
    """Turn a configured basis (named or explicit) into a complete basis of `dim`."""
    choice = default if choice is None else choice
    if choice == BasisChoice.COMPUTATIONAL:
        return SteeringBasis.computational(dim)
    if choice == BasisChoice.FOURIER:
        return SteeringBasis.from_columns(fourier_matrix(dim))
    if choice == BasisChoice.RANDOM:
        return SteeringBasis.from_columns(haar_unitary(dim, rng))
    basis = SteeringBasis.from_payload(choice)
    if basis.dim != dim or len(basis) != dim:
        raise StructuralError(
            "basis_dimension_mismatch",
            f"explicit basis has {len(basis)} vectors of dim {basis.dim}; the measured factor needs {dim}",
            param="measurement_basis",
        )
    return basis


def relabel_map(map: DynamicalMap, regrouping: Regrouping) -> DynamicalMap:
    """Conjugate `map` by the relabeling permutation so it acts on relabeled states."""
    if isinstance(map, KrausChannel):
        return KrausChannel(
            [regrouping.apply_operator(k) for k in map.operators], label=f"{map.label}~relabeled"
        )
    if isinstance(map, WeinbergMap):
        return WeinbergMap(
            regrouping.apply_operator(map.h),
            regrouping.apply_operator(map.v),
            map.eps,
            map.t,
            map.steps,
        )

    def act(matrix: np.ndarray) -> np.ndarray:
        original = DensityMatrix(regrouping.restore_operator(matrix))
        return regrouping.apply_operator(apply_map(map, original).matrix)

    return BlackBoxMap(act, map.dim, label=f"{map.label}~relabeled")


def _scenario_map(config: ScenarioConfig, dim: int) -> DynamicalMap:
    if config.map is None:
        return random_unitary_channel(dim, task_rng(config.seed, MAP_STREAM))
    map = map_from_spec(config.map, seed=config.seed)
    if map.dim != dim:
        raise StructuralError(
            "dimension_mismatch",
            f"map {map.label!r} acts on dim {map.dim}; the scenario needs {dim}",
            param="map",
        )
    return map


def _inputs(config: ScenarioConfig, **extra: Any) -> dict[str, Any]:
    return {**config.model_dump(mode="json"), **extra}


def _dump(payload: Any) -> Any:
    if isinstance(payload, list):
        return payload
    return payload.model_dump(mode="json")


def _finish(
    scenario: Scenario,
    inputs: dict[str, Any],
    deviations: dict[str, float],
    verdicts: dict[str, bool],
    artifacts: dict[str, Any],
    started: float,
) -> RunReport:
    wall_time = time.perf_counter() - started
    logger.info(
        "%s finished in %.3fs: %s",
        scenario.value,
        wall_time,
        ", ".join(f"{k}={v}" for k, v in verdicts.items()),
    )
    return RunReport(
        scenario=scenario,
        inputs=inputs,
        deviations=deviations,
        verdicts=verdicts,
        artifacts=artifacts,
        artifact_digest=canonical_digest(artifacts),
        wall_time=wall_time,
    )


# ── Three-component particle ────────────────────────────────────────────────

def run_particle3d(config: ScenarioConfig) -> RunReport:
    """Remote preparation on the (y, z) factors by measuring x, then evolution of (y, z)."""
    if config.scenario != Scenario.PARTICLE3D:
        raise InvalidInputError("wrong_scenario", f"expected particle3d, got {config.scenario.value}")
    started = time.perf_counter()
    d = config.factor_dim
    structure = TensorStructure((d, d, d))
    yz = FactorSubset.of((1, 2), structure)
    map = _scenario_map(config, d * d)

    psi = haar_state(structure.total_dim, task_rng(config.seed, STATE_STREAM))
    rho_yz = partial_trace(psi, structure, yz)
    basis = resolve_basis(
        config.measurement_basis, d, task_rng(config.seed, BASIS_STREAM), default=BasisChoice.RANDOM
    )
    second_basis = SteeringBasis.from_columns(haar_unitary(d, task_rng(config.seed, SECOND_BASIS_STREAM)))

    ensemble = steer(psi, basis, structure, keep=yz)
    second_ensemble = steer(psi, second_basis, structure, keep=yz)
    evolved = evolve_ensemble(map, ensemble)
    evolved_direct = apply_map(map, rho_yz)
    evolved_second = evolve_ensemble(map, second_ensemble)

    swap = regroup_factors(TensorStructure((d, d)), [(1,), (0,)])
    relabeled = relabel_map(map, swap)
    relabeled_ensemble = Ensemble(ensemble.weights, tuple(swap.apply_state(s) for s in ensemble.states))
    relabeled_evolved = evolve_ensemble(relabeled, relabeled_ensemble)
    relabeled_direct = apply_map(relabeled, swap.apply_density(rho_yz))

    deviations = {
        "steering_marginal": trace_distance(mixture_density(ensemble), rho_yz),
        "componentwise_vs_direct": trace_distance(evolved, evolved_direct),
        "decomposition_vs_decomposition": trace_distance(evolved, evolved_second),
        "relabeled_componentwise_vs_direct": trace_distance(relabeled_evolved, relabeled_direct),
    }
    tol = config.tolerance
    verdicts = {
        "linear_consistent": all(
            deviations[k] < tol
            for k in ("steering_marginal", "componentwise_vs_direct", "decomposition_vs_decomposition")
        ),
        "isomorphism_invariant": abs(
            deviations["relabeled_componentwise_vs_direct"] - deviations["componentwise_vs_direct"]
        ) < tol,
    }
    artifacts = {
        "structure": _dump(structure.to_payload()),
        "state": _dump(psi.to_payload()),
        "rho_yz": _dump(rho_yz.to_payload()),
        "basis": _dump(basis.to_payload()),
        "second_basis": _dump(second_basis.to_payload()),
        "ensemble": _dump(ensemble.to_payload()),
        "second_ensemble": _dump(second_ensemble.to_payload()),
        "evolved_componentwise": _dump(evolved.to_payload()),
        "evolved_direct": _dump(evolved_direct.to_payload()),
        "evolved_second": _dump(evolved_second.to_payload()),
        "relabeled_evolved_componentwise": _dump(relabeled_evolved.to_payload()),
        "relabeled_evolved_direct": _dump(relabeled_direct.to_payload()),
    }
    return _finish(
        Scenario.PARTICLE3D,
        _inputs(config, map_label=map.label, factor_dims=[d, d, d]),
        deviations,
        verdicts,
        artifacts,
        started,
    )


# ── Projection at a distance ────────────────────────────────────────────────

def initial_pair_state(state: InitialState, d: int, rng: np.random.Generator) -> PureState:
    """Input of the projection demo; the product input puts B in ``|0>``."""
    if state == InitialState.BELL:
        return PureState.from_vector(np.eye(d, dtype=np.complex128).ravel())
    if state == InitialState.PRODUCT:
        return tensor_states(haar_state(d, rng), PureState.basis(d, 0))
    return haar_state(d * d, rng)


def outcome_product_deviation(
    kept: DensityMatrix,
    complement: PureState,
    structure: TensorStructure,
    keep: FactorSubset,
) -> float:
    """Distance of the post-measurement joint state from the product of its marginals."""
    split = split_factors(structure, keep)
    joint = density_from_computation(
        split.restore_operator(tensor_product(kept.matrix, complement.projector().matrix))
    )
    return product_deviation(joint, structure, keep)


def _outcome_artifact(record: OutcomeRecord) -> dict[str, Any]:
    return {
        "index": record.outcome_index,
        "p": record.probability,
        "kept": _dump(record.post_state_kept.to_payload()),
        "complement": _dump(record.post_state_complement.to_payload()),
    }


def _measure_side(
    psi: PureState,
    structure: TensorStructure,
    keep: FactorSubset,
    basis: SteeringBasis,
) -> tuple[list[OutcomeRecord], DensityMatrix, DensityMatrix]:
    records = collapse_measurement(psi, basis, structure, keep=keep)
    before = partial_trace(psi, structure, keep)
    after = partial_trace(average_outcomes(records), structure, keep)
    return records, before, after


def run_projection_demo(config: ScenarioConfig) -> RunReport:
    """Disentangle a pair by measuring B, and separately by measuring A."""
    if config.scenario != Scenario.PROJECTION:
        raise InvalidInputError("wrong_scenario", f"expected projection, got {config.scenario.value}")
    started = time.perf_counter()
    d = config.factor_dim
    structure = TensorStructure((d, d))
    a_side, b_side = FactorSubset((0,)), FactorSubset((1,))

    psi = initial_pair_state(config.state, d, task_rng(config.seed, STATE_STREAM))
    basis_b = resolve_basis(config.measurement_basis, d, task_rng(config.seed, BASIS_STREAM))
    basis_a = resolve_basis(config.measurement_basis, d, task_rng(config.seed, SECOND_BASIS_STREAM))

    records, rho_a_in, rho_a_avg = _measure_side(psi, structure, a_side, basis_b)
    reverse, rho_b_in, rho_b_avg = _measure_side(psi, structure, b_side, basis_a)

    deviations: dict[str, float] = {
        "averaged_marginal": trace_distance(rho_a_avg, rho_a_in),
        "reverse_averaged_marginal": trace_distance(rho_b_avg, rho_b_in),
    }
    for r in records:
        deviations[f"product_outcome_{r.outcome_index}"] = outcome_product_deviation(
            r.post_state_kept, r.post_state_complement, structure, a_side
        )
    tol = config.tolerance
    verdicts = {
        "outcomes_product": all(
            v < tol for k, v in deviations.items() if k.startswith("product_outcome_")
        ),
        "marginal_invariant": deviations["averaged_marginal"] < tol,
        "reverse_marginal_invariant": deviations["reverse_averaged_marginal"] < tol,
    }
    artifacts = {
        "structure": _dump(structure.to_payload()),
        "state": _dump(psi.to_payload()),
        "basis_b": _dump(basis_b.to_payload()),
        "basis_a": _dump(basis_a.to_payload()),
        "outcomes": [_outcome_artifact(r) for r in records],
        "rho_a_in": _dump(rho_a_in.to_payload()),
        "rho_a_averaged": _dump(rho_a_avg.to_payload()),
        "reverse_outcomes": [_outcome_artifact(r) for r in reverse],
        "rho_b_in": _dump(rho_b_in.to_payload()),
        "rho_b_averaged": _dump(rho_b_avg.to_payload()),
    }
    logger.debug("projection demo: %d outcomes on B, %d on A", len(records), len(reverse))
    return _finish(
        Scenario.PROJECTION,
        _inputs(config, factor_dims=[d, d], outcomes=len(records)),
        deviations,
        verdicts,
        artifacts,
        started,
    )


def run_scenario(config: ScenarioConfig) -> RunReport:
    if config.scenario == Scenario.PARTICLE3D:
        return run_particle3d(config)
    return run_projection_demo(config)


# ── Report verification ─────────────────────────────────────────────────────

def _density(artifact: Any) -> DensityMatrix:
    return DensityMatrix(DensityMatrixPayload.model_validate(artifact).to_array())


def _stored_distance(artifacts: dict[str, Any], a: str, b: str) -> float:
    return trace_distance(
        DensityMatrixPayload.model_validate(artifacts[a]).to_array(),
        DensityMatrixPayload.model_validate(artifacts[b]).to_array(),
    )


def _recompute_particle3d(artifacts: dict[str, Any]) -> dict[str, float]:
    ensemble = Ensemble.from_payload(EnsemblePayload.model_validate(artifacts["ensemble"]))
    return {
        "steering_marginal": trace_distance(mixture_density(ensemble), _density(artifacts["rho_yz"])),
        "componentwise_vs_direct": _stored_distance(
            artifacts, "evolved_componentwise", "evolved_direct"
        ),
        "decomposition_vs_decomposition": _stored_distance(
            artifacts, "evolved_componentwise", "evolved_second"
        ),
        "relabeled_componentwise_vs_direct": _stored_distance(
            artifacts, "relabeled_evolved_componentwise", "relabeled_evolved_direct"
        ),
    }


def _recompute_projection(artifacts: dict[str, Any]) -> dict[str, float]:
    structure = TensorStructure(tuple(artifacts["structure"]["factor_dims"]))
    recomputed = {
        "averaged_marginal": _stored_distance(artifacts, "rho_a_averaged", "rho_a_in"),
        "reverse_averaged_marginal": _stored_distance(artifacts, "rho_b_averaged", "rho_b_in"),
    }
    for outcome in artifacts["outcomes"]:
        complement = PureState.from_payload(StatePayload.model_validate(outcome["complement"]))
        recomputed[f"product_outcome_{outcome['index']}"] = outcome_product_deviation(
            _density(outcome["kept"]), complement, structure, FactorSubset((0,))
        )
    return recomputed


def verify_run_report(report: RunReport, tol: float = REPORT_TOL) -> dict[str, float]:
    """Recompute every deviation from the report's own artifacts.

    Raises `InvalidInputError` when the digest or any deviation disagrees.
    """
    digest = canonical_digest(report.artifacts)
    if digest != report.artifact_digest:
        raise InvalidInputError("digest_mismatch", "artifacts do not match artifact_digest")
    if report.scenario == Scenario.PARTICLE3D:
        recomputed = _recompute_particle3d(report.artifacts)
    else:
        recomputed = _recompute_projection(report.artifacts)
    for name, value in recomputed.items():
        stored: Optional[float] = report.deviations.get(name)
        if stored is None or math.isnan(stored) or abs(stored - value) > tol:
            raise InvalidInputError(
                "deviation_mismatch",
                f"deviation {name!r}: stored {stored!r}, recomputed {value!r}",
                param=name,
            )
    return recomputed
