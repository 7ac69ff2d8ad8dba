import copy

import numpy as np
import pytest

from linearity_lab.cli.scenarios import (
    initial_pair_state,
    relabel_map,
    resolve_basis,
    run_particle3d,
    run_projection_demo,
    run_scenario,
    verify_run_report,
)
from linearity_lab.dynamics import apply_map, random_channel, transpose_map
from linearity_lab.errors import InvalidInputError, StructuralError
from linearity_lab.models import BasisChoice, InitialState, RunReport, Scenario, ScenarioConfig
from linearity_lab.qstatics import (
    TensorStructure,
    make_rng,
    random_density_matrix,
    regroup_factors,
    trace_distance,
)


def _particle(**overrides) -> ScenarioConfig:
    return ScenarioConfig(scenario=Scenario.PARTICLE3D, factor_dim=2, **overrides)


def _projection(**overrides) -> ScenarioConfig:
    return ScenarioConfig(scenario=Scenario.PROJECTION, factor_dim=3, **overrides)


# ── particle3d ──────────────────────────────────────────────────────────────

@pytest.mark.parametrize("seed", range(20))
def test_particle3d_with_linear_maps_is_consistent_for_many_seeds(seed):
    unitary = run_particle3d(_particle(seed=seed, tolerance=1e-8))
    assert unitary.verdicts == {"linear_consistent": True, "isomorphism_invariant": True}
    assert unitary.inputs["map_label"].startswith("random_unitary")
    assert unitary.inputs["factor_dims"] == [2, 2, 2]
    channel = {"kind": "channel", "preset": "random", "dim": 4, "n_kraus": 1 + seed % 4, "seed": seed}
    noisy = run_particle3d(_particle(map=channel, seed=seed, tolerance=1e-8))
    assert noisy.verdicts == {"linear_consistent": True, "isomorphism_invariant": True}


@pytest.mark.parametrize("seed", [0, 1, 7])
def test_particle3d_with_three_levels_per_component(seed):
    report = run_particle3d(ScenarioConfig(scenario=Scenario.PARTICLE3D, factor_dim=3, seed=seed))
    assert report.verdicts["linear_consistent"]
    assert report.inputs["factor_dims"] == [3, 3, 3]


def test_particle3d_with_a_noisy_channel_and_fourier_basis():
    spec = {"kind": "channel", "preset": "random", "dim": 4, "n_kraus": 3, "seed": 5}
    report = run_particle3d(_particle(map=spec, measurement_basis=BasisChoice.FOURIER, seed=2))
    assert report.verdicts["linear_consistent"]
    assert all(v < 1e-10 for v in report.deviations.values())


def test_particle3d_purity_power_breaks_direct_evolution_only():
    report = run_particle3d(_particle(map={"kind": "nonlinear", "family": "purity_power", "dim": 4}))
    assert report.deviations["steering_marginal"] < 1e-12
    assert report.deviations["componentwise_vs_direct"] > 1e-8
    assert report.deviations["decomposition_vs_decomposition"] < 1e-8
    assert not report.verdicts["linear_consistent"]
    assert report.verdicts["isomorphism_invariant"]


def test_particle3d_weinberg_separates_remote_decompositions():
    spec = {"kind": "nonlinear", "family": "weinberg", "dim": 4, "eps": 1.0, "t": 1.0, "seed": 11}
    report = run_particle3d(_particle(map=spec, seed=3))
    assert report.deviations["decomposition_vs_decomposition"] > 1e-6
    assert not report.verdicts["linear_consistent"]
    assert report.verdicts["isomorphism_invariant"]


def test_particle3d_is_deterministic():
    first = run_particle3d(_particle(seed=4))
    second = run_particle3d(_particle(seed=4))
    assert first.artifact_digest == second.artifact_digest
    assert first.deviations == second.deviations


def test_particle3d_rejects_map_of_wrong_dimension():
    with pytest.raises(StructuralError) as excinfo:
        run_particle3d(_particle(map={"kind": "channel", "preset": "identity", "dim": 2}))
    assert excinfo.value.detail.param == "map"


def test_runners_reject_the_other_scenario():
    with pytest.raises(InvalidInputError):
        run_particle3d(_projection())
    with pytest.raises(InvalidInputError):
        run_projection_demo(_particle())


# ── projection ──────────────────────────────────────────────────────────────

@pytest.mark.parametrize("state", list(InitialState))
def test_projection_demo_holds_for_every_input(state):
    report = run_projection_demo(_projection(state=state, measurement_basis=BasisChoice.RANDOM))
    assert all(report.verdicts.values())
    assert report.deviations["averaged_marginal"] < 1e-12
    assert report.deviations["reverse_averaged_marginal"] < 1e-12


def test_bell_pair_has_uniform_outcomes():
    report = run_projection_demo(_projection(state=InitialState.BELL))
    outcomes = report.artifacts["outcomes"]
    assert len(outcomes) == 3
    assert all(o["p"] == pytest.approx(1 / 3, abs=1e-12) for o in outcomes)
    assert report.inputs["outcomes"] == 3


def test_product_pair_gives_a_single_outcome():
    report = run_projection_demo(_projection(state=InitialState.PRODUCT))
    assert [o["index"] for o in report.artifacts["outcomes"]] == [0]
    assert report.artifacts["outcomes"][0]["p"] == pytest.approx(1.0, abs=1e-12)


def test_projection_accepts_an_explicit_basis():
    basis = [[[0.0, 0.0], [1.0, 0.0]], [[1.0, 0.0], [0.0, 0.0]]]
    report = run_projection_demo(
        ScenarioConfig(scenario=Scenario.PROJECTION, factor_dim=2, measurement_basis=basis)
    )
    assert all(report.verdicts.values())


def test_initial_pair_states():
    rng = make_rng(0)
    bell = initial_pair_state(InitialState.BELL, 2, rng)
    np.testing.assert_allclose(bell.amplitudes, np.array([1, 0, 0, 1]) / np.sqrt(2))
    product = initial_pair_state(InitialState.PRODUCT, 2, rng)
    assert abs(product.amplitudes[1]) < 1e-15 and abs(product.amplitudes[3]) < 1e-15


# ── Bases and relabeling ────────────────────────────────────────────────────

def test_resolve_basis_named_choices():
    rng = make_rng(1)
    assert np.array_equal(resolve_basis(None, 3, rng).vectors, np.eye(3))
    fourier = resolve_basis(BasisChoice.FOURIER, 4, rng)
    assert np.max(np.abs(np.abs(fourier.vectors) - 0.5)) < 1e-12
    assert len(resolve_basis(BasisChoice.RANDOM, 3, rng)) == 3


def test_resolve_basis_rejects_wrong_explicit_basis():
    with pytest.raises(StructuralError):
        resolve_basis([[[1.0, 0.0], [0.0, 0.0]]], 2, make_rng(0))
    with pytest.raises(StructuralError):
        resolve_basis([[[1.0, 0.0], [0.0, 0.0]], [[0.0, 0.0], [1.0, 0.0]]], 3, make_rng(0))


def test_relabeled_map_commutes_with_relabeling():
    rng = make_rng(9)
    swap = regroup_factors(TensorStructure((2, 3)), [(1,), (0,)])
    for law in (random_channel(6, 2, rng), transpose_map(6)):
        relabeled = relabel_map(law, swap)
        rho = random_density_matrix(6, rng)
        expected = swap.apply_density(apply_map(law, rho))
        assert trace_distance(apply_map(relabeled, swap.apply_density(rho)), expected) < 1e-12


# ── Report verification ─────────────────────────────────────────────────────

@pytest.mark.parametrize(
    "config",
    [_particle(seed=5), _projection(state=InitialState.RANDOM, seed=2)],
    ids=["particle3d", "projection"],
)
def test_reports_verify_after_json_round_trip(config):
    report = run_scenario(config)
    restored = RunReport.model_validate_json(report.model_dump_json())
    recomputed = verify_run_report(restored)
    for name, value in recomputed.items():
        assert abs(report.deviations[name] - value) <= 1e-12


def test_tampered_artifacts_fail_the_digest():
    report = run_projection_demo(_projection(state=InitialState.BELL))
    data = copy.deepcopy(report.model_dump(mode="json"))
    data["artifacts"]["outcomes"][0]["p"] = 0.5
    with pytest.raises(InvalidInputError) as excinfo:
        verify_run_report(RunReport.model_validate(data))
    assert excinfo.value.detail.code == "digest_mismatch"


def test_tampered_deviation_is_detected():
    report = run_particle3d(_particle(seed=6))
    data = report.model_dump(mode="json")
    data["deviations"]["componentwise_vs_direct"] = 0.25
    with pytest.raises(InvalidInputError) as excinfo:
        verify_run_report(RunReport.model_validate(data))
    assert excinfo.value.detail.param == "componentwise_vs_direct"
