import numpy as np
import pytest
from numpy.testing import assert_allclose

from linearity_lab.dynamics import (
    BlackBoxMap,
    PurityPowerMap,
    WeinbergMap,
    amplitude_damping_channel,
    apply_map,
    depolarizing_channel,
    evolve_ensemble,
    identity_channel,
    make_blackbox,
    random_channel,
    transpose_map,
)
from linearity_lab.ensembles import Ensemble
from linearity_lab.errors import InvalidInputError, StructuralError, UnsupportedMapError
from linearity_lab.models import ProbeKind, Verdict, WitnessReport
from linearity_lab.qstatics import (
    PAULI_X,
    PAULI_Z,
    DensityMatrix,
    PureState,
    make_rng,
    random_density_matrix,
    task_rng,
    trace_distance,
)
from linearity_lab.witness import (
    ChoiMatrix,
    WitnessConfig,
    anchor_probes,
    apply_choi,
    certify_linearity,
    check_cptp,
    choi_to_kraus,
    reconstruct_choi,
    verify_witness_report,
    witness_search,
)

ZERO = PureState.basis(2, 0)
ONE = PureState.basis(2, 1)
PLUS = PureState.from_vector([1, 1])
MINUS = PureState.from_vector([1, -1])

FAST = dict(steps=100)


def _weinberg(**kwargs) -> WeinbergMap:
    return WeinbergMap(PAULI_X, PAULI_Z, eps=1.0, t=1.0, **{**FAST, **kwargs})


# ── certify_linearity ───────────────────────────────────────────────────────

def test_anchor_probe_for_a_qubit():
    (probe,) = anchor_probes(2)
    assert_allclose(probe.matrix, np.diag([0.25, 0.75]))


@pytest.mark.parametrize(
    "channel",
    [identity_channel(2), depolarizing_channel(), amplitude_damping_channel(0.3)],
    ids=["identity", "depolarizing", "amplitude_damping"],
)
def test_linear_channels_are_certified(channel):
    certificate = certify_linearity(channel, 2, trials=30, seed=1)
    assert certificate.verdict == Verdict.LINEAR_CONSISTENT
    assert certificate.max_deviation < 1e-10
    assert certificate.worst_case is None
    assert certificate.comparisons == 2 * 30 + 1


def test_random_channels_are_certified_in_higher_dims():
    channel = random_channel(4, 3, make_rng(2))
    certificate = certify_linearity(channel, 4, trials=20, seed=3)
    assert certificate.verdict == Verdict.LINEAR_CONSISTENT


@pytest.mark.parametrize("case", range(50))
def test_certification_is_sound_for_seeded_channels(case):
    dim = 2 + case % 3
    channel = random_channel(dim, 1 + case % 4, task_rng(17, case))
    certificate = certify_linearity(channel, dim, trials=100, seed=case)
    assert certificate.verdict == Verdict.LINEAR_CONSISTENT
    assert certificate.max_deviation < 1e-10


def test_transpose_is_linear_even_though_not_completely_positive():
    certificate = certify_linearity(transpose_map(2), 2, trials=20, seed=0)
    assert certificate.verdict == Verdict.LINEAR_CONSISTENT


def test_purity_power_is_flagged_with_the_anchor_witness():
    certificate = certify_linearity(PurityPowerMap(2, 2), 2, trials=10, seed=0)
    assert certificate.verdict == Verdict.NONLINEAR
    assert certificate.max_deviation >= 0.15 - 1e-12
    worst = certificate.worst_case
    assert worst.probe == ProbeKind.DIRECT
    assert worst.ensemble_b is None
    assert trace_distance(worst.evolved_a.to_array(), worst.evolved_b.to_array()) == pytest.approx(
        worst.deviation, abs=1e-12
    )


def test_purity_power_fixes_pure_components():
    # Only the direct comparison can see it.
    computational = Ensemble.from_members([(0.5, ZERO), (0.5, ONE)])
    evolved = evolve_ensemble(PurityPowerMap(2, 2), computational)
    assert trace_distance(evolved, DensityMatrix.maximally_mixed(2)) < 1e-12
    rho = random_density_matrix(3, make_rng(4))
    assert trace_distance(apply_map(PurityPowerMap(2, 3), rho), rho) > 1e-3


def test_weinberg_is_flagged_by_decomposition_probes():
    certificate = certify_linearity(_weinberg(), 2, trials=5, seed=2)
    assert certificate.verdict == Verdict.NONLINEAR
    assert certificate.worst_case.deviation == certificate.max_deviation


def test_certificate_is_deterministic():
    law = PurityPowerMap(3, 2)
    first = certify_linearity(law, 2, trials=8, seed=9)
    second = certify_linearity(law, 2, trials=8, seed=9)
    assert first.model_dump() == second.model_dump()


def test_certify_rejects_bad_arguments():
    with pytest.raises(StructuralError):
        certify_linearity(identity_channel(2), 3)
    with pytest.raises(InvalidInputError):
        certify_linearity(identity_channel(2), 2, trials=0)
    with pytest.raises(InvalidInputError):
        certify_linearity(identity_channel(2), 2, threshold=0.0)


# ── Choi matrix ─────────────────────────────────────────────────────────────

def test_transpose_choi_is_swap():
    choi = reconstruct_choi(transpose_map(2), 2)
    swap = np.eye(4)[[0, 2, 1, 3]]
    assert_allclose(choi.matrix, swap, atol=1e-12)
    report = check_cptp(choi)
    assert report.min_eigenvalue == pytest.approx(-1.0, abs=1e-10)
    assert not report.cp
    assert report.tp


def test_depolarizing_choi_is_scaled_identity():
    report = check_cptp(reconstruct_choi(depolarizing_channel(), 2))
    assert report.cp and report.tp
    assert report.min_eigenvalue == pytest.approx(0.5, abs=1e-12)


def test_amplitude_damping_choi_is_cptp():
    report = check_cptp(reconstruct_choi(amplitude_damping_channel(0.5), 2))
    assert report.cp and report.tp
    # eigenvalues 0, 0, gamma, 2 - gamma
    assert report.min_eigenvalue == pytest.approx(0.0, abs=1e-12)
    assert report.tp_deviation < 1e-12


def test_identity_choi_is_unnormalized_bell_projector():
    choi = reconstruct_choi(identity_channel(2), 2)
    bell = np.array([1, 0, 0, 1])
    assert_allclose(choi.matrix, np.outer(bell, bell), atol=1e-12)


def test_choi_round_trip_reproduces_channels():
    rng = make_rng(21)
    for case in range(20):
        dim = 2 + case % 3
        channel = random_channel(dim, 1 + case % 4, rng)
        choi = reconstruct_choi(channel, dim)
        report = check_cptp(choi)
        assert report.cp and report.tp
        kraus = choi_to_kraus(choi)
        for _ in range(50):
            rho = random_density_matrix(dim, rng)
            expected = apply_map(channel, rho)
            assert trace_distance(apply_choi(choi, rho), expected) < 1e-9
            assert trace_distance(apply_map(kraus, rho), expected) < 1e-9


def test_choi_of_a_blackbox_matches_its_secret():
    channel = amplitude_damping_channel(0.4)
    direct = reconstruct_choi(channel, 2)
    boxed = reconstruct_choi(make_blackbox(channel), 2)
    assert_allclose(boxed.matrix, direct.matrix, atol=1e-12)


def test_choi_to_kraus_rejects_non_cp_choi():
    with pytest.raises(UnsupportedMapError):
        choi_to_kraus(reconstruct_choi(transpose_map(2), 2))


def test_check_cptp_rejects_non_hermitian_matrices():
    matrix = np.eye(4, dtype=complex)
    matrix[0, 1] = 1.0
    with pytest.raises(InvalidInputError):
        check_cptp(ChoiMatrix(2, matrix))


def test_choi_matrix_shape_is_checked():
    with pytest.raises(StructuralError):
        ChoiMatrix(2, np.eye(3))


# ── witness_search ──────────────────────────────────────────────────────────

def _reference_pair_deviation(law: WeinbergMap) -> float:
    computational = Ensemble.from_members([(0.5, ZERO), (0.5, ONE)])
    plus_minus = Ensemble.from_members([(0.5, PLUS), (0.5, MINUS)])
    return trace_distance(evolve_ensemble(law, computational), evolve_ensemble(law, plus_minus))


def test_plus_minus_ensemble_is_a_fixed_point_pair():
    law = _weinberg(steps=1000)
    plus_minus = Ensemble.from_members([(0.5, PLUS), (0.5, MINUS)])
    assert_allclose(evolve_ensemble(law, plus_minus).matrix, np.eye(2) / 2, atol=1e-9)


def test_witness_search_beats_the_reference_pair():
    law = _weinberg()
    rho = DensityMatrix.maximally_mixed(2)
    report = witness_search(law, rho, WitnessConfig(restarts=6, max_iters=200, seed=1))
    assert report.deviation >= _reference_pair_deviation(law) - 1e-6
    assert report.deviation > 0.1
    assert verify_witness_report(report, map=law) == pytest.approx(report.deviation, abs=1e-12)


def test_witness_reference_value_converges_with_step_count():
    coarse = _reference_pair_deviation(_weinberg(steps=1000))
    fine = _reference_pair_deviation(_weinberg(steps=20_000))
    assert coarse == pytest.approx(fine, abs=1e-9)


def test_witness_search_is_deterministic_across_worker_counts():
    law = _weinberg(steps=50)
    rho = random_density_matrix(2, make_rng(5))
    sequential = witness_search(law, rho, WitnessConfig(restarts=4, max_iters=60, seed=3))
    parallel = witness_search(law, rho, WitnessConfig(restarts=4, max_iters=60, seed=3, workers=3))
    assert sequential.model_dump() == parallel.model_dump()


def test_witness_search_runs_unpicklable_maps_on_threads():
    law = _weinberg(steps=50)
    boxed = BlackBoxMap(lambda matrix: apply_map(law, DensityMatrix(matrix)).matrix, 2)
    rho = DensityMatrix.maximally_mixed(2)
    sequential = witness_search(boxed, rho, WitnessConfig(restarts=2, max_iters=20, seed=4))
    threaded = witness_search(boxed, rho, WitnessConfig(restarts=2, max_iters=20, seed=4, workers=2))
    assert sequential.model_dump() == threaded.model_dump()


def test_witness_search_reports_states_at_full_resolution():
    law = _weinberg(steps=400)
    rho = DensityMatrix.maximally_mixed(2)
    report = witness_search(
        law, rho, WitnessConfig(restarts=2, max_iters=60, seed=1, search_steps_per_unit_time=40)
    )
    assert report.deviation > 1e-3
    assert verify_witness_report(report, map=law, tol=1e-12) == pytest.approx(report.deviation, abs=1e-12)
    with pytest.raises(InvalidInputError):
        witness_search(law, rho, WitnessConfig(restarts=1, search_steps_per_unit_time=0))


def test_witness_search_finds_nothing_for_linear_maps():
    report = witness_search(
        depolarizing_channel(0.4),
        random_density_matrix(2, make_rng(6)),
        WitnessConfig(restarts=2, max_iters=40, seed=0),
    )
    assert report.deviation < 1e-10


def test_witness_search_finds_nothing_for_purity_power():
    report = witness_search(
        PurityPowerMap(2, 2),
        DensityMatrix.maximally_mixed(2),
        WitnessConfig(restarts=2, max_iters=40, seed=0),
    )
    assert report.deviation < 1e-10


def test_witness_search_rejects_small_ensembles():
    with pytest.raises(InvalidInputError):
        witness_search(
            _weinberg(steps=10),
            DensityMatrix.maximally_mixed(2),
            WitnessConfig(restarts=1, ensemble_size=1),
        )


def test_witness_report_verification_detects_tampering():
    law = _weinberg(steps=50)
    report = witness_search(law, DensityMatrix.maximally_mixed(2), WitnessConfig(restarts=1, max_iters=30))
    tampered = WitnessReport.model_validate({**report.model_dump(), "deviation": report.deviation + 1e-6})
    with pytest.raises(InvalidInputError):
        verify_witness_report(tampered)
    restored = WitnessReport.model_validate_json(report.model_dump_json())
    assert verify_witness_report(restored) == pytest.approx(report.deviation, abs=1e-12)
