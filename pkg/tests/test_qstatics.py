import numpy as np
import pytest
from numpy.testing import assert_allclose

from linearity_lab.errors import InvalidInputError, StructuralError
from linearity_lab.qstatics import (
    PAULI_X,
    DensityMatrix,
    FactorSubset,
    PureState,
    TensorStructure,
    density_from_computation,
    fidelity,
    haar_sample,
    haar_state,
    haar_unitary,
    make_rng,
    partial_trace,
    random_density_matrix,
    regroup_factors,
    spectral_decomposition,
    state_overlap,
    task_rng,
    tensor_product,
    tensor_states,
    trace_distance,
)


def _ket(*bits: int, dim: int = 2) -> PureState:
    state = PureState.basis(dim, bits[0])
    for b in bits[1:]:
        state = tensor_states(state, PureState.basis(dim, b))
    return state


def _random_rho(dim: int, seed: int) -> DensityMatrix:
    return random_density_matrix(dim, make_rng(seed))


# ── Value types ─────────────────────────────────────────────────────────────

def test_pure_state_rejects_unnormalized_amplitudes():
    with pytest.raises(InvalidInputError):
        PureState(np.array([1.0, 1.0]))


def test_pure_state_from_vector_normalizes():
    psi = PureState.from_vector([3.0, 4.0j])
    assert_allclose(np.linalg.norm(psi.amplitudes), 1.0, atol=1e-15)


def test_density_matrix_invariants_are_enforced():
    with pytest.raises(InvalidInputError):
        DensityMatrix(np.array([[0.5, 0.1], [0.0, 0.5]]))
    with pytest.raises(InvalidInputError):
        DensityMatrix(np.eye(2))
    with pytest.raises(InvalidInputError):
        DensityMatrix(np.diag([1.5, -0.5]))


def test_density_matrix_is_read_only():
    rho = DensityMatrix.maximally_mixed(2)
    with pytest.raises(ValueError):
        rho.matrix[0, 0] = 1.0


def test_tensor_structure_requires_factors_of_at_least_two():
    with pytest.raises(StructuralError):
        TensorStructure((2, 1))
    assert TensorStructure((2, 3, 4)).total_dim == 24


def test_factor_subset_rejects_duplicates_and_out_of_range():
    structure = TensorStructure((2, 2))
    with pytest.raises(StructuralError):
        FactorSubset((0, 0))
    with pytest.raises(StructuralError):
        structure.subset((2,))


# ── tensor_product / partial_trace ──────────────────────────────────────────

def test_tensor_product_of_identities_is_identity():
    assert_allclose(tensor_product(np.eye(2), np.eye(2)), np.eye(4))


def test_tensor_product_basis_bookkeeping():
    p0 = np.diag([1.0, 0.0])
    p1 = np.diag([0.0, 1.0])
    expected = np.zeros((4, 4))
    expected[1, 1] = 1.0
    assert_allclose(tensor_product(p0, p1), expected)


def test_double_bit_flip_maps_00_to_11():
    out = tensor_product(PAULI_X, PAULI_X) @ _ket(0, 0).amplitudes
    assert_allclose(out, _ket(1, 1).amplitudes)


def test_bell_marginal_is_maximally_mixed():
    bell = PureState.from_vector([1, 0, 0, 1])
    structure = TensorStructure((2, 2))
    reduced = partial_trace(bell, structure, structure.subset((0,)))
    assert_allclose(reduced.matrix, np.eye(2) / 2, atol=1e-12)


def test_product_state_marginal_is_its_factor():
    structure = TensorStructure((2, 2))
    reduced = partial_trace(_ket(0, 1), structure, structure.subset((0,)))
    assert_allclose(reduced.matrix, np.diag([1.0, 0.0]), atol=1e-12)


def test_ghz_marginal_over_last_two_factors():
    ghz = PureState.from_vector(np.eye(8)[0] + np.eye(8)[7])
    structure = TensorStructure((2, 2, 2))
    reduced = partial_trace(ghz, structure, structure.subset((1, 2)))
    expected = np.zeros((4, 4))
    expected[0, 0] = expected[3, 3] = 0.5
    assert_allclose(reduced.matrix, expected, atol=1e-12)


def test_partial_trace_errors():
    structure = TensorStructure((2, 2))
    with pytest.raises(StructuralError):
        partial_trace(DensityMatrix.maximally_mixed(3), structure, structure.subset((0,)))
    with pytest.raises(StructuralError):
        partial_trace(DensityMatrix.maximally_mixed(4), structure, FactorSubset(()))


@pytest.mark.parametrize("seed", range(5))
def test_sequential_trace_equals_joint_trace(seed):
    structure = TensorStructure((2, 2, 2))
    rho = _random_rho(8, seed)
    step = partial_trace(rho, structure, structure.subset((1, 2)))
    rest = TensorStructure((2, 2))
    sequential = partial_trace(step, rest, rest.subset((1,)))
    joint = partial_trace(rho, structure, structure.subset((2,)))
    assert np.max(np.abs(sequential.matrix - joint.matrix)) < 1e-12


@pytest.mark.parametrize("seed", range(5))
def test_partial_trace_of_product_returns_factor(seed):
    rng = make_rng(seed)
    a, b = random_density_matrix(2, rng), random_density_matrix(3, rng)
    structure = TensorStructure((2, 3))
    joint = DensityMatrix(tensor_product(a.matrix, b.matrix))
    assert_allclose(partial_trace(joint, structure, structure.subset((0,))).matrix, a.matrix, atol=1e-12)
    assert_allclose(partial_trace(joint, structure, structure.subset((1,))).matrix, b.matrix, atol=1e-12)


# ── Metrics ─────────────────────────────────────────────────────────────────

def test_trace_distance_examples():
    zero, one = _ket(0).projector(), _ket(1).projector()
    mixed = DensityMatrix.maximally_mixed(2)
    assert trace_distance(mixed, mixed) == pytest.approx(0.0, abs=1e-15)
    assert trace_distance(zero, one) == pytest.approx(1.0, abs=1e-12)
    assert trace_distance(mixed, zero) == pytest.approx(0.5, abs=1e-12)


def test_trace_distance_dimension_mismatch():
    with pytest.raises(StructuralError):
        trace_distance(DensityMatrix.maximally_mixed(2), DensityMatrix.maximally_mixed(3))


def test_trace_distance_is_a_metric():
    rng = make_rng(11)
    for case in range(200):
        dim = 2 + case % 3
        r, s, t = (random_density_matrix(dim, rng) for _ in range(3))
        assert abs(trace_distance(r, s) - trace_distance(s, r)) < 1e-14
        assert trace_distance(r, t) <= trace_distance(r, s) + trace_distance(s, t) + 1e-12
        assert trace_distance(r, r) < 1e-10
        assert 0.0 <= trace_distance(r, s) <= 1.0 + 1e-12


@pytest.mark.parametrize("seed", range(10))
def test_trace_distance_is_unitarily_invariant(seed):
    rng = make_rng(seed)
    rho, sigma = random_density_matrix(3, rng), random_density_matrix(3, rng)
    u = haar_unitary(3, rng)
    rotated = [density_from_computation(u @ m.matrix @ u.conj().T) for m in (rho, sigma)]
    assert abs(trace_distance(*rotated) - trace_distance(rho, sigma)) < 1e-12


def test_fidelity_of_pure_states_is_squared_overlap():
    plus = PureState.from_vector([1, 1])
    assert fidelity(plus.projector(), _ket(0).projector()) == pytest.approx(0.5, abs=1e-12)
    rho = _random_rho(3, 4)
    assert fidelity(rho, rho) == pytest.approx(1.0, abs=1e-10)


def test_state_overlap_ignores_global_phase():
    plus = PureState.from_vector([1, 1])
    assert state_overlap(plus, PureState.from_vector([1j, 1j])) == pytest.approx(1.0, abs=1e-12)
    assert state_overlap(plus, _ket(0)) == pytest.approx(1 / np.sqrt(2), abs=1e-12)
    assert state_overlap(_ket(0), _ket(1)) == pytest.approx(0.0, abs=1e-15)
    with pytest.raises(StructuralError):
        state_overlap(_ket(0), PureState.basis(3, 0))


def test_spectral_decomposition_is_nondecreasing():
    spectrum = spectral_decomposition(DensityMatrix.diagonal([0.75, 0.25]))
    assert_allclose(spectrum.eigenvalues, [0.25, 0.75])
    assert spectrum.rank == 2
    assert spectral_decomposition(_ket(1).projector()).rank == 1


# ── Sampling ────────────────────────────────────────────────────────────────

def test_haar_sample_is_deterministic():
    a = haar_sample("unitary", 3, seed=42)
    b = haar_sample("unitary", 3, seed=42)
    assert np.array_equal(a, b)
    assert np.array_equal(haar_sample("state", 4, 7).amplitudes, haar_sample("state", 4, 7).amplitudes)


def test_haar_unitary_is_unitary():
    u = haar_sample("unitary", 4, seed=3)
    assert np.max(np.abs(u.conj().T @ u - np.eye(4))) < 1e-12


def test_haar_states_have_uniform_first_moment():
    rng = make_rng(2024)
    weights = [abs(haar_state(2, rng).amplitudes[0]) ** 2 for _ in range(20_000)]
    assert np.mean(weights) == pytest.approx(0.5, abs=0.01)


def test_haar_sample_rejects_bad_arguments():
    with pytest.raises(InvalidInputError):
        haar_sample("state", 1, seed=0)
    with pytest.raises(InvalidInputError):
        haar_sample("matrix", 2, seed=0)
    with pytest.raises(InvalidInputError):
        make_rng(-1)


def test_task_streams_do_not_depend_on_order():
    first = task_rng(5, 3).standard_normal(4)
    task_rng(5, 0).standard_normal(100)
    assert np.array_equal(first, task_rng(5, 3).standard_normal(4))
    assert not np.array_equal(first, task_rng(5, 4).standard_normal(4))


# ── Regrouping ──────────────────────────────────────────────────────────────

def test_adjacent_merge_is_identity_permutation():
    regrouping = regroup_factors(TensorStructure((2, 2)), [(0, 1)])
    assert regrouping.structure.factor_dims == (4,)
    assert np.array_equal(regrouping.index_map, np.arange(4))


def test_swapping_two_factors_index_map():
    regrouping = regroup_factors(TensorStructure((2, 3)), [(1,), (0,)])
    assert regrouping.structure.factor_dims == (3, 2)
    for i in range(2):
        for j in range(3):
            assert regrouping.index_map[i * 3 + j] == j * 2 + i


def test_regrouped_partial_trace_matches_original():
    structure = TensorStructure((2, 2, 2))
    regrouping = regroup_factors(structure, [(0,), (1, 2)])
    assert regrouping.structure.factor_dims == (2, 4)
    rho = _random_rho(8, 9)
    merged = regrouping.apply_density(rho)
    direct = partial_trace(rho, structure, structure.subset((1, 2)))
    via_groups = partial_trace(merged, regrouping.structure, regrouping.structure.subset((1,)))
    assert_allclose(via_groups.matrix, direct.matrix, atol=1e-12)


def test_regrouping_round_trip_is_identity():
    structure = TensorStructure((2, 3, 2))
    regrouping = regroup_factors(structure, [(2, 0), (1,)])
    indices = np.arange(structure.total_dim)
    assert np.array_equal(regrouping.inverse_map[regrouping.index_map], indices)
    psi = haar_state(12, make_rng(1))
    assert_allclose(regrouping.restore_vector(regrouping.apply_vector(psi.amplitudes)), psi.amplitudes)
    rho = _random_rho(12, 2)
    assert_allclose(regrouping.restore_density(regrouping.apply_density(rho)).matrix, rho.matrix)
    inverse = regrouping.ungroup()
    assert inverse.structure.factor_dims == (2, 3, 2)
    assert np.array_equal(inverse.index_map[regrouping.index_map], indices)
    assert_allclose(inverse.apply_state(regrouping.apply_state(psi)).amplitudes, psi.amplitudes)
    assert_allclose(
        regrouping.permutation_matrix() @ inverse.permutation_matrix(), np.eye(12), atol=0
    )


def test_regrouping_preserves_inner_products():
    regrouping = regroup_factors(TensorStructure((2, 3)), [(1,), (0,)])
    rng = make_rng(8)
    phi, psi = haar_state(6, rng), haar_state(6, rng)
    before = np.vdot(phi.amplitudes, psi.amplitudes)
    after = np.vdot(regrouping.apply_state(phi).amplitudes, regrouping.apply_state(psi).amplitudes)
    assert abs(before - after) < 1e-12


def test_regroup_rejects_non_partition():
    with pytest.raises(StructuralError):
        regroup_factors(TensorStructure((2, 2, 2)), [(0, 1), (1, 2)])
    with pytest.raises(StructuralError):
        regroup_factors(TensorStructure((2, 2)), [(0,)])
