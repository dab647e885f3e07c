import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from numpy.polynomial.hermite import hermgauss
from scipy import stats

from app.errors import (
    DimensionMismatchError,
    GridError,
    NonHermitianError,
    NormalizationError,
    ParameterError,
    TruncationError,
)
from app.model.operator import ModeOperator
from app.model.state import MultiModeState, QuadratureGrid
from app.service import fock_service as fock


def test_number_state_should_reject_levels_outside_cutoff():
    with pytest.raises(TruncationError):
        fock.make_number_state(5, 5)
    with pytest.raises(TruncationError):
        fock.vacuum(1)


def test_coherent_state_should_follow_poisson_statistics():
    alpha = 1.3
    probs = fock.marginal_probabilities(fock.coherent_state(alpha, 40))
    n = np.arange(40)
    assert np.allclose(probs, stats.poisson.pmf(n, alpha ** 2), atol=1e-12)


def test_leakage_should_fall_with_cutoff():
    leaks = [fock.leakage(fock.coherent_state(2.0, d)) for d in (8, 16, 32)]
    assert leaks[0] > leaks[1] > leaks[2]
    assert leaks[2] < 1e-10


def test_invalid_states_should_raise_simulation_errors():
    with pytest.raises(ParameterError):
        fock.make_number_state(-1, 4)
    with pytest.raises(NormalizationError):
        MultiModeState(np.array([1.0, 1.0]))
    with pytest.raises(NormalizationError):
        MultiModeState(np.zeros(3), is_normalized=False).normalized()
    with pytest.raises(NormalizationError):
        fock.require_normalized(MultiModeState(np.array([2.0, 0.0]), is_normalized=False))


def test_superposition_should_be_normalized_and_equally_weighted():
    state = fock.superposition([2, 10], 12)
    probs = fock.marginal_probabilities(state)
    assert probs[2] == pytest.approx(0.5)
    assert probs[10] == pytest.approx(0.5)


def test_tensor_should_keep_normalization_and_shape():
    state = fock.tensor(fock.make_number_state(1, 3), fock.vacuum(4))
    assert state.cutoffs == (3, 4)
    assert state.is_normalized
    assert state.amplitudes[1, 0] == 1.0


def test_canonical_commutator_holds_below_top_level():
    d = 10
    q, p = fock.quadrature_operators(d)
    comm = (q @ p).dense() - (p @ q).dense()
    assert np.allclose(comm[: d - 1, : d - 1], 1j * np.eye(d - 1), atol=1e-12)


def test_position_eigenvalues_should_be_gauss_hermite_nodes():
    x, v = fock.position_eigensystem(12)
    assert np.allclose(x, np.sort(hermgauss(12)[0]), atol=1e-10)
    assert np.allclose(v.conj().T @ v, np.eye(12), atol=1e-10)


def test_function_of_position_should_commute_with_position():
    d = 16
    q, _ = fock.quadrature_operators(d)
    f = fock.function_of_position(lambda x: np.exp(1j * 0.1 * x ** 3), d)
    comm = (f @ q).dense() - (q @ f).dense()
    assert np.max(np.abs(comm)) < 1e-10
    assert f.unitarity_error() < 1e-10


def test_hermitian_exponential_should_reject_non_hermitian_generator():
    gen = ModeOperator((3,), data=np.triu(np.ones((3, 3), dtype=complex)))
    with pytest.raises(NonHermitianError):
        fock.hermitian_exponential(gen, 1.0)


def test_product_exponential_should_match_dense_exponential():
    d = 6
    q, p = fock.quadrature_operators(d)
    factored = fock.product_exponential(q, p, -1.0)
    dense = fock.hermitian_exponential(fock.kron(q, p), -1.0)
    assert np.allclose(factored.dense(), dense.dense(), atol=1e-10)


def test_apply_should_reject_operator_with_wrong_cutoff():
    with pytest.raises(DimensionMismatchError):
        fock.apply(fock.vacuum((4, 5)), fock.number_operator(4), 1)


def test_apply_should_accept_negative_mode_indices():
    state = fock.tensor(fock.vacuum(3), fock.make_number_state(2, 4))
    n_last = fock.expectation(state, fock.number_operator(4), -1)
    assert n_last.real == pytest.approx(2.0)


def test_leakage_should_measure_mass_in_top_levels():
    assert fock.leakage(fock.vacuum(20)) == 0.0
    assert fock.leakage(fock.make_number_state(19, 20)) == pytest.approx(1.0)


def test_trim_mode_should_drop_empty_levels_only():
    state = fock.tensor(fock.make_number_state(2, 10), fock.vacuum(3))
    trimmed = fock.trim_mode(state, 0)
    assert trimmed.cutoffs == (3, 3)
    assert trimmed.norm() == pytest.approx(1.0)


def test_project_and_embed_should_be_inverse_for_product_states():
    a = fock.coherent_state(0.4 + 0.2j, 8)
    b = fock.superposition([0, 3], 5)
    joint = fock.tensor(a, b)
    rest = fock.project_mode(joint, 0, a.amplitudes)
    assert np.allclose(rest, b.amplitudes)
    assert np.allclose(fock.embed_mode(rest, 0, a.amplitudes), joint.amplitudes)


def test_hermite_functions_should_be_orthonormal():
    grid = QuadratureGrid.symmetric(12.0, 2001)
    phi = fock.hermite_functions(grid.points, 10)
    gram = phi @ phi.T * grid.spacing
    assert np.allclose(gram, np.eye(10), atol=1e-8)


def test_wavefunction_should_flag_too_narrow_grid():
    with pytest.raises(GridError):
        fock.wavefunction(fock.make_number_state(5, 8), QuadratureGrid.symmetric(0.5, 11))


def test_position_density_should_integrate_to_one():
    state = fock.tensor(fock.coherent_state(1.0, 20), fock.make_number_state(1, 3))
    grid = fock.adaptive_grid(20)
    density = fock.position_density(state, 0, grid)
    assert density.sum() * grid.spacing == pytest.approx(1.0, abs=1e-8)
    mean = (grid.points * density).sum() * grid.spacing
    assert mean == pytest.approx(np.sqrt(2.0), abs=1e-8)


amplitudes = st.lists(
    st.tuples(st.floats(-1, 1), st.floats(-1, 1)), min_size=4, max_size=4
).filter(lambda v: sum(a * a + b * b for a, b in v) > 1e-3)


@given(amplitudes, amplitudes)
def test_fidelity_should_be_symmetric_and_bounded(v1, v2):
    s1 = MultiModeState(np.array([complex(a, b) for a, b in v1]), is_normalized=False).normalized()
    s2 = MultiModeState(np.array([complex(a, b) for a, b in v2]), is_normalized=False).normalized()
    f = fock.fidelity(s1, s2)
    assert 0.0 <= f <= 1.0
    assert f == pytest.approx(fock.fidelity(s2, s1))
    assert fock.fidelity(s1, s1) == pytest.approx(1.0)
