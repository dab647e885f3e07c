import numpy as np
import pytest

from app.errors import ParameterError, TruncationError
from app.model.gate import GateParam
from app.service import clifford_service as clifford
from app.service import fock_service as fock


def _means(state, d, mode=0):
    q, p = fock.quadrature_operators(d)
    return fock.expectation(state, q, mode).real, fock.expectation(state, p, mode).real


def test_displacement_should_shift_means():
    d = 30
    state = fock.apply(fock.vacuum(d), clifford.displacement(0.5 - 0.3j, d))
    q, p = _means(state, d)
    assert q == pytest.approx(np.sqrt(2) * 0.5, abs=1e-10)
    assert p == pytest.approx(-np.sqrt(2) * 0.3, abs=1e-10)


def test_displacement_should_match_closed_form_coherent_state():
    d = 30
    state = fock.apply(fock.vacuum(d), clifford.displacement(1.0 + 0.5j, d))
    assert fock.fidelity(state, fock.coherent_state(1.0 + 0.5j, d)) == pytest.approx(1.0, abs=1e-10)


def test_squeeze_one_should_reduce_position_variance():
    d, eta = 40, 0.5
    state = fock.apply(fock.vacuum(d), clifford.squeeze_one(eta, d))
    q, p = fock.quadrature_operators(d)
    assert fock.variance(state, q) == pytest.approx(np.exp(-2 * eta) / 2, abs=1e-6)
    assert fock.variance(state, p) == pytest.approx(np.exp(2 * eta) / 2, abs=1e-6)
    assert fock.expectation(state, fock.number_operator(d)).real == pytest.approx(np.sinh(eta) ** 2, abs=1e-6)


def test_squeeze_above_cap_should_raise():
    with pytest.raises(TruncationError):
        clifford.squeeze_one(3.5, 10)


def test_epr_pair_should_correlate_positions():
    d, eta = 40, 0.8
    state = clifford.epr_pair(eta, d)
    q, _ = fock.quadrature_operators(d)
    diff = fock.apply(state, q, 0).amplitudes - fock.apply(state, q, 1).amplitudes
    assert np.vdot(diff, diff).real == pytest.approx(np.exp(-2 * eta), abs=1e-6)


def test_sum_gate_should_add_control_position_to_target():
    d = 40
    pair = fock.tensor(fock.coherent_state(1.0 / np.sqrt(2), d), fock.coherent_state(0.5 / np.sqrt(2), d))
    out = fock.apply(pair, clifford.sum_gate(d), (0, 1))
    assert _means(out, d, 0)[0] == pytest.approx(1.0, abs=1e-6)
    assert _means(out, d, 1)[0] == pytest.approx(1.5, abs=1e-6)


def test_sum_inverse_should_undo_sum():
    d = 10
    prod = (clifford.sum_gate(d) @ clifford.sum_inverse(d)).dense()
    assert np.allclose(prod, np.eye(d * d), atol=1e-10)


def test_beamsplitter_should_show_hong_ou_mandel_dip():
    state = fock.tensor(fock.make_number_state(1, 3), fock.make_number_state(1, 3))
    out = fock.apply(state, clifford.beamsplitter(np.pi / 4, (3, 3)), (0, 1))
    assert abs(out.amplitudes[1, 1]) ** 2 < 1e-12
    assert abs(out.amplitudes[2, 0]) ** 2 == pytest.approx(0.5)
    assert abs(out.amplitudes[0, 2]) ** 2 == pytest.approx(0.5)


def test_beamsplitter_should_conserve_photon_number():
    d = 6
    state = fock.tensor(fock.make_number_state(3, d), fock.make_number_state(1, d))
    out = fock.apply(state, clifford.beamsplitter(0.37, (d, d)), (0, 1))
    n = np.add.outer(np.arange(d), np.arange(d))
    assert np.sum(np.abs(out.amplitudes) ** 2 * n) == pytest.approx(4.0)


def test_cross_kerr_should_imprint_number_dependent_phase():
    op = clifford.cross_kerr(0.3, (4, 5))
    diag = op.dense().diagonal().reshape(4, 5)
    assert diag[2, 3] == pytest.approx(np.exp(-1j * 0.3 * 6))


def test_squeezed_position_state_should_center_on_q():
    d = 40
    state = clifford.squeezed_position_state(1.2, 0.4, d)
    q, _ = fock.quadrature_operators(d)
    assert fock.expectation(state, q).real == pytest.approx(1.2, abs=1e-6)
    assert fock.variance(state, q) == pytest.approx(np.exp(-0.8) / 2, abs=1e-6)


@pytest.mark.parametrize(
    "gate",
    [
        GateParam("displacement", (0.5 + 0.3j,)),
        GateParam("rotation", (0.7,)),
        GateParam("squeeze1", (0.4,)),
        GateParam("quadratic_phase", (0.3, -0.2, 0.1)),
        GateParam("squeeze2", (0.3,)),
        GateParam("beamsplitter", (0.3,)),
        GateParam("sum"),
    ],
)
def test_gate_times_inverse_should_be_identity(gate):
    d = 8
    cutoffs = (d, d) if gate.arity == 2 else d
    u = clifford.build(gate, cutoffs)
    prod = (u @ clifford.build(gate.inverse(), cutoffs)).dense()
    assert np.allclose(prod, np.eye(prod.shape[0]), atol=1e-9)
    assert u.unitarity_error() < 1e-10


@pytest.mark.parametrize("alpha, eta, beta", [(0.3 + 0.1j, 0.2, -0.4j), (-0.5, -0.3, 0.2 + 0.2j)])
def test_displace_squeeze_displace_should_follow_affine_map(alpha, eta, beta):
    d = 40
    state = fock.vacuum(d)
    for gate in (GateParam("displacement", (alpha,)), GateParam("squeeze1", (eta,)), GateParam("displacement", (beta,))):
        state = fock.apply(state, clifford.build(gate, d))
    got = _means(state, d)
    want = clifford.symplectic_map((0.0, 0.0), alpha, eta, beta)
    assert got == pytest.approx(want, abs=1e-6)


def test_gate_param_should_validate_arity():
    with pytest.raises(ParameterError):
        GateParam("squeeze1", ())
    with pytest.raises(ParameterError):
        GateParam("beamsplitter", (0.1j,))
    with pytest.raises(ParameterError):
        GateParam("rotation", (0.2j,))
    with pytest.raises(ParameterError):
        GateParam("kerr", (0.1,))
    assert GateParam("sum").inverse() == GateParam("sum_inverse")


def test_rotation_should_turn_quadratures():
    d, theta = 30, 0.4
    state = fock.apply(fock.coherent_state(0.8, d), clifford.build(GateParam("rotation", (theta,)), d))
    assert fock.fidelity(state, fock.coherent_state(0.8 * np.exp(1j * theta), d)) == pytest.approx(1.0, abs=1e-10)


def test_beamsplitter_should_accept_cutoffs_as_list():
    from_list = clifford.beamsplitter(0.3, [4, 5])
    from_tuple = clifford.beamsplitter(0.3, (4, 5))
    assert from_list.cutoffs == (4, 5)
    assert np.allclose(from_list.dense(), from_tuple.dense())
    assert clifford.build(GateParam("beamsplitter", (0.3,)), [4, 5]).cutoffs == (4, 5)


def test_squeezing_error_should_shrink_with_cutoff():
    eta = 0.5
    errors = []
    for d in (8, 16, 32):
        state = fock.apply(fock.vacuum(d), clifford.squeeze_one(eta, d))
        q, _ = fock.quadrature_operators(d)
        errors.append(abs(fock.variance(state, q) - np.exp(-2 * eta) / 2))
    assert errors[0] > errors[1] > errors[2]
    assert errors[2] < 1e-6
