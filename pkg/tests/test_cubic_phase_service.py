import numpy as np
import pytest

from app.errors import ConditioningError, DimensionMismatchError, ParameterError, TruncationError
from app.model.cubic import ConditionalProvenance, RegularizedProvenance
from app.service import clifford_service as clifford
from app.service import cubic_phase_service as cubic
from app.service import fit_service
from app.service import fock_service as fock
from app.service import rng_service


def _squeezed_input(d, eta=0.2):
    return fock.apply(fock.vacuum(d), clifford.squeeze_one(eta, d))


def test_correction_gate_coefficients():
    gate = cubic.correction_gate(0.5, 0.1)
    assert gate.kind == "quadratic_phase"
    assert gate.params == pytest.approx((-0.15, -0.075, -0.0125))


def test_correction_should_cancel_shifted_cubic_phase():
    d, a, gamma = 20, 0.7, 0.1
    shifted = fock.function_of_position(lambda x: np.exp(1j * gamma * (x + a) ** 3), d)
    prod = cubic.correction_u(a, gamma, d) @ shifted
    assert np.allclose(prod.dense(), cubic.direct_cubic(gamma, d).dense(), atol=1e-10)


@pytest.mark.parametrize("gamma", [0.05, 0.1])
@pytest.mark.parametrize("a", [0.3, 0.7, 1.5])
def test_correction_identity_on_low_fock_block(gamma, a):
    d, block = 64, 17
    shifted = fock.function_of_position(lambda x: np.exp(1j * gamma * (x + a) ** 3), d)
    prod = (cubic.correction_u(a, gamma, d) @ shifted).dense()[:block, :block]
    target = cubic.direct_cubic(gamma, d).dense()[:block, :block]
    assert np.max(np.abs(prod - target)) < 1e-8


def test_direct_cubic_should_be_unitary():
    assert cubic.direct_cubic(0.3, 24).unitarity_error() < 1e-10


def test_regularized_state_should_carry_gamma_and_profile():
    ancilla = cubic.regularized_cubic_state(0.05, 1.5, 40)
    assert isinstance(ancilla.provenance, RegularizedProvenance)
    assert ancilla.gamma == pytest.approx(0.05)
    assert ancilla.state.norm() == pytest.approx(1.0)
    grid = fock.adaptive_grid(40)
    density = np.abs(ancilla.profile(grid.points)) ** 2
    assert density.sum() * grid.spacing == pytest.approx(1.0, abs=1e-8)
    fit = cubic.fit_cubic_phase(ancilla.state)
    assert fit.gamma == pytest.approx(0.05, abs=1e-3)
    assert fit.residual_ratio > 10


def test_negative_gamma_should_set_phase_sign():
    ancilla = cubic.regularized_cubic_state(-0.05, 1.5, 40)
    assert ancilla.phase_sign == -1
    assert ancilla.gamma_effective == pytest.approx(0.05)


def test_regularized_state_should_reject_large_cubic_action():
    with pytest.raises(TruncationError):
        cubic.regularized_cubic_state(0.2, 8.0, 32)


def test_squeeze_rescale_should_scale_gamma():
    ancilla = cubic.regularized_cubic_state(0.05, 1.5, 40)
    rescaled = cubic.squeeze_rescale(ancilla, 0.1)
    assert rescaled.gamma == pytest.approx(0.1)
    assert cubic.fit_cubic_phase(rescaled.state).gamma == pytest.approx(0.1, abs=2e-3)
    with pytest.raises(ParameterError):
        cubic.squeeze_rescale(ancilla, -0.1)


def test_conditioning_on_zero_should_raise():
    weta = cubic.prepare_weta(2.0, 0.5, (40, 40))
    with pytest.raises(ConditioningError):
        cubic.condition_on(weta, 0, w=2.0, eta=0.5)


def test_condition_on_should_record_provenance():
    weta = cubic.prepare_weta(2.0, 0.5, (40, 40))
    ancilla = cubic.condition_on(weta, 4, w=2.0, eta=0.5)
    assert ancilla.provenance == ConditionalProvenance("conditional", n=4, w=2.0, eta=0.5)
    assert ancilla.gamma_effective > 0
    assert ancilla.calibration == pytest.approx(ancilla.gamma_effective * 2.0)
    assert ancilla.state.norm() == pytest.approx(1.0)


def test_conditional_state_should_succeed_or_ask_for_retry():
    weta = cubic.prepare_weta(2.0, 0.5, (40, 40))
    successes = 0
    for attempt in range(10):
        try:
            ancilla = cubic.conditional_cubic_state(weta, rng_service.derive(7, attempt), w=2.0, eta=0.5)
        except ConditioningError:
            continue
        successes += 1
        assert ancilla.provenance.n > 0
    assert successes > 0


def test_prepare_weta_should_reject_too_small_cutoff():
    with pytest.raises(TruncationError):
        cubic.prepare_weta(5.0, 1.0, (12, 12))


def test_prepare_weta_should_honor_explicit_tolerance():
    with pytest.raises(TruncationError):
        cubic.prepare_weta(2.0, 0.5, (14, 14), tolerance=0.0)
    state = cubic.prepare_weta(2.0, 0.5, (14, 14), tolerance=1.0)
    assert state.cutoffs == (14, 14)


@pytest.fixture(scope="module")
def weta_w5():
    return cubic.prepare_weta(5.0, 1.0, (96, 96), tolerance=1e-5)


def test_gamma_should_halve_from_n_to_4n(weta_w5):
    ns = [9, 16, 25, 36]
    gammas = [cubic.condition_on(weta_w5, n, w=5.0, eta=1.0).gamma_effective for n in ns]
    fit = fit_service.fit_power_law(ns, gammas)
    assert 1.6 <= 4.0 ** (-fit.slope) <= 2.4
    assert fock.leakage(weta_w5) <= 1e-5


def test_gate_with_zero_gamma_and_centered_outcome_is_nearly_identity(rng):
    d = 32
    ancilla = cubic.regularized_cubic_state(0.0, 4.0, d)
    trace = cubic.cubic_phase_gate(_squeezed_input(d), ancilla, rng, 0.001, forced_outcome=0.0)
    assert trace.oracle_fidelity > 0.999


def test_position_backend_should_implement_cubic_gate():
    d = 32
    inp = _squeezed_input(d)
    ancilla = cubic.regularized_cubic_state(0.1, 4.0, d)
    fids = [
        cubic.cubic_phase_gate(inp, ancilla, rng_service.derive(3, i), 0.001).oracle_fidelity
        for i in range(20)
    ]
    assert np.mean(fids) > 0.98
    assert min(fids) > 0.9


def test_every_outcome_should_be_corrected():
    d = 32
    inp = _squeezed_input(d)
    ancilla = cubic.regularized_cubic_state(0.1, 4.0, d)
    for a in (-4.0, 0.0, 4.0):
        trace = cubic.cubic_phase_gate(inp, ancilla, rng_service.derive(5), 0.001, forced_outcome=a)
        assert trace.measured_a == a
        assert trace.correction_applied == cubic.correction_gate(a, 0.1)
        assert trace.oracle_fidelity > 0.98


def test_fock_and_position_backends_should_agree():
    d = 30
    inp = _squeezed_input(d)
    ancilla = cubic.regularized_cubic_state(0.05, 1.0, d)
    by_position = cubic.cubic_phase_gate(inp, ancilla, rng_service.derive(1), 0.05, "position", forced_outcome=0.3)
    by_fock = cubic.cubic_phase_gate(inp, ancilla, rng_service.derive(1), 0.05, "fock", forced_outcome=0.3)
    assert fock.fidelity(by_position.output, by_fock.output) > 0.999


def test_gate_should_reject_mismatched_backends_and_inputs(rng):
    ancilla = cubic.regularized_cubic_state(0.05, 1.0, 20)
    with pytest.raises(DimensionMismatchError):
        cubic.cubic_phase_gate(_squeezed_input(24), ancilla, rng, backend="fock")
    with pytest.raises(DimensionMismatchError):
        cubic.cubic_phase_gate(fock.vacuum((4, 4)), ancilla, rng)
    with pytest.raises(ParameterError):
        cubic.cubic_phase_gate(_squeezed_input(20), ancilla, rng, backend="wigner")
