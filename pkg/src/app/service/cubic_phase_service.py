# src/app/service/cubic_phase_service.py
"""
Kubische Phasenzustände und das deterministische Cubic-Phase-Gate mit Feed-forward.

Protokoll: SUM⁻¹ (Eingang steuert, Ancilla ist Ziel) → Ortsmessung am Ziel mit
Ergebnis a → U(a) am Eingang. Netto wirkt V_γ = exp(iγq̂³).
"""
from __future__ import annotations

import logging
from typing import Callable, Literal, Sequence

import numpy as np
from numpy.polynomial.hermite import hermgauss

from app.errors import (
    ConditioningError,
    DimensionMismatchError,
    FitError,
    GridError,
    ParameterError,
    TruncationError,
)
from app.model.cubic import (
    ConditionalProvenance,
    CubicAncilla,
    PhaseFit,
    ProtocolTrace,
    RegularizedProvenance,
)
from app.model.gate import GateParam
from app.model.operator import ModeOperator
from app.model.state import MultiModeState
from app.service import clifford_service as clifford
from app.service import detector_service as detector
from app.service import fock_service as fock
from app.settings import setting

log = logging.getLogger(__name__)

Backend = Literal["position", "fock"]
Profile = Callable[[np.ndarray], np.ndarray]


# -------------------- |w,η⟩ und bedingte Präparation --------------------

def prepare_weta(
    w: float, eta: float, cutoffs: int | Sequence[int], tolerance: float | None = None
) -> MultiModeState:
    """|w,η⟩ = D₁(iw)·S₁₂(η)|00⟩; `tolerance` ersetzt die globale Leakage-Schranke."""
    d1, d2 = clifford._pair(cutoffs)
    state = fock.apply(fock.vacuum((d1, d2)), clifford.squeeze_two(eta, (d1, d2)), (0, 1))
    state = fock.apply(state, clifford.displacement(1j * w, d1), 0)
    leak = fock.leakage(state)
    tolerance = setting("leakage_tolerance") if tolerance is None else tolerance
    if leak > tolerance:
        raise TruncationError(
            f"|w,η⟩ mit w = {w:g}, η = {eta:g} passt nicht in cutoffs {(d1, d2)} (Leakage {leak:.3g})"
        )
    return state


def fit_cubic_phase(state: MultiModeState, support_sigmas: float | None = None) -> PhaseFit:
    """
    Fit von arg ψ(q) durch Polynome 2. und 3. Grades über |q − ⟨q⟩| ≤ k·σ_q.
    Der kubische Koeffizient ist das effektive γ′ (mit Vorzeichen).
    """
    support_sigmas = setting("phase_fit_sigmas") if support_sigmas is None else support_sigmas
    grid = fock.adaptive_grid(state.cutoffs[0])
    psi = fock.wavefunction(state, grid)
    dens = np.abs(psi) ** 2
    dens = dens / dens.sum()
    mean = float(grid.points @ dens)
    std = float(np.sqrt(((grid.points - mean) ** 2) @ dens))
    mask = (np.abs(grid.points - mean) <= support_sigmas * std) & (np.abs(psi) > 0)
    if mask.sum() < setting("phase_fit_min_points"):
        raise FitError(f"Zu wenige Gitterpunkte im Träger ({int(mask.sum())}) für den Phasen-Fit")
    xs = grid.points[mask]
    phase = np.unwrap(np.angle(psi[mask]))
    cubic = np.polyfit(xs, phase, 3)
    quad = np.polyfit(xs, phase, 2)
    res3 = float(np.sqrt(np.mean((phase - np.polyval(cubic, xs)) ** 2)))
    res2 = float(np.sqrt(np.mean((phase - np.polyval(quad, xs)) ** 2)))
    return PhaseFit(
        gamma=float(cubic[0]),
        coefficients=tuple(float(c) for c in cubic),
        residual_cubic=res3,
        residual_quadratic=res2,
        support=(float(xs[0]), float(xs[-1])),
    )


def _conditional_ancilla(rest: np.ndarray, n: int, w: float, eta: float) -> CubicAncilla:
    if n == 0:
        raise ConditioningError("Ergebnis n = 0: γ′ ist nicht definiert")
    state = MultiModeState(rest, is_normalized=False)
    if state.norm() == 0.0:
        raise ConditioningError(f"Ergebnis n = {n} hat Wahrscheinlichkeit 0")
    state = state.normalized()
    fit = fit_cubic_phase(state)
    return CubicAncilla(
        state=state,
        gamma_effective=abs(fit.gamma),
        provenance=ConditionalProvenance("conditional", n=n, w=w, eta=eta),
        phase_sign=1 if fit.gamma >= 0 else -1,
        leakage=fock.leakage(state),
    )


def condition_on(weta: MultiModeState, n: int, *, w: float = 0.0, eta: float = 0.0) -> CubicAncilla:
    """Mode 2 von |w,η⟩ nach dem (vorgegebenen) Zählergebnis n an Mode 1."""
    bra = np.zeros(weta.cutoffs[0], dtype=np.complex128)
    if not 0 <= n < weta.cutoffs[0]:
        raise TruncationError(f"n = {n} außerhalb des cutoffs {weta.cutoffs[0]}")
    bra[n] = 1.0
    return _conditional_ancilla(fock.project_mode(weta, 0, bra), n, w, eta)


def conditional_cubic_state(
    weta: MultiModeState, rng: np.random.Generator, *, w: float = 0.0, eta: float = 0.0
) -> CubicAncilla:
    """Photonenzählung an Mode 1; n = 0 wirft ConditioningError (der Aufrufer wiederholt)."""
    record = detector.photon_count_pvm(weta, 0, rng)
    n = int(record.outcome)
    if n == 0:
        raise ConditioningError("Ergebnis n = 0: γ′ ist nicht definiert")
    return _conditional_ancilla(record.remainder.amplitudes, n, w, eta)


# -------------------- regularisierter idealer Zustand --------------------

def _regularized_profile(gamma: float, sigma: float) -> Profile:
    scale = (2 * np.pi * sigma ** 2) ** -0.25

    def profile(q: np.ndarray) -> np.ndarray:
        q = np.asarray(q, dtype=float)
        return scale * np.exp(-q ** 2 / (4 * sigma ** 2) + 1j * gamma * q ** 3)

    return profile


def regularized_cubic_state(gamma: float, sigma: float, cutoff: int) -> CubicAncilla:
    """
    ∫dq exp(iγq³)·G_σ(q)|q⟩ mit Gauß-Hülle der Breite σ, projiziert auf die
    ersten `cutoff` Fock-Niveaus (Gitterquadratur, verfeinert bis zur Konvergenz).
    """
    if sigma <= 0:
        raise ParameterError("sigma muss > 0 sein")
    action = abs(gamma) * sigma ** 3
    if action > setting("max_cubic_action"):
        raise TruncationError(f"|γ|σ³ = {action:.3g} überschreitet max_cubic_action = {setting('max_cubic_action')}")
    profile = _regularized_profile(gamma, sigma)
    tol = setting("grid_norm_tolerance")
    prev = None
    for refinement in range(int(setting("grid_max_refinements")) + 1):
        grid = fock.adaptive_grid(cutoff, refinement=refinement)
        amps = fock.hermite_functions(grid.points, cutoff) @ profile(grid.points) * grid.spacing
        if prev is not None and float(np.max(np.abs(amps - prev))) < tol:
            break
        prev = amps
    else:
        raise GridError(f"Quadratur für γ = {gamma:g}, σ = {sigma:g} konvergiert nicht bei cutoff {cutoff}")

    state = MultiModeState(amps, (cutoff,), is_normalized=False).normalized()
    leak = fock.leakage(state)
    if leak > setting("leakage_tolerance"):
        log.info("regularisierte Ancilla γ = %g, σ = %g: Fock-Leakage %.3g bei cutoff %d "
                 "(Ortsdarstellung bleibt exakt)", gamma, sigma, leak, cutoff)
    return CubicAncilla(
        state=state,
        gamma_effective=abs(gamma),
        provenance=RegularizedProvenance("regularized", gamma=gamma, envelope_sigma=sigma),
        phase_sign=1 if gamma >= 0 else -1,
        leakage=leak,
        profile=profile,
    )


def squeeze_rescale(ancilla: CubicAncilla, target_gamma: float) -> CubicAncilla:
    """S(η) mit q̂ → e^{−η}q̂ skaliert γ auf γ·e^{3η}; η = ln(target/γ)/3."""
    if ancilla.gamma_effective == 0 or np.sign(target_gamma) != ancilla.phase_sign:
        raise ParameterError("Umskalieren braucht γ ≠ 0 und gleiches Vorzeichen")
    eta = float(np.log(abs(target_gamma) / ancilla.gamma_effective) / 3)
    d = ancilla.state.cutoffs[0]
    state = fock.apply(ancilla.state, clifford.squeeze_one(eta, d))
    profile = None
    if ancilla.profile is not None:
        old = ancilla.profile

        def profile(q: np.ndarray) -> np.ndarray:
            return np.exp(eta / 2) * old(np.exp(eta) * np.asarray(q, dtype=float))

    provenance = ancilla.provenance
    if isinstance(provenance, RegularizedProvenance):
        provenance = RegularizedProvenance("regularized", gamma=target_gamma,
                                           envelope_sigma=provenance.envelope_sigma * np.exp(-eta))
    return CubicAncilla(
        state=state,
        gamma_effective=abs(target_gamma),
        provenance=provenance,
        phase_sign=ancilla.phase_sign,
        leakage=fock.leakage(state),
        profile=profile,
    )


# -------------------- Gatter --------------------

def direct_cubic(gamma: float, cutoff: int) -> ModeOperator:
    """V_γ = exp(iγq̂³) als Funktion des abgeschnittenen q̂."""
    return fock.function_of_position(lambda q: np.exp(1j * gamma * q ** 3), cutoff)


def correction_gate(a: float, gamma: float) -> GateParam:
    """U(a) = exp(iγ(q̂³ − (q̂+a)³)) = exp(i(−3γa·q̂² − 3γa²·q̂ − γa³))."""
    return GateParam("quadratic_phase", (-3 * gamma * a, -3 * gamma * a ** 2, -gamma * a ** 3))


def correction_u(a: float, gamma: float, cutoff: int) -> ModeOperator:
    return clifford.build(correction_gate(a, gamma), cutoff)


def _ancilla_profile(ancilla: CubicAncilla) -> Profile:
    if ancilla.profile is not None:
        return ancilla.profile
    amps = ancilla.state.amplitudes
    d = ancilla.state.cutoffs[0]
    return lambda q: np.tensordot(amps, fock.hermite_functions(q, d), axes=(0, 0))


def _sample_ancilla_position(ancilla: CubicAncilla, rng: np.random.Generator) -> float:
    if isinstance(ancilla.provenance, RegularizedProvenance) and ancilla.profile is not None:
        return float(rng.normal(0.0, ancilla.provenance.envelope_sigma))
    return detector.sample_position(ancilla.state, 0, rng)[0]


def _position_backend(
    inp: MultiModeState, ancilla: CubicAncilla, rng: np.random.Generator,
    resolution: float, forced: float | None,
) -> tuple[float, MultiModeState, float]:
    """
    Ziel-Mode in Ortsdarstellung: nach SUM⁻¹ und Messung a erhält der Eingang
    F_a(q̂) = ∫ b(y − a)* ψ_anc(y + q̂) dy, ausgewertet an den Eigenwerten von q̂.
    """
    d = inp.cutoffs[0]
    x, v = fock.position_eigensystem(d)
    weights = np.abs(v.conj().T @ inp.amplitudes) ** 2
    weights = weights / weights.sum()
    profile = _ancilla_profile(ancilla)
    if forced is None:
        k = int(rng.choice(d, p=weights))
        a = _sample_ancilla_position(ancilla, rng) - float(x[k])
    else:
        a = float(forced)
    density = float(weights @ (np.abs(profile(a + x)) ** 2))

    t, w = hermgauss(int(setting("bin_quadrature_nodes")))
    ys = a + 2.0 * resolution * t
    kernel = (profile(ys[None, :] + x[:, None]) * w[None, :]).sum(axis=1)
    out = fock.apply(inp, fock.function_of_position(lambda _: kernel, d))
    if out.norm() == 0.0:
        raise GridError(f"Ergebnis a = {a:.4g} liegt außerhalb des Ancilla-Trägers")
    return a, out.normalized(), density


def _fock_backend(
    inp: MultiModeState, ancilla: CubicAncilla, rng: np.random.Generator,
    resolution: float, forced: float | None,
) -> tuple[float, MultiModeState, float]:
    if inp.cutoffs != ancilla.state.cutoffs:
        raise DimensionMismatchError(f"Eingang {inp.cutoffs} und Ancilla {ancilla.state.cutoffs} passen nicht zusammen")
    d = inp.cutoffs[0]
    joint = fock.tensor(inp, ancilla.state)
    joint = fock.apply(joint, clifford.sum_inverse((d, d)), (0, 1))
    record = detector.homodyne_measure(joint, 1, rng, resolution, forced=forced)
    return float(record.outcome), record.remainder, float(record.probability)


def cubic_phase_gate(
    inp: MultiModeState,
    ancilla: CubicAncilla,
    rng: np.random.Generator,
    homodyne_resolution: float | None = None,
    backend: Backend = "position",
    forced_outcome: float | None = None,
) -> ProtocolTrace:
    """
    Führt SUM⁻¹ → Ortsmessung am Ziel → U(a) aus; jedes Ergebnis a wird korrigiert,
    es gibt keinen Abbruchzweig. oracle_fidelity vergleicht mit V_γ·Eingang.
    """
    if inp.n_modes != 1:
        raise DimensionMismatchError("Eingang muss ein Ein-Moden-Zustand sein")
    fock.require_normalized(inp, "Eingang")
    resolution = setting("homodyne_resolution") if homodyne_resolution is None else homodyne_resolution
    if backend == "position":
        a, control, density = _position_backend(inp, ancilla, rng, resolution, forced_outcome)
    elif backend == "fock":
        a, control, density = _fock_backend(inp, ancilla, rng, resolution, forced_outcome)
    else:
        raise ParameterError(f"Unbekanntes Backend: {backend!r}")

    d = inp.cutoffs[0]
    gamma = ancilla.gamma
    gate = correction_gate(a, gamma)
    output = fock.apply(control, correction_u(a, gamma, d)).normalized()
    oracle = fock.apply(inp, direct_cubic(gamma, d)).normalized()
    return ProtocolTrace(
        measured_a=a,
        correction_applied=gate,
        output=output,
        oracle_fidelity=fock.fidelity(output, oracle),
        outcome_density=density,
        leakage=fock.leakage(output),
    )
