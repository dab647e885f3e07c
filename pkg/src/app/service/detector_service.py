# src/app/service/detector_service.py
"""
Messmodelle: Photonenzähl-PVM, Schwellendetektor (ITD), gemultiplexte ITD-Arrays,
Kerr-QND, Positions-Pointer und Homodyn-Messung des Ortes.

Alle Stichproben laufen über einen explizit übergebenen numpy-Generator.
"""
from __future__ import annotations

import logging
from fractions import Fraction
from math import ceil, perm

import numpy as np
from numpy.polynomial.hermite import hermgauss
from scipy.integrate import cumulative_trapezoid

from app.errors import GridError, MeasurementError, ParameterError, TruncationError
from app.model.measurement import DetectorConfig, MeasurementRecord
from app.model.state import MultiModeState
from app.service import clifford_service as clifford
from app.service import fock_service as fock
from app.settings import setting

log = logging.getLogger(__name__)

ITD_NO_CLICK = 0
ITD_CLICK = 1  # "1+"


def _level_weights(state: MultiModeState, mode: int, weights: np.ndarray) -> MultiModeState:
    """Gewichtet die Fock-Niveaus einer Mode und normiert neu."""
    shape = [1] * state.n_modes
    shape[mode] = state.cutoffs[mode]
    amps = state.amplitudes * np.asarray(weights).reshape(shape)
    out = MultiModeState(amps, state.cutoffs, is_normalized=False)
    if out.norm() == 0.0:
        raise MeasurementError("Projektion liefert den Nullvektor")
    return out.normalized()


def _remainder(post: MultiModeState, mode: int, single: np.ndarray) -> MultiModeState | None:
    if post.n_modes == 1:
        return None
    rest = fock.project_mode(post, mode, single)
    return MultiModeState(rest, is_normalized=False).normalized()


# -------------------- Photonenzählung --------------------

def photon_count_pvm(state: MultiModeState, mode: int, rng: np.random.Generator) -> MeasurementRecord:
    """Projektive Messung {|n⟩⟨n|} auf Mode `mode`."""
    fock.require_normalized(state)
    (mode,) = fock._mode_tuple(mode, state.n_modes)
    probs = fock.marginal_probabilities(state, mode)
    probs = probs / probs.sum()
    n = int(rng.choice(probs.size, p=probs))
    mask = np.zeros(probs.size)
    mask[n] = 1.0
    post = _level_weights(state, mode, mask)
    return MeasurementRecord(
        outcome=n,
        probability=float(probs[n]),
        post_state=post,
        model_tag="pvm",
        remainder=_remainder(post, mode, mask.astype(np.complex128)),
    )


def itd_pvm(state: MultiModeState, mode: int, rng: np.random.Generator) -> MeasurementRecord:
    """Schwellendetektor {|0⟩⟨0|, I − |0⟩⟨0|}; `outcome` 1 steht für "1+"."""
    fock.require_normalized(state)
    (mode,) = fock._mode_tuple(mode, state.n_modes)
    probs = fock.marginal_probabilities(state, mode)
    p0 = float(min(1.0, probs[0] / probs.sum()))
    click = ITD_CLICK if rng.random() >= p0 else ITD_NO_CLICK
    mask = np.zeros(probs.size)
    if click == ITD_NO_CLICK:
        mask[0] = 1.0
    else:
        mask[1:] = 1.0
    post = _level_weights(state, mode, mask)
    return MeasurementRecord(
        outcome=click,
        probability=p0 if click == ITD_NO_CLICK else 1.0 - p0,
        post_state=post,
        model_tag="itd",
    )


# -------------------- Multiplexing --------------------

def _tree_levels(n_modes: int) -> int:
    if n_modes < 1 or n_modes & (n_modes - 1):
        raise MeasurementError(f"Balancierter Baum braucht eine Zweierpotenz als n_modes, erhalten {n_modes}")
    return n_modes.bit_length() - 1


def _split(amps: np.ndarray) -> np.ndarray:
    """Hängt eine Vakuum-Ancilla an und mischt die letzten beiden Moden 50/50."""
    d = amps.shape[-1]
    vac = np.zeros(d, dtype=np.complex128)
    vac[0] = 1.0
    amps = np.multiply.outer(amps, vac)
    state = MultiModeState(amps, is_normalized=False)
    return fock.apply(state, clifford.beamsplitter(np.pi / 4, (d, d)), (-2, -1)).amplitudes


def _prepare_tree_input(state: MultiModeState, mode: int, n_modes: int) -> tuple[np.ndarray, int]:
    """Gemessene Mode ans Ende, auf die besetzten Niveaus gekürzt; prüft die Dimensionsgrenze."""
    (mode,) = fock._mode_tuple(mode, state.n_modes)
    levels = _tree_levels(n_modes)
    trimmed = fock.trim_mode(state, mode)
    d = trimmed.cutoffs[mode]
    rest = int(np.prod([c for i, c in enumerate(trimmed.cutoffs) if i != mode], dtype=np.int64))
    peak = rest * d ** (levels + 1)
    if peak > setting("tree_max_dimension"):
        raise TruncationError(
            f"Strahlteilerbaum mit {n_modes} Moden bei cutoff {d} braucht {peak} Amplituden "
            f"(tree_max_dimension = {setting('tree_max_dimension')})"
        )
    return np.moveaxis(trimmed.amplitudes, mode, -1), levels


def _enumerate_branches(amps: np.ndarray, levels: int, floor: float) -> list[tuple[int, np.ndarray]]:
    """
    Alle Zweige (Klicks, unnormierte Restamplituden) der Tiefensuche durch den Baum.
    An jedem Blatt wird die Photonenzahl der absorbierten Mode mitgeführt, damit
    der Rest rein bleibt; ‖Rest‖² ist die Zweigwahrscheinlichkeit.
    """
    if levels == 0:
        probs = np.abs(amps) ** 2
        probs = probs.reshape(-1, amps.shape[-1]).sum(axis=0)
        return [(int(n > 0), amps[..., n]) for n in np.flatnonzero(probs > floor)]
    amps = _split(amps)
    out = []
    for c_anc, a_anc in _enumerate_branches(amps, levels - 1, floor):
        for c_own, a_own in _enumerate_branches(a_anc, levels - 1, floor):
            out.append((c_anc + c_own, a_own))
    return out


def click_distribution(state: MultiModeState, mode: int, n_modes: int) -> np.ndarray:
    """Exakte Verteilung der Klickzahl 0..n_modes des gemultiplexten Detektors."""
    fock.require_normalized(state)
    amps, levels = _prepare_tree_input(state, mode, n_modes)
    dist = np.zeros(n_modes + 1)
    for clicks, rest in _enumerate_branches(amps, levels, setting("branch_probability_floor")):
        dist[clicks] += float(np.vdot(rest, rest).real)
    lost = 1.0 - dist.sum()
    if lost > 1e-9:
        log.debug("click_distribution: %.3g Wahrscheinlichkeit in verworfenen Zweigen", lost)
    return dist / dist.sum()


def _absorb(amps: np.ndarray, levels: int, rng: np.random.Generator) -> tuple[int, np.ndarray]:
    """Eine Trajektorie durch den Baum: ITD an jedem Blatt, dann Zählung der absorbierten Photonen."""
    if levels == 0:
        state = MultiModeState(amps, is_normalized=False).normalized()
        click = itd_pvm(state, -1, rng)
        hidden = photon_count_pvm(click.post_state, -1, rng)
        return int(click.outcome), hidden.post_state.amplitudes[..., int(hidden.outcome)]
    amps = _split(amps)
    c_anc, amps = _absorb(amps, levels - 1, rng)
    c_own, amps = _absorb(amps, levels - 1, rng)
    return c_anc + c_own, amps


def multiplexed_count(
    state: MultiModeState,
    mode: int,
    n_modes: int,
    rng: np.random.Generator,
    distribution: np.ndarray | None = None,
) -> MeasurementRecord:
    """
    Fächert Mode `mode` über einen balancierten 50/50-Baum auf `n_modes` Moden mit je
    einem ITD auf. Die gemessene Mode bleibt im Vakuum zurück.
    """
    fock.require_normalized(state)
    (mode,) = fock._mode_tuple(mode, state.n_modes)
    amps, levels = _prepare_tree_input(state, mode, n_modes)
    clicks, rest = _absorb(amps, levels, rng)
    if distribution is None:
        distribution = click_distribution(state, mode, n_modes)

    vac = np.zeros(state.cutoffs[mode], dtype=np.complex128)
    vac[0] = 1.0
    if state.n_modes == 1:
        post = MultiModeState(vac, (state.cutoffs[mode],))
        remainder = None
    else:
        remainder = MultiModeState(np.asarray(rest), is_normalized=False).normalized()
        post = MultiModeState(fock.embed_mode(remainder.amplitudes, mode, vac), state.cutoffs, is_normalized=False).normalized()
    return MeasurementRecord(
        outcome=int(clicks),
        probability=float(distribution[clicks]),
        post_state=post,
        model_tag=f"multiplexed(N={n_modes})",
        remainder=remainder,
    )


def undercount_fraction(k: int, n_modes: int) -> tuple[Fraction, Fraction]:
    """Exakte Kollisionswahrscheinlichkeit 1 − N!/(N^k (N−k)!) und Schranke k(k−1)/(2N) als Brüche."""
    if k < 0 or n_modes < 1:
        raise ParameterError(f"k >= 0 und N >= 1 erwartet, erhalten k={k}, N={n_modes}")
    bound = Fraction(k * (k - 1), 2 * n_modes)
    if k > n_modes:
        return Fraction(1), bound
    return 1 - Fraction(perm(n_modes, k), n_modes ** k), bound


def undercount_probability(k: int, n_modes: int) -> tuple[float, float]:
    exact, bound = undercount_fraction(k, n_modes)
    return float(exact), float(bound)


def smallest_array_size(k: int, epsilon: float) -> int | None:
    """Kleinstes N mit Kollisionswahrscheinlichkeit ≤ ε für k Photonen; None, wenn unerreichbar."""
    if k <= 1:
        return 1
    if epsilon <= 0:
        return None
    if epsilon >= 1:
        return 1
    target = Fraction(epsilon)
    # die Schranke k(k−1)/2N liegt über dem exakten Wert, also reicht dieses N sicher
    hi = max(k, ceil(k * (k - 1) / (2 * epsilon)))
    lo = k
    while lo < hi:
        mid = (lo + hi) // 2
        if undercount_fraction(k, mid)[0] <= target:
            hi = mid
        else:
            lo = mid + 1
    return lo


# -------------------- Kerr-QND und Pointer --------------------

def _sample_level(state: MultiModeState, mode: int, rng: np.random.Generator) -> tuple[np.ndarray, int]:
    probs = fock.marginal_probabilities(state, mode)
    probs = probs / probs.sum()
    return probs, int(rng.choice(probs.size, p=probs))


def _gaussian_post(state: MultiModeState, mode: int, distance: np.ndarray, sigma: float,
                   keep: np.ndarray) -> MultiModeState:
    """√(Gauß-Antwort) als Gewicht je Niveau, auf `keep` eingeschränkt (log-stabil)."""
    support = fock.marginal_probabilities(state, mode) > 0
    logw = -distance ** 2 / (4 * sigma ** 2)
    allowed = support & keep
    if not allowed.any():
        log.debug("Restklasse ohne Amplitude, falle auf reine Gauß-Gewichtung zurück")
        allowed = support
    logw = np.where(allowed, logw, -np.inf)
    weights = np.exp(logw - logw[allowed].max())
    return _level_weights(state, mode, weights)


def kerr_period(chi_t: float) -> int:
    period = int(np.floor(2 * np.pi / chi_t + 0.5))
    if period < 1:
        raise MeasurementError(f"chi_t = {chi_t:g} zu groß, Periode 2π/χt < 1")
    return period


def kerr_qnd_measure(
    state: MultiModeState, mode: int, chi_t: float, delta_phi: float, rng: np.random.Generator
) -> MeasurementRecord:
    """
    Kerr-Kopplung an eine Probe, auf Signalebene modelliert: φ = χt·n + N(0, Δφ) mod 2π.
    Die gefolgerte Zahl ist nur modulo round(2π/χt) bestimmt.
    """
    if chi_t <= 0 or delta_phi <= 0:
        raise MeasurementError("Kerr braucht chi_t > 0 und delta_phi > 0")
    if delta_phi >= chi_t / 2:
        raise MeasurementError(f"delta_phi = {delta_phi:g} >= chi_t/2 = {chi_t / 2:g}: Rundung mehrdeutig")
    fock.require_normalized(state)
    (mode,) = fock._mode_tuple(mode, state.n_modes)
    period = kerr_period(chi_t)
    probs, n_true = _sample_level(state, mode, rng)
    phi = float(np.mod(chi_t * n_true + rng.normal(0.0, delta_phi), 2 * np.pi))
    inferred = int(np.floor(phi / chi_t + 0.5)) % period

    levels = np.arange(probs.size)
    distance = np.mod(phi - chi_t * levels + np.pi, 2 * np.pi) - np.pi
    post = _gaussian_post(state, mode, distance, delta_phi, levels % period == inferred)

    # gefaltete Normalverteilung (Bilder −1, 0, +1)
    images = distance[:, None] + 2 * np.pi * np.array([-1.0, 0.0, 1.0])[None, :]
    kernel = np.exp(-images ** 2 / (2 * delta_phi ** 2)).sum(axis=1) / (np.sqrt(2 * np.pi) * delta_phi)
    density = float(probs @ kernel)
    return MeasurementRecord(
        outcome=phi,
        probability=density,
        post_state=post,
        model_tag=f"kerr(chi_t={chi_t:g}, delta_phi={delta_phi:g})",
        inferred=inferred,
    )


def pointer_measure(
    state: MultiModeState, mode: int, lambda_t: float, delta_p: float, rng: np.random.Generator
) -> MeasurementRecord:
    """Impuls des Pointers p = λt·n + N(0, Δp), ohne Faltung; n = round(p/λt)."""
    if lambda_t <= 0 or delta_p <= 0:
        raise MeasurementError("Pointer braucht lambda_t > 0 und delta_p > 0")
    if delta_p >= lambda_t / 2:
        raise MeasurementError(f"delta_p = {delta_p:g} >= lambda_t/2 = {lambda_t / 2:g}: Rundung mehrdeutig")
    fock.require_normalized(state)
    (mode,) = fock._mode_tuple(mode, state.n_modes)
    probs, n_true = _sample_level(state, mode, rng)
    p = float(lambda_t * n_true + rng.normal(0.0, delta_p))
    inferred = int(np.floor(p / lambda_t + 0.5))

    levels = np.arange(probs.size)
    distance = p - lambda_t * levels
    post = _gaussian_post(state, mode, distance, delta_p, np.ones(probs.size, dtype=bool))
    kernel = np.exp(-distance ** 2 / (2 * delta_p ** 2)) / (np.sqrt(2 * np.pi) * delta_p)
    return MeasurementRecord(
        outcome=p,
        probability=float(probs @ kernel),
        post_state=post,
        model_tag=f"pointer(lambda_t={lambda_t:g}, delta_p={delta_p:g})",
        inferred=inferred,
    )


def precision_check(delta_n: float, n: int, strictness: float | None = None) -> tuple[bool, float]:
    """Δn ≪ n^{1/3}: besteht, wenn Δn < ε·n^{1/3}; liefert zusätzlich Δn/n^{1/3}."""
    if n < 1:
        raise ParameterError(f"n muss >= 1 sein, erhalten {n}")
    strictness = setting("precision_strictness") if strictness is None else strictness
    ratio = float(delta_n / np.cbrt(n))
    return ratio < strictness, ratio


def kerr_probe_phase(n: int, chi_t: float, alpha: complex, probe_cutoff: int) -> float:
    """
    Phasenverschiebung einer kohärenten Probe nach exp(−iχt N̂_s N̂_p) mit Signal |n⟩,
    abgelesen aus ⟨â_p⟩ = α e^{−iχt n}; liegt in [0, 2π).
    """
    signal = fock.make_number_state(n, n + 2)
    probe = fock.coherent_state(alpha, probe_cutoff)
    joint = fock.apply(fock.tensor(signal, probe), clifford.cross_kerr(chi_t, (n + 2, probe_cutoff)), (0, 1))
    mean_a = fock.expectation(joint, fock.annihilation_matrix(probe_cutoff), 1)
    return float(np.mod(-np.angle(mean_a / alpha), 2 * np.pi))


# -------------------- Homodyn --------------------

def gaussian_bin(center: float, resolution: float, cutoff: int) -> np.ndarray:
    """
    Normierte Fock-Amplituden des Bins b(y) ∝ exp(−(y − center)²/(4r²)),
    per Gauß-Hermite-Quadratur; im abgeschnittenen Raum neu normiert.
    """
    t, w = hermgauss(int(setting("bin_quadrature_nodes")))
    y = center + 2.0 * resolution * t
    amps = (fock.hermite_functions(y, cutoff) @ w).astype(np.complex128)
    norm = np.linalg.norm(amps)
    if norm == 0.0:
        raise MeasurementError(f"Bin bei q = {center:.3g} hat keinen Überlapp mit dem Fock-Raum")
    return amps / norm


def _density_on_grid(state: MultiModeState, mode: int) -> tuple[np.ndarray, np.ndarray]:
    expected = state.norm() ** 2
    tol = setting("grid_norm_tolerance")
    last = ""
    for refinement in range(int(setting("grid_max_refinements")) + 1):
        grid = fock.adaptive_grid(state.cutoffs[mode], refinement=refinement)
        density = fock.position_density(state, mode, grid)
        total = float(density.sum() * grid.spacing)
        if abs(total - expected) <= tol:
            return grid.points, density
        last = f"Σ|ψ|²Δq = {total:.9f} bei {len(grid)} Punkten"
    raise GridError(f"Ortsdichte konvergiert nicht ({last})")


def sample_position(state: MultiModeState, mode: int, rng: np.random.Generator,
                    forced: float | None = None) -> tuple[float, float]:
    """q aus der Randdichte |ψ(q)|² der Mode (inverse Verteilungsfunktion) samt Dichte bei q."""
    (mode,) = fock._mode_tuple(mode, state.n_modes)
    points, density = _density_on_grid(state, mode)
    if forced is None:
        cdf = cumulative_trapezoid(density, points, initial=0.0)
        cdf /= cdf[-1]
        q = float(np.interp(rng.random(), cdf, points))
    else:
        q = float(forced)
    return q, float(np.interp(q, points, density, left=0.0, right=0.0))


def homodyne_measure(
    state: MultiModeState,
    mode: int,
    rng: np.random.Generator,
    resolution: float | None = None,
    forced: float | None = None,
) -> MeasurementRecord:
    """
    Ortsmessung: q aus |ψ(q)|² per inverser Verteilungsfunktion; die gemessene Mode
    wird durch den Gauß-Bin der Breite `resolution` um q ersetzt.
    `forced` setzt das Ergebnis fest (für Tabellen pro Ergebnis), die Dichte bleibt die echte.
    """
    resolution = setting("homodyne_resolution") if resolution is None else resolution
    if resolution <= 0:
        raise MeasurementError("resolution muss > 0 sein")
    fock.require_normalized(state)
    (mode,) = fock._mode_tuple(mode, state.n_modes)
    q, dens_q = sample_position(state, mode, rng, forced)

    bin_amps = gaussian_bin(q, resolution, state.cutoffs[mode])
    if state.n_modes == 1:
        post = MultiModeState(bin_amps, state.cutoffs, is_normalized=False).normalized()
        remainder = None
    else:
        rest = fock.project_mode(state, mode, bin_amps)
        if not np.any(rest):
            raise MeasurementError(f"Bin bei q = {q:.4g} ist orthogonal zum Zustand")
        remainder = MultiModeState(rest, is_normalized=False).normalized()
        post = MultiModeState(
            fock.embed_mode(remainder.amplitudes, mode, bin_amps), state.cutoffs, is_normalized=False
        ).normalized()
    return MeasurementRecord(
        outcome=q,
        probability=dens_q,
        post_state=post,
        model_tag=f"homodyne(resolution={resolution:g})",
        remainder=remainder,
    )


# -------------------- Dispatch --------------------

def measure(state: MultiModeState, mode: int, config: DetectorConfig, rng: np.random.Generator) -> MeasurementRecord:
    if config.model == "pvm":
        return photon_count_pvm(state, mode, rng)
    if config.model == "itd":
        return itd_pvm(state, mode, rng)
    if config.model == "multiplexed":
        return multiplexed_count(state, mode, config.n_modes, rng)
    if config.model == "kerr":
        return kerr_qnd_measure(state, mode, config.chi_t, config.delta_phi, rng)
    if config.model == "pointer":
        return pointer_measure(state, mode, config.lambda_t, config.delta_p, rng)
    return homodyne_measure(state, mode, rng, config.resolution)
