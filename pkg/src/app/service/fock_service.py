# src/app/service/fock_service.py
"""
Zustands- und Operatoralgebra im abgeschnittenen Fock-Raum.

Konvention: ħ = 1, q̂ = (â + â†)/√2, p̂ = −i(â − â†)/√2.
Gatter werden über die Spektralzerlegung hermitescher Generatoren gebaut,
damit sie beim jeweiligen cutoff exakt unitär sind.
"""
from __future__ import annotations

import logging
from functools import lru_cache
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy import linalg, sparse
from scipy.sparse import csgraph
from scipy.special import gammaln

from app.errors import (
    DimensionMismatchError,
    GridError,
    NonHermitianError,
    NormalizationError,
    ParameterError,
    TruncationError,
)
from app.model.operator import ModeOperator, SpectralForm
from app.model.state import MultiModeState, QuadratureGrid
from app.settings import setting

log = logging.getLogger(__name__)

# Wie weit ein als normiert markiertes Ergebnis von 1 abweichen darf
_FLAG_TOLERANCE = 1e-12
# Normierungs-Check vor Messungen und Fidelities
NORM_CHECK = 1e-9


def _check_cutoff(cutoff: int) -> int:
    cutoff = int(cutoff)
    if cutoff < 2:
        raise TruncationError(f"cutoff muss >= 2 sein, erhalten {cutoff}")
    return cutoff


def _wrap(amplitudes: np.ndarray, was_normalized: bool) -> MultiModeState:
    norm2 = float(np.vdot(amplitudes, amplitudes).real)
    flag = was_normalized and abs(norm2 - 1.0) <= _FLAG_TOLERANCE
    return MultiModeState(amplitudes, tuple(amplitudes.shape), is_normalized=flag)


def require_normalized(state: MultiModeState, what: str = "Zustand") -> None:
    if abs(state.norm() - 1.0) > NORM_CHECK:
        raise NormalizationError(f"{what} ist nicht normiert (‖ψ‖ = {state.norm():.12g})")


# -------------------- Zustände --------------------

def make_number_state(n: int, cutoff: int) -> MultiModeState:
    cutoff = _check_cutoff(cutoff)
    if n < 0:
        raise ParameterError(f"Photonenzahl muss >= 0 sein, erhalten {n}")
    if n >= cutoff:
        raise TruncationError(f"|{n}⟩ liegt außerhalb des abgeschnittenen Raums (cutoff {cutoff})")
    amps = np.zeros(cutoff, dtype=np.complex128)
    amps[n] = 1.0
    return MultiModeState(amps, (cutoff,))


def vacuum(cutoffs: int | Sequence[int]) -> MultiModeState:
    cutoffs = (cutoffs,) if isinstance(cutoffs, (int, np.integer)) else tuple(cutoffs)
    for d in cutoffs:
        _check_cutoff(d)
    amps = np.zeros(cutoffs, dtype=np.complex128)
    amps[(0,) * len(cutoffs)] = 1.0
    return MultiModeState(amps, cutoffs)


def superposition(levels: Iterable[int], cutoff: int, weights: Iterable[complex] | None = None) -> MultiModeState:
    """Normierte Überlagerung Σ c_n |n⟩ (gleichgewichtet, wenn keine Gewichte angegeben)."""
    levels = list(levels)
    weights = list(weights) if weights is not None else [1.0] * len(levels)
    amps = np.zeros(_check_cutoff(cutoff), dtype=np.complex128)
    for n, c in zip(levels, weights):
        if n >= cutoff:
            raise TruncationError(f"|{n}⟩ liegt außerhalb des abgeschnittenen Raums (cutoff {cutoff})")
        amps[n] += c
    return MultiModeState(amps, (cutoff,), is_normalized=False).normalized()


def coherent_state(alpha: complex, cutoff: int) -> MultiModeState:
    """Kohärenter Zustand aus der geschlossenen Poisson-Entwicklung (unabhängig von D(α))."""
    cutoff = _check_cutoff(cutoff)
    n = np.arange(cutoff)
    if alpha == 0:
        return vacuum(cutoff)
    log_mag = n * np.log(abs(alpha)) - 0.5 * gammaln(n + 1) - abs(alpha) ** 2 / 2
    amps = np.exp(log_mag) * np.exp(1j * n * np.angle(alpha))
    return MultiModeState(amps, (cutoff,), is_normalized=False).normalized()


def tensor(*states: MultiModeState) -> MultiModeState:
    amps = states[0].amplitudes
    for s in states[1:]:
        amps = np.multiply.outer(amps, s.amplitudes)
    return _wrap(np.asarray(amps), all(s.is_normalized for s in states))


# -------------------- Operatoren --------------------

@lru_cache(maxsize=64)
def _ladder(cutoff: int) -> np.ndarray:
    a = np.diag(np.sqrt(np.arange(1, cutoff, dtype=float)), k=1).astype(np.complex128)
    a.setflags(write=False)
    return a


def annihilation_matrix(cutoff: int) -> ModeOperator:
    cutoff = _check_cutoff(cutoff)
    return ModeOperator((cutoff,), data=_ladder(cutoff))


def number_operator(cutoff: int) -> ModeOperator:
    cutoff = _check_cutoff(cutoff)
    return ModeOperator((cutoff,), data=np.diag(np.arange(cutoff, dtype=np.complex128)))


def quadrature_operators(cutoff: int) -> tuple[ModeOperator, ModeOperator]:
    cutoff = _check_cutoff(cutoff)
    a = _ladder(cutoff)
    q = (a + a.conj().T) / np.sqrt(2)
    p = -1j * (a - a.conj().T) / np.sqrt(2)
    return ModeOperator((cutoff,), data=q), ModeOperator((cutoff,), data=p)


@lru_cache(maxsize=32)
def _quadrature_eigensystem(cutoff: int, which: str) -> tuple[np.ndarray, np.ndarray]:
    q, p = quadrature_operators(cutoff)
    m = q.dense() if which == "q" else p.dense()
    w, v = linalg.eigh(m)
    w.setflags(write=False)
    v.setflags(write=False)
    return w, v


def position_eigensystem(cutoff: int) -> tuple[np.ndarray, np.ndarray]:
    """Eigenwerte (Gauß-Hermite-Knoten) und Eigenvektoren des abgeschnittenen q̂."""
    return _quadrature_eigensystem(_check_cutoff(cutoff), "q")


def function_of_position(f: Callable[[np.ndarray], np.ndarray], cutoff: int) -> ModeOperator:
    """f(q̂) über die Spektralzerlegung des abgeschnittenen q̂; vertauscht exakt mit q̂."""
    x, v = position_eigensystem(cutoff)
    vals = np.asarray(f(x), dtype=np.complex128)
    return ModeOperator((cutoff,), data=(v * vals) @ v.conj().T)


def kron(op1: ModeOperator, op2: ModeOperator, as_sparse: bool = False) -> ModeOperator:
    if op1.arity != 1 or op2.arity != 1:
        raise DimensionMismatchError("kron erwartet zwei Ein-Moden-Operatoren")
    if as_sparse:
        m = sparse.kron(sparse.csr_array(op1.dense()), sparse.csr_array(op2.dense()), format="csr")
    else:
        m = np.kron(op1.dense(), op2.dense())
    return ModeOperator(op1.cutoffs + op2.cutoffs, data=m)


def identity(cutoffs: int | Sequence[int]) -> ModeOperator:
    cutoffs = (cutoffs,) if isinstance(cutoffs, (int, np.integer)) else tuple(cutoffs)
    return ModeOperator(cutoffs, data=np.eye(int(np.prod(cutoffs)), dtype=np.complex128))


# -------------------- Exponentiation --------------------

def hermitian_exponential(generator: ModeOperator, scale: float) -> ModeOperator:
    """
    exp(i·scale·G) über die Spektralzerlegung von G.

    Dünn besetzte Generatoren mit Erhaltungsgröße (Zwei-Moden-Squeezer, Strahlteiler)
    zerfallen in Zusammenhangskomponenten und werden blockweise exponentiert.
    """
    tol = setting("hermiticity_tolerance")
    if generator.is_sparse:
        return _sparse_block_exponential(generator, scale, tol)
    g = generator.dense()
    err = float(np.max(np.abs(g - g.conj().T)))
    if err > tol:
        raise NonHermitianError(f"Generator nicht hermitesch (max |G − G†| = {err:.3g})")
    w, v = linalg.eigh((g + g.conj().T) / 2)
    u = (v * np.exp(1j * scale * w)) @ v.conj().T
    return ModeOperator(generator.cutoffs, data=u)


def _sparse_block_exponential(generator: ModeOperator, scale: float, tol: float) -> ModeOperator:
    g = sparse.csr_array(generator.matrix)
    diff = g - g.conj().T
    err = float(abs(diff).max()) if diff.nnz else 0.0
    if err > tol:
        raise NonHermitianError(f"Generator nicht hermitesch (max |G − G†| = {err:.3g})")
    dim = g.shape[0]
    n_comp, labels = csgraph.connected_components(abs(g), directed=False)
    order = np.argsort(labels, kind="stable")
    bounds = np.searchsorted(labels[order], np.arange(n_comp + 1))
    rows, cols, vals = [], [], []
    for c in range(n_comp):
        idx = order[bounds[c]:bounds[c + 1]]
        block = g[idx][:, idx].toarray()
        w, v = linalg.eigh((block + block.conj().T) / 2)
        ub = (v * np.exp(1j * scale * w)) @ v.conj().T
        rows.append(np.repeat(idx, idx.size))
        cols.append(np.tile(idx, idx.size))
        vals.append(ub.ravel())
    u = sparse.csr_array(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(dim, dim),
    )
    return ModeOperator(generator.cutoffs, data=u)


def product_exponential(g1: ModeOperator, g2: ModeOperator, scale: float) -> ModeOperator:
    """exp(i·scale·G₁⊗G₂) in faktorisierter Spektralform (G₁, G₂ hermitesch, Ein-Moden)."""
    tol = setting("hermiticity_tolerance")
    eig = []
    for g in (g1, g2):
        m = g.dense()
        if np.max(np.abs(m - m.conj().T)) > tol:
            raise NonHermitianError("Faktor des Produkt-Generators nicht hermitesch")
        eig.append(linalg.eigh((m + m.conj().T) / 2))
    (w1, v1), (w2, v2) = eig
    phases = np.exp(1j * scale * np.multiply.outer(w1, w2))
    return ModeOperator(g1.cutoffs + g2.cutoffs, spectral=SpectralForm((v1, v2), phases))


# -------------------- Anwendung --------------------

def _mode_tuple(modes: int | Sequence[int], n_modes: int) -> tuple[int, ...]:
    modes = (modes,) if isinstance(modes, (int, np.integer)) else tuple(modes)
    out = tuple(int(m) % n_modes if -n_modes <= m < n_modes else -1 for m in modes)
    if any(m < 0 for m in out) or len(set(out)) != len(out):
        raise DimensionMismatchError(f"Ungültige Moden {modes} für {n_modes}-Moden-Zustand")
    return out


def _check_op_modes(state: MultiModeState, op: ModeOperator, modes: tuple[int, ...]) -> None:
    if len(modes) != op.arity:
        raise DimensionMismatchError(f"Operator wirkt auf {op.arity} Mode(n), angegeben {modes}")
    dims = tuple(state.cutoffs[m] for m in modes)
    if dims != op.cutoffs:
        raise DimensionMismatchError(f"Operator-cutoffs {op.cutoffs} passen nicht zu Moden-cutoffs {dims}")


def _apply_spectral(sf: SpectralForm, amps: np.ndarray) -> np.ndarray:
    k = len(sf.bases)
    t = amps
    for i, b in enumerate(sf.bases):
        t = np.moveaxis(np.tensordot(b.conj().T, t, axes=([1], [i])), 0, i)
    t = t * sf.phases.reshape(sf.phases.shape + (1,) * (t.ndim - k))
    for i, b in enumerate(sf.bases):
        t = np.moveaxis(np.tensordot(b, t, axes=([1], [i])), 0, i)
    return t


def _contract(state: MultiModeState, op: ModeOperator, modes: tuple[int, ...]) -> np.ndarray:
    front = tuple(range(len(modes)))
    amps = np.moveaxis(state.amplitudes, modes, front)
    if op.data is None:
        out = _apply_spectral(op.spectral, amps)
    else:
        shape = amps.shape
        out = np.asarray(op.matrix @ amps.reshape(op.dim, -1)).reshape(shape)
    return np.moveaxis(out, front, modes)


def apply(state: MultiModeState, op: ModeOperator, modes: int | Sequence[int] = 0) -> MultiModeState:
    modes = _mode_tuple(modes, state.n_modes)
    _check_op_modes(state, op, modes)
    return _wrap(_contract(state, op, modes), state.is_normalized)


def expectation(state: MultiModeState, op: ModeOperator, modes: int | Sequence[int] = 0) -> complex:
    modes = _mode_tuple(modes, state.n_modes)
    _check_op_modes(state, op, modes)
    return complex(np.vdot(state.amplitudes, _contract(state, op, modes)))


def variance(state: MultiModeState, op: ModeOperator, modes: int | Sequence[int] = 0) -> float:
    mean = expectation(state, op, modes).real
    sq = expectation(state, op @ op, modes).real
    return sq - mean ** 2


def fidelity(s1: MultiModeState, s2: MultiModeState) -> float:
    if s1.cutoffs != s2.cutoffs:
        raise DimensionMismatchError(f"cutoffs {s1.cutoffs} und {s2.cutoffs} passen nicht zusammen")
    require_normalized(s1, "Erster Zustand")
    require_normalized(s2, "Zweiter Zustand")
    return float(min(1.0, abs(np.vdot(s1.amplitudes, s2.amplitudes)) ** 2))


# -------------------- Marginale, Projektion, Leakage --------------------

def marginal_probabilities(state: MultiModeState, mode: int = 0) -> np.ndarray:
    (mode,) = _mode_tuple(mode, state.n_modes)
    probs = np.abs(state.amplitudes) ** 2
    axes = tuple(i for i in range(state.n_modes) if i != mode)
    return probs.sum(axis=axes) if axes else probs


def leakage(state: MultiModeState, window: float | None = None) -> float:
    """Größte Wahrscheinlichkeitsmasse in den obersten `window`-Anteilen der Fock-Niveaus einer Mode."""
    window = setting("leakage_window") if window is None else window
    norm2 = state.norm() ** 2 or 1.0
    worst = 0.0
    for mode, d in enumerate(state.cutoffs):
        top = max(1, int(np.ceil(window * d)))
        worst = max(worst, float(marginal_probabilities(state, mode)[d - top:].sum() / norm2))
    return worst


def warn_if_leaky(state: MultiModeState, what: str) -> float:
    value = leakage(state)
    if value > setting("leakage_tolerance"):
        log.warning("%s: Leakage %.3g am Rand des Fock-Raums (cutoffs %s)", what, value, state.cutoffs)
    return value


def project_mode(state: MultiModeState, mode: int, bra: np.ndarray) -> np.ndarray:
    """Kontrahiert Mode `mode` mit ⟨bra| und liefert die Amplituden der übrigen Moden."""
    (mode,) = _mode_tuple(mode, state.n_modes)
    bra = np.asarray(bra, dtype=np.complex128)
    if bra.shape != (state.cutoffs[mode],):
        raise DimensionMismatchError(f"bra der Länge {bra.shape} passt nicht zu cutoff {state.cutoffs[mode]}")
    return np.tensordot(bra.conj(), state.amplitudes, axes=([0], [mode]))


def embed_mode(rest: np.ndarray, mode: int, single: np.ndarray) -> np.ndarray:
    """Umkehrung von project_mode für Produktzustände: fügt `single` an Position `mode` ein."""
    single = np.asarray(single, dtype=np.complex128)
    out = np.multiply.outer(single, np.asarray(rest, dtype=np.complex128))
    return np.moveaxis(out, 0, mode)


def trim_mode(state: MultiModeState, mode: int, floor: float = 0.0) -> MultiModeState:
    """Schneidet leere obere Niveaus einer Mode ab (nur Masse <= floor wird verworfen)."""
    (mode,) = _mode_tuple(mode, state.n_modes)
    probs = marginal_probabilities(state, mode)
    occupied = np.flatnonzero(probs > floor)
    top = int(occupied[-1]) + 1 if occupied.size else 1
    keep = max(2, top)
    if keep >= state.cutoffs[mode]:
        return state
    amps = np.take(state.amplitudes, np.arange(keep), axis=mode)
    return _wrap(amps, False)


# -------------------- Ortsdarstellung --------------------

def hermite_functions(x: np.ndarray, cutoff: int) -> np.ndarray:
    """φ_n(x) für n < cutoff über die stabile Drei-Term-Rekursion; Form (cutoff, len(x))."""
    x = np.asarray(x, dtype=float)
    phi = np.zeros((cutoff,) + x.shape)
    phi[0] = np.pi ** -0.25 * np.exp(-x ** 2 / 2)
    if cutoff > 1:
        phi[1] = np.sqrt(2.0) * x * phi[0]
    for n in range(1, cutoff - 1):
        phi[n + 1] = np.sqrt(2.0 / (n + 1)) * x * phi[n] - np.sqrt(n / (n + 1)) * phi[n - 1]
    return phi


def adaptive_grid(cutoff: int, center: float = 0.0, margin: float = 0.0, refinement: int = 0) -> QuadratureGrid:
    """Gitter über ±(4√cutoff + margin) um `center`; jede Verfeinerung verdoppelt die Punktzahl."""
    half = 4.0 * np.sqrt(cutoff) + margin
    points = setting("grid_points_per_level") * cutoff * 2 ** refinement
    points = int(points) | 1
    if points > setting("grid_max_points"):
        raise GridError(f"Gitter mit {points} Punkten überschreitet grid_max_points")
    return QuadratureGrid.symmetric(half, points, center=center)


def wavefunction(state: MultiModeState, grid: QuadratureGrid, check: bool = True) -> np.ndarray:
    """ψ(q) = Σ_n c_n φ_n(q) auf dem Gitter (nur Ein-Moden-Zustände)."""
    if state.n_modes != 1:
        raise DimensionMismatchError("wavefunction erwartet einen Ein-Moden-Zustand")
    psi = state.amplitudes @ hermite_functions(grid.points, state.cutoffs[0])
    if check:
        total = float(np.sum(np.abs(psi) ** 2) * grid.spacing)
        expected = state.norm() ** 2
        if abs(total - expected) > setting("grid_norm_tolerance"):
            raise GridError(
                f"Gitter zu grob oder zu schmal: Σ|ψ|²Δq = {total:.9f}, erwartet {expected:.9f} "
                f"({len(grid)} Punkte über [{grid.points[0]:.3g}, {grid.points[-1]:.3g}])"
            )
    return psi


def position_density(state: MultiModeState, mode: int, grid: QuadratureGrid) -> np.ndarray:
    """Marginale Ortsdichte |ψ(q)|² der Mode `mode`, summiert über alle anderen Moden."""
    (mode,) = _mode_tuple(mode, state.n_modes)
    phi = hermite_functions(grid.points, state.cutoffs[mode])
    amps = np.moveaxis(state.amplitudes, mode, 0).reshape(state.cutoffs[mode], -1)
    psi = phi.T @ amps
    return np.sum(np.abs(psi) ** 2, axis=1)
