# src/app/service/clifford_service.py
"""
Clifford-Gatter (lineare Optik inkl. Squeezing) als Unitäre im abgeschnittenen Fock-Raum.

Vorzeichenkonventionen (siehe DESIGN.md):
  S(η)    = exp(½(η* â² − η â†²))            reelles η > 0 staucht q̂: Var(q̂) = e^{−2η}/2
  S_ij(η) = exp(η â_i†â_j† − η* â_iâ_j)       Var(q̂_i − q̂_j) = e^{−2η}
  SUM_ij  = exp(−i q̂_i p̂_j)                  ⟨q̂_j⟩ → ⟨q̂_i⟩ + ⟨q̂_j⟩
"""
from __future__ import annotations

import logging
from functools import lru_cache
from typing import Sequence

import numpy as np
from scipy import sparse

from app.errors import TruncationError
from app.model.gate import GateParam
from app.model.operator import ModeOperator
from app.model.state import MultiModeState
from app.service import fock_service as fock
from app.settings import setting

log = logging.getLogger(__name__)


def _pair(cutoffs: int | Sequence[int]) -> tuple[int, int]:
    if isinstance(cutoffs, (int, np.integer)):
        return int(cutoffs), int(cutoffs)
    d1, d2 = cutoffs
    return int(d1), int(d2)


@lru_cache(maxsize=32)
def _sparse_ladders(d1: int, d2: int) -> tuple[sparse.csr_array, sparse.csr_array]:
    a1 = fock.kron(fock.annihilation_matrix(d1), fock.identity(d2), as_sparse=True).matrix
    a2 = fock.kron(fock.identity(d1), fock.annihilation_matrix(d2), as_sparse=True).matrix
    return a1, a2


# -------------------- Ein-Moden-Gatter --------------------

def displacement(alpha: complex, cutoff: int) -> ModeOperator:
    """D(α) = exp(αâ† − α*â)."""
    if abs(alpha) ** 2 > cutoff / 4:
        log.warning("displacement: |α|² = %.3g > cutoff/4 (cutoff %d), Leakage wahrscheinlich", abs(alpha) ** 2, cutoff)
    a = fock.annihilation_matrix(cutoff).dense()
    gen = -1j * (alpha * a.conj().T - np.conj(alpha) * a)
    return fock.hermitian_exponential(ModeOperator((cutoff,), data=gen), 1.0)


def rotation(theta: float, cutoff: int) -> ModeOperator:
    """R(θ) = exp(iθN̂)."""
    return fock.hermitian_exponential(fock.number_operator(cutoff), theta)


def _check_squeeze(eta: complex, cutoff: int, what: str) -> None:
    cap = setting("max_squeeze")
    if abs(eta) > cap:
        raise TruncationError(f"{what}: |η| = {abs(eta):.3g} überschreitet max_squeeze = {cap}")
    if np.sinh(abs(eta)) ** 2 > cutoff / 10:
        log.warning("%s: sinh²|η| = %.3g > cutoff/10 (cutoff %d), Leakage wahrscheinlich",
                    what, np.sinh(abs(eta)) ** 2, cutoff)


def squeeze_one(eta: complex, cutoff: int) -> ModeOperator:
    _check_squeeze(eta, cutoff, "squeeze_one")
    a = fock.annihilation_matrix(cutoff).dense()
    ad = a.conj().T
    gen = -1j * 0.5 * (np.conj(eta) * (a @ a) - eta * (ad @ ad))
    return fock.hermitian_exponential(ModeOperator((cutoff,), data=gen), 1.0)


def quadratic_phase(c2: float, c1: float, c0: float, cutoff: int) -> ModeOperator:
    """exp(i(c₂q̂² + c₁q̂ + c₀)) als Funktion des abgeschnittenen q̂."""
    x, _ = fock.position_eigensystem(cutoff)
    if abs(c2) * float(np.max(x)) ** 2 > 10 * cutoff:
        log.warning("quadratic_phase: |c₂| = %.3g groß gegenüber cutoff %d", abs(c2), cutoff)
    return fock.function_of_position(lambda q: np.exp(1j * (c2 * q ** 2 + c1 * q + c0)), cutoff)


# -------------------- Zwei-Moden-Gatter --------------------

def squeeze_two(eta: complex, cutoffs: int | Sequence[int]) -> ModeOperator:
    d1, d2 = _pair(cutoffs)
    _check_squeeze(eta, min(d1, d2), "squeeze_two")
    a1, a2 = _sparse_ladders(d1, d2)
    gen = -1j * (eta * (a1.conj().T @ a2.conj().T) - np.conj(eta) * (a1 @ a2))
    return fock.hermitian_exponential(ModeOperator((d1, d2), data=sparse.csr_array(gen)), 1.0)


@lru_cache(maxsize=64)
def _beamsplitter_operator(theta: float, d1: int, d2: int) -> ModeOperator:
    a1, a2 = _sparse_ladders(d1, d2)
    gen = -1j * theta * (a1.conj().T @ a2 - a1 @ a2.conj().T)
    return fock.hermitian_exponential(ModeOperator((d1, d2), data=sparse.csr_array(gen)), 1.0)


def beamsplitter(theta: float, cutoffs: int | Sequence[int]) -> ModeOperator:
    """exp(θ(â_i†â_j − â_iâ_j†)); erhält die Gesamtphotonenzahl."""
    d1, d2 = _pair(cutoffs)
    return _beamsplitter_operator(float(theta), d1, d2)


@lru_cache(maxsize=16)
def _sum_operator(d1: int, d2: int, sign: float) -> ModeOperator:
    q, _ = fock.quadrature_operators(d1)
    _, p = fock.quadrature_operators(d2)
    return fock.product_exponential(q, p, sign)


def sum_gate(cutoffs: int | Sequence[int]) -> ModeOperator:
    """SUM_ij = exp(−i q̂_i p̂_j), Steuermode i zuerst."""
    d1, d2 = _pair(cutoffs)
    return _sum_operator(d1, d2, -1.0)


def sum_inverse(cutoffs: int | Sequence[int]) -> ModeOperator:
    d1, d2 = _pair(cutoffs)
    return _sum_operator(d1, d2, 1.0)


def cross_kerr(chi_t: float, cutoffs: int | Sequence[int]) -> ModeOperator:
    """exp(−iχt N̂_i N̂_j), die Kerr-Kopplung zwischen Signal und Probe (diagonal)."""
    d1, d2 = _pair(cutoffs)
    phases = np.exp(-1j * chi_t * np.multiply.outer(np.arange(d1), np.arange(d2))).reshape(-1)
    idx = np.arange(d1 * d2)
    return ModeOperator((d1, d2), data=sparse.csr_array((phases, (idx, idx)), shape=(d1 * d2, d1 * d2)))


# -------------------- Zustände --------------------

def epr_pair(eta: float, cutoffs: int | Sequence[int]) -> MultiModeState:
    """S₁₂(η)|00⟩, endliche-η-Näherung des EPR-Zustands."""
    d1, d2 = _pair(cutoffs)
    state = fock.apply(fock.vacuum((d1, d2)), squeeze_two(eta, (d1, d2)), (0, 1))
    fock.warn_if_leaky(state, "epr_pair")
    return state


def squeezed_position_state(q: float, eta: float, cutoff: int) -> MultiModeState:
    """D(q/√2)S(η)|0⟩: ⟨q̂⟩ = q, Var(q̂) = e^{−2η}/2; für η → ∞ der Ortseigenzustand |q⟩."""
    state = fock.apply(fock.vacuum(cutoff), squeeze_one(eta, cutoff))
    state = fock.apply(state, displacement(q / np.sqrt(2), cutoff))
    fock.warn_if_leaky(state, "squeezed_position_state")
    return state


# -------------------- GateParam-Dispatch --------------------

def build(gate: GateParam, cutoffs: int | Sequence[int]) -> ModeOperator:
    cutoffs = (cutoffs,) if isinstance(cutoffs, (int, np.integer)) else tuple(cutoffs)
    d = cutoffs[0]
    if gate.kind == "displacement":
        return displacement(complex(gate.params[0]), d)
    if gate.kind == "rotation":
        return rotation(float(np.real(gate.params[0])), d)
    if gate.kind == "squeeze1":
        return squeeze_one(complex(gate.params[0]), d)
    if gate.kind == "quadratic_phase":
        c2, c1, c0 = (float(np.real(c)) for c in gate.params)
        return quadratic_phase(c2, c1, c0, d)
    pair = _pair(cutoffs if len(cutoffs) == 2 else d)
    if gate.kind == "squeeze2":
        return squeeze_two(complex(gate.params[0]), pair)
    if gate.kind == "beamsplitter":
        return beamsplitter(float(np.real(gate.params[0])), pair)
    if gate.kind == "sum":
        return sum_gate(pair)
    return sum_inverse(pair)


def symplectic_map(
    means: tuple[float, float], alpha: complex, eta: float, beta: complex
) -> tuple[float, float]:
    """
    Klassische affine Abbildung der Mittelwerte (⟨q̂⟩, ⟨p̂⟩) unter D(β)·S(η)·D(α), η reell.
    """
    q, p = means
    q, p = q + np.sqrt(2) * alpha.real, p + np.sqrt(2) * alpha.imag
    q, p = q * np.exp(-eta), p * np.exp(eta)
    return q + np.sqrt(2) * beta.real, p + np.sqrt(2) * beta.imag
