from __future__ import annotations
from dataclasses import dataclass
from typing import Callable, Literal

import numpy as np

from app.errors import DimensionMismatchError, ParameterError
from app.model.gate import GateParam
from app.model.state import MultiModeState


@dataclass(frozen=True)
class ConditionalProvenance:
    kind: Literal["conditional"]
    n: int
    w: float
    eta: float


@dataclass(frozen=True)
class RegularizedProvenance:
    kind: Literal["regularized"]
    gamma: float
    envelope_sigma: float


@dataclass(frozen=True)
class CubicAncilla:
    """
    Kubischer Phasenzustand als Ressource.

    gamma_effective ist |γ′| > 0 (bei γ = 0 der Regularisierung: 0.0, dann ist
    die Ressource ein reiner Gauß); `phase_sign` trägt das Vorzeichen.
    `profile` ist die Ortsdarstellung ψ(q), sofern geschlossen bekannt, sonst None.
    """
    state: MultiModeState
    gamma_effective: float
    provenance: ConditionalProvenance | RegularizedProvenance
    phase_sign: int = 1
    leakage: float = 0.0
    profile: Callable[[np.ndarray], np.ndarray] | None = None

    def __post_init__(self) -> None:
        if self.state.n_modes != 1:
            raise DimensionMismatchError("Ancilla muss ein Ein-Moden-Zustand sein")
        if self.gamma_effective < 0:
            raise ParameterError("gamma_effective darf nicht negativ sein")

    @property
    def gamma(self) -> float:
        return self.phase_sign * self.gamma_effective

    @property
    def calibration(self) -> float | None:
        """c in γ′ = c / √n (nur für bedingte Präparation definiert)."""
        if isinstance(self.provenance, ConditionalProvenance):
            return self.gamma_effective * float(np.sqrt(self.provenance.n))
        return None


@dataclass(frozen=True)
class ProtocolTrace:
    measured_a: float
    correction_applied: GateParam
    output: MultiModeState
    oracle_fidelity: float
    outcome_density: float = 0.0
    leakage: float = 0.0

    def __post_init__(self) -> None:
        if not -1e-9 <= self.oracle_fidelity <= 1 + 1e-9:
            raise ParameterError(f"oracle_fidelity außerhalb [0,1]: {self.oracle_fidelity}")


@dataclass(frozen=True)
class PhaseFit:
    """Polynom-Fit der entfalteten Phase arg ψ(q) über den zentralen Träger."""
    gamma: float
    coefficients: tuple[float, ...]
    residual_cubic: float
    residual_quadratic: float
    support: tuple[float, float]

    @property
    def residual_ratio(self) -> float:
        if self.residual_cubic == 0.0:
            return float("inf")
        return self.residual_quadratic / self.residual_cubic
