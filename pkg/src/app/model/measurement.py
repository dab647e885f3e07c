from __future__ import annotations
from dataclasses import dataclass
from typing import Literal

from app.errors import MeasurementError, ParameterError
from app.model.state import MultiModeState

DetectorModel = Literal["pvm", "itd", "multiplexed", "kerr", "pointer", "homodyne"]


@dataclass(frozen=True)
class DetectorConfig:
    """Gewähltes Messmodell samt Parametern."""
    model: DetectorModel
    n_modes: int = 1
    chi_t: float = 0.0
    delta_phi: float = 0.0
    lambda_t: float = 0.0
    delta_p: float = 0.0
    resolution: float | None = None

    def __post_init__(self) -> None:
        if self.model == "multiplexed" and self.n_modes < 1:
            raise MeasurementError("n_modes muss >= 1 sein")
        if self.model == "kerr" and (self.chi_t <= 0 or self.delta_phi <= 0):
            raise MeasurementError("Kerr braucht chi_t > 0 und delta_phi > 0")
        if self.model == "pointer" and (self.lambda_t <= 0 or self.delta_p <= 0):
            raise MeasurementError("Pointer braucht lambda_t > 0 und delta_p > 0")
        if self.resolution is not None and self.resolution <= 0:
            raise MeasurementError("resolution muss > 0 sein")

    @property
    def tag(self) -> str:
        if self.model == "multiplexed":
            return f"multiplexed(N={self.n_modes})"
        if self.model == "kerr":
            return f"kerr(chi_t={self.chi_t:g}, delta_phi={self.delta_phi:g})"
        if self.model == "pointer":
            return f"pointer(lambda_t={self.lambda_t:g}, delta_p={self.delta_p:g})"
        return self.model


@dataclass(frozen=True)
class MeasurementRecord:
    """
    Ergebnis einer Messung.

    outcome      : int (Zählmodelle) oder float (Phase, Impuls, Ort)
    probability  : Wahrscheinlichkeit bzw. Dichte bei kontinuierlichem Ergebnis
    post_state   : normierter Zustand nach der Messung (alle Moden)
    inferred     : abgeleitete Photonenzahl (Kerr/Pointer), sonst None
    remainder    : Zustand der nicht gemessenen Moden, falls die gemessene Mode
                   nach der Messung faktorisiert (Homodyn-Bin, absorbierte Photonen)
    """
    outcome: int | float | str
    probability: float
    post_state: MultiModeState
    model_tag: str
    inferred: int | None = None
    remainder: MultiModeState | None = None

    def __post_init__(self) -> None:
        if self.probability < 0:
            raise ParameterError("Wahrscheinlichkeit/Dichte darf nicht negativ sein")
