# src/app/errors.py
from __future__ import annotations


class SimulationError(ValueError):
    """Basisklasse aller fachlichen Fehler des Simulators."""


class TruncationError(SimulationError):
    """Zustand oder Operator passt nicht in den abgeschnittenen Fock-Raum."""


class DimensionMismatchError(SimulationError):
    pass


class NonHermitianError(SimulationError):
    pass


class GridError(SimulationError):
    """Quadratur-Gitter zu grob oder zu schmal (Normierungscheck schlägt fehl)."""


class MeasurementError(SimulationError):
    """Ungültige Detektor-Parameter, z. B. mehrdeutige Rundung."""


class ConditioningError(SimulationError):
    """Messergebnis, für das kein bedingter Zustand definiert ist (n = 0)."""


class ConfigError(SimulationError):
    pass


class FitError(SimulationError):
    pass


class NormalizationError(SimulationError):
    """Zustand ist nicht normiert bzw. nicht normierbar (Nullvektor)."""


class ParameterError(SimulationError):
    """Parameter außerhalb des Definitionsbereichs (negativ, unbekannte Art, falsche Anzahl)."""
