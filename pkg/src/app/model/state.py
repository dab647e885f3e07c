from __future__ import annotations
from dataclasses import dataclass, field

import numpy as np

from app.errors import DimensionMismatchError, GridError, NormalizationError, TruncationError

NORM_TOLERANCE = 1e-12


@dataclass(frozen=True)
class MultiModeState:
    """
    Reiner Zustand über n abgeschnittenen Ein-Moden-Fock-Räumen.

    `amplitudes` hat die Form (d_1, ..., d_n); Mode i hält höchstens d_i - 1 Photonen.
    Instanzen werden nie verändert, jede Operation liefert einen neuen Zustand.
    """
    amplitudes: np.ndarray
    cutoffs: tuple[int, ...] = field(default=())
    is_normalized: bool = True

    def __post_init__(self) -> None:
        amps = np.asarray(self.amplitudes, dtype=np.complex128)
        cutoffs = tuple(int(d) for d in (self.cutoffs or amps.shape))
        if any(d < 2 for d in cutoffs):
            raise TruncationError(f"cutoffs müssen >= 2 sein, erhalten {cutoffs}")
        if amps.shape != cutoffs:
            raise DimensionMismatchError(f"Amplituden-Form {amps.shape} passt nicht zu cutoffs {cutoffs}")
        if self.is_normalized:
            norm2 = float(np.vdot(amps, amps).real)
            if abs(norm2 - 1.0) > NORM_TOLERANCE:
                raise NormalizationError(f"Zustand als normiert markiert, aber Σ|c|² = {norm2!r}")
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)
        object.__setattr__(self, "cutoffs", cutoffs)

    @property
    def n_modes(self) -> int:
        return len(self.cutoffs)

    def norm(self) -> float:
        return float(np.sqrt(np.vdot(self.amplitudes, self.amplitudes).real))

    def normalized(self) -> "MultiModeState":
        n = self.norm()
        if n == 0.0:
            raise NormalizationError("Nullvektor kann nicht normiert werden")
        return MultiModeState(self.amplitudes / n, self.cutoffs, is_normalized=True)


@dataclass(frozen=True)
class QuadratureGrid:
    """Gleichabständiges Ortsgitter (ħ = 1, dimensionslose Quadratur q)."""
    points: np.ndarray
    spacing: float

    def __post_init__(self) -> None:
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 1 or pts.size < 2:
            raise GridError("Gitter braucht mindestens zwei Punkte")
        steps = np.diff(pts)
        if np.any(steps <= 0) or np.max(np.abs(steps - self.spacing)) > 1e-12 * max(1.0, abs(self.spacing)) * pts.size:
            raise GridError("Gitterpunkte müssen streng steigend mit konstantem Abstand sein")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @classmethod
    def symmetric(cls, half_width: float, n_points: int, center: float = 0.0) -> "QuadratureGrid":
        pts, step = np.linspace(center - half_width, center + half_width, n_points, retstep=True)
        return cls(points=pts, spacing=float(step))

    def __len__(self) -> int:
        return int(self.points.size)
