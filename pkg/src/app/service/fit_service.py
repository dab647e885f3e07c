# src/app/service/fit_service.py
from __future__ import annotations

import logging
from typing import Sequence

import numpy as np
from scipy import stats

from app.errors import FitError
from app.model.experiment import PowerLawFit

log = logging.getLogger(__name__)


def fit_power_law(x: Sequence[float], y: Sequence[float]) -> PowerLawFit:
    """Kleinste Quadrate auf log–log-Punkten; Standardfehler der Steigung aus linregress."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape:
        raise FitError(f"x und y haben unterschiedliche Länge ({x.size} vs. {y.size})")
    if np.any(x <= 0) or np.any(y <= 0):
        raise FitError("Potenzgesetz-Fit braucht positive Werte")
    if np.unique(x).size < 2:
        raise FitError(f"Fit unterbestimmt: {np.unique(x).size} verschiedene Stützstelle(n)")
    res = stats.linregress(np.log(x), np.log(y))
    stderr = float(res.stderr) if x.size > 2 else 0.0
    log.debug("Potenzgesetz-Fit: Steigung %.6g ± %.3g über %d Punkte", res.slope, stderr, x.size)
    return PowerLawFit(
        slope=float(res.slope),
        intercept=float(res.intercept),
        slope_stderr=stderr,
        r_value=float(res.rvalue),
        n_points=int(x.size),
    )

