# src/app/service/rng_service.py
"""
Zufallsströme pro Versuch.

Regel: Strom(seed, k₁, …, k_m) = default_rng(SeedSequence(seed, spawn_key=(k₁, …, k_m))).
Der Schlüssel enthält Experiment-Index, Zelle und Versuchsnummer; damit hängt kein
Ergebnis von der Thread-Anzahl oder der Ausführungsreihenfolge ab.
"""
from __future__ import annotations

import numpy as np


def derive(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key)))

