from __future__ import annotations
import logging
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field
from typing import Any, Callable, Generic, TypeVar

from app.errors import SimulationError

log = logging.getLogger(__name__)

T = TypeVar("T")

ProgressFn = Callable[[int, str], None]   # percent, label


@dataclass
class TrialBatch(Generic[T]):
    """Ergebnisse in Versuchsreihenfolge; fehlgeschlagene Versuche sind None."""
    results: list[T | None]
    errors: list[tuple[int, str]] = field(default_factory=list)

    @property
    def processed(self) -> int:
        return sum(r is not None for r in self.results)

    @property
    def completed_fraction(self) -> float:
        return self.processed / len(self.results) if self.results else 1.0

    def ok(self) -> list[T]:
        return [r for r in self.results if r is not None]


class TrialPool:
    """
    Führt unabhängige Versuche parallel aus (nur Ausführung, keine Auswertung).
    Jeder Versuch bekommt seinen Index; der Zufallsstrom wird vom Aufrufer daraus
    abgeleitet, daher ist das Ergebnis unabhängig von der Thread-Anzahl.
    """

    def __init__(self, threads: int = 1, label: str = "", progress: ProgressFn | None = None) -> None:
        self.threads = max(1, int(threads))
        self.label = label
        self.progress = progress

    def _emit(self, done: int, total: int) -> None:
        if self.progress is not None:
            self.progress(int(done / total * 100) if total else 100, self.label)

    def run(self, job: Callable[[int], T], n_trials: int) -> TrialBatch[T]:
        results: list[Any] = [None] * n_trials
        errors: list[tuple[int, str]] = []

        def guarded(i: int) -> tuple[int, Any, str | None]:
            try:
                return i, job(i), None
            except SimulationError as e:
                return i, None, f"{type(e).__name__}: {e}"

        if self.threads == 1:
            outcomes = (guarded(i) for i in range(n_trials))
            for done, (i, res, err) in enumerate(outcomes, start=1):
                self._collect(results, errors, i, res, err)
                self._emit(done, n_trials)
        else:
            with ThreadPoolExecutor(max_workers=self.threads) as pool:
                futures = [pool.submit(guarded, i) for i in range(n_trials)]
                for done, fut in enumerate(as_completed(futures), start=1):
                    i, res, err = fut.result()
                    self._collect(results, errors, i, res, err)
                    self._emit(done, n_trials)

        errors.sort()
        if errors:
            log.warning("%s: %d von %d Versuchen fehlgeschlagen (erster: %s)",
                        self.label or "trials", len(errors), n_trials, errors[0][1])
        return TrialBatch(results=results, errors=errors)

    @staticmethod
    def _collect(results: list, errors: list, i: int, res: Any, err: str | None) -> None:
        if err is None:
            results[i] = res
        else:
            errors.append((i, err))
