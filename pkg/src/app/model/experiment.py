from __future__ import annotations
import copy
from dataclasses import dataclass, field
from typing import Any, Literal

SCHEMA_VERSION = 1

ExperimentName = Literal["undercount", "scaling", "cubic-gate", "kerr", "pointer", "conditional", "gates"]
EXPERIMENTS: tuple[str, ...] = ("undercount", "scaling", "cubic-gate", "kerr", "pointer", "conditional", "gates")

# Abschnittsname in der Konfiguration je Experiment
SECTION = {name: name.replace("-", "_") for name in EXPERIMENTS}


@dataclass
class ExperimentConfig:
    experiment: ExperimentName
    seed: int
    params: dict[str, Any]
    simulation: dict[str, Any]
    threads: int = 1
    output_format: Literal["json", "csv"] = "json"

    @classmethod
    def from_config(cls, experiment: str, cfg: dict) -> "ExperimentConfig":
        return cls(
            experiment=experiment,  # type: ignore[arg-type]
            seed=int(cfg["run"]["seed"]),
            params=dict(cfg[SECTION[experiment]]),
            simulation=dict(cfg["simulation"]),
            threads=int(cfg["run"]["threads"]),
            output_format=cfg["run"]["format"],
        )

    def echo(self) -> dict:
        return {
            "experiment": self.experiment,
            "seed": self.seed,
            "params": copy.deepcopy(self.params),
            "simulation": copy.deepcopy(self.simulation),
        }


@dataclass
class Tolerance:
    name: str
    passed: bool
    detail: str = ""


@dataclass
class ExperimentReport:
    config: dict
    tables: dict[str, list[dict[str, Any]]] = field(default_factory=dict)
    fits: dict[str, dict[str, float]] = field(default_factory=dict)
    diagnostics: dict[str, Any] = field(default_factory=dict)
    tolerances: list[Tolerance] = field(default_factory=list)
    schema_version: int = SCHEMA_VERSION

    @property
    def passed(self) -> bool:
        return all(t.passed for t in self.tolerances)

    def check(self, name: str, passed: bool, detail: str = "") -> bool:
        self.tolerances.append(Tolerance(name=name, passed=bool(passed), detail=detail))
        return bool(passed)


@dataclass(frozen=True)
class PowerLawFit:
    """OLS-Gerade durch (log x, log y): y ∝ x^slope."""
    slope: float
    intercept: float
    slope_stderr: float
    r_value: float
    n_points: int

    def interval(self, sigmas: float) -> tuple[float, float]:
        return self.slope - sigmas * self.slope_stderr, self.slope + sigmas * self.slope_stderr

    def as_dict(self, sigmas: float | None = None) -> dict[str, float]:
        out = {
            "slope": self.slope,
            "intercept": self.intercept,
            "slope_stderr": self.slope_stderr,
            "r_value": self.r_value,
            "n_points": self.n_points,
        }
        if sigmas is not None:
            lo, hi = self.interval(sigmas)
            out.update({"ci_low": lo, "ci_high": hi, "ci_sigmas": sigmas})
        return out
