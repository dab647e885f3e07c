from __future__ import annotations
from dataclasses import dataclass
from typing import Literal

from app.errors import ParameterError

GateKind = Literal[
    "displacement", "rotation", "squeeze1", "squeeze2", "sum", "sum_inverse",
    "beamsplitter", "quadratic_phase",
]

# Anzahl der Parameter je Gatterart
_ARITY: dict[str, int] = {
    "displacement": 1,
    "rotation": 1,
    "squeeze1": 1,
    "squeeze2": 1,
    "sum": 0,
    "sum_inverse": 0,
    "beamsplitter": 1,
    "quadratic_phase": 3,
}

TWO_MODE_KINDS = {"squeeze2", "sum", "sum_inverse", "beamsplitter"}


@dataclass(frozen=True)
class GateParam:
    """Beschreibt ein Clifford-Gatter samt Parametern (α, θ, η oder (c₂, c₁, c₀))."""
    kind: GateKind
    params: tuple[complex | float, ...] = ()

    def __post_init__(self) -> None:
        if self.kind not in _ARITY:
            raise ParameterError(f"Unbekannte Gatterart: {self.kind!r}")
        object.__setattr__(self, "params", tuple(self.params))
        if len(self.params) != _ARITY[self.kind]:
            raise ParameterError(f"{self.kind} erwartet {_ARITY[self.kind]} Parameter, erhalten {len(self.params)}")
        if self.kind in ("rotation", "beamsplitter", "quadratic_phase"):
            if any(isinstance(p, complex) and p.imag != 0 for p in self.params):
                raise ParameterError(f"{self.kind} erwartet reelle Parameter")

    @property
    def arity(self) -> int:
        return 2 if self.kind in TWO_MODE_KINDS else 1

    def inverse(self) -> "GateParam":
        if self.kind == "sum":
            return GateParam("sum_inverse")
        if self.kind == "sum_inverse":
            return GateParam("sum")
        return GateParam(self.kind, tuple(-p for p in self.params))

    def as_dict(self) -> dict:
        out: dict = {"kind": self.kind}
        vals = []
        for p in self.params:
            if isinstance(p, complex):
                vals.append([p.real, p.imag])
            else:
                vals.append(float(p))
        out["params"] = vals
        return out
