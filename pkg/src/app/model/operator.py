from __future__ import annotations
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import sparse

from app.errors import DimensionMismatchError, ParameterError


@dataclass(frozen=True)
class SpectralForm:
    """
    Faktorisierte Darstellung U = B · diag(phases) · B†  mit B = B_1 ⊗ ... ⊗ B_k.

    `phases` hat die Form (d_1, ..., d_k). Wird für Zwei-Moden-Gatter benutzt,
    deren dichte Matrix (d_i·d_j)² zu groß würde (SUM bei cutoff 64+).
    """
    bases: tuple[np.ndarray, ...]
    phases: np.ndarray


@dataclass(frozen=True, eq=False)
class ModeOperator:
    """
    Operator auf einer Mode (arity 1) oder einem Modenpaar (arity 2).

    `data` ist dicht (ndarray) oder dünn besetzt (scipy.sparse); alternativ trägt
    `spectral` eine faktorisierte Form, die `matrix` erst bei Bedarf ausrechnet.
    """
    cutoffs: tuple[int, ...]
    data: np.ndarray | sparse.sparray | None = None
    spectral: SpectralForm | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "cutoffs", tuple(int(d) for d in self.cutoffs))
        if len(self.cutoffs) not in (1, 2):
            raise DimensionMismatchError("Nur Ein- und Zwei-Moden-Operatoren werden unterstützt")
        if self.data is None and self.spectral is None:
            raise ParameterError("ModeOperator braucht Matrix oder Spektralform")
        dim = self.dim
        if self.data is not None and self.data.shape != (dim, dim):
            raise DimensionMismatchError(f"Matrixform {self.data.shape} passt nicht zu cutoffs {self.cutoffs}")

    @property
    def arity(self) -> int:
        return len(self.cutoffs)

    @property
    def dim(self) -> int:
        return int(np.prod(self.cutoffs))

    @property
    def is_sparse(self) -> bool:
        return self.data is not None and sparse.issparse(self.data)

    @cached_property
    def matrix(self) -> np.ndarray | sparse.sparray:
        if self.data is not None:
            return self.data
        basis = self.spectral.bases[0]
        for b in self.spectral.bases[1:]:
            basis = np.kron(basis, b)
        return (basis * self.spectral.phases.reshape(-1)) @ basis.conj().T

    def dense(self) -> np.ndarray:
        m = self.matrix
        return m.toarray() if sparse.issparse(m) else np.asarray(m)

    def __matmul__(self, other: "ModeOperator") -> "ModeOperator":
        if self.cutoffs != other.cutoffs:
            raise DimensionMismatchError(f"cutoffs {self.cutoffs} und {other.cutoffs} passen nicht zusammen")
        return ModeOperator(self.cutoffs, data=self.matrix @ other.matrix)

    def unitarity_error(self) -> float:
        m = self.dense()
        return float(np.max(np.abs(m.conj().T @ m - np.eye(self.dim))))
