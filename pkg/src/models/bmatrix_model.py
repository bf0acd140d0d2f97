from functools import cached_property
from typing import Literal, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

ProvenanceKind = Literal["balanced", "three_plot", "naive_extension", "constructed", "explicit"]


class Provenance(BaseModel):
    """Как получена матрица B"""
    model_config = ConfigDict(frozen=True)

    kind: ProvenanceKind
    x: Optional[Tuple[int, ...]] = Field(None, description="Sign vector, sizes in ascending order")
    a1: Optional[float] = None
    a2: Optional[float] = None
    exhaustive: Optional[bool] = Field(
        None, description="True when the sign-vector search covered every candidate"
    )
    sort_order: Optional[Tuple[int, ...]] = Field(
        None, description="User indices of whole plots in ascending-size order"
    )


class BMatrix(BaseModel):
    """
    Симметричная W x W корректирующая матрица.

    Only the upper triangle (row-major, diagonal included) is stored, so
    the full matrix is symmetric by construction.
    """
    model_config = ConfigDict(frozen=True)

    size: int
    upper: Tuple[float, ...]
    provenance: Provenance
    eigenvalues: Tuple[float, ...]
    lambda_max: float

    @model_validator(mode='after')
    def validate_shape(self) -> 'BMatrix':
        if self.size < 2:
            raise ValueError('correction matrix must be at least 2 x 2')
        if len(self.upper) != self.size * (self.size + 1) // 2:
            raise ValueError('upper triangle length does not match matrix size')
        if len(self.eigenvalues) != self.size:
            raise ValueError('one eigenvalue per row is required')
        return self

    @cached_property
    def matrix(self) -> np.ndarray:
        full = np.zeros((self.size, self.size))
        rows, cols = np.triu_indices(self.size)
        full[rows, cols] = self.upper
        full[cols, rows] = self.upper
        full.setflags(write=False)
        return full

    @property
    def trace(self) -> float:
        return float(np.trace(self.matrix))

    @classmethod
    def from_matrix(
            cls,
            matrix: np.ndarray,
            provenance: Provenance,
            eigenvalues: Sequence[float]
    ) -> 'BMatrix':
        arr = np.asarray(matrix, dtype=float)
        rows, cols = np.triu_indices(arr.shape[0])
        values = sorted(float(v) for v in eigenvalues)
        return cls(
            size=arr.shape[0],
            upper=tuple(float(v) for v in arr[rows, cols]),
            provenance=provenance,
            eigenvalues=tuple(values),
            lambda_max=values[-1],
        )


class ASegment(BaseModel):
    """
    Допустимые (a1, a2) на прямой a1 φ1 + a2 φ2 = φ внутри симплекса.

    `start` lies on an axis (or the origin), `end` sits on a1 + a2 = 1 - margin.
    """
    model_config = ConfigDict(frozen=True)

    x: Tuple[int, ...]
    phi1: float
    phi2: float
    phi: float
    start: Tuple[float, float]
    end: Tuple[float, float]

    def point(self, t: float) -> Tuple[float, float]:
        if not 0.0 <= t <= 1.0:
            raise ValueError(f"segment parameter {t} outside [0, 1]")
        if t == 0.0:
            return self.start
        if t == 1.0:
            return self.end
        a1 = self.start[0] + t * (self.end[0] - self.start[0])
        a2 = self.start[1] + t * (self.end[1] - self.start[1])
        return max(a1, 0.0), max(a2, 0.0)

    def residual(self, a1: float, a2: float) -> float:
        return a1 * self.phi1 + a2 * self.phi2 - self.phi
