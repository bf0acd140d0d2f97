from functools import cached_property
from typing import Callable, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, field_validator, model_validator

from core.exceptions import DomainError
from models.design_model import Level, SplitPlotDesign


class PotentialOutcomeTable(BaseModel):
    """
    Полная таблица потенциальных исходов Y_i(z1z2), i = 0..N-1.

    y has shape (N, |Z1|, |Z2|) and is indexed by level positions in
    design.structure. The array is copied on construction and frozen.
    """
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    design: SplitPlotDesign
    unit_whole_plot: Tuple[int, ...]
    y: np.ndarray

    @field_validator('y', mode='before')
    @classmethod
    def freeze_outcomes(cls, v) -> np.ndarray:
        arr = np.array(v, dtype=float, copy=True)
        arr.setflags(write=False)
        return arr

    @model_validator(mode='after')
    def validate_table(self) -> 'PotentialOutcomeTable':
        design = self.design
        expected = (design.n_units, design.structure.k1, design.structure.k2)
        if self.y.shape != expected:
            raise ValueError(f'outcome array has shape {self.y.shape}, expected {expected}')
        if not np.all(np.isfinite(self.y)):
            raise ValueError('potential outcomes must be finite')
        if len(self.unit_whole_plot) != design.n_units:
            raise ValueError('unit_whole_plot must list every unit exactly once')
        if min(self.unit_whole_plot) < 0 or max(self.unit_whole_plot) >= design.n_plots:
            raise ValueError('unit_whole_plot references an unknown whole plot')
        counts = np.bincount(np.asarray(self.unit_whole_plot, dtype=int), minlength=design.n_plots)
        if tuple(int(c) for c in counts) != tuple(design.whole_plot_sizes):
            raise ValueError(
                f'whole-plot memberships {tuple(int(c) for c in counts)} '
                f'do not match sizes {design.whole_plot_sizes}'
            )
        return self

    @cached_property
    def plot_index(self) -> np.ndarray:
        arr = np.asarray(self.unit_whole_plot, dtype=int)
        arr.setflags(write=False)
        return arr

    def plot_units(self, w: int) -> np.ndarray:
        """Единицы делянки w в порядке возрастания номера"""
        return np.flatnonzero(self.plot_index == w)

    def value(self, i: int, z1: Level, z2: Level) -> float:
        if not 0 <= i < self.design.n_units:
            raise DomainError(f"Unknown unit {i}")
        structure = self.design.structure
        return float(self.y[i, structure.z1_index(z1), structure.z2_index(z2)])

    @classmethod
    def from_function(
            cls,
            design: SplitPlotDesign,
            outcome: Callable[[int, int, int], float]
    ) -> 'PotentialOutcomeTable':
        """Таблица по функции outcome(i, a, b) на канонической нумерации единиц"""
        k1, k2 = design.structure.k1, design.structure.k2
        y = np.array([
            [[outcome(i, a, b) for b in range(k2)] for a in range(k1)]
            for i in range(design.n_units)
        ], dtype=float)
        return cls(design=design, unit_whole_plot=design.canonical_unit_plot(), y=y)

    @classmethod
    def constant(cls, design: SplitPlotDesign, value: float) -> 'PotentialOutcomeTable':
        y = np.full((design.n_units, design.structure.k1, design.structure.k2), float(value))
        return cls(design=design, unit_whole_plot=design.canonical_unit_plot(), y=y)
