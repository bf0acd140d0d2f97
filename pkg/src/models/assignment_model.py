from collections import Counter
from functools import cached_property
from typing import Dict, FrozenSet, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, field_validator, model_validator

from models.design_model import Level, SplitPlotDesign


class Assignment(BaseModel):
    """
    Реализация двухступенчатой рандомизации.

    plot_z1[w] is the position of z_{1w} in structure.z1_levels;
    subplot_z2[w][k] is the z2 position given to the k-th sub-plot of
    whole plot w (k-th unit in ascending unit order).
    """
    model_config = ConfigDict(frozen=True)

    design: SplitPlotDesign
    plot_z1: Tuple[int, ...]
    subplot_z2: Tuple[Tuple[int, ...], ...]

    @model_validator(mode='after')
    def validate_assignment(self) -> 'Assignment':
        design = self.design
        if len(self.plot_z1) != design.n_plots or len(self.subplot_z2) != design.n_plots:
            raise ValueError('assignment must cover every whole plot')
        stage1 = Counter(self.plot_z1)
        for a, z1 in enumerate(design.structure.z1_levels):
            if stage1.get(a, 0) != design.r1.get(z1, 0):
                raise ValueError(f'whole-plot level {z1} assigned {stage1.get(a, 0)} times, '
                                 f'expected {design.r1.get(z1, 0)}')
        for w, labels in enumerate(self.subplot_z2):
            if len(labels) != design.whole_plot_sizes[w]:
                raise ValueError(f'whole plot {w} has {len(labels)} sub-plot labels, '
                                 f'expected {design.whole_plot_sizes[w]}')
            stage2 = Counter(labels)
            for b, z2 in enumerate(design.structure.z2_levels):
                if stage2.get(b, 0) != design.r2[w].get(z2, 0):
                    raise ValueError(f'whole plot {w}: sub-plot level {z2} assigned '
                                     f'{stage2.get(b, 0)} times, expected {design.r2[w].get(z2, 0)}')
        return self

    @property
    def key(self) -> Tuple[Tuple[int, ...], Tuple[Tuple[int, ...], ...]]:
        return self.plot_z1, self.subplot_z2

    @property
    def t1(self) -> Dict[Level, FrozenSet[int]]:
        """T1(z1): номера делянок, получивших z1"""
        return {
            z1: frozenset(w for w, a_w in enumerate(self.plot_z1) if a_w == a)
            for a, z1 in enumerate(self.design.structure.z1_levels)
        }

    @property
    def t2(self) -> Tuple[Dict[Level, FrozenSet[int]], ...]:
        """T_w2(z2) в канонической нумерации единиц"""
        result = []
        for w, labels in enumerate(self.subplot_z2):
            units = self.design.plot_units(w)
            result.append({
                z2: frozenset(units[k] for k, b_k in enumerate(labels) if b_k == b)
                for b, z2 in enumerate(self.design.structure.z2_levels)
            })
        return tuple(result)

    def z1_of(self, w: int) -> Level:
        return self.design.structure.z1_levels[self.plot_z1[w]]


class ObservedDataset(BaseModel):
    """Наблюдаемые данные: делянка, назначенные z1 и z2 и исход для каждой единицы"""
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    design: SplitPlotDesign
    unit_whole_plot: Tuple[int, ...]
    unit_z1: Tuple[int, ...]
    unit_z2: Tuple[int, ...]
    y_obs: np.ndarray

    @field_validator('y_obs', mode='before')
    @classmethod
    def freeze_outcomes(cls, v) -> np.ndarray:
        arr = np.array(v, dtype=float, copy=True)
        arr.setflags(write=False)
        return arr

    @model_validator(mode='after')
    def validate_dataset(self) -> 'ObservedDataset':
        design = self.design
        n = design.n_units
        if not (len(self.unit_whole_plot) == len(self.unit_z1) == len(self.unit_z2) == n):
            raise ValueError(f'observed data must have exactly {n} units')
        if self.y_obs.shape != (n,) or not np.all(np.isfinite(self.y_obs)):
            raise ValueError('observed outcomes must be a finite vector, one per unit')
        plots = np.asarray(self.unit_whole_plot)
        if plots.min() < 0 or plots.max() >= design.n_plots:
            raise ValueError('observed data references an unknown whole plot')
        z1 = np.asarray(self.unit_z1)
        z2 = np.asarray(self.unit_z2)
        if z1.min() < 0 or z1.max() >= design.structure.k1 or z2.min() < 0 or z2.max() >= design.structure.k2:
            raise ValueError('observed data references an unknown level combination')
        for w in range(design.n_plots):
            members = plots == w
            if int(members.sum()) != design.whole_plot_sizes[w]:
                raise ValueError(f'whole plot {w} has {int(members.sum())} units, '
                                 f'expected {design.whole_plot_sizes[w]}')
            if len(set(z1[members].tolist())) != 1:
                raise ValueError(f'units of whole plot {w} do not share one whole-plot level')
            counts = np.bincount(z2[members], minlength=design.structure.k2)
            if not np.array_equal(counts, design.r2_array[w]):
                raise ValueError(f'whole plot {w}: sub-plot counts {counts.tolist()} '
                                 f'differ from replication {design.r2_array[w].tolist()}')
        stage1 = np.bincount(self.plot_z1, minlength=design.structure.k1)
        if not np.array_equal(stage1, design.r1_array):
            raise ValueError(f'whole-plot level counts {stage1.tolist()} '
                             f'differ from replication {design.r1_array.tolist()}')
        return self

    @cached_property
    def plot_z1(self) -> np.ndarray:
        """z1-позиция каждой делянки"""
        arr = np.empty(self.design.n_plots, dtype=int)
        arr[np.asarray(self.unit_whole_plot)] = np.asarray(self.unit_z1)
        arr.setflags(write=False)
        return arr
