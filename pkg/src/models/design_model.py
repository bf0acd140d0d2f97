import math
from functools import cached_property
from typing import Dict, List, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator

from core.exceptions import DomainError

Level = Tuple[int, ...]
Treatment = Tuple[Level, Level]


def serialize_level(level: Level) -> str:
    return "-".join(str(int(i)) for i in level)


def parse_level(text: str) -> Level:
    try:
        return tuple(int(part) for part in str(text).strip().split("-"))
    except ValueError:
        raise DomainError(f"Malformed level combination '{text}', expected hyphen-joined indices like '0-1'")


def serialize_treatment(z1: Level, z2: Level) -> str:
    return f"{serialize_level(z1)}|{serialize_level(z2)}"


def parse_treatment(text: str) -> Treatment:
    parts = str(text).split("|")
    if len(parts) != 2:
        raise DomainError(f"Malformed treatment key '{text}', expected 'z1|z2'")
    return parse_level(parts[0]), parse_level(parts[1])


class FactorialStructure(BaseModel):
    """Наборы комбинаций уровней факторов целых делянок (Z1) и субделянок (Z2)"""
    model_config = ConfigDict(frozen=True)

    z1_levels: Tuple[Level, ...] = Field(..., description="Whole-plot level combinations")
    z2_levels: Tuple[Level, ...] = Field(..., description="Sub-plot level combinations")

    @field_validator('z1_levels', 'z2_levels')
    @classmethod
    def validate_levels(cls, v: Tuple[Level, ...]) -> Tuple[Level, ...]:
        if len(v) < 2:
            raise ValueError('at least two level combinations are required')
        if len(set(v)) != len(v):
            raise ValueError('level combinations must be distinct')
        return v

    @property
    def k1(self) -> int:
        return len(self.z1_levels)

    @property
    def k2(self) -> int:
        return len(self.z2_levels)

    def z1_index(self, z1: Level) -> int:
        try:
            return self.z1_levels.index(tuple(z1))
        except ValueError:
            raise DomainError(f"Unknown whole-plot level combination {serialize_level(z1)}")

    def z2_index(self, z2: Level) -> int:
        try:
            return self.z2_levels.index(tuple(z2))
        except ValueError:
            raise DomainError(f"Unknown sub-plot level combination {serialize_level(z2)}")

    def treatments(self) -> List[Treatment]:
        """Комбинации z1z2 в порядке: z1 внешний, z2 внутренний"""
        return [(z1, z2) for z1 in self.z1_levels for z2 in self.z2_levels]

    @classmethod
    def two_by_two(cls) -> "FactorialStructure":
        return cls(z1_levels=((0,), (1,)), z2_levels=((0,), (1,)))


class SplitPlotDesign(BaseModel):
    """
    Двухступенчатая рандомизация: r1(z1) целых делянок на уровень z1,
    затем r2_w(z2) субделянок внутри каждой делянки w.

    Construction does not enforce the design constraints; use
    DesignService.validate_design for the violation report.
    """
    model_config = ConfigDict(frozen=True)

    structure: FactorialStructure
    whole_plot_sizes: Tuple[int, ...] = Field(..., description="M_1..M_W, sub-plot counts")
    r1: Dict[Level, int] = Field(..., description="Whole-plot replication per z1")
    r2: Tuple[Dict[Level, int], ...] = Field(..., description="Sub-plot replication per whole plot")

    @property
    def n_plots(self) -> int:
        return len(self.whole_plot_sizes)

    @property
    def n_units(self) -> int:
        return sum(self.whole_plot_sizes)

    @property
    def m_bar(self) -> float:
        return self.n_units / self.n_plots

    @cached_property
    def plot_offsets(self) -> Tuple[int, ...]:
        offsets, total = [], 0
        for size in self.whole_plot_sizes:
            offsets.append(total)
            total += size
        return tuple(offsets)

    def plot_units(self, w: int) -> range:
        """Канонические номера единиц делянки w: подряд, в порядке объявления"""
        start = self.plot_offsets[w]
        return range(start, start + self.whole_plot_sizes[w])

    def canonical_unit_plot(self) -> Tuple[int, ...]:
        return tuple(w for w, size in enumerate(self.whole_plot_sizes) for _ in range(size))

    @cached_property
    def sizes_array(self) -> np.ndarray:
        arr = np.asarray(self.whole_plot_sizes, dtype=float)
        arr.setflags(write=False)
        return arr

    @cached_property
    def r1_array(self) -> np.ndarray:
        arr = np.array([self.r1.get(z1, 0) for z1 in self.structure.z1_levels], dtype=int)
        arr.setflags(write=False)
        return arr

    @cached_property
    def r2_array(self) -> np.ndarray:
        arr = np.array(
            [[plot.get(z2, 0) for z2 in self.structure.z2_levels] for plot in self.r2],
            dtype=int,
        )
        arr.setflags(write=False)
        return arr

    @classmethod
    def school(cls) -> "SplitPlotDesign":
        """40 школ в четырёх округах по 8, 8, 12 и 12"""
        structure = FactorialStructure.two_by_two()
        return cls(
            structure=structure,
            whole_plot_sizes=(8, 8, 12, 12),
            r1={(0,): 2, (1,): 2},
            r2=({(0,): 4, (1,): 4}, {(0,): 4, (1,): 4}, {(0,): 6, (1,): 6}, {(0,): 6, (1,): 6}),
        )


class ContrastSpec(BaseModel):
    """Коэффициенты g(z1z2) контраста; сумма равна нулю, не все нули"""
    model_config = ConfigDict(frozen=True)

    g: Dict[Treatment, float] = Field(..., description="Coefficient per treatment combination")

    @field_validator('g')
    @classmethod
    def validate_coefficients(cls, v: Dict[Treatment, float]) -> Dict[Treatment, float]:
        values = [float(c) for c in v.values()]
        if not any(values):
            raise ValueError('contrast coefficients must not all be zero')
        if any(not math.isfinite(c) for c in values):
            raise ValueError('contrast coefficients must be finite')
        if abs(math.fsum(values)) > 1e-12:
            raise ValueError(f'contrast coefficients must sum to zero, got {math.fsum(values)!r}')
        return v

    def coefficient(self, z1: Level, z2: Level) -> float:
        return float(self.g.get((tuple(z1), tuple(z2)), 0.0))

    def as_array(self, structure: FactorialStructure) -> np.ndarray:
        arr = np.zeros((structure.k1, structure.k2))
        for (z1, z2), value in self.g.items():
            arr[structure.z1_index(z1), structure.z2_index(z2)] = value
        return arr

    @classmethod
    def interaction(cls) -> "ContrastSpec":
        """{Y(00) - Y(01) - Y(10) + Y(11)} / 4"""
        return cls(g={
            ((0,), (0,)): 0.25,
            ((0,), (1,)): -0.25,
            ((1,), (0,)): -0.25,
            ((1,), (1,)): 0.25,
        })
