from typing import Dict, List, Optional

from pydantic import BaseModel, Field, field_validator

from core.config import settings
from models.design_model import (
    ContrastSpec,
    FactorialStructure,
    SplitPlotDesign,
    parse_level,
    parse_treatment,
    serialize_level,
    serialize_treatment,
)


class DesignDocument(BaseModel):
    """
    JSON-схема дизайна. Уровни записываются строками вида "0-1".

    Dictionaries are emitted in level order, so a canonical document
    survives load and save byte for byte.
    """
    schema_version: str = Field(
        default_factory=lambda: settings.app_settings.schema_version,
        description="Версия схемы"
    )
    z1_levels: List[str] = Field(..., description="Комбинации уровней факторов делянок", examples=[["0", "1"]])
    z2_levels: List[str] = Field(..., description="Комбинации уровней факторов субделянок", examples=[["0", "1"]])
    whole_plot_sizes: List[int] = Field(..., description="M_1..M_W", examples=[[8, 8, 12, 12]])
    r1: Dict[str, int] = Field(..., description="Число делянок на уровень z1", examples=[{"0": 2, "1": 2}])
    r2: List[Dict[str, int]] = Field(..., description="Число субделянок на уровень z2 в каждой делянке")

    @field_validator('z1_levels', 'z2_levels')
    @classmethod
    def validate_levels(cls, v: List[str]) -> List[str]:
        return [serialize_level(parse_level(level)) for level in v]

    def to_domain(self) -> SplitPlotDesign:
        structure = FactorialStructure(
            z1_levels=tuple(parse_level(level) for level in self.z1_levels),
            z2_levels=tuple(parse_level(level) for level in self.z2_levels),
        )
        return SplitPlotDesign(
            structure=structure,
            whole_plot_sizes=tuple(self.whole_plot_sizes),
            r1={parse_level(key): value for key, value in self.r1.items()},
            r2=tuple({parse_level(key): value for key, value in plot.items()} for plot in self.r2),
        )

    @classmethod
    def from_domain(cls, design: SplitPlotDesign) -> 'DesignDocument':
        structure = design.structure

        def ordered(counts, levels):
            known = [serialize_level(level) for level in levels if level in counts]
            extra = sorted(serialize_level(level) for level in counts if level not in levels)
            lookup = {serialize_level(level): value for level, value in counts.items()}
            return {key: lookup[key] for key in known + extra}

        return cls(
            z1_levels=[serialize_level(level) for level in structure.z1_levels],
            z2_levels=[serialize_level(level) for level in structure.z2_levels],
            whole_plot_sizes=list(design.whole_plot_sizes),
            r1=ordered(design.r1, structure.z1_levels),
            r2=[ordered(plot, structure.z2_levels) for plot in design.r2],
        )


class ContrastDocument(BaseModel):
    """Коэффициенты контраста по ключам 'z1|z2'"""
    g: Dict[str, float] = Field(
        ...,
        examples=[{"0|0": 0.25, "0|1": -0.25, "1|0": -0.25, "1|1": 0.25}]
    )

    def to_domain(self) -> ContrastSpec:
        return ContrastSpec(g={parse_treatment(key): value for key, value in self.g.items()})

    @classmethod
    def from_domain(cls, contrast: ContrastSpec, structure: FactorialStructure) -> 'ContrastDocument':
        return cls(g={
            serialize_treatment(z1, z2): contrast.coefficient(z1, z2)
            for z1, z2 in structure.treatments()
            if contrast.coefficient(z1, z2) != 0
        })


class ValidationDocument(BaseModel):
    """Схема вывода команды validate"""
    schema_version: str = Field(default_factory=lambda: settings.app_settings.schema_version)
    valid: bool
    balanced: bool
    n_plots: int
    n_units: int
    mean_whole_plot_size: float
    violations: List[str]
    b_exists: Optional[bool] = Field(None, description="Существует ли B (только при W >= 3)")
