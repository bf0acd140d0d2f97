from typing import List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator

from core.config import settings
from api.dto.design_dto import ContrastDocument, DesignDocument
from models.design_model import ContrastSpec, SplitPlotDesign
from models.population_model import PopulationSpec

BSource = Literal["minimax", "naive", "balanced", "explicit"]


class SimulationSettings(BaseModel):
    """Параметры исследования смещений оценок дисперсии"""
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    name: str = Field("custom", description="Метка популяции (I..VIII или произвольная)")
    design: SplitPlotDesign = Field(default_factory=SplitPlotDesign.school)
    contrast: ContrastSpec = Field(default_factory=ContrastSpec.interaction)
    population: PopulationSpec
    replicates: int = Field(default_factory=lambda: settings.simulation_defaults.replicates, ge=1)
    seed: int = Field(default_factory=lambda: settings.app_settings.default_seed, ge=0, lt=2 ** 64)
    b_source: BSource = "minimax"
    b_entries: Optional[List[List[float]]] = Field(None, description="Матрица B при b_source=explicit")
    workers: int = Field(default_factory=lambda: settings.simulation_defaults.workers, ge=1)

    @model_validator(mode='after')
    def validate_settings(self) -> 'SimulationSettings':
        if self.b_source == "explicit" and self.b_entries is None:
            raise ValueError('b_entries are required when b_source is explicit')
        if self.population.n_plots != self.design.n_plots:
            raise ValueError(
                f'population describes {self.population.n_plots} whole plots, design has {self.design.n_plots}'
            )
        k = self.design.structure.k1 * self.design.structure.k2
        if self.population.n_treatments != k:
            raise ValueError(f'population has {self.population.n_treatments} treatments per unit, design has {k}')
        return self


class ReplicateRecord(BaseModel):
    replicate: int = Field(..., ge=0)
    delta: float = Field(..., description="Смещение V̂")
    delta_tilde: float = Field(..., description="Смещение Ṽ")
    ratio: Optional[float] = Field(None, description="Δ̃ / Δ; нет значения, если Δ < 1e-15")
    tau_bar: float = Field(..., description="Контраст конечной совокупности")
    wp_contrast_spread: float = Field(..., ge=0, description="max τ̄_w - min τ̄_w")
    within_plot_spread: float = Field(..., ge=0, description="Наибольший размах τ_i внутри делянки")


class BoxplotSummary(BaseModel):
    """Пять чисел для диаграммы размаха; квартили линейной интерполяцией"""
    population: str = Field(..., examples=["III"])
    estimator: Literal["v_hat", "v_tilde", "ratio"]
    min: float
    q1: float
    median: float
    q3: float
    max: float
    count: int = Field(..., ge=1)


class StudyResult(BaseModel):
    """Схема summary.json команды simulate"""
    schema_version: str = Field(
        default_factory=lambda: settings.app_settings.schema_version,
        description="Версия схемы вывода"
    )
    population: str
    seed: int
    replicates: int
    quartile_method: str = "linear"
    b_source: BSource
    b_entries: List[List[float]]
    lambda_max: float
    records: List[ReplicateRecord]
    boxplots: List[BoxplotSummary]
    median_ratio: Optional[float] = Field(None, description="Медиана Δ̃ / Δ по определённым значениям")
    missing_ratios: int = Field(..., ge=0)


class PresetDocument(BaseModel):
    """Строка таблицы настроек моделирования"""
    name: str = Field(..., examples=["III"])
    theta: List[List[float]]
    sigma2: List[float]
    rho: List[float]
    enforce_wp_means: Optional[float] = None


class SimulationConfigDocument(BaseModel):
    """Файл --config команды simulate: либо preset, либо собственная популяция"""
    preset: Optional[str] = Field(None, examples=["III"])
    name: Optional[str] = None
    design: Optional[DesignDocument] = None
    contrast: Optional[ContrastDocument] = None
    population: Optional[PopulationSpec] = None
    replicates: Optional[int] = Field(None, ge=1)
    seed: Optional[int] = Field(None, ge=0, lt=2 ** 64)
    b_source: Optional[BSource] = None
    b_entries: Optional[List[List[float]]] = None
    workers: Optional[int] = Field(None, ge=1)

    @model_validator(mode='after')
    def validate_config(self) -> 'SimulationConfigDocument':
        if (self.preset is None) == (self.population is None):
            raise ValueError('exactly one of preset and population must be given')
        return self
