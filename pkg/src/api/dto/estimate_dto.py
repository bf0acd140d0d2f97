from typing import Dict, List, Optional

from pydantic import BaseModel, Field

from core.config import settings


class EstimateReport(BaseModel):
    """Схема отчёта команды analyze"""
    schema_version: str = Field(
        default_factory=lambda: settings.app_settings.schema_version,
        description="Версия схемы вывода"
    )
    tau_hat: float = Field(
        ...,
        description="Несмещённая оценка контраста τ̂̄",
        examples=[1.02]
    )
    v_hat: float = Field(
        ...,
        ge=-1e-12,
        description="Консервативная оценка дисперсии V̂",
        examples=[0.41]
    )
    v_tilde: Optional[float] = Field(
        None,
        description="Скорректированная оценка Ṽ (без обрезки снизу); есть только при заданной B",
        examples=[0.37]
    )
    v_tilde_clamped: Optional[float] = Field(
        None,
        description="max(Ṽ, 0), если запрошено",
        examples=[0.37]
    )
    b_used: Optional[List[List[float]]] = Field(
        None,
        description="Матрица B, использованная для Ṽ"
    )
    b_provenance: Optional[str] = Field(
        None,
        description="Происхождение B",
        examples=["constructed"]
    )
    diagnostics: Dict[str, float] = Field(
        default_factory=dict,
        description="Наблюдаемые средние Ȳ^obs(z1z2) по ключам 'z1|z2'"
    )
