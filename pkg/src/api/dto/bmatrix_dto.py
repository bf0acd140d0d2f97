from typing import Any, Dict, List, Optional

from pydantic import BaseModel, Field

from core.config import settings


class VerificationReport(BaseModel):
    """Результат проверки условий (c1)–(c3)"""
    diagonal_ok: bool = Field(..., description="(c1) b_ww = M_w²")
    row_sums_ok: bool = Field(..., description="(c2) нулевые суммы строк")
    psd_ok: bool = Field(..., description="Минимальное собственное значение ≥ -1e-9·trace")
    rank_ok: bool = Field(..., description="(c3) ранг W - 1")
    kernel_ok: bool = Field(..., description="Вектор из единиц лежит в ядре")
    max_diagonal_error: float = Field(..., ge=0)
    max_row_sum: float = Field(..., ge=0)
    min_eigenvalue: float
    second_smallest_eigenvalue: float
    kernel_norm: float = Field(..., ge=0)
    trace: float

    @property
    def c3_ok(self) -> bool:
        return self.psd_ok and self.rank_ok

    @property
    def passed(self) -> bool:
        return self.diagonal_ok and self.row_sums_ok and self.psd_ok and self.rank_ok and self.kernel_ok


class BMatrixDocument(BaseModel):
    """Схема вывода команды construct-b"""
    schema_version: str = Field(
        default_factory=lambda: settings.app_settings.schema_version,
        description="Версия схемы вывода"
    )
    sizes: List[int] = Field(
        ...,
        description="Размеры делянок в порядке пользователя",
        examples=[[8, 8, 12, 12]]
    )
    mode: str = Field(
        ...,
        description="Способ построения",
        examples=["minimax"]
    )
    entries: List[List[float]] = Field(..., description="Матрица B")
    eigenvalues: List[float] = Field(..., description="Собственные значения по возрастанию")
    lambda_max: float = Field(..., examples=[192.0])
    lambda_lower_bound: float = Field(
        ...,
        description="λ0 = Σ M_w² / (W - 1)",
        examples=[138.66666666666666]
    )
    psd: Optional[bool] = Field(
        None,
        description="Только для mode=naive: неотрицательная определённость",
        examples=[False]
    )
    provenance: Dict[str, Any] = Field(default_factory=dict)
    checks: VerificationReport
    passed: bool = Field(..., description="Все условия (c1)–(c3) выполнены")
