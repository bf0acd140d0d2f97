from typing import List, Optional

from pydantic import BaseModel, Field

from core.config import settings


class CheckReport(BaseModel):
    """Сравнение перебора всех назначений с формулой"""
    name: str = Field(..., examples=["variance_formula"])
    enumerated: float = Field(..., description="Значение, полученное полным перебором")
    formula: float = Field(..., description="Значение по замкнутой формуле")
    abs_error: float = Field(..., ge=0)
    tolerance: float = Field(..., ge=0)
    passed: bool
    detail: Optional[str] = None


class FixtureReport(BaseModel):
    label: str = Field(..., examples=["integer-20190917-0"])
    kind: str = Field(..., examples=["integer"])
    checks: List[CheckReport]

    @property
    def passed(self) -> bool:
        return all(check.passed for check in self.checks)


class OracleReport(BaseModel):
    """Схема вывода команды oracle"""
    schema_version: str = Field(
        default_factory=lambda: settings.app_settings.schema_version,
        description="Версия схемы вывода"
    )
    design: str = Field(..., examples=["B"])
    seed: int
    assignment_count: int = Field(..., ge=1, examples=[216])
    fixtures: List[FixtureReport]
    failed_checks: int = Field(..., ge=0)
    passed: bool
