from typing import Optional

from pydantic import BaseModel, ConfigDict, model_validator

from models.bmatrix_model import BMatrix
from models.design_model import ContrastSpec
from models.outcome_table_model import PotentialOutcomeTable


class OracleFixture(BaseModel):
    """Маленький дизайн + таблица + контраст для точного перебора всех назначений"""
    model_config = ConfigDict(frozen=True)

    table: PotentialOutcomeTable
    contrast: ContrastSpec
    b_matrix: Optional[BMatrix] = None
    label: str = "fixture"

    @model_validator(mode='after')
    def validate_fixture(self) -> 'OracleFixture':
        if self.b_matrix is not None and self.b_matrix.size != self.table.design.n_plots:
            raise ValueError('correction matrix order must equal the number of whole plots')
        return self

    @property
    def design(self):
        return self.table.design
