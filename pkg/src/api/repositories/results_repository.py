import logging
from pathlib import Path
from typing import Iterable, Optional, Sequence

import pandas as pd
from pydantic import BaseModel

from core.config import settings
from api.dto.simulation_dto import BoxplotSummary, ReplicateRecord
from api.repositories.design_repository import FLOAT_FORMAT, PathLike, canonical_json

logger = logging.getLogger(__name__)

REPLICATE_COLUMNS = [
    "replicate", "delta", "delta_tilde", "ratio", "tau_bar", "wp_contrast_spread", "within_plot_spread",
]
BOXPLOT_COLUMNS = ["population", "estimator", "min", "q1", "median", "q3", "max", "count"]


class ResultsRepository:
    """Запись отчётов: JSON со schema_version и CSV-таблицы для внешних графиков"""

    def __init__(self, out_dir: Optional[PathLike] = None):
        self.out_dir = Path(out_dir if out_dir is not None else settings.app_settings.out_dir)

    def _target(self, name: str) -> Path:
        self.out_dir.mkdir(parents=True, exist_ok=True)
        return self.out_dir / name

    def write_json(self, name: str, document: BaseModel) -> Path:
        target = self._target(name)
        target.write_text(canonical_json(document.model_dump(mode="json")), encoding="utf-8")
        logger.info(f"Wrote {target}")
        return target

    def write_replicates(self, records: Sequence[ReplicateRecord], name: str = "replicates.csv") -> Path:
        target = self._target(name)
        frame = pd.DataFrame([record.model_dump() for record in records], columns=REPLICATE_COLUMNS)
        frame.to_csv(target, index=False, float_format=FLOAT_FORMAT)
        logger.info(f"Wrote {len(frame)} replicate rows to {target}")
        return target

    def write_boxplots(self, boxplots: Iterable[BoxplotSummary], name: str = "boxplot.csv") -> Path:
        target = self._target(name)
        frame = pd.DataFrame([summary.model_dump() for summary in boxplots], columns=BOXPLOT_COLUMNS)
        frame.to_csv(target, index=False, float_format=FLOAT_FORMAT)
        logger.info(f"Wrote {len(frame)} boxplot rows to {target}")
        return target


def get_results_repository(out_dir: Optional[PathLike] = None) -> ResultsRepository:
    return ResultsRepository(out_dir)
