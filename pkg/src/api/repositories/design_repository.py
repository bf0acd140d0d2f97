import json
import logging
from pathlib import Path
from typing import Union

import numpy as np
import pandas as pd
from pydantic import ValidationError

from core.exceptions import DomainError
from api.dto.design_dto import ContrastDocument, DesignDocument
from api.dto.simulation_dto import SimulationConfigDocument
from models.assignment_model import ObservedDataset
from models.design_model import (
    ContrastSpec,
    SplitPlotDesign,
    parse_level,
    serialize_level,
    serialize_treatment,
)
from models.outcome_table_model import PotentialOutcomeTable

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

FLOAT_FORMAT = "%.17g"


def _read_text(path: PathLike) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise DomainError(f"Cannot read {path}: {e}")


def canonical_json(payload: dict) -> str:
    return json.dumps(payload, indent=2, ensure_ascii=False) + "\n"


class DesignRepository:
    """Чтение и запись входных файлов: дизайн, контраст, таблицы исходов, матрица B"""

    # ---------------------------------------------------------------- design

    def load_design(self, path: PathLike) -> SplitPlotDesign:
        try:
            document = DesignDocument.model_validate_json(_read_text(path))
            return document.to_domain()
        except ValidationError as e:
            raise DomainError(f"Malformed design file {path}: {e}")

    def design_json(self, design: SplitPlotDesign) -> str:
        return canonical_json(DesignDocument.from_domain(design).model_dump())

    def save_design(self, design: SplitPlotDesign, path: PathLike) -> Path:
        target = Path(path)
        target.write_text(self.design_json(design), encoding="utf-8")
        return target

    # -------------------------------------------------------------- contrast

    def load_contrast(self, path: PathLike) -> ContrastSpec:
        try:
            document = ContrastDocument.model_validate_json(_read_text(path))
            return document.to_domain()
        except ValidationError as e:
            raise DomainError(f"Malformed contrast file {path}: {e}")

    def save_contrast(self, contrast: ContrastSpec, design: SplitPlotDesign, path: PathLike) -> Path:
        target = Path(path)
        document = ContrastDocument.from_domain(contrast, design.structure)
        target.write_text(canonical_json(document.model_dump()), encoding="utf-8")
        return target

    # ---------------------------------------------------- potential outcomes

    def load_outcomes(self, path: PathLike, design: SplitPlotDesign) -> PotentialOutcomeTable:
        """CSV: unit, whole_plot и по столбцу на каждую комбинацию 'z1|z2'"""
        frame = self._read_csv(path, {"unit", "whole_plot"})
        frame = frame.sort_values("unit")
        if frame["unit"].tolist() != list(range(design.n_units)):
            raise DomainError(f"{path}: units must be numbered 0..{design.n_units - 1} exactly once")
        columns = [serialize_treatment(z1, z2) for z1, z2 in design.structure.treatments()]
        missing = [column for column in columns if column not in frame.columns]
        if missing:
            raise DomainError(f"{path}: missing treatment columns {missing}")
        y = frame[columns].to_numpy(dtype=float).reshape(design.n_units, design.structure.k1, design.structure.k2)
        try:
            return PotentialOutcomeTable(
                design=design,
                unit_whole_plot=tuple(int(w) for w in frame["whole_plot"]),
                y=y,
            )
        except ValidationError as e:
            raise DomainError(f"{path}: {e}")

    def save_outcomes(self, table: PotentialOutcomeTable, path: PathLike) -> Path:
        design = table.design
        columns = [serialize_treatment(z1, z2) for z1, z2 in design.structure.treatments()]
        frame = pd.DataFrame(table.y.reshape(design.n_units, -1), columns=columns)
        frame.insert(0, "whole_plot", list(table.unit_whole_plot))
        frame.insert(0, "unit", range(design.n_units))
        frame.to_csv(path, index=False, float_format=FLOAT_FORMAT)
        return Path(path)

    # --------------------------------------------------------- observed data

    def load_observed(self, path: PathLike, design: SplitPlotDesign) -> ObservedDataset:
        """CSV: unit, whole_plot, z1, z2, y"""
        frame = self._read_csv(path, {"unit", "whole_plot", "z1", "z2", "y"}, dtype={"z1": str, "z2": str})
        frame = frame.sort_values("unit")
        structure = design.structure
        try:
            unit_z1 = tuple(structure.z1_index(parse_level(v)) for v in frame["z1"])
            unit_z2 = tuple(structure.z2_index(parse_level(v)) for v in frame["z2"])
            return ObservedDataset(
                design=design,
                unit_whole_plot=tuple(int(w) for w in frame["whole_plot"]),
                unit_z1=unit_z1,
                unit_z2=unit_z2,
                y_obs=frame["y"].to_numpy(dtype=float),
            )
        except ValidationError as e:
            raise DomainError(f"{path}: {e}")

    def save_observed(self, data: ObservedDataset, path: PathLike) -> Path:
        structure = data.design.structure
        frame = pd.DataFrame({
            "unit": range(len(data.y_obs)),
            "whole_plot": list(data.unit_whole_plot),
            "z1": [serialize_level(structure.z1_levels[a]) for a in data.unit_z1],
            "z2": [serialize_level(structure.z2_levels[b]) for b in data.unit_z2],
            "y": np.asarray(data.y_obs),
        })
        frame.to_csv(path, index=False, float_format=FLOAT_FORMAT)
        return Path(path)

    # -------------------------------------------------------------- B matrix

    def load_b_matrix(self, path: PathLike) -> np.ndarray:
        """JSON со списком строк в поле entries (в том числе вывод construct-b)"""
        try:
            payload = json.loads(_read_text(path))
        except json.JSONDecodeError as e:
            raise DomainError(f"Malformed B matrix file {path}: {e}")
        entries = payload.get("entries") if isinstance(payload, dict) else payload
        matrix = np.asarray(entries, dtype=float)
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
            raise DomainError(f"{path}: B matrix must be square, got shape {matrix.shape}")
        return matrix

    # ------------------------------------------------------ simulation config

    def load_simulation_config(self, path: PathLike) -> SimulationConfigDocument:
        try:
            return SimulationConfigDocument.model_validate_json(_read_text(path))
        except ValidationError as e:
            raise DomainError(f"Malformed simulation config {path}: {e}")

    # ---------------------------------------------------------------- helpers

    @staticmethod
    def _read_csv(path: PathLike, required: set, dtype=None) -> pd.DataFrame:
        try:
            frame = pd.read_csv(path, dtype=dtype, float_precision="round_trip")
        except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
            raise DomainError(f"Cannot read CSV {path}: {e}")
        missing = required - set(frame.columns)
        if missing:
            raise DomainError(f"{path}: missing columns {sorted(missing)}")
        logger.debug(f"Loaded {len(frame)} rows from {path}")
        return frame


def get_design_repository() -> DesignRepository:
    return DesignRepository()
