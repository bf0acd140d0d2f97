from .design_model import (
    ContrastSpec,
    FactorialStructure,
    Level,
    SplitPlotDesign,
    Treatment,
    parse_level,
    parse_treatment,
    serialize_level,
    serialize_treatment,
)
from .outcome_table_model import PotentialOutcomeTable
from .assignment_model import Assignment, ObservedDataset
from .bmatrix_model import ASegment, BMatrix, Provenance
from .population_model import PopulationSpec
from .oracle_model import OracleFixture


__all__ = [
    'Assignment',
    'ASegment',
    'BMatrix',
    'ContrastSpec',
    'FactorialStructure',
    'Level',
    'ObservedDataset',
    'OracleFixture',
    'PopulationSpec',
    'PotentialOutcomeTable',
    'Provenance',
    'SplitPlotDesign',
    'Treatment',
    'parse_level',
    'parse_treatment',
    'serialize_level',
    'serialize_treatment',
]
