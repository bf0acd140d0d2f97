import numpy as np
import pytest

from api.services.bmatrix_service import BMatrixService
from api.services.design_service import DesignService
from api.services.eigen_service import EigenService
from api.services.estimators_service import EstimatorsService
from api.services.oracle_service import OracleService
from api.services.outcomes_service import OutcomesService
from api.services.randomization_service import RandomizationService
from models.design_model import ContrastSpec, SplitPlotDesign
from models.outcome_table_model import PotentialOutcomeTable

SEED = 20190917

EXAMPLE_SIZES = (8, 8, 12, 12)
EXAMPLE_B = np.array([
    [64.0, 32.0, -48.0, -48.0],
    [32.0, 64.0, -48.0, -48.0],
    [-48.0, -48.0, 144.0, -48.0],
    [-48.0, -48.0, -48.0, 144.0],
])


@pytest.fixture
def school_design() -> SplitPlotDesign:
    return SplitPlotDesign.school()


@pytest.fixture
def design_a() -> SplitPlotDesign:
    return OracleService.oracle_design("A")


@pytest.fixture
def design_b() -> SplitPlotDesign:
    return OracleService.oracle_design("B")


@pytest.fixture
def interaction() -> ContrastSpec:
    return ContrastSpec.interaction()


@pytest.fixture
def random_table(design_b) -> PotentialOutcomeTable:
    rng = np.random.default_rng(7)
    return PotentialOutcomeTable(
        design=design_b,
        unit_whole_plot=design_b.canonical_unit_plot(),
        y=rng.normal(5.0, 2.0, size=(design_b.n_units, 2, 2)),
    )


@pytest.fixture
def design_service() -> DesignService:
    return DesignService()


@pytest.fixture
def outcomes_service() -> OutcomesService:
    return OutcomesService()


@pytest.fixture
def randomization_service() -> RandomizationService:
    return RandomizationService()


@pytest.fixture
def estimators_service() -> EstimatorsService:
    return EstimatorsService()


@pytest.fixture
def eigen_service() -> EigenService:
    return EigenService()


@pytest.fixture
def bmatrix_service() -> BMatrixService:
    return BMatrixService()


@pytest.fixture
def oracle_service() -> OracleService:
    return OracleService()


@pytest.fixture
def example_b() -> np.ndarray:
    return EXAMPLE_B.copy()
