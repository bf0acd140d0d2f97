import numpy as np
import pytest

from api.services.bmatrix_service import BMatrixService
from api.services.eigen_service import EigenService
from api.services.estimators_service import EstimatorsService
from api.services.outcomes_service import OutcomesService
from api.services.randomization_service import RandomizationService
from models.design_model import ContrastSpec, SplitPlotDesign
from models.outcome_table_model import PotentialOutcomeTable

CASES = 250


def _tables(design: SplitPlotDesign, seed: int):
    rng = np.random.default_rng(seed)
    unit_plot = design.canonical_unit_plot()
    for _ in range(CASES):
        yield PotentialOutcomeTable(
            design=design,
            unit_whole_plot=unit_plot,
            y=rng.normal(rng.uniform(-5, 5), rng.uniform(0.5, 4), size=(design.n_units, 2, 2)),
        )


def _random_sizes(rng: np.random.Generator) -> tuple:
    while True:
        sizes = tuple(int(v) for v in rng.integers(1, 16, size=int(rng.integers(3, 7))))
        if max(sizes) < sum(sizes) - max(sizes):
            return sizes


class TestIdentities:

    def test_population_means_from_whole_plots(self, school_design):
        outcomes = OutcomesService()
        ratios = school_design.sizes_array / school_design.m_bar
        for table in _tables(school_design, 1):
            rebuilt = np.einsum('w,wab->ab', ratios, outcomes.whole_plot_means(table)) / school_design.n_plots
            np.testing.assert_allclose(outcomes.population_means(table), rebuilt, rtol=1e-12, atol=1e-12)

    def test_observed_mean_equals_adjusted_mean(self, school_design):
        randomization = RandomizationService()
        estimators = EstimatorsService()
        levels = school_design.structure.treatments()
        for r, table in enumerate(_tables(school_design, 2)):
            data = randomization.observe(table, randomization.draw_assignment(school_design, 2, r))
            for z1, z2 in levels:
                assert estimators.ybar_obs(data, z1, z2) == pytest.approx(
                    estimators.ubar_obs(data, z1, z2), rel=1e-12, abs=1e-12
                )


class TestNonNegativity:

    def test_biases(self, school_design, example_b):
        outcomes = OutcomesService()
        contrast = ContrastSpec.interaction()
        for table in _tables(school_design, 3):
            assert outcomes.delta(table, contrast) >= -1e-12
            assert outcomes.delta_tilde(table, contrast, example_b) >= -1e-12

    def test_v_hat_per_realization(self, school_design):
        randomization = RandomizationService()
        estimators = EstimatorsService()
        contrast = ContrastSpec.interaction()
        for r, table in enumerate(_tables(school_design, 4)):
            data = randomization.observe(table, randomization.draw_assignment(school_design, 4, r))
            assert estimators.v_hat(data, contrast) >= -1e-12


class TestEigenSolver:

    def test_trace_and_orthogonality(self):
        service = EigenService()
        rng = np.random.default_rng(5)
        for _ in range(CASES):
            n = int(rng.integers(2, 9))
            a = rng.normal(size=(n, n))
            a = (a + a.T) / 2
            result = service.eigen_sym(a, vectors=True)
            assert abs(result.values.sum() - np.trace(a)) <= 1e-9 * max(1.0, float(np.abs(a).sum()))
            np.testing.assert_allclose(result.vectors.T @ result.vectors, np.eye(n), atol=1e-9)


class TestMinimaxBound:

    @pytest.mark.slow
    def test_random_sizes(self):
        service = BMatrixService()
        rng = np.random.default_rng(6)
        for _ in range(100):
            sizes = _random_sizes(rng)
            b = service.minimax_b(sizes)
            bound = service.lambda_lower_bound(sizes)
            assert service.verify_c1_c2_c3(b, sizes).passed, sizes
            if len(set(sizes)) == 1:
                assert b.lambda_max == pytest.approx(bound, rel=1e-9)
            else:
                assert b.lambda_max > bound + 1e-6 * bound, sizes
