import numpy as np
import pytest

from core.exceptions import DomainError
from models.design_model import FactorialStructure, SplitPlotDesign
from models.outcome_table_model import PotentialOutcomeTable


@pytest.fixture
def observed(randomization_service, random_table):
    assignment = randomization_service.draw_assignment(random_table.design, 12)
    return randomization_service.observe(random_table, assignment)


class TestPointEstimate:

    def test_constant_outcomes(self, randomization_service, estimators_service, school_design, interaction):
        table = PotentialOutcomeTable.constant(school_design, 4.0)
        data = randomization_service.observe(table, randomization_service.draw_assignment(school_design, 1))
        assert estimators_service.point_estimate(data, interaction) == pytest.approx(0.0, abs=1e-12)
        assert estimators_service.v_hat(data, interaction) == pytest.approx(0.0, abs=1e-12)

    def test_size_weighted_mean_equals_adjusted_mean(self, estimators_service, observed):
        structure = observed.design.structure
        for z1, z2 in structure.treatments():
            assert estimators_service.ybar_obs(observed, z1, z2) == pytest.approx(
                estimators_service.ubar_obs(observed, z1, z2), rel=1e-12
            )

    def test_observed_means_shape(self, estimators_service, observed):
        means = estimators_service.observed_means(observed)
        assert means.shape == (2, 2)
        assert not np.any(np.isnan(means))


class TestVariance:

    def test_v_hat_non_negative(self, estimators_service, observed, interaction):
        assert estimators_service.v_hat(observed, interaction) >= 0.0

    def test_balanced_b_reduces_to_v_hat(
            self, randomization_service, estimators_service, bmatrix_service, design_a, interaction
    ):
        rng = np.random.default_rng(2)
        table = PotentialOutcomeTable(
            design=design_a, unit_whole_plot=design_a.canonical_unit_plot(), y=rng.normal(size=(8, 2, 2))
        )
        data = randomization_service.observe(table, randomization_service.draw_assignment(design_a, 4))
        b = bmatrix_service.b_balanced(2, 4)
        assert estimators_service.v_tilde(data, interaction, b) == pytest.approx(
            estimators_service.v_hat(data, interaction), rel=1e-12
        )

    def test_single_replicate_not_estimable(self, randomization_service, estimators_service, interaction):
        one = {(0,): 1, (1,): 1}
        design = SplitPlotDesign(
            structure=FactorialStructure.two_by_two(),
            whole_plot_sizes=(2, 2, 2, 2),
            r1={(0,): 1, (1,): 3},
            r2=(one,) * 4,
        )
        table = PotentialOutcomeTable.constant(design, 1.0)
        data = randomization_service.observe(table, randomization_service.draw_assignment(design, 0))
        with pytest.raises(DomainError, match="not estimable"):
            estimators_service.v_hat(data, interaction)

    def test_wrong_diagonal_rejected(self, estimators_service, observed, interaction):
        with pytest.raises(DomainError):
            estimators_service.v_tilde(observed, interaction, np.eye(4))

    def test_h_needs_distinct_plots(self, estimators_service, observed, interaction):
        with pytest.raises(DomainError):
            estimators_service.h_ww(observed, interaction, 1, 1)

    def test_h_is_symmetric(self, estimators_service, observed, interaction):
        h = estimators_service.h_matrix(observed, interaction)
        np.testing.assert_allclose(h, h.T)
        assert estimators_service.h_ww(observed, interaction, 0, 2) == pytest.approx(h[0, 2])


class TestReport:

    def test_without_b(self, estimators_service, observed, interaction):
        report = estimators_service.estimate(observed, interaction)
        assert report.v_tilde is None
        assert report.b_used is None
        assert set(report.diagnostics) == {"0|0", "0|1", "1|0", "1|1"}

    def test_with_b_and_clamp(self, estimators_service, bmatrix_service, observed, interaction):
        b = bmatrix_service.minimax_b(observed.design.whole_plot_sizes)
        report = estimators_service.estimate(observed, interaction, b=b, clamp=True)
        assert report.b_provenance == "constructed"
        assert report.v_tilde_clamped == max(report.v_tilde, 0.0)
        np.testing.assert_allclose(report.b_used, b.matrix)
        assert report.tau_hat == estimators_service.point_estimate(observed, interaction)
