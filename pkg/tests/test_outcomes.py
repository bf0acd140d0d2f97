import numpy as np
import pytest

from core.exceptions import DomainError
from models.outcome_table_model import PotentialOutcomeTable


class TestContrasts:

    def test_constant_table(self, school_design, interaction, outcomes_service):
        table = PotentialOutcomeTable.constant(school_design, 3.0)
        np.testing.assert_allclose(outcomes_service.unit_contrasts(table, interaction), 0.0)
        assert outcomes_service.finite_population_contrast(table, interaction) == 0.0
        assert outcomes_service.delta(table, interaction) == 0.0

    def test_whole_plot_contrasts_average_to_population(self, random_table, interaction, outcomes_service):
        design = random_table.design
        tau_w = outcomes_service.whole_plot_contrasts(random_table, interaction)
        tau = outcomes_service.finite_population_contrast(random_table, interaction)
        assert np.sum(design.sizes_array * tau_w) / design.n_units == pytest.approx(tau, rel=1e-12)

    def test_adjusted_means_reproduce_population_means(self, random_table, outcomes_service):
        design = random_table.design
        adjusted = outcomes_service.adjusted_outcomes(random_table)
        plot_means = np.stack([adjusted[random_table.plot_units(w)].mean(axis=0) for w in range(design.n_plots)])
        np.testing.assert_allclose(
            outcomes_service.population_means(random_table),
            plot_means.mean(axis=0),
            rtol=1e-12,
        )
        np.testing.assert_allclose(
            outcomes_service.size_ratios(random_table),
            np.repeat(design.sizes_array / design.m_bar, design.sizes_array),
        )


class TestBiases:

    def test_strict_additivity_matches_closed_form(self, school_design, interaction, outcomes_service):
        # τ_i = (1 - 0 - 0 + 3) / 4 = 1 для каждой единицы
        baseline = np.random.default_rng(3).normal(size=school_design.n_units)
        table = outcomes_service.make_strictly_additive(school_design, [1.0, 0.0, 0.0, 3.0], baseline)
        assert outcomes_service.check_strict_additivity(table)
        delta = outcomes_service.delta(table, interaction)
        assert delta == pytest.approx(16 / 1200, rel=1e-12)
        assert delta == pytest.approx(outcomes_service.delta_additive_formula(school_design, 1.0), rel=1e-12)

    def test_expanded_form_agrees(self, random_table, interaction, outcomes_service):
        assert outcomes_service.delta_expanded(random_table, interaction) == pytest.approx(
            outcomes_service.delta(random_table, interaction), rel=1e-10
        )

    def test_delta_tilde_vanishes_for_equal_plot_contrasts(
            self, school_design, interaction, outcomes_service, bmatrix_service
    ):
        table = outcomes_service.make_strictly_additive(
            school_design, [2.0, 1.0, 0.0, 5.0], np.arange(school_design.n_units, dtype=float)
        )
        b = bmatrix_service.minimax_b(school_design.whole_plot_sizes)
        assert abs(outcomes_service.delta_tilde(table, interaction, b)) < 1e-10

    def test_delta_tilde_non_negative(self, school_design, interaction, outcomes_service, bmatrix_service):
        b = bmatrix_service.minimax_b(school_design.whole_plot_sizes)
        rng = np.random.default_rng(11)
        for _ in range(20):
            table = PotentialOutcomeTable(
                design=school_design,
                unit_whole_plot=school_design.canonical_unit_plot(),
                y=rng.normal(size=(school_design.n_units, 2, 2)) * 5,
            )
            assert outcomes_service.delta_tilde(table, interaction, b) >= -1e-10
            assert outcomes_service.delta(table, interaction) >= 0.0

    def test_delta_tilde_rejects_wrong_order(self, random_table, interaction, outcomes_service):
        with pytest.raises(DomainError):
            outcomes_service.delta_tilde(random_table, interaction, np.eye(3))


class TestAdditivity:

    def test_between_whole_plot_additive(self, school_design, outcomes_service):
        rng = np.random.default_rng(5)
        table = outcomes_service.make_between_wp_additive(
            school_design,
            base_row=[1.0, 2.0, 3.0, 4.0],
            wp_shifts=[0.0, 1.0, -2.0, 4.0],
            deviations=rng.normal(size=(school_design.n_units, 2, 2)),
        )
        assert outcomes_service.check_between_wp_additivity(table)
        assert not outcomes_service.check_strict_additivity(table)

    def test_random_table_is_not_additive(self, random_table, outcomes_service):
        assert not outcomes_service.check_between_wp_additivity(random_table)


class TestCovariances:

    def test_s_within_is_symmetric(self, random_table, outcomes_service):
        matrices = outcomes_service.s_within_matrices(random_table)
        np.testing.assert_allclose(matrices, np.swapaxes(matrices, 1, 2))
        first, second = ((0,), (1,)), ((1,), (0,))
        assert outcomes_service.s_within(random_table, 2, first, second) == pytest.approx(
            outcomes_service.s_within(random_table, 2, second, first)
        )

    def test_observed_mean_covariance_is_psd(self, random_table, outcomes_service):
        cov = outcomes_service.observed_mean_covariance(random_table)
        assert np.linalg.eigvalsh(cov).min() > -1e-10

    def test_unknown_whole_plot(self, random_table, outcomes_service):
        with pytest.raises(DomainError):
            outcomes_service.whole_plot_mean(random_table, 9, (0,), (0,))
