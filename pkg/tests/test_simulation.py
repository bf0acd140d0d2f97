import numpy as np
import pytest
from pydantic import ValidationError

from core.exceptions import DomainError
from api.dto.simulation_dto import SimulationConfigDocument, SimulationSettings
from api.services.outcomes_service import OutcomesService
from api.services.simulation_service import PRESET_NAMES, PRESETS, SimulationService

SEED = 20190917

MEDIAN_RATIOS = {"III": 0.804, "IV": 0.811, "V": 0.811, "VI": 0.810, "VII": 0.822, "VIII": 0.817}


@pytest.fixture
def service() -> SimulationService:
    return SimulationService(progress=False)


class TestPresets:

    def test_names(self):
        assert PRESET_NAMES == ("I", "II", "III", "IV", "V", "VI", "VII", "VIII")

    def test_lookup_is_case_insensitive(self, service):
        design, contrast, population = service.preset(" iii ")
        assert design.whole_plot_sizes == (8, 8, 12, 12)
        assert population == PRESETS["III"]

    def test_unknown(self, service):
        with pytest.raises(DomainError):
            service.preset("IX")

    def test_documents(self):
        documents = SimulationService.preset_documents()
        assert [d.name for d in documents] == list(PRESET_NAMES)
        assert documents[1].enforce_wp_means == 1.0
        assert documents[4].rho == [0.2, 0.4, 0.6, 0.8]


class TestSampling:

    def test_reproducible(self, service, school_design):
        spec = PRESETS["IV"]
        first = service.sample_population(spec, school_design, SEED, 3)
        second = service.sample_population(spec, school_design, SEED, 3)
        other = service.sample_population(spec, school_design, SEED, 4)
        np.testing.assert_array_equal(first.y, second.y)
        assert not np.allclose(first.y, other.y)

    def test_perfect_correlation_shares_noise(self, service, school_design):
        table = service.sample_population(PRESETS["III"], school_design, SEED, 0)
        flat = table.y.reshape(school_design.n_units, -1)
        theta = np.repeat(np.asarray(PRESETS["III"].theta), school_design.whole_plot_sizes, axis=0)
        deviations = flat - theta
        np.testing.assert_allclose(deviations, deviations[:, :1].repeat(4, axis=1), atol=1e-12)

    @pytest.mark.slow
    def test_covariance_is_recovered(self, service, school_design):
        # 8400 x 12 = 100800 единиц
        spec = PRESETS["V"]
        draws = np.concatenate([
            service.sample_population(spec, school_design, SEED, r).y.reshape(school_design.n_units, -1)[-12:]
            for r in range(8400)
        ])
        np.testing.assert_allclose(np.cov(draws, rowvar=False), spec.covariance(3), atol=0.05)

    def test_enforced_whole_plot_contrasts(self, service, school_design, interaction):
        table = service.sample_population(PRESETS["II"], school_design, SEED, 1)
        table = service.enforce_wp_means(table, interaction, 1.0)
        np.testing.assert_allclose(OutcomesService().whole_plot_contrasts(table, interaction), 1.0, atol=1e-12)

    def test_dimension_mismatch(self, service, design_b):
        with pytest.raises(DomainError):
            service.sample_population(PRESETS["I"].model_copy(update={"theta": PRESETS["I"].theta[:3]}), design_b, 1, 0)


class TestBiasStudy:

    @pytest.mark.parametrize("name", ["I", "II"])
    def test_additive_populations(self, service, name):
        result = service.run_bias_study(service.preset_settings(name, replicates=5, seed=SEED))
        for record in result.records:
            assert record.delta == pytest.approx(16 / 1200, rel=1e-9)
            assert abs(record.delta_tilde) < 1e-10
        assert result.lambda_max == pytest.approx(192.0)

    def test_deterministic_population(self, service):
        result = service.run_bias_study(service.preset_settings("III", replicates=4, seed=SEED))
        for record in result.records:
            assert record.delta == pytest.approx(0.46, rel=1e-9)
            assert record.delta_tilde == pytest.approx(0.37, rel=1e-9)
            assert record.tau_bar == pytest.approx(0.2, abs=1e-9)
            assert record.within_plot_spread == pytest.approx(0.0, abs=1e-9)
        assert result.median_ratio == pytest.approx(0.37 / 0.46, rel=1e-9)

    def test_same_seed_same_records(self, service):
        study = service.preset_settings("VI", replicates=6, seed=5)
        assert service.run_bias_study(study).records == service.run_bias_study(study).records

    def test_workers_do_not_change_results(self, service):
        serial = service.run_bias_study(service.preset_settings("VII", replicates=6, seed=9))
        parallel = service.run_bias_study(service.preset_settings("VII", replicates=6, seed=9, workers=3))
        assert serial.records == parallel.records

    def test_boxplots(self, service):
        result = service.run_bias_study(service.preset_settings("IV", replicates=10, seed=SEED))
        estimators = [box.estimator for box in result.boxplots]
        assert estimators == ["v_hat", "v_tilde", "ratio"]
        for box in result.boxplots:
            assert box.min <= box.q1 <= box.median <= box.q3 <= box.max
        assert result.missing_ratios == 0

    def test_naive_source(self, service):
        result = service.run_bias_study(service.preset_settings("IV", replicates=3, b_source="naive"))
        assert result.b_source == "naive"

    def test_five_numbers(self):
        box = SimulationService.five_numbers("X", "ratio", np.array([4.0, 1.0, 3.0, 2.0, 5.0]))
        assert (box.min, box.q1, box.median, box.q3, box.max) == (1.0, 2.0, 3.0, 4.0, 5.0)
        assert box.count == 5

    @pytest.mark.slow
    @pytest.mark.parametrize("name, expected", sorted(MEDIAN_RATIOS.items()))
    def test_median_bias_ratio(self, service, name, expected):
        result = service.run_bias_study(service.preset_settings(name, seed=SEED))
        assert result.replicates == 200
        assert result.median_ratio == pytest.approx(expected, abs=0.05)


class TestSettings:

    def test_explicit_source_needs_entries(self):
        with pytest.raises(ValidationError):
            SimulationSettings(population=PRESETS["I"], b_source="explicit")

    def test_population_must_fit_design(self, design_b):
        with pytest.raises(ValidationError):
            SimulationSettings(
                design=design_b,
                population=PRESETS["I"].model_copy(update={"theta": PRESETS["I"].theta[:3]}),
            )

    def test_config_needs_exactly_one_source(self):
        with pytest.raises(ValidationError):
            SimulationConfigDocument()
        with pytest.raises(ValidationError):
            SimulationConfigDocument(preset="I", population=PRESETS["I"])

    def test_command_line_overrides_config(self, service):
        config = SimulationConfigDocument(preset="V", replicates=50, seed=1)
        study = service.settings_from_config(config, replicates=7, seed=None)
        assert study.name == "V"
        assert study.replicates == 7
        assert study.seed == 1

    def test_custom_population(self, service):
        config = SimulationConfigDocument(population=PRESETS["VI"], name="flat", b_source="explicit",
                                          b_entries=[[64, 32, -48, -48], [32, 64, -48, -48],
                                                     [-48, -48, 144, -48], [-48, -48, -48, 144]])
        study = service.settings_from_config(config, replicates=2)
        result = service.run_bias_study(study)
        assert result.population == "flat"
        assert result.lambda_max == pytest.approx(192.0)
