import json

import numpy as np
import pandas as pd
import pytest

from core.exceptions import DomainError
from api.dto.simulation_dto import BoxplotSummary, ReplicateRecord
from api.repositories.design_repository import DesignRepository, canonical_json
from api.repositories.results_repository import BOXPLOT_COLUMNS, REPLICATE_COLUMNS, ResultsRepository
from api.services.randomization_service import RandomizationService
from models.design_model import ContrastSpec


@pytest.fixture
def repository() -> DesignRepository:
    return DesignRepository()


class TestDesignFiles:

    def test_canonical_round_trip(self, repository, school_design, tmp_path):
        path = repository.save_design(school_design, tmp_path / "design.json")
        text = path.read_text(encoding="utf-8")
        loaded = repository.load_design(path)
        assert loaded.whole_plot_sizes == school_design.whole_plot_sizes
        assert loaded.r1 == school_design.r1
        assert repository.design_json(loaded) == text
        assert text.endswith("}\n")

    def test_levels_are_strings(self, repository, design_b):
        document = json.loads(repository.design_json(design_b))
        assert document["z1_levels"] == ["0", "1"]
        assert document["r2"][2] == {"0": 1, "1": 2}
        assert document["whole_plot_sizes"] == [2, 2, 3, 3]

    def test_malformed(self, repository, tmp_path):
        path = tmp_path / "design.json"
        path.write_text("{\"z1_levels\": [\"0\"]}", encoding="utf-8")
        with pytest.raises(DomainError, match="Malformed design"):
            repository.load_design(path)

    def test_missing_file(self, repository, tmp_path):
        with pytest.raises(DomainError, match="Cannot read"):
            repository.load_design(tmp_path / "absent.json")

    def test_contrast(self, repository, school_design, tmp_path):
        contrast = ContrastSpec.interaction()
        path = repository.save_contrast(contrast, school_design, tmp_path / "contrast.json")
        assert repository.load_contrast(path).g == contrast.g


class TestDataFiles:

    def test_outcomes_exact(self, repository, random_table, tmp_path):
        path = repository.save_outcomes(random_table, tmp_path / "outcomes.csv")
        loaded = repository.load_outcomes(path, random_table.design)
        np.testing.assert_array_equal(loaded.y, random_table.y)
        assert loaded.unit_whole_plot == random_table.unit_whole_plot

    def test_outcomes_columns(self, repository, random_table, tmp_path):
        path = repository.save_outcomes(random_table, tmp_path / "outcomes.csv")
        header = path.read_text(encoding="utf-8").splitlines()[0]
        assert header == "unit,whole_plot,0|0,0|1,1|0,1|1"

    def test_outcomes_missing_units(self, repository, random_table, tmp_path):
        path = repository.save_outcomes(random_table, tmp_path / "outcomes.csv")
        frame = pd.read_csv(path).iloc[1:]
        frame.to_csv(path, index=False)
        with pytest.raises(DomainError, match="numbered"):
            repository.load_outcomes(path, random_table.design)

    def test_observed(self, repository, random_table, tmp_path):
        assignment = RandomizationService().draw_assignment(random_table.design, 11)
        data = RandomizationService().observe(random_table, assignment)
        path = repository.save_observed(data, tmp_path / "observed.csv")
        loaded = repository.load_observed(path, data.design)
        np.testing.assert_array_equal(loaded.y_obs, data.y_obs)
        assert loaded.unit_z1 == data.unit_z1
        assert loaded.unit_z2 == data.unit_z2

    def test_observed_missing_column(self, repository, design_b, tmp_path):
        path = tmp_path / "observed.csv"
        path.write_text("unit,whole_plot,z1,y\n0,0,0,1.0\n", encoding="utf-8")
        with pytest.raises(DomainError, match="missing columns"):
            repository.load_observed(path, design_b)


class TestBMatrixFiles:

    def test_bare_list(self, repository, example_b, tmp_path):
        path = tmp_path / "b.json"
        path.write_text(json.dumps(example_b.tolist()), encoding="utf-8")
        np.testing.assert_array_equal(repository.load_b_matrix(path), example_b)

    def test_entries_field(self, repository, example_b, tmp_path):
        path = tmp_path / "b.json"
        path.write_text(json.dumps({"entries": example_b.tolist(), "mode": "minimax"}), encoding="utf-8")
        np.testing.assert_array_equal(repository.load_b_matrix(path), example_b)

    @pytest.mark.parametrize("text", ["[[1, 2, 3]]", "not json", "{\"entries\": [1, 2]}"])
    def test_rejected(self, repository, tmp_path, text):
        path = tmp_path / "b.json"
        path.write_text(text, encoding="utf-8")
        with pytest.raises(DomainError):
            repository.load_b_matrix(path)


class TestResults:

    def test_replicates(self, tmp_path):
        records = [
            ReplicateRecord(replicate=0, delta=0.46, delta_tilde=0.37, ratio=0.37 / 0.46, tau_bar=0.2,
                            wp_contrast_spread=3.0, within_plot_spread=0.0),
            ReplicateRecord(replicate=1, delta=0.0, delta_tilde=0.0, ratio=None, tau_bar=1.0,
                            wp_contrast_spread=0.0, within_plot_spread=0.0),
        ]
        path = ResultsRepository(tmp_path / "nested").write_replicates(records)
        frame = pd.read_csv(path, float_precision="round_trip")
        assert list(frame.columns) == REPLICATE_COLUMNS
        assert frame["ratio"][0] == 0.37 / 0.46
        assert np.isnan(frame["ratio"][1])

    def test_boxplots(self, tmp_path):
        box = BoxplotSummary(population="III", estimator="ratio", min=0.8, q1=0.8, median=0.8, q3=0.8, max=0.8,
                             count=3)
        path = ResultsRepository(tmp_path).write_boxplots([box])
        frame = pd.read_csv(path)
        assert list(frame.columns) == BOXPLOT_COLUMNS
        assert frame["population"].tolist() == ["III"]

    def test_json_document(self, tmp_path):
        box = BoxplotSummary(population="I", estimator="v_hat", min=0, q1=0, median=0, q3=0, max=0, count=1)
        path = ResultsRepository(tmp_path).write_json("box.json", box)
        text = path.read_text(encoding="utf-8")
        assert json.loads(text)["estimator"] == "v_hat"
        assert text.startswith("{\n  \"population\"")

    def test_json_floats_are_exact(self):
        values = [0.1 + 0.2, 1 / 3, 2.0 ** -52, 0.37 / 0.46, 1e300 / 7]
        assert json.loads(canonical_json({"values": values}))["values"] == values
