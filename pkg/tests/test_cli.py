import json

import pytest
from click.testing import CliRunner

from api.repositories.design_repository import DesignRepository
from api.services.estimators_service import EstimatorsService
from api.services.randomization_service import RandomizationService
from cli_app import cli, run
from models.design_model import ContrastSpec


@pytest.fixture
def runner() -> CliRunner:
    return CliRunner()


@pytest.fixture
def design_file(design_b, tmp_path):
    return DesignRepository().save_design(design_b, tmp_path / "design.json")


@pytest.fixture
def observed(random_table):
    assignment = RandomizationService().draw_assignment(random_table.design, 3)
    return RandomizationService().observe(random_table, assignment)


class TestConstructB:

    def test_minimax(self, runner):
        result = runner.invoke(cli, ["construct-b", "--sizes", "8,8,12,12"])
        assert result.exit_code == 0, result.output
        document = json.loads(result.stdout)
        assert document["lambda_max"] == pytest.approx(192.0)
        assert document["passed"] is True
        assert document["provenance"]["x"] == [1, 1, -1]

    def test_naive_not_psd(self, runner):
        result = runner.invoke(cli, ["construct-b", "--sizes", "6,6,14,14", "--mode", "naive"])
        assert result.exit_code == 0
        assert json.loads(result.stdout)["psd"] is False

    def test_steps(self, runner, tmp_path):
        out = tmp_path / "b.json"
        result = runner.invoke(cli, [
            "construct-b", "--sizes", "8,8,12,12", "--mode", "steps", "--x", "1,1,-1", "--a1", "0.5", "--a2", "0",
            "--out", str(out),
        ])
        assert result.exit_code == 0
        assert json.loads(out.read_text(encoding="utf-8"))["entries"][0] == [64.0, 32.0, -48.0, -48.0]

    def test_from_design(self, runner, design_file):
        result = runner.invoke(cli, ["construct-b", "--design", str(design_file)])
        assert result.exit_code == 0
        assert json.loads(result.stdout)["sizes"] == [2, 2, 3, 3]

    def test_degenerate_segment_end(self, runner):
        result = runner.invoke(cli, ["construct-b", "--sizes", "1,4,5,7"])
        assert result.exit_code == 0, result.output
        assert json.loads(result.stdout)["passed"] is True

    def test_no_matrix_exists(self, runner):
        result = runner.invoke(cli, ["construct-b", "--sizes", "1,1,5"])
        assert result.exit_code == 2

    @pytest.mark.parametrize("args", [
        ["construct-b"],
        ["construct-b", "--sizes", "8,8,12,12", "--x", "1,1,-1"],
        ["construct-b", "--sizes", "8,8,12,12", "--mode", "steps"],
        ["construct-b", "--sizes", "8,eight"],
    ])
    def test_usage_errors(self, runner, args):
        assert runner.invoke(cli, args).exit_code == 2


class TestAnalyze:

    def test_end_to_end(self, runner, design_file, observed, tmp_path):
        data_path = DesignRepository().save_observed(observed, tmp_path / "observed.csv")
        result = runner.invoke(cli, [
            "analyze", "--design", str(design_file), "--data", str(data_path), "--b-mode", "minimax", "--clamp",
        ])
        assert result.exit_code == 0, result.output
        report = json.loads(result.stdout)
        estimators = EstimatorsService()
        contrast = ContrastSpec.interaction()
        assert report["tau_hat"] == pytest.approx(estimators.point_estimate(observed, contrast), rel=1e-12)
        assert report["v_hat"] == pytest.approx(estimators.v_hat(observed, contrast), rel=1e-12)
        assert report["b_provenance"] == "constructed"
        assert report["v_tilde_clamped"] == max(report["v_tilde"], 0.0)

    def test_without_b(self, runner, design_file, observed, tmp_path):
        data_path = DesignRepository().save_observed(observed, tmp_path / "observed.csv")
        result = runner.invoke(cli, ["analyze", "--design", str(design_file), "--data", str(data_path)])
        report = json.loads(result.stdout)
        assert report["v_tilde"] is None
        assert report["b_used"] is None

    def test_b_size_mismatch(self, runner, design_file, observed, example_b, tmp_path):
        data_path = DesignRepository().save_observed(observed, tmp_path / "observed.csv")
        b_path = tmp_path / "b.json"
        b_path.write_text(json.dumps({"entries": example_b[:3, :3].tolist()}), encoding="utf-8")
        result = runner.invoke(cli, [
            "analyze", "--design", str(design_file), "--data", str(data_path), "--b", str(b_path),
        ])
        assert result.exit_code == 2

    def test_b_sources_exclusive(self, runner, design_file, observed, example_b, tmp_path):
        data_path = DesignRepository().save_observed(observed, tmp_path / "observed.csv")
        b_path = tmp_path / "b.json"
        b_path.write_text(json.dumps(example_b.tolist()), encoding="utf-8")
        result = runner.invoke(cli, [
            "analyze", "--design", str(design_file), "--data", str(data_path), "--b", str(b_path),
            "--b-mode", "naive",
        ])
        assert result.exit_code == 2


class TestValidate:

    def test_valid(self, runner, design_file):
        result = runner.invoke(cli, ["validate", "--design", str(design_file)])
        assert result.exit_code == 0
        document = json.loads(result.stdout)
        assert document["valid"] is True
        assert document["b_exists"] is True

    def test_violations(self, runner, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({
            "z1_levels": ["0", "1"],
            "z2_levels": ["0", "1"],
            "whole_plot_sizes": [2, 2, 3, 3],
            "r1": {"0": 1, "1": 2},
            "r2": [{"0": 1, "1": 1}] * 4,
        }), encoding="utf-8")
        result = runner.invoke(cli, ["validate", "--design", str(path)])
        assert result.exit_code == 2
        violations = json.loads(result.stdout)["violations"]
        assert any("whole-plot replication sum" in v for v in violations)
        assert any("whole plot 2 sums to 2" in v for v in violations)


class TestSimulate:

    def test_preset(self, runner, tmp_path):
        result = runner.invoke(cli, [
            "simulate", "--preset", "iii", "--replicates", "5", "--out", str(tmp_path), "--no-progress",
        ])
        assert result.exit_code == 0, result.output
        assert json.loads(result.stdout)["III"] == pytest.approx(0.37 / 0.46, rel=1e-9)
        for name in ("summary.json", "replicates.csv", "boxplot.csv"):
            assert (tmp_path / name).is_file()
        summary = json.loads((tmp_path / "summary.json").read_text(encoding="utf-8"))
        assert summary["replicates"] == 5
        assert summary["quartile_method"] == "linear"

    def test_config(self, runner, tmp_path):
        config = tmp_path / "config.json"
        config.write_text(json.dumps({"preset": "I", "replicates": 3, "b_source": "naive"}), encoding="utf-8")
        result = runner.invoke(cli, ["simulate", "--config", str(config), "--out", str(tmp_path / "out"),
                                     "--no-progress"])
        assert result.exit_code == 0, result.output
        summary = json.loads((tmp_path / "out" / "summary.json").read_text(encoding="utf-8"))
        assert summary["b_source"] == "naive"
        assert summary["replicates"] == 3

    def test_needs_one_source(self, runner):
        assert runner.invoke(cli, ["simulate"]).exit_code == 2
        assert runner.invoke(cli, ["simulate", "--preset", "I", "--all"]).exit_code == 2

    def test_presets(self, runner):
        result = runner.invoke(cli, ["presets"])
        assert result.exit_code == 0
        assert [row["name"] for row in json.loads(result.stdout)] == ["I", "II", "III", "IV", "V", "VI", "VII", "VIII"]


class TestOracle:

    def test_design_b(self, runner):
        result = runner.invoke(cli, ["oracle", "--design", "B", "--fixtures", "1", "--seed", "4"])
        assert result.exit_code == 0, result.output
        report = json.loads(result.stdout)
        assert report["passed"] is True
        assert report["assignment_count"] == 216

    def test_unknown_design(self, runner):
        assert runner.invoke(cli, ["oracle", "--design", "C"]).exit_code == 2


class TestRun:

    def test_exit_codes(self, capsys):
        assert run(["construct-b", "--sizes", "8,8,12,12"]) == 0
        assert json.loads(capsys.readouterr().out)["lambda_max"] == pytest.approx(192.0)
        assert run(["construct-b", "--sizes", "1,1,5"]) == 2
        assert run(["construct-b", "--mode", "nonsense", "--sizes", "3,4,5"]) == 2

    def test_version(self, runner):
        result = runner.invoke(cli, ["--version"])
        assert result.exit_code == 0
        assert "1.0.0" in result.output
