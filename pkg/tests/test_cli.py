import csv
import json

import numpy as np
import pytest
from click.testing import CliRunner

from distlearn.distlearn_core.commands import CliConfig, pair_configurations
from distlearn.distlearn_core.errors import DistLearnError
from distlearn.distlearn_core.estimators import EstimatorKind
from distlearn.distlearn_core.policies import PolicyKind
from main import cli


@pytest.fixture
def runner():
    return CliRunner()


def read_csv(path):
    with open(path, newline="", encoding="utf-8") as f:
        return list(csv.DictReader(f))


class TestCliConfig:
    def test_comma_lists(self):
        cfg = CliConfig(subcommand="simulate", policies="lb, UB,rr", estimators="mle")
        assert cfg.policies == [PolicyKind.LB_PULL, PolicyKind.UB_PULL, PolicyKind.ROUND_ROBIN]
        assert cfg.estimators == [EstimatorKind.MAX_LIKELIHOOD]

    def test_bounds(self):
        with pytest.raises(ValueError):
            CliConfig(subcommand="simulate", trials=0)
        with pytest.raises(ValueError):
            CliConfig(subcommand="crlb", grid_step=0.9)
        with pytest.raises(ValueError):
            CliConfig(subcommand="simulate", policies="")

    def test_pairing(self):
        pairs = pair_configurations([PolicyKind.LB_PULL, PolicyKind.ROUND_ROBIN], [EstimatorKind.MAX_LIKELIHOOD])
        assert [p.label for p in pairs] == ["LBpull+MLest", "RRpull+MLest"]
        pairs = pair_configurations([PolicyKind.ROUND_ROBIN, PolicyKind.ROUND_ROBIN],
                                    [EstimatorKind.MAX_LIKELIHOOD, EstimatorKind.PSEUDOINVERSE])
        assert [p.label for p in pairs] == ["RRpull+MLest", "RRpull+PIest"]
        with pytest.raises(DistLearnError):
            pair_configurations([PolicyKind.ROUND_ROBIN] * 3, [EstimatorKind.MAX_LIKELIHOOD] * 2)


class TestAnalyze:
    def test_example_one(self, runner, tmp_path):
        result = runner.invoke(cli, ["analyze", "--spec", "example_one", "--out", str(tmp_path)])
        assert result.exit_code == 0, result.output
        report = json.loads((tmp_path / "structure_report.json").read_text())
        assert report["rank"] == 3
        assert report["identifiable"] is True
        assert report["redundant_arms"] == []

    def test_example_two(self, runner, tmp_path):
        result = runner.invoke(cli, ["analyze", "--spec", "example_two", "--out", str(tmp_path)])
        assert result.exit_code == 0, result.output
        report = json.loads((tmp_path / "structure_report.json").read_text())
        assert report["rank"] == 3 and report["alphabet_size"] == 4
        assert report["identifiable"] is False
        assert report["redundant_arms"] == [{"removed": 2, "witness": 1}]
        assert [0.0, 1.0, 1.0, 0.0] in report["identifiable_combinations"]

    def test_identity_arm_file(self, runner, tmp_path):
        spec_file = tmp_path / "identity.json"
        spec_file.write_text(json.dumps({"alphabet_size": 3, "arms": [["x", "y", "z"]]}))
        result = runner.invoke(cli, ["analyze", "--spec", str(spec_file), "--out", str(tmp_path / "out")])
        assert result.exit_code == 0, result.output
        report = json.loads((tmp_path / "out" / "structure_report.json").read_text())
        assert report["invertible_arm"] == 1

    def test_missing_spec(self, runner, tmp_path):
        result = runner.invoke(cli, ["analyze", "--spec", str(tmp_path / "nope.json"), "--out", str(tmp_path)])
        assert result.exit_code == 1


class TestSimulate:
    def test_round_robin_pseudoinverse(self, runner, tmp_path):
        result = runner.invoke(cli, ["simulate", "--spec", "example_one", "--out", str(tmp_path),
                                     "--horizon", "2000", "--trials", "50", "--seed", "7",
                                     "--policies", "rr", "--estimators", "pi"])
        assert result.exit_code == 0, result.output
        rows = read_csv(tmp_path / "error_vs_pulls.csv")
        assert list(rows[0]) == ["step", "RRpull+PIest", "crude_bound", "crlb_bound"]
        steps = [int(r["step"]) for r in rows]
        assert steps == sorted(set(steps)) and steps[-1] == 2000
        assert all(np.isfinite(float(r["RRpull+PIest"])) for r in rows)

        pulls = read_csv(tmp_path / "arm_pulls.csv")
        assert [int(r["arm"]) for r in pulls] == [1, 2, 3]
        assert sum(float(r["mean_pulls"]) for r in pulls) == pytest.approx(2000)

        target = read_csv(tmp_path / "pulls_to_target.csv")
        assert target[0]["policy"] == "RRpull+PIest"
        echo = json.loads((tmp_path / "resolved_config.json").read_text())
        assert echo["problem"]["seed"] == 7 and echo["trials"] == 50

    def test_pseudoinverse_on_unidentifiable_problem(self, runner, tmp_path):
        result = runner.invoke(cli, ["simulate", "--spec", "example_two", "--out", str(tmp_path),
                                     "--horizon", "50", "--trials", "2", "--estimators", "pi"])
        assert result.exit_code == 1
        assert "rank" in result.output
        assert not (tmp_path / "error_vs_pulls.csv").exists()

    def test_repeated_runs_are_byte_identical(self, runner, tmp_path):
        outputs = []
        for run in ("a", "b"):
            out = tmp_path / run
            result = runner.invoke(cli, ["simulate", "--spec", "example_one", "--out", str(out),
                                         "--horizon", "300", "--trials", "6", "--seed", "11",
                                         "--policies", "ub,lb", "--estimators", "mle"])
            assert result.exit_code == 0, result.output
            outputs.append({name: (out / name).read_bytes()
                            for name in ("error_vs_pulls.csv", "arm_pulls.csv", "pulls_to_target.csv")})
        assert outputs[0] == outputs[1]

    def test_fixed_fraction_is_tuned_when_alpha_missing(self, runner, tmp_path):
        result = runner.invoke(cli, ["simulate", "--spec", "example_one", "--out", str(tmp_path),
                                     "--horizon", "100", "--trials", "2", "--policies", "fixed",
                                     "--estimators", "mle"])
        assert result.exit_code == 0, result.output
        echo = json.loads((tmp_path / "resolved_config.json").read_text())
        assert echo["configurations"][0]["label"] == "Baseline+MLest"
        assert sum(echo["configurations"][0]["alpha"]) == pytest.approx(1.0)

    def test_invalid_trials(self, runner, tmp_path):
        result = runner.invoke(cli, ["simulate", "--spec", "example_one", "--out", str(tmp_path), "--trials", "0"])
        assert result.exit_code == 1


class TestCrlb:
    def test_example_one(self, runner, tmp_path):
        result = runner.invoke(cli, ["crlb", "--spec", "example_one", "--out", str(tmp_path)])
        assert result.exit_code == 0, result.output
        summary = json.loads((tmp_path / "crlb_allocation.json").read_text())
        assert summary["t"] == 1000
        assert sum(summary["alpha"]) == pytest.approx(1.0)
        assert summary["bound"] > 0
        slices = read_csv(tmp_path / "crlb_slices.csv")
        assert {int(r["arm"]) for r in slices} == {1, 2, 3}

    def test_single_arm(self, runner, tmp_path):
        spec_file = tmp_path / "identity.json"
        spec_file.write_text(json.dumps({"alphabet_size": 3, "arms": [["x", "y", "z"]],
                                         "distribution": [0.2, 0.3, 0.5]}))
        result = runner.invoke(cli, ["crlb", "--spec", str(spec_file), "--out", str(tmp_path)])
        assert result.exit_code == 0, result.output
        summary = json.loads((tmp_path / "crlb_allocation.json").read_text())
        assert summary["alpha"] == [1.0]
        assert summary["bound"] == pytest.approx(6.2e-4)

    def test_unidentifiable(self, runner, tmp_path):
        result = runner.invoke(cli, ["crlb", "--spec", "example_two", "--out", str(tmp_path)])
        assert result.exit_code == 1


class TestReproduce:
    def test_small_bundle(self, runner, tmp_path):
        result = runner.invoke(cli, ["reproduce", "--out", str(tmp_path), "--horizon", "60", "--trials", "2"])
        assert result.exit_code == 0, result.output
        summary = read_csv(tmp_path / "summary.csv")
        policies = [r["policy"] for r in summary if r["problem"] == "example_one"]
        assert policies == ["LBpull+MLest", "UBpull+MLest", "RRpull+MLest", "RRpull+PIest"]
        assert {r["problem"] for r in summary} == {"example_one", "seven_symbol", "seven_symbol_shifted"}
        excess = read_csv(tmp_path / "baseline_excess.csv")
        assert {(r["problem"], r["policy"]) for r in excess} == {
            ("seven_symbol", "UBpull+MLest"), ("seven_symbol", "LBpull+MLest"),
            ("seven_symbol_shifted", "UBpull+MLest"), ("seven_symbol_shifted", "LBpull+MLest"),
        }
        assert (tmp_path / "seven_symbol_shifted_error_vs_pulls.csv").exists()
        echo = json.loads((tmp_path / "seven_symbol_shifted_resolved_config.json").read_text())
        assert echo["problem"]["distribution"] == [0.4, 0.25, 0.2, 0.05, 0.025, 0.025, 0.05]
