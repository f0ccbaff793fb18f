import csv
import json

import numpy as np
import pytest

from adaptrd.cli import main
from adaptrd.config import PRESET_NAMES, apply_overrides, load_config_payload, parse_config
from adaptrd.errors import ConfigError
from adaptrd.harness import run_scenario, scenario_preset
from adaptrd.seeds import SeedStream
from adaptrd.trialio import read_trial_csv, write_trial_csv


def run_cli(*argv) -> int:
    return main(list(argv))


SMALL = ["--override", "n_patients=600", "--seed", "7"]


class TestConfigModule:
    def test_all_bundled_presets_parse(self):
        for name in PRESET_NAMES:
            payload = load_config_payload(name)
            config = parse_config(payload)
            assert config.scenario_id == int(name[-1])

    def test_mutated_preset_rejected(self):
        payload = load_config_payload("scenario1")
        payload["initial_threshold"] = 1.5
        with pytest.raises(ConfigError, match="threshold"):
            parse_config(payload)

    def test_unknown_top_level_key_rejected(self):
        payload = load_config_payload("scenario1")
        payload["n_patient"] = 100  # typo'd key
        with pytest.raises(ConfigError, match="n_patient"):
            parse_config(payload)

    def test_unknown_nested_key_rejected(self):
        payload = load_config_payload("scenario1")
        payload["estimator"]["bandwidht"] = 0.05
        with pytest.raises(ConfigError, match="bandwidht"):
            parse_config(payload)

    def test_overrides_dotted_keys(self):
        payload = load_config_payload("scenario3")
        apply_overrides(payload, ["threshold_strategy.nnt=4.5", "n_patients=500"])
        config = parse_config(payload)
        assert config.threshold_strategy.nnt == 4.5
        assert config.n_patients == 500

    def test_bad_override_format(self):
        with pytest.raises(ConfigError, match="key=value"):
            apply_overrides({}, ["oops"])

    def test_missing_config_lists_presets(self):
        with pytest.raises(ConfigError, match="scenario1"):
            load_config_payload("nonexistent.json")


class TestTrialIo:
    def test_trial_roundtrip_exact(self, tmp_path):
        trial = run_scenario(scenario_preset(1, seed=3, n_patients=600))
        path = tmp_path / "trial.csv"
        write_trial_csv(trial, path)
        logged = read_trial_csv(path)
        assert np.array_equal(logged.raw_risk, trial.raw_risk)
        assert np.array_equal(logged.outcome, trial.outcome)
        assert np.array_equal(logged.treatment, trial.treatment)
        assert np.array_equal(logged.covariates.age, trial.covariates.age)
        assert logged.column_pairs[0] == (0, 0.1)


class TestSimulate:
    def test_outputs_and_summary(self, tmp_path):
        out = tmp_path / "run"
        code = run_cli("simulate", "--config", "scenario1", "--out", str(out), *SMALL)
        assert code == 0
        for name in ("trial.csv", "events.csv", "curve.csv", "summary.json", "matrix.csv"):
            assert (out / name).exists(), name
        summary = json.loads((out / "summary.json").read_text())
        assert summary["scenario"] == 1
        assert "final_threshold" in summary
        ate = summary["local_ate"]["methods"]["adaptive_rd"]
        assert ate["estimate"] is not None and ate["ci_low"] < ate["estimate"] < ate["ci_high"]

    def test_override_row_count(self, tmp_path):
        out = tmp_path / "run"
        run_cli("simulate", "--config", "scenario1", "--out", str(out),
                "--override", "n_patients=200", "--override", "warmup=100", "--seed", "3")
        with (out / "trial.csv").open() as fh:
            rows = list(csv.reader(fh))
        assert len(rows) == 201  # header + 200 records

    def test_invalid_scenario_exits_2(self, tmp_path, capsys):
        code = run_cli("simulate", "--config", "scenario1", "--out", str(tmp_path / "x"),
                       "--override", "scenario=9")
        assert code == 2
        assert "scenario" in capsys.readouterr().err

    def test_svg_emitted(self, tmp_path):
        out = tmp_path / "run"
        run_cli("simulate", "--config", "scenario1", "--out", str(out), "--svg", *SMALL)
        svg = (out / "curve.svg").read_text()
        assert svg.startswith("<svg") and "polyline" in svg


class TestEstimateReplay:
    def test_bitwise_replay(self, tmp_path):
        out = tmp_path / "run"
        run_cli("simulate", "--config", "scenario2", "--out", str(out), *SMALL)
        replay = tmp_path / "replay"
        code = run_cli("estimate", "--trial", str(out / "trial.csv"),
                       "--matrix", str(out / "matrix.csv"),
                       "--config", "scenario2", "--out", str(replay))
        assert code == 0
        assert (out / "curve.csv").read_bytes() == (replay / "curve.csv").read_bytes()

    def test_custom_grid_row_count(self, tmp_path):
        out = tmp_path / "run"
        run_cli("simulate", "--config", "scenario2", "--out", str(out), *SMALL)
        replay = tmp_path / "grid"
        run_cli("estimate", "--trial", str(out / "trial.csv"),
                "--matrix", str(out / "matrix.csv"), "--config", "scenario2",
                "--out", str(replay), "--grid", "-0.1:0.1:0.01")
        with (replay / "curve.csv").open() as fh:
            rows = list(csv.reader(fh))
        assert len(rows) == 22  # header + 21 grid points

    def test_truncated_trial_file_exits_2(self, tmp_path, capsys):
        out = tmp_path / "run"
        run_cli("simulate", "--config", "scenario2", "--out", str(out), *SMALL)
        trial_path = out / "trial.csv"
        lines = trial_path.read_text().splitlines()
        lines[5] = lines[5].split(",")[0]  # mangle one row
        trial_path.write_text("\n".join(lines) + "\n")
        code = run_cli("estimate", "--trial", str(trial_path),
                       "--matrix", str(out / "matrix.csv"),
                       "--config", "scenario2", "--out", str(tmp_path / "z"))
        assert code == 2
        assert "line" in capsys.readouterr().err


class TestReplicate:
    def test_deterministic_report(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        for out in (a, b):
            code = run_cli("replicate", "--config", "scenario2", "--out", str(out),
                           "--replications", "3", *SMALL)
            assert code == 0
        assert (a / "report.json").read_bytes() == (b / "report.json").read_bytes()

    def test_worker_invariance_and_errors_csv(self, tmp_path):
        a, b = tmp_path / "w1", tmp_path / "w2"
        run_cli("replicate", "--config", "scenario2", "--out", str(a),
                "--replications", "4", "--workers", "1", *SMALL)
        run_cli("replicate", "--config", "scenario2", "--out", str(b),
                "--replications", "4", "--workers", "2", *SMALL)
        assert (a / "report.json").read_bytes() == (b / "report.json").read_bytes()
        with (a / "errors.csv").open() as fh:
            rows = list(csv.DictReader(fh))
        assert {r["method"] for r in rows} >= {"adaptive_rd", "naive"}
        report = json.loads((a / "report.json").read_text())
        assert report["n_replications"] == 4

    def test_boxplot_svg(self, tmp_path):
        out = tmp_path / "r"
        run_cli("replicate", "--config", "scenario2", "--out", str(out),
                "--replications", "3", "--svg", *SMALL)
        assert (out / "errors_boxplot.svg").exists()


class TestRisk:
    HEADER = "age,sex,race,systolic_bp,total_chol,hdl_chol,smoker,diabetes,bp_treated\n"

    def test_other_race_reports_white_subgroup(self, tmp_path):
        src = tmp_path / "in.csv"
        src.write_text(self.HEADER + "55.0,male,other,120.0,213.0,50.0,0,0,0\n")
        dst = tmp_path / "out.csv"
        assert run_cli("risk", "--input", str(src), "--output", str(dst)) == 0
        with dst.open() as fh:
            rows = list(csv.DictReader(fh))
        assert rows[0]["subgroup"] == "white_male"

    def test_empty_file_gives_empty_output_with_header(self, tmp_path):
        src = tmp_path / "in.csv"
        src.write_text(self.HEADER)
        dst = tmp_path / "out.csv"
        assert run_cli("risk", "--input", str(src), "--output", str(dst)) == 0
        lines = dst.read_text().splitlines()
        assert len(lines) == 1 and lines[0].endswith("subgroup,risk")

    def test_risks_in_unit_interval(self, tmp_path):
        from adaptrd.cohort import DEFAULT_COHORT_PARAMS, sample_cohort, save_cohort_csv

        table = sample_cohort(DEFAULT_COHORT_PARAMS, SeedStream(55), 80)
        src = tmp_path / "in.csv"
        save_cohort_csv(src, table.patients())
        dst = tmp_path / "out.csv"
        run_cli("risk", "--input", str(src), "--output", str(dst))
        with dst.open() as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 80
        assert all(0.0 <= float(r["risk"]) <= 1.0 for r in rows)

    def test_bad_row_exits_2(self, tmp_path, capsys):
        src = tmp_path / "in.csv"
        src.write_text(self.HEADER + "30.0,male,white,120.0,213.0,50.0,0,0,0\n")
        code = run_cli("risk", "--input", str(src), "--output", str(tmp_path / "o.csv"))
        assert code == 2
        assert "age" in capsys.readouterr().err


class TestValidateConfig:
    def test_all_presets_accepted(self, capsys):
        for name in PRESET_NAMES:
            assert run_cli("validate-config", "--config", name) == 0

    def test_out_of_range_field_rejected(self, capsys):
        code = run_cli("validate-config", "--config", "scenario1",
                       "--override", "estimator.bandwidth=-1")
        assert code == 2
        assert "bandwidth" in capsys.readouterr().err.lower()

    def test_each_preset_rejects_one_mutation(self):
        mutations = {
            "scenario1": "threshold_strategy.target_rate=1.5",
            "scenario2": "outcome.params.sigma=-1",
            "scenario3": "threshold_strategy.nnt=0.5",
            "scenario4": "model_strategy.shrink_n0=0",
            "scenario5": "initial_threshold=0.0",
        }
        for name, override in mutations.items():
            assert run_cli("validate-config", "--config", name, "--override", override) == 2
