import json

import pytest

from lpm.cli import main

FAST = ["--restarts", "1", "--max-iter", "800", "--tol", "1e-8"]


def run(argv):
    return main([str(a) for a in argv])


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    """synth -> train -> fit -> baseline -> report, shared across tests."""
    out = tmp_path_factory.mktemp("pipeline")
    assert run(["synth", "--preset", "lovo_like", "--seed", "3",
                "--out-dir", out]) == 0
    hist_dir = out / "histograms"
    assert run(["train", "--histograms", hist_dir, "--n-control", "3",
                "--n-treatment", "2", "--seed", "3", "--out-dir", out]
               + FAST) == 0
    assert run(["fit", "--model", out / "model.json", "--histograms", hist_dir,
                "--cohort", "treated", "--seed", "3", "--out-dir", out]) == 0
    assert run(["baseline", "--histograms", hist_dir, "--seed", "3",
                "--out-dir", out]) == 0
    assert run(["report", "--model", out / "model.json",
                "--response", out / "response_treated.csv",
                "--seed", "3", "--out-dir", out]) == 0
    return out


class TestPipeline:
    def test_synth_artifacts(self, pipeline):
        hists = list((pipeline / "histograms").glob("*.json"))
        assert len(hists) == 18  # 8 control + 10 treated
        truth = json.loads((pipeline / "ground_truth.json").read_text())
        assert truth["n_control_components"] == 3
        assert truth["n_treatment_components"] == 2
        assert "run" in truth

    def test_model_written(self, pipeline):
        model = json.loads((pipeline / "model.json").read_text())
        assert model["n_control"] == 3
        assert model["n_treatment"] == 2

    def test_response_csv_has_seed_comment(self, pipeline):
        text = (pipeline / "response_treated.csv").read_text()
        assert text.startswith("# seed=3 config_hash=")
        assert "combined" in text

    def test_baseline_csv(self, pipeline):
        text = (pipeline / "baseline.csv").read_text()
        assert "mean_adc_change" in text
        assert "combined" in text

    def test_report_artifacts(self, pipeline):
        assert (pipeline / "report.txt").exists()
        assert (pipeline / "effect_bars.svg").read_text().startswith("<svg")
        assert (pipeline / "components.svg").read_text().startswith("<svg")


class TestIngest:
    def test_voxels_roundtrip(self, tmp_path):
        out = tmp_path / "synth"
        assert run(["synth", "--preset", "lovo_like", "--seed", "1",
                    "--out-dir", out, "--emit-voxels"]) == 0
        ingest_out = tmp_path / "ingest"
        assert run(["ingest", "--voxels", out / "voxels.csv",
                    "--out-dir", ingest_out]) == 0
        original = json.loads(
            (out / "histograms" / "ctl01.json").read_text())
        rebuilt = json.loads(
            (ingest_out / "histograms" / "ctl01.json").read_text())
        assert rebuilt["counts"] == original["counts"]
        summary = json.loads((ingest_out / "ingest_summary.json").read_text())
        assert len(summary["tumors"]) == 18
        assert summary["rejected_rows"] == []

    def test_bad_rows_survivable(self, tmp_path):
        path = tmp_path / "voxels.csv"
        path.write_text("tumor_id,cohort,timepoint,adc\n"
                        "t1,control,0,0.001\n"
                        "t1,control,0,banana\n")
        assert run(["ingest", "--voxels", path, "--out-dir", tmp_path]) == 0
        summary = json.loads((tmp_path / "ingest_summary.json").read_text())
        assert len(summary["rejected_rows"]) == 1

    def test_all_rows_bad_is_input_error(self, tmp_path):
        path = tmp_path / "voxels.csv"
        path.write_text("tumor_id,cohort,timepoint,adc\n"
                        "t1,control,0,banana\n")
        assert run(["ingest", "--voxels", path, "--out-dir", tmp_path]) == 2


class TestExitCodes:
    def test_missing_file_is_input_error(self, tmp_path):
        assert run(["ingest", "--voxels", tmp_path / "nope.csv",
                    "--out-dir", tmp_path]) == 2

    def test_malformed_header_is_input_error(self, tmp_path):
        path = tmp_path / "voxels.csv"
        path.write_text("a,b\n1,2\n")
        assert run(["ingest", "--voxels", path, "--out-dir", tmp_path]) == 2

    def test_unknown_preset_is_input_error(self, tmp_path):
        assert run(["synth", "--preset", "nope", "--out-dir", tmp_path]) == 2

    def test_report_missing_inputs_is_input_error(self, tmp_path):
        assert run(["report", "--model", tmp_path / "nope.json",
                    "--response", tmp_path / "nope.csv",
                    "--out-dir", tmp_path]) == 2


class TestConfigFile:
    def test_config_supplies_values(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("preset = hct_like\nseed = 9\n")
        out = tmp_path / "out"
        assert run(["synth", "--config", cfg, "--out-dir", out]) == 0
        hists = list((out / "histograms").glob("*.json"))
        assert len(hists) == 28  # 13 control + 15 treated

    def test_cli_flag_wins_over_config(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("preset = hct_like\n")
        out = tmp_path / "out"
        assert run(["synth", "--config", cfg, "--preset", "lovo_like",
                    "--out-dir", out]) == 0
        assert len(list((out / "histograms").glob("*.json"))) == 18

    def test_bad_config_line_is_input_error(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("this is not key value\n")
        assert run(["synth", "--config", cfg, "--out-dir", tmp_path]) == 2


class TestDeterminism:
    def test_synth_outputs_byte_identical(self, tmp_path):
        outs = []
        for name in ("a", "b"):
            out = tmp_path / name
            assert run(["synth", "--preset", "lovo_like", "--seed", "5",
                        "--out-dir", out]) == 0
            outs.append(out)
        for p in sorted((outs[0] / "histograms").glob("*.json")):
            q = outs[1] / "histograms" / p.name
            assert p.read_bytes() == q.read_bytes()
        assert ((outs[0] / "ground_truth.json").read_bytes()
                == (outs[1] / "ground_truth.json").read_bytes())
