import csv
import hashlib
import json
import subprocess
import sys

import pytest

from porophys.cli import (
    EXIT_BAD_CONFIG,
    EXIT_BAD_DATA,
    EXIT_MISSING_FILE,
    EXIT_OK,
    main,
)
from porophys.dataio import SynthSpec, generate_synthetic


@pytest.fixture(scope="module")
def synth_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("synth")
    generate_synthetic(SynthSpec(n_parts=30, noise_sigma=0.03, seed=5), out)
    return out


def _digest(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


class TestSynthCommand:
    def test_writes_dataset_and_run_config(self, tmp_path):
        out = tmp_path / "ds"
        code = main(["synth", "--out", str(out), "--parts", "20", "--seed", "7"])
        assert code == EXIT_OK
        for name in ("parts.csv", "porosity.csv", "setup.json", "manifest.json",
                     "run_config.json"):
            assert (out / name).exists()
        config = json.loads((out / "run_config.json").read_text())
        assert config["command"] == "synth" and config["seed"] == 7

    def test_same_seed_identical_checksums(self, tmp_path):
        main(["synth", "--out", str(tmp_path / "a"), "--parts", "20", "--seed", "7",
              "--noise", "0.05"])
        main(["synth", "--out", str(tmp_path / "b"), "--parts", "20", "--seed", "7",
              "--noise", "0.05"])
        for name in ("parts.csv", "porosity.csv", "setup.json", "manifest.json"):
            assert _digest(tmp_path / "a" / name) == _digest(tmp_path / "b" / name)

    def test_no_writes_outside_out_dir(self, tmp_path, monkeypatch):
        workdir = tmp_path / "cwd"
        workdir.mkdir()
        monkeypatch.chdir(workdir)
        main(["synth", "--out", str(tmp_path / "only_here"), "--parts", "9"])
        assert list(workdir.iterdir()) == []


class TestPhysicsProbe:
    def test_vertical_probe_json(self, capsys):
        assert main(["physics", "probe", "--theta-deg", "0"]) == EXIT_OK
        doc = json.loads(capsys.readouterr().out)
        assert doc["abs_pressure_pa"] == doc["vertical_pressure_pa"]
        assert doc["horizontal_pressure_pa"] == 0.0
        assert doc["photon"]["total_force_n"] == pytest.approx(160.0 / 2.99792458e8)

    def test_angled_probe(self, capsys):
        assert main(["physics", "probe", "--theta-deg", "60"]) == EXIT_OK
        doc = json.loads(capsys.readouterr().out)
        assert doc["projection_area_mm2"] == pytest.approx(
            2.0 * 3.141592653589793 * 0.025**2, rel=1e-9
        )

    def test_grazing_rejected(self, capsys):
        assert main(["physics", "probe", "--theta-deg", "90"]) == EXIT_BAD_CONFIG


class TestFeaturesCommand:
    def test_three_feature_csvs(self, synth_dir, tmp_path, capsys):
        out = tmp_path / "feat"
        code = main(["features", "--setup", str(synth_dir / "setup.json"),
                     "--out", str(out)])
        assert code == EXIT_OK
        widths = {"setting": 15, "physics": 16, "combined": 31}
        for kind, width in widths.items():
            with (out / f"features_{kind}.csv").open() as fh:
                rows = list(csv.reader(fh))
            assert rows[0][:2] == ["part_id", "model_kind"]
            assert len(rows[0]) == 2 + width
            assert len(rows) == 1 + 30
            assert rows[1][1] == kind


class TestTrainCommand:
    def test_persists_model(self, synth_dir, tmp_path):
        model_path = tmp_path / "model.json"
        code = main(["train", "--setup", str(synth_dir / "setup.json"),
                     "--porosity", str(synth_dir / "porosity.csv"),
                     "--model-kind", "physics", "--algorithm", "Linear",
                     "--target", "mean_d", "--out", str(model_path)])
        assert code == EXIT_OK
        doc = json.loads(model_path.read_text())
        assert doc["algorithm"] == "Linear"
        assert (tmp_path / "run_config.json").exists()

    def test_missing_porosity_file(self, synth_dir, tmp_path):
        code = main(["train", "--setup", str(synth_dir / "setup.json"),
                     "--porosity", str(tmp_path / "nope.csv"),
                     "--out", str(tmp_path / "m.json")])
        assert code == EXIT_MISSING_FILE


class TestEvaluateCommand:
    def test_comparison_outputs(self, synth_dir, tmp_path):
        out = tmp_path / "eval"
        code = main(["evaluate", "--setup", str(synth_dir / "setup.json"),
                     "--porosity", str(synth_dir / "porosity.csv"),
                     "--out", str(out), "--folds", "4", "--metric", "percentage",
                     "--algorithms", "Linear", "--targets", "mean_d", "max_d",
                     "--no-figures", "--jobs", "1"])
        assert code == EXIT_OK
        with (out / "comparison_matrix.csv").open() as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["category", "model", "algorithm", "target", "error", "n_samples"]
        assert len(rows) == 1 + 4 * 3 * 1 * 2  # categories x kinds x algorithms x targets
        assert (out / "comparison_matrix.json").exists()
        assert (out / "run_config.json").exists()
        assert not list(out.glob("*.png"))

    def test_figures_rendered_by_default(self, synth_dir, tmp_path):
        out = tmp_path / "evalfig"
        code = main(["evaluate", "--setup", str(synth_dir / "setup.json"),
                     "--porosity", str(synth_dir / "porosity.csv"),
                     "--out", str(out), "--folds", "3",
                     "--algorithms", "Linear", "--targets", "mean_d", "--jobs", "2"])
        assert code == EXIT_OK
        pngs = sorted(p.name for p in out.glob("*.png"))
        assert "comparison_all.png" in pngs

    def test_malformed_porosity_is_data_error(self, synth_dir, tmp_path):
        bad = tmp_path / "bad.csv"
        bad.write_text("part_id,max_d_um\nP0000,100\n")
        code = main(["evaluate", "--setup", str(synth_dir / "setup.json"),
                     "--porosity", str(bad), "--out", str(tmp_path / "o")])
        assert code == EXIT_BAD_DATA

    def test_bad_gate_is_config_error(self, synth_dir, tmp_path):
        code = main(["evaluate", "--setup", str(synth_dir / "setup.json"),
                     "--porosity", str(synth_dir / "porosity.csv"),
                     "--out", str(tmp_path / "o"),
                     "--gate-pass", "300", "--gate-fail", "200"])
        assert code == EXIT_BAD_CONFIG


class TestExplainCommand:
    def test_maps_regions_and_figures(self, synth_dir, tmp_path):
        out = tmp_path / "explain"
        code = main(["explain", "--setup", str(synth_dir / "setup.json"),
                     "--porosity", str(synth_dir / "porosity.csv"),
                     "--out", str(out), "--targets", "mean_d"])
        assert code == EXIT_OK
        csvs = list(out.glob("map_*.csv"))
        pngs = list(out.glob("map_*.png"))
        assert len(csvs) == 16 and len(pngs) == 16
        regions = json.loads((out / "regions.json").read_text())
        assert isinstance(regions, list)
        with csvs[0].open() as fh:
            header = next(csv.reader(fh))
        assert header == ["part_id", "effect_norm", "effect_raw",
                          "porosity_norm", "porosity_raw", "outlier_flag"]

    def test_rerun_byte_identical_csv_json(self, synth_dir, tmp_path):
        args = lambda out: ["explain", "--setup", str(synth_dir / "setup.json"),
                            "--porosity", str(synth_dir / "porosity.csv"),
                            "--out", str(out), "--targets", "max_d", "--no-figures"]
        main(args(tmp_path / "a"))
        main(args(tmp_path / "b"))
        compared = 0
        for path_a in sorted((tmp_path / "a").glob("*")):
            if path_a.name == "run_config.json":  # records the differing --out
                continue
            path_b = tmp_path / "b" / path_a.name
            assert path_a.read_bytes() == path_b.read_bytes()
            compared += 1
        assert compared == 17  # 16 maps + regions.json


class TestConfigReplay:
    def test_run_config_reproduces_run(self, tmp_path):
        main(["synth", "--out", str(tmp_path / "a"), "--parts", "15",
              "--seed", "3", "--noise", "0.04"])
        config = json.loads((tmp_path / "a" / "run_config.json").read_text())
        config["out"] = str(tmp_path / "b")
        replay = tmp_path / "replay.json"
        replay.write_text(json.dumps(config))
        assert main(["synth", "--config", str(replay)]) == EXIT_OK
        for name in ("parts.csv", "porosity.csv", "manifest.json"):
            assert (tmp_path / "a" / name).read_bytes() == \
                   (tmp_path / "b" / name).read_bytes()

    def test_explicit_flag_overrides_config(self, tmp_path):
        main(["synth", "--out", str(tmp_path / "a"), "--parts", "15", "--seed", "3",
              "--noise", "0.04"])
        config = json.loads((tmp_path / "a" / "run_config.json").read_text())
        config["out"] = str(tmp_path / "c")
        replay = tmp_path / "replay.json"
        replay.write_text(json.dumps(config))
        assert main(["synth", "--config", str(replay), "--seed", "4"]) == EXIT_OK
        assert (tmp_path / "c" / "porosity.csv").read_bytes() != \
               (tmp_path / "a" / "porosity.csv").read_bytes()

    def test_unknown_config_key_rejected(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps({"command": "synth", "bogus": 1}))
        assert main(["synth", "--config", str(bad),
                     "--out", str(tmp_path / "x")]) == EXIT_BAD_CONFIG

    def test_command_mismatch_rejected(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps({"command": "explain"}))
        assert main(["synth", "--config", str(bad),
                     "--out", str(tmp_path / "x")]) == EXIT_BAD_CONFIG


class TestEntryPoint:
    def test_console_script_help(self):
        proc = subprocess.run([sys.executable, "-m", "porophys.cli", "--help"],
                              capture_output=True, text=True)
        assert proc.returncode == 0
        assert "exit codes" in proc.stdout

    def test_unknown_flag_exits_2(self):
        proc = subprocess.run([sys.executable, "-m", "porophys.cli",
                               "synth", "--bogus"], capture_output=True, text=True)
        assert proc.returncode == 2
