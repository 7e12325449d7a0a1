import hashlib
import json

import numpy as np
import pytest

from stabsim import cli
from stabsim.cli import main, run_config, validate_config


def subspace_config(**overrides):
    cfg = {
        "experiment": "stabilize_subspace",
        "seed": 7777,
        "shots": 40,
        "workers": 1,
        "noise": {},
        "protocol": {"basis": "Z", "feedback": False, "rounds": 50, "target": 1},
    }
    cfg.update(overrides)
    return cfg


def write_config(tmp_path, cfg, name="config.json"):
    p = tmp_path / name
    p.write_text(json.dumps(cfg), encoding="utf-8")
    return p


def file_hashes(out_dir):
    return {p.name: hashlib.sha256(p.read_bytes()).hexdigest()
            for p in sorted(out_dir.iterdir()) if p.suffix in (".csv", ".json")}


class TestValidateConfig:
    def test_valid_config_has_no_issues(self):
        assert validate_config(subspace_config()) == []

    def test_gamma_out_of_range_named(self):
        cfg = subspace_config(noise={"gamma_dep": 1.5})
        issues = validate_config(cfg)
        assert len(issues) == 1
        assert "noise.gamma_dep" in issues[0] and "[0.0, 1.0]" in issues[0]

    def test_missing_bell_target_named(self):
        cfg = {
            "experiment": "stabilize_bell", "seed": 1, "shots": 10,
            "protocol": {"cycles": 5, "sample_points": [1]},
        }
        issues = validate_config(cfg)
        assert any("protocol.target" in i for i in issues)

    def test_all_violations_listed(self):
        cfg = {
            "experiment": "warp", "seed": -3, "shots": 0,
            "noise": {"gamma_leak": 2.0, "mystery": 1},
            "protocol": {},
        }
        issues = validate_config(cfg)
        for needle in ("experiment", "seed", "shots", "noise.gamma_leak", "noise.mystery"):
            assert any(needle in i for i in issues), needle

    def test_sample_points_range(self):
        cfg = {
            "experiment": "stabilize_bell", "seed": 1, "shots": 10,
            "protocol": {"target": "phi_plus", "cycles": 5, "sample_points": [9]},
        }
        issues = validate_config(cfg)
        assert any("sample_points" in i for i in issues)

    def test_theta_grid_forms(self):
        base = {"experiment": "single_round", "seed": 1, "shots": 10}
        ok_list = dict(base, protocol={"theta_grid": [0.1, 0.2]})
        ok_range = dict(base, protocol={"theta_grid": {"start": 0, "stop": 1, "num": 5}})
        bad = dict(base, protocol={"theta_grid": []})
        assert validate_config(ok_list) == []
        assert validate_config(ok_range) == []
        assert any("theta_grid" in i for i in validate_config(bad))


class TestRunConfig:
    def test_noiseless_subspace_outputs(self, tmp_path):
        out = tmp_path / "out"
        path = write_config(tmp_path, subspace_config(output_dir=str(out)))
        manifest = run_config(path)
        series = (out / "series.csv").read_text().splitlines()
        assert series[0] == ",".join(cli.SERIES_COLUMNS)
        assert len(series) == 51
        p_correct = [float(line.split(",")[5]) for line in series[1:]]
        assert all(p == 1.0 for p in p_correct)
        assert manifest["results"]["fit"]["rate"] == pytest.approx(0.0, abs=1e-6)
        assert json.loads((out / "manifest.json").read_text())["schema_version"] == "1"

    def test_same_seed_byte_identical(self, tmp_path):
        cfg = subspace_config(noise={"gamma_dep": 0.05, "gamma_leak": 0.003})
        out1, out2 = tmp_path / "a", tmp_path / "b"
        p1 = write_config(tmp_path, dict(cfg, output_dir=str(out1)), "c1.json")
        run_config(p1)
        run_config(p1, out_override=str(out2))
        h1, h2 = file_hashes(out1), file_hashes(out2)
        assert h1["series.csv"] == h2["series.csv"]

    def test_worker_count_does_not_change_bytes(self, tmp_path):
        cfg = subspace_config(noise={"gamma_dep": 0.05}, shots=30)
        out1, out2 = tmp_path / "w1", tmp_path / "w2"
        path = write_config(tmp_path, dict(cfg, output_dir=str(out1)))
        run_config(path)
        run_config(path, workers_override=2, out_override=str(out2))
        assert file_hashes(out1)["series.csv"] == file_hashes(out2)["series.csv"]

    def test_seed_override_changes_outputs(self, tmp_path):
        cfg = subspace_config(noise={"gamma_dep": 0.3}, shots=50)
        out1, out2 = tmp_path / "s1", tmp_path / "s2"
        path = write_config(tmp_path, dict(cfg, output_dir=str(out1)))
        run_config(path)
        run_config(path, seed_override=1234, out_override=str(out2))
        assert file_hashes(out1)["series.csv"] != file_hashes(out2)["series.csv"]

    def test_bell_outputs(self, tmp_path):
        out = tmp_path / "bell"
        cfg = {
            "experiment": "stabilize_bell", "seed": 5, "shots": 20,
            "output_dir": str(out),
            "protocol": {"target": "phi_plus", "cycles": 2, "sample_points": [1],
                         "fidelity_shots": 30, "input_state": {"kind": "mixed"}},
        }
        manifest = run_config(write_config(tmp_path, cfg))
        fid = (out / "fidelities.csv").read_text().splitlines()
        assert fid[0] == ",".join(cli.FIDELITY_COLUMNS)
        assert len(fid) == 2
        assert manifest["results"]["first_sample_fidelity"] == pytest.approx(1.0, abs=1e-9)

    def test_single_round_outputs(self, tmp_path):
        out = tmp_path / "sr"
        cfg = {
            "experiment": "single_round", "seed": 5, "shots": 50,
            "output_dir": str(out),
            "protocol": {"theta_grid": {"start": 0.2, "stop": 1.4, "num": 3}},
        }
        manifest = run_config(write_config(tmp_path, cfg))
        table = (out / "characterization.csv").read_text().splitlines()
        assert table[0] == ",".join(cli.CHARACTERIZATION_COLUMNS)
        assert len(table) == 4
        assert manifest["results"]["mean_f_qsp"] == pytest.approx(1.0, abs=1e-9)

    def test_correlations_outputs(self, tmp_path):
        out = tmp_path / "corr"
        cfg = {
            "experiment": "correlations", "seed": 5, "shots": 60,
            "output_dir": str(out),
            "noise": {"readout_bias0": 0.1},
            "protocol": {"mode": "subspace", "basis": "Z", "feedback": True,
                         "rounds": 12, "target": 1, "analysis_basis": "Z"},
        }
        run_config(write_config(tmp_path, cfg))
        corr = (out / "correlations.csv").read_text().splitlines()
        assert corr[0] == ",".join(cli.CORRELATION_COLUMNS)
        assert len(corr) == 5
        cond = (out / "conditional.csv").read_text().splitlines()
        assert cond[0] == ",".join(cli.CONDITIONAL_COLUMNS)
        assert len(cond) == 12

    def test_calibrated_open_loop_fit_in_manifest(self, tmp_path):
        out = tmp_path / "cal"
        cfg = subspace_config(
            shots=400, output_dir=str(out),
            noise={"gamma_dep": 0.06, "gamma_leak": 0.003},
            protocol={"basis": "Z", "feedback": False, "rounds": 50, "target": -1})
        manifest = run_config(write_config(tmp_path, cfg))
        fit = manifest["results"]["fit"]
        assert fit["model"] == "exponential"
        assert 0.05 <= fit["rate"] <= 0.11

    def test_invalid_config_raises(self, tmp_path):
        path = write_config(tmp_path, subspace_config(shots=0))
        with pytest.raises(cli.ConfigError):
            run_config(path)


class TestMain:
    def test_run_exit_codes(self, tmp_path, capsys):
        out = tmp_path / "ok"
        path = write_config(tmp_path, subspace_config(output_dir=str(out), rounds=6))
        assert main(["run", str(path)]) == 0
        assert "series.csv" in capsys.readouterr().out

    def test_validate_good_and_bad(self, tmp_path, capsys):
        good = write_config(tmp_path, subspace_config(), "good.json")
        assert main(["validate", str(good)]) == 0
        bad = write_config(tmp_path, subspace_config(shots=-1), "bad.json")
        assert main(["validate", str(bad)]) == 2
        assert "shots" in capsys.readouterr().out

    def test_missing_config_is_config_error(self, tmp_path):
        assert main(["run", str(tmp_path / "nope.json")]) == 2

    def test_unwritable_output_dir_is_runtime_error(self, tmp_path):
        blocker = tmp_path / "blocker"
        blocker.write_text("")
        cfg = subspace_config(output_dir=str(blocker / "sub"), rounds=5)
        path = write_config(tmp_path, cfg)
        assert main(["run", str(path)]) == 3

    def test_flag_overrides(self, tmp_path):
        out = tmp_path / "flagged"
        path = write_config(tmp_path, subspace_config(rounds=5))
        assert main(["run", str(path), "--seed", "42", "--workers", "2",
                     "--out", str(out)]) == 0
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["seed"] == 42
        # Worker count is an execution detail and must not reach the outputs.
        assert "workers" not in manifest
