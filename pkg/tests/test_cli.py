import json
from importlib import resources

import numpy as np
import pytest

from otlab.cli import main
from otlab.config import RunConfig
from otlab.errors import ConfigError


def default_config_dict():
    with resources.files("otlab.data").joinpath("default_config.json").open() as fh:
        return json.load(fh)


def small_config(tmp_path, **updates):
    cfg = default_config_dict()
    cfg["grid"]["m_per_axis"] = 9
    for key, value in updates.items():
        section, _, leaf = key.partition(".")
        if leaf:
            cfg[section][leaf] = value
        else:
            cfg[section] = value
    path = tmp_path / "config.json"
    path.write_text(json.dumps(cfg))
    return path


class TestConfig:
    def test_bundled_default_is_valid(self):
        cfg = RunConfig.default()
        assert cfg.apriori().lam == 1.5
        assert cfg.grid().m_per_axis == 17
        assert len(cfg.fingerprint()) == 16

    def test_missing_lambda_pointer(self):
        data = default_config_dict()
        del data["apriori"]["lambda"]
        with pytest.raises(ConfigError) as err:
            RunConfig.from_dict(data)
        assert err.value.pointer == "/apriori/lambda"

    def test_bad_types_rejected(self):
        data = default_config_dict()
        data["apriori"]["k"] = "fast"
        with pytest.raises(ConfigError) as err:
            RunConfig.from_dict(data)
        assert err.value.pointer == "/apriori/k"

    def test_fingerprint_tracks_content(self):
        a = RunConfig.default()
        data = default_config_dict()
        data["apriori"]["k"] = 0.11
        b = RunConfig.from_dict(data)
        assert a.fingerprint() != b.fingerprint()

    def test_medium_from_raw_sample_arrays(self):
        data = default_config_dict()
        data["grid"]["m_per_axis"] = 9
        data["medium"]["mu_a"] = [1.0] * 9**3
        cfg = RunConfig.from_dict(data)
        grid = cfg.grid()
        med = cfg.medium(grid)
        assert med.mu_a.shape == (grid.num_points,)
        assert med.admissibility_violations() == []


class TestCliExitCodes:
    def test_check_on_bundled_default(self, tmp_path):
        out = tmp_path / "out"
        assert main(["check", "--out", str(out)]) == 0
        report = json.loads((out / "check_report.json").read_text())
        assert report["k_admissible"] is True
        assert report["k_ranges"]["k0"] == pytest.approx(0.129215, abs=1e-5)
        assert "config_fingerprint" in report
        assert report["module_versions"]["otlab"]

    def test_missing_lambda_exits_2(self, tmp_path, capsys):
        cfg = default_config_dict()
        del cfg["apriori"]["lambda"]
        path = tmp_path / "bad.json"
        path.write_text(json.dumps(cfg))
        code = main(["check", "--config", str(path), "--out", str(tmp_path / "o")])
        assert code == 2
        assert "/apriori/lambda" in capsys.readouterr().err

    def test_invalid_json_exits_2(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text("{not json")
        assert main(["check", "--config", str(path), "--out", str(tmp_path / "o")]) == 2

    def test_inadmissible_check_exits_3(self, tmp_path):
        path = small_config(tmp_path, **{"medium.mu_a": "3"})  # above lam
        assert main(["check", "--config", str(path), "--out", str(tmp_path / "o")]) == 3


class TestCliCommands:
    def test_solve_with_slice(self, tmp_path):
        path = small_config(tmp_path)
        out = tmp_path / "out"
        code = main(
            ["solve", "--config", str(path), "--out", str(out), "--dump-slice", "z=0.0"]
        )
        assert code == 0
        report = json.loads((out / "solve_report.json").read_text())
        assert report["interior_residual_sup"] < 1e-9
        lines = (out / "solve_slice.csv").read_text().splitlines()
        assert lines[0].startswith("# config_fingerprint=")
        header = [l for l in lines if not l.startswith("#")][0]
        assert header == "u,v,re,im"

    def test_dn_save_load_roundtrip(self, tmp_path):
        path = small_config(tmp_path)
        saved = tmp_path / "dn.npz"
        out1, out2 = tmp_path / "o1", tmp_path / "o2"
        assert main(["dn", "--config", str(path), "--out", str(out1), "--save", str(saved)]) == 0
        assert main(["dn", "--config", str(path), "--out", str(out2), "--load", str(saved)]) == 0
        r1 = json.loads((out1 / "dn_report.json").read_text())
        r2 = json.loads((out2 / "dn_report.json").read_text())
        assert r1["operator_norm"] == pytest.approx(r2["operator_norm"], rel=1e-12)
        assert r1["bilinear_symmetry_residual"] <= 1e-12

    def test_stability_report_has_slopes(self, tmp_path):
        path = small_config(tmp_path, **{"experiments.stability": {
            "profile_order": 0, "h": 0, "eps_start": 0.2, "eps_count": 3,
            "width": 0.3, "depth": 0.4}})
        out = tmp_path / "out"
        code = main(["stability", "--config", str(path), "--out", str(out)])
        assert code == 0
        report = json.loads((out / "stability_report.json").read_text())
        assert np.isfinite(report["observed_slopes"]["boundary_values"])
        assert (out / "stability_loglog.svg").exists()
        rows = (out / "stability_rows.csv").read_text().splitlines()
        assert any(line.startswith("eps,") for line in rows)

    def test_gegenbauer_table(self, tmp_path):
        out = tmp_path / "out"
        assert main(["gegenbauer-table", "--out", str(out), "--max-m", "4", "--n", "4"]) == 0
        lines = (out / "gegenbauer_coefficients.csv").read_text().splitlines()
        data = [l for l in lines if not l.startswith("#")]
        # degrees 0..4 contribute 1+1+2+2+3 coefficient rows plus the header
        assert len(data) == 10

    def test_singular_decay_outputs(self, tmp_path):
        # the annulus needs the default 17^3 grid; 9^3 cannot hold it
        cfg = default_config_dict()
        cfg["experiments"]["singular"] = {"m": 0, "r_min_cells": 3, "r_max": 0.45}
        path = tmp_path / "config.json"
        path.write_text(json.dumps(cfg))
        out = tmp_path / "out"
        assert main(["singular", "--config", str(path), "--out", str(out)]) == 0
        report = json.loads((out / "singular_report.json").read_text())
        assert "exponent_w" in report and "candidate_exponents" in report
        assert (out / "singular_decay.svg").exists()

    def test_byte_identical_reruns(self, tmp_path):
        path = small_config(tmp_path)
        out1, out2 = tmp_path / "r1", tmp_path / "r2"
        for out in (out1, out2):
            assert main(["check", "--config", str(path), "--out", str(out)]) == 0
            assert main(["gegenbauer-table", "--config", str(path), "--out", str(out)]) == 0
        for name in ("check_report.json", "gegenbauer_coefficients.csv"):
            assert (out1 / name).read_bytes() == (out2 / name).read_bytes()
