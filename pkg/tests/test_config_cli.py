import json
import math

import numpy as np
import pytest

from cptkit.cli import main
from cptkit.config import DEFAULTS, effective_delta_12, load_config
from cptkit.errors import ConfigError


def _write_json(path, payload):
    path.write_text(json.dumps(payload))
    return str(path)


class TestConfig:
    def test_defaults_load_without_file(self):
        cfg = load_config(None)
        assert cfg["physics"]["delta_12_hz"] == 831e9
        assert cfg["seed"] == 0

    def test_deep_merge_preserves_siblings(self, tmp_path):
        p = _write_json(tmp_path / "c.json", {"physics": {"temperature_k": 2.0}})
        cfg = load_config(p)
        assert cfg["physics"]["temperature_k"] == 2.0
        assert cfg["physics"]["delta_12_hz"] == DEFAULTS["physics"]["delta_12_hz"]

    def test_unknown_key_rejected_with_path(self, tmp_path):
        p = _write_json(tmp_path / "c.json", {"fit": {"n_stars": 3}})
        with pytest.raises(ConfigError, match="fit.n_stars"):
            load_config(p)

    def test_unknown_section_rejected(self, tmp_path):
        p = _write_json(tmp_path / "c.json", {"fitting": {}})
        with pytest.raises(ConfigError, match="fitting"):
            load_config(p)

    def test_constant_overrides_fold_into_splitting(self, tmp_path):
        # doubling the quantum of energy per hertz doubles the effective
        # ground-state splitting used in the Boltzmann factor
        base = effective_delta_12(load_config(None))
        h0 = DEFAULTS["physics"]["h_planck_j_s"]
        p = _write_json(tmp_path / "c.json", {"physics": {"h_planck_j_s": 2.0 * h0}})
        doubled = effective_delta_12(load_config(p))
        assert math.isclose(doubled, 2.0 * base, rel_tol=1e-12)


@pytest.fixture
def spectrum_csv(tmp_path):
    """Small clean spectrum written through the CLI itself."""
    cfg = _write_json(
        tmp_path / "cfg.json",
        {"simulate": {"method": "direct", "grid_points": 101,
                      "omega_c_hz": 19.3e6, "omega_d_hz": 164e6,
                      "t_minus_s": 31e-12},
         "fit": {"n_starts": 3}},
    )
    out = tmp_path / "spec.csv"
    assert main(["--config", cfg, "simulate-cpt", "--out", str(out)]) == 0
    return cfg, str(out)


class TestCliExitCodes:
    def test_missing_input_file_is_2(self, tmp_path, capsys):
        code = main(["fit-cpt", "--spectrum", str(tmp_path / "none.csv"),
                     "--out", str(tmp_path / "r.json")])
        assert code == 2
        assert "missing file" in capsys.readouterr().err

    def test_unknown_config_key_is_2(self, tmp_path, capsys):
        cfg = _write_json(tmp_path / "c.json", {"simulate": {"bogus": 1}})
        code = main(["--config", cfg, "simulate-cpt", "--out", str(tmp_path / "s.csv")])
        assert code == 2
        assert "simulate.bogus" in capsys.readouterr().err

    def test_malformed_config_is_2(self, tmp_path, capsys):
        p = tmp_path / "c.json"
        p.write_text('{"simulate": ')
        code = main(["--config", str(p), "simulate-cpt", "--out", str(tmp_path / "s.csv")])
        assert code == 2
        assert "line" in capsys.readouterr().err

    def test_flat_spectrum_is_3(self, tmp_path, capsys):
        flat = tmp_path / "flat.csv"
        lines = ["detuning_hz,population"]
        for x in np.linspace(-2e10, 2e10, 51):
            lines.append(f"{float(x)!r},0.18")
        flat.write_text("\n".join(lines) + "\n")
        code = main(["fit-cpt", "--spectrum", str(flat), "--out", str(tmp_path / "r.json")])
        assert code == 3
        assert "numerical" in capsys.readouterr().err

    def test_successful_simulate_is_0(self, spectrum_csv):
        cfg, out = spectrum_csv
        with open(out) as fh:
            header = fh.readline().strip()
        assert header == "detuning_hz,population"


class TestCliReports:
    def test_fit_report_is_byte_identical_across_runs(self, tmp_path, spectrum_csv):
        cfg, spec = spectrum_csv
        r1, r2 = tmp_path / "r1.json", tmp_path / "r2.json"
        assert main(["--config", cfg, "--seed", "0", "fit-cpt",
                     "--spectrum", spec, "--out", str(r1)]) == 0
        assert main(["--config", cfg, "--seed", "0", "fit-cpt",
                     "--spectrum", spec, "--out", str(r2)]) == 0
        assert r1.read_bytes() == r2.read_bytes()

    def test_report_embeds_config_inputs_and_version(self, tmp_path, spectrum_csv):
        cfg, spec = spectrum_csv
        out = tmp_path / "r.json"
        assert main(["--config", cfg, "fit-cpt", "--spectrum", spec,
                     "--out", str(out)]) == 0
        report = json.loads(out.read_text())
        assert report["tool"] == "cptkit"
        assert report["version"]
        assert report["config"]["simulate"]["omega_c_hz"] == 19.3e6
        assert spec in report["inputs"]
        assert len(report["inputs"][spec]) == 64  # sha-256 hex digest

    def test_seed_flag_overrides_config(self, tmp_path, spectrum_csv):
        cfg, spec = spectrum_csv
        out = tmp_path / "r.json"
        assert main(["--config", cfg, "--seed", "7", "fit-cpt",
                     "--spectrum", spec, "--out", str(out)]) == 0
        assert json.loads(out.read_text())["config"]["seed"] == 7


class TestCliLineFit:
    def test_lorentzian_fit_via_cli(self, tmp_path):
        x = np.linspace(-5e9, 5e9, 61)
        g = 1.2e9
        y = 8.0 * (g / 2) ** 2 / (x**2 + (g / 2) ** 2) + 1.0
        curve = tmp_path / "curve.csv"
        lines = ["x,y"] + [f"{float(a)!r},{float(b)!r}" for a, b in zip(x, y)]
        curve.write_text("\n".join(lines) + "\n")
        out = tmp_path / "fit.json"
        assert main(["fit-line", "--curve", str(curve), "--model", "lorentzian",
                     "--out", str(out)]) == 0
        res = json.loads(out.read_text())["results"]
        assert math.isclose(res["fwhm"], g, rel_tol=1e-6)

    def test_bad_curve_header_is_2(self, tmp_path, capsys):
        curve = tmp_path / "curve.csv"
        curve.write_text("a,b\n1,2\n")
        code = main(["fit-line", "--curve", str(curve), "--model", "lorentzian",
                     "--out", str(tmp_path / "f.json")])
        assert code == 2
        assert "line 1" in capsys.readouterr().err


class TestCliBatch:
    def test_entries_run_and_worst_code_propagates(self, tmp_path, spectrum_csv):
        cfg, spec = spectrum_csv
        flat = tmp_path / "flat.csv"
        lines = ["detuning_hz,population"]
        for x in np.linspace(-2e10, 2e10, 51):
            lines.append(f"{float(x)!r},0.18")
        flat.write_text("\n".join(lines) + "\n")
        manifest = _write_json(tmp_path / "m.json", {"entries": [
            {"argv": ["--config", cfg, "fit-cpt", "--spectrum", spec,
                      "--out", str(tmp_path / "ok.json")]},
            {"argv": ["fit-cpt", "--spectrum", str(flat),
                      "--out", str(tmp_path / "bad.json")]},
        ]})
        code = main(["batch", "--manifest", manifest])
        assert code == 3
        assert (tmp_path / "ok.json").exists()

    def test_nested_batch_rejected(self, tmp_path, capsys):
        manifest = _write_json(tmp_path / "m.json", {"entries": [
            {"argv": ["batch", "--manifest", "x.json"]},
        ]})
        assert main(["batch", "--manifest", manifest]) == 2
        assert "nested" in capsys.readouterr().err
