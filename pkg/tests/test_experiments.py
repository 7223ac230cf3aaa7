import hashlib
import json
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

import afcsim as a
import afcsim.experiments as ex
from afcsim.cli import main as cli_main
from afcsim.errors import NonPositiveInput, UnsupportedFormat
from afcsim.readout import CombMetrics, DecayCurve, HoleMetrics
from afcsim.units import parse_quantity


class TestConfig:
    def test_dump_load_roundtrip(self):
        cfg = ex.default_config()
        text = ex.dump_config(cfg)
        clone = ex.load_config(text)
        assert clone == cfg
        assert ex.dump_config(clone) == text

    def test_overrides_applied(self):
        text = ex.dump_config(ex.default_config())
        text += "\n[material]\ntemperature = 1.4\n"
        cfg = ex.load_config(text)
        assert cfg.material.temperature == 1.4

    def test_unknown_section_rejected(self):
        with pytest.raises(NonPositiveInput):
            ex.load_config("[nonsense]\nx = 1\n")

    def test_unknown_key_rejected(self):
        with pytest.raises(NonPositiveInput):
            ex.load_config("[material]\ntypo_key = 1\n")

    def test_list_values_become_tuples(self):
        cfg = ex.load_config("[fig4]\nbandwidths_ghz = [0.2, 0.4]\n")
        assert cfg.fig4.bandwidths_ghz == (0.2, 0.4)

    def test_file_roundtrip(self, tmp_path):
        path = tmp_path / "config.toml"
        path.write_text(ex.dump_config(ex.default_config()))
        cfg = ex.load_config(path)
        assert cfg == ex.default_config()


class TestUnits:
    def test_field(self):
        assert parse_quantity("350G", "field") == pytest.approx(0.035)
        assert parse_quantity("3kG", "field") == pytest.approx(0.3)
        assert parse_quantity("0.3T", "field") == pytest.approx(0.3)

    def test_frequency(self):
        assert parse_quantity("6.4GHz", "frequency") == pytest.approx(6.4e9)
        assert parse_quantity("50MHz", "frequency") == pytest.approx(50e6)

    def test_time_power_temperature(self):
        assert parse_quantity("30ms", "time") == pytest.approx(0.03)
        assert parse_quantity("0.15mW", "power") == pytest.approx(1.5e-4)
        assert parse_quantity("0.7K", "temperature") == pytest.approx(0.7)

    def test_bare_number(self):
        assert parse_quantity("42.5") == 42.5

    def test_kind_mismatch(self):
        with pytest.raises(NonPositiveInput):
            parse_quantity("350G", "frequency")

    def test_garbage(self):
        with pytest.raises(NonPositiveInput):
            parse_quantity("abc", "field")


class TestExport:
    def setup_method(self):
        g = a.make_grid(-10e6, 10e6, 1e6)
        self.spec = a.absorption_spectrum(
            a.init_equilibrium_state(g, a.MaterialParams()), a.MaterialParams())
        self.curve = DecayCurve(delays=np.array([0.1, 0.2, 0.4]),
                                areas=np.array([3.0, 2.0, 1.0]),
                                sigmas=np.array([0.1, 0.1, 0.1]))
        self.comb = CombMetrics(d_peak=2.0, d0=0.5, spacing=50e6,
                                tooth_fwhm=25e6, finesse=2.0, bandwidth=1e9)
        self.hole = HoleMetrics(center=0.0, depth=1.0, fwhm=25e6,
                                area=1.0 * np.pi / 2 * 25e6)

    def test_csv_formats(self, tmp_path):
        p1 = ex.export(self.curve, "csv", tmp_path / "curve.csv")
        assert p1.read_text().startswith("delay_s,area_od_hz,sigma\n")
        p2 = ex.export(self.comb, "csv", tmp_path / "comb.csv")
        assert "finesse" in p2.read_text().splitlines()[0]
        p3 = ex.export(self.spec, "csv", tmp_path / "spec.csv")
        assert p3.read_text().startswith("detuning_hz,od\n")
        p4 = ex.export(self.hole, "csv", tmp_path / "hole.csv")
        assert "fwhm" in p4.read_text().splitlines()[0]

    def test_json_format(self, tmp_path):
        path = ex.export(self.comb, "json", tmp_path / "comb.json")
        doc = json.loads(path.read_text())
        assert doc["d_peak"] == 2.0

    def test_svg_format(self, tmp_path):
        path = ex.export(self.spec, "svg", tmp_path / "spec.svg")
        text = path.read_text()
        assert text.startswith("<svg")
        assert "polyline" in text
        assert "detuning (Hz)" in text
        assert "optical depth" in text

    def test_deterministic_bytes(self, tmp_path):
        p1 = ex.export(self.spec, "svg", tmp_path / "a.svg")
        p2 = ex.export(self.spec, "svg", tmp_path / "b.svg")
        assert p1.read_bytes() == p2.read_bytes()
        c1 = ex.export(self.curve, "csv", tmp_path / "a.csv")
        c2 = ex.export(self.curve, "csv", tmp_path / "b.csv")
        assert c1.read_bytes() == c2.read_bytes()

    def test_unsupported_format(self, tmp_path):
        with pytest.raises(UnsupportedFormat):
            ex.export(self.curve, "xlsx", tmp_path / "x.xlsx")
        with pytest.raises(UnsupportedFormat):
            ex.export(object(), "csv", tmp_path / "x.csv")


def tiny_config(outdir) -> ex.ExperimentConfig:
    """Cut-down configuration for fast end-to-end runs."""
    cfg = ex.default_config()
    cfg.outdir = str(outdir)
    cfg.bin_width = 1e6
    cfg.fig2 = replace(cfg.fig2, fields_gauss=(350.0,), n_delays=6,
                       delay_max=0.5, burn_duration=0.05, noise_rel=0.02)
    cfg.fig5 = replace(cfg.fig5, pump_powers=(2e-6, 2e-5), duration=0.05)
    return cfg


class TestScenarioPlumbing:
    def test_fig2_manifest_and_determinism(self, tmp_path):
        out_a = tmp_path / "a"
        out_b = tmp_path / "b"
        ex.run_fig2(tiny_config(out_a))
        ex.run_fig2(tiny_config(out_b))
        man_a = json.loads((out_a / "fig2_manifest.json").read_text())
        man_b = json.loads((out_b / "fig2_manifest.json").read_text())
        assert man_a["outputs"] == man_b["outputs"]
        # recorded hashes match the actual file contents
        for entry in man_a["outputs"]:
            digest = hashlib.sha256((out_a / entry["path"]).read_bytes()).hexdigest()
            assert digest == entry["sha256"]

    def test_fig2_seed_changes_outputs(self, tmp_path):
        cfg_a = tiny_config(tmp_path / "a")
        cfg_b = tiny_config(tmp_path / "b")
        cfg_b.seed = 999
        ex.run_fig2(cfg_a)
        ex.run_fig2(cfg_b)
        man_a = json.loads((tmp_path / "a" / "fig2_manifest.json").read_text())
        man_b = json.loads((tmp_path / "b" / "fig2_manifest.json").read_text())
        csv_a = [o for o in man_a["outputs"] if o["path"].endswith(".csv")]
        csv_b = [o for o in man_b["outputs"] if o["path"].endswith(".csv")]
        assert csv_a != csv_b

    def test_fig5_runner_writes_expected_files(self, tmp_path):
        cfg = tiny_config(tmp_path)
        summary = ex.run_fig5(cfg)
        assert (tmp_path / "fig5_holes.csv").exists()
        assert (tmp_path / "fig5_report.json").exists()
        assert (tmp_path / "fig5_manifest.json").exists()
        assert len(summary["probe_depth"]) == 2


class TestCli:
    def test_print_config(self, capsys):
        assert cli_main(["print-config"]) == 0
        out = capsys.readouterr().out
        assert "[material]" in out
        assert ex.load_config(out) == ex.default_config()

    def test_fit_double_exp(self, tmp_path, capsys):
        model = a.model_double_exponential()
        t = np.geomspace(0.01, 5, 25)
        y = model.evaluate(np.array([0.6, 0.06, 0.4, 1.0]), t)
        path = tmp_path / "decay.csv"
        path.write_text("delay_s,area\n" + "\n".join(
            f"{ti},{yi}" for ti, yi in zip(t, y)))
        assert cli_main(["fit", "double-exp", str(path)]) == 0
        doc = json.loads(capsys.readouterr().out)
        assert doc["params"]["t_long"] == pytest.approx(1.0, rel=1e-3)

    def test_fit_flipflop(self, tmp_path, capsys):
        path = tmp_path / "rates.csv"
        path.write_text("b_t,rate\n0.035,1.0\n0.06,0.735\n0.08,0.41\n")
        assert cli_main(["fit", "flipflop", str(path)]) == 0
        doc = json.loads(capsys.readouterr().out)
        assert 0.1e9 < doc["params"]["gamma_spin_static"] < 1e9

    def test_fit_dip(self, tmp_path, capsys):
        model = a.model_lorentzian_dip()
        x = np.linspace(-100, 100, 201)
        y = model.evaluate(np.array([2.0, 1.0, 5.0, 20.0]), x)
        path = tmp_path / "dip.csv"
        path.write_text("\n".join(f"{xi},{yi}" for xi, yi in zip(x, y)))
        assert cli_main(["fit", "dip", str(path), "--out",
                         str(tmp_path / "report.json")]) == 0
        doc = json.loads((tmp_path / "report.json").read_text())
        assert doc["params"]["fwhm"] == pytest.approx(20.0, rel=1e-6)

    def test_bad_unit_exits_nonzero(self, tmp_path, capsys):
        rc = cli_main(["simulate", "hole-decay", "--field", "350Potato",
                       "--outdir", str(tmp_path)])
        assert rc == 1
        assert "error" in capsys.readouterr().err

    def test_fit_missing_columns_exits_nonzero(self, tmp_path, capsys):
        path = tmp_path / "bad.csv"
        path.write_text("only_one_column\n1\n2\n")
        rc = cli_main(["fit", "double-exp", str(path)])
        assert rc == 1

    def test_simulate_pump_probe(self, tmp_path, capsys):
        cfg = tiny_config(tmp_path)
        cfg_path = tmp_path / "cfg.toml"
        cfg_path.write_text(ex.dump_config(cfg))
        rc = cli_main(["simulate", "pump-probe", "--pump-power", "20uW",
                       "--config", str(cfg_path), "--outdir", str(tmp_path)])
        assert rc == 0
        doc = json.loads(capsys.readouterr().out)
        assert doc["pump_powers_w"][0] == pytest.approx(2e-5)
        assert doc["probe_depth"][0] > 0

    def test_outdir_env_variable(self, tmp_path, monkeypatch):
        monkeypatch.setenv("AFCSIM_OUTDIR", str(tmp_path / "envout"))
        cfg = ex.default_config()
        assert cfg.resolve_outdir() == Path(str(tmp_path / "envout"))
