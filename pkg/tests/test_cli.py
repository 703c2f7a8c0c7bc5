import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from funnelkit.cli import dispatch, parse_scenario

CONFIG_DIR = Path(__file__).resolve().parent.parent / "configs"


def run_cli(argv, capsys):
    code = dispatch(argv)
    captured = capsys.readouterr()
    return code, captured.out, captured.err


class TestParseScenario:
    def test_shipped_signal_config(self):
        scenario = parse_scenario(CONFIG_DIR / "example1_s5.json")
        assert scenario.mode == "open-loop"
        assert scenario.params.r == 3
        assert np.array_equal(scenario.params.a, [15.0, 75.0, 125.0])
        assert scenario.report is not None and scenario.report.ok

    def test_shipped_tracking_config(self):
        scenario = parse_scenario(CONFIG_DIR / "example2_tracking.json")
        assert scenario.mode == "closed-loop"
        assert scenario.params.m == 2
        assert np.array_equal(scenario.params.a, [21.0, 147.0, 343.0])
        assert scenario.controller is not None
        assert np.allclose(scenario.gamma, [[2.0, 0.2], [0.2, 2.0]])

    def test_shipped_second_order_config(self):
        scenario = parse_scenario(CONFIG_DIR / "linear_tracking.json")
        assert scenario.mode == "closed-loop"
        assert scenario.params.r == 2
        assert scenario.plant.n_eta == 2
        assert scenario.gamma[0, 0] == pytest.approx(1.5)

    def test_linear_state_space_plant_kind(self, tmp_path):
        # a double integrator in plain coordinates: detected r = 2, gain 1
        doc = {
            "mode": "closed-loop",
            "design": {
                "r": 2, "m": 1, "s0": 2.0, "rho": 1.5, "gamma_tilde": 1.0,
                "funnel": {"family": "exp-boundary", "c_inf": 0.1,
                           "c_amp": 1.0, "c_rate": 1.0},
                "funnel_fc": {"family": "exp-boundary", "c_inf": 0.05,
                              "c_amp": 2.0, "c_rate": 1.0},
            },
            "plant": {"kind": "linear", "A": [[0.0, 1.0], [0.0, 0.0]],
                      "B": [[0.0], [1.0]], "C": [[1.0, 0.0]]},
            "reference": [{"kind": "sine", "omega": 1.0}],
            "tspan": [0.0, 3.0],
            "sample_step": 0.05,
        }
        path = tmp_path / "linear.json"
        path.write_text(json.dumps(doc))
        scenario = parse_scenario(path)
        assert scenario.plant.r == 2 and scenario.plant.n_eta == 0
        from funnelkit.simloop import run_closed_loop
        result = run_closed_loop(scenario)
        assert np.all(result.column("margin_1") > 0.0)
        assert np.all(result.column("margin_fc") > 0.0)

    def test_rho_not_above_one_rejected(self, tmp_path):
        doc = json.loads((CONFIG_DIR / "example1_s5.json").read_text())
        doc["design"]["rho"] = 0.9
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps(doc))
        with pytest.raises(ValueError, match=r"rho > 1") as err:
            parse_scenario(bad)
        assert "/design/rho" in str(err.value)

    def test_unknown_key_rejected(self, tmp_path):
        doc = json.loads((CONFIG_DIR / "example1_s5.json").read_text())
        doc["extra"] = 1
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps(doc))
        with pytest.raises(ValueError, match="unknown keys"):
            parse_scenario(bad)

    def test_missing_file_names_path(self):
        with pytest.raises(ValueError, match="missing.json"):
            parse_scenario("missing.json")

    def test_dimension_mismatch_rejected(self, tmp_path):
        doc = json.loads((CONFIG_DIR / "example2_tracking.json").read_text())
        doc["design"]["m"] = 1
        doc["reference"] = [{"kind": "sine", "omega": 1.0}]
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps(doc))
        with pytest.raises(ValueError, match="output dimension"):
            parse_scenario(bad)


class TestDesignCommand:
    def test_prints_gains(self, capsys):
        code, out, _ = run_cli(["design", "--r", "3", "--s0", "1"], capsys)
        assert code == 0
        assert "a = [3., 3., 1.]" in out
        assert "0.666667" in out and "0.333333" in out

    def test_json_output(self, capsys):
        code, out, _ = run_cli(["design", "--r", "3", "--s0", "7", "--json"], capsys)
        assert code == 0
        payload = json.loads(out)
        assert payload["a"] == [21.0, 147.0, 343.0]
        assert payload["report"]["ok"]

    def test_tracking_gain_check(self, capsys):
        code, out, _ = run_cli(
            ["design", "--r", "3", "--s0", "7", "--m", "2", "--rho", "1.1",
             "--gamma-tilde", "2", "--gamma", "[[2,0.2],[0.2,2]]"], capsys)
        assert code == 0
        assert "boundary" in out

    def test_invalid_pole_fails(self, capsys):
        code, _, err = run_cli(["design", "--r", "3", "--s0", "-1"], capsys)
        assert code == 1
        assert "left half-plane" in err

    def test_failing_mismatch_exits_one(self, capsys):
        code, out, _ = run_cli(
            ["design", "--r", "3", "--s0", "1", "--rho", "1.1", "--gamma", "40"],
            capsys)
        assert code == 1
        assert "fail" in out


class TestSimulateCommand:
    def test_missing_config_exits_one(self, capsys, tmp_path):
        code, _, err = run_cli(
            ["simulate", "--config", "missing.json", "--out", str(tmp_path)], capsys)
        assert code == 1
        assert "missing.json" in err

    def test_signal_config_end_to_end(self, capsys, tmp_path):
        config = _fast_signal_config(tmp_path)
        code, out, _ = run_cli(
            ["simulate", "--config", str(config), "--out", str(tmp_path / "run")],
            capsys)
        assert code == 0
        csv_path = tmp_path / "run" / "result.csv"
        assert csv_path.exists()
        header = csv_path.read_text().splitlines()[0].split(",")
        assert "margin_1" in header and "h_1" in header
        report = json.loads((tmp_path / "run" / "report.json").read_text())
        assert all(m > 0.0 for m in report["min_margins"])

    def test_parallel_jobs(self, capsys, tmp_path):
        c1 = _fast_signal_config(tmp_path, name="one.json", s0=1.0)
        c2 = _fast_signal_config(tmp_path, name="two.json", s0=3.0)
        code, out, _ = run_cli(
            ["simulate", "--config", str(c1), str(c2), "--jobs", "2",
             "--out", str(tmp_path / "runs")], capsys)
        assert code == 0
        assert (tmp_path / "runs" / "one" / "result.csv").exists()
        assert (tmp_path / "runs" / "two" / "result.csv").exists()

    def test_invalid_config_exits_one(self, capsys, tmp_path):
        doc = json.loads((CONFIG_DIR / "example1_s5.json").read_text())
        doc["design"]["rho"] = 0.5
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps(doc))
        code, _, err = run_cli(
            ["simulate", "--config", str(bad), "--out", str(tmp_path / "x")], capsys)
        assert code == 1
        assert "rho > 1" in err

    def test_runtime_abort_exits_two(self, capsys, tmp_path, monkeypatch):
        import funnelkit.cli as cli_mod
        from funnelkit.errors import IntegrationAbort

        def exploding(scenario):
            raise IntegrationAbort(
                "step size underflow at t = 1, funnel margin = -0.001", time=1.0)

        monkeypatch.setattr(cli_mod, "run_open_loop", exploding)
        config = _fast_signal_config(tmp_path)
        code, _, err = run_cli(
            ["simulate", "--config", str(config), "--out", str(tmp_path / "y")],
            capsys)
        assert code == 2
        assert "step size underflow" in err


class TestExampleCommand:
    def test_signal_demo_outputs(self, capsys, tmp_path):
        code, _, _ = run_cli(
            ["example", "precompensator", "--s0", "1", "--out", str(tmp_path)], capsys)
        assert code == 0
        rows = (tmp_path / "result.csv").read_text().splitlines()
        header = rows[0].split(",")
        margin_idx = [header.index(c) for c in header if c.startswith("margin_")]
        for row in rows[1:]:
            vals = row.split(",")
            assert all(float(vals[i]) > 0.0 for i in margin_idx)

    def test_tracking_demo_outputs(self, capsys, tmp_path):
        code, _, _ = run_cli(["example", "tracking", "--out", str(tmp_path)], capsys)
        assert code == 0
        rows = (tmp_path / "result.csv").read_text().splitlines()
        header = rows[0].split(",")
        assert "u_1" in header and "bnd_fc" in header
        margin_idx = [header.index(c) for c in header if c.startswith("margin")]
        for row in rows[1:]:
            vals = row.split(",")
            assert all(float(vals[i]) > 0.0 for i in margin_idx)

    def test_byte_stable_rerun(self, capsys, tmp_path):
        for tag in ("a", "b"):
            code, _, _ = run_cli(
                ["example", "precompensator", "--s0", "1",
                 "--out", str(tmp_path / tag)], capsys)
            assert code == 0
        assert ((tmp_path / "a" / "result.csv").read_bytes()
                == (tmp_path / "b" / "result.csv").read_bytes())


class TestDiagnoseCommand:
    def test_signal_run_diagnostics(self, capsys, tmp_path):
        config = _fast_signal_config(tmp_path)
        code, _, _ = run_cli(
            ["diagnose", "--config", str(config), "--out", str(tmp_path / "d")],
            capsys)
        assert code == 0
        payload = json.loads((tmp_path / "d" / "diagnostics.json").read_text())
        assert payload["kronecker_identities"]["residual_lifted_lyapunov"] <= 1e-10
        assert payload["margins"]["all_margins_positive"]

    def test_tracking_run_diagnostics(self, capsys, tmp_path):
        config = _fast_tracking_config(tmp_path)
        code, _, _ = run_cli(
            ["diagnose", "--config", str(config), "--out", str(tmp_path / "d")],
            capsys)
        assert code == 0
        payload = json.loads((tmp_path / "d" / "diagnostics.json").read_text())
        assert payload["kronecker_identities"]["Q_hat1_spd"]
        assert payload["margins"]["quadratic_sandwich_ok"]
        trace = (tmp_path / "d" / "diagnostics.csv").read_text().splitlines()
        assert trace[0] == "t,margin_x_1,margin_x_2,V"
        assert all(np.isfinite(float(line.split(",")[-1])) for line in trace[1:])
        assert all(float(line.split(",")[1]) > 0.0 for line in trace[1:])


class TestUsage:
    def test_unknown_flag_exits_sixtyfour(self, capsys):
        code, _, err = run_cli(["design", "--bogus"], capsys)
        assert code == 64
        assert "usage" in err.lower()

    def test_unknown_subcommand(self, capsys):
        code, _, _ = run_cli(["transmogrify"], capsys)
        assert code == 64

    def test_console_script_entry_point(self, tmp_path):
        proc = subprocess.run(
            [sys.executable, "-m", "funnelkit.cli", "design", "--r", "2", "--s0", "2"],
            capture_output=True, text=True)
        assert proc.returncode == 0
        assert "a = [4., 4.]" in proc.stdout


def _fast_signal_config(tmp_path, name="fast.json", s0=3.0):
    doc = json.loads((CONFIG_DIR / "example1_s5.json").read_text())
    doc["design"]["s0"] = s0
    doc["tspan"] = [0.0, 2.0]
    doc["sample_step"] = 0.05
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return path


def _fast_tracking_config(tmp_path, name="fast_tracking.json"):
    doc = json.loads((CONFIG_DIR / "example2_tracking.json").read_text())
    doc["tspan"] = [0.0, 2.0]
    doc["sample_step"] = 0.05
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return path
