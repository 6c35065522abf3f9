import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from maxweight_dual import OracleError, ValidationError
from maxweight_dual.cli import main
from maxweight_dual.experiments import load_config, run_experiment
from maxweight_dual.experiments import runner
from maxweight_dual.experiments.runner import SCHEMA_LINE, read_trace_csv

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def write_ini(tmp_path, text, name="c.ini"):
    p = tmp_path / name
    p.write_text(text)
    return p


def run_cli(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


class TestConfig:
    def test_shipped_configs_parse(self):
        for path in sorted(CONFIGS.glob("*.ini")):
            cfg = load_config(path)
            assert cfg.experiment in ("exp_example", "fig_q", "privacy", "custom")

    @pytest.mark.parametrize("body, field", [
        ("[experiment]\nkind = nope\n", "experiment.kind"),
        ("[experiment]\nseed = 1\n", "experiment.kind"),
        ("[experiment]\nkind = fig_q\ncolour = red\n", "experiment.colour"),
        ("[experiment]\nkind = fig_q\n[parameters]\nsteps = 1.5\n", "parameters.steps"),
        ("[experiment]\nkind = fig_q\n[parameters]\nalpha = fast\n", "parameters.alpha"),
        ("[experiment]\nkind = fig_q\n[parameters]\nwidth = 3\n", "parameters.width"),
        ("[experiment]\nkind = custom\n[parameters]\nQ = 1,2;3\n", "parameters.Q"),
        ("[experiment]\nkind = exp_example\n[parameters]\ntrack_dual = maybe\n", "parameters.track_dual"),
    ])
    def test_errors_name_the_field(self, tmp_path, body, field):
        with pytest.raises(ValidationError, match=field.replace(".", r"\.")):
            load_config(write_ini(tmp_path, body))

    def test_missing_file(self, tmp_path):
        with pytest.raises(ValidationError, match="cannot read"):
            load_config(tmp_path / "absent.ini")

    def test_override_and_relative_output(self, tmp_path):
        p = write_ini(tmp_path, "[experiment]\nkind = fig_q\noutput = sub/out\n")
        cfg = load_config(p, {"steps": "7"})
        assert cfg.parameters["steps"] == 7
        assert cfg.output_path == tmp_path / "sub" / "out"


class TestExitCodes:
    def test_validate_ok(self, capsys):
        code, out, _ = run_cli(capsys, "validate", "--config", CONFIGS / "burn_in.ini")
        assert code == 0 and json.loads(out)["valid"] is True

    def test_strict_step_size_is_validation_error(self, capsys):
        code, _, err = run_cli(capsys, "validate", "--config", CONFIGS / "burn_in.ini",
                               "--strict", "--set", "alpha=1e-3")
        assert code == 1 and "alpha_bound" in err

    def test_bad_config_value(self, capsys):
        code, _, err = run_cli(capsys, "bounds", "--config", CONFIGS / "tracking.ini", "--set", "beta=x")
        assert code == 1 and "parameters.beta" in err

    def test_no_slater_point(self, capsys, tmp_path):
        p = write_ini(tmp_path, """[experiment]
kind = custom
[parameters]
objective = linear
c = 1, 1
actions = 0,0; 1,0; 0,1; 1,1
constraint_A = 1, 0
constraint_b = -1
lambda_bar = 5
alpha = 1e-3
beta = 0.1
iterations = 10
""")
        code, _, err = run_cli(capsys, "run", "--config", p, "--out", tmp_path / "o")
        assert code == 1 and err.startswith("error:")

    def test_wrong_multiplier_length(self, capsys):
        code, _, _ = run_cli(capsys, "oracle", "--config", CONFIGS / "burn_in.ini", "--lambda", "1,2")
        assert code == 1

    def test_oracle_report(self, capsys):
        code, out, _ = run_cli(capsys, "oracle", "--config", CONFIGS / "burn_in.ini", "--lambda", "0,0,0")
        d = json.loads(out)
        assert code == 0
        assert d["f_star"] == pytest.approx(4.095074291636462, abs=1e-8)

    def test_oracle_failure_is_runtime_error(self, capsys, monkeypatch):
        def boom(*a, **k):
            raise OracleError("reference solve did not converge")
        monkeypatch.setattr(runner, "reference_primal", boom)
        code, _, err = run_cli(capsys, "run", "--config", CONFIGS / "linear.ini", "--set", "iterations=5")
        assert code == 2 and "converge" in err

    def test_contract_violation_exit(self, capsys, tmp_path):
        code, out, _ = run_cli(capsys, "run", "--config", CONFIGS / "adversarial.ini",
                               "--set", "drift_onset=500", "--set", "iterations=2000",
                               "--out", tmp_path / "adv")
        d = json.loads(out)
        assert code == 3 and d["exit_code"] == 3
        assert d["first_contract_violation"] == 501

    def test_module_entry_point(self, tmp_path):
        r = subprocess.run([sys.executable, "-m", "maxweight_dual", "bounds", "--config",
                            str(CONFIGS / "tracking.ini")], capture_output=True, text=True)
        assert r.returncode == 0
        assert json.loads(r.stdout)["tracking_bound"] == pytest.approx(40.0)


class TestOutputs:
    def test_trace_is_reproducible(self, tmp_path):
        cfg = load_config(CONFIGS / "bracket_sigma1.ini", {"iterations": "1500", "log_every": "100"})
        a = run_experiment(cfg, tmp_path / "a", seed=3)
        b = run_experiment(cfg, tmp_path / "b", seed=3)
        assert a.trace_path.read_bytes() == b.trace_path.read_bytes()
        assert a.summary_path.read_bytes() == b.summary_path.read_bytes()
        c = run_experiment(cfg, tmp_path / "c", seed=4)
        assert c.trace_path.read_bytes() != a.trace_path.read_bytes()

    def test_trace_schema_and_precision(self, tmp_path):
        cfg = load_config(CONFIGS / "burn_in.ini", {"iterations": "300", "track_dual": "false"})
        res = run_experiment(cfg, tmp_path)
        lines = res.trace_path.read_text().splitlines()
        assert lines[0] == SCHEMA_LINE
        data = read_trace_csv(res.trace_path)
        # values survive the text round trip exactly
        z = res.run.trace["z"]
        np.testing.assert_array_equal(data["z1"], z[:, 0])
        assert len(data["k"]) == len(res.run.trace)

    def test_unknown_schema_rejected(self, tmp_path):
        p = tmp_path / "t.csv"
        p.write_text("# trace-schema v0\nk\n1\n")
        with pytest.raises(ValueError, match="schema"):
            read_trace_csv(p)

    def test_unconstrained_linear(self, tmp_path):
        res = run_experiment(load_config(CONFIGS / "linear.ini"), tmp_path)
        assert 0.0 <= res.summary["final_gap"] <= 1e-12
        assert json.loads(res.summary_path.read_text())["within_two_epsilon"] is True

    @pytest.mark.filterwarnings("ignore:.*exceeds:UserWarning")
    def test_queue_config(self, tmp_path):
        res = run_experiment(load_config(CONFIGS / "queue.ini", {"iterations": "4000"}), tmp_path)
        assert res.exit_code == 0 and res.summary["contract_violations"] == 0

    def test_tracking_summary(self, tmp_path):
        res = run_experiment(load_config(CONFIGS / "tracking.ini", {"steps": "500", "seeds": "3"}), tmp_path)
        assert res.summary["replicates"] == 3
        assert res.summary["max_gap"] <= res.summary["tracking_bound"]


def test_bracket_holds_with_unclipped_multipliers(tmp_path):
    # with lambda_bar above every entry of the optimal multiplier the
    # Lagrangian minimiser is no longer pinned at the origin
    cfg = load_config(CONFIGS / "bracket_sigma1.ini",
                      {"lambda_bar": "6", "iterations": "200000", "log_every": "2000"})
    res = run_experiment(cfg, tmp_path)
    s = res.summary
    assert s["contract_violations"] == 0
    assert s["bracket_violations"] == 0, s["first_bracket_violation"]
