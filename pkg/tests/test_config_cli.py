import csv
import io
import subprocess
import sys

import pytest

from combgp import cli
from combgp.config import ExperimentConfig, load_config, parse_config
from combgp.errors import ConfigError
from combgp.experiment import bundled_path

SYN = """
env.kind = synthetic
synthetic.n_arms = 6
synthetic.K = 2
algorithms = GP-UCB, RANDOM
T = 4
replicates = 2
seed = 3
"""


def run_cli(args, capsys):
    code = cli.main(args)
    out, err = capsys.readouterr()
    return code, out, err


def _table(text):
    return list(csv.DictReader(io.StringIO(text)))


class TestParseConfig:
    def test_defaults(self):
        cfg = parse_config("")
        assert cfg == ExperimentConfig()

    def test_values_and_comments(self):
        cfg = parse_config("T = 7  # rounds\nalgorithms = gp-ts, BI-UCB\nsvgp.enabled = yes\n")
        assert cfg.T == 7 and cfg.algorithms == ("gp-ts", "BI-UCB") and cfg.svgp_enabled

    def test_unknown_key_names_line(self):
        with pytest.raises(ConfigError) as exc:
            parse_config("T = 3\nfoo.bar = 1\n")
        assert exc.value.line == 2 and "foo.bar" in str(exc.value)

    @pytest.mark.parametrize(
        "text",
        ["T = x", "T = 0", "algorithms = GP-FOO", "env.kind = lattice", "env.p_vol = 1.0", "seed = -1", "T"],
    )
    def test_invalid(self, text):
        with pytest.raises(ConfigError):
            parse_config(text)

    def test_bundled_configs_load(self):
        for name in ("grid5.cfg", "benchmark.cfg", "synthetic.cfg", "tau_ones.cfg"):
            load_config(bundled_path(name))

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(tmp_path / "nope.cfg")


class TestCli:
    def test_no_command_is_usage_error(self, capsys):
        code, _, err = run_cli([], capsys)
        assert code == 1 and "usage" in err

    def test_unknown_command(self, capsys):
        code, _, err = run_cli(["frobnicate"], capsys)
        assert code == 1 and "usage" in err

    def test_bad_jobs(self, capsys, tmp_path):
        p = tmp_path / "s.cfg"
        p.write_text(SYN)
        assert run_cli(["run", str(p), "--jobs", "0"], capsys)[0] == 1

    def test_config_error_exit_code(self, capsys, tmp_path):
        p = tmp_path / "bad.cfg"
        p.write_text("nonsense = 1\n")
        code, _, err = run_cli(["run", str(p)], capsys)
        assert code == 2 and "line 1" in err

    def test_missing_config(self, capsys):
        assert run_cli(["run"], capsys)[0] == 2

    def test_runtime_error_exit_code(self, capsys, tmp_path):
        p = tmp_path / "s.cfg"
        p.write_text(SYN)
        code, _, _ = run_cli(["run", str(p), "--out", str(tmp_path / "missing" / "x.csv")], capsys)
        assert code == 3

    def test_validate_bundled(self, capsys):
        code, out, _ = run_cli(["validate", str(bundled_path("grid5.net"))], capsys)
        assert code == 0 and "edges: 80" in out

    def test_validate_bad_route(self, capsys, tmp_path):
        p = tmp_path / "n.net"
        p.write_text("edge a u v 1 1 0\nedge b v u 1 1 0\nedge c x y 1 1 0\nconn a b\nconn b a\nroute r a c\n")
        code, out, _ = run_cli(["validate", str(p)], capsys)
        assert code == 2 and "route r" in out

    def test_validate_parse_error(self, capsys, tmp_path):
        p = tmp_path / "n.net"
        p.write_text("edge a u v 1 1\n")
        assert run_cli(["validate", str(p)], capsys)[0] == 2

    def test_tau_prints_remark_four(self, capsys):
        code, out, _ = run_cli(["tau", str(bundled_path("tau_ones.cfg"))], capsys)
        rows = _table(out)
        assert code == 0 and len(rows) == 10
        assert rows[0]["family"] == "UCB" and rows[0]["t"] == "1"
        assert float(rows[0]["tau_remark"]) == 4.0
        assert float(rows[0]["tau_t"]) >= 4.0

    def test_bounds(self, capsys):
        code, out, _ = run_cli(["bounds", str(bundled_path("grid5.cfg"))], capsys)
        rows = _table(out)
        assert code == 0
        assert {(r["family"], r["setting"]) for r in rows} == {
            (f, s) for f in ("UCB", "BUCB", "TS") for s in ("finite", "infinite")
        }
        bucb = [r for r in rows if r["family"] == "BUCB"]
        assert all(r["valid"] == "false" for r in bucb)

    def test_gamma(self, capsys, tmp_path):
        p = tmp_path / "s.cfg"
        p.write_text(SYN)
        code, out, _ = run_cli(["gamma", str(p)], capsys)
        g = [float(r["gamma_greedy"]) for r in _table(out)]
        assert code == 0 and len(g) == 4 and g == sorted(g)

    def test_run_writes_sidecars(self, capsys, tmp_path):
        p = tmp_path / "s.cfg"
        p.write_text(SYN)
        out = tmp_path / "trace.csv"
        code, stdout, _ = run_cli(["run", "--config", str(p), "--out", str(out)], capsys)
        assert code == 0 and stdout == ""
        rows = _table(out.read_text())
        assert len(rows) == 2 * 2 * 4
        summary = _table((tmp_path / "trace.summary.csv").read_text())
        assert {r["algorithm"] for r in summary} == {"GP-UCB", "RANDOM"}
        bounds = _table((tmp_path / "trace.bounds.csv").read_text())
        assert {r["algorithm"] for r in bounds} == {"GP-UCB"}

    def test_seed_override_changes_output(self, capsys, tmp_path):
        p = tmp_path / "s.cfg"
        p.write_text(SYN)
        _, a, _ = run_cli(["run", str(p), "--seed", "1"], capsys)
        _, b, _ = run_cli(["run", str(p), "--seed", "2"], capsys)
        _, c, _ = run_cli(["run", str(p), "--seed", "1"], capsys)
        assert a == c and a != b

    def test_sweep_row_count(self, capsys, tmp_path):
        p = tmp_path / "s.cfg"
        p.write_text(SYN + "kernel.lengthscale_sweep = 0.5, 1.0\n")
        code, out, _ = run_cli(["sweep-lengthscale", str(p)], capsys)
        rows = _table(out)
        assert code == 0 and len(rows) == 2 * 2
        assert sorted({r["lengthscale"] for r in rows}) == ["0.5", "1"]

    def test_console_entry_point(self, tmp_path):
        p = tmp_path / "s.cfg"
        p.write_text(SYN)
        res = subprocess.run([sys.executable, "-m", "combgp.cli", "tau", str(p)], capture_output=True, text=True)
        assert res.returncode == 0 and res.stdout.startswith("family,t,tau_remark,tau_t\n")
