import json
import subprocess
import sys

import pytest

from vescap import cli
from vescap.config import BinConfig, ResultDocument, load_config
from vescap.montecarlo import ViolationReport

FAST = ["data.synthetic.n_samples=8192", "montecarlo.n_samples=16384", "montecarlo.trials=10",
        "sweep.counts=[100, 10000]"]


def run(tmp_path, *args, name="out"):
    out = tmp_path / name
    argv = [args[0], "--out", str(out)] + [a for s in FAST for a in ("--set", s)] + list(args[1:])
    return cli.main(argv), out


def load(out):
    return ResultDocument.model_validate_json((out / "result.json").read_text())


class TestCommands:
    def test_estimate(self, tmp_path):
        code, out = run(tmp_path, "estimate")
        assert code == 0
        doc = load(out)
        assert doc.hash == doc.compute_hash()
        assert doc.fit["p"] == 2 and doc.fit["q"] == 1
        snd = json.loads((out / "snd.json").read_text())
        assert len(snd["omega"]) == 2048 == len(snd["values"])
        assert (out / "snd.csv").read_text().startswith("omega,value\n")

    def test_project(self, tmp_path):
        code, out = run(tmp_path, "project", "--set",
                        "ensemble.bins=[{count: 90, size: small}, {count: 210, size: large}]")
        assert code == 0
        doc = load(out)
        z = doc.bounds["zeta"]
        assert z["lower"]["zeta_p"] <= z["upper"]["zeta_p"]
        assert doc.bounds["feasible"] == {"lower": True, "upper": True}
        assert {"aggregate_lower", "aggregate_upper", "bin1_upper", "target"} <= set(doc.spectra)

    def test_all_is_deterministic(self, tmp_path):
        c1, o1 = run(tmp_path, "all", name="a")
        c2, o2 = run(tmp_path, "all", name="b")
        assert c1 == c2 == 0
        d1, d2 = load(o1), load(o2)
        assert d1.hash == d2.hash
        assert d1.verification["pass"]
        assert [p["n"] for p in d1.sweep["points"]] == [100, 10000]
        assert (o1 / "sweep.csv").exists()

    def test_seed_changes_hash(self, tmp_path):
        _, o1 = run(tmp_path, "estimate", name="a")
        _, o2 = run(tmp_path, "estimate", "--seed", "7", name="b")
        assert load(o1).hash != load(o2).hash

    def test_not_converged_exit_code(self, tmp_path):
        code, out = run(tmp_path, "project", "--set", "solver.max_iter=1")
        assert code == cli.EXIT_NOT_CONVERGED
        assert not load(out).converged

    def test_verify_failure_exit_code(self, tmp_path, monkeypatch):
        monkeypatch.setattr(cli, "verify_chebyshev", lambda *a, **k: ViolationReport((), False))
        code, out = run(tmp_path, "verify")
        assert code == cli.EXIT_VERIFY_FAILED
        assert load(out).verification["pass"] is False


class TestErrors:
    def test_inflated_spectrum(self, tmp_path, capsys):
        code, _ = run(tmp_path, "verify", "--set", "montecarlo.scale=10")
        assert code == cli.EXIT_ERROR
        assert "budget" in capsys.readouterr().err

    def test_missing_data_file(self, tmp_path, capsys):
        code, _ = run(tmp_path, "estimate", "--set", f"data.path={tmp_path / 'none.csv'}")
        assert code == cli.EXIT_ERROR
        assert "cannot read" in capsys.readouterr().err

    def test_degenerate_series(self, tmp_path, capsys):
        p = tmp_path / "flat.csv"
        p.write_text("timestamp,kw\n" + "".join(f"2024-01-01T{h:02d}:00:00,5.0\n" for h in range(24)))
        code, _ = run(tmp_path, "estimate", "--set", f"data.path={p}")
        assert code == cli.EXIT_ERROR
        assert "zero variance" in capsys.readouterr().err

    def test_unknown_key(self, tmp_path, capsys):
        code, _ = run(tmp_path, "estimate", "--set", "solver.tolerance=1")
        assert code == cli.EXIT_ERROR
        assert "tolerance" in capsys.readouterr().err

    def test_bad_override_syntax(self, tmp_path):
        assert run(tmp_path, "estimate", "--set", "novalue")[0] == cli.EXIT_ERROR

    def test_missing_config(self, tmp_path):
        assert run(tmp_path, "estimate", "--config", str(tmp_path / "x.yaml"))[0] == cli.EXIT_ERROR


class TestConfig:
    def test_yaml_file_and_overrides(self, tmp_path):
        p = tmp_path / "run.yaml"
        p.write_text("seed: 4\npassband: {lo: 0.125, hi: 0.5}\nensemble:\n  bins:\n"
                     "    - {count: 10, size: small, eps3: 0.1}\n")
        cfg = load_config(p, ["solver.tol=1e-7"])
        assert cfg.seed == 4 and cfg.solver.tol == 1e-7 and cfg.passband.lo == 0.125
        spec = cfg.ensemble.to_spec()
        assert spec.bins[0].qos.eps == (0.05, 0.05, 0.1, 0.05)
        assert spec.bins[0].qos.c1 == 4.0

    def test_bin_without_preset(self):
        with pytest.raises(ValueError, match="needs"):
            BinConfig(count=3)
        b = BinConfig(count=2, c1_kw=1, c2_kw=1, c3_kwh=1, c4=1, pole_per_h=1, gain=1, kind="battery")
        spec = b.to_spec()
        assert spec.dyn.kind == "battery" and spec.qos.horizon_T == 24.0

    def test_passband_order(self):
        with pytest.raises(ValueError):
            load_config(None, ["passband.lo=5", "passband.hi=1"])

    def test_sweep_counts(self):
        cfg = load_config(None, [])
        pts = cfg.sweep.resolved()
        assert len(pts) == 12 and pts[0] == 100 and pts[-1] == 10_000_000

    def test_hash_ignores_output_dir(self):
        base = dict(command="x", created="now", seed=0, versions={}, config={"output": {"dir": "a"}})
        a = ResultDocument(**base)
        b = ResultDocument(**{**base, "created": "later", "config": {"output": {"dir": "b"}}})
        assert a.compute_hash() == b.compute_hash()

    def test_negative_curve_rejected(self):
        from vescap.config import CurveModel

        with pytest.raises(ValueError):
            CurveModel(omega=[0.0, 1.0], values=[1.0, -1.0])


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "vescap", "--version"], capture_output=True, text=True)
    assert r.returncode == 0 and r.stdout.startswith("vescap ")


@pytest.mark.parametrize("name", ["high_band.yaml", "heterogeneous.yaml"])
def test_shipped_configs_load(name):
    from pathlib import Path

    cfg = load_config(Path(__file__).parents[1] / "configs" / name)
    assert cfg.ensemble.to_spec().n_loads > 0
