import json
import shutil
from pathlib import Path

import pytest

from degenop import cli
from degenop.verify import SuiteResult

ROOT = Path(__file__).resolve().parents[1]
CONFIGS = ROOT / "configs"
GOLDEN = Path(__file__).parent / "golden"


def run(*argv):
    return cli.main([str(a) for a in argv])


def strip_timings(doc):
    if isinstance(doc, dict):
        return {k: strip_timings(v) for k, v in doc.items() if k not in ("timings", "seconds")}
    if isinstance(doc, list):
        return [strip_timings(v) for v in doc]
    return doc


def test_analyze_matches_golden(tmp_path):
    assert run("analyze", "--config", CONFIGS / "unequal_exponents.json", "--out", tmp_path) == 0
    got = json.loads((tmp_path / "analyze.json").read_text())
    want = json.loads((GOLDEN / "analyze_unequal_exponents.json").read_text())
    assert got == want
    assert got["schema_version"] == 1 and "tool_version" in got


def test_reduce_writes_pipeline(tmp_path):
    assert run("reduce", "--config", CONFIGS / "dirichlet_2d.yaml", "--out", tmp_path) == 0
    doc = json.loads((tmp_path / "reduce.json").read_text())
    assert [s["purpose"] for s in doc["steps"]] == ["remove potential", "remove tangential drift"]
    assert doc["target"]["params"]["b"] == 0.0 and doc["target"]["params"]["d"] == [0.0]


@pytest.mark.parametrize("name", ["dirichlet_2d.yaml", "bessel_1d.json"])
def test_solve_is_deterministic(tmp_path, name):
    outs = []
    for k in range(2):
        d = tmp_path / str(k)
        assert run("solve", "--config", CONFIGS / name, "--out", d) == 0
        outs.append(d)
    for f in ("metrics.json", "solution.csv"):
        a, b = ((o / f).read_text() for o in outs)
        if f.endswith(".json"):
            a, b = strip_timings(json.loads(a)), strip_timings(json.loads(b))
        assert a == b
    m = json.loads((outs[0] / "metrics.json").read_text())
    assert m["residual"] < 1e-8 and m["norms"]["solution"] > 0


def test_solve_json_format_with_complex_lambda(tmp_path):
    assert run("solve", "--config", CONFIGS / "bessel_1d.json", "--out", tmp_path,
               "--format", "json") == 0
    doc = json.loads((tmp_path / "solution.json").read_text())
    assert len(doc["value"]) == len(doc["value_imag"]) == len(doc["y"])
    m = json.loads((tmp_path / "metrics.json").read_text())
    assert m["lambda"] == [1.0, 0.5]


def _write(tmp_path, cfg):
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps(cfg))
    return p


def _base():
    return json.loads((CONFIGS / "bessel_1d.json").read_text())


def test_exit_codes(tmp_path, capsys):
    assert run("solve", "--config", tmp_path / "missing.json", "--out", tmp_path) == 1
    bad = _base()
    bad["operator"]["gamma"] = "one"
    assert run("solve", "--config", _write(tmp_path, bad), "--out", tmp_path) == 1
    extra = _base()
    extra["unexpected"] = 1
    assert run("analyze", "--config", _write(tmp_path, extra), "--out", tmp_path) == 1
    nomesh = json.loads((CONFIGS / "unequal_exponents.json").read_text())
    assert run("solve", "--config", _write(tmp_path, nomesh), "--out", tmp_path) == 1
    nongen = _base()
    nongen["space"] = {"p": 2.0, "m": 5.0}  # (m+1)/p = 3 outside (-3/2, 5/2)
    assert run("solve", "--config", _write(tmp_path, nongen), "--out", tmp_path) == 2
    oblique_b = _base()
    oblique_b["bc"] = {"kind": "oblique"}
    assert run("solve", "--config", _write(tmp_path, oblique_b), "--out", tmp_path) == 2
    assert "degenop:" in capsys.readouterr().err


def test_failed_verification_exits_3(tmp_path, monkeypatch):
    from degenop import verify
    monkeypatch.setitem(verify.SUITES, "trace", lambda: SuiteResult("trace", False, "x", {}))
    cfg = _write(tmp_path, {"verify": {"suites": ["trace"]}})
    assert run("verify", "--config", cfg, "--out", tmp_path) == 3
    assert json.loads((tmp_path / "verify_trace.json").read_text())["passed"] is False


def test_verify_quick_suite(tmp_path, capsys):
    cfg = _write(tmp_path, {"verify": {"suites": ["group_laws"]}})
    assert run("verify", "--config", cfg, "--out", tmp_path, "--seed", 4) == 0
    assert "PASS group_laws" in capsys.readouterr().out


@pytest.mark.skipif(shutil.which("degenop") is None, reason="console script not installed")
def test_console_script(tmp_path):
    import subprocess
    r = subprocess.run(["degenop", "analyze", "--config", str(CONFIGS / "bessel_1d.json"),
                        "--out", str(tmp_path)], capture_output=True, text=True)
    assert r.returncode == 0 and (tmp_path / "analyze.json").exists()
