import csv
import json
import subprocess
import sys
import time

import numpy as np
import pytest

from deleverage.cli import EXIT_FAIL, EXIT_OK, EXIT_TIME, main, relative_gap
from deleverage.estimate import simulate_events, write_events_csv
from deleverage.model import load_instance, validate

from conftest import INSTANCES


def _run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def test_solve_example1(capsys, tmp_path):
    out_path = tmp_path / "sol.json"
    code, out, _ = _run(capsys, "solve", INSTANCES / "example1.json", "--out", out_path)
    assert code == EXIT_OK and out == ""
    doc = json.loads(out_path.read_text())
    assert doc["equity"] == pytest.approx(0.8287, abs=1e-3)
    assert doc["status"] == "eps-optimal" and doc["certified"] is True
    for key in ("y", "leverage_gap", "eps", "nodes", "sco_restarts", "elapsed_s", "lower_bound"):
        assert key in doc


def test_solve_example3_sco(capsys, tmp_path):
    trace = tmp_path / "trace.csv"
    code, out, _ = _run(capsys, "solve", INSTANCES / "example3.json", "--algo", "sco", "--dump-trace", trace)
    assert code == EXIT_OK
    doc = json.loads(out)
    assert doc["algo"] == "sco"
    assert doc["equity"] == pytest.approx(87523.22, abs=1e-1)
    rows = list(csv.DictReader(trace.open()))
    assert len(rows) == doc["iterations"] + 1
    f = [float(r["f_hat"]) for r in rows]
    assert all(b <= a + 1e-6 * abs(a) for a, b in zip(f, f[1:]))


def test_solve_scobb_trace_and_verbose(capsys, tmp_path):
    trace = tmp_path / "trace.csv"
    code, out, err = _run(capsys, "solve", INSTANCES / "example2.json", "--dump-trace", trace, "-v")
    assert code == EXIT_OK
    assert "eps-optimal" in err
    json.loads(out)
    rows = list(csv.DictReader(trace.open()))
    assert rows[0]["iteration"] == "0"


def test_time_limit_exit_code(capsys):
    code, out, _ = _run(capsys, "solve", INSTANCES / "example3.json", "--time-limit", "1e-9")
    assert code == EXIT_TIME
    assert json.loads(out)["status"] == "time-limit"


def test_malformed_json(capsys, tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text('{\n  "m": 2,\n  "lambda": [1, 2,,]\n}\n')
    code, _, err = _run(capsys, "solve", bad)
    assert code == EXIT_FAIL
    assert "line 3" in err and "column" in err


def test_unpayable_debt_check_named(capsys, tmp_path):
    doc = json.loads((INSTANCES / "example1.json").read_text())
    doc["scale"] = 50.0
    path = tmp_path / "heavy.json"
    path.write_text(json.dumps(doc))
    code, _, err = _run(capsys, "solve", path)
    assert code == EXIT_FAIL
    assert "liquidation-covers-debt" in err
    code, out, _ = _run(capsys, "check", path)
    assert code == EXIT_FAIL and "[FAIL] liquidation-covers-debt" in out


def test_missing_file(capsys, tmp_path):
    code, _, err = _run(capsys, "solve", tmp_path / "nope.json")
    assert code == EXIT_FAIL and "error" in err


def test_bad_eps_rejected(capsys):
    with pytest.raises(SystemExit) as info:
        main(["solve", str(INSTANCES / "example1.json"), "--eps", "0"])
    assert info.value.code == 2


def test_generate_deterministic_and_valid(capsys, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        code, _, _ = _run(capsys, "generate", "--m", 20, "--s", 2, "--q", 3, "--seed", 4, "--count", 10,
                          "--out-dir", d)
        assert code == EXIT_OK
    names = sorted(p.name for p in a.iterdir())
    assert names == sorted(f"inst_4_{k}.json" for k in range(10))
    for name in names:
        assert (a / name).read_bytes() == (b / name).read_bytes()
        code, out, _ = _run(capsys, "check", a / name)
        assert code == EXIT_OK and "s=2 q=3" in out


def test_generate_convex(capsys, tmp_path):
    code, _, _ = _run(capsys, "generate", "--m", 5, "--s", 0, "--q", 0, "--out-dir", tmp_path)
    assert code == EXIT_OK
    code, out, _ = _run(capsys, "check", tmp_path / "inst_0_0.json")
    assert "s=0 q=0 r=0" in out


def test_generate_bad_spec(capsys, tmp_path):
    code, _, err = _run(capsys, "generate", "--m", 3, "--s", 3, "--q", 1, "--out-dir", tmp_path)
    assert code == EXIT_FAIL


def test_check_example3(capsys, tmp_path):
    dump = tmp_path / "reform.json"
    code, out, _ = _run(capsys, "check", INSTANCES / "example3.json", "--rho-max", "--dump", dump)
    assert code == EXIT_OK
    assert "s=1" in out and "r=3" in out
    line = next(l for l in out.splitlines() if l.startswith("rho_max="))
    assert float(line.split("=")[1]) == pytest.approx(25.42, abs=0.05)
    assert json.loads(dump.read_text())["r"] == 3


def test_check_relative_gap(capsys):
    code, out, _ = _run(capsys, "check", INSTANCES / "example1.json", "--opt-val", 10.0, "--obj-val", 9.0)
    assert code == EXIT_OK
    assert "relative_gap=1.000000e-01" in out
    code, _, _ = _run(capsys, "check", INSTANCES / "example1.json", "--opt-val", 10.0)
    assert code == EXIT_FAIL


def test_relative_gap_formula():
    assert relative_gap(0.5, 0.25) == 0.25
    assert relative_gap(-200.0, -210.0) == pytest.approx(0.05)


def test_estimate_round_trip(capsys, tmp_path):
    rng = np.random.default_rng(0)
    lam = rng.uniform(-1e-4, 1e-3, (3, 3))
    gam = rng.uniform(-1e-5, 1e-4, (3, 3))
    trades = tmp_path / "trades.csv"
    write_events_csv(simulate_events(lam, gam, np.array([20.0, 50.0, 80.0]), horizons=3, rng=rng), trades)
    out = tmp_path / "est.json"
    code, _, err = _run(capsys, "estimate", trades, "--scale", 1e-4, "--out", out, "--panel-out",
                        tmp_path / "panel.csv")
    assert code == EXIT_OK and "360 rows" in err
    doc = json.loads(out.read_text())
    np.testing.assert_allclose(np.array(doc["lambda"]) * 1e-4, lam, rtol=1e-6, atol=1e-12)
    np.testing.assert_allclose(np.array(doc["gamma"]) * 1e-4, gam, rtol=1e-6, atol=1e-12)


def test_estimate_bad_csv(capsys, tmp_path):
    path = tmp_path / "t.csv"
    path.write_text("a,b\n")
    code, _, err = _run(capsys, "estimate", path)
    assert code == EXIT_FAIL and "header" in err


def test_round_trip_ten_instances(capsys, tmp_path):
    start = time.perf_counter()
    _run(capsys, "generate", "--m", 10, "--s", 1, "--q", 1, "--seed", 42, "--count", 10, "--out-dir", tmp_path)
    for k in range(10):
        inst = tmp_path / f"inst_42_{k}.json"
        code, out, _ = _run(capsys, "solve", inst)
        assert code == EXIT_OK
        doc = json.loads(out)
        assert doc["certified"]
        assert validate(load_instance(inst)).ok
    assert time.perf_counter() - start < 60.0


def test_oracle_subcommand(capsys):
    code, out, _ = _run(capsys, "oracle", INSTANCES / "example1.json", "--points", 51)
    assert code == EXIT_OK
    assert json.loads(out)["equity"] == pytest.approx(0.8287, abs=0.01)


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "deleverage", "check", str(INSTANCES / "example2.json")],
                          capture_output=True, text=True, timeout=120)
    assert proc.returncode == 0
    assert "s=1 q=1 r=2" in proc.stdout
