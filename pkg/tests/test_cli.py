import csv
import json
import math
import subprocess
import sys

import numpy as np
import pytest

from oracles import p0_estimate
from tvarch.cli import main, read_series
from tvarch.kernel import KernelSpec
from tvarch.likelihood import local_data

COS = """
seed: 3
model:
  curves:
    - {family: sinusoid, coefficients: [2, 1, 0, 1]}
  innovation: {law: gaussian}
  regularity: {rho: 0.1, Q: 0.6, nu: 0.3, M: 20}
kernel: {family: rectangular, bandwidth: 0.1}
simulate: {N: 2000}
asymptotics: {u0: 0.5, N: 4000}
"""

ARCH1 = """
seed: 5
model:
  curves:
    - {family: constant, coefficients: [1.0]}
    - {family: constant, coefficients: [0.4]}
  regularity: {rho: 0.1, Q: 0.6, nu: 0.3, M: 20}
kernel: {family: rectangular, bandwidth: 0.2}
simulate: {N: 1500}
experiment:
  kind: clt-coverage
  u0: [0.5]
  N: [2000]
  b: {values: [0.1]}
  reps: 80
"""

# same content as ARCH1 with keys in another order
ARCH1_REORDERED = """
simulate: {N: 1500}
experiment:
  reps: 80
  b: {values: [0.1]}
  N: [2000]
  u0: [0.5]
  kind: clt-coverage
kernel: {bandwidth: 0.2, family: rectangular}
model:
  regularity: {M: 20, nu: 0.3, Q: 0.6, rho: 0.1}
  curves:
    - {coefficients: [1.0], family: constant}
    - {coefficients: [0.4], family: constant}
seed: 5
"""

BAD_ASSUMPTION = """
model:
  curves:
    - {family: constant, coefficients: [1.0]}
    - {family: constant, coefficients: [0.9]}
  regularity: {rho: 0.1, Q: 0.6, nu: 0.3, M: 20}
"""

CONST_P0 = """
model:
  curves: [{family: constant, coefficients: [1.5]}]
  regularity: {rho: 0.1, Q: 0.6, nu: 0.3, M: 20}
kernel: {family: rectangular, bandwidth: 0.1}
"""


@pytest.fixture
def cfg(tmp_path):
    def write(text, name="cfg.yaml"):
        p = tmp_path / name
        p.write_text(text)
        return str(p)

    return write


def _rows(path):
    with open(path) as fh:
        return list(csv.DictReader(line for line in fh if not line.startswith("#")))


# -- validate --------------------------------------------------------------------


def test_validate_ok(cfg, capsys):
    assert main(["validate", cfg(COS)]) == 0
    assert "all checks passed" in capsys.readouterr().out


def test_validate_reports_failed_inequality(cfg, capsys):
    assert main(["validate", cfg(BAD_ASSUMPTION)]) == 1
    out = capsys.readouterr().out
    assert "sup_u a_1(u) <= Q/ell(1)" in out and "FAIL" in out.upper()


def test_validate_malformed(cfg):
    assert main(["validate", cfg("model: [unclosed")]) == 2
    assert main(["validate", cfg("model: {curves: []}")]) == 2


def test_missing_file_is_io_error(tmp_path):
    assert main(["validate", str(tmp_path / "nope.yaml")]) == 3


# -- simulate --------------------------------------------------------------------


def test_simulate_constant_sigma2(cfg, tmp_path):
    out = tmp_path / "p.csv"
    assert main(["simulate", cfg(CONST_P0), "--n", "300", "--out", str(out)]) == 0
    sigma2 = {r["sigma2"] for r in _rows(out)}
    assert sigma2 == {"1.5"}
    assert (tmp_path / "p.csv.manifest.json").exists()


def test_simulate_rerun_byte_identical(cfg, tmp_path):
    c = cfg(ARCH1)
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(["simulate", c, "--seed", "9", "--out", str(a)]) == 0
    assert main(["simulate", c, "--seed", "9", "--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_simulate_modes_agree_after_transient(cfg, tmp_path):
    c = cfg(ARCH1)
    a, b = tmp_path / "exact.csv", tmp_path / "stat.csv"
    assert main(["simulate", c, "--mode", "paper-exact", "--out", str(a)]) == 0
    assert main(["simulate", c, "--mode", "stationary-start", "--out", str(b)]) == 0
    xa = np.array([float(r["x2"]) for r in _rows(a)])
    xb = np.array([float(r["x2"]) for r in _rows(b)])
    assert not np.array_equal(xa[:5], xb[:5])
    assert np.mean(np.abs(xa[512:] - xb[512:])) < 1e-6


def test_csv_floats_round_trip(cfg, tmp_path):
    from tvarch.config import load_config, parse_model
    from tvarch.simulate import simulate_tvarch

    c = cfg(ARCH1)
    out = tmp_path / "p.csv"
    assert main(["simulate", c, "--out", str(out)]) == 0
    ref = simulate_tvarch(parse_model(load_config(c)), 1500, 5)
    assert np.array_equal(read_series(out), ref.x2)


# -- fit -------------------------------------------------------------------------


def test_fit_single_anchor_one_row(cfg, tmp_path):
    out = tmp_path / "fit.csv"
    assert main(["fit", "--config", cfg(ARCH1), "--t0", "700", "--out", str(out)]) == 0
    rows = _rows(out)
    assert len(rows) == 1 and rows[0]["t0"] == "700" and rows[0]["converged"].lower() == "true"
    assert float(rows[0]["se0"]) > 0


def test_fit_p0_matches_weighted_mean(tmp_path):
    gen = np.random.default_rng(0)
    x2 = 1.5 * gen.standard_normal(1000) ** 2
    data = tmp_path / "d.csv"
    data.write_text("x2\n" + "".join(f"{v!r}\n" for v in x2.tolist()))
    out = tmp_path / "fit.csv"
    assert main(["fit", "--data", str(data), "--p", "0", "--grid", "200:800:100", "--b", "0.2", "--omega", "0.001,100", "--out", str(out)]) == 0
    rows = _rows(out)
    assert len(rows) == 7
    for r in rows:
        d = local_data(x2, KernelSpec("rectangular", 0.2), int(r["t0"]), 0)
        assert abs(float(r["a0"]) - p0_estimate(d.y, d.w, 0.001, 100.0)) <= 1e-8


def test_fit_boundary_strict_exits_1(cfg, tmp_path, capsys):
    c = cfg(ARCH1)
    assert main(["fit", "--config", c, "--grid", "50,700"]) == 1
    assert "t0=50" in capsys.readouterr().err
    assert main(["fit", "--config", c, "--grid", "50,700", "--no-strict-boundary"]) == 0


def test_read_series_from_x_column(tmp_path):
    p = tmp_path / "x.csv"
    p.write_text("# comment\nt,x\n1,2.0\n2,-3.0\n")
    assert np.array_equal(read_series(p), [4.0, 9.0])
    q = tmp_path / "bad.csv"
    q.write_text("1.0\n2.0\n")
    assert main(["fit", "--data", str(q), "--p", "0"]) == 2


# -- experiment ------------------------------------------------------------------


def test_experiment_single_rep(cfg, tmp_path):
    out = tmp_path / "e"
    assert main(["experiment", cfg(ARCH1), "--out-dir", str(out), "--reps", "1"]) == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["seeds"]["reps"] == 1 and "runtime_seconds" in manifest
    assert len(_rows(out / "summary.csv")) == 1


def test_experiment_identical_bytes_and_threads(cfg, tmp_path):
    c = cfg(ARCH1)
    outs = []
    for i, threads in enumerate(("1", "1", "4", "16")):
        d = tmp_path / f"e{i}"
        assert main(["experiment", c, "--out-dir", str(d), "--threads", threads]) == 0
        outs.append((d / "summary.csv").read_bytes())
    assert len(set(outs)) == 1


def test_experiment_failure_exits_1(cfg, tmp_path):
    text = ARCH1.replace("u0: [0.5]", "u0: [0.02]")
    assert main(["experiment", cfg(text), "--out-dir", str(tmp_path / "e")]) == 1


# -- asymptotics -----------------------------------------------------------------


def test_asymptotics_closed_forms(cfg, capsys):
    assert main(["asymptotics", cfg(COS)]) == 0
    kv = dict(line.split(" = ") for line in capsys.readouterr().out.splitlines())
    assert float(kv["sigma_00"]) == pytest.approx(0.5)
    assert float(kv["mu_0"]) == pytest.approx(-math.pi**2 / 6, rel=1e-12)
    assert float(kv["b_opt"]) == pytest.approx(0.1358, abs=1e-4)
    assert kv["sigma_method"] == "closed-form"


def test_asymptotics_zero_bias_exits_0(cfg, capsys):
    assert main(["asymptotics", cfg(CONST_P0)]) == 0
    out, err = capsys.readouterr()
    assert "zero_bias = true" in out and "zero bias" in err


def test_asymptotics_stencil_out_of_range(cfg):
    assert main(["asymptotics", cfg(COS), "--u0", "0.02"]) == 1


def test_asymptotics_csv_output(cfg, tmp_path):
    out = tmp_path / "a.csv"
    assert main(["asymptotics", cfg(COS), "--out", str(out)]) == 0
    [row] = _rows(out)
    assert float(row["mu_0"]) == pytest.approx(-math.pi**2 / 6, rel=1e-12)


# -- manifests -------------------------------------------------------------------


def test_digest_stable_under_key_reordering(cfg, tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(["simulate", cfg(ARCH1, "one.yaml"), "--out", str(a)]) == 0
    assert main(["simulate", cfg(ARCH1_REORDERED, "two.yaml"), "--out", str(b)]) == 0
    ma = json.loads((tmp_path / "a.csv.manifest.json").read_text())
    mb = json.loads((tmp_path / "b.csv.manifest.json").read_text())
    assert ma["config_digest"] == mb["config_digest"]
    assert a.read_bytes() == b.read_bytes()


@pytest.mark.parametrize("command", ["simulate", "fit", "asymptotics"])
def test_manifest_replay_reproduces_output(cfg, tmp_path, command):
    out = tmp_path / "o.csv"
    argv = {
        "simulate": ["simulate", cfg(ARCH1), "--out", str(out)],
        "fit": ["fit", "--config", cfg(ARCH1), "--grid", "600:900:100", "--out", str(out)],
        "asymptotics": ["asymptotics", cfg(COS), "--out", str(out)],
    }[command]
    assert main(argv) == 0
    first = out.read_bytes()
    manifest = json.loads((tmp_path / "o.csv.manifest.json").read_text())
    assert manifest["command"] == command and manifest["outputs"] == [str(out)]
    out.unlink()
    assert main(manifest["argv"]) == 0
    assert out.read_bytes() == first


def test_console_entry_point(cfg):
    proc = subprocess.run([sys.executable, "-m", "tvarch.cli", "validate", cfg(COS)], capture_output=True, text=True)
    assert proc.returncode == 0
