import json
import math
import subprocess
import sys

import numpy as np
import pytest

from popinv.cache_model import HitRatioCurve
from popinv.cli import run_cli
from popinv.mixture import ParetoMixing, censored_pmf
from popinv.reports import compare_hr, compare_mixture, mare, naive_request_flow, relative_errors
from popinv.trace import CountHistogram


# -- MARE -------------------------------------------------------------------------

def test_mare_examples():
    x = [0.3, 1.5, 7.0]
    assert mare(x, x) == 0.0
    assert mare([1, 2], [2, 4]) == 1.0
    assert mare([2, 4], [1, 2]) == 0.5  # reference-denominator convention
    np.testing.assert_allclose(relative_errors([1, -2], [1.5, -1]), [0.5, 0.5])


def test_mare_errors():
    with pytest.raises(ValueError, match="reference contains zero"):
        mare([0, 1], [1, 1])
    with pytest.raises(ValueError, match="length mismatch"):
        mare([1, 2], [1])
    with pytest.raises(ValueError, match="empty"):
        mare([], [])


# -- pmf and curve comparisons --------------------------------------------------------

def test_compare_mixture_identity():
    f = ParetoMixing(1.6, 0.1)
    rep = compare_mixture(f, ParetoMixing(1.6, 0.1), 500)
    assert rep.mare <= 1e-10
    assert rep.metadata["j_max"] == 500 and rep.errors.size == 500
    d = json.loads(rep.to_json())
    assert d["mare"] == rep.mare and "schema_version" in d
    with pytest.raises(ValueError):
        compare_mixture(f, f)


def test_compare_mixture_histogram_reference():
    h = CountHistogram({1: 60, 2: 30, 3: 10})
    rep = compare_mixture(h, naive_request_flow(h))
    j = np.arange(1, 4)
    ref = np.array([0.6, 0.3, 0.1])
    assert math.isclose(rep.mare, mare(ref, censored_pmf(naive_request_flow(h), j)), rel_tol=1e-15)
    with pytest.raises(ValueError, match="reference contains zero"):
        compare_mixture(CountHistogram({1: 5, 3: 5}), naive_request_flow(h))


def test_naive_request_flow_monte_carlo():
    """Averaged empirical count distribution of IRM traces regenerated
    from the naive fit equals the analytic censored pmf."""
    h = CountHistogram({1: 300, 2: 120, 3: 50, 5: 20, 9: 10})
    rates = np.repeat(h.counts.astype(float), h.docs)
    j = np.arange(1, 13)
    analytic = censored_pmf(naive_request_flow(h), j)
    rng = np.random.default_rng(99)
    runs = 4000
    n = rng.poisson(rates, size=(runs, rates.size))
    seen = n > 0
    emp = np.stack([(n == k).sum(axis=1) for k in j], axis=1) / seen.sum(axis=1)[:, None]
    mean, se = emp.mean(axis=0), emp.std(axis=0, ddof=1) / math.sqrt(runs)
    head = analytic > 1e-3
    # ratio of expectations vs expectation of ratios: a bias of order 1/K0
    assert np.all(np.abs(mean - analytic)[head] <= 4 * se[head] + 2e-3 * analytic[head])
    cv = se[head] / mean[head]
    assert np.all(cv < 0.02)


def test_compare_hr():
    a = HitRatioCurve([0.1, 0.2], [0.2, 0.4], source="simulation", mode="transient")
    b = HitRatioCurve([0.1, 0.2], [0.3, 0.3], source="model-irmm", mode="transient")
    rep = compare_hr(a, b)
    assert math.isclose(rep.mare, 0.375)
    assert rep.reference["source"] == "simulation" and rep.metadata["deltas"] == [0.1, 0.2]
    with pytest.raises(ValueError, match="different delta grids"):
        compare_hr(a, HitRatioCurve([0.1, 0.3], [0.2, 0.4]))


# -- CLI ---------------------------------------------------------------------------------

def cli(*argv):
    return run_cli([str(a) for a in argv])


def test_cli_delta_pipeline(tmp_path):
    counts = tmp_path / "counts.json"
    assert cli("synth", "--delta", "--n", 100000, "--lambda", 4, "--seed", 7, "--out", counts) == 0
    est = tmp_path / "est.json"
    assert cli("estimate", counts, "--method", "np", "--out", est) == 0
    res = json.loads(est.read_text())
    assert res["method"] == "np" and res["converged"]
    assert abs(res["catalog_estimate"] - 100000) / 100000 <= 0.08


def test_cli_curves_and_compare(tmp_path, capsys):
    counts, trace = tmp_path / "c.json", tmp_path / "t.txt"
    assert cli("synth", "--pareto", "--n", 20000, "--seed", 3, "--out", counts, "--trace", trace) == 0
    est = tmp_path / "est.json"
    assert cli("estimate", counts, "--out", est) == 0
    sim = tmp_path / "sim.csv"
    assert cli("simulate", trace, "--capacities", "100,400,1600", "--reference-catalog", 20000,
               "--out", sim) == 0
    model = tmp_path / "model.csv"
    assert cli("predict-hr", "--mixing", est, "--mode", "transient:1",
               "--deltas", "0.005,0.02,0.08", "--reference-catalog", 20000,
               "--beyond-window", "saturate", "--out", model) == 0
    irm = tmp_path / "irm.csv"
    assert cli("predict-hr", "--model", "irm", "--counts", counts, "--mode", "stationary",
               "--delta-range", "0.01:0.1:4", "--out", irm) == 0
    assert HitRatioCurve.load(irm).source == "model-irm"
    capsys.readouterr()
    assert cli("compare", "--curves", sim, sim) == 0
    assert json.loads(capsys.readouterr().out)["mare"] == 0
    assert cli("compare", "--curves", sim, model) == 0
    assert json.loads(capsys.readouterr().out)["mare"] < 0.1
    assert cli("compare", "--pmf", counts, est) == 1  # gaps in the empirical tail
    capsys.readouterr()
    assert cli("compare", "--pmf", counts, est, "--j-max", 5) == 0
    assert json.loads(capsys.readouterr().out)["metadata"]["j_min"] == 1


def test_cli_exit_codes(tmp_path, capsys):
    with pytest.raises(SystemExit) as exc:
        cli("frobnicate")
    assert exc.value.code == 2
    with pytest.raises(SystemExit) as exc:
        cli("estimate", "x.json", "--method", "magic")
    assert exc.value.code == 2
    capsys.readouterr()
    assert cli("estimate", tmp_path / "missing.json") == 1
    err = json.loads(capsys.readouterr().err)
    assert err["error"] == "FileNotFoundError" and err["command"] == "estimate"
    assert cli("predict-hr", "--model", "irm", "--deltas", "0.1", "--out", tmp_path / "x.csv") == 1
    assert "needs --counts" in json.loads(capsys.readouterr().err)["message"]


def test_cli_idempotent(tmp_path):
    outs = []
    for name in ("a", "b"):
        c, t = tmp_path / f"{name}.json", tmp_path / f"{name}.txt"
        assert cli("synth", "--pareto", "--n", 5000, "--seed", 1, "--out", c, "--trace", t) == 0
        e = tmp_path / f"{name}.est.json"
        assert cli("estimate", c, "--out", e) == 0
        outs.append((c.read_bytes(), t.read_bytes(), e.read_bytes()))
    assert outs[0] == outs[1]


def test_cli_reproduce_pareto_fit(tmp_path):
    runs = []
    for i in range(2):
        out = tmp_path / f"r{i}.json"
        assert cli("reproduce", "pareto-fit", "--out", out) == 0
        runs.append(json.loads(out.read_text()))
    res = runs[0]["result"]
    assert 1.55 <= res["alpha"] <= 1.65 and 0.09 <= res["xm"] <= 0.11
    for r in runs:
        r.pop("timing")
    assert runs[0] == runs[1]


def test_module_entry_point():
    out = subprocess.run([sys.executable, "-m", "popinv", "--version"],
                         capture_output=True, text=True, check=True)
    assert out.stdout.startswith("popinv ")
