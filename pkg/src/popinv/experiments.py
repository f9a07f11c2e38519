"""Desk-scale reproductions of the synthetic-trace experiments.

Every experiment is a pure function of its manifest entry (sizes, model
parameters and seeds), returns a JSON-ready report and can optionally write
plot-ready CSV files.  Runtimes are isolated under ``report["timing"]`` so
that the rest of the report is byte-identical between runs.
"""

from __future__ import annotations

import copy
import time
from pathlib import Path

import numpy as np

from .cache_model import PopularityVector, hr_curve_model
from .estimators import naive_estimate, np_ml_estimate, pareto_ml_estimate, zipf_loglog_fit
from .lru_sim import hr_curve_sim
from .mixture import ParetoMixing, mixing_to_dict
from .reports import compare_hr, compare_mixture
from .trace import SCHEMA_VERSION, histogram_from_counts, synth_delta, synth_pareto, trace_from_counts

__all__ = ["MANIFEST", "EXPERIMENTS", "run_experiment", "capacity_grid"]

# Pinned seeds and sizes.  The rank-frequency fit keeps the same share of
# the catalog as 20 000 of 10**7 documents.
MANIFEST = {
    "delta-catalog": {"n": 100_000, "lambda": 4.0, "pinned_seed": 7, "seeds": [0, 1, 2, 3, 4]},
    "pareto-fit": {"n": 1_000_000, "alpha": 1.6, "xm": 0.1, "seed": 0},
    "zipf-baseline": {"n": 1_000_000, "alpha": 1.6, "xm": 0.1, "seed": 0, "top_n": 2000},
    "hr-prt": {"n": 1_000_000, "alpha": 1.6, "xm": 0.1, "seed": 0, "shuffle_seed": 0,
               "delta_min": 0.01, "delta_max": 0.6, "points": 10, "window": 1.0,
               "head_max": 10},
    "hr-delta": {"n": 100_000, "lambda": 4.0, "seed": 7, "shuffle_seed": 7,
                 "delta_min": 0.01, "delta_max": 0.6, "points": 10, "window": 1.0},
}


def capacity_grid(catalog: int, lo: float, hi: float, points: int) -> np.ndarray:
    """Geometric integer cache sizes between ``lo * K`` and ``hi * K``."""
    caps = np.unique(np.rint(np.geomspace(lo, hi, points) * catalog).astype(np.int64))
    if caps.size != points:
        raise ValueError("catalog too small for the requested number of cache sizes")
    return caps


def _delta_catalog(cfg):
    runs = {}
    for seed in sorted(set(cfg["seeds"]) | {cfg["pinned_seed"]}):
        gt, dc = synth_delta(cfg["n"], cfg["lambda"], seed)
        h = histogram_from_counts(dc)
        res = np_ml_estimate(h)
        mass = float(res.mixing.w[(res.mixing.x >= 3.5) & (res.mixing.x <= 4.5)].sum())
        runs[str(seed)] = {
            "observed_docs": h.observed_docs,
            "catalog_estimate": res.catalog_estimate,
            "relative_error": abs(res.catalog_estimate - cfg["n"]) / cfg["n"],
            "mass_in_3.5_4.5": mass,
            "converged": res.converged,
        }
    mean_err = float(np.mean([runs[str(s)]["relative_error"] for s in cfg["seeds"]]))
    return {"runs": runs, "pinned": runs[str(cfg["pinned_seed"])],
            "mean_relative_error": mean_err}


def _pareto_sample(cfg):
    gt, dc = synth_pareto(cfg["n"], cfg["alpha"], cfg["xm"], cfg["seed"])
    return gt, dc, histogram_from_counts(dc)


def _pareto_fit(cfg):
    _, _, h = _pareto_sample(cfg)
    res = pareto_ml_estimate(h)
    return {"alpha": res.mixing.alpha, "xm": res.mixing.xm,
            "catalog_estimate": res.catalog_estimate, "converged": res.converged,
            "observed_docs": h.observed_docs}


def _zipf_baseline(cfg):
    _, dc, h = _pareto_sample(cfg)
    z = zipf_loglog_fit(dc, cfg["top_n"], h)
    p = pareto_ml_estimate(h)
    a_z, a_p = z.diagnostics["alpha"], p.mixing.alpha
    return {"alpha_zipf": a_z, "alpha_pareto_ml": a_p,
            "zipf_error": abs(a_z - cfg["alpha"]), "pareto_error": abs(a_p - cfg["alpha"]),
            "top_n": cfg["top_n"]}


def _hr_compare(cfg, gt, dc, outdir):
    h = histogram_from_counts(dc)
    K = gt.catalog_size
    trace = trace_from_counts(dc, cfg["shuffle_seed"])
    caps = capacity_grid(K, cfg["delta_min"], cfg["delta_max"], cfg["points"])
    sim = hr_curve_sim(trace, caps, K)
    fit = np_ml_estimate(h)
    W = cfg["window"]
    np_curve = hr_curve_model(fit.mixing, sim.deltas, "transient", W, K,
                              fit.catalog_estimate, beyond_window="saturate")
    naive_curve = hr_curve_model(PopularityVector(dc.values.astype(float)), sim.deltas,
                                 "transient", W, K, beyond_window="saturate")
    r_np, r_nv = compare_hr(sim, np_curve), compare_hr(sim, naive_curve)
    if outdir is not None:
        sim.save(outdir / "hr_simulation.csv")
        np_curve.save(outdir / "hr_np.csv")
        naive_curve.save(outdir / "hr_naive.csv")
    return h, fit, {
        "catalog_size": K,
        "observed_docs": h.observed_docs,
        "np_catalog_estimate": fit.catalog_estimate,
        "cache_sizes": caps.tolist(),
        "simulation": sim.hit_ratios.tolist(),
        "np_model": np_curve.hit_ratios.tolist(),
        "naive_model": naive_curve.hit_ratios.tolist(),
        "np_mare": r_np.mare,
        "naive_mare": r_nv.mare,
    }


def _hr_prt(cfg, outdir=None):
    gt, dc, _ = _pareto_sample(cfg)
    h, fit, out = _hr_compare(cfg, gt, dc, outdir)
    ref = ParetoMixing(cfg["alpha"], cfg["xm"])
    J = h.max_count
    full_np = compare_mixture(ref, fit.mixing, J)
    full_nv = compare_mixture(ref, naive_estimate(h).mixing, J)
    head = cfg["head_max"]
    out["request_flow"] = {
        "j_max": J,
        "np_mare": full_np.mare,
        "naive_mare": full_nv.mare,
        "np_head_mare": compare_mixture(ref, fit.mixing, head).mare,
        "naive_head_mare": compare_mixture(ref, naive_estimate(h).mixing, head).mare,
    }
    out["np_mixing"] = mixing_to_dict(fit.mixing)
    return out


def _hr_delta(cfg, outdir=None):
    gt, dc = synth_delta(cfg["n"], cfg["lambda"], cfg["seed"])
    _, _, out = _hr_compare(cfg, gt, dc, outdir)
    return out


EXPERIMENTS = {
    "delta-catalog": _delta_catalog,
    "pareto-fit": _pareto_fit,
    "zipf-baseline": _zipf_baseline,
    "hr-prt": _hr_prt,
    "hr-delta": _hr_delta,
}


def run_experiment(name: str, outdir=None, overrides: dict | None = None) -> dict:
    """Run a named experiment; `overrides` patches its manifest entry."""
    if name not in EXPERIMENTS:
        raise ValueError(f"unknown experiment {name!r}; choose from {sorted(EXPERIMENTS)}")
    cfg = copy.deepcopy(MANIFEST[name])
    cfg.update(overrides or {})
    if outdir is not None:
        outdir = Path(outdir)
        outdir.mkdir(parents=True, exist_ok=True)
    start = time.perf_counter()
    fn = EXPERIMENTS[name]
    result = fn(cfg, outdir) if name.startswith("hr-") else fn(cfg)
    return {
        "schema_version": SCHEMA_VERSION,
        "experiment": name,
        "config": cfg,
        "result": result,
        "timing": {"seconds": time.perf_counter() - start},
    }
