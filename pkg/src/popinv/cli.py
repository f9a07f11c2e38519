"""``popinv`` command line.

Subcommands: synth, ingest, estimate, predict-hr, simulate, compare,
reproduce.  Usage errors exit with status 2 (argparse); failures during a
computation exit with status 1 and a JSON object on stderr::

    {"error": "<ExceptionType>", "message": "..."}
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .cache_model import HitRatioCurve, PopularityVector, hr_curve_model
from .estimators import METHODS, GridSpec, PenaltyConfig, SolverConfig, estimate
from .experiments import EXPERIMENTS, run_experiment
from .lru_sim import hr_curve_sim
from .mixture import DiscreteMixing, ParetoMixing, mixing_from_dict
from .reports import compare_hr, compare_mixture
from .trace import (
    CountHistogram,
    counts_from_dict,
    counts_from_trace,
    counts_to_dict,
    histogram_from_counts,
    ingest_trace,
    shuffle_requests,
    synth_delta,
    synth_pareto,
    trace_from_counts,
    write_trace,
)

__all__ = ["main", "run_cli", "build_parser"]


def _float_list(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _int_list(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _range(text: str) -> list[float]:
    """``lo:hi:n`` -> n geometrically spaced values."""
    try:
        lo, hi, n = text.split(":")
        return np.geomspace(float(lo), float(hi), int(n)).tolist()
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected lo:hi:n, got {text!r}")


def _mode(text: str):
    if text == "stationary":
        return ("stationary", None)
    if text.startswith("transient:"):
        try:
            w = float(text.split(":", 1)[1])
        except ValueError:
            w = -1.0
        if w > 0:
            return ("transient", w)
    raise argparse.ArgumentTypeError("mode is 'stationary' or 'transient:W' with W > 0")


def _write_json(obj, out):
    text = json.dumps(obj, indent=2) + "\n"
    if out is None or out == "-":
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


def _read_json(path):
    with open(path) as fh:
        return json.load(fh)


def _histogram_from_json(data) -> CountHistogram:
    return CountHistogram.from_dict(data)


# -- subcommands ---------------------------------------------------------------

def cmd_synth(args):
    if args.delta:
        gt, dc = synth_delta(args.n, args.lam, args.seed)
    else:
        gt, dc = synth_pareto(args.n, args.alpha, args.xm, args.seed)
    _write_json(counts_to_dict(dc), args.out)
    if args.ground_truth:
        gt.save(args.ground_truth, args.ground_truth + ".f64")
    if args.trace:
        with open(args.trace, "w") as fh:
            write_trace(trace_from_counts(dc, args.seed), fh)


def cmd_ingest(args):
    trace = ingest_trace(args.trace, args.format, args.window)
    dc = counts_from_trace(trace)
    if dc.observed_docs == 0:
        raise ValueError("trace holds no requests")
    _write_json(counts_to_dict(dc) if args.with_counts else
                histogram_from_counts(dc).to_dict(), args.out)


def cmd_estimate(args):
    data = _read_json(args.input)
    hist = _histogram_from_json(data)
    dc = counts_from_dict(data) if args.method == "zipf" else None
    grid = GridSpec(args.grid_lower, args.grid_upper_factor, args.grid_points)
    solver = SolverConfig(max_iterations=args.max_iterations,
                          relative_tolerance=args.tolerance, solver=args.solver,
                          seed=args.seed)
    res = estimate(args.method, hist, dc, grid, solver, PenaltyConfig(args.rho), args.top_n)
    _write_json(res.to_dict(), args.out)


def cmd_predict_hr(args):
    mode, window = args.mode
    deltas = args.deltas if args.deltas is not None else args.delta_range
    if args.model == "irm":
        if args.counts is None:
            raise ValueError("the irm model needs --counts")
        dc = counts_from_dict(_read_json(args.counts))
        lam = dc.values.astype(float) / (window or 1.0)
        curve = hr_curve_model(PopularityVector(lam), deltas, mode, window,
                               args.reference_catalog, beyond_window=args.beyond_window)
    else:
        if args.mixing is None:
            raise ValueError("the irm-m model needs --mixing")
        data = _read_json(args.mixing)
        f = mixing_from_dict(data.get("mixing", data))
        k_model = data.get("catalog_estimate")
        k_ref = args.reference_catalog if args.reference_catalog is not None else k_model
        curve = hr_curve_model(f, deltas, mode, window, k_ref, k_model,
                               beyond_window=args.beyond_window)
    curve.save(args.out)


def cmd_simulate(args):
    trace = ingest_trace(args.trace, args.format, args.window)
    if len(trace) == 0:
        raise ValueError("trace holds no requests")
    if args.shuffle_seed is not None:
        trace = shuffle_requests(trace, args.shuffle_seed)
    k_ref = args.reference_catalog or counts_from_trace(trace).observed_docs
    hr_curve_sim(trace, args.capacities, k_ref).save(args.out)


def _load_pmf_source(path):
    data = _read_json(path)
    if "tally" in data:
        return _histogram_from_json(data)
    return mixing_from_dict(data.get("mixing", data))


def cmd_compare(args):
    if args.curves:
        ref, est = (HitRatioCurve.load(p) for p in args.curves)
        rep = compare_hr(ref, est, {"reference": args.curves[0], "estimate": args.curves[1]})
    else:
        ref, est = (_load_pmf_source(p) for p in args.pmf)
        if isinstance(est, CountHistogram):
            raise ValueError("the estimate must be a mixing distribution")
        rep = compare_mixture(ref, est, args.j_max,
                              metadata={"reference": args.pmf[0], "estimate": args.pmf[1]})
    _write_json(rep.to_dict(), args.out)


def cmd_reproduce(args):
    _write_json(run_experiment(args.experiment, args.outdir), args.out)


# -- parser ----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="popinv",
                                 description="Popularity inference from censored request counts.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="synthetic catalog, counts and trace")
    gen = p.add_mutually_exclusive_group(required=True)
    gen.add_argument("--pareto", action="store_true")
    gen.add_argument("--delta", action="store_true")
    p.add_argument("--n", type=int, required=True, help="catalog size")
    p.add_argument("--alpha", type=float, default=1.6)
    p.add_argument("--xm", type=float, default=0.1)
    p.add_argument("--lambda", dest="lam", type=float, default=4.0)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", default="-", help="counts JSON (default stdout)")
    p.add_argument("--trace", help="also write a shuffled id-per-line trace")
    p.add_argument("--ground-truth", help="ground-truth JSON; popularities go to <path>.f64")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("ingest", help="trace file -> count histogram JSON")
    p.add_argument("trace")
    p.add_argument("--format", choices=("id-per-line", "csv-timestamp-id"), default="id-per-line")
    p.add_argument("--window", type=float, default=1.0)
    p.add_argument("--with-counts", action="store_true", help="keep per-document counts")
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("estimate", help="fit a mixing distribution")
    p.add_argument("input", help="histogram or counts JSON")
    p.add_argument("--method", choices=METHODS + ("np-peak",), default="np")
    p.add_argument("--grid-lower", type=float, default=0.01)
    p.add_argument("--grid-upper-factor", type=float, default=1.2)
    p.add_argument("--grid-points", type=int, default=128)
    p.add_argument("--solver", choices=("sqp", "pg", "em"), default="sqp")
    p.add_argument("--max-iterations", type=int, default=1000)
    p.add_argument("--tolerance", type=float, default=1e-10)
    p.add_argument("--rho", type=float, default=0.0, help="smoothness penalty (np-penalized)")
    p.add_argument("--top-n", type=int, default=20000, help="ranks used by the zipf fit")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("predict-hr", help="model hit-ratio curve -> CSV")
    p.add_argument("--model", choices=("irm", "irm-m"), default="irm-m")
    p.add_argument("--mixing", help="estimate or mixing JSON (irm-m)")
    p.add_argument("--counts", help="counts JSON, rates = counts / W (irm)")
    p.add_argument("--mode", type=_mode, default=("stationary", None),
                   help="'stationary' or 'transient:W'")
    grid = p.add_mutually_exclusive_group(required=True)
    grid.add_argument("--deltas", type=_float_list)
    grid.add_argument("--delta-range", type=_range, help="lo:hi:n, geometric")
    p.add_argument("--reference-catalog", type=float,
                   help="catalog size the deltas refer to")
    p.add_argument("--beyond-window", choices=("error", "saturate"), default="error")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_predict_hr)

    p = sub.add_parser("simulate", help="LRU simulation of a trace -> CSV")
    p.add_argument("trace")
    p.add_argument("--format", choices=("id-per-line", "csv-timestamp-id"), default="id-per-line")
    p.add_argument("--window", type=float, default=1.0)
    p.add_argument("--capacities", type=_int_list, required=True)
    p.add_argument("--reference-catalog", type=float,
                   help="defaults to the number of distinct documents")
    p.add_argument("--shuffle-seed", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("compare", help="MARE between two curves or two pmfs")
    what = p.add_mutually_exclusive_group(required=True)
    what.add_argument("--curves", nargs=2, metavar=("REF", "EST"))
    what.add_argument("--pmf", nargs=2, metavar=("REF", "EST"))
    p.add_argument("--j-max", type=int)
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("reproduce", help="run a named desk-scale experiment")
    p.add_argument("experiment", choices=sorted(EXPERIMENTS))
    p.add_argument("--outdir", help="directory for plot-ready CSV files")
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_reproduce)
    return ap


def run_cli(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except (ValueError, TypeError, KeyError, OSError, ArithmeticError) as exc:
        err = {"error": type(exc).__name__, "message": str(exc), "command": args.command}
        sys.stderr.write(json.dumps(err) + "\n")
        return 1
    return 0


def main(argv=None):
    sys.exit(run_cli(argv))


if __name__ == "__main__":
    main()
