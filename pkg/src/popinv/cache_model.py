"""Che-approximation hit ratios for LRU under IRM and IRM-M.

With explicit rates ``lambda_k`` (IRM) the characteristic time ``t_C`` solves
``sum_k (1 - exp(-lambda_k t)) = C``; with a mixing distribution (IRM-M) it
solves ``r(t) = E[1 - exp(-lambda t)] = delta`` with ``delta = C / K``.

Stationary hit ratio::

    HR = E[lambda (1 - exp(-lambda t))] / E[lambda]

Transient hit ratio over a window W starting from an empty cache::

    HR_W = HR + (E[lambda t exp(-lambda t)] - delta) / (E[lambda] W)

which is the per-document hit count ``h(lambda, t) = (lambda W - 1)(1 -
exp(-lambda t)) + lambda t exp(-lambda t)`` averaged and divided by the
expected number of requests.  The transient formula needs ``t <= W``.  Past
that point the cache never evicts inside the window, the only misses are
first requests, and the expected hit ratio is ``1 - r(W) / (E[lambda] W)``;
``beyond_window="saturate"`` returns that value instead of raising.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .mixture import DiscreteMixing, ParetoMixing
from .trace import SCHEMA_VERSION

log = logging.getLogger(__name__)

__all__ = [
    "PopularityVector",
    "HitRatioCurve",
    "CacheModelError",
    "char_time_irm",
    "hr_irm_stationary",
    "hit_function",
    "hr_irm_transient",
    "r_of_t",
    "char_time_irmm",
    "hr_irmm_stationary",
    "hr_irmm_transient",
    "hr_curve_model",
]

_MAX_ITER = 200


class CacheModelError(ValueError):
    """Model evaluated outside its domain (cache size, window)."""


@dataclass(frozen=True, eq=False)
class PopularityVector:
    """Explicit per-document request rates.

    Rates are stored once as distinct values with multiplicities, so sums
    over a catalog with many ties (integer counts, say) stay cheap.
    """

    lambdas: np.ndarray
    total_rate: float = field(init=False)

    def __post_init__(self):
        lam = np.asarray(self.lambdas, dtype=float).ravel()
        if lam.size == 0 or not np.all(lam > 0):
            raise ValueError("popularities must be non-empty and > 0")
        vals, mult = np.unique(lam, return_counts=True)
        object.__setattr__(self, "lambdas", lam)
        object.__setattr__(self, "_vals", vals)
        object.__setattr__(self, "_mult", mult.astype(float))
        object.__setattr__(self, "total_rate", math.fsum(lam))

    def __len__(self):
        return int(self.lambdas.size)

    def occupancy(self, t: float) -> float:
        """Expected distinct documents requested in [0, t]."""
        return float(self._mult @ -np.expm1(-self._vals * t))

    def rate_hit(self, t: float) -> float:
        """sum_k lambda_k (1 - exp(-lambda_k t))."""
        return float(self._mult @ (self._vals * -np.expm1(-self._vals * t)))

    def rate_exp(self, t: float) -> float:
        """sum_k lambda_k exp(-lambda_k t)."""
        return float(self._mult @ (self._vals * np.exp(-self._vals * t)))


# -- root finding ------------------------------------------------------------

def _invert(fn, target: float) -> float:
    """Root of the increasing function ``fn(t) = target`` with ``fn(0) = 0``.

    Brackets by doubling from [0, 1], then bisects (at most 200 halvings)
    until the endpoints are adjacent floats, which is tighter than any
    1e-12 mixed tolerance.
    """
    lo, hi = 0.0, 1.0
    grow = 0
    while fn(hi) < target:
        lo, hi = hi, 2.0 * hi
        grow += 1
        if grow > _MAX_ITER:
            raise CacheModelError("could not bracket the characteristic time")
    for _ in range(_MAX_ITER):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        val = fn(mid)
        if val == target:
            return mid
        if val < target:
            lo = mid
        else:
            hi = mid
    # pick the better endpoint
    return lo if abs(fn(lo) - target) <= abs(fn(hi) - target) else hi


# -- IRM (explicit rates) ------------------------------------------------------

def char_time_irm(p: PopularityVector, C: float) -> float:
    """``t_C`` with ``sum_k (1 - exp(-lambda_k t_C)) = C``."""
    if not C > 0:
        raise CacheModelError("cache size must be > 0")
    if C >= len(p):
        raise CacheModelError("cache covers catalog")
    return _invert(p.occupancy, float(C))


def hr_irm_stationary(p: PopularityVector, C: float) -> float:
    t = char_time_irm(p, C)
    return min(p.rate_hit(t) / p.total_rate, 1.0)


def hit_function(lam, t, W):
    """Expected hits of one document at rate `lam` over [0, W] when every
    eviction happens exactly `t` after the last request."""
    if not 0 <= t < W:
        raise CacheModelError("hit function needs 0 <= t < W")
    lam = np.asarray(lam, dtype=float)
    out = (lam * W - 1.0) * -np.expm1(-lam * t) + lam * t * np.exp(-lam * t)
    return float(out) if out.ndim == 0 else out


def _saturated_irm(p: PopularityVector, W: float) -> float:
    return max(0.0, 1.0 - p.occupancy(W) / (p.total_rate * W))


def hr_irm_transient(p: PopularityVector, C: float, W: float,
                     beyond_window: str = "error") -> float:
    """Cold-start hit ratio over [0, W].

    ``beyond_window="saturate"`` maps caches too large to fill inside the
    window (``t_C >= W``, including ``C >= K``) to the no-eviction value.
    """
    if not W > 0:
        raise CacheModelError("window must be > 0")
    _check_policy(beyond_window)
    if beyond_window == "saturate" and (C >= len(p) or C >= p.occupancy(W)):
        return _saturated_irm(p, W)
    t = char_time_irm(p, C)
    if t >= W:
        if beyond_window == "saturate":
            return _saturated_irm(p, W)
        raise CacheModelError("characteristic time exceeds window")
    lam_total = p.total_rate
    hr = p.rate_hit(t) / lam_total + (t * p.rate_exp(t) - C) / (lam_total * W)
    return min(max(hr, 0.0), 1.0)


# -- IRM-M (mixing distribution) ---------------------------------------------

def r_of_t(f, t: float) -> float:
    """``E_f[1 - exp(-lambda t)]``."""
    if t < 0:
        raise ValueError("t must be >= 0")
    if t == 0:
        return 0.0
    return f.r(t)


def char_time_irmm(f, delta: float) -> float:
    """``t_delta = r^{-1}(delta)``."""
    if not 0 < delta < 1:
        raise CacheModelError("relative cache size must lie in (0, 1)")
    return _invert(lambda t: r_of_t(f, t), float(delta))


def hr_irmm_stationary(f, delta: float) -> float:
    t = char_time_irmm(f, delta)
    return min(f.mean_rate_hit(t) / f.mean(), 1.0)


def _saturated_irmm(f, W: float) -> float:
    return max(0.0, 1.0 - r_of_t(f, W) / (f.mean() * W))


def hr_irmm_transient(f, delta: float, W: float, beyond_window: str = "error") -> float:
    """Cold-start IRM-M hit ratio over [0, W] at relative size `delta`."""
    if not W > 0:
        raise CacheModelError("window must be > 0")
    _check_policy(beyond_window)
    if delta > r_of_t(f, W) or delta >= 1:
        if beyond_window == "saturate":
            return _saturated_irmm(f, W)
        raise CacheModelError("relative size unreachable within window")
    t = char_time_irmm(f, delta)
    mean = f.mean()
    hr = f.mean_rate_hit(t) / mean + (t * f.mean_rate_exp(t) - delta) / (mean * W)
    return min(max(hr, 0.0), 1.0)


def _check_policy(beyond_window):
    if beyond_window not in ("error", "saturate"):
        raise ValueError(f"beyond_window must be 'error' or 'saturate', got {beyond_window!r}")


# -- curves -------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class HitRatioCurve:
    """Hit ratio against relative cache size ``delta = C / K_reference``."""

    deltas: np.ndarray
    hit_ratios: np.ndarray
    mode: str = "stationary"
    source: str = "model-irmm"
    window: float | None = None
    reference_catalog: float | None = None
    cache_sizes: np.ndarray | None = None

    def __post_init__(self):
        d = np.asarray(self.deltas, dtype=float).ravel()
        hr = np.asarray(self.hit_ratios, dtype=float).ravel()
        if d.size != hr.size or d.size == 0:
            raise ValueError("deltas and hit ratios must be non-empty and aligned")
        if d.size > 1 and not np.all(np.diff(d) > 0):
            raise ValueError("deltas must be strictly increasing")
        if np.any((hr < 0) | (hr > 1)) or np.any(~np.isfinite(hr)):
            raise ValueError("hit ratios must lie in [0, 1]")
        if self.mode not in ("stationary", "transient"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.source not in ("model-irm", "model-irmm", "simulation"):
            raise ValueError(f"unknown source {self.source!r}")
        object.__setattr__(self, "deltas", d)
        object.__setattr__(self, "hit_ratios", hr)
        sizes = self.cache_sizes
        if sizes is None and self.reference_catalog is not None:
            sizes = np.rint(d * self.reference_catalog)
        if sizes is not None:
            sizes = np.asarray(sizes, dtype=np.int64).ravel()
        object.__setattr__(self, "cache_sizes", sizes)

    @property
    def points(self):
        return list(zip(self.deltas.tolist(), self.hit_ratios.tolist()))

    def meta(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "mode": self.mode,
            "window": self.window,
            "source": self.source,
            "reference_catalog": self.reference_catalog,
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["delta", "cache_size", "hit_ratio"])
        sizes = self.cache_sizes
        for i, (d, hr) in enumerate(self.points):
            w.writerow([repr(d), "" if sizes is None else int(sizes[i]), repr(hr)])
        return buf.getvalue()

    def save(self, csv_path) -> Path:
        """Write the CSV and its ``.json`` sidecar; returns the sidecar path."""
        csv_path = Path(csv_path)
        csv_path.write_text(self.to_csv())
        side = sidecar_path(csv_path)
        side.write_text(json.dumps(self.meta(), indent=2))
        return side

    @classmethod
    def load(cls, csv_path) -> "HitRatioCurve":
        csv_path = Path(csv_path)
        rows = list(csv.DictReader(io.StringIO(csv_path.read_text())))
        if not rows or set(rows[0]) != {"delta", "cache_size", "hit_ratio"}:
            raise ValueError(f"{csv_path}: expected header delta,cache_size,hit_ratio")
        meta = {}
        side = sidecar_path(csv_path)
        if side.exists():
            meta = json.loads(side.read_text())
        sizes = None
        if all(r["cache_size"] != "" for r in rows):
            sizes = [int(r["cache_size"]) for r in rows]
        return cls(
            deltas=[float(r["delta"]) for r in rows],
            hit_ratios=[float(r["hit_ratio"]) for r in rows],
            mode=meta.get("mode", "stationary"),
            source=meta.get("source", "simulation"),
            window=meta.get("window"),
            reference_catalog=meta.get("reference_catalog"),
            cache_sizes=sizes,
        )


def sidecar_path(csv_path) -> Path:
    csv_path = Path(csv_path)
    return csv_path.with_suffix(csv_path.suffix + ".json")


def hr_curve_model(model, deltas, mode: str = "stationary", window: float | None = None,
                   reference_catalog: float | None = None,
                   model_catalog: float | None = None,
                   beyond_window: str = "error") -> HitRatioCurve:
    """Model hit-ratio curve on a grid of relative cache sizes.

    Parameters
    ----------
    model : PopularityVector or DiscreteMixing or ParetoMixing
        Explicit rates give the IRM formulas, a mixing gives IRM-M.
    deltas : array_like
        Relative cache sizes, strictly increasing, against
        `reference_catalog`.
    mode : {"stationary", "transient"}
    window : float, optional
        Trace window, required for ``mode="transient"``.
    reference_catalog : float, optional
        Catalog size the deltas refer to.  Defaults to the number of rates
        (IRM) or to `model_catalog` (IRM-M).
    model_catalog : float, optional
        Catalog size the mixing describes (``K_hat`` for a fitted model).
        The model is evaluated at ``delta * reference_catalog /
        model_catalog``.
    beyond_window : {"error", "saturate"}
        Transient only; see :func:`hr_irm_transient`.

    Errors at individual points are re-raised with the offending delta.
    """
    deltas = np.asarray(deltas, dtype=float).ravel()
    if deltas.size == 0 or (deltas.size > 1 and not np.all(np.diff(deltas) > 0)):
        raise ValueError("deltas must be non-empty and strictly increasing")
    if np.any(deltas <= 0):
        raise ValueError("deltas must be > 0")
    if mode == "transient" and not (window and window > 0):
        raise ValueError("transient mode needs a window > 0")
    if mode not in ("stationary", "transient"):
        raise ValueError(f"unknown mode {mode!r}")

    if isinstance(model, PopularityVector):
        k_ref = float(len(model)) if reference_catalog is None else float(reference_catalog)
        sizes = deltas * k_ref

        def point(i):
            if mode == "stationary":
                return hr_irm_stationary(model, sizes[i])
            return hr_irm_transient(model, sizes[i], window, beyond_window)
        source = "model-irm"
    elif isinstance(model, (DiscreteMixing, ParetoMixing)):
        k_model = model_catalog if model_catalog is not None else reference_catalog
        k_ref = reference_catalog if reference_catalog is not None else k_model
        scale = 1.0 if k_ref is None else k_ref / k_model
        rel = deltas * scale

        def point(i):
            if mode == "stationary":
                return hr_irmm_stationary(model, rel[i])
            return hr_irmm_transient(model, rel[i], window, beyond_window)
        source = "model-irmm"
    else:
        raise TypeError(f"unsupported model {type(model).__name__}")

    values = np.empty(deltas.size)
    for i, d in enumerate(deltas):
        try:
            values[i] = point(i)
        except CacheModelError as exc:
            raise CacheModelError(f"delta={float(d)!r}: {exc}") from exc
    if np.any(np.diff(values) < -1e-12):
        bad = deltas[1:][np.diff(values) < -1e-12]
        log.warning("model curve decreases at delta=%s", bad.tolist())
    return HitRatioCurve(deltas, values, mode, source,
                         window if mode == "transient" else None, k_ref)
