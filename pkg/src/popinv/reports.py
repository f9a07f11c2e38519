"""Accuracy metrics: MARE and comparison reports for pmfs and hit-ratio curves."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .cache_model import HitRatioCurve
from .mixture import DiscreteMixing, censored_pmf
from .trace import SCHEMA_VERSION, CountHistogram

__all__ = [
    "mare",
    "relative_errors",
    "ComparisonReport",
    "naive_request_flow",
    "compare_mixture",
    "compare_hr",
]


def relative_errors(reference, estimate) -> np.ndarray:
    x = np.asarray(reference, dtype=float).ravel()
    y = np.asarray(estimate, dtype=float).ravel()
    if x.size != y.size:
        raise ValueError(f"length mismatch: {x.size} reference vs {y.size} estimate")
    if x.size == 0:
        raise ValueError("empty sequences")
    if np.any(x == 0):
        raise ValueError("reference contains zero")
    return np.abs(y - x) / np.abs(x)


def mare(reference, estimate) -> float:
    """``(1/N) sum |y_i - x_i| / |x_i|`` with `reference` as ``x``."""
    return math.fsum(relative_errors(reference, estimate)) / np.size(reference)


@dataclass(frozen=True, eq=False)
class ComparisonReport:
    reference: dict
    estimate: dict
    errors: np.ndarray
    metadata: dict = field(default_factory=dict)

    @property
    def mare(self) -> float:
        return math.fsum(self.errors) / self.errors.size

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "reference": self.reference,
            "estimate": self.estimate,
            "mare": self.mare,
            "relative_errors": self.errors.tolist(),
            "metadata": self.metadata,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def naive_request_flow(h: CountHistogram) -> DiscreteMixing:
    """Mixing whose censored mixed-Poisson pmf is the expected empirical
    count distribution of IRM traces regenerated from the naive fit.

    Each observed document keeps its count as its rate; documents that
    draw zero requests in a regenerated trace are censored away, which is
    exactly what conditioning on ``N > 0`` does.
    """
    return DiscreteMixing(h.counts.astype(float), h.proportions)


def compare_mixture(reference, estimate, j_max: int | None = None,
                    j_min: int = 1, metadata: dict | None = None) -> ComparisonReport:
    """MARE between censored request-count pmfs over ``j_min..j_max``.

    `reference` is a mixing distribution (analytic censored pmf) or a
    :class:`CountHistogram` (empirical proportions, which must be non-zero
    on the whole range).  `j_max` defaults to the histogram's largest count.
    """
    if isinstance(reference, CountHistogram):
        if j_max is None:
            j_max = reference.max_count
        j = np.arange(j_min, j_max + 1)
        tally = reference.tally
        ref = np.array([tally.get(int(k), 0) for k in j], dtype=float) / reference.observed_docs
        ref_desc = {"type": "histogram", "observed_docs": reference.observed_docs}
    else:
        if j_max is None:
            raise ValueError("j_max is required for an analytic reference")
        j = np.arange(j_min, j_max + 1)
        ref = censored_pmf(reference, j)
        ref_desc = {"type": type(reference).__name__}
    est = censored_pmf(estimate, j)
    meta = {"j_min": int(j_min), "j_max": int(j_max)}
    meta.update(metadata or {})
    return ComparisonReport(ref_desc, {"type": type(estimate).__name__},
                            relative_errors(ref, est), meta)


def compare_hr(reference: HitRatioCurve, estimate: HitRatioCurve,
               metadata: dict | None = None) -> ComparisonReport:
    """MARE of hit ratios on a shared relative-size grid."""
    if reference.deltas.size != estimate.deltas.size or not np.allclose(
            reference.deltas, estimate.deltas, rtol=1e-12, atol=0):
        raise ValueError("curves are on different delta grids")
    return ComparisonReport(
        {"source": reference.source, "mode": reference.mode},
        {"source": estimate.source, "mode": estimate.mode},
        relative_errors(reference.hit_ratios, estimate.hit_ratios),
        dict(metadata or {}, deltas=reference.deltas.tolist()),
    )
