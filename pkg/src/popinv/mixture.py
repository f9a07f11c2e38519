"""Mixed-Poisson distributions under zero-censoring.

A document's request count N is Poisson(lambda) with lambda drawn from a
mixing distribution f, so ``P(N = j) = E_f[exp(-lambda) lambda**j / j!]``.
Two mixing families are supported: a discrete one (atoms on a grid) and the
two-parameter Pareto.  All pmf and likelihood arithmetic is done in log space.

Pareto identities used below (``Gamma(s, x)`` is the upper incomplete gamma,
``y = xm * t``)::

    P(N = j)                = alpha xm**alpha Gamma(j - alpha, xm) / j!
    E[1 - exp(-lambda t)]   = -expm1(-y) + y**alpha Gamma(1 - alpha, y)
    E[lambda exp(-lambda t)] = alpha xm**alpha t**(alpha-1) Gamma(1 - alpha, y)
    E[lambda (1 - exp(-lambda t))]
        = alpha/(alpha-1) * (xm (1 - exp(-y)) + xm**alpha t**(alpha-1) Gamma(2 - alpha, y))

The second line follows from ``alpha Gamma(-alpha, y) = y**-alpha e**-y -
Gamma(1 - alpha, y)`` and avoids the cancellation in ``1 - P(N = 0)``.
The Pareto censored log-likelihood is therefore

    sum_j m_j [log(alpha xm**alpha) + log Gamma(j - alpha, xm) - log j!]
        - log(1 - alpha xm**alpha Gamma(-alpha, xm)).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Callable, Mapping

import numpy as np
from scipy import integrate
from scipy.special import gammaln, logsumexp

from .special import log_upper_gamma, upper_incomplete_gamma
from .trace import CountHistogram

__all__ = [
    "DiscreteMixing",
    "ParetoMixing",
    "CensoringError",
    "mixed_pmf",
    "log_mixed_pmf",
    "censored_pmf",
    "observation_probability",
    "catalog_size_estimate",
    "censored_log_likelihood",
    "upper_incomplete_gamma",
    "quadrature_mixed_pmf",
    "mixing_from_dict",
    "mixing_to_dict",
]


class CensoringError(ValueError):
    """The mixing puts (numerically) no mass on observable counts."""


@dataclass(frozen=True, eq=False)
class DiscreteMixing:
    """``P(lambda = x[i]) = w[i]``, with ``x`` strictly increasing."""

    x: np.ndarray
    w: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float).ravel()
        w = np.asarray(self.w, dtype=float).ravel()
        if x.size == 0 or x.size != w.size:
            raise ValueError("atoms and weights must be non-empty and aligned")
        if not np.all(x > 0):
            raise ValueError("atom locations must be > 0")
        if x.size > 1 and not np.all(np.diff(x) > 0):
            raise ValueError("atom locations must be strictly increasing")
        if np.any(w < 0):
            raise ValueError("weights must be >= 0")
        if abs(math.fsum(w) - 1.0) > 1e-12:
            raise ValueError(f"weights sum to {math.fsum(w)!r}, not 1")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "w", w)

    @classmethod
    def normalized(cls, x, w) -> "DiscreteMixing":
        w = np.asarray(w, dtype=float)
        return cls(x, w / w.sum())

    def expect(self, g: Callable) -> float:
        return float(np.dot(self.w, g(self.x)))

    def log_pmf(self, j) -> np.ndarray:
        j = np.atleast_1d(np.asarray(j, dtype=float))
        with np.errstate(divide="ignore"):
            logw = np.log(self.w)
        logx = np.log(self.x)
        terms = (-self.x + logx * j[:, None] - gammaln(j + 1)[:, None]) + logw
        return logsumexp(terms, axis=1)

    def r(self, t: float) -> float:
        return float(np.dot(self.w, -np.expm1(-self.x * t)))

    def mean(self) -> float:
        return float(np.dot(self.w, self.x))

    def mean_rate_hit(self, t: float) -> float:
        """E[lambda (1 - exp(-lambda t))]."""
        return float(np.dot(self.w, self.x * -np.expm1(-self.x * t)))

    def mean_rate_exp(self, t: float) -> float:
        """E[lambda exp(-lambda t)]."""
        return float(np.dot(self.w, self.x * np.exp(-self.x * t)))


@dataclass(frozen=True)
class ParetoMixing:
    """Density ``alpha xm**alpha / x**(alpha + 1)`` on ``x > xm``."""

    alpha: float
    xm: float

    def __post_init__(self):
        if not (self.alpha > 0 and self.xm > 0):
            raise ValueError("Pareto parameters must be > 0")

    def density(self, lam):
        lam = np.asarray(lam, dtype=float)
        out = self.alpha * self.xm ** self.alpha / lam ** (self.alpha + 1)
        return np.where(lam >= self.xm, out, 0.0)

    def expect(self, g: Callable) -> float:
        val, _ = integrate.quad(lambda v: g(v) * self.density(v), self.xm, np.inf,
                                limit=200, epsabs=0, epsrel=1e-11)
        return float(val)

    def log_pmf(self, j) -> np.ndarray:
        j = np.atleast_1d(np.asarray(j, dtype=float))
        a, xm = self.alpha, self.xm
        return (math.log(a) + a * math.log(xm)
                + log_upper_gamma(j - a, xm) - gammaln(j + 1))

    def r(self, t: float) -> float:
        if t <= 0:
            return 0.0
        y = self.xm * t
        a = self.alpha
        return float(-math.expm1(-y) + math.exp(a * math.log(y) + log_upper_gamma(1 - a, y)))

    def _require_mean(self):
        if self.alpha <= 1:
            raise ValueError("Pareto mixing with alpha <= 1 has infinite mean rate")

    def mean(self) -> float:
        self._require_mean()
        return self.alpha * self.xm / (self.alpha - 1)

    def mean_rate_exp(self, t: float) -> float:
        if t <= 0:
            return self.mean()
        a, xm = self.alpha, self.xm
        return math.exp(math.log(a) + a * math.log(xm) + (a - 1) * math.log(t)
                        + log_upper_gamma(1 - a, xm * t))

    def mean_rate_hit(self, t: float) -> float:
        self._require_mean()
        if t <= 0:
            return 0.0
        a, xm = self.alpha, self.xm
        y = xm * t
        tail = math.exp(a * math.log(xm) + (a - 1) * math.log(t) + log_upper_gamma(2 - a, y))
        return a / (a - 1) * (xm * -math.expm1(-y) + tail)


MixingDistribution = DiscreteMixing | ParetoMixing


def log_mixed_pmf(f, j) -> np.ndarray:
    """log P(N = j) for an array of counts j >= 0."""
    j = np.atleast_1d(np.asarray(j))
    if np.any(j < 0):
        raise ValueError("counts must be >= 0")
    return f.log_pmf(j)


def mixed_pmf(f, j):
    """P(N = j) under mixing `f`; scalar in, scalar out."""
    val = np.exp(log_mixed_pmf(f, j))
    return float(val[0]) if np.ndim(j) == 0 else val


def observation_probability(f, window: float = 1.0) -> float:
    """E_f[1 - exp(-lambda W)]: chance a document shows up in the trace."""
    return f.r(window)


def _log_observation_probability(f) -> float:
    p = observation_probability(f)
    if not p > 0:
        raise CensoringError("mixing invisible under censoring")
    return math.log(p)


def censored_pmf(f, j):
    """P(N = j | N > 0) for j >= 1."""
    j_arr = np.atleast_1d(np.asarray(j))
    if np.any(j_arr < 1):
        raise ValueError("censored counts start at 1")
    val = np.exp(log_mixed_pmf(f, j_arr) - _log_observation_probability(f))
    return float(val[0]) if np.ndim(j) == 0 else val


def catalog_size_estimate(observed_docs: int, f) -> float:
    """K0 / E_f[1 - exp(-lambda)]."""
    p = observation_probability(f)
    if not p > 0:
        raise CensoringError("zero observation probability")
    return observed_docs / min(p, 1.0)


def censored_log_likelihood(f, h: CountHistogram) -> float:
    """Per-document zero-truncated log-likelihood of histogram `h`.

    Returns ``-inf`` when an observed count has zero model mass.
    """
    if h.is_empty():
        raise ValueError("empty histogram")
    m = h.proportions
    logp = log_mixed_pmf(f, h.counts)
    if np.any(np.isneginf(logp)):
        return -math.inf
    return float(math.fsum(m * logp) - _log_observation_probability(f))


def quadrature_mixed_pmf(density: Callable, support: tuple, j: int) -> float:
    """Adaptive-quadrature value of P(N = j) for a continuous mixing density.

    Test oracle only; the integrand is split at its mode so that large `j`
    is resolved.
    """
    a, b = support
    total, _ = integrate.quad(density, a, b, limit=400, epsabs=1e-13, epsrel=1e-12)
    if abs(total - 1.0) > 1e-8:
        raise ValueError(f"density integrates to {total!r} on the support")
    logfact = math.lgamma(j + 1)

    def integrand(lam):
        if lam <= 0:
            return 0.0
        return math.exp(-lam + j * math.log(lam) - logfact) * density(lam)

    # integrand mass sits around lambda ~ j; split there
    cuts = [a]
    for c in (0.5 * j, float(j), 2.0 * j + 10.0):
        if a < c < b and c > cuts[-1]:
            cuts.append(c)
    cuts.append(b)
    val = 0.0
    for lo, hi in zip(cuts[:-1], cuts[1:]):
        piece, _ = integrate.quad(integrand, lo, hi, limit=400, epsabs=0, epsrel=1e-13)
        val += piece
    return val


def mixing_to_dict(f) -> dict:
    if isinstance(f, DiscreteMixing):
        return {"type": "discrete",
                "atoms": [{"x": float(x), "w": float(w)} for x, w in zip(f.x, f.w)]}
    if isinstance(f, ParetoMixing):
        return {"type": "pareto", "alpha": float(f.alpha), "xm": float(f.xm)}
    raise TypeError(f"unsupported mixing {type(f).__name__}")


def mixing_from_dict(data: Mapping):
    kind = data.get("type")
    if kind == "discrete":
        atoms = data["atoms"]
        return DiscreteMixing([a["x"] for a in atoms], [a["w"] for a in atoms])
    if kind == "pareto":
        return ParetoMixing(float(data["alpha"]), float(data["xm"]))
    raise ValueError(f"unknown mixing type {kind!r}")


def load_mixing(path) -> "MixingDistribution":
    with open(path) as fh:
        data = json.load(fh)
    return mixing_from_dict(data.get("mixing", data))
