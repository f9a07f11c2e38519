"""Estimators for the popularity mixing distribution.

The non-parametric (NP) problem maximizes, over weights ``theta`` on a fixed
grid ``x``,

    L(theta) = sum_j m_j log sum_i theta_i p_i(j) - log sum_i theta_i q_i

with ``p_i(j)`` the Poisson(x_i) pmf and ``q_i = 1 - exp(-x_i)``.  Writing
``phi_i = theta_i q_i / sum_k theta_k q_k`` (the share of *observed*
documents on atom i) turns this into ``F(phi) = sum_j m_j log (A phi)_j``
with ``A_ji = p_i(j) / q_i``, which is concave on the simplex and has the
same value: ``L(theta) == F(phi)``.  The default solver is a sequential
quadratic program on ``phi`` (Newton step restricted to the simplex, solved
as a non-negative least-squares problem, then Armijo backtracking).
Projected gradient on ``theta`` and the EM fixed point on ``phi`` are
available as alternatives.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Any

import numpy as np
from scipy import optimize
from scipy.special import gammaln

from .mixture import (
    CensoringError,
    DiscreteMixing,
    ParetoMixing,
    catalog_size_estimate,
    censored_log_likelihood,
    mixing_from_dict,
    mixing_to_dict,
    observation_probability,
)
from .special import log_upper_gamma
from .trace import SCHEMA_VERSION, CountHistogram, DocumentCounts

log = logging.getLogger(__name__)

__all__ = [
    "GridSpec",
    "SolverConfig",
    "PenaltyConfig",
    "EstimationResult",
    "naive_estimate",
    "build_grid",
    "np_ml_estimate",
    "np_loglik",
    "np_loglik_gradient",
    "kkt_residual",
    "pareto_ml_estimate",
    "pareto_log_likelihood",
    "penalized_np_estimate",
    "smoothness_penalty",
    "find_peaks",
    "peak_refit",
    "zipf_loglog_fit",
    "project_simplex",
]

METHODS = ("naive", "np", "np-penalized", "np-peak-refit", "pareto", "zipf")


@dataclass(frozen=True)
class GridSpec:
    lower: float = 0.01
    upper_factor: float = 1.2
    points: int = 128

    def __post_init__(self):
        if not self.lower > 0 or not self.upper_factor > 1 or self.points < 2:
            raise ValueError("grid needs lower > 0, upper_factor > 1, points >= 2")


@dataclass(frozen=True)
class SolverConfig:
    max_iterations: int = 1000
    relative_tolerance: float = 1e-10
    kkt_tolerance: float = 1e-8
    solver: str = "sqp"  # "sqp" | "pg" | "em"
    initial_weights: Any = None  # None means uniform
    seed: int = 0

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if not (self.relative_tolerance > 0 and self.kkt_tolerance > 0):
            raise ValueError("tolerances must be > 0")
        if self.solver not in ("sqp", "pg", "em"):
            raise ValueError(f"unknown solver {self.solver!r}")


@dataclass(frozen=True)
class PenaltyConfig:
    rho: float = 0.0

    def __post_init__(self):
        if not self.rho >= 0:
            raise ValueError("rho must be >= 0")


@dataclass(frozen=True, eq=False)
class EstimationResult:
    mixing: Any
    catalog_estimate: float
    log_likelihood: float
    iterations: int
    converged: bool
    method: str
    observed_docs: int = 0
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        diag = {k: v for k, v in self.diagnostics.items() if k != "history"}
        return {
            "schema_version": SCHEMA_VERSION,
            "method": self.method,
            "mixing": mixing_to_dict(self.mixing),
            "catalog_estimate": float(self.catalog_estimate),
            "observed_docs": int(self.observed_docs),
            "log_likelihood": float(self.log_likelihood),
            "iterations": int(self.iterations),
            "converged": bool(self.converged),
            "diagnostics": _jsonable(diag),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, data) -> "EstimationResult":
        return cls(
            mixing=mixing_from_dict(data["mixing"]),
            catalog_estimate=float(data["catalog_estimate"]),
            log_likelihood=float(data["log_likelihood"]),
            iterations=int(data["iterations"]),
            converged=bool(data["converged"]),
            method=data["method"],
            observed_docs=int(data.get("observed_docs", 0)),
            diagnostics=dict(data.get("diagnostics", {})),
        )


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    return obj


def _require_data(h: CountHistogram):
    if h.is_empty():
        raise ValueError("empty histogram")


# -- naive ------------------------------------------------------------------

def naive_estimate(h: CountHistogram) -> EstimationResult:
    """Popularity = observed count, catalog = observed documents."""
    _require_data(h)
    mix = DiscreteMixing(h.counts.astype(float), h.proportions)
    return EstimationResult(
        mixing=mix,
        catalog_estimate=float(h.observed_docs),
        log_likelihood=censored_log_likelihood(mix, h),
        iterations=0,
        converged=True,
        method="naive",
        observed_docs=h.observed_docs,
    )


# -- grid and NP objective ---------------------------------------------------

def build_grid(h: CountHistogram, g: GridSpec = GridSpec()) -> np.ndarray:
    _require_data(h)
    upper = g.upper_factor * h.max_count
    if upper <= g.lower:
        raise ValueError("grid upper bound must exceed the lower bound")
    grid = np.geomspace(g.lower, upper, g.points)
    grid[0], grid[-1] = g.lower, upper
    return grid


def _log_kernel(counts: np.ndarray, grid: np.ndarray) -> np.ndarray:
    """log p_i(j): rows are counts, columns grid atoms."""
    j = counts.astype(float)[:, None]
    return -grid[None, :] + j * np.log(grid)[None, :] - gammaln(j + 1)


def _log_q(grid):
    return np.log(-np.expm1(-grid))


class _Problem:
    """Precomputed pieces of the NP likelihood for a (histogram, grid) pair."""

    def __init__(self, h: CountHistogram, grid: np.ndarray):
        _require_data(h)
        self.grid = np.asarray(grid, dtype=float)
        self.m = h.proportions
        self.q = -np.expm1(-self.grid)
        logp = _log_kernel(h.counts, self.grid)
        self.logp_shift = logp.max(axis=1)
        self.P = np.exp(logp - self.logp_shift[:, None])  # p_i(j) / shift_j
        logA = logp - _log_q(self.grid)[None, :]
        self.logA_shift = logA.max(axis=1)
        self.A = np.exp(logA - self.logA_shift[:, None])
        self.const_theta = float(np.dot(self.m, self.logp_shift))
        self.const_phi = float(np.dot(self.m, self.logA_shift))

    # theta parameterization
    def loglik(self, theta) -> float:
        mix = self.P @ theta
        qt = float(self.q @ theta)
        if np.any(mix <= 0) or qt <= 0:
            return -math.inf
        return float(np.dot(self.m, np.log(mix))) + self.const_theta - math.log(qt)

    def gradient(self, theta) -> np.ndarray:
        mix = self.P @ theta
        qt = float(self.q @ theta)
        if np.any(mix <= 0) or qt <= 0:
            raise ZeroDivisionError("weights give zero mass to an observed count")
        return self.P.T @ (self.m / mix) - self.q / qt

    def hessian(self, theta) -> np.ndarray:
        mix = self.P @ theta
        qt = float(self.q @ theta)
        B = self.P * (np.sqrt(self.m) / mix)[:, None]
        return -(B.T @ B) + np.outer(self.q, self.q) / qt ** 2

    # phi parameterization
    def F(self, phi) -> float:
        mix = self.A @ phi
        if np.any(mix <= 0):
            return -math.inf
        return float(np.dot(self.m, np.log(mix))) + self.const_phi

    def F_increment(self, phi, cand) -> float:
        """F(cand) - F(phi), accurate when the two are close."""
        base = self.A @ phi
        rel = (self.A @ (cand - phi)) / base
        if np.any(rel <= -1):
            return -math.inf
        return float(np.dot(self.m, np.log1p(rel)))

    def theta_from_phi(self, phi):
        t = phi / self.q
        return t / t.sum()

    def phi_from_theta(self, theta):
        p = theta * self.q
        return p / p.sum()


def np_loglik(theta, grid, h: CountHistogram) -> float:
    return _Problem(h, grid).loglik(np.asarray(theta, dtype=float))


def np_loglik_gradient(theta, grid, h: CountHistogram) -> np.ndarray:
    """dL/dtheta_i = sum_j m_j p_i(j) / (P theta)_j - q_i / (q . theta)."""
    return _Problem(h, grid).gradient(np.asarray(theta, dtype=float))


def kkt_residual(theta, grad) -> float:
    """First-order optimality gap on the simplex, ``max_i grad_i - theta . grad``.

    The multiplier ``lam = theta . grad`` is the weighted mean gradient, so
    the gap is zero exactly when ``grad_i <= lam`` everywhere, which forces
    ``grad_i == lam`` on the support.  For the NP objective ``lam`` is
    identically 0 and the gap bounds the distance to the optimal value in
    the concave ``phi`` parameterization (a Frank-Wolfe gap).  Unlike a
    support-wise check it does not penalize weights that are tiny but not
    exactly zero, which multiplicative solvers never reach.
    """
    theta = np.asarray(theta)
    grad = np.asarray(grad)
    lam = float(np.dot(theta, grad))
    return max(float(np.max(grad)) - lam, 0.0)


def project_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection onto {x >= 0, sum x = 1} (sort-based)."""
    n = v.size
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    idx = np.arange(1, n + 1)
    cond = u - css / idx > 0
    rho = idx[cond][-1]
    tau = css[cond][-1] / rho
    w = np.maximum(v - tau, 0.0)
    return w / w.sum()


def _renorm(x):
    x = np.maximum(x, 0.0)
    return x / math.fsum(x)


# -- solvers -----------------------------------------------------------------

def _newton_target(A, m, phi, zeta=1e6):
    """Simplex-restricted Newton point for F at ``phi``.

    The quadratic model of F on the simplex is, up to a constant,
    ``-0.5 * ||W (S y - 2)||^2`` with ``S = A / (A phi)`` row-wise and
    ``W = sqrt(m)``; it is minimized by NNLS with a heavily weighted
    ``sum(y) = 1`` row, then renormalized.
    """
    mix = A @ phi
    wt = np.sqrt(m)
    M = np.vstack([(wt / mix)[:, None] * A, np.full((1, A.shape[1]), zeta)])
    rhs = np.concatenate([2.0 * wt, [zeta]])
    y, _ = optimize.nnls(M, rhs, maxiter=50 * A.shape[1])
    total = y.sum()
    if not total > 0:
        return phi
    return y / total


@dataclass
class _Trace:
    history: list = field(default_factory=list)

    def push(self, value):
        if self.history and value < self.history[-1] - 1e-12 * max(1.0, abs(value)):
            raise AssertionError(f"objective decreased: {self.history[-1]!r} -> {value!r}")
        self.history.append(value)


def _kkt_phi(prob: _Problem, phi) -> float:
    theta = prob.theta_from_phi(phi)
    return kkt_residual(theta, prob.gradient(theta))


def _armijo(prob: _Problem, phi, p, slope):
    """Backtrack along ``p``; returns (point, gain) or (None, 0.0)."""
    t = 1.0
    while t >= 1e-20:
        cand = _renorm(phi + t * p)
        gain = prob.F_increment(phi, cand)
        if gain >= 1e-4 * t * slope and gain >= 0:
            return cand, gain
        t *= 0.5
    return None, 0.0


def _solve_sqp(prob: _Problem, phi, s: SolverConfig, trace: _Trace):
    A, m = prob.A, prob.m
    Fcur = prob.F(phi)
    trace.push(Fcur)
    converged = False
    it = 0
    for it in range(1, s.max_iterations + 1):
        d = A.T @ (m / (A @ phi))
        cand = None
        # Newton direction first; an EM step rescues numerically flat cases
        for target in (_newton_target(A, m, phi), _renorm(phi * d)):
            p = target - phi
            slope = float(d @ p)
            if slope > 0:
                cand, gain = _armijo(prob, phi, p, slope)
                if cand is not None:
                    break
        if cand is None:
            # objective changes are below rounding here: take the plain
            # Newton point if it improves first-order optimality
            kkt_now = _kkt_phi(prob, phi)
            target = _newton_target(A, m, phi)
            gain = prob.F_increment(phi, target)
            noise = 1e-14 * max(1.0, abs(Fcur))
            if kkt_now > s.kkt_tolerance and gain >= -noise \
                    and _kkt_phi(prob, target) < kkt_now:
                cand, gain = target, max(gain, 0.0)
            else:
                converged = kkt_now <= s.kkt_tolerance
                break
        change = gain / max(1.0, abs(Fcur))
        phi, Fcur = cand, Fcur + gain
        trace.push(Fcur)
        if _kkt_phi(prob, phi) <= s.kkt_tolerance and change <= s.relative_tolerance:
            converged = True
            break
    return phi, it, converged


def _solve_em(prob: _Problem, phi, s: SolverConfig, trace: _Trace):
    A, m = prob.A, prob.m
    trace.push(prob.F(phi))
    converged = False
    it = 0
    for it in range(1, s.max_iterations + 1):
        d = A.T @ (m / (A @ phi))
        phi = _renorm(phi * d)
        Fnew = prob.F(phi)
        change = abs(Fnew - trace.history[-1]) / max(1.0, abs(Fnew))
        trace.push(Fnew)
        if change <= s.relative_tolerance and _kkt_phi(prob, phi) <= s.kkt_tolerance:
            converged = True
            break
    return phi, it, converged


def _solve_pg(objective, gradient, theta, s: SolverConfig, trace: _Trace, kkt=None):
    """Projected-gradient ascent on the simplex with Armijo backtracking."""
    fcur = objective(theta)
    trace.push(fcur)
    step = 1.0
    converged = False
    it = 0
    kkt = kkt or (lambda th, gr: kkt_residual(th, gr))
    for it in range(1, s.max_iterations + 1):
        g = gradient(theta)
        step = min(step * 2.0, 1e12)
        while True:
            cand = project_simplex(theta + step * g)
            diff = cand - theta
            fnew = objective(cand)
            if fnew >= fcur + 1e-4 * float(g @ diff) and np.isfinite(fnew):
                break
            step *= 0.5
            if step < 1e-30:
                cand, fnew = theta, fcur
                break
        stalled = fnew == fcur
        theta, fcur = cand, fnew
        trace.push(fcur)
        if kkt(theta, gradient(theta)) <= s.kkt_tolerance:
            converged = True
            break
        if stalled:
            break
    return theta, it, converged


def _initial_theta(n, s: SolverConfig):
    if s.initial_weights is None:
        return np.full(n, 1.0 / n)
    w = np.asarray(s.initial_weights, dtype=float)
    if w.size != n or np.any(w < 0) or not w.sum() > 0:
        raise ValueError("initial weights must match the grid and be non-negative")
    return w / w.sum()


def _fit_on_grid(h: CountHistogram, grid: np.ndarray, s: SolverConfig, method: str):
    prob = _Problem(h, grid)
    theta0 = _initial_theta(grid.size, s)
    trace = _Trace()
    if s.solver == "pg":
        theta, it, conv = _solve_pg(prob.loglik, prob.gradient, theta0, s, trace)
    else:
        phi0 = prob.phi_from_theta(theta0)
        solve = _solve_sqp if s.solver == "sqp" else _solve_em
        phi, it, conv = solve(prob, phi0, s, trace)
        theta = prob.theta_from_phi(phi)
    theta = _renorm(theta)
    p_obs = float(prob.q @ theta)
    if p_obs < 1e-12:
        raise CensoringError("all fitted mass escapes observation")
    kkt = kkt_residual(theta, prob.gradient(theta))
    keep = theta > 0
    mix = DiscreteMixing(grid[keep], _renorm(theta[keep]))
    if not conv:
        log.warning("%s fit stopped after %d iterations (kkt %.3g)", method, it, kkt)
    return EstimationResult(
        mixing=mix,
        catalog_estimate=catalog_size_estimate(h.observed_docs, mix),
        log_likelihood=prob.loglik(theta),
        iterations=it,
        converged=bool(conv and kkt <= s.kkt_tolerance),
        method=method,
        observed_docs=h.observed_docs,
        diagnostics={"kkt_residual": kkt, "solver": s.solver, "grid": grid.tolist(),
                     "weights": theta.tolist(), "history": trace.history},
    )


def np_ml_estimate(h: CountHistogram, g: GridSpec = GridSpec(),
                   s: SolverConfig = SolverConfig()) -> EstimationResult:
    """Non-parametric ML mixing on a geometric grid, plus catalog estimate.

    Non-convergence is reported through ``converged=False``; the returned
    weights are the last (feasible, best-so-far) iterate.
    """
    return _fit_on_grid(h, build_grid(h, g), s, "np")


# -- penalized NP -------------------------------------------------------------

_FLOOR = 1e-300


def smoothness_penalty(theta, grid) -> float:
    """sum_i (t[i+1]-t[i]) (log t[i+1] - log t[i]) / (x[i+1]-x[i])."""
    t = np.maximum(np.asarray(theta, dtype=float), _FLOOR)
    lt = np.log(t)
    return float(np.sum(np.diff(t) * np.diff(lt) / np.diff(grid)))


def _penalty_grad(theta, grid):
    t = np.maximum(theta, _FLOOR)
    lt = np.log(t)
    dx = np.diff(grid)
    dt, dl = np.diff(t), np.diff(lt)
    g = np.zeros_like(t)
    # d/d t[i+1] and d/d t[i] of (t[i+1]-t[i])(log t[i+1]-log t[i]) / dx
    g[1:] += (dl + dt / t[1:]) / dx
    g[:-1] += (-dl - dt / t[:-1]) / dx
    return g


def _penalty_hessian(theta, grid):
    t = np.maximum(theta, _FLOOR)
    a, b = t[:-1], t[1:]
    dx = np.diff(grid)
    H = np.zeros((t.size, t.size))
    idx = np.arange(t.size - 1)
    H[idx, idx] += (1 / a + b / a ** 2) / dx
    H[idx + 1, idx + 1] += (1 / b + a / b ** 2) / dx
    off = -(1 / a + 1 / b) / dx
    H[idx, idx + 1] += off
    H[idx + 1, idx] += off
    return H


def penalized_np_estimate(h: CountHistogram, g: GridSpec = GridSpec(),
                          p: PenaltyConfig = PenaltyConfig(),
                          s: SolverConfig = SolverConfig()) -> EstimationResult:
    """Maximize ``L(theta) - rho R(theta)`` on the simplex.

    ``rho == 0`` delegates to :func:`np_ml_estimate`.  For ``rho > 0`` the
    optimum is interior (R has infinite slope at the boundary), so the
    weights are parameterized as a softmax ``theta = exp(z) / sum(exp(z))``
    and fitted by trust-region Newton with the exact Hessian.  The reported
    ``kkt_residual`` is the stationarity ``max_i theta_i |g_i - theta . g|``
    in those coordinates, which vanishes exactly at interior KKT points.
    """
    if p.rho == 0:
        res = np_ml_estimate(h, g, s)
        return replace(res, method="np-penalized", diagnostics={**res.diagnostics, "rho": 0.0})
    grid = build_grid(h, g)
    prob = _Problem(h, grid)
    rho = p.rho

    def objective(theta):
        return prob.loglik(theta) - rho * smoothness_penalty(theta, grid)

    def theta_of(z):
        z = z - z.max()
        e = np.exp(z)
        return e / e.sum()

    def grad_theta(th):
        return prob.gradient(th) - rho * _penalty_grad(th, grid)

    def neg(z):
        th = theta_of(z)
        gr = grad_theta(th)
        return -objective(th), -th * (gr - float(th @ gr))

    def neg_hess(z):
        th = theta_of(z)
        gr = grad_theta(th)
        u = th * (gr - float(th @ gr))
        H = prob.hessian(th) - rho * _penalty_hessian(th, grid)
        J = np.diag(th) - np.outer(th, th)
        Hz = J @ H @ J + np.diag(u) - np.outer(u, th) - np.outer(th, u)
        return -0.5 * (Hz + Hz.T)

    trace = _Trace()
    z0 = np.log(_initial_theta(grid.size, s))
    trace.push(-neg(z0)[0])
    out = optimize.minimize(neg, z0, jac=True, hess=neg_hess, method="trust-exact",
                            callback=lambda zk: trace.push(-neg(zk)[0]),
                            options={"maxiter": s.max_iterations, "gtol": s.kkt_tolerance})
    theta = _renorm(theta_of(out.x))
    gr = grad_theta(theta)
    kkt = float(np.max(np.abs(theta * (gr - float(theta @ gr)))))
    keep = theta > 0
    mix = DiscreteMixing(grid[keep], _renorm(theta[keep]))
    return EstimationResult(
        mixing=mix,
        catalog_estimate=catalog_size_estimate(h.observed_docs, mix),
        log_likelihood=prob.loglik(theta),
        iterations=int(out.nit),
        converged=bool(kkt <= s.kkt_tolerance),
        method="np-penalized",
        observed_docs=h.observed_docs,
        diagnostics={"rho": rho, "penalty": smoothness_penalty(theta, grid),
                     "objective": objective(theta), "kkt_residual": kkt,
                     "grid": grid.tolist(), "weights": theta.tolist(),
                     "history": trace.history, "message": str(out.message)},
    )


# -- peak refit ---------------------------------------------------------------

def find_peaks(weights) -> np.ndarray:
    """Indices strictly above every neighbour; ties are not peaks."""
    w = np.asarray(weights, dtype=float)
    n = w.size
    if n == 1:
        return np.array([0]) if w[0] > 0 else np.array([], dtype=int)
    left = np.concatenate([[-np.inf], w[:-1]])
    right = np.concatenate([w[1:], [-np.inf]])
    return np.flatnonzero((w > left) & (w > right))


def peak_refit(base: EstimationResult, h: CountHistogram,
               s: SolverConfig = SolverConfig()) -> EstimationResult:
    """Refit the NP likelihood on the local maxima of ``base``'s weights.

    Weights are read over the full grid when ``base`` carries it, so atoms
    pruned to zero still count as neighbours.
    """
    if not isinstance(base.mixing, DiscreteMixing):
        raise TypeError("peak refit needs a discrete mixing")
    grid = base.diagnostics.get("grid")
    weights = base.diagnostics.get("weights")
    if grid is None or weights is None:
        grid, weights = base.mixing.x, base.mixing.w
    grid = np.asarray(grid, dtype=float)
    peaks = find_peaks(weights)
    if peaks.size == 0:
        return replace(base, diagnostics={**base.diagnostics, "message": "no peaks found"})
    support = grid[peaks]
    res = _fit_on_grid(h, support, replace(s, initial_weights=None), "np-peak-refit")
    return replace(res, diagnostics={**res.diagnostics, "peaks": support.tolist()})


# -- Pareto ML ----------------------------------------------------------------

ALPHA_BOX = (0.5, 5.0)
XM_BOX = (1e-4, 10.0)


def pareto_log_likelihood(alpha: float, xm: float, h: CountHistogram) -> float:
    """Censored Pareto-mixed Poisson log-likelihood per observed document."""
    counts = h.counts.astype(float)
    m = h.proportions
    la = math.log(alpha) + alpha * math.log(xm)
    logp = la + log_upper_gamma(counts - alpha, xm) - gammaln(counts + 1)
    p_obs = ParetoMixing(alpha, xm).r(1.0)
    if not p_obs > 0:
        return -math.inf
    return float(np.dot(m, logp)) - math.log(p_obs)


def pareto_ml_estimate(h: CountHistogram, s: SolverConfig = SolverConfig(),
                       alpha_box=ALPHA_BOX, xm_box=XM_BOX,
                       fixed_alpha: float | None = None) -> EstimationResult:
    """Maximize the censored Pareto likelihood over a bounded box.

    A 3x3 grid of starts seeds L-BFGS-B (in log-parameters), the best run is
    polished with Nelder-Mead.  With `fixed_alpha` only ``xm`` is fitted.
    """
    _require_data(h)
    lo = np.log([alpha_box[0], xm_box[0]])
    hi = np.log([alpha_box[1], xm_box[1]])
    evals = [0]

    def nll(v):
        evals[0] += 1
        a, x = (fixed_alpha, math.exp(v[0])) if fixed_alpha is not None else np.exp(v)
        val = pareto_log_likelihood(float(a), float(x), h)
        return -val if np.isfinite(val) else 1e300

    if fixed_alpha is not None:
        bounds = [(lo[1], hi[1])]
        starts = [np.array([v]) for v in np.linspace(lo[1], hi[1], 5)[1:-1]]
    else:
        bounds = list(zip(lo, hi))
        ga = np.linspace(lo[0], hi[0], 5)[1:-1]
        gx = np.linspace(lo[1], hi[1], 5)[1:-1]
        starts = [np.array([a, x]) for a in ga for x in gx]

    best = None
    for v0 in starts:
        r = optimize.minimize(nll, v0, method="L-BFGS-B", bounds=bounds,
                              options={"ftol": 1e-15, "gtol": 1e-10, "maxiter": s.max_iterations})
        if best is None or r.fun < best.fun:
            best = r
    polish = optimize.minimize(nll, best.x, method="Nelder-Mead", bounds=bounds,
                               options={"xatol": 1e-10, "fatol": 1e-15,
                                        "maxiter": 20 * s.max_iterations})
    if polish.fun <= best.fun:
        best = polish
    v = best.x
    at_edge = bool(np.any(np.isclose(v, [b[0] for b in bounds], atol=1e-6))
                   or np.any(np.isclose(v, [b[1] for b in bounds], atol=1e-6)))
    if fixed_alpha is not None:
        alpha, xm = float(fixed_alpha), float(math.exp(v[0]))
    else:
        alpha, xm = (float(t) for t in np.exp(v))
    mix = ParetoMixing(alpha, xm)
    diag = {"evaluations": evals[0]}
    if at_edge:
        diag["message"] = "optimum pinned at the parameter box boundary"
    return EstimationResult(
        mixing=mix,
        catalog_estimate=catalog_size_estimate(h.observed_docs, mix),
        log_likelihood=-float(best.fun),
        iterations=int(getattr(best, "nit", 0)),
        converged=not at_edge,
        method="pareto",
        observed_docs=h.observed_docs,
        diagnostics=diag,
    )


# -- rank-frequency baseline --------------------------------------------------

def zipf_loglog_fit(dc: DocumentCounts, top_n: int = 20000,
                    h: CountHistogram | None = None) -> EstimationResult:
    """Least-squares slope of log count on log rank over the top documents.

    The tail index is reported as ``1 / |slope|``.  To give a usable mixing
    the Pareto scale is then fitted by censored ML with the exponent held
    fixed (pass the histogram as `h`; otherwise it is rebuilt from `dc`).
    """
    if dc.observed_docs < 2:
        raise ValueError("need at least two documents")
    counts = np.sort(dc.values)[::-1][: min(top_n, dc.observed_docs)].astype(float)
    if counts.size < 2 or counts[0] == counts[-1]:
        raise ValueError("zero slope, exponent undefined")
    ranks = np.arange(1, counts.size + 1, dtype=float)
    slope, intercept = np.polyfit(np.log(ranks), np.log(counts), 1)
    alpha = 1.0 / abs(slope)
    if h is None:
        from .trace import histogram_from_counts
        h = histogram_from_counts(dc)
    if ALPHA_BOX[0] <= alpha <= ALPHA_BOX[1]:
        scale = pareto_ml_estimate(h, fixed_alpha=alpha)
        mix, ll = scale.mixing, scale.log_likelihood
    else:
        mix = ParetoMixing(alpha, float(np.min(dc.values)))
        ll = pareto_log_likelihood(alpha, mix.xm, h)
    return EstimationResult(
        mixing=mix,
        catalog_estimate=catalog_size_estimate(dc.observed_docs, mix),
        log_likelihood=ll,
        iterations=0,
        converged=True,
        method="zipf",
        observed_docs=dc.observed_docs,
        diagnostics={"slope": float(slope), "intercept": float(intercept),
                     "alpha": alpha, "top_n": int(counts.size)},
    )


def estimate(method: str, h: CountHistogram, dc: DocumentCounts | None = None,
             g: GridSpec = GridSpec(), s: SolverConfig = SolverConfig(),
             p: PenaltyConfig = PenaltyConfig(), top_n: int = 20000) -> EstimationResult:
    """Dispatch by method tag (the CLI's ``--method``)."""
    if method == "naive":
        return naive_estimate(h)
    if method == "np":
        return np_ml_estimate(h, g, s)
    if method == "np-penalized":
        return penalized_np_estimate(h, g, p, s)
    if method in ("np-peak", "np-peak-refit"):
        return peak_refit(np_ml_estimate(h, g, s), h, s)
    if method == "pareto":
        return pareto_ml_estimate(h, s)
    if method == "zipf":
        if dc is None:
            raise ValueError("the zipf fit needs per-document counts")
        return zipf_loglog_fit(dc, top_n, h)
    raise ValueError(f"unknown method {method!r}")

