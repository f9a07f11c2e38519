"""Upper incomplete gamma function for real (possibly negative) order.

``scipy.special.gammaincc`` only covers ``s > 0``; the Pareto mixed-Poisson
likelihood needs ``Gamma(j - alpha, x)`` with ``j - alpha`` negative, so the
function is evaluated here directly:

* ``s > 0.5`` and ``x < max(s + 1, 1)``: power series of the lower function,
  ``Gamma(s, x) = Gamma(s) - gamma(s, x)``;
* ``s > 0.5, x >= s + 1`` or ``s <= 0.5, x >= 1``: Lentz continued fraction;
* ``s <= 0.5`` and ``x < 1``: a base order ``s0 = s - round(s)`` in
  ``[-1/2, 1/2]`` from a series that stays regular through ``s0 = 0``, then
  the downward recurrence ``Gamma(s, x) = (Gamma(s + 1, x) - x**s e**-x) / s``.

Values are returned as natural logs; ``Gamma(s, x) > 0`` for every real
``s`` when ``x > 0`` so no sign needs carrying.
"""

import math

import numpy as np
from scipy.special import gammaln, zeta

__all__ = ["log_upper_gamma", "upper_incomplete_gamma"]

_EPS = 1e-16
_TINY = 1e-300
_MAX_ITER = 5000
_EULER = 0.57721566490153286061
# log Gamma(1 + s) = -euler s + sum_k (-1)**k zeta(k) s**k / k, |s| < 1
_K = np.arange(2, 64)
_LGAM1P_COEF = (-1.0) ** _K * zeta(_K.astype(float)) / _K


def _lgam1p(s):
    """log Gamma(1 + s) for |s| <= 1/2, accurate relative to s."""
    powers = s[:, None] ** _K[None, :]
    return -_EULER * s + powers @ _LGAM1P_COEF


def _log_series(s, x):
    """log Gamma(s, x) for s > 0.5 and moderate x (arrays of equal shape)."""
    term = 1.0 / s
    total = term.copy()
    active = np.ones(s.shape, dtype=bool)
    n = 0
    while active.any() and n < _MAX_ITER:
        n += 1
        term = np.where(active, term * x / (s + n), term)
        total = np.where(active, total + term, total)
        active &= np.abs(term) > np.abs(total) * _EPS
    log_lower = s * np.log(x) - x + np.log(total)
    lg = gammaln(s)
    return lg + np.log1p(-np.exp(log_lower - lg))


def _log_cfrac(s, x):
    """log Gamma(s, x) by the modified Lentz continued fraction."""
    b = x + 1.0 - s
    c = np.full(s.shape, 1.0 / _TINY)
    d = 1.0 / b
    h = d.copy()
    active = np.ones(s.shape, dtype=bool)
    i = 0
    while active.any() and i < _MAX_ITER:
        i += 1
        an = -i * (i - s)
        b = b + 2.0
        d_new = an * d + b
        d_new = np.where(np.abs(d_new) < _TINY, _TINY, d_new)
        c_new = b + an / c
        c_new = np.where(np.abs(c_new) < _TINY, _TINY, c_new)
        d_new = 1.0 / d_new
        delta = d_new * c_new
        d = np.where(active, d_new, d)
        c = np.where(active, c_new, c)
        h = np.where(active, h * delta, h)
        active &= np.abs(delta - 1.0) > _EPS
    return -x + s * np.log(x) + np.log(h)


def _log_small_order(s, x):
    """log Gamma(s, x) for |s| <= 1/2 and 0 < x < 1.

    Gamma(s, x) = (Gamma(1+s) - 1)/s - (x**s - 1)/s
                  - x**s sum_{k>=1} (-x)**k / (k! (s + k)),
    whose first two terms tend to -euler and log(x) as s -> 0.
    """
    logx = np.log(x)
    small = np.abs(s) < 1e-300
    s_safe = np.where(small, 1.0, s)
    g1 = np.where(small, -_EULER, np.expm1(_lgam1p(s)) / s_safe)
    e1 = np.where(small, logx, np.expm1(s * logx) / s_safe)
    term = np.ones_like(x)
    total = np.zeros_like(x)
    active = np.ones(x.shape, dtype=bool)
    k = 0
    while active.any() and k < _MAX_ITER:
        k += 1
        term = np.where(active, term * (-x) / k, term)
        contrib = term / (s + k)
        total = np.where(active, total + contrib, total)
        active &= np.abs(contrib) > _EPS * 1e-2
    return np.log(g1 - e1 - np.exp(s * logx) * total)


def _log_downward(s, x):
    """log Gamma(s, x) for s <= 1/2, x < 1, recurring down from [-1/2, 1/2]."""
    s0 = s - np.round(s)
    depth = np.rint(s0 - s).astype(int)
    logg = _log_small_order(s0, x)
    cur = s0.copy()
    logx = np.log(x)
    for _ in range(int(depth.max()) if depth.size else 0):
        step = depth > 0
        a = cur - 1.0  # order being produced, a <= -1/2
        # Gamma(a, x) = (x**a e**-x - Gamma(a + 1, x)) / (-a)
        log_pow = a * logx - x
        diff = -np.expm1(logg - log_pow)
        with np.errstate(invalid="ignore", divide="ignore"):
            new = log_pow + np.log(diff) - np.log(-a)
        logg = np.where(step, new, logg)
        cur = np.where(step, a, cur)
        depth = depth - step
    return logg


def log_upper_gamma(s, x):
    """Natural log of the upper incomplete gamma function ``Gamma(s, x)``.

    Parameters
    ----------
    s : float or array_like
        Order; any real value. Broadcast against `x`.
    x : float or array_like
        Lower integration limit, strictly positive.

    Returns
    -------
    float or ndarray
        ``log(integral_x^inf t**(s-1) exp(-t) dt)``.

    Raises
    ------
    ValueError
        If any ``x <= 0``.
    """
    shape = np.broadcast(np.asarray(s), np.asarray(x)).shape
    s_arr, x_arr = (np.array(a, dtype=float).ravel()
                    for a in np.broadcast_arrays(np.asarray(s, dtype=float),
                                                 np.asarray(x, dtype=float)))
    if np.any(~(x_arr > 0)):
        raise ValueError("upper incomplete gamma requires x > 0")

    out = np.empty_like(s_arr)
    big = s_arr > 0.5
    use_cf = np.where(big, x_arr >= s_arr + 1.0, x_arr >= 1.0)
    use_series = ~use_cf & big
    use_rec = ~use_cf & ~big
    if use_cf.any():
        out[use_cf] = _log_cfrac(s_arr[use_cf], x_arr[use_cf])
    if use_series.any():
        out[use_series] = _log_series(s_arr[use_series], x_arr[use_series])
    if use_rec.any():
        out[use_rec] = _log_downward(s_arr[use_rec], x_arr[use_rec])
    if shape == ():
        return float(out[0])
    return out.reshape(shape)


def upper_incomplete_gamma(s, x):
    """``Gamma(s, x)`` for real `s` and ``x > 0`` (see :func:`log_upper_gamma`)."""
    val = log_upper_gamma(s, x)
    if np.ndim(val) == 0:
        return math.exp(val)
    return np.exp(val)
