"""Log-space series used by the CIR density and the Bessel functions.

The workhorse is

    F(u, c) = sum_{j>=0} u**j / (j! * Gamma(j + c)),     u >= 0, c > 0,

which equals ``u**((1-c)/2) * I_{c-1}(2 sqrt(u))``.  Terms are summed in
log space starting near the largest term and expanding outwards until
the next term falls below a relative tolerance of the running sum.
"""
from __future__ import annotations

import math

import numpy as np
from scipy.special import gammaln

REL_TOL = 1e-15
_LOG_TOL = math.log(REL_TOL)


def _log_terms(j: np.ndarray, lu: float, c: float) -> np.ndarray:
    return j * lu - gammaln(j + 1.0) - gammaln(j + c)


def log_series_scalar(u: float, c: float) -> float:
    """``log F(u, c)`` for a single argument."""
    if c <= 0:
        raise ValueError("series parameter c must be positive")
    if u < 0 or not math.isfinite(u):
        raise ValueError("series argument must be finite and non-negative")
    if u == 0.0:
        return -math.lgamma(c)
    lu = math.log(u)
    # terms ratio u / ((j+1)(j+c)) crosses 1 near the positive root below
    mode = max(0, int(0.5 * (-(c + 1.0) + math.sqrt((c - 1.0) ** 2 + 4.0 * u))))
    width = 20 + int(8.0 * u ** 0.25)
    lo, hi = max(0, mode - width), mode + width
    j = np.arange(lo, hi + 1, dtype=float)
    lt = _log_terms(j, lu, c)
    while True:
        top = lt.max()
        total = top + math.log(np.exp(lt - top).sum())
        grow_lo = lo > 0 and lt[0] - total > _LOG_TOL
        grow_hi = lt[-1] - total > _LOG_TOL
        if not (grow_lo or grow_hi):
            return float(total)
        if grow_lo:
            new_lo = max(0, lo - width)
            jj = np.arange(new_lo, lo, dtype=float)
            lt = np.concatenate([_log_terms(jj, lu, c), lt])
            lo = new_lo
        if grow_hi:
            jj = np.arange(hi + 1, hi + width + 1, dtype=float)
            lt = np.concatenate([lt, _log_terms(jj, lu, c)])
            hi += width
        width *= 2


def log_series(u, c: float) -> np.ndarray | float:
    """Vectorised ``log F(u, c)``; ``c`` is a scalar.

    Arrays whose largest argument is moderate are summed on one shared
    index window, otherwise element by element.
    """
    arr = np.asarray(u, dtype=float)
    if arr.ndim == 0:
        return log_series_scalar(float(arr), c)
    if c <= 0:
        raise ValueError("series parameter c must be positive")
    if np.any(arr < 0) or not np.all(np.isfinite(arr)):
        raise ValueError("series argument must be finite and non-negative")
    flat = arr.ravel()
    out = np.empty_like(flat)
    umax = float(flat.max()) if flat.size else 0.0
    if umax <= 400.0:
        # shared window 0..J covers every element to full precision
        J = 20
        while True:
            jj = np.arange(J + 1, dtype=float)
            with np.errstate(divide="ignore"):
                lu = np.log(flat)[:, None]
            lt = np.where(jj[None, :] == 0, 0.0, jj[None, :] * lu) - gammaln(jj + 1.0) - gammaln(jj + c)
            top = lt.max(axis=1, keepdims=True)
            total = top[:, 0] + np.log(np.exp(lt - top).sum(axis=1))
            if np.all(lt[:, -1] - total <= _LOG_TOL) or J > 4000:
                out[:] = total
                break
            J *= 2
    else:
        for k, v in enumerate(flat):
            out[k] = log_series_scalar(float(v), c)
    return out.reshape(arr.shape)


def log_bessel_i(nu: float, z) -> np.ndarray | float:
    """``log I_nu(z)`` for ``nu > -1`` and ``z > 0`` via the same series."""
    if nu <= -1:
        raise ValueError("order must exceed -1")
    z = np.asarray(z, dtype=float)
    if np.any(z <= 0):
        raise ValueError("argument must be positive")
    res = nu * np.log(0.5 * z) + log_series(0.25 * z * z, nu + 1.0)
    return float(res) if np.ndim(res) == 0 else res
