"""Excursion facts and the conditional law of the time integral ``I_t``.

Covers the excursion-entrance law of the CIR process started from zero,
the conditional mean of an excursion given its endpoint, the Bessel
ratio ``kappa_nu``, the conditional mean and Laplace transform of
``I_t = int_0^t X_s ds`` given both endpoints, a Gaver-Stehfest inversion
of that transform, and two path samplers that carry ``I_t`` along.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from .cir import CirParams, _check_state, _check_time, closed_moments
from .special import log_bessel_i, log_series

# ---------------------------------------------------------------- excursions


def excursion_tail(gamma: float, t: float, x: float) -> float:
    """``P*(nu_t > x) = exp(-x / (gamma t))`` for the normalised entrance law."""
    t = _check_time(t)
    return math.exp(-_check_state("x", x) / (gamma * t))


def excursion_intensity(gamma: float, t: float) -> float:
    """Total mass ``1 / (gamma t)`` of excursions still alive at time ``t``."""
    return 1.0 / (gamma * _check_time(t))


def excursion_first_moment(gamma: float, t: float) -> float:
    """``int nu_t dN_0``: intensity times exponential mean, identically 1."""
    return excursion_intensity(gamma, t) * gamma * _check_time(t)


def conditional_excursion_mean(gamma: float, s: float, t: float, e_t: float) -> float:
    """``E*(e(s) | e(t)) = (s/t)((s/t) e_t + 2 gamma (t - s))`` for ``0 < s <= t``."""
    t = _check_time(t)
    if not 0 < s <= t:
        raise ValueError("need 0 < s <= t")
    r = s / t
    return r * (r * _check_state("e_t", e_t) + 2.0 * gamma * (t - s))


# ---------------------------------------------------------------- kappa


_KAPPA_SERIES_MAX = 30.0


def kappa_nu(nu: float, z: float) -> float:
    """``kappa_nu(z) = z I_nu'(z) / I_nu(z) + 1 = z I_{nu+1}(z)/I_nu(z) + nu + 1``.

    Power series for ``z <= 30``, Gauss continued fraction for the ratio
    ``I_{nu+1}/I_nu`` beyond; ``kappa_nu(0) = nu + 1``.
    """
    if nu <= -1:
        raise ValueError("kappa requires nu > -1")
    z = _check_state("z", z)
    if z == 0.0:
        return nu + 1.0
    alpha = nu + 1.0
    if z <= _KAPPA_SERIES_MAX:
        w = 0.25 * z * z
        if w == 0.0:
            return alpha
        n = np.arange(0, 200, dtype=float)
        lw = math.log(w)
        la = n * lw - gammaln(n + 1.0) - gammaln(n + alpha)
        nb = n[1:]
        lb = nb * lw - gammaln(nb) - gammaln(nb + alpha)
        top = max(la.max(), lb.max())
        A = np.exp(la - top).sum()
        B = np.exp(lb - top).sum()
        return 2.0 * B / A + alpha
    return z * _bessel_ratio_cf(nu, z) + alpha


def _bessel_ratio_cf(nu: float, z: float, tol: float = 1e-16, max_iter: int = 10000) -> float:
    """``I_{nu+1}(z) / I_nu(z)`` by modified Lentz on the Gauss continued fraction."""
    tiny = 1e-300
    # ratio = 1 / (2(nu+1)/z + 1 / (2(nu+2)/z + ...))
    f = tiny
    C, D = f, 0.0
    for k in range(1, max_iter):
        b = 2.0 * (nu + k) / z
        a = 1.0
        D = b + a * D
        D = tiny if D == 0 else D
        C = b + a / C
        C = tiny if C == 0 else C
        D = 1.0 / D
        delta = C * D
        f *= delta
        if abs(delta - 1.0) < tol:
            break
    return f


# ---------------------------------------------------------------- conditional integral


@dataclass(frozen=True)
class ConditionedIntegralSpec:
    """Integral ``I_t`` of a CIR path conditioned on ``X_0 = x`` and ``X_t = y``."""

    params: CirParams
    t: float
    x: float
    y: float

    def __post_init__(self):
        _check_time(self.t)
        _check_state("x", self.x)
        _check_state("y", self.y)


def conditional_integral_mean(spec: ConditionedIntegralSpec) -> float:
    """``E(I_t | X_0=x, X_t=y) = kappa_nu(2 sqrt(xy)/(t gamma)) t^2 gamma/6 + (x+y) t/3``."""
    p, t, x, y = spec.params, spec.t, spec.x, spec.y
    z = 2.0 * math.sqrt(x * y) / (t * p.gamma)
    return kappa_nu(p.nu, z) * t * t * p.gamma / 6.0 + (x + y) * t / 3.0


def _log_lam_over_sinh(lam: np.ndarray) -> np.ndarray:
    lam = np.asarray(lam, dtype=float)
    small = lam < 1e-4
    big = lam > 20.0
    safe = np.where(small | big, 1.0, lam)
    mid = np.log(safe / np.sinh(safe))
    series = -lam * lam / 6.0
    with np.errstate(over="ignore"):
        tail = np.log(2.0 * np.where(big, lam, 1.0)) - lam - np.log1p(-np.exp(-2.0 * np.where(big, lam, 1.0)))
    return np.where(small, series, np.where(big, tail, mid))


def _one_minus_lam_coth(lam: np.ndarray) -> np.ndarray:
    lam = np.asarray(lam, dtype=float)
    small = lam < 1e-4
    safe = np.where(small, 1.0, lam)
    return np.where(small, -lam * lam / 3.0, 1.0 - safe / np.tanh(safe))


def log_integral_laplace(spec: ConditionedIntegralSpec, lam) -> np.ndarray | float:
    """``log E[exp(-lam**2 I_t / 2) | X_0=x, X_t=y]`` (vectorised in ``lam``).

    The process is rescaled to unit time and ``gamma = 2``; the transform
    is then the classical squared-Bessel bridge formula.
    """
    p, t = spec.params, spec.t
    lam_arr = np.abs(np.asarray(lam, dtype=float))
    lh = lam_arr * t * math.sqrt(p.gamma / 2.0)
    xh = 2.0 * spec.x / (t * p.gamma)
    yh = 2.0 * spec.y / (t * p.gamma)
    nu = p.nu
    lls = _log_lam_over_sinh(lh)
    expo = 0.5 * (xh + yh) * _one_minus_lam_coth(lh)
    if xh * yh > 0:
        r = math.sqrt(xh * yh)
        # I_nu(r lam/sinh lam) / I_nu(r): write both through the same series
        ratio_arg = r * np.exp(lls)
        num = nu * np.log(0.5 * ratio_arg) + log_series(0.25 * ratio_arg * ratio_arg, nu + 1.0)
        den = log_bessel_i(nu, r)
        out = lls + expo + num - den
    else:
        out = (p.b / p.gamma) * lls + expo
    return float(out) if np.ndim(out) == 0 else out


def integral_laplace(spec: ConditionedIntegralSpec, lam) -> np.ndarray | float:
    """``E[exp(-lam**2 I_t / 2) | X_0=x, X_t=y]``."""
    out = np.exp(log_integral_laplace(spec, lam))
    return float(out) if np.ndim(out) == 0 else out


# ---------------------------------------------------------------- inversion


def stehfest_weights(order: int) -> np.ndarray:
    """Gaver-Stehfest weights ``V_1..V_N`` for even ``N``."""
    if order < 2 or order % 2:
        raise ValueError("Stehfest order must be a positive even integer")
    half = order // 2
    V = np.zeros(order)
    for k in range(1, order + 1):
        acc = 0.0
        for j in range((k + 1) // 2, min(k, half) + 1):
            acc += (j ** half * math.factorial(2 * j)
                    / (math.factorial(half - j) * math.factorial(j) * math.factorial(j - 1)
                       * math.factorial(k - j) * math.factorial(2 * j - k)))
        V[k - 1] = (-1) ** (k + half) * acc
    return V


@dataclass
class InversionResult:
    """Numerical density of ``I_t`` on a grid.

    ``max_rel_change`` is the L1 distance between the order-``N`` and
    order-``N-2`` inversions relative to the L1 mass of the order-``N``
    one; ``flagged`` is set when it exceeds the flag tolerance.
    """

    w: np.ndarray
    density: np.ndarray
    order: int
    flagged: bool
    max_rel_change: float


def _stehfest(spec: ConditionedIntegralSpec, w: np.ndarray, order: int) -> np.ndarray:
    V = stehfest_weights(order)
    ln2 = math.log(2.0)
    k = np.arange(1, order + 1, dtype=float)
    s = k[None, :] * ln2 / w[:, None]  # transform variable, E exp(-s I)
    F = np.exp(log_integral_laplace(spec, np.sqrt(2.0 * s)))
    return (ln2 / w) * (F @ V)


def _mp_transform(spec: ConditionedIntegralSpec):
    """``s -> E exp(-s I_t)`` in multiprecision arithmetic."""
    import mpmath as mp

    p, t = spec.params, spec.t
    scale = mp.mpf(t) * mp.sqrt(mp.mpf(p.gamma) / 2)
    xh = 2 * mp.mpf(spec.x) / (t * p.gamma)
    yh = 2 * mp.mpf(spec.y) / (t * p.gamma)
    nu = mp.mpf(p.b) / p.gamma - 1
    power = mp.mpf(p.b) / p.gamma
    root = mp.sqrt(xh * yh)
    den = mp.besseli(nu, root) if root > 0 else None

    def F(s):
        lh = mp.sqrt(2 * s) * scale
        r = lh / mp.sinh(lh)
        e = mp.exp((xh + yh) / 2 * (1 - lh * mp.coth(lh)))
        if den is not None:
            return r * e * mp.besseli(nu, root * r) / den
        return r ** power * e

    return F


def _stehfest_mp(spec: ConditionedIntegralSpec, w: np.ndarray, order: int) -> np.ndarray:
    import mpmath as mp

    with mp.workdps(max(30, int(1.2 * order) + 10)):
        half = order // 2
        V = []
        for k in range(1, order + 1):
            acc = mp.mpf(0)
            for j in range((k + 1) // 2, min(k, half) + 1):
                acc += (mp.mpf(j) ** half * mp.factorial(2 * j)
                        / (mp.factorial(half - j) * mp.factorial(j) * mp.factorial(j - 1)
                           * mp.factorial(k - j) * mp.factorial(2 * j - k)))
            V.append((-1) ** (k + half) * acc)
        F = _mp_transform(spec)
        out = np.empty(w.size)
        for i, wi in enumerate(w):
            c = mp.log(2) / mp.mpf(float(wi))
            out[i] = float(c * mp.fsum(V[k - 1] * F(k * c) for k in range(1, order + 1)))
    return out


def invert_integral_density(spec: ConditionedIntegralSpec, w_grid, order: int = 14,
                            precision: str = "double", flag_tol: float = 1e-3,
                            check_order: bool = True) -> InversionResult:
    """Density ``f(w)`` of ``I_t`` given both endpoints by Gaver-Stehfest.

    ``precision='double'`` evaluates the transform in floating point,
    which limits useful orders to about 14-18; ``precision='mp'`` uses
    multiprecision arithmetic (about ``1.2 * order`` digits) and supports
    much higher orders.  Negative values from cancellation are clipped.
    """
    w = np.asarray(w_grid, dtype=float)
    if w.ndim != 1 or w.size == 0:
        raise ValueError("w_grid must be a non-empty 1-d array")
    if np.any(w < 0):
        raise ValueError("w_grid must be non-negative")
    if precision not in ("double", "mp"):
        raise ValueError("precision must be 'double' or 'mp'")
    if order < 2 or order % 2:
        raise ValueError("Gaver-Stehfest order must be an even integer >= 2")
    run = _stehfest if precision == "double" else _stehfest_mp
    pos = w > 0
    dens = np.zeros_like(w)
    dens[pos] = run(spec, w[pos], order)
    out = np.clip(dens, 0.0, None)
    rel = 0.0
    if check_order and order > 2 and np.any(pos):
        prev = np.zeros_like(w)
        prev[pos] = run(spec, w[pos], order - 2)
        prev = np.clip(prev, 0.0, None)
        mass = np.abs(out).sum()
        rel = float(np.abs(out - prev).sum() / mass) if mass > 0 else 0.0
    return InversionResult(w=w, density=out, order=order, flagged=rel > flag_tol, max_rel_change=rel)


def integral_support_grid(spec: ConditionedIntegralSpec, n: int = 400, span: float = 12.0) -> np.ndarray:
    """Uniform grid on ``[0, w_max]`` covering the bulk of ``I_t``.

    ``w_max`` is ``span`` times the conditional mean plus a multiple of
    the natural scale ``t**2 gamma``.
    """
    mean = conditional_integral_mean(spec)
    w_max = span * mean + 2.0 * spec.t ** 2 * spec.params.gamma
    return np.linspace(0.0, w_max, n + 1)


# ---------------------------------------------------------------- path samplers


@dataclass
class PathWithIntegral:
    """CIR paths on a uniform grid with their trapezoid integrals.

    ``n0`` is the cluster count of the final exact step.
    """

    times: np.ndarray
    values: np.ndarray
    integral: np.ndarray
    n0: np.ndarray

    @property
    def x_t(self) -> np.ndarray:
        return self.values[:, -1]


def _trapezoid(values: np.ndarray, h: float) -> np.ndarray:
    return h * (values[:, 1:-1].sum(axis=1) + 0.5 * (values[:, 0] + values[:, -1]))


def sample_path_with_integral(p: CirParams, t: float, x: float, K: int,
                              rng: np.random.Generator, size: int) -> PathWithIntegral:
    """Chain ``K`` exact steps of length ``t/K`` and integrate by the trapezoid rule."""
    t = _check_time(t)
    x = _check_state("x", x)
    if K < 1:
        raise ValueError("K must be at least 1")
    h = t / K
    s = p.gamma * h
    vals = np.empty((size, K + 1))
    vals[:, 0] = x
    n0 = np.zeros(size, dtype=np.int64)
    for k in range(K):
        n0 = rng.poisson(vals[:, k] / s)
        vals[:, k + 1] = rng.gamma(n0 + p.ratio, s)
    return PathWithIntegral(times=np.linspace(0.0, t, K + 1), values=vals,
                            integral=_trapezoid(vals, h), n0=n0)


def sample_clustered_path(p: CirParams, t: float, x: float, K: int,
                          rng: np.random.Generator, size: int) -> PathWithIntegral:
    """Paths that also carry the exact number ``N0`` of initial-mass clusters alive at ``t``.

    The path is the sum of an immigration part started at 0 and the
    families generated by the initial mass.  Families alive after the
    first step number ``Poisson(x/(gamma h))`` with exponential masses of
    mean ``gamma h``; each then evolves as an independent CIR chain
    without immigration.  ``n0`` counts families still alive at ``t``,
    which has exactly the law of the cluster count paired with ``X_t``.
    """
    t = _check_time(t)
    x = _check_state("x", x)
    if K < 1:
        raise ValueError("K must be at least 1")
    h = t / K
    s = p.gamma * h
    vals = np.empty((size, K + 1))
    vals[:, 0] = x
    imm = np.zeros(size)
    n_fam = rng.poisson(x / s, size=size)
    owner = np.repeat(np.arange(size), n_fam)
    mass = rng.exponential(s, size=owner.size)
    imm = rng.gamma(rng.poisson(imm / s) + p.ratio, s)
    vals[:, 1] = imm + np.bincount(owner, weights=mass, minlength=size)
    for k in range(1, K):
        imm = rng.gamma(rng.poisson(imm / s) + p.ratio, s)
        kids = rng.poisson(mass / s)
        alive = kids > 0
        owner, kids = owner[alive], kids[alive]
        mass = rng.gamma(kids, s)
        vals[:, k + 1] = imm + np.bincount(owner, weights=mass, minlength=size)
    n0 = np.bincount(owner, minlength=size)
    return PathWithIntegral(times=np.linspace(0.0, t, K + 1), values=vals,
                            integral=_trapezoid(vals, h), n0=n0)


def unconditional_integral_mean(p: CirParams, t: float, x: float) -> float:
    """``E_x I_t = x t + b t**2 / 2``."""
    t = _check_time(t)
    return _check_state("x", x) * t + 0.5 * p.b * t * t


__all__ = [
    "excursion_tail", "excursion_intensity", "excursion_first_moment",
    "conditional_excursion_mean", "kappa_nu", "ConditionedIntegralSpec",
    "conditional_integral_mean", "integral_laplace", "log_integral_laplace",
    "stehfest_weights", "InversionResult", "invert_integral_density",
    "integral_support_grid", "PathWithIntegral", "sample_path_with_integral",
    "sample_clustered_path", "unconditional_integral_mean", "closed_moments",
]
