"""Semigroup of the mixed catalytic model and Monte Carlo estimators built on it.

The mixed model has ``m`` Gaussian coordinates driven by one CIR
catalyst ``X = x_{m+1}``::

    A f = sum_{j<=m} (gamma_j x_{m+1} f_jj + b_j f_j)
          + gamma_{m+1} x_{m+1} f_{m+1,m+1} + b_{m+1} f_{m+1}.

Given the catalyst path, coordinate ``j`` is Gaussian with mean
``x_j + b_j t`` and variance ``2 gamma_j I_t``, so ``P_t f`` reduces to an
expectation over ``(I_t, X_t)`` of the Gaussian kernel ``G f``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate

from .cir import CirParams, _check_time, joint_laplace, q_density
from .excursion import (
    ConditionedIntegralSpec,
    integral_laplace,
    integral_support_grid,
    invert_integral_density,
    sample_clustered_path,
    sample_path_with_integral,
)

# ---------------------------------------------------------------- test functions


@dataclass(frozen=True)
class Factor:
    """One-coordinate factor ``(c0 + c1 z + c2 z**2) exp(-a (z - c)**2 - e z)``."""

    poly: tuple = (1.0,)
    a: float = 0.0
    c: float = 0.0
    e: float = 0.0

    def __post_init__(self):
        if len(self.poly) > 3:
            raise ValueError("polynomial part has degree at most 2")
        if self.a < 0:
            raise ValueError("Gaussian weight a must be non-negative")

    @property
    def _p(self):
        p = list(self.poly) + [0.0] * (3 - len(self.poly))
        return p[0], p[1], p[2]

    @property
    def is_constant(self) -> bool:
        p0, p1, p2 = self._p
        return p1 == 0 and p2 == 0 and self.a == 0 and self.e == 0

    def _r(self, z):
        return -self.a * (z - self.c) ** 2 - self.e * z

    def __call__(self, z):
        z = np.asarray(z, dtype=float)
        p0, p1, p2 = self._p
        return (p0 + p1 * z + p2 * z * z) * np.exp(self._r(z))

    def d1(self, z):
        z = np.asarray(z, dtype=float)
        p0, p1, p2 = self._p
        P, dP = p0 + p1 * z + p2 * z * z, p1 + 2 * p2 * z
        r1 = -2 * self.a * (z - self.c) - self.e
        return (dP + P * r1) * np.exp(self._r(z))

    def d2(self, z):
        z = np.asarray(z, dtype=float)
        p0, p1, p2 = self._p
        P, dP, ddP = p0 + p1 * z + p2 * z * z, p1 + 2 * p2 * z, 2 * p2
        r1, r2 = -2 * self.a * (z - self.c) - self.e, -2 * self.a
        return (ddP + 2 * dP * r1 + P * (r1 * r1 + r2)) * np.exp(self._r(z))

    def gaussian_mean(self, mu, var):
        """``E[factor(Z)]`` for ``Z ~ N(mu, var)`` (elementwise, ``var >= 0``)."""
        mu = np.asarray(mu, dtype=float)
        var = np.asarray(var, dtype=float)
        if self.is_constant:
            return np.broadcast_to(self._p[0], np.broadcast(mu, var).shape).astype(float)
        p0, p1, p2 = self._p
        k = 2.0 * self.a * (mu - self.c) + self.e
        den = 1.0 + 2.0 * self.a * var
        scale = den ** -0.5 * np.exp(var * k * k / (2.0 * den) - self.a * (mu - self.c) ** 2 - self.e * mu)
        m = mu - var * k / den
        v = var / den
        return scale * (p0 + p1 * m + p2 * (m * m + v))


@dataclass(frozen=True)
class TestFunction:
    """Product of per-coordinate factors; the last coordinate is the catalyst.

    ``sup`` is the sup-norm on the state space when the function is
    bounded there, else ``None``.
    """

    factors: tuple
    name: str = ""
    sup: float | None = None

    @property
    def dim(self) -> int:
        return len(self.factors)

    @property
    def gaussian_free(self) -> bool:
        """True when no Gaussian coordinate enters (only the catalyst factor varies)."""
        return all(f.is_constant for f in self.factors[:-1])

    def __call__(self, y):
        y = np.asarray(y, dtype=float)
        out = np.ones(y.shape[:-1])
        for k, f in enumerate(self.factors):
            out = out * f(y[..., k])
        return out

    def _vals(self, y):
        return [f(y[..., k]) for k, f in enumerate(self.factors)]

    def grad(self, y):
        y = np.asarray(y, dtype=float)
        vals = self._vals(y)
        out = []
        for k, f in enumerate(self.factors):
            prod = f.d1(y[..., k])
            for j, v in enumerate(vals):
                if j != k:
                    prod = prod * v
            out.append(prod)
        return np.stack(out, axis=-1)

    def hess_diag(self, y):
        y = np.asarray(y, dtype=float)
        vals = self._vals(y)
        out = []
        for k, f in enumerate(self.factors):
            prod = f.d2(y[..., k])
            for j, v in enumerate(vals):
                if j != k:
                    prod = prod * v
            out.append(prod)
        return np.stack(out, axis=-1)


def registered_functions(m: int) -> dict:
    """Named test functions on ``R^m x R_+`` used by the checks and the CLI."""
    one = Factor()
    cat_lin = Factor(poly=(0.0, 1.0))
    cat_exp = Factor(e=1.0)
    g_sq = Factor(a=1.0)

    def build(first, cat, sup, name):
        facs = [one] * m + [cat]
        if m and first is not None:
            facs[0] = first
        return TestFunction(tuple(facs), name=name, sup=sup)

    out = {
        "one": build(None, one, 1.0, "one"),
        "cat": build(None, cat_lin, None, "cat"),
        "exp_cat": build(None, cat_exp, 1.0, "exp_cat"),
    }
    if m:
        out["gauss_exp"] = build(g_sq, cat_exp, 1.0, "gauss_exp")
        out["gauss"] = build(g_sq, one, 1.0, "gauss")
        out["lin"] = build(Factor(poly=(0.0, 1.0)), one, None, "lin")
        out["quad"] = build(Factor(poly=(0.0, 0.0, 1.0)), one, None, "quad")
        out["cat_sq"] = TestFunction(tuple([one] * m + [Factor(poly=(0.0, 0.0, 1.0))]), name="cat_sq")
    return out


# ---------------------------------------------------------------- model


@dataclass(frozen=True)
class MixedModel:
    """``m`` Gaussian coordinates catalysed by one CIR coordinate."""

    b0: tuple
    gamma0: tuple
    cat: CirParams

    def __post_init__(self):
        if len(self.b0) != len(self.gamma0):
            raise ValueError("b0 and gamma0 must have the same length")
        if any(not (g > 0 and math.isfinite(g)) for g in self.gamma0):
            raise ValueError("gamma0 must be positive")
        if any(not math.isfinite(v) for v in self.b0):
            raise ValueError("b0 must be finite")

    @property
    def m(self) -> int:
        return len(self.b0)

    @property
    def dim(self) -> int:
        return self.m + 1

    def dual(self) -> "MixedModel":
        """Model with the Gaussian drifts reversed."""
        return MixedModel(tuple(-v for v in self.b0), self.gamma0, self.cat)

    def apply_generator(self, f, x) -> float:
        from .network import derivatives_of

        x = np.asarray(x, dtype=float)
        grad, hess = derivatives_of(f, x)
        diff = np.empty(self.dim)
        diff[: self.m] = np.asarray(self.gamma0) * x[-1]
        diff[-1] = self.cat.gamma * x[-1]
        drift = np.append(np.asarray(self.b0, dtype=float), self.cat.b)
        return float(np.dot(diff, hess) + np.dot(drift, grad))

    def _check_point(self, x, name="x"):
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dim,):
            raise ValueError(f"{name} must have {self.dim} coordinates")
        if x[-1] < 0:
            raise ValueError(f"catalyst coordinate of {name} must be non-negative")
        return x


@dataclass
class McEstimate:
    """Monte Carlo value with its standard error and provenance."""

    value: float
    std_error: float
    n: int
    seed: int | None = None
    extra: dict = field(default_factory=dict)

    @classmethod
    def from_samples(cls, samples, seed=None, **extra) -> "McEstimate":
        s = np.asarray(samples, dtype=float)
        se = float(s.std(ddof=1) / math.sqrt(s.size)) if s.size > 1 else math.inf
        return cls(float(s.mean()), se, int(s.size), seed, dict(extra))

    def to_dict(self) -> dict:
        return {"value": self.value, "std_error": self.std_error, "n": self.n,
                "seed": self.seed, **self.extra}


def gaussian_kernel_G(model: MixedModel, t: float, x_gauss, f, I, X,
                      rng: np.random.Generator | None = None, n_quad: int = 24):
    """``E f(Z, X)`` with ``Z_j ~ N(x_j + b_j t, 2 gamma_j I)`` independent.

    Registered :class:`TestFunction` objects are integrated in closed
    form.  Other callables are integrated by Gauss-Hermite quadrature
    (``rng=None``) or by one Gaussian draw per sample (``rng`` given).
    """
    I = np.asarray(I, dtype=float)
    X = np.asarray(X, dtype=float)
    xg = np.asarray(x_gauss, dtype=float)
    mu = xg + np.asarray(model.b0, dtype=float) * t
    var = 2.0 * np.asarray(model.gamma0, dtype=float)[:, None] * np.atleast_1d(I)[None, :]
    if isinstance(f, TestFunction):
        if f.dim != model.dim:
            raise ValueError("test function dimension does not match the model")
        out = f.factors[-1](X) * np.ones_like(I)
        for j in range(model.m):
            out = out * f.factors[j].gaussian_mean(mu[j], var[j].reshape(I.shape))
        return out
    if not callable(f):
        raise ValueError("f must be a TestFunction or a callable")
    if rng is not None:
        Z = mu[:, None] + np.sqrt(var) * rng.standard_normal(var.shape)
        Y = np.concatenate([Z, np.atleast_1d(X)[None, :] * np.ones((1, Z.shape[1]))]).T
        return np.asarray(f(Y), dtype=float).reshape(I.shape)
    if model.m > 3:
        raise ValueError("quadrature limited to m <= 3; pass rng for a sampled kernel")
    nodes, weights = np.polynomial.hermite_e.hermegauss(n_quad)
    weights = weights / weights.sum()
    grids = np.meshgrid(*([nodes] * model.m), indexing="ij")
    wgrid = np.ones_like(grids[0]) if model.m else np.ones(1)
    for g in np.meshgrid(*([weights] * model.m), indexing="ij"):
        wgrid = wgrid * g
    flat_nodes = np.stack([g.ravel() for g in grids], axis=1) if model.m else np.zeros((1, 0))
    flat_w = wgrid.ravel()
    Ivec, Xvec = np.atleast_1d(I).ravel(), np.broadcast_to(X, I.shape).ravel()
    out = np.empty(Ivec.size)
    for k in range(Ivec.size):
        Z = mu[None, :] + flat_nodes * np.sqrt(var[:, k])[None, :]
        Y = np.hstack([Z, np.full((Z.shape[0], 1), Xvec[k])])
        out[k] = np.dot(flat_w, np.asarray(f(Y), dtype=float))
    return out.reshape(I.shape)


def evaluate_Pt(model: MixedModel, t: float, x, f, n_draws: int, rng: np.random.Generator,
                K: int = 16, seed: int | None = None) -> McEstimate:
    """Monte Carlo ``P_t f(x)`` from exact catalyst paths and the Gaussian kernel.

    ``extra['integral_bias_proxy']`` is the change of the estimate when the
    trapezoid integral is computed on every second grid point, a proxy
    for the ``O(t**2/K)`` discretisation bias.
    """
    t = _check_time(t)
    x = model._check_point(x)
    path = sample_path_with_integral(model.cat, t, x[-1], K, rng, n_draws)
    G = gaussian_kernel_G(model, t, x[:-1], f, path.integral, path.x_t, rng=None)
    coarse = path.integral
    if K % 2 == 0:
        v = path.values[:, ::2]
        h = 2 * t / K
        coarse = h * (v[:, 1:-1].sum(axis=1) + 0.5 * (v[:, 0] + v[:, -1]))
    Gc = gaussian_kernel_G(model, t, x[:-1], f, coarse, path.x_t, rng=None)
    return McEstimate.from_samples(G, seed=seed, integral_bias_proxy=float(np.mean(Gc - G)), K=K)


def reference_Pt(model: MixedModel, t: float, x, f: TestFunction) -> float:
    """Deterministic ``P_t f(x)`` for Gaussian-times-exponential test functions.

    Supports at most one non-constant Gaussian factor of the form
    ``exp(-a (z - c)**2)`` and a catalyst factor ``exp(-e y)``.  Uses the
    Fourier representation of the Gaussian factor and the closed joint
    Laplace transform of ``(I_t, X_t)``.
    """
    t = _check_time(t)
    x = model._check_point(x)
    cat = f.factors[-1]
    if cat.poly[1:] and any(cat.poly[1:]) or cat.a != 0:
        raise ValueError("reference value needs a catalyst factor c0 exp(-e y)")
    scale = cat._p[0]
    live = [j for j in range(model.m) if not f.factors[j].is_constant]
    for j in range(model.m):
        if j not in live:
            scale *= f.factors[j]._p[0]
    if not live:
        return scale * joint_laplace(model.cat, t, x[-1], 0.0, cat.e)
    if len(live) > 1:
        raise ValueError("reference value supports one Gaussian factor")
    j = live[0]
    g = f.factors[j]
    if any(g.poly[1:]) or g.e != 0 or g.a <= 0:
        raise ValueError("Gaussian factor must be c0 exp(-a (z - c)**2)")
    scale *= g._p[0]
    shift = x[j] + model.b0[j] * t - g.c
    gj = model.gamma0[j]

    def integrand(xi):
        return math.exp(-xi * xi / (4 * g.a)) * joint_laplace(model.cat, t, x[-1], gj * xi * xi, cat.e)

    upper = 2.0 * math.sqrt(g.a) * 9.0
    if shift == 0.0:
        val, _ = integrate.quad(integrand, 0.0, upper, epsabs=1e-14, epsrel=1e-12, limit=200)
    else:
        val, _ = integrate.quad(integrand, 0.0, upper, weight="cos", wvar=shift, epsabs=1e-14, limit=200)
    return scale * val / math.sqrt(math.pi * g.a)


# ---------------------------------------------------------------- densities


def _gauss_kernel_fourier(model, t, x, y, axis, order) -> float:
    """``int prod_j phi_{2 gamma_j w}(delta_j) f(w) dw`` (and x-derivatives) for ``m = 1``."""
    spec = ConditionedIntegralSpec(model.cat, t, float(x[-1]), float(y[-1]))
    delta = float(y[0] - x[0] - model.b0[0] * t)
    root = math.sqrt(2.0 * model.gamma0[0])

    def L(xi):
        return integral_laplace(spec, xi * root)

    # find where the transform is negligible
    hi = 1.0
    while L(hi) * (1 + hi) ** order > 1e-18 and hi < 1e6:
        hi *= 2.0
    if order % 2 == 0:
        kern = lambda xi: xi ** order * L(xi)
        wt = "cos"
    else:
        kern = lambda xi: xi ** order * L(xi)
        wt = "sin"
    if delta == 0.0:
        if wt == "sin":
            return 0.0
        val, _ = integrate.quad(kern, 0.0, hi, epsabs=1e-14, epsrel=1e-11, limit=400)
    else:
        val, _ = integrate.quad(kern, 0.0, hi, weight=wt, wvar=delta, epsabs=1e-14, limit=400)
    sign = {0: 1.0, 1: 1.0, 2: -1.0, 3: -1.0}[order]
    return sign * val / math.pi


def _gauss_kernel_inversion(model, t, x, y, axis, order, n_grid=400, stehfest_order=28) -> float:
    """Same kernel by quadrature in ``w`` against the inverted density of ``I_t``."""
    spec = ConditionedIntegralSpec(model.cat, t, float(x[-1]), float(y[-1]))
    w = integral_support_grid(spec, n_grid)
    inv = invert_integral_density(spec, w, order=stehfest_order, precision="mp", check_order=False)
    dens = inv.density
    w_pos = np.where(w > 0, w, 1.0)
    delta = np.asarray(y[:-1], dtype=float) - np.asarray(x[:-1], dtype=float) - np.asarray(model.b0) * t
    g = np.asarray(model.gamma0, dtype=float)
    prod = np.ones_like(w)
    for j in range(model.m):
        v = 2.0 * g[j] * w_pos
        prod = prod * np.exp(-delta[j] ** 2 / (2 * v)) / np.sqrt(2 * math.pi * v)
    if order:
        v = 2.0 * g[axis] * w_pos
        dj = delta[axis]
        fac = {1: dj / v, 2: (dj * dj / v - 1.0) / v, 3: (dj ** 3 / v - 3.0 * dj) / (v * v)}[order]
        prod = prod * fac
    integrand = np.where(w > 0, prod * dens, 0.0)
    return float(integrate.simpson(integrand, x=w))


def mixed_density(model: MixedModel, t: float, x, y, method: str = "auto") -> float:
    """Transition density ``p_t(x, y)`` w.r.t. ``dy_1..dy_m y_{m+1}**(a-1) dy_{m+1}``.

    ``method='fourier'`` (one Gaussian coordinate) writes the Gaussian
    mixture as a cosine transform of the conditional Laplace transform of
    ``I_t``; ``method='inversion'`` integrates the Gaussian product against
    the numerically inverted density of ``I_t``.
    """
    return mixed_density_derivative(model, t, x, y, axis=0, order=0, method=method)


def mixed_density_derivative(model: MixedModel, t: float, x, y, axis: int = 0, order: int = 1,
                             method: str = "auto") -> float:
    """``D^order_{x_axis} p_t(x, y)`` for a Gaussian coordinate ``axis < m``.

    The x-derivative falls on the Gaussian factor only, contributing
    ``delta/v``, ``(delta**2/v - 1)/v`` or ``(delta**3/v - 3 delta)/v**2``
    with ``v = 2 gamma_axis w`` and ``delta = y - x - b t``.
    """
    t = _check_time(t)
    x = model._check_point(x)
    y = model._check_point(y, "y")
    if order not in (0, 1, 2, 3):
        raise ValueError("order must be 0, 1, 2 or 3")
    if order and not 0 <= axis < model.m:
        raise ValueError("derivatives are available in the Gaussian coordinates only")
    if method == "auto":
        method = "fourier" if model.m == 1 else "inversion"
    if method not in ("fourier", "inversion"):
        raise ValueError("method must be 'auto', 'fourier' or 'inversion'")
    q = q_density(model.cat, t, x[-1], y[-1])
    if model.m == 0:
        return q
    if method == "fourier":
        if model.m != 1:
            raise ValueError("Fourier route needs exactly one Gaussian coordinate")
        return q * _gauss_kernel_fourier(model, t, x, y, axis, order)
    return q * _gauss_kernel_inversion(model, t, x, y, axis, order)


# ---------------------------------------------------------------- resolvent


def resolvent_horizon(lam: float, sup: float, tol: float) -> float:
    """Horizon ``T`` with ``exp(-lam T) sup / lam <= tol``."""
    if not lam > 0:
        raise ValueError("lambda must be positive")
    if not tol > 0:
        raise ValueError("tolerance must be positive")
    return max(0.0, math.log(sup / (lam * tol)) / lam)


def exp_linear_weights(times: np.ndarray, lam: float) -> np.ndarray:
    """Weights ``w_k`` with ``int e^{-lam t} g(t) dt = sum_k w_k g(t_k)`` for piecewise-linear ``g``."""
    t = np.asarray(times, dtype=float)
    w = np.zeros_like(t)
    for k in range(t.size - 1):
        a, b = t[k], t[k + 1]
        h = b - a
        ea, eb = math.exp(-lam * a), math.exp(-lam * b)
        i0 = (ea - eb) / lam  # int e^{-lam s}
        i1 = (ea * a - eb * b) / lam + i0 / lam  # int s e^{-lam s}
        # linear interpolation: g = g_k (b - s)/h + g_{k+1} (s - a)/h
        w[k] += (b * i0 - i1) / h
        w[k + 1] += (i1 - a * i0) / h
    return w


def resolvent_Rlambda(model: MixedModel, lam: float, x, f: TestFunction, tol: float,
                      rng: np.random.Generator, n_paths: int = 20000, h: float | None = None,
                      seed: int | None = None) -> McEstimate:
    """``R_lam f(x) = int_0^inf e^{-lam t} P_t f(x) dt`` pathwise.

    The catalyst is simulated exactly on a grid of step ``h`` up to the
    horizon where the neglected tail is below ``tol``; ``G f`` is
    integrated against ``e^{-lam t}`` with piecewise-linear weights.
    """
    x = model._check_point(x)
    sup = f.sup if isinstance(f, TestFunction) else None
    if sup is None:
        raise ValueError("resolvent needs a bounded test function with a known sup-norm")
    T = resolvent_horizon(lam, sup, tol)
    if h is None:
        h = min(0.05, 0.1 / lam)
    n_steps = max(1, int(math.ceil(T / h)))
    times = np.linspace(0.0, n_steps * h, n_steps + 1)
    wts = exp_linear_weights(times, lam)
    s = model.cat.gamma * h
    X = np.full(n_paths, x[-1], dtype=float)
    I = np.zeros(n_paths)
    acc = wts[0] * gaussian_kernel_G(model, 0.0, x[:-1], f, I, X)
    for k in range(1, n_steps + 1):
        Xn = rng.gamma(rng.poisson(X / s) + model.cat.ratio, s)
        I = I + 0.5 * h * (X + Xn)
        X = Xn
        acc = acc + wts[k] * gaussian_kernel_G(model, times[k], x[:-1], f, I, X)
    return McEstimate.from_samples(acc, seed=seed, horizon=T, step=h, truncation_tol=tol)


# ---------------------------------------------------------------- integration by parts


@dataclass
class IbpResult:
    """Main term of the derivative formula and the bound on the remainder."""

    main: McEstimate
    bias_bound: float
    inv_integral_mean: float

    def to_dict(self) -> dict:
        return {"main": self.main.to_dict(), "bias_bound": self.bias_bound,
                "inv_integral_mean": self.inv_integral_mean}


def ibp_derivative(model: MixedModel, t: float, z, f, n_draws: int, rng: np.random.Generator,
                   K: int = 16, block: int = 20000, seed: int | None = None) -> IbpResult:
    """Derivative of ``P_t f`` in the catalyst coordinate without differentiating ``f``.

    Main term ``(gamma t)**-1 E[(N0 - z')/z' G f(I_t, X_t)]`` with
    ``z' = z_{m+1}/(gamma t)`` and ``N0`` the number of initial-mass
    clusters alive at ``t``.  The remainder is bounded by
    ``4 |f|_inf t E[1/I_t]`` and vanishes when ``f`` ignores the Gaussian
    coordinates.
    """
    t = _check_time(t)
    z = model._check_point(z, "z")
    if not z[-1] > 0:
        raise ValueError("the catalyst coordinate must be positive")
    g = model.cat.gamma
    zp = z[-1] / (g * t)
    samples, inv = [], []
    left = n_draws
    while left > 0:
        n = min(block, left)
        path = sample_clustered_path(model.cat, t, z[-1], K, rng, n)
        G = gaussian_kernel_G(model, t, z[:-1], f, path.integral, path.x_t, rng=None)
        samples.append((path.n0 - zp) / zp * G / (g * t))
        inv.append(1.0 / path.integral)
        left -= n
    main = McEstimate.from_samples(np.concatenate(samples), seed=seed, K=K)
    inv_mean = float(np.mean(np.concatenate(inv)))
    free = isinstance(f, TestFunction) and f.gaussian_free
    if free:
        bias = 0.0
    else:
        sup = f.sup if isinstance(f, TestFunction) else None
        bias = math.inf if sup is None else 4.0 * sup * t * inv_mean
    return IbpResult(main=main, bias_bound=bias, inv_integral_mean=inv_mean)


def difference_operator(G: Callable, I, X, dI, dX):
    """``G(I + dI, X + dX) - G(I, X)`` elementwise."""
    return G(np.asarray(I) + dI, np.asarray(X) + dX) - G(I, X)


def poisson_weights(n: np.ndarray, mean: float) -> np.ndarray:
    """Poisson probabilities ``P(N = n)``."""
    from scipy.stats import poisson

    return poisson.pmf(n, mean)
