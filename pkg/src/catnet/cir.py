"""One-dimensional squared-Bessel (CIR-type) diffusion ``b dt + sqrt(2 gamma X) dW``.

Provides the transition density ``q_t(x, y)`` (with respect to
``y**(b/gamma - 1) dy``) and its x-derivatives, the closed-form Laplace
transform of the endpoint, the exact Poisson mixture of Gammas sampler,
the cluster decomposition of the endpoint, closed moments, one-sided tail
bounds and a numerical probe of the analytic inequalities the density
is known to satisfy.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate
from scipy.special import gammaln

from .special import log_series


@dataclass(frozen=True)
class CirParams:
    """Immigration rate ``b`` and diffusion scale ``gamma`` (both positive)."""

    b: float
    gamma: float

    def __post_init__(self):
        for name in ("b", "gamma"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be a finite positive number, got {v!r}")

    @property
    def ratio(self) -> float:
        """``b / gamma``; the density is taken w.r.t. ``y**(ratio - 1) dy``."""
        return self.b / self.gamma

    @property
    def nu(self) -> float:
        """Bessel index ``b / gamma - 1``."""
        return self.b / self.gamma - 1.0


def _check_time(t: float) -> float:
    if not (math.isfinite(t) and t > 0):
        raise ValueError(f"time must be finite and positive, got {t!r}")
    return float(t)


def _check_state(name: str, v: float) -> float:
    if not (math.isfinite(v) and v >= 0):
        raise ValueError(f"{name} must be finite and non-negative, got {v!r}")
    return float(v)


def log_q_density(p: CirParams, t: float, x: float, y: float) -> float:
    """Logarithm of ``q_t(x, y)``."""
    t = _check_time(t)
    x, y = _check_state("x", x), _check_state("y", y)
    a, s = p.ratio, p.gamma * t
    u = x * y / (s * s)
    return -a * math.log(s) - (x + y) / s + float(log_series(u, a))


def q_density(p: CirParams, t: float, x: float, y: float, deriv_order: int = 0) -> float:
    """Transition density ``q_t(x, y)`` or its ``deriv_order``-th x-derivative.

    Uses ``D^n q = s**-a e^{-(x+y)/s} sum_k C(n,k) (-1/s)**(n-k) S_k`` with
    ``s = gamma t`` and ``S_k = (y/s**2)**k F(xy/s**2, a+k)``.
    """
    if deriv_order < 0 or int(deriv_order) != deriv_order:
        raise ValueError("deriv_order must be a non-negative integer")
    t = _check_time(t)
    x, y = _check_state("x", x), _check_state("y", y)
    a, s = p.ratio, p.gamma * t
    u = x * y / (s * s)
    log_pref = -a * math.log(s) - (x + y) / s
    n = int(deriv_order)
    if n == 0:
        return math.exp(log_pref + float(log_series(u, a)))
    logs, signs = [], []
    for k in range(n + 1):
        if k > 0 and y == 0.0:
            continue
        lk = (math.lgamma(n + 1) - math.lgamma(k + 1) - math.lgamma(n - k + 1)
              - (n - k) * math.log(s) + float(log_series(u, a + k)))
        if k > 0:
            lk += k * math.log(y / (s * s))
        logs.append(lk)
        signs.append(-1.0 if (n - k) % 2 else 1.0)
    logs_a = np.array(logs)
    top = logs_a.max()
    total = float(np.dot(signs, np.exp(logs_a - top)))
    return math.exp(log_pref + top) * total


def laplace_endpoint(p: CirParams, t: float, x: float, lam: float) -> float:
    """``E_x exp(-lam X_t) = (1 + lam s)**-a exp(-x lam / (1 + lam s))``, ``s = gamma t``."""
    t = _check_time(t)
    x = _check_state("x", x)
    s = p.gamma * t
    if not lam > -1.0 / s:
        raise ValueError(f"Laplace argument must exceed -1/(gamma t) = {-1.0 / s!r}")
    den = 1.0 + lam * s
    return den ** (-p.ratio) * math.exp(-x * lam / den)


def joint_laplace(p: CirParams, t: float, x: float, alpha: float, beta: float) -> float:
    """``E_x exp(-alpha I_t - beta X_t)`` with ``I_t = int_0^t X_s ds``.

    Affine closed form ``exp(-A(t) - B(t) x)`` where ``B' = alpha - gamma B**2``,
    ``B(0) = beta`` and ``A' = b B``, ``A(0) = 0``.
    """
    t = _check_time(t)
    x = _check_state("x", x)
    if alpha < 0 or beta < 0:
        raise ValueError("alpha and beta must be non-negative")
    g = p.gamma
    if alpha == 0.0:
        B = beta / (1.0 + beta * g * t)
        A = p.ratio * math.log1p(beta * g * t)
        return math.exp(-A - B * x)
    k = math.sqrt(alpha / g)
    u = k * g * t
    th = math.tanh(u)
    B = k * (beta + k * th) / (k + beta * th)
    # log(cosh u + (beta/k) sinh u) computed without overflow
    logc = u + math.log1p(math.exp(-2.0 * u)) - math.log(2.0)
    A = p.ratio * (logc + math.log1p(beta / k * th))
    return math.exp(-A - B * x)


def closed_moments(p: CirParams, t: float, x: float) -> tuple[float, float]:
    """Mean ``x + b t`` and variance ``2 gamma t x + b gamma t**2`` of ``X_t``."""
    t = _check_time(t)
    x = _check_state("x", x)
    return x + p.b * t, 2.0 * p.gamma * t * x + p.b * p.gamma * t * t


@dataclass
class EndpointSample:
    """Endpoint draws and the cluster counts they were mixed over."""

    x_t: np.ndarray
    n0: np.ndarray


def sample_endpoint(p: CirParams, t: float, x, rng: np.random.Generator, size=None) -> EndpointSample:
    """Exact draw of ``X_t`` given ``X_0 = x``.

    ``N0 ~ Poisson(x / (gamma t))`` counts the clusters alive at time
    ``t`` and ``X_t | N0 = n ~ Gamma(n + b/gamma, scale gamma t)``.  ``x``
    may be an array, in which case ``size`` defaults to its shape.
    """
    t = _check_time(t)
    xa = np.asarray(x, dtype=float)
    if np.any(xa < 0) or not np.all(np.isfinite(xa)):
        raise ValueError("starting point must be finite and non-negative")
    s = p.gamma * t
    n0 = rng.poisson(xa / s, size=size)
    xt = rng.gamma(n0 + p.ratio, s)
    return EndpointSample(x_t=np.asarray(xt, dtype=float), n0=np.asarray(n0))


@dataclass
class DecompositionSample:
    """Endpoint split into an immigration part and initial-mass clusters.

    ``x_t = immigration + excursion_sum``.  ``n_prime`` counts clusters of
    the immigration part started at ``rho x``; ``n_rho`` counts the extra
    clusters carried by the remaining mass ``(1 - rho) x``.
    """

    immigration: np.ndarray
    n_prime: np.ndarray
    n_rho: np.ndarray
    excursion_sum: np.ndarray
    excursions: list = field(default_factory=list)

    @property
    def x_t(self) -> np.ndarray:
        return self.immigration + self.excursion_sum

    @property
    def n0(self) -> np.ndarray:
        """Coupled total cluster count ``N0 = N'_0 + N_rho``."""
        return self.n_prime + self.n_rho


def sample_decomposition(p: CirParams, t: float, x: float, rho: float,
                         rng: np.random.Generator, size=None,
                         keep_excursions: bool = False) -> DecompositionSample:
    """Draw ``X_t = X'_0(t) + sum_{j<=N_rho} e_j(t)``.

    ``X'_0`` starts at ``rho x``; ``N_rho ~ Poisson((1-rho) x / (gamma t))``
    and the excursion endpoints are i.i.d. exponential with mean
    ``gamma t``.
    """
    if not 0.0 <= rho <= 1.0:
        raise ValueError("rho must lie in [0, 1]")
    t = _check_time(t)
    x = _check_state("x", x)
    s = p.gamma * t
    base = sample_endpoint(p, t, rho * x, rng, size=size)
    n_rho = np.asarray(rng.poisson((1.0 - rho) * x / s, size=size))
    excursions = []
    if keep_excursions:
        flat = n_rho.ravel()
        draws = rng.exponential(s, size=int(flat.sum()))
        cuts = np.cumsum(flat)[:-1]
        excursions = np.split(draws, cuts)
        sums = np.array([e.sum() for e in excursions]).reshape(n_rho.shape)
    else:
        # a sum of n exponentials with mean s is Gamma(n, s); zero when n == 0
        shape = np.where(n_rho > 0, n_rho, 1)
        sums = np.where(n_rho > 0, rng.gamma(shape, s), 0.0)
    return DecompositionSample(immigration=base.x_t, n_prime=base.n0, n_rho=n_rho,
                               excursion_sum=np.asarray(sums, dtype=float), excursions=excursions)


def tail_bound(p: CirParams, t: float, z: float, w: float, side: str) -> float:
    """Bound ``(w/z)**(b/2gamma) exp(-(sqrt z - sqrt w)**2 / (gamma t))``, clamped at 1.

    ``side='upper'`` bounds ``P_z(X_t >= w)`` for ``w >= z``;
    ``side='lower'`` bounds ``P_z(X_t <= w)`` for ``w <= z``.
    """
    t = _check_time(t)
    z, w = _check_state("z", z), _check_state("w", w)
    if side == "upper":
        if w < z:
            raise ValueError("upper tail bound requires w >= z")
    elif side == "lower":
        if w > z:
            raise ValueError("lower tail bound requires w <= z")
    else:
        raise ValueError("side must be 'upper' or 'lower'")
    if w == z:
        return 1.0
    if z == 0.0:
        return 1.0
    if w == 0.0:
        return 0.0
    expo = 0.5 * p.ratio * math.log(w / z) - (math.sqrt(z) - math.sqrt(w)) ** 2 / (p.gamma * t)
    return 1.0 if expo >= 0 else math.exp(expo)


def negative_moment(p: CirParams, t: float, x: float, power: float) -> float:
    """``E_x[X_t**-power]`` by quadrature against the series density (``power < b/gamma``)."""
    a = p.ratio
    if not 0 <= power < a:
        raise ValueError("negative moment requires 0 <= power < b/gamma")
    t = _check_time(t)
    x = _check_state("x", x)
    mean, var = closed_moments(p, t, x)
    upper = mean + 40.0 * math.sqrt(var) + 40.0 * p.gamma * t
    f = lambda y: q_density(p, t, x, y)
    # the weight y**(a - 1 - power) is singular at 0; let quad handle it
    val, _ = integrate.quad(f, 0.0, upper, weight="alg", wvar=(a - 1.0 - power, 0.0), limit=400)
    return val


@dataclass
class InequalityReport:
    """Fitted constants for the analytic inequalities probed on a grid.

    ``constants`` maps an inequality name to the smallest constant that
    works on the probed grid; ``flagged`` lists the names for which no
    finite constant was found.
    """

    constants: dict
    flagged: list

    @property
    def ok(self) -> bool:
        return not self.flagged


def _d2_moment_integral(p: CirParams, t: float, y: float) -> float:
    """``int (x - y) x**a D_x^2 q_t(x, y) dx`` over ``x >= 0``."""
    a = p.ratio
    mean, var = closed_moments(p, t, y)
    upper = mean + 40.0 * math.sqrt(var) + 40.0 * p.gamma * t
    g = lambda x: (x - y) * x ** a * q_density(p, t, x, y, deriv_order=2)
    pts = [y] if 0 < y < upper else None
    val, _ = integrate.quad(g, 0.0, upper, points=pts, limit=400)
    return val


def analytic_inequalities(p: CirParams, grid: dict | None = None) -> InequalityReport:
    """Fit the constants in the standard bounds for ``q`` on a grid.

    Probed bounds:

    * ``gamma_ratio``: ``c1 m**(a-1) m! <= Gamma(m + a) <= c2 m**(a-1) m!``
      (reported as the pair ``(c1, c2)``);
    * ``density_sup``: ``q_t(x, y) <= c (t**-a + 1{a<1/2} (x^y)**(1/2-a) t**-1/2)``;
    * ``second_moment``: ``E_x X_t**2 <= c (x + t)**2``;
    * ``negative_moment``: ``E_x X_t**-p <= c (p/(a-p) + 1) (x + t)**-p`` for p < a;
    * ``d2_weighted``: ``sup_y |int (x-y) x**a D_x^2 q_t(x,y) dx| <= c``.
    """
    grid = dict(grid or {})
    a = p.ratio
    ms = np.asarray(grid.get("m", np.arange(1, 200)), dtype=float)
    ts = np.asarray(grid.get("t", [0.25, 0.5, 1.0, 2.0]), dtype=float)
    xs = np.asarray(grid.get("x", [0.0, 0.1, 0.5, 1.0, 2.0, 4.0]), dtype=float)
    ys = np.asarray(grid.get("y", [0.05, 0.2, 0.5, 1.0, 2.0, 4.0]), dtype=float)
    powers = np.asarray(grid.get("p", [0.25 * a, 0.5 * a, 0.9 * a]), dtype=float)
    if ms.size == 0 or ts.size == 0 or xs.size == 0 or ys.size == 0:
        raise ValueError("empty grid")
    if np.any(powers >= a) or np.any(powers < 0):
        raise ValueError("negative-moment powers must lie in [0, b/gamma)")

    constants, flagged = {}, []

    def record(name, value):
        constants[name] = value
        vals = np.atleast_1d(np.asarray(value, dtype=float))
        if not np.all(np.isfinite(vals)) or np.any(vals <= 0):
            flagged.append(name)

    log_ratio = gammaln(ms + a) - ((a - 1.0) * np.log(ms) + gammaln(ms + 1.0))
    record("gamma_ratio", (float(np.exp(log_ratio.min())), float(np.exp(log_ratio.max()))))

    sup_ratio = 0.0
    for t in ts:
        for x in xs:
            for y in ys:
                bound = t ** (-a) + (min(x, y) ** (0.5 - a) / math.sqrt(t) if a < 0.5 else 0.0)
                sup_ratio = max(sup_ratio, q_density(p, t, x, y) / bound)
    record("density_sup", sup_ratio)

    sm = 0.0
    for t in ts:
        for x in xs:
            mean, var = closed_moments(p, t, x)
            sm = max(sm, (var + mean * mean) / (x + t) ** 2)
    record("second_moment", sm)

    nm = 0.0
    for pw in powers:
        for t in ts:
            for x in xs:
                val = negative_moment(p, t, x, pw)
                nm = max(nm, val / ((pw / (a - pw) + 1.0) * (x + t) ** (-pw)))
    record("negative_moment", nm)

    d2 = 0.0
    for t in ts:
        for y in ys:
            d2 = max(d2, abs(_d2_moment_integral(p, t, y)))
    record("d2_weighted", d2)
    return InequalityReport(constants=constants, flagged=sorted(flagged))
