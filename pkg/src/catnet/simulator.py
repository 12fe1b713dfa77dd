"""Path simulation of catalytic networks: full-truncation Euler and the frozen scheme.

The frozen scheme splits time into windows of length ``1/n``.  On window
``k`` the coefficients are frozen at the state one window back (time
``(k-1)/n``, clipped at 0) and each coordinate moves exactly under the
frozen dynamics: an exact Poisson-Gamma step for CIR-type coordinates,
and a Gaussian step whose variance uses the trapezoid integral of the
live catalyst (``K`` substeps) for reactants of vanishing catalysts.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
import multiprocessing as mp

import numpy as np

from . import rng as rngmod
from .network import BranchingNetwork, LocalModel, partition, validate_network
from .semigroup import McEstimate, exp_linear_weights, resolvent_horizon


@dataclass
class SimConfig:
    """Simulation settings.

    ``n`` is the number of windows (Euler steps) per unit time and ``K``
    the number of substeps used for catalyst integrals.  ``x0`` is one
    starting point or a list of points assigned to paths cyclically.
    """

    scheme: str = "frozen"
    n: int = 64
    K: int = 8
    T: float = 1.0
    x0: list | None = None
    n_paths: int = 1000
    block_size: int = 4096
    record_every: int = 1
    fine: bool = False

    def __post_init__(self):
        if self.scheme not in ("frozen", "euler"):
            raise ValueError("scheme must be 'frozen' or 'euler'")
        if self.n < 1 or self.K < 1:
            raise ValueError("n and K must be positive")
        if not (self.T > 0 and math.isfinite(self.T)):
            raise ValueError("T must be positive")
        if self.n_paths < 1 or self.block_size < 1 or self.record_every < 1:
            raise ValueError("n_paths, block_size and record_every must be positive")

    @property
    def n_steps(self) -> int:
        return max(1, int(round(self.T * self.n)))

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class TrajectoryBatch:
    """Recorded paths with shape ``(n_paths, n_times, d)``."""

    times: np.ndarray
    paths: np.ndarray
    scheme: str
    seed: int
    stream_ids: list = field(default_factory=list)

    @property
    def n_paths(self) -> int:
        return self.paths.shape[0]

    @property
    def d(self) -> int:
        return self.paths.shape[2]


# ---------------------------------------------------------------- dynamics


class _Dynamics:
    """Coefficient evaluation shared by both schemes."""

    def __init__(self, model, x0s: np.ndarray):
        self.model = model
        if isinstance(model, BranchingNetwork):
            rep = validate_network(model)
            if not rep.valid:
                raise ValueError(f"invalid network: {rep.violations[0].detail}")
            self.d = model.d
            self.catalyst_of = model.catalyst_of
            parts = {partition(model, x)[2] for x in x0s}
            if len(parts) > 1:
                raise ValueError("starting points must share the same zero pattern")
            self.N1 = sorted(parts.pop())
            self.clamp = np.ones(self.d, dtype=bool)
            self.network = True
        elif isinstance(model, LocalModel):
            self.d = model.d
            self.catalyst_of = dict(model.catalyst_of)
            self.N1 = sorted(model.N1)
            self.clamp = np.array([j not in model.N1 for j in range(self.d)])
            self.network = False
        else:
            raise TypeError("model must be a BranchingNetwork or a LocalModel")
        n1 = set(self.N1)
        self.sub_cols = sorted({self.catalyst_of[j] for j in self.N1})
        self.n1_set = n1

    # Euler coefficients

    def drift(self, x):
        if self.network:
            return self.model.b_at(x)
        return np.broadcast_to(self.model.b0, x.shape)

    def diffusion(self, x):
        """Coefficient of ``f_jj``; the SDE variance rate is twice this."""
        xp = np.maximum(x, 0.0)
        if self.network:
            return np.maximum(self.model.diffusion_at(xp), 0.0)
        out = self.model.gamma0 * xp
        for j in self.N1:
            out[:, j] = self.model.gamma0[j] * xp[:, self.catalyst_of[j]]
        return out

    # frozen coefficients at the lagged state

    def frozen(self, L):
        """Frozen ``(gamma~, b~)``; ``gamma~`` multiplies ``x_j`` (CIR) or the live catalyst (``N1``)."""
        if not self.network:
            shape = L.shape
            return np.broadcast_to(self.model.gamma0, shape), np.broadcast_to(self.model.b0, shape)
        Lp = np.maximum(L, 0.0)
        g = self.model.gamma_at(Lp)
        b = self.model.b_at(Lp)
        gt = g.copy()
        for j, i in self.catalyst_of.items():
            if j in self.n1_set:
                gt[:, j] = g[:, j] * Lp[:, j]
            else:
                gt[:, j] = g[:, j] * Lp[:, i]
        return gt, b


def cir_step(x, b, g, h, rng: np.random.Generator):
    """Exact step of ``dX = b dt + sqrt(2 g X) dW`` with constant ``b, g``.

    ``X_h`` is ``Gamma(N + b/g, g h)`` with ``N ~ Poisson(x/(g h))``.  For
    ``b < 0`` the same mixture (set to 0 when the shape is not positive)
    keeps the Laplace transform of the constant-coefficient process.
    ``g = 0`` moves deterministically.
    """
    x = np.maximum(np.asarray(x, dtype=float), 0.0)
    b = np.broadcast_to(np.asarray(b, dtype=float), x.shape)
    g = np.broadcast_to(np.asarray(g, dtype=float), x.shape)
    out = np.maximum(x + b * h, 0.0)
    live = g > 0
    if not np.any(live):
        return out
    s = g[live] * h
    lam = x[live] / s
    huge = lam > 1e12
    lam_safe = np.where(huge, 0.0, lam)
    n = rng.poisson(lam_safe)
    shape = n + b[live] / g[live]
    ok = shape > 0
    draw = np.where(ok, rng.gamma(np.where(ok, shape, 1.0), s), 0.0)
    if np.any(huge):
        xl, bl = x[live][huge], b[live][huge]
        z = rng.standard_normal(xl.size)
        draw[huge] = np.maximum(xl + bl * h + np.sqrt(2 * g[live][huge] * xl * h) * z, 0.0)
    out[live] = draw
    return out


# ---------------------------------------------------------------- stepping


def _euler_block(dyn: _Dynamics, X: np.ndarray, n_steps: int, h: float, rng, observe):
    observe(0, X)
    for k in range(1, n_steps + 1):
        dz = rng.standard_normal(X.shape)
        X = X + dyn.drift(X) * h + np.sqrt(2.0 * dyn.diffusion(X) * h) * dz
        X[:, dyn.clamp] = np.maximum(X[:, dyn.clamp], 0.0)
        observe(k, X)
    return X


def _frozen_block(dyn: _Dynamics, X: np.ndarray, n_steps: int, h: float, K: int, rng, observe, fine: bool):
    """Frozen scheme; ``observe`` is called per window, or per substep when ``fine``."""
    d = dyn.d
    X0 = X.copy()
    lag_prev = X0.copy()  # state at the start of the previous window
    observe(0, X)
    all_cols = list(range(d))
    for k in range(n_steps):
        L = X0 if k == 0 else lag_prev
        gt, bt = dyn.frozen(L)
        start = X.copy()
        if fine:
            hs = h / K
            for s in range(K):
                Xn = X.copy()
                integ = {}
                cir_cols = [j for j in all_cols if j not in dyn.n1_set]
                if cir_cols:
                    Xn[:, cir_cols] = cir_step(X[:, cir_cols], bt[:, cir_cols], gt[:, cir_cols], hs, rng)
                for j in dyn.N1:
                    i = dyn.catalyst_of[j]
                    integ = 0.5 * hs * (np.maximum(X[:, i], 0.0) + np.maximum(Xn[:, i], 0.0))
                    var = 2.0 * np.maximum(gt[:, j], 0.0) * integ
                    Xn[:, j] = X[:, j] + bt[:, j] * hs + np.sqrt(var) * rng.standard_normal(X.shape[0])
                Xn[:, dyn.clamp] = np.maximum(Xn[:, dyn.clamp], 0.0)
                X = Xn
                observe(k * K + s + 1, X)
        else:
            Xn = X.copy()
            integ = {}
            if dyn.sub_cols:
                hs = h / K
                cur = X[:, dyn.sub_cols].copy()
                acc = np.zeros_like(cur)
                for _ in range(K):
                    nxt = cir_step(cur, bt[:, dyn.sub_cols], gt[:, dyn.sub_cols], hs, rng)
                    acc += 0.5 * hs * (cur + nxt)
                    cur = nxt
                Xn[:, dyn.sub_cols] = cur
                integ = {c: acc[:, q] for q, c in enumerate(dyn.sub_cols)}
            rest = [j for j in all_cols if j not in dyn.n1_set and j not in dyn.sub_cols]
            if rest:
                Xn[:, rest] = cir_step(X[:, rest], bt[:, rest], gt[:, rest], h, rng)
            for j in dyn.N1:
                var = 2.0 * np.maximum(gt[:, j], 0.0) * integ[dyn.catalyst_of[j]]
                Xn[:, j] = X[:, j] + bt[:, j] * h + np.sqrt(var) * rng.standard_normal(X.shape[0])
            Xn[:, dyn.clamp] = np.maximum(Xn[:, dyn.clamp], 0.0)
            X = Xn
            observe(k + 1, X)
        lag_prev = start
    return X


def _initial_states(cfg: SimConfig, d: int, n_paths: int, offset: int) -> np.ndarray:
    if cfg.x0 is None:
        raise ValueError("a starting point x0 is required")
    pts = np.atleast_2d(np.asarray(cfg.x0, dtype=float))
    if pts.shape[1] != d:
        raise ValueError(f"starting points must have {d} coordinates")
    idx = (offset + np.arange(n_paths)) % pts.shape[0]
    return pts[idx].copy()


_WORK: dict = {}


def _run_block(block: int, size: int, offset: int):
    w = _WORK
    dyn, cfg, seed, tag, consumer = w["dyn"], w["cfg"], w["seed"], w["tag"], w["consumer"]
    g = rngmod.stream(seed, tag, block)
    X = _initial_states(cfg, dyn.d, size, offset)
    state = consumer.start(size)
    h = 1.0 / cfg.n
    if cfg.scheme == "euler":
        _euler_block(dyn, X, cfg.n_steps, h, g, lambda k, x: consumer.observe(state, k, x))
    else:
        _frozen_block(dyn, X, cfg.n_steps, h, cfg.K, g, lambda k, x: consumer.observe(state, k, x), cfg.fine)
    return consumer.finish(state)


def run_paths(model, cfg: SimConfig, seed: int, tag: str, consumer, workers: int = 1) -> list:
    """Simulate ``cfg.n_paths`` paths in fixed blocks and feed each block to ``consumer``.

    ``consumer`` provides ``start(size)``, ``observe(state, k, x)`` (step
    index ``k``) and ``finish(state)``.  Block ``i`` always draws from the
    stream ``(seed, tag, i)``, so results do not depend on ``workers``.
    """
    pts = np.atleast_2d(np.asarray(cfg.x0, dtype=float)) if cfg.x0 is not None else None
    if pts is None:
        raise ValueError("a starting point x0 is required")
    dyn = _Dynamics(model, pts)
    sizes = rngmod.block_sizes(cfg.n_paths, cfg.block_size)
    offsets = np.concatenate([[0], np.cumsum(sizes)[:-1]]).astype(int)
    _WORK.update(dyn=dyn, cfg=cfg, seed=seed, tag=tag, consumer=consumer)
    try:
        if workers > 1 and len(sizes) > 1:
            ctx = mp.get_context("fork")
            with ProcessPoolExecutor(max_workers=workers, mp_context=ctx) as ex:
                futs = [ex.submit(_run_block, i, s, int(o)) for i, (s, o) in enumerate(zip(sizes, offsets))]
                return [f.result() for f in futs]
        return [_run_block(i, s, int(o)) for i, (s, o) in enumerate(zip(sizes, offsets))]
    finally:
        _WORK.clear()


class _Recorder:
    def __init__(self, stride: int, n_obs: int, d: int):
        self.stride, self.n_obs, self.d = stride, n_obs, d

    def start(self, size):
        n_rec = self.n_obs // self.stride + 1
        return {"buf": np.empty((size, n_rec, self.d)), "i": 0}

    def observe(self, state, k, x):
        if k % self.stride == 0:
            state["buf"][:, k // self.stride] = x

    def finish(self, state):
        return state["buf"]


def _simulate(model, cfg: SimConfig, seed: int | None, workers: int) -> TrajectoryBatch:
    seed = rngmod.resolve_seed(seed)
    d = model.d
    per_unit = cfg.n * (cfg.K if (cfg.fine and cfg.scheme == "frozen") else 1)
    n_obs = cfg.n_steps * (cfg.K if (cfg.fine and cfg.scheme == "frozen") else 1)
    tag = f"simulate/{cfg.scheme}"
    rec = _Recorder(cfg.record_every, n_obs, d)
    blocks = run_paths(model, cfg, seed, tag, rec, workers=workers)
    paths = np.concatenate(blocks, axis=0)
    times = np.arange(0, n_obs + 1, cfg.record_every) / per_unit
    ids = [(tag, i) for i in range(len(blocks))]
    return TrajectoryBatch(times=times, paths=paths, scheme=cfg.scheme, seed=seed, stream_ids=ids)


def simulate_euler(model, cfg: SimConfig, seed: int | None = None, workers: int = 1) -> TrajectoryBatch:
    """Full-truncation Euler-Maruyama with step ``1/n``."""
    return _simulate(model, _with_scheme(cfg, "euler"), seed, workers)


def simulate_frozen(model, cfg: SimConfig, seed: int | None = None, workers: int = 1) -> TrajectoryBatch:
    """Frozen-coefficient scheme with window ``1/n`` and ``K`` catalyst substeps."""
    return _simulate(model, _with_scheme(cfg, "frozen"), seed, workers)


def _with_scheme(cfg: SimConfig, scheme: str) -> SimConfig:
    if cfg.scheme == scheme:
        return cfg
    d = cfg.to_dict()
    d["scheme"] = scheme
    return SimConfig(**d)


# ---------------------------------------------------------------- resolvent


class _ResolventAccumulator:
    def __init__(self, weights: dict, fns: dict):
        self.weights, self.fns = weights, fns

    def start(self, size):
        return {key: np.zeros(size) for key in self.weights_keys()}

    def weights_keys(self):
        return [(lam, name) for lam in self.weights for name in self.fns]

    def observe(self, state, k, x):
        for lam, w in self.weights.items():
            if k < w.size and w[k] != 0.0:
                for name, f in self.fns.items():
                    state[(lam, name)] += w[k] * f(x)

    def finish(self, state):
        return state


def resolvent_S_lambda(model, cfg: SimConfig, lams, fns: dict, tol: float, seed: int | None = None,
                       sup: float = 1.0, workers: int = 1) -> dict:
    """Pathwise ``int_0^T e^{-lam t} f(X_t) dt`` for several ``lam`` and ``f`` on shared paths.

    ``T`` is the horizon at which the neglected tail ``e^{-lam T} sup/lam``
    drops below ``tol`` for the smallest ``lam``.  Returns a mapping
    ``(lam, name) -> McEstimate``.
    """
    seed = rngmod.resolve_seed(seed)
    lams = [float(v) for v in lams]
    T = max(resolvent_horizon(lam, sup, tol) for lam in lams)
    d = cfg.to_dict()
    d["T"] = max(T, 1.0 / cfg.n)
    d["fine"] = False
    run_cfg = SimConfig(**d)
    times = np.arange(run_cfg.n_steps + 1) / run_cfg.n
    weights = {lam: exp_linear_weights(times, lam) for lam in lams}
    acc = _ResolventAccumulator(weights, fns)
    blocks = run_paths(model, run_cfg, seed, f"resolvent/{run_cfg.scheme}/n{run_cfg.n}", acc, workers=workers)
    out = {}
    for key in acc.weights_keys():
        samples = np.concatenate([b[key] for b in blocks])
        out[key] = McEstimate.from_samples(samples, seed=seed, horizon=run_cfg.T, scheme=run_cfg.scheme,
                                           windows_per_unit=run_cfg.n, truncation_tol=tol)
    return out


def min_edge_sums(net: BranchingNetwork, x: np.ndarray) -> np.ndarray:
    """Per-path ``min over edges of x_i + x_j``."""
    x = np.asarray(x, dtype=float)
    sums = np.stack([x[..., i - 1] + x[..., j - 1] for i, j in net.edges], axis=-1)
    return sums.min(axis=-1)
