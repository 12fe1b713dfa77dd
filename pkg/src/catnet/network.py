"""Catalytic branching networks and their local constant-coefficient models.

A network on ``d`` vertices is a set of directed edges ``(i, j)`` (1-based,
``i`` catalyses ``j``) together with diffusion scales ``gamma_j(x)`` and
drifts ``b_j(x)``.  Coordinate ``j`` diffuses with variance rate
``2 gamma_j(x) x_{c_j} x_j`` when it has a catalyst ``c_j`` and
``2 gamma_j(x) x_j`` otherwise.
"""
from __future__ import annotations

import ast
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.stats import qmc

# ---------------------------------------------------------------- scalar fields

_EXPR_FUNCS = {
    "exp": np.exp, "log": np.log, "sqrt": np.sqrt, "sin": np.sin, "cos": np.cos,
    "tanh": np.tanh, "abs": np.abs, "minimum": np.minimum, "maximum": np.maximum,
}
_EXPR_NODES = (
    ast.Expression, ast.BinOp, ast.UnaryOp, ast.Call, ast.Name, ast.Load, ast.Constant,
    ast.Add, ast.Sub, ast.Mult, ast.Div, ast.Pow, ast.USub, ast.UAdd,
)


def _compile_expr(expr: str, d: int):
    try:
        tree = ast.parse(expr, mode="eval")
    except SyntaxError as exc:
        raise ValueError(f"cannot parse expression {expr!r}: {exc.msg}") from exc
    allowed = {f"x{k}" for k in range(1, d + 1)} | set(_EXPR_FUNCS) | {"pi"}
    for node in ast.walk(tree):
        if not isinstance(node, _EXPR_NODES):
            raise ValueError(f"unsupported syntax {type(node).__name__} in expression {expr!r}")
        if isinstance(node, ast.Name) and node.id not in allowed:
            raise ValueError(f"unknown name {node.id!r} in expression {expr!r}")
        if isinstance(node, ast.Call) and not (isinstance(node.func, ast.Name) and node.func.id in _EXPR_FUNCS):
            raise ValueError(f"unsupported call in expression {expr!r}")
    return compile(tree, "<field>", "eval")


@dataclass(frozen=True)
class ScalarField:
    """A real function of the state ``x`` (shape ``(..., d)``).

    ``kind`` is one of ``'const'``, ``'affine'`` or ``'expr'``; ``spec``
    keeps the JSON-level description so fields round-trip.
    """

    kind: str
    spec: dict
    d: int
    _fn: Callable = field(repr=False, compare=False, default=None)

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        out = self._fn(x)
        return np.broadcast_to(out, x.shape[:-1]).astype(float) if np.ndim(out) < x.ndim - 1 else out

    def to_dict(self) -> dict:
        return dict(self.spec)

    # -- constructors

    @classmethod
    def const(cls, value: float, d: int) -> "ScalarField":
        v = float(value)
        return cls("const", {"kind": "const", "value": v}, d, lambda x: np.full(x.shape[:-1], v))

    @classmethod
    def affine(cls, intercept: float, slope, d: int) -> "ScalarField":
        a = np.asarray(slope, dtype=float)
        if a.shape != (d,):
            raise ValueError(f"affine slope must have length {d}")
        c = float(intercept)
        spec = {"kind": "affine", "intercept": c, "slope": [float(v) for v in a]}
        return cls("affine", spec, d, lambda x: c + x @ a)

    @classmethod
    def expr(cls, text: str, d: int) -> "ScalarField":
        code = _compile_expr(text, d)

        def fn(x):
            env = {f"x{k + 1}": x[..., k] for k in range(d)}
            env.update(_EXPR_FUNCS)
            env["pi"] = math.pi
            out = eval(code, {"__builtins__": {}}, env)
            return np.broadcast_to(np.asarray(out, dtype=float), x.shape[:-1])

        return cls("expr", {"kind": "expr", "expr": text}, d, fn)

    @classmethod
    def from_spec(cls, spec, d: int) -> "ScalarField":
        """Build from a number or a ``{"kind": ...}`` mapping."""
        if isinstance(spec, (int, float)) and not isinstance(spec, bool):
            return cls.const(spec, d)
        if isinstance(spec, ScalarField):
            return spec
        kind = spec.get("kind")
        if kind == "const":
            return cls.const(spec["value"], d)
        if kind == "affine":
            return cls.affine(spec.get("intercept", 0.0), spec["slope"], d)
        if kind == "expr":
            return cls.expr(spec["expr"], d)
        raise ValueError(f"unknown field kind {kind!r}")


# ---------------------------------------------------------------- networks


@dataclass
class BranchingNetwork:
    """Vertices ``1..d``, catalytic edges and coefficient fields."""

    d: int
    edges: list
    gamma: list
    b: list

    def __post_init__(self):
        self.edges = [tuple(int(v) for v in e) for e in self.edges]
        self.gamma = [ScalarField.from_spec(g, self.d) for g in self.gamma]
        self.b = [ScalarField.from_spec(v, self.d) for v in self.b]
        if len(self.gamma) != self.d or len(self.b) != self.d:
            raise ValueError("gamma and b need one field per vertex")

    # 0-based views of the graph (valid networks only)

    @property
    def catalysts(self) -> set:
        """Vertices (0-based) that catalyse some other vertex."""
        return {i - 1 for i, _ in self.edges}

    @property
    def reactants(self) -> set:
        """Vertices (0-based) that have a catalyst."""
        return {j - 1 for _, j in self.edges}

    @property
    def catalyst_of(self) -> dict:
        """Map reactant -> its catalyst (0-based)."""
        return {j - 1: i - 1 for i, j in self.edges}

    @property
    def reactants_of(self) -> dict:
        """Map catalyst -> sorted list of its reactants (0-based)."""
        out: dict = {}
        for i, j in self.edges:
            out.setdefault(i - 1, []).append(j - 1)
        return {k: sorted(v) for k, v in out.items()}

    def gamma_at(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.stack([g(x) for g in self.gamma], axis=-1)

    def b_at(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.stack([v(x) for v in self.b], axis=-1)

    def diffusion_at(self, x) -> np.ndarray:
        """Diffusion coefficient ``gamma_j(x) x_{c_j} x_j`` (or ``gamma_j x_j``) per coordinate."""
        x = np.asarray(x, dtype=float)
        g = self.gamma_at(x)
        factor = x.copy()
        for j, i in self.catalyst_of.items():
            factor[..., j] = x[..., i] * x[..., j]
        return g * factor

    def to_dict(self) -> dict:
        return {
            "d": self.d,
            "edges": [list(e) for e in self.edges],
            "gamma": [g.to_dict() for g in self.gamma],
            "b": [v.to_dict() for v in self.b],
        }


@dataclass(frozen=True, order=True)
class Violation:
    """One broken structural clause, e.g. a self-loop or a doubly catalysed vertex."""

    clause: str
    detail: str
    edges: tuple = ()


@dataclass
class ValidationReport:
    violations: list

    @property
    def valid(self) -> bool:
        return not self.violations


def validate_network(net: BranchingNetwork) -> ValidationReport:
    """Check the graph clauses: no self-loops and at most one catalyst per vertex."""
    out = []
    seen: dict = {}
    for e in net.edges:
        i, j = e
        if not (1 <= i <= net.d and 1 <= j <= net.d):
            out.append(Violation("vertex_range", f"edge {e} references a vertex outside 1..{net.d}", (e,)))
            continue
        if i == j:
            out.append(Violation("self_loop", f"vertex {i} catalyses itself", (e,)))
        seen.setdefault(j, []).append(e)
    for j, es in seen.items():
        if len(set(es)) < len(es):
            out.append(Violation("duplicate_edge", f"edge into {j} listed more than once", tuple(sorted(es))))
        if len(set(es)) > 1:
            out.append(Violation("multiple_catalysts", f"vertex {j} has {len(set(es))} catalysts",
                                 tuple(sorted(set(es)))))
    return ValidationReport(sorted(out))


@dataclass
class CoefficientReport:
    """Pointwise coefficient checks on a sample grid.

    ``growth_constant`` is the fitted ``c`` in ``|b_i(x)| <= c (1 + |x|)``.
    """

    violations: list
    growth_constant: float
    n_points: int

    @property
    def ok(self) -> bool:
        return not self.violations


def check_coefficients(net: BranchingNetwork, grid) -> CoefficientReport:
    """Check positivity of ``gamma``, inward drift on faces, and fit the growth constant."""
    pts = np.asarray(grid, dtype=float)
    if pts.ndim != 2 or pts.shape[0] == 0:
        raise ValueError("no samples in coefficient grid")
    if pts.shape[1] != net.d:
        raise ValueError(f"grid points must have {net.d} coordinates")
    g, bb = net.gamma_at(pts), net.b_at(pts)
    out = []
    bad = np.argwhere(~(g > 0))
    for r, j in bad[:20]:
        out.append(Violation("gamma_positive", f"gamma_{j + 1}={g[r, j]:.6g} at x={pts[r].tolist()}"))
    face = (pts == 0) & ~(bb > 0)
    for r, j in np.argwhere(face)[:20]:
        out.append(Violation("inward_drift", f"b_{j + 1}={bb[r, j]:.6g} <= 0 on face x_{j + 1}=0 at x={pts[r].tolist()}"))
    norms = 1.0 + np.linalg.norm(pts, axis=1)
    growth = float(np.max(np.abs(bb) / norms[:, None]))
    if not math.isfinite(growth):
        out.append(Violation("linear_growth", "drift is not finite on the grid"))
    return CoefficientReport(sorted(out), growth, pts.shape[0])


def in_state_space(net: BranchingNetwork, x) -> bool:
    """``x >= 0`` and ``x_i + x_j > 0`` on every edge."""
    x = np.asarray(x, dtype=float)
    if x.shape != (net.d,):
        raise ValueError(f"state must have {net.d} coordinates")
    if np.any(x < 0) or not np.all(np.isfinite(x)):
        return False
    return all(x[i - 1] + x[j - 1] > 0 for i, j in net.edges)


# ---------------------------------------------------------------- generator


def _fd_derivatives(f, x: np.ndarray, h1: float = 1e-5, h2: float = 1e-4):
    """Central differences: gradient with step ``h1(1+|x|)``, Hessian diagonal with ``h2(1+|x|)``."""
    d = x.size
    scale = 1.0 + np.linalg.norm(x)
    s1, s2 = h1 * scale, h2 * scale
    f0 = float(f(x))
    grad, hess = np.empty(d), np.empty(d)
    for j in range(d):
        e = np.zeros(d)
        e[j] = s1
        grad[j] = (float(f(x + e)) - float(f(x - e))) / (2 * s1)
        e[j] = s2
        hess[j] = (float(f(x + e)) - 2 * f0 + float(f(x - e))) / (s2 * s2)
    return grad, hess


def derivatives_of(f, x):
    """Gradient and Hessian diagonal of ``f`` at ``x``: analytic when available, else finite differences."""
    x = np.asarray(x, dtype=float)
    if hasattr(f, "grad") and hasattr(f, "hess_diag"):
        return np.asarray(f.grad(x), dtype=float), np.asarray(f.hess_diag(x), dtype=float)
    return _fd_derivatives(f, x)


def apply_generator(net: BranchingNetwork, f, x) -> float:
    """``A f(x) = sum_j gamma_j x_{c_j} x_j f_jj + sum_j gamma_j x_j f_jj + sum_j b_j f_j``.

    Reactants carry the catalyst factor, other vertices do not.  ``f`` is
    either a registered test function (exposing ``grad``/``hess_diag``) or
    a plain callable, in which case central differences are used.
    """
    x = np.asarray(x, dtype=float)
    if x.shape != (net.d,):
        raise ValueError(f"state must have {net.d} coordinates")
    grad, hess = derivatives_of(f, x)
    return float(np.dot(net.diffusion_at(x), hess) + np.dot(net.b_at(x), grad))


# ---------------------------------------------------------------- localisation


@dataclass
class LocalModel:
    """Constant-coefficient model frozen at ``x0``.

    Index sets are 0-based: ``Z`` zero coordinates, ``N1`` reactants of
    zero catalysts, ``N2`` the rest outside ``N1 u (Z n C)``.  ``gamma0``
    and ``b0`` are the frozen coefficients, ``floored`` marks drifts that
    were raised to the floor ``delta/2``.  Coordinates in ``N1`` diffuse
    as Gaussians with variance rate ``2 gamma0_j x_{c_j}``; all other
    coordinates are independent-coefficient CIR diffusions.
    """

    x0: np.ndarray
    Z: frozenset
    ZC: frozenset
    N1: frozenset
    N2: frozenset
    gamma0: np.ndarray
    b0: np.ndarray
    delta: float | None
    floored: tuple
    M0: float
    catalyst_of: dict
    edges: tuple

    @property
    def d(self) -> int:
        return self.x0.size

    @property
    def mu_exponents(self) -> np.ndarray:
        """Per-coordinate power ``b0_j/gamma0_j - 1`` of the reference measure (0 on ``N1``, i.e. Lebesgue)."""
        out = self.b0 / self.gamma0 - 1.0
        for j in self.N1:
            out[j] = 0.0
        return out

    def in_S0(self, x) -> bool:
        """``x_j >= 0`` for every ``j`` outside ``N1``."""
        x = np.asarray(x, dtype=float)
        return all(x[j] >= 0 for j in range(self.d) if j not in self.N1)

    def diffusion_at(self, x) -> np.ndarray:
        """Coefficient of ``f_jj`` in the frozen generator."""
        x = np.asarray(x, dtype=float)
        out = self.gamma0 * x
        for j in self.N1:
            out[..., j] = self.gamma0[j] * x[..., self.catalyst_of[j]]
        return out

    def apply_generator(self, f, x) -> float:
        x = np.asarray(x, dtype=float)
        grad, hess = derivatives_of(f, x)
        return float(np.dot(self.diffusion_at(x), hess) + np.dot(self.b0, grad))

    def blocks(self) -> list:
        """Independent blocks: ``('mixed', catalyst, reactants)`` and ``('cir', j)``."""
        out = []
        by_cat: dict = {}
        for j in self.N1:
            by_cat.setdefault(self.catalyst_of[j], []).append(j)
        for i in sorted(self.ZC):
            out.append(("mixed", i, tuple(sorted(by_cat.get(i, [])))))
        for j in sorted(self.N2):
            out.append(("cir", j, ()))
        return out


def partition(net: BranchingNetwork, x0) -> tuple:
    """Index sets ``(Z, Z n C, N1, N2)`` at ``x0`` (0-based frozensets)."""
    x0 = np.asarray(x0, dtype=float)
    Z = frozenset(int(i) for i in np.flatnonzero(x0 == 0))
    ZC = Z & net.catalysts
    rof = net.reactants_of
    N1 = frozenset(j for i in ZC for j in rof.get(i, []))
    N2 = frozenset(range(net.d)) - N1 - ZC
    return Z, ZC, N1, N2


def localize(net: BranchingNetwork, x0, empty_floor: float | None = None) -> LocalModel:
    """Freeze the generator at ``x0`` in the state space.

    ``gamma0_j = x_j gamma_j`` on ``N1``; ``x_{c_j} gamma_j`` for
    reactants in ``(Z n C) u N2``; ``gamma_j`` otherwise.  Drifts outside
    ``N1`` are floored at ``delta/2`` with ``delta = min_{i in Z} b_i(x0)``.
    When no coordinate vanishes ``delta`` is undefined; the floor is then
    ``empty_floor/2`` if given, else no floor is applied.
    """
    x0 = np.asarray(x0, dtype=float)
    rep = validate_network(net)
    if not rep.valid:
        raise ValueError(f"invalid network: {rep.violations[0].detail}")
    if not in_state_space(net, x0):
        raise ValueError(f"point {x0.tolist()} is outside the state space")
    Z, ZC, N1, N2 = partition(net, x0)
    g, bb = net.gamma_at(x0), net.b_at(x0)
    cat = net.catalyst_of
    gamma0 = np.empty(net.d)
    for j in range(net.d):
        if j in N1:
            gamma0[j] = x0[j] * g[j]
        elif j in cat:
            gamma0[j] = x0[cat[j]] * g[j]
        else:
            gamma0[j] = g[j]
    if Z:
        delta = float(min(bb[i] for i in Z))
    else:
        delta = None if empty_floor is None else float(empty_floor)
    b0 = bb.astype(float).copy()
    floored = []
    if delta is not None:
        for j in range(net.d):
            if j not in N1 and b0[j] < delta / 2:
                b0[j] = delta / 2
                floored.append(j)
    terms = [gamma0, 1.0 / gamma0, np.abs(b0)]
    M0 = float(max(np.max(t) for t in terms))
    outside = [j for j in range(net.d) if j not in N1]
    if outside:
        M0 = max(M0, float(max(1.0 / b0[j] if b0[j] > 0 else math.inf for j in outside)))
    return LocalModel(x0=x0.copy(), Z=Z, ZC=ZC, N1=N1, N2=N2, gamma0=gamma0, b0=b0, delta=delta,
                      floored=tuple(floored), M0=M0, catalyst_of=dict(cat), edges=tuple(net.edges))


# ---------------------------------------------------------------- oscillation


@dataclass
class OscillationReport:
    """Oscillation of each ``gamma_i`` over balls centred on grid points."""

    centers: np.ndarray
    oscillation: np.ndarray  # (n_centers, d)
    flags: np.ndarray  # boolean, oscillation >= eps0
    radius: float
    eps0: float

    @property
    def max_oscillation(self) -> float:
        return float(self.oscillation.max())


def oscillation_scan(net: BranchingNetwork, region, radius: float, eps0: float,
                     resolution: int = 5, n_ball: int = 256) -> OscillationReport:
    """Scan ``sup - inf`` of ``gamma_i`` over balls of ``radius`` in ``region = (lo, hi)``.

    Balls are sampled with a Halton sequence mapped to the ball and
    restricted to the non-negative orthant.
    """
    lo, hi = (np.asarray(v, dtype=float) for v in region)
    if lo.shape != (net.d,) or hi.shape != (net.d,) or np.any(hi <= lo):
        raise ValueError("degenerate region: need lo < hi in every coordinate")
    if not radius > 0:
        raise ValueError("radius must be positive")
    axes = [np.linspace(lo[k], hi[k], resolution) for k in range(net.d)]
    centers = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, net.d)
    u = qmc.Halton(d=net.d, scramble=False).random(n_ball + 1)[1:]
    cube = 2.0 * u - 1.0
    ball = cube[np.linalg.norm(cube, axis=1) <= 1.0] * radius
    ball = np.vstack([np.zeros(net.d), ball])
    osc = np.empty((centers.shape[0], net.d))
    for r, c in enumerate(centers):
        pts = c + ball
        pts = pts[np.all(pts >= 0, axis=1)]
        g = net.gamma_at(pts)
        osc[r] = g.max(axis=0) - g.min(axis=0)
    return OscillationReport(centers=centers, oscillation=osc, flags=osc >= eps0, radius=radius, eps0=eps0)


# ---------------------------------------------------------------- presets


def hypercyclic_preset(d: int, theta, gamma=1.0) -> BranchingNetwork:
    """Cycle where vertex ``i`` is catalysed by ``i+1`` (mod d), drift ``theta_i - x_i``."""
    if d < 2:
        raise ValueError("a hypercycle needs at least two vertices")
    th = np.broadcast_to(np.asarray(theta, dtype=float), (d,))
    if np.any(th <= 0):
        raise ValueError("theta must be positive")
    edges = [((i + 1) % d + 1, i + 1) for i in range(d)]
    gam = gamma if isinstance(gamma, (list, tuple)) else [gamma] * d
    b = [ScalarField.affine(th[i], -np.eye(d)[i], d) for i in range(d)]
    return BranchingNetwork(d=d, edges=edges, gamma=list(gam), b=b)
