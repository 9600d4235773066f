"""Evolution operators and Cartan development.

One dimensional right evolution solves ``g' = X(t) g, g(0) = e``; left
evolution solves ``g' = g X(t)``.  The default integrator is a 4th order
Runge-Kutta-Munthe-Kaas scheme; ``rk4_ambient`` runs classical RK4 on the
matrix ODE without any projection and is kept as a reference point.

Development of a flat form integrates along the radial segments
``t -> t x`` of the star shaped box.
"""
from __future__ import annotations

import math
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, Iterator, NamedTuple, Optional, Sequence

import numpy as np
import scipy.linalg

from . import lie_core
from .forms import Domain, FunctionForm, OneForm, DomainError, is_flat
from .lie_core import (AlgebraElement, GroupElement, LieError, MatrixLieGroup,
                       commutator, dexpinv_series)

INTEGRATORS = ("rkmk4", "rk4_ambient")
# Fixed chunk size keeps per-point arithmetic independent of the thread count.
CHUNK = 2048


class NonFlatWarning(UserWarning):
    pass


@dataclass(frozen=True)
class EvolConfig:
    integrator: str = "rkmk4"
    steps: int = 256
    dexpinv_order: int = 4

    def __post_init__(self):
        if self.integrator == "rk4":
            object.__setattr__(self, "integrator", "rk4_ambient")
        if self.integrator not in INTEGRATORS:
            raise LieError(f"unknown integrator {self.integrator!r}")
        if int(self.steps) < 1:
            raise LieError("steps must be >= 1")
        if int(self.dexpinv_order) < 1:
            raise LieError("dexpinv_order must be >= 1")

    def with_steps(self, steps: int) -> "EvolConfig":
        return EvolConfig(self.integrator, steps, self.dexpinv_order)


class LieOps(NamedTuple):
    """What the integrator needs to know about a group."""

    exp: Callable
    bracket: Callable
    mul: Callable
    identity: Callable  # batch shape -> identity element
    matrix: bool = True


def matrix_ops(G: MatrixLieGroup) -> LieOps:
    def identity(shape):
        return np.broadcast_to(np.eye(G.n), tuple(shape) + (G.n, G.n)).copy()
    return LieOps(G.exp, commutator, np.matmul, identity, True)


def _rkmk4_step(ops, g, X0, Xm, X1, h, order, side):
    if side == "right":
        br = ops.bracket
    else:
        def br(A, Y):
            return -ops.bracket(A, Y)
    k1 = h * X0
    k2 = h * dexpinv_series(k1 / 2, Xm, order, br)
    k3 = h * dexpinv_series(k2 / 2, Xm, order, br)
    k4 = h * dexpinv_series(k3, X1, order, br)
    omega = (k1 + 2 * k2 + 2 * k3 + k4) / 6
    E = ops.exp(omega)
    return ops.mul(E, g) if side == "right" else ops.mul(g, E)


def _rk4_step(g, X0, Xm, X1, h, side):
    def f(X, y):
        return X @ y if side == "right" else y @ X
    k1 = f(X0, g)
    k2 = f(Xm, g + h / 2 * k1)
    k3 = f(Xm, g + h / 2 * k2)
    k4 = f(X1, g + h * k3)
    return g + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)


def march(ops: LieOps, nodes: Iterator, hs: Sequence[float], g0, cfg: EvolConfig,
          side: str = "right") -> Iterator:
    """Step through ``hs``; ``nodes`` yields X at t, t+h/2, t+h, t+h+h'/2, ...

    Yields the group element after every step.
    """
    if cfg.integrator == "rk4_ambient" and not ops.matrix:
        raise LieError("rk4_ambient is only defined for matrix groups")
    g = g0
    X0 = next(nodes)
    for h in hs:
        Xm = next(nodes)
        X1 = next(nodes)
        if cfg.integrator == "rkmk4":
            g = _rkmk4_step(ops, g, X0, Xm, X1, h, cfg.dexpinv_order, side)
        else:
            g = _rk4_step(g, X0, Xm, X1, h, side)
        yield g
        X0 = X1


def node_times(T: float, steps: int):
    return np.arange(2 * steps + 1) * (T / (2 * steps))


# -- one dimensional evolution -----------------------------------------------

@dataclass
class AlgebraCurve:
    """``t -> X(t)`` as a callable returning an n x n array."""

    group: MatrixLieGroup
    value: Callable

    def __call__(self, t):
        X = np.asarray(self.value(float(t)), dtype=float)
        if not np.isfinite(X).all():
            raise LieError(f"non-finite curve value at t={t}")
        return X

    def __neg__(self):
        return AlgebraCurve(self.group, lambda t: -self(t))

    def __add__(self, other):
        return AlgebraCurve(self.group, lambda t: self(t) + other(t))

    def scaled(self, s: float) -> "AlgebraCurve":
        return AlgebraCurve(self.group, lambda t: s * self(t))

    @classmethod
    def constant(cls, A) -> "AlgebraCurve":
        if isinstance(A, AlgebraElement):
            M, G = A.matrix, A.group
            return cls(G, lambda t: M)
        raise TypeError("constant curve needs an AlgebraElement")


def _curve_nodes(X: AlgebraCurve, T, steps):
    for t in node_times(T, steps):
        yield X(t)


def _evolve(X: AlgebraCurve, T, cfg, side):
    G = X.group
    hs = [T / cfg.steps] * cfg.steps
    out = [np.eye(G.n)]
    out.extend(march(matrix_ops(G), _curve_nodes(X, T, cfg.steps), hs, np.eye(G.n), cfg, side))
    return np.stack(out)


def Evol_right(X: AlgebraCurve, T: float = 1.0, cfg: EvolConfig = EvolConfig()):
    """Sampled right evolution: times and matrices at the N+1 step nodes."""
    return np.linspace(0.0, T, cfg.steps + 1), _evolve(X, T, cfg, "right")


def evol_right(X: AlgebraCurve, T: float = 1.0, cfg: EvolConfig = EvolConfig()) -> GroupElement:
    g = _evolve(X, T, cfg, "right")[-1]
    return GroupElement(g, X.group, tol=_result_tol(cfg))


def Evol_left(X: AlgebraCurve, T: float = 1.0, cfg: EvolConfig = EvolConfig()):
    return np.linspace(0.0, T, cfg.steps + 1), _evolve(X, T, cfg, "left")


def evol_left(X: AlgebraCurve, T: float = 1.0, cfg: EvolConfig = EvolConfig()) -> GroupElement:
    g = _evolve(X, T, cfg, "left")[-1]
    return GroupElement(g, X.group, tol=_result_tol(cfg))


def evol_left_via_right(X: AlgebraCurve, T: float = 1.0, cfg: EvolConfig = EvolConfig()) -> GroupElement:
    return lie_core.invert(evol_right(-X, T, cfg))


def _result_tol(cfg):
    # the ambient integrator is allowed to drift off the group
    return 1e-2 if cfg.integrator == "rk4_ambient" else lie_core.CONSTRUCTION_TOL


def reparam_rhs(X: AlgebraCurve, f: Callable, fprime: Callable) -> AlgebraCurve:
    """``t -> f'(t) X(f(t))``."""
    return AlgebraCurve(X.group, lambda t: fprime(t) * X(f(t)))


def reparam_law_residual(X: AlgebraCurve, f, fprime, t: float, cfg: EvolConfig) -> float:
    """Deviation in ``Evol(X)(f(t)) = Evol(f'.(X o f))(t) . Evol(X)(f(0))``."""
    G = X.group

    def endpoint(curve, T):
        if T == 0:
            return np.eye(G.n)
        return _evolve(curve, T, cfg, "right")[-1]

    lhs = endpoint(X, f(t))
    rhs = endpoint(reparam_rhs(X, f, fprime), t) @ endpoint(X, f(0.0))
    return float(np.linalg.norm(lhs - rhs))


# -- development -------------------------------------------------------------

def _threads():
    try:
        return max(1, int(os.environ.get("CARTAN_THREADS", "1")))
    except ValueError:
        return 1


def _chunked(fn, points):
    """Apply ``fn`` to fixed size chunks of points, possibly in threads."""
    P = len(points)
    if P == 0:
        return None
    chunks = [points[i:i + CHUNK] for i in range(0, P, CHUNK)]
    n = _threads()
    if n > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=n) as pool:
            parts = list(pool.map(fn, chunks))
    else:
        parts = [fn(c) for c in chunks]
    return np.concatenate(parts)


def _ray_nodes(xi: OneForm, xs, times):
    for comps in xi.ray(xs, times):
        yield np.einsum("...i,...ijk->...jk", xs, comps)


def develop_points(xi: OneForm, xs, cfg: EvolConfig = EvolConfig(), ops: Optional[LieOps] = None):
    """Raw development at points ``xs`` (P, d) -> (P, n, n); no checks."""
    xs = np.asarray(xs, dtype=float)
    ops = ops or matrix_ops(xi.group)
    N = cfg.steps
    hs = [1.0 / N] * N
    times = node_times(1.0, N)
    g = ops.identity(xs.shape[:-1])
    for g in march(ops, _ray_nodes(xi, xs, times), hs, g, cfg):
        pass
    return g


def ray_transport(xi: OneForm, xs, times, steps: int, cfg: EvolConfig = EvolConfig()):
    """Yield the development of ``xi`` at ``t * xs`` for ascending ``times``.

    The ray from 0 is integrated once; between consecutive requested times
    it takes ``ceil(dt * steps)`` RKMK steps.
    """
    xs = np.asarray(xs, dtype=float)
    times = np.asarray(times, dtype=float)
    if np.any(np.diff(times) < 0) or (len(times) and times[0] < 0):
        raise LieError("ray times must be ascending and non-negative")
    G = xi.group
    node_ts = [0.0]
    hs = []
    ends = []
    prev = 0.0
    for t in times:
        dt = t - prev
        m = 0 if dt == 0 else max(1, math.ceil(dt * steps - 1e-9))
        for k in range(m):
            a = prev + dt * k / m
            b = prev + dt * (k + 1) / m if k + 1 < m else t
            node_ts.extend([a + (b - a) / 2, b])
            hs.append(b - a)
        ends.append(len(hs))
        prev = t
    g = np.broadcast_to(np.eye(G.n), xs.shape[:-1] + (G.n, G.n)).copy()
    steps_iter = march(matrix_ops(G), _ray_nodes(xi, xs, node_ts), hs, g, cfg)
    done = 0
    for end in ends:
        while done < end:
            g = next(steps_iter)
            done += 1
        yield g


def develop_at(xi: OneForm, xs, cfg: EvolConfig = EvolConfig()):
    """Development at arbitrary points, chunked; returns (P, n, n)."""
    xs = np.asarray(xs, dtype=float)
    flat = xs.reshape(-1, xs.shape[-1])
    out = _chunked(lambda c: develop_points(xi, c, cfg), flat)
    if out is None:
        return np.zeros(xs.shape[:-1] + (xi.group.n, xi.group.n))
    return out.reshape(xs.shape[:-1] + out.shape[-2:])


@dataclass
class DevelopedMap:
    points: np.ndarray
    values: np.ndarray
    group: MatrixLieGroup
    residuals: np.ndarray
    basepoint_error: float
    cfg: EvolConfig

    @property
    def max_constraint_residual(self) -> float:
        return float(np.max(self.residuals, initial=0.0))

    def diagnostics(self) -> dict:
        return {"basepoint_error": self.basepoint_error,
                "max_constraint_residual": self.max_constraint_residual}

    def element(self, k: int) -> GroupElement:
        return GroupElement(self.values[k], self.group, tol=_result_tol(self.cfg))


def check_flat_or_warn(xi: OneForm, tol: float = 1e-4):
    if xi.flat_certificate is not None:
        return True
    rep = is_flat(xi, 5, tol)
    if rep.flat:
        xi.flat_certificate = rep.max_residual
        return True
    warnings.warn(f"developing non-flat form {xi.name} "
                  f"(max Maurer-Cartan residual {rep.max_residual:.3g})", NonFlatWarning)
    return False


def develop(xi: OneForm, points, cfg: EvolConfig = EvolConfig(), check: bool = True) -> DevelopedMap:
    """Cartan development of ``xi`` evaluated on ``points`` (P, d)."""
    pts = xi.domain.check(np.asarray(points, dtype=float).reshape(-1, xi.domain.dim))
    if check:
        check_flat_or_warn(xi)
    values = develop_at(xi, pts, cfg)
    if not np.isfinite(values).all():
        raise LieError("development produced non-finite values")
    G = xi.group
    base = develop_points(xi, np.zeros((1, xi.domain.dim)), cfg)[0]
    residuals = G.residual(values) if len(values) else np.zeros(0)
    return DevelopedMap(pts, values, G, np.asarray(residuals, dtype=float),
                        float(np.linalg.norm(base - np.eye(G.n))), cfg)


# -- transport along paths ---------------------------------------------------

@dataclass
class PathCurve:
    """A path in the domain: a polyline, or a C^1 curve on [0, 1].

    For a polyline each segment is integrated with ``cfg.steps`` steps.
    """

    vertices: Optional[np.ndarray] = None
    c: Optional[Callable] = None
    dc: Optional[Callable] = None
    breaks: tuple = (0.0, 1.0)

    @classmethod
    def polyline(cls, points) -> "PathCurve":
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if len(pts) < 2:
            raise LieError("a polyline needs at least two vertices")
        return cls(vertices=pts)

    @classmethod
    def radial(cls, x) -> "PathCurve":
        x = np.asarray(x, dtype=float)
        return cls.polyline([np.zeros_like(x), x])

    @classmethod
    def axis_parallel(cls, x) -> "PathCurve":
        x = np.asarray(x, dtype=float)
        pts = [np.zeros_like(x)]
        for i in range(len(x)):
            p = pts[-1].copy()
            p[i] = x[i]
            pts.append(p)
        return cls.polyline(pts)

    @classmethod
    def smooth(cls, c, dc, breaks=(0.0, 1.0)) -> "PathCurve":
        return cls(c=c, dc=dc, breaks=tuple(breaks))

    @property
    def start(self):
        return self.vertices[0] if self.vertices is not None else np.asarray(self.c(self.breaks[0]), float)

    @property
    def end(self):
        return self.vertices[-1] if self.vertices is not None else np.asarray(self.c(self.breaks[-1]), float)


def develop_polylines(xi: OneForm, vertices, cfg: EvolConfig = EvolConfig()):
    """Transport along a batch of polylines ``vertices`` (P, K, d) -> (P, n, n)."""
    V = np.asarray(vertices, dtype=float)
    xi.domain.check(V)
    G = xi.group
    ops = matrix_ops(G)
    N = cfg.steps
    hs = [1.0 / N] * N
    times = node_times(1.0, N)
    total = ops.identity(V.shape[:1])
    for k in range(V.shape[1] - 1):
        p0, p1 = V[:, k], V[:, k + 1]
        delta = p1 - p0

        def nodes():
            for t in times:
                yield np.einsum("...i,...ijk->...jk", delta, xi(p0 + t * delta))

        g = ops.identity(V.shape[:1])
        for g in march(ops, nodes(), hs, g, cfg):
            pass
        total = g @ total
    return total


def develop_path(xi: OneForm, path: PathCurve, cfg: EvolConfig = EvolConfig()) -> GroupElement:
    """Parallel transport of ``e`` along ``path`` (relative to its start)."""
    G = xi.group
    if path.vertices is not None:
        g = develop_polylines(xi, path.vertices[None], cfg)[0]
        return GroupElement(g, G, tol=_result_tol(cfg))
    ops = matrix_ops(G)
    N = cfg.steps
    total = np.eye(G.n)
    for a, b in zip(path.breaks[:-1], path.breaks[1:]):
        ts = a + node_times(1.0, N) * (b - a)
        pts = np.array([path.c(t) for t in ts], dtype=float)
        try:
            xi.domain.check(pts)
        except DomainError:
            raise DomainError("path leaves the domain") from None
        vel = np.array([path.dc(t) for t in ts], dtype=float)
        comps = xi(pts)
        Xs = np.einsum("ti,tijk->tjk", vel, comps)
        g = np.eye(G.n)
        for g in march(ops, iter(Xs), [(b - a) / N] * N, g, cfg):
            pass
        total = g @ total
    return GroupElement(total, G, tol=_result_tol(cfg))


def square_loop(eps: float, corner=None, axes=(0, 1), dim: int = 2) -> PathCurve:
    c = np.zeros(dim) if corner is None else np.asarray(corner, dtype=float)
    i, j = axes
    e_i = np.zeros(dim)
    e_i[i] = eps
    e_j = np.zeros(dim)
    e_j[j] = eps
    return PathCurve.polyline([c, c + e_i, c + e_i + e_j, c + e_j, c])


def holonomy(xi: OneForm, loop: PathCurve, cfg: EvolConfig = EvolConfig()) -> GroupElement:
    if np.linalg.norm(loop.end - loop.start) > 1e-9:
        raise LieError("holonomy needs a closed loop")
    return develop_path(xi, loop, cfg)


def log_norm(g) -> float:
    """Frobenius norm of the principal logarithm."""
    L = scipy.linalg.logm(np.asarray(g, dtype=float))
    return float(np.linalg.norm(np.real(L)))


def holonomy_scaling(xi: OneForm, eps_values=(0.2, 0.1, 0.05, 0.025),
                     cfg: EvolConfig = EvolConfig()):
    """Log-holonomy norms of square loops and the fitted log-log slope."""
    d = xi.domain.dim
    norms = [log_norm(holonomy(xi, square_loop(e, dim=d), cfg).matrix) for e in eps_values]
    if min(norms) <= 0:
        return norms, float("nan")
    slope = np.polyfit(np.log(eps_values), np.log(norms), 1)[0]
    return norms, float(slope)


# -- connection form and naturality -----------------------------------------

def connection_omega(xi: OneForm, x, g: GroupElement, Y, V) -> AlgebraElement:
    """``omega(Y, V) = kappa_left(g, V) - Ad(g^{-1}) xi_x(Y)``."""
    from .forms import evaluate
    left = lie_core.kappa_left(g, V)
    return left - lie_core.Ad(lie_core.invert(g), evaluate(xi, x, Y))


HOMOMORPHISMS = ("det", "inclusion")


def pushforward(xi: OneForm, hom: str) -> OneForm:
    """``phi' o xi`` for a supported homomorphism ``phi``."""
    d = xi.domain.dim
    if hom == "det":
        H = lie_core.group("rplus")

        def func(x):
            return np.trace(xi(x), axis1=-2, axis2=-1)[..., None, None]
    elif hom == "inclusion":
        H = lie_core.group(f"gl{xi.group.n}")
        func = xi.components
    else:
        raise LieError(f"unsupported homomorphism {hom!r}; choose from {HOMOMORPHISMS}")
    return FunctionForm(H, xi.domain, func, name=f"{hom}'({xi.name})")


def apply_hom(hom: str, g):
    if hom == "det":
        return np.linalg.det(g)[..., None, None]
    if hom == "inclusion":
        return np.asarray(g)
    raise LieError(f"unsupported homomorphism {hom!r}; choose from {HOMOMORPHISMS}")


def naturality_check(xi: OneForm, hom: str, points, cfg: EvolConfig = EvolConfig()) -> float:
    """max |phi(Evol_G(xi)(x)) - Evol_H(phi' o xi)(x)| over points."""
    pts = xi.domain.check(np.asarray(points, dtype=float))
    lhs = apply_hom(hom, develop_at(xi, pts, cfg))
    rhs = develop_at(pushforward(xi, hom), pts, cfg)
    return float(np.max(np.linalg.norm(lhs - rhs, axis=(-2, -1)), initial=0.0))


def scale_pullback(xi: OneForm, lam: float) -> OneForm:
    """``h^* xi`` for ``h(y) = lam y`` on the box shrunk by ``|lam|``."""
    lam = float(lam)
    if lam == 0:
        raise LieError("scale must be non-zero")
    dom = Domain(tuple(w / max(1.0, abs(lam)) for w in xi.domain.half_widths))

    def func(y):
        return lam * xi(lam * y)
    return FunctionForm(xi.group, dom, func, name=f"scaled({xi.name})")


def reparameterization_check(xi: OneForm, lam: float, points, cfg: EvolConfig = EvolConfig()) -> float:
    """max |Evol(h^* xi)(y) - Evol(xi)(lam y)| for ``h(y) = lam y``."""
    pulled = scale_pullback(xi, lam)
    ys = pulled.domain.check(np.asarray(points, dtype=float))
    lhs = develop_at(pulled, ys, cfg)
    rhs = develop_at(xi, lam * ys, cfg)
    return float(np.max(np.linalg.norm(lhs - rhs, axis=(-2, -1)), initial=0.0))
