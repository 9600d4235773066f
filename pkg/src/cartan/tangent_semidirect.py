"""The tangent group ``TG`` as the semidirect product ``g x| G``.

Pairs are stored as arrays of shape ``(2, ..., n, n)``: index 0 is the
algebra (vector) part, index 1 the footpoint.  Right trivialization gives

    (X, g)(Y, h)      = (X + Ad(g) Y, g h)
    (X, g)^-1         = (-Ad(g^-1) X, g^-1)
    [(X1,Y1),(X2,Y2)] = ([Y1, X2] - [Y2, X1], [Y1, Y2])
    Ad(X, g)(Y, Z)    = (Ad(g) Y - [Ad(g) Z, X], Ad(g) Z)
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import simpson

from .evolution import (AlgebraCurve, EvolConfig, LieOps, _chunked, _evolve,
                        march, node_times)
from .forms import OneForm, max_linearized_residual
from .lie_core import (AlgebraElement, GroupElement, LieError, MatrixLieGroup,
                       SpecMismatch, commutator)

SD_EXP_NODES = 16


# -- array kernels -----------------------------------------------------------

def _Ad(G, g, X):
    return g @ X @ G.inv(g)


def sd_mul_arr(G, a, b):
    return np.stack([a[0] + _Ad(G, a[1], b[0]), a[1] @ b[1]])


def sd_inv_arr(G, a):
    gi = G.inv(a[1])
    return np.stack([-_Ad(G, gi, a[0]), gi])


def sd_bracket_arr(u, v):
    return np.stack([commutator(u[1], v[0]) - commutator(v[1], u[0]),
                     commutator(u[1], v[1])])


def sd_Ad_arr(G, a, v):
    AY = _Ad(G, a[1], v[0])
    AZ = _Ad(G, a[1], v[1])
    return np.stack([AY - commutator(AZ, a[0]), AZ])


def sd_exp_arr(G, v, nodes: int = SD_EXP_NODES):
    t, w = np.polynomial.legendre.leggauss(nodes)
    s, w = (t + 1) / 2, w / 2
    X, Y = v[0], v[1]
    acc = 0.0
    for sj, wj in zip(s, w):
        acc = acc + wj * _Ad(G, G.exp(sj * Y), X)
    return np.stack([acc * np.ones_like(X), G.exp(Y)])


def semidirect_ops(G: MatrixLieGroup) -> LieOps:
    def identity(shape):
        shape = tuple(shape)
        return np.stack([np.zeros(shape + (G.n, G.n)),
                         np.broadcast_to(np.eye(G.n), shape + (G.n, G.n)).copy()])
    return LieOps(lambda v: sd_exp_arr(G, v), sd_bracket_arr,
                  lambda a, b: sd_mul_arr(G, a, b), identity, False)


# -- typed elements ----------------------------------------------------------

@dataclass(frozen=True, eq=False)
class SemidirectElement:
    X: AlgebraElement
    g: GroupElement

    def __post_init__(self):
        if self.X.group is not self.g.group:
            raise SpecMismatch("components belong to different groups")

    @property
    def group(self):
        return self.g.group

    @classmethod
    def identity(cls, G):
        return cls(AlgebraElement.zero(G), GroupElement.identity(G))

    @classmethod
    def from_array(cls, G, a, tol=1e-8):
        return cls(AlgebraElement(G.project(a[0]), G), GroupElement(a[1], G, tol=tol))

    def array(self):
        return np.stack([self.X.matrix, self.g.matrix])


@dataclass(frozen=True, eq=False)
class SemidirectAlgebra:
    X1: AlgebraElement
    Y1: AlgebraElement

    def __post_init__(self):
        if self.X1.group is not self.Y1.group:
            raise SpecMismatch("components belong to different groups")

    @property
    def group(self):
        return self.X1.group

    @classmethod
    def from_array(cls, G, v):
        return cls(AlgebraElement(G.project(v[0]), G), AlgebraElement(G.project(v[1]), G))

    def array(self):
        return np.stack([self.X1.matrix, self.Y1.matrix])


def _same(*items):
    G = items[0].group
    for it in items[1:]:
        if it.group is not G:
            raise SpecMismatch("semidirect elements over different groups")
    return G


def sd_multiply(a: SemidirectElement, b: SemidirectElement) -> SemidirectElement:
    G = _same(a, b)
    return SemidirectElement.from_array(G, sd_mul_arr(G, a.array(), b.array()))


def sd_invert(a: SemidirectElement) -> SemidirectElement:
    G = a.group
    return SemidirectElement.from_array(G, sd_inv_arr(G, a.array()))


def sd_Ad(a: SemidirectElement, v: SemidirectAlgebra) -> SemidirectAlgebra:
    G = _same(a, v)
    return SemidirectAlgebra.from_array(G, sd_Ad_arr(G, a.array(), v.array()))


def sd_bracket(u: SemidirectAlgebra, v: SemidirectAlgebra) -> SemidirectAlgebra:
    G = _same(u, v)
    return SemidirectAlgebra.from_array(G, sd_bracket_arr(u.array(), v.array()))


def sd_exp(v: SemidirectAlgebra, nodes: int = SD_EXP_NODES) -> SemidirectElement:
    arr = v.array()
    if not np.isfinite(arr).all():
        raise LieError("sd_exp of non-finite element")
    out = sd_exp_arr(v.group, arr, nodes)
    if not np.isfinite(out).all():
        raise LieError("sd_exp quadrature produced non-finite values")
    return SemidirectElement.from_array(v.group, out)


# -- evolution in the semidirect group --------------------------------------

def _left_trivialized_integral(X: AlgebraCurve, Y: AlgebraCurve, cfg: EvolConfig):
    """``int_0^1 Ad(Evol(X)(s)^-1) Y(s) ds`` over the stored Evol curve."""
    G = X.group
    gs = _evolve(X, 1.0, cfg, "right")
    ts = np.linspace(0.0, 1.0, cfg.steps + 1)
    Ys = np.stack([Y(t) for t in ts])
    integrand = G.inv(gs) @ Ys @ gs
    return simpson(integrand, x=ts, axis=0), gs[-1]


@dataclass
class EvolSdResult:
    closed_form: SemidirectElement
    generic: SemidirectElement
    deviation: float


DIAGRAM_TOL = 1e-6


def evol_sd_generic(Y: AlgebraCurve, X: AlgebraCurve, cfg: EvolConfig = EvolConfig()):
    """Right evolution of the curve ``(Y, X)`` in ``g x| G`` (array result)."""
    G = X.group
    ops = semidirect_ops(G)
    nodes = (np.stack([Y(t), X(t)]) for t in node_times(1.0, cfg.steps))
    a = ops.identity(())
    for a in march(ops, nodes, [1.0 / cfg.steps] * cfg.steps, a, cfg):
        pass
    return a


def evol_sd(Y: AlgebraCurve, X: AlgebraCurve, cfg: EvolConfig = EvolConfig(),
            tol: float = DIAGRAM_TOL) -> EvolSdResult:
    """Evolution of ``(Y, X)`` computed by the closed formula and by RKMK
    directly in the semidirect group."""
    if X.group is not Y.group:
        raise SpecMismatch("curves over different groups")
    if cfg.integrator != "rkmk4":
        raise LieError("semidirect evolution needs the rkmk4 integrator")
    G = X.group
    D, g1 = _left_trivialized_integral(X, Y, cfg)
    closed = np.stack([_Ad(G, g1, D), g1])
    generic = evol_sd_generic(Y, X, cfg)
    dev = float(np.linalg.norm(closed - generic))
    if dev > tol:
        raise LieError(f"semidirect evolution routes disagree by {dev:.3g}; increase steps")
    return EvolSdResult(SemidirectElement.from_array(G, closed),
                        SemidirectElement.from_array(G, generic), dev)


def tangent_evol(X: AlgebraCurve, Y: AlgebraCurve, cfg: EvolConfig = EvolConfig()) -> AlgebraElement:
    """Left trivialized derivative of ``evol`` at ``X`` in direction ``Y``."""
    D, _ = _left_trivialized_integral(X, Y, cfg)
    return AlgebraElement(X.group.project(D), X.group)


# -- development of tangent pairs -------------------------------------------

@dataclass
class TangentMap:
    points: np.ndarray
    vectors: np.ndarray   # (P, n, n): right trivialized variation
    base: np.ndarray      # (P, n, n): development of xi

    def element(self, k, G):
        return SemidirectElement.from_array(G, np.stack([self.vectors[k], self.base[k]]))


def _pair_nodes(xi, eta, xs, times):
    for a, b in zip(eta.ray(xs, times), xi.ray(xs, times)):
        yield np.stack([np.einsum("...i,...ijk->...jk", xs, a),
                        np.einsum("...i,...ijk->...jk", xs, b)])


def _tangent_points(xi, eta, xs, cfg):
    G = xi.group
    ops = semidirect_ops(G)
    N = cfg.steps
    a = ops.identity(xs.shape[:-1])
    for a in march(ops, _pair_nodes(xi, eta, xs, node_times(1.0, N)), [1.0 / N] * N, a, cfg):
        pass
    return np.moveaxis(a, 0, 1)


def tangent_develop(xi: OneForm, eta: OneForm, points, cfg: EvolConfig = EvolConfig(),
                    tol: float = 1e-4, resolution: int = 5) -> TangentMap:
    """Develop the pair form ``(eta, xi)`` in ``g x| G`` over ``points``."""
    if cfg.integrator != "rkmk4":
        raise LieError("tangent development needs the rkmk4 integrator")
    res = max_linearized_residual(xi, eta, xi.domain.interior_grid(resolution))
    if res > tol:
        raise LieError(f"eta is not tangent at xi (linearized residual {res:.3g})")
    pts = xi.domain.check(np.asarray(points, dtype=float).reshape(-1, xi.domain.dim))
    out = _chunked(lambda c: _tangent_points(xi, eta, c, cfg), pts)
    if out is None:
        n = xi.group.n
        return TangentMap(pts, np.zeros((0, n, n)), np.zeros((0, n, n)))
    return TangentMap(pts, out[:, 0], out[:, 1])
