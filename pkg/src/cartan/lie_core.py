"""Matrix Lie groups and their Lie algebras.

Every group is a real matrix group.  Array kernels live on
:class:`MatrixLieGroup` and broadcast over leading axes; the
:class:`GroupElement` / :class:`AlgebraElement` wrappers and the module
level functions (``compose``, ``Ad``, ``exp`` ...) validate their inputs
and are what user code normally calls.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np
from scipy.special import bernoulli

CONSTRUCTION_TOL = 1e-8
PROJECTION_TOL = 1e-10
TANGENT_TOL = 1e-8

# ||X||_1 threshold below which the Pade approximant is applied directly.
SQUARING_THRESHOLD = 0.5


class LieError(ValueError):
    """Raised for invalid group or algebra data."""


class SpecMismatch(LieError):
    pass


def commutator(X, Y):
    return X @ Y - Y @ X


@lru_cache(maxsize=None)
def _dexpinv_coefficients(order: int) -> tuple:
    b = bernoulli(order)
    fact = 1.0
    out = []
    for k in range(order + 1):
        if k > 0:
            fact *= k
        out.append(float(b[k]) / fact)
    # scipy returns B1 = -1/2, the convention needed for dexp^{-1}.
    return tuple(out)


def dexpinv_series(A, Y, order: int = 4, bracket: Callable = commutator):
    """Truncated Bernoulli series ``sum_k B_k/k! ad_A^k Y``.

    Works for any algebra given its bracket; arrays broadcast.
    """
    if order < 1:
        raise LieError("dexpinv order must be >= 1")
    coeffs = _dexpinv_coefficients(order)
    term = Y
    out = Y
    for k in range(1, order + 1):
        term = bracket(A, term)
        if coeffs[k] != 0.0:
            out = out + coeffs[k] * term
    return out


# -- exponential kernels -----------------------------------------------------

def _pade_66(A):
    # [6/6] diagonal Pade coefficients of exp.
    c = (1.0, 1 / 2, 5 / 44, 1 / 66, 1 / 792, 1 / 15840, 1 / 665280)
    n = A.shape[-1]
    eye = np.broadcast_to(np.eye(n), A.shape)
    A2 = A @ A
    A4 = A2 @ A2
    A6 = A4 @ A2
    U = A @ (c[1] * eye + c[3] * A2 + c[5] * A4)
    V = c[0] * eye + c[2] * A2 + c[4] * A4 + c[6] * A6
    return np.linalg.solve(V - U, V + U)


def expm_pade(X):
    """Scaling and squaring with a [6/6] Pade approximant, batched."""
    X = np.asarray(X, dtype=float)
    norms = np.abs(X).sum(axis=-2).max(axis=-1)
    s = np.zeros(norms.shape, dtype=int)
    big = norms > SQUARING_THRESHOLD
    s[big] = np.ceil(np.log2(norms[big] / SQUARING_THRESHOLD)).astype(int)
    scaled = X / (2.0 ** s)[..., None, None]
    E = _pade_66(scaled)
    for i in range(int(s.max(initial=0))):
        sq = E @ E
        E = np.where((s > i)[..., None, None], sq, E)
    return E


def _so3_exp(X):
    w1 = X[..., 2, 1]
    w2 = X[..., 0, 2]
    w3 = X[..., 1, 0]
    theta2 = w1 * w1 + w2 * w2 + w3 * w3
    theta = np.sqrt(theta2)
    small = theta < 1e-4
    safe = np.where(small, 1.0, theta)
    a = np.where(small, 1 - theta2 / 6 + theta2 ** 2 / 120, np.sin(safe) / safe)
    b = np.where(small, 0.5 - theta2 / 24 + theta2 ** 2 / 720,
                 (1 - np.cos(safe)) / (safe * safe))
    K = 0.5 * (X - np.swapaxes(X, -1, -2))
    return np.eye(3) + a[..., None, None] * K + b[..., None, None] * (K @ K)


def _nilpotent3_exp(X):
    return np.eye(3) + X + 0.5 * (X @ X)


def _scalar_exp(X):
    return np.exp(X)


# -- constraint residuals ----------------------------------------------------

def _rotation_residual(R):
    n = R.shape[-1]
    orth = np.linalg.norm(np.swapaxes(R, -1, -2) @ R - np.eye(n), axis=(-2, -1))
    return orth + np.abs(np.linalg.det(R) - 1.0)


def _so3_residual(g):
    return _rotation_residual(g)


def _se3_residual(g):
    bottom = np.abs(g[..., 3, :] - np.array([0.0, 0.0, 0.0, 1.0])).sum(axis=-1)
    return _rotation_residual(g[..., :3, :3]) + bottom


def _sl2_residual(g):
    return np.abs(np.linalg.det(g) - 1.0)


def _heisenberg_residual(g):
    lower = np.tril(g, -1)
    diag = np.diagonal(g, axis1=-2, axis2=-1)
    return np.abs(lower).sum(axis=(-2, -1)) + np.abs(diag - 1.0).sum(axis=-1)


def _gl_residual(g):
    sv = np.linalg.svd(g, compute_uv=False)
    ok = sv[..., -1] > 1e-12 * np.maximum(sv[..., 0], 1e-300)
    return np.where(ok & np.isfinite(sv).all(axis=-1), 0.0, 1.0)


def _rplus_residual(g):
    v = g[..., 0, 0]
    return np.where(v > 0, 0.0, 1.0 + np.abs(v))


# -- the group descriptor ----------------------------------------------------

@dataclass(frozen=True, eq=False)
class MatrixLieGroup:
    """A matrix Lie group described by a basis of its Lie algebra.

    ``basis`` has shape (m, n, n).  Kernels accept arrays whose last two
    axes are n x n and broadcast over the rest.
    """

    name: str
    basis: np.ndarray
    labels: tuple
    constraint: Callable = field(repr=False)
    exp_kernel: Callable = field(repr=False, default=expm_pade)

    def __post_init__(self):
        B = np.asarray(self.basis, dtype=float)
        B.setflags(write=False)
        object.__setattr__(self, "basis", B)
        flat = B.reshape(B.shape[0], -1).T
        gram = flat.T @ flat
        if np.linalg.matrix_rank(gram) != B.shape[0]:
            raise LieError(f"{self.name}: basis is linearly dependent")
        pinv = np.linalg.solve(gram, flat.T)
        object.__setattr__(self, "_flat", flat)
        object.__setattr__(self, "_pinv", pinv)
        for i in range(len(B)):
            for j in range(len(B)):
                C = commutator(B[i], B[j])
                if np.linalg.norm(C - self.project(C)) > 1e-12:
                    raise LieError(f"{self.name}: basis not closed under bracket")

    @property
    def n(self) -> int:
        return self.basis.shape[-1]

    @property
    def dim(self) -> int:
        return self.basis.shape[0]

    def identity(self):
        return np.eye(self.n)

    def coords(self, M):
        M = np.asarray(M, dtype=float)
        vec = M.reshape(M.shape[:-2] + (-1,))
        return vec @ self._pinv.T

    def from_coords(self, c):
        return np.tensordot(np.asarray(c, dtype=float), self.basis, axes=(-1, 0))

    def project(self, M):
        return self.from_coords(self.coords(M))

    def projection_residual(self, M):
        M = np.asarray(M, dtype=float)
        return np.linalg.norm(M - self.project(M), axis=(-2, -1))

    def element(self, label: str):
        try:
            return self.basis[self.labels.index(label)]
        except ValueError:
            raise LieError(f"{self.name} has no basis element {label!r}; "
                           f"known: {', '.join(self.labels)}") from None

    # kernels
    def residual(self, g):
        return self.constraint(np.asarray(g, dtype=float))

    def mul(self, g, h):
        return g @ h

    def inv(self, g):
        if self.name in ("so3",):
            return np.swapaxes(g, -1, -2)
        return np.linalg.inv(g)

    def bracket(self, X, Y):
        return commutator(X, Y)

    def Ad(self, g, X):
        return g @ X @ self.inv(g)

    def exp(self, X):
        X = np.asarray(X, dtype=float)
        if not np.isfinite(X).all():
            raise LieError("exp of non-finite algebra element")
        return self.exp_kernel(X)

    def __reduce__(self):
        return (group, (self.name,))


def _so3_basis():
    L1 = np.array([[0, 0, 0], [0, 0, -1], [0, 1, 0]], dtype=float)
    L2 = np.array([[0, 0, 1], [0, 0, 0], [-1, 0, 0]], dtype=float)
    L3 = np.array([[0, -1, 0], [1, 0, 0], [0, 0, 0]], dtype=float)
    return np.stack([L1, L2, L3])


def _unit(n, i, j):
    E = np.zeros((n, n))
    E[i, j] = 1.0
    return E


def _build(name: str) -> MatrixLieGroup:
    if name == "so3":
        return MatrixLieGroup("so3", _so3_basis(), ("L1", "L2", "L3"),
                              _so3_residual, _so3_exp)
    if name == "se3":
        rot = np.zeros((3, 4, 4))
        rot[:, :3, :3] = _so3_basis()
        trans = np.stack([_unit(4, i, 3) for i in range(3)])
        return MatrixLieGroup("se3", np.concatenate([rot, trans]),
                              ("L1", "L2", "L3", "P1", "P2", "P3"), _se3_residual)
    if name == "sl2":
        H = np.diag([1.0, -1.0])
        return MatrixLieGroup("sl2", np.stack([H, _unit(2, 0, 1), _unit(2, 1, 0)]),
                              ("H", "E", "F"), _sl2_residual)
    if name == "heisenberg3":
        return MatrixLieGroup("heisenberg3",
                              np.stack([_unit(3, 0, 1), _unit(3, 1, 2), _unit(3, 0, 2)]),
                              ("P", "Q", "Z"), _heisenberg_residual, _nilpotent3_exp)
    if name == "rplus":
        return MatrixLieGroup("rplus", np.ones((1, 1, 1)), ("X",),
                              _rplus_residual, _scalar_exp)
    if name.startswith("gl"):
        try:
            n = int(name[2:].strip("()"))
        except ValueError:
            raise LieError(f"unknown group {name!r}") from None
        basis = np.stack([_unit(n, i, j) for i in range(n) for j in range(n)])
        labels = tuple(f"E{i + 1}{j + 1}" for i in range(n) for j in range(n))
        return MatrixLieGroup(f"gl{n}", basis, labels, _gl_residual)
    raise LieError(f"unknown group {name!r}")


@lru_cache(maxsize=None)
def group(name: str) -> MatrixLieGroup:
    """Look up a group by id: so3, se3, sl2, heisenberg3, rplus, gl<n>."""
    return _build(name)


GROUP_IDS = ("so3", "se3", "sl2", "heisenberg3", "gl3", "rplus")


# -- validated element wrappers ----------------------------------------------

@dataclass(frozen=True, eq=False)
class GroupElement:
    matrix: np.ndarray
    group: MatrixLieGroup
    tol: float = CONSTRUCTION_TOL

    def __post_init__(self):
        M = np.array(self.matrix, dtype=float)
        if M.shape != (self.group.n, self.group.n):
            raise LieError(f"expected {self.group.n}x{self.group.n} matrix, got {M.shape}")
        if not np.isfinite(M).all():
            raise LieError("group element has non-finite entries")
        res = float(self.group.residual(M))
        if res > self.tol:
            raise LieError(f"not an element of {self.group.name}: residual {res:.3g}")
        M.setflags(write=False)
        object.__setattr__(self, "matrix", M)

    @property
    def residual(self) -> float:
        return float(self.group.residual(self.matrix))

    @classmethod
    def identity(cls, G: MatrixLieGroup) -> "GroupElement":
        return cls(np.eye(G.n), G)

    def __matmul__(self, other):
        return compose(self, other)


@dataclass(frozen=True, eq=False)
class AlgebraElement:
    matrix: np.ndarray
    group: MatrixLieGroup

    def __post_init__(self):
        M = np.array(self.matrix, dtype=float)
        if M.shape != (self.group.n, self.group.n):
            raise LieError(f"expected {self.group.n}x{self.group.n} matrix, got {M.shape}")
        if not np.isfinite(M).all():
            raise LieError("algebra element has non-finite entries")
        dist = float(self.group.projection_residual(M))
        if dist > PROJECTION_TOL * (1 + np.linalg.norm(M)):
            raise LieError(f"matrix is not in the Lie algebra of {self.group.name} "
                           f"(distance {dist:.3g})")
        M.setflags(write=False)
        object.__setattr__(self, "matrix", M)

    @classmethod
    def zero(cls, G: MatrixLieGroup) -> "AlgebraElement":
        return cls(np.zeros((G.n, G.n)), G)

    @classmethod
    def from_coords(cls, G: MatrixLieGroup, c: Sequence[float]) -> "AlgebraElement":
        return cls(G.from_coords(c), G)

    @property
    def coords(self):
        return self.group.coords(self.matrix)

    def __add__(self, other):
        _same(self, other)
        return AlgebraElement(self.matrix + other.matrix, self.group)

    def __sub__(self, other):
        _same(self, other)
        return AlgebraElement(self.matrix - other.matrix, self.group)

    def __neg__(self):
        return AlgebraElement(-self.matrix, self.group)

    def __mul__(self, s: float):
        return AlgebraElement(float(s) * self.matrix, self.group)

    __rmul__ = __mul__

    def norm(self) -> float:
        return float(np.linalg.norm(self.matrix))


def _same(a, b):
    if a.group is not b.group:
        raise SpecMismatch(f"elements of different groups: {a.group.name} vs {b.group.name}")


def _algebra(G, M):
    res = float(G.projection_residual(M))
    if res > PROJECTION_TOL * (1 + np.linalg.norm(M)):
        raise LieError(f"bracket left the algebra of {G.name} (residual {res:.3g}); bad basis?")
    return AlgebraElement(G.project(M), G)


def compose(g: GroupElement, h: GroupElement) -> GroupElement:
    _same(g, h)
    tol = g.residual + h.residual + 1e-12 * max(1.0, np.linalg.norm(g.matrix) * np.linalg.norm(h.matrix))
    return GroupElement(g.matrix @ h.matrix, g.group, tol=max(tol, g.tol))


def invert(g: GroupElement) -> GroupElement:
    return GroupElement(g.group.inv(g.matrix), g.group, tol=g.tol)


def bracket(X: AlgebraElement, Y: AlgebraElement) -> AlgebraElement:
    _same(X, Y)
    return _algebra(X.group, commutator(X.matrix, Y.matrix))


def ad(X: AlgebraElement, Y: AlgebraElement) -> AlgebraElement:
    return bracket(X, Y)


def Ad(g: GroupElement, X: AlgebraElement) -> AlgebraElement:
    _same(g, X)
    return _algebra(g.group, g.group.Ad(g.matrix, X.matrix))


def exp(X: AlgebraElement) -> GroupElement:
    return GroupElement(X.group.exp(X.matrix), X.group)


def dexpinv(X: AlgebraElement, Y: AlgebraElement, order: int = 4) -> AlgebraElement:
    _same(X, Y)
    return _algebra(X.group, dexpinv_series(X.matrix, Y.matrix, order))


def _trivialize(G, M):
    M = np.asarray(M, dtype=float)
    res = float(G.projection_residual(M))
    if res > TANGENT_TOL * (1 + np.linalg.norm(M)):
        raise LieError(f"vector is not tangent to {G.name} (residual {res:.3g})")
    return AlgebraElement(G.project(M), G)


def kappa_right(g: GroupElement, v) -> AlgebraElement:
    """Right Maurer-Cartan form: ``v g^{-1}``."""
    v = np.asarray(v, dtype=float)
    if not np.isfinite(v).all():
        raise LieError("tangent vector has non-finite entries")
    return _trivialize(g.group, v @ g.group.inv(g.matrix))


def kappa_left(g: GroupElement, v) -> AlgebraElement:
    """Left Maurer-Cartan form: ``g^{-1} v``."""
    v = np.asarray(v, dtype=float)
    if not np.isfinite(v).all():
        raise LieError("tangent vector has non-finite entries")
    return _trivialize(g.group, g.group.inv(g.matrix) @ v)


def log_derivative_sampled(samples, side: str = "right"):
    """Logarithmic derivative of a sampled curve ``[(t, GroupElement), ...]``.

    Second order differences (one sided at the ends), then trivialized on
    the requested side.  Returns ``[(t, AlgebraElement), ...]``.
    """
    if len(samples) < 3:
        raise LieError("need at least 3 samples")
    if side not in ("right", "left"):
        raise LieError(f"side must be 'right' or 'left', got {side!r}")
    ts = np.array([t for t, _ in samples], dtype=float)
    if np.any(np.diff(ts) <= 0):
        raise LieError("sample times must be strictly increasing")
    G = samples[0][1].group
    gs = np.stack([g.matrix for _, g in samples])
    dg = np.gradient(gs, ts, axis=0, edge_order=2)
    ginv = G.inv(gs)
    raw = dg @ ginv if side == "right" else ginv @ dg
    proj = G.project(raw)
    return [(float(t), AlgebraElement(M, G)) for t, M in zip(ts, proj)]
