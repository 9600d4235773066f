"""Lie-algebra valued 1-forms on a box chart around the origin.

A form on a d-dimensional box is stored through its frame components
``xi_i(x) = xi_x(e_i)``.  Everything is vectorized: a form maps points of
shape ``(..., d)`` to components of shape ``(..., d, n, n)``.

Curvature convention used throughout: for 1-forms
``1/2 [xi, xi]_wedge (u, v) = [xi(u), xi(v)]``, so the Maurer-Cartan
residual of a form is ``d xi(e_i, e_j) - [xi_i, xi_j]`` and it vanishes on
right logarithmic derivatives ``dF F^{-1}``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterator, Optional, Sequence

import numpy as np

from .lie_core import AlgebraElement, LieError, MatrixLieGroup, commutator

FD_STEP = 1e-5


class DomainError(LieError):
    pass


@dataclass(frozen=True)
class Domain:
    """The box ``prod [-w_i, w_i]`` with base point 0."""

    half_widths: tuple

    def __post_init__(self):
        w = tuple(float(v) for v in self.half_widths)
        if not 1 <= len(w) <= 3:
            raise DomainError("domain dimension must be 1, 2 or 3")
        if any(not (v > 0 and np.isfinite(v)) for v in w):
            raise DomainError("half widths must be positive")
        object.__setattr__(self, "half_widths", w)

    @classmethod
    def box(cls, dim: int, half_width: float = 1.0) -> "Domain":
        return cls((half_width,) * dim)

    @property
    def dim(self) -> int:
        return len(self.half_widths)

    @property
    def widths(self):
        return np.array(self.half_widths)

    @property
    def fd_steps(self):
        return FD_STEP * self.widths

    def contains(self, x, margin=0.0):
        x = np.asarray(x, dtype=float)
        return np.all(np.abs(x) <= self.widths - margin + 1e-12 * self.widths, axis=-1)

    def check(self, x, margin=0.0):
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.dim:
            raise DomainError(f"points must have {self.dim} coordinates, got shape {x.shape}")
        if not np.all(self.contains(x, margin)):
            if np.any(margin):
                raise DomainError("point too close to the domain boundary for finite differences")
            raise DomainError("point outside the domain")
        return x

    def grid(self, resolution, margin=0.0):
        """Tensor grid, ``resolution`` points per axis, as an array (P, d)."""
        res = np.broadcast_to(np.asarray(resolution, dtype=int), (self.dim,))
        axes = [np.linspace(-w + margin_i, w - margin_i, r)
                for w, margin_i, r in zip(self.half_widths,
                                          np.broadcast_to(margin, (self.dim,)), res)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    def interior_grid(self, resolution):
        return self.grid(resolution, margin=2 * self.fd_steps)


# -- forms -------------------------------------------------------------------

class OneForm:
    """Base class.  Subclasses implement :meth:`components`.

    ``partials(x)``, when available, returns ``(..., d, d, n, n)`` with
    entry ``[..., j, i]`` equal to the partial derivative d_j xi_i.
    """

    group: MatrixLieGroup
    domain: Domain
    name: str = "form"
    params: tuple = ()
    flat_certificate: Optional[float] = None

    def components(self, x):
        raise NotImplementedError

    def __call__(self, x):
        return self.components(x)

    partials: Optional[Callable] = None

    def ray(self, xs, times) -> Iterator[np.ndarray]:
        """Components at ``t * xs`` for each ``t`` in ``times`` (ascending)."""
        xs = np.asarray(xs, dtype=float)
        for t in times:
            yield self.components(t * xs)

    def along_ray(self, xs, times) -> np.ndarray:
        """Stacked components at ``t * xs``, shape ``(len(times), ...)``."""
        xs = np.asarray(xs, dtype=float)
        ts = np.asarray(times, dtype=float).reshape((-1,) + (1,) * xs.ndim)
        return self.components(ts * xs)

    def __add__(self, other: "OneForm") -> "OneForm":
        return SumForm((self, other), (1.0, 1.0))

    def __sub__(self, other: "OneForm") -> "OneForm":
        return SumForm((self, other), (1.0, -1.0))

    def __rmul__(self, s: float) -> "OneForm":
        return SumForm((self,), (float(s),))

    def __neg__(self):
        return SumForm((self,), (-1.0,))

    def __repr__(self):
        return f"<{type(self).__name__} {self.name} on {self.group.name}, d={self.domain.dim}>"


class FunctionForm(OneForm):
    def __init__(self, group, domain, func, partials=None, name="form", params=()):
        self.group = group
        self.domain = domain
        self._func = func
        self.partials = partials
        self.name = name
        self.params = tuple(params)

    def components(self, x):
        x = np.asarray(x, dtype=float)
        return np.asarray(self._func(x), dtype=float)


class SumForm(OneForm):
    def __init__(self, terms: Sequence[OneForm], weights: Sequence[float]):
        first = terms[0]
        for t in terms[1:]:
            if t.group is not first.group or t.domain != first.domain:
                raise LieError("forms live on different groups or domains")
        self.group = first.group
        self.domain = first.domain
        self.terms = tuple(terms)
        self.weights = tuple(weights)
        self.name = "+".join(t.name for t in terms)
        if all(t.partials is not None for t in terms):
            self.partials = lambda x: sum(w * t.partials(x) for w, t in zip(self.weights, self.terms))

    def components(self, x):
        return sum(w * t.components(x) for w, t in zip(self.weights, self.terms))

    def ray(self, xs, times):
        times = np.asarray(times, dtype=float)
        for parts in zip(*(t.ray(xs, times) for t in self.terms)):
            yield sum(w * p for w, p in zip(self.weights, parts))


def zero_form(group: MatrixLieGroup, domain: Domain) -> OneForm:
    n, d = group.n, domain.dim

    def func(x):
        return np.zeros(x.shape[:-1] + (d, n, n))

    def partials(x):
        return np.zeros(x.shape[:-1] + (d, d, n, n))

    form = FunctionForm(group, domain, func, partials, name="zero")
    form.flat_certificate = 0.0
    return form


def constant_form(group: MatrixLieGroup, domain: Domain, mats: Sequence) -> OneForm:
    """``sum_i A_i dx^i`` with constant algebra elements."""
    A = np.stack([np.asarray(m, dtype=float) for m in mats])
    if A.shape[0] != domain.dim:
        raise LieError(f"need {domain.dim} constant components, got {A.shape[0]}")
    n, d = group.n, domain.dim

    def func(x):
        return np.broadcast_to(A, x.shape[:-1] + A.shape).copy()

    def partials(x):
        return np.zeros(x.shape[:-1] + (d, d, n, n))

    return FunctionForm(group, domain, func, partials, name="const")


@dataclass
class GFunction:
    """An algebra valued function; ``partials(x)`` is ``(..., d, n, n)``."""

    group: MatrixLieGroup
    domain: Domain
    value: Callable
    partials: Optional[Callable] = None
    name: str = "h"

    def __call__(self, x):
        return np.asarray(self.value(np.asarray(x, dtype=float)), dtype=float)

    def gradient(self, x):
        x = np.asarray(x, dtype=float)
        if self.partials is not None:
            return np.asarray(self.partials(x), dtype=float)
        return _central_partials(self, x, self.domain.fd_steps)


@dataclass
class GMap:
    """A group valued map; ``partials(x)`` is ``(..., d, n, n)``."""

    group: MatrixLieGroup
    domain: Domain
    value: Callable
    partials: Optional[Callable] = None
    name: str = "F"
    jet: Optional[Callable] = None  # x -> (value, partials) in one pass

    def __call__(self, x):
        return np.asarray(self.value(np.asarray(x, dtype=float)), dtype=float)

    def gradient(self, x):
        return self.value_and_gradient(x)[1]

    def value_and_gradient(self, x):
        x = np.asarray(x, dtype=float)
        if self.partials is None:
            return _value_and_partials(self, x, self.domain.fd_steps)
        if self.jet is not None:
            return self.jet(x)
        return self(x), np.asarray(self.partials(x), dtype=float)

    def without_partials(self) -> "GMap":
        return GMap(self.group, self.domain, self.value, name=self.name)

    def __mul__(self, other: "GMap") -> "GMap":
        if other.group is not self.group:
            raise LieError("maps into different groups")
        partials = None
        if self.partials is not None and other.partials is not None:
            def partials(x):
                return (self.partials(x) @ other(x)[..., None, :, :]
                        + self(x)[..., None, :, :] @ other.partials(x))
        return GMap(self.group, self.domain, lambda x: self(x) @ other(x), partials,
                    name=f"{self.name}*{other.name}")

    def inverse(self) -> "GMap":
        G = self.group
        partials = None
        if self.partials is not None:
            def partials(x):
                gi = G.inv(self(x))[..., None, :, :]
                return -gi @ self.partials(x) @ gi
        return GMap(G, self.domain, lambda x: G.inv(self(x)), partials,
                    name=f"{self.name}^-1")


def _shifted(x, steps):
    d = x.shape[-1]
    E = np.diag(steps)
    return np.stack([x] + [x + E[i] for i in range(d)] + [x - E[i] for i in range(d)])


def _value_and_partials(f, x, steps):
    """One batched call of ``f`` at x and x +- h e_i."""
    d = x.shape[-1]
    vals = f(_shifted(x, steps))
    h = np.asarray(steps).reshape((d,) + (1,) * (vals.ndim - 1))
    parts = (vals[1:d + 1] - vals[d + 1:]) / (2 * h)
    return vals[0], np.moveaxis(parts, 0, -3)


def _central_partials(f, x, steps):
    return _value_and_partials(f, x, steps)[1]


# -- operations --------------------------------------------------------------

def _as_point(form, x):
    x = np.asarray(x, dtype=float)
    return form.domain.check(x)


def evaluate(xi: OneForm, x, v) -> AlgebraElement:
    """``xi_x(v) = sum_i v_i xi_i(x)``."""
    x = _as_point(xi, x)
    v = np.asarray(v, dtype=float)
    return AlgebraElement(np.einsum("i,ijk->jk", v, xi(x)), xi.group)


def _component_partial(xi: OneForm, x, j, i):
    """d_j xi_i at the points x (array valued)."""
    if xi.partials is not None:
        return xi.partials(x)[..., j, i, :, :]
    h = xi.domain.fd_steps[j]
    e = np.zeros(xi.domain.dim)
    e[j] = h
    return (xi(x + e)[..., i, :, :] - xi(x - e)[..., i, :, :]) / (2 * h)


def _check_axes(xi, i, j):
    d = xi.domain.dim
    if i == j or not (0 <= i < d and 0 <= j < d):
        raise LieError(f"need two distinct axes in range(0, {d}), got {i}, {j}")


def _dform(xi, x, i, j):
    return _component_partial(xi, x, i, j) - _component_partial(xi, x, j, i)


def _interior(xi, x):
    x = np.asarray(x, dtype=float)
    margin = 0.0 if xi.partials is not None else xi.domain.fd_steps
    return xi.domain.check(x, margin)


def exterior_derivative(xi: OneForm, x, i: int, j: int) -> AlgebraElement:
    """``d xi (e_i, e_j) = d_i xi_j - d_j xi_i``."""
    _check_axes(xi, i, j)
    x = _interior(xi, x)
    return AlgebraElement(xi.group.project(_dform(xi, x, i, j)), xi.group)


def wedge_bracket(phi: OneForm, psi: OneForm, x, u, v) -> AlgebraElement:
    """``[phi, psi]_wedge(u, v) = [phi(u), psi(v)] - [phi(v), psi(u)]``."""
    pu, pv = evaluate(phi, x, u).matrix, evaluate(phi, x, v).matrix
    su, sv = evaluate(psi, x, u).matrix, evaluate(psi, x, v).matrix
    return AlgebraElement(commutator(pu, sv) - commutator(pv, su), phi.group)


def _mc_residual_array(xi, x, i, j):
    comps = xi(x)
    return _dform(xi, x, i, j) - commutator(comps[..., i, :, :], comps[..., j, :, :])


def mc_residual(xi: OneForm, x, i: int, j: int) -> AlgebraElement:
    """Maurer-Cartan residual ``d xi(e_i, e_j) - [xi_i, xi_j]``."""
    _check_axes(xi, i, j)
    x = _interior(xi, x)
    return AlgebraElement(xi.group.project(_mc_residual_array(xi, x, i, j)), xi.group)


@dataclass
class FlatnessReport:
    max_residual: float
    tol: float
    flat: bool
    points: int = 0


def max_mc_residual(xi: OneForm, points) -> float:
    d = xi.domain.dim
    worst = 0.0
    for i in range(d):
        for j in range(i + 1, d):
            r = np.linalg.norm(_mc_residual_array(xi, points, i, j), axis=(-2, -1))
            worst = max(worst, float(np.max(r, initial=0.0)))
    return worst


def is_flat(xi: OneForm, grid_resolution=9, tol: float = 1e-4) -> FlatnessReport:
    if not tol > 0:
        raise LieError("tolerance must be positive")
    pts = xi.domain.interior_grid(grid_resolution)
    worst = max_mc_residual(xi, pts)
    return FlatnessReport(worst, tol, worst <= tol, len(pts))


def require_flat(xi: OneForm, tol: float = 1e-4, resolution: int = 5) -> float:
    """Return the flatness certificate of ``xi``, computing it if missing."""
    if xi.flat_certificate is None:
        rep = is_flat(xi, resolution, tol)
        if not rep.flat:
            raise LieError(f"form {xi.name} is not flat (max residual {rep.max_residual:.3g})")
        xi.flat_certificate = rep.max_residual
    return xi.flat_certificate


def linearized_mc_residual(xi: OneForm, eta: OneForm, x, i: int, j: int) -> AlgebraElement:
    """``d eta(e_i, e_j) - ([xi_i, eta_j] - [xi_j, eta_i])``."""
    _check_axes(xi, i, j)
    x = _interior(eta, x)
    a, b = xi(x), eta(x)
    val = (_dform(eta, x, i, j)
           - (commutator(a[..., i, :, :], b[..., j, :, :])
              - commutator(a[..., j, :, :], b[..., i, :, :])))
    return AlgebraElement(xi.group.project(val), xi.group)


def max_linearized_residual(xi: OneForm, eta: OneForm, points) -> float:
    d = xi.domain.dim
    worst = 0.0
    a, b = xi(points), eta(points)
    for i in range(d):
        for j in range(i + 1, d):
            val = (_dform(eta, points, i, j)
                   - (commutator(a[..., i, :, :], b[..., j, :, :])
                      - commutator(a[..., j, :, :], b[..., i, :, :])))
            worst = max(worst, float(np.max(np.linalg.norm(val, axis=(-2, -1)), initial=0.0)))
    return worst


PULLBACK_TOL = 1e-6


class PullbackForm(OneForm):
    """Right logarithmic derivative ``dF F^{-1}`` of a group valued map."""

    def __init__(self, F: GMap):
        self.group = F.group
        self.domain = F.domain
        self.source = F
        self.name = f"pullback({F.name})"
        self.flat_certificate = 0.0

    def components(self, x):
        x = np.asarray(x, dtype=float)
        G = self.group
        val, grad = self.source.value_and_gradient(x)
        raw = grad @ G.inv(val)[..., None, :, :]
        proj = G.project(raw)
        res = np.linalg.norm(raw - proj, axis=(-2, -1))
        if np.any(res > PULLBACK_TOL * (1 + np.linalg.norm(raw, axis=(-2, -1)))):
            raise LieError("pullback left the Lie algebra: map not group valued "
                           "or difference step too coarse")
        return proj


def pullback_form(F: GMap) -> OneForm:
    return PullbackForm(F)


def exact_form(h: GFunction) -> OneForm:
    """``dh`` as a 1-form."""
    return FunctionForm(h.group, h.domain, h.gradient, name=f"d{h.name}")


def leibniz_check(F: GMap, F2: GMap, points) -> float:
    """Max of ``|delta(F F2) - delta F - Ad(F) delta F2|`` over points."""
    if F.domain != F2.domain or F.group is not F2.group:
        raise LieError("maps must share domain and group")
    pts = np.asarray(points, dtype=float)
    G = F.group
    lhs = pullback_form(F * F2)(pts)
    f = F(pts)[..., None, :, :]
    rhs = pullback_form(F)(pts) + G.Ad(f, pullback_form(F2)(pts))
    return float(np.max(np.linalg.norm(lhs - rhs, axis=(-2, -1)), initial=0.0))
