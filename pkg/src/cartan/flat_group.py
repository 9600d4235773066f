"""Group structure on flat forms, the Poincare operator and variations.

The star product and inverse need the development ``f = Evol(xi)`` at the
evaluation point.  It is obtained by integrating along the ray from the
base point; when a whole ray is requested (as during development of the
product form) the ray is integrated once for all nodes.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Optional

import numpy as np

from .evolution import EvolConfig, develop_points, ray_transport
from .forms import (Domain, FunctionForm, GFunction, OneForm, exact_form,
                    max_linearized_residual, require_flat, _dform)
from .lie_core import LieError, commutator

GAUSS_NODES = 32
CLOSED_TOL = 1e-6


class TwistedForm(OneForm):
    """``base + Ad(f^{+-1}) payload`` with ``f`` the development of ``xi``.

    ``base`` may be None.  The star product and its inverse are built on
    this, as are variation forms.
    """

    def __init__(self, xi: OneForm, payload: OneForm, inverse: bool = False,
                 base: Optional[OneForm] = None, scale: float = 1.0,
                 cfg: EvolConfig = EvolConfig(), name: str = "twisted"):
        if payload.group is not xi.group or payload.domain != xi.domain:
            raise LieError("forms live on different groups or domains")
        self.group = xi.group
        self.domain = xi.domain
        self.xi = xi
        self.payload = payload
        self.inverse = inverse
        self.base = base
        self.scale = scale
        self.cfg = cfg
        self.name = name

    def _combine(self, f, payload, base):
        G = self.group
        f = f[..., None, :, :]
        fi = G.inv(f)
        moved = fi @ payload @ f if self.inverse else f @ payload @ fi
        out = self.scale * moved
        return out if base is None else base + out

    def components(self, x):
        x = np.asarray(x, dtype=float)
        flat = x.reshape(-1, self.domain.dim)
        f = develop_points(self.xi, flat, self.cfg).reshape(x.shape[:-1] + (self.group.n,) * 2)
        base = None if self.base is None else self.base(x)
        return self._combine(f, self.payload(x), base)

    def along_ray(self, xs, times):
        return np.stack(list(self.ray(xs, times)))

    def ray(self, xs, times):
        xs = np.asarray(xs, dtype=float)
        times = np.asarray(times, dtype=float)
        fs = ray_transport(self.xi, xs, times, self.cfg.steps, self.cfg)
        pays = self.payload.ray(xs, times)
        bases = self.base.ray(xs, times) if self.base is not None else iter(lambda: None, 0)
        for f, p, b in zip(fs, pays, bases):
            yield self._combine(f, p, b)


def star(xi: OneForm, eta: OneForm, cfg: EvolConfig = EvolConfig()) -> OneForm:
    """``(xi * eta)(x) = xi(x) + Ad(Evol(xi)(x)) eta(x)``; inputs must be flat."""
    c1 = require_flat(xi)
    c2 = require_flat(eta)
    out = TwistedForm(xi, eta, base=xi, cfg=cfg, name=f"({xi.name}*{eta.name})")
    out.flat_certificate = max(c1, c2)
    return out


def star_inverse(xi: OneForm, cfg: EvolConfig = EvolConfig()) -> OneForm:
    """``xi^{-1}(x) = -Ad(Evol(xi)(x)^{-1}) xi(x)``."""
    out = TwistedForm(xi, xi, inverse=True, scale=-1.0, cfg=cfg, name=f"{xi.name}^-1")
    out.flat_certificate = require_flat(xi)
    return out


# -- closed forms and the Poincare operator ---------------------------------

@dataclass
class ClosedOneForm:
    form: OneForm
    max_dform: float
    tol: float

    @property
    def group(self):
        return self.form.group

    @property
    def domain(self):
        return self.form.domain


def max_exterior_derivative(beta: OneForm, points) -> float:
    d = beta.domain.dim
    worst = 0.0
    for i in range(d):
        for j in range(i + 1, d):
            r = np.linalg.norm(_dform(beta, points, i, j), axis=(-2, -1))
            worst = max(worst, float(np.max(r, initial=0.0)))
    return worst


def certify_closed(beta: OneForm, tol: float = CLOSED_TOL, resolution: int = 5) -> ClosedOneForm:
    worst = max_exterior_derivative(beta, beta.domain.interior_grid(resolution))
    if worst > tol:
        raise LieError(f"form {beta.name} is not closed (max |d beta| = {worst:.3g})")
    return ClosedOneForm(beta, worst, tol)


@lru_cache(maxsize=None)
def _gauss01(nodes):
    t, w = np.polynomial.legendre.leggauss(nodes)
    return (t + 1) / 2, w / 2


def poincare_values(beta: OneForm, xs, nodes: int = GAUSS_NODES):
    """``h(x) = int_0^1 beta_{tx}(x) dt`` at points (..., d), no checks."""
    xs = np.asarray(xs, dtype=float)
    ts, ws = _gauss01(nodes)
    comps = beta.along_ray(xs, ts)
    out = np.einsum("t,...i,t...ijk->...jk", ws, xs, comps)
    if not np.isfinite(out).all():
        raise LieError("Poincare quadrature produced non-finite values")
    return out


def poincare_inverse(beta: ClosedOneForm, nodes: int = GAUSS_NODES) -> GFunction:
    """The potential ``h`` with ``dh = beta`` and ``h(0) = 0``."""
    if not isinstance(beta, ClosedOneForm):
        raise LieError("poincare_inverse needs a certified closed form")
    form = beta.form

    def value(x):
        x = np.asarray(x, dtype=float)
        return poincare_values(form, x, nodes)

    return GFunction(form.group, form.domain, value, name=f"d^-1({form.name})")


def flat_bracket(b1: ClosedOneForm, b2: ClosedOneForm, tol: float = CLOSED_TOL) -> ClosedOneForm:
    """``[b1, d^-1 b2] + [d^-1 b1, b2]`` with ``[beta, h](v) = [beta(v), h(x)]``."""
    h1, h2 = poincare_inverse(b1), poincare_inverse(b2)
    f1, f2 = b1.form, b2.form

    def func(x):
        v1 = h1(x)[..., None, :, :]
        v2 = h2(x)[..., None, :, :]
        return commutator(f1(x), v2) + commutator(v1, f2(x))

    out = FunctionForm(f1.group, f1.domain, func, name=f"[{f1.name},{f2.name}]")
    try:
        return certify_closed(out, tol)
    except LieError as exc:
        raise LieError(f"bracket output failed its closedness check: {exc}") from None


# -- variations --------------------------------------------------------------

def variation_form(xi: OneForm, h: GFunction, cfg: EvolConfig = EvolConfig()) -> OneForm:
    """``eta = Ad(f) dh`` with ``f = Evol(xi)``."""
    require_flat(xi)
    return TwistedForm(xi, exact_form(h), cfg=cfg, name=f"Ad(f)d{h.name}")


def reconstruct_h(xi: OneForm, eta: OneForm, cfg: EvolConfig = EvolConfig(),
                  tol: float = 1e-4, resolution: int = 5) -> GFunction:
    """The pointed ``h`` with ``dh = Ad(f^{-1}) eta``."""
    require_flat(xi)
    pts = xi.domain.interior_grid(resolution)
    res = max_linearized_residual(xi, eta, pts)
    if res > tol:
        raise LieError(f"eta is not tangent at xi (linearized residual {res:.3g})")
    beta = TwistedForm(xi, eta, inverse=True, cfg=cfg, name=f"Ad(f^-1){eta.name}")
    closed = certify_closed(beta, tol, resolution)
    return poincare_inverse(closed)


# -- the commutator oracle ---------------------------------------------------

def exp_curve_form(h: GFunction, s: float) -> OneForm:
    """Right log derivative of ``x -> exp(s h(x))``: a flat curve through 0
    with velocity ``dh`` at ``s = 0``.  Uses the dexp series to full order.
    """
    G = h.group

    def func(x):
        A = s * h(x)[..., None, :, :]
        Y = s * h.gradient(x)
        term, out = Y, Y
        for k in range(2, 30):
            term = commutator(A, term) / k
            out = out + term
            if np.max(np.abs(term), initial=0.0) < 1e-18:
                break
        return out

    form = FunctionForm(G, h.domain, func, name=f"exp({s:g}{h.name})")
    form.flat_certificate = 0.0
    return form


def commutator_oracle(b1: ClosedOneForm, b2: ClosedOneForm, points, step: float = 1e-3,
                      cfg: EvolConfig = EvolConfig(steps=32)):
    """Mixed second difference in (s, t) of the star commutator
    ``a(s) * b(t) * a(s)^-1 * b(t)^-1`` at ``points``.

    ``a``, ``b`` are flat curves with velocities ``b1``, ``b2``.
    """
    # d(d^-1 b) = b on closed forms, so the potentials get exact gradients
    h1, h2 = (GFunction(b.group, b.domain, poincare_inverse(b).value, b.form.components,
                        name=f"d^-1({b.form.name})") for b in (b1, b2))
    pts = np.asarray(points, dtype=float)

    def comm(s, t):
        a = exp_curve_form(h1, s)
        b = exp_curve_form(h2, t)
        c = star(star(star(a, b, cfg), star_inverse(a, cfg), cfg), star_inverse(b, cfg), cfg)
        return c(pts)

    h = step
    return (comm(h, h) - comm(h, -h) - comm(-h, h) + comm(-h, -h)) / (4 * h * h)


def jacobi_residual(b1: ClosedOneForm, b2: ClosedOneForm, b3: ClosedOneForm, points) -> float:
    def br(a, b):
        return flat_bracket(a, b, tol=1e-4)
    pts = np.asarray(points, dtype=float)
    total = (br(b1, br(b2, b3)).form(pts) + br(b2, br(b3, b1)).form(pts)
             + br(b3, br(b1, b2)).form(pts))
    return float(np.max(np.linalg.norm(total, axis=(-2, -1)), initial=0.0))
