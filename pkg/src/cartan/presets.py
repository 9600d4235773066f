"""Named forms and maps used by the CLI and the test-suite.

Preset strings look like ``name:arg1,arg2``.  Algebra arguments are linear
combinations of basis labels, e.g. ``L1``, ``0.5*L1-2*L2`` (so3) or
``H+E`` (sl2).

    zero                      the zero form
    const:A,B[,C]             sum_i A_i dx^i
    pullback-expxy:A,B[,C]    dF F^-1 for F(x) = exp(x1 A) exp(x2 B) [exp(x3 C)]
    polynomial:A,c0,c1,...    p(x1) A dx^1 with p(s) = sum_k c_k s^k
    su2-zcc:a,b               dF F^-1 for F = exp(a x1 E1) exp(b x2 E2) exp(a b x1 x2 E3)
"""
from __future__ import annotations

import re

import numpy as np

from .forms import (Domain, FunctionForm, GFunction, GMap, OneForm, constant_form,
                    pullback_form, zero_form)
from .lie_core import LieError, MatrixLieGroup

FORM_PRESETS = ("zero", "const", "pullback-expxy", "polynomial", "su2-zcc")

_TERM = re.compile(r"\s*([+-]?)\s*(?:((?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)\s*\*?\s*)?([A-Za-z][A-Za-z0-9]*)\s*")


class PresetError(LieError):
    pass


def parse_algebra(G: MatrixLieGroup, text: str) -> np.ndarray:
    """Parse ``'0.5*L1-L2'`` into a matrix of the algebra of ``G``."""
    text = text.strip()
    if not text:
        raise PresetError("empty algebra expression")
    out = np.zeros((G.n, G.n))
    pos = 0
    while pos < len(text):
        m = _TERM.match(text, pos)
        if not m or m.end() == pos:
            raise PresetError(f"cannot parse algebra expression {text!r}")
        sign = -1.0 if m.group(1) == "-" else 1.0
        coef = float(m.group(2)) if m.group(2) else 1.0
        if pos > 0 and not m.group(1):
            raise PresetError(f"missing operator in {text!r}")
        try:
            out += sign * coef * G.element(m.group(3))
        except LieError as exc:
            raise PresetError(str(exc)) from None
        pos = m.end()
    return out


def split_preset(text: str):
    name, _, args = text.partition(":")
    name = name.strip()
    params = [a.strip() for a in args.split(",")] if args.strip() else []
    return name, params


def _exp_product_map(G, domain, mats, name):
    mats = [np.asarray(m, dtype=float) for m in mats]
    d = domain.dim

    def factors(x):
        return [G.exp(x[..., i, None, None] * mats[i]) for i in range(d)]

    def value(x):
        F = np.broadcast_to(np.eye(G.n), x.shape[:-1] + (G.n, G.n))
        for f in factors(x):
            F = F @ f
        return F

    def jet(x):
        fs = factors(x)
        # prefix products; d_j F = f_1 ... f_{j-1} A_j f_j ... f_d
        pre = [np.broadcast_to(np.eye(G.n), x.shape[:-1] + (G.n, G.n))]
        for f in fs:
            pre.append(pre[-1] @ f)
        suf = [np.broadcast_to(np.eye(G.n), x.shape[:-1] + (G.n, G.n))]
        for f in reversed(fs):
            suf.append(f @ suf[-1])
        suf = suf[::-1]
        parts = [pre[j] @ mats[j] @ suf[j] for j in range(d)]
        return pre[-1], np.stack(parts, axis=-3)

    return GMap(G, domain, value, lambda x: jet(x)[1], name=name, jet=jet)


def expxy_map(G: MatrixLieGroup, domain: Domain, mats, analytic: bool = True) -> GMap:
    if len(mats) != domain.dim:
        raise PresetError(f"pullback-expxy needs {domain.dim} algebra arguments")
    F = _exp_product_map(G, domain, mats, "expxy")
    return F if analytic else F.without_partials()


def zcc_map(G: MatrixLieGroup, domain: Domain, a: float, b: float,
            analytic: bool = True) -> GMap:
    if G.dim < 3:
        raise PresetError("su2-zcc needs a group with at least three basis elements")
    if domain.dim < 2:
        raise PresetError("su2-zcc needs a domain of dimension >= 2")
    E1, E2, E3 = G.basis[:3]

    def factors(x):
        x1, x2 = x[..., 0, None, None], x[..., 1, None, None]
        return G.exp(a * x1 * E1), G.exp(b * x2 * E2), G.exp(a * b * x1 * x2 * E3), x1, x2

    def value(x):
        A, B, C, _, _ = factors(x)
        return A @ B @ C

    def jet(x):
        A, B, C, x1, x2 = factors(x)
        F = A @ B @ C
        d1 = a * (E1 @ F) + a * b * x2 * (F @ E3)
        d2 = b * (A @ E2 @ B @ C) + a * b * x1 * (F @ E3)
        parts = [d1, d2] + [np.zeros_like(F)] * (domain.dim - 2)
        return F, np.stack(parts, axis=-3)

    F = GMap(G, domain, value, lambda x: jet(x)[1], name="zcc", jet=jet)
    return F if analytic else F.without_partials()


def polynomial_form(G: MatrixLieGroup, domain: Domain, A, coeffs) -> OneForm:
    A = np.asarray(A, dtype=float)
    c = np.asarray(coeffs, dtype=float)
    d, n = domain.dim, G.n
    dc = c[1:] * np.arange(1, len(c)) if len(c) > 1 else np.zeros(1)

    def func(x):
        out = np.zeros(x.shape[:-1] + (d, n, n))
        out[..., 0, :, :] = np.polynomial.polynomial.polyval(x[..., 0], c)[..., None, None] * A
        return out

    def partials(x):
        out = np.zeros(x.shape[:-1] + (d, d, n, n))
        out[..., 0, 0, :, :] = np.polynomial.polynomial.polyval(x[..., 0], dc)[..., None, None] * A
        return out

    form = FunctionForm(G, domain, func, partials, name="polynomial", params=tuple(c))
    form.flat_certificate = 0.0
    return form


def form_from_preset(text: str, G: MatrixLieGroup, domain: Domain) -> OneForm:
    name, params = split_preset(text)
    if name == "zero":
        form = zero_form(G, domain)
    elif name == "const":
        if len(params) != domain.dim:
            raise PresetError(f"const needs {domain.dim} algebra arguments, got {len(params)}")
        form = constant_form(G, domain, [parse_algebra(G, p) for p in params])
    elif name == "pullback-expxy":
        form = pullback_form(expxy_map(G, domain, [parse_algebra(G, p) for p in params]))
    elif name == "polynomial":
        if len(params) < 2:
            raise PresetError("polynomial needs an algebra element and at least one coefficient")
        try:
            coeffs = [float(p) for p in params[1:]]
        except ValueError:
            raise PresetError(f"bad polynomial coefficients in {text!r}") from None
        form = polynomial_form(G, domain, parse_algebra(G, params[0]), coeffs)
    elif name == "su2-zcc":
        if len(params) != 2:
            raise PresetError("su2-zcc needs two numbers a,b")
        try:
            a, b = float(params[0]), float(params[1])
        except ValueError:
            raise PresetError(f"bad su2-zcc parameters in {text!r}") from None
        form = pullback_form(zcc_map(G, domain, a, b))
    else:
        raise PresetError(f"unknown form preset {name!r}; known: {', '.join(FORM_PRESETS)}")
    form.name = text
    return form


def map_from_preset(text: str, G: MatrixLieGroup, domain: Domain) -> GMap:
    """The group valued map behind a pullback preset."""
    name, params = split_preset(text)
    if name == "pullback-expxy":
        return expxy_map(G, domain, [parse_algebra(G, p) for p in params])
    if name == "su2-zcc":
        return zcc_map(G, domain, float(params[0]), float(params[1]))
    raise PresetError(f"preset {name!r} is not a pullback of a map")


def random_algebra(G: MatrixLieGroup, rng, scale: float = 1.0) -> np.ndarray:
    return G.from_coords(scale * rng.standard_normal(G.dim))


def random_polynomial_function(G: MatrixLieGroup, domain: Domain, rng,
                               degree: int = 2, scale: float = 0.5) -> GFunction:
    """``h(x) = sum over monomials of degree 1..degree`` with random algebra
    coefficients, so that ``h(0) = 0``."""
    d = domain.dim
    monos = [m for m in np.ndindex(*(degree + 1,) * d) if 1 <= sum(m) <= degree]
    coefs = np.stack([random_algebra(G, rng, scale) for _ in monos])
    powers = np.array(monos, dtype=float)

    def value(x):
        x = np.asarray(x, dtype=float)
        mon = np.prod(x[..., None, :] ** powers, axis=-1)
        return np.tensordot(mon, coefs, axes=(-1, 0))

    def partials(x):
        x = np.asarray(x, dtype=float)
        out = []
        for j in range(d):
            p = powers.copy()
            fac = p[:, j].copy()
            p[:, j] = np.maximum(p[:, j] - 1, 0)
            mon = fac * np.prod(x[..., None, :] ** p, axis=-1)
            out.append(np.tensordot(mon, coefs, axes=(-1, 0)))
        return np.stack(out, axis=-3)

    return GFunction(G, domain, value, partials, name="hpoly")
