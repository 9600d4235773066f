"""Property suites run by the command line tool.

Each suite takes a :class:`Scenario` and returns ``{check: (value, tol)}``
plus a dict of informational numbers.  A check passes when
``value <= tol``.  Suites draw randomness only from their own generator,
seeded from ``(seed, suite index)``, so results do not depend on the
order in which suites run.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .evolution import (AlgebraCurve, EvolConfig, _evolve, develop, develop_at,
                        develop_polylines, evol_left, evol_left_via_right,
                        holonomy_scaling, naturality_check, reparam_law_residual,
                        reparameterization_check)
from .flat_group import (certify_closed, commutator_oracle, flat_bracket, jacobi_residual,
                         poincare_inverse, reconstruct_h, star, star_inverse, variation_form)
from .forms import (Domain, GMap, FunctionForm, OneForm, exact_form, is_flat, leibniz_check,
                    max_linearized_residual, pullback_form)
from .lie_core import MatrixLieGroup, group
from .presets import expxy_map, form_from_preset, random_algebra, random_polynomial_function
from .tangent_semidirect import (evol_sd, sd_Ad_arr, sd_bracket_arr, sd_exp_arr, sd_mul_arr,
                                 tangent_develop, tangent_evol)

DEFAULT_TOLERANCES = {
    "flat": 1e-4,
    "leibniz": 1e-6,
    "pullback_naturality": 1e-5,
    "evolution_law": 1e-7,
    "exp_of_constant": 1e-10,
    "constraint_drift": 1e-10,
    "convergence_order": 0.3,
    "basepoint": 1e-14,
    "constraint": 1e-10,
    "round_trip": 1e-6,
    "fd_round_trip": 1e-4,
    "path_independence": 1e-6,
    "holonomy_slope": 0.2,
    "naturality": 1e-8,
    "domain_reparameterization": 1e-9,
    "star": 1e-6,
    "inverse": 1e-6,
    "bracket_oracle": 1e-4,
    "jacobi": 1e-4,
    "poincare_d_inverse": 1e-6,
    "poincare_inverse_d": 1e-10,
    "tangency": 1e-4,
    "variation": 1e-5,
    "sd_routes": 1e-7,
    "tangent_fd": 1e-4,
    "sd_axioms": 1e-10,
    "bit_identical": 1e-300,
}


@dataclass
class Scenario:
    G: MatrixLieGroup
    domain: Domain
    xi: OneForm
    xi2: OneForm
    points: np.ndarray
    cfg: EvolConfig
    seed: int = 0
    tolerances: dict = field(default_factory=dict)
    F: Optional[GMap] = None

    def tol(self, name):
        return float(self.tolerances.get(name, DEFAULT_TOLERANCES[name]))


def _maxnorm(a):
    a = np.asarray(a)
    if a.size == 0:
        return 0.0
    return float(np.max(np.linalg.norm(a, axis=(-2, -1))))


def _sample(domain, rng, count, shrink=1.0):
    return rng.uniform(-1.0, 1.0, (count, domain.dim)) * domain.widths * shrink


def _curve(G, rng):
    A, B = random_algebra(G, rng), random_algebra(G, rng)
    return AlgebraCurve(G, lambda t: A * np.cos(2 * t) + B * t)


# -- suites ------------------------------------------------------------------

def log_derivatives(s: Scenario, rng):
    rows, info = {}, {}
    rep = is_flat(s.xi, 7, s.tol("flat"))
    rows["maurer_cartan"] = (rep.max_residual, s.tol("flat"))
    d = s.domain.dim
    F1 = expxy_map(s.G, s.domain, [random_algebra(s.G, rng) for _ in range(d)], analytic=False)
    F2 = expxy_map(s.G, s.domain, [random_algebra(s.G, rng) for _ in range(d)], analytic=False)
    pts = s.domain.interior_grid(4) * 0.9
    rows["leibniz"] = (leibniz_check(F1, F2, pts), s.tol("leibniz"))
    # affine change of chart y -> M y + c, kept inside the box
    M = 0.4 * rng.uniform(-1, 1, (d, d))
    c = 0.2 * rng.uniform(-1, 1, d) * s.domain.widths
    Fh = GMap(s.G, s.domain, lambda y: F1(y @ M.T + c), name="F o h")
    lhs = pullback_form(Fh)(pts)
    rhs = np.einsum("ij,...ikl->...jkl", M, pullback_form(F1)(pts @ M.T + c))
    rows["pullback_naturality"] = (_maxnorm(lhs - rhs), s.tol("pullback_naturality"))
    return rows, info


def evolution_laws(s: Scenario, rng):
    rows, info = {}, {}
    G = s.G
    X = _curve(G, rng)
    cfg = EvolConfig(s.cfg.integrator, 512, s.cfg.dexpinv_order)
    law = np.linalg.norm(evol_left(X, 1.0, cfg).matrix - evol_left_via_right(X, 1.0, cfg).matrix)
    rows["left_via_right"] = (law, s.tol("evolution_law"))
    rows["reparameterization"] = (reparam_law_residual(X, lambda t: t * t + 0.3 * t,
                                                       lambda t: 2 * t + 0.3, 0.8, cfg),
                                  s.tol("evolution_law"))
    A = random_algebra(G, rng)
    g = _evolve(AlgebraCurve(G, lambda t: A), 1.0, EvolConfig(steps=64), "right")[-1]
    rows["exp_of_constant"] = (np.linalg.norm(g - G.exp(A)), s.tol("exp_of_constant"))
    g = _evolve(X, 1.0, EvolConfig(steps=32), "right")[-1]
    rows["rkmk4_constraint_drift"] = (float(G.residual(g)), s.tol("constraint_drift"))
    g = _evolve(X, 1.0, EvolConfig("rk4_ambient", 32), "right")[-1]
    info["rk4_ambient_constraint_drift"] = float(G.residual(g))

    slopes = convergence_slopes()
    info["convergence_slopes"] = slopes
    rows["convergence_order"] = (max(abs(-k - 4.0) for k in slopes), s.tol("convergence_order"))
    return rows, info


SO3_TEST_CURVES = (
    ((0.3, -0.5, 0.8), (0.7, 0.2, -0.1), "trig"),
    ((0.1, 0.4, 0.6), (0.3, -0.5, 0.8), "poly"),
    ((0.3, -0.5, 0.8), (0.1, 0.4, 0.6), "exp"),
)


def so3_test_curves():
    G = group("so3")
    out = []
    for a, b, kind in SO3_TEST_CURVES:
        A, B = G.from_coords(a), G.from_coords(b)
        if kind == "trig":
            out.append(AlgebraCurve(G, lambda t, A=A, B=B: A * np.cos(3 * t) + B * np.sin(2 * t)))
        elif kind == "poly":
            out.append(AlgebraCurve(G, lambda t, A=A, B=B: A + B * t * t - A * t ** 3))
        else:
            out.append(AlgebraCurve(G, lambda t, A=A, B=B: np.exp(t) * A + np.cos(5 * t) * B))
    return out


def convergence_table(X, steps=(32, 64, 128, 256), ref_steps=4096):
    ref = _evolve(X, 1.0, EvolConfig(steps=ref_steps), "right")[-1]
    errs = [float(np.linalg.norm(_evolve(X, 1.0, EvolConfig(steps=N), "right")[-1] - ref))
            for N in steps]
    slope = float(np.polyfit(np.log(steps), np.log(errs), 1)[0])
    return errs, slope


def convergence_slopes():
    return [convergence_table(X)[1] for X in so3_test_curves()]


def development(s: Scenario, rng):
    rows, info = {}, {}
    G, cfg = s.G, s.cfg
    dm = develop(s.xi, s.points, cfg, check=False)
    rows["basepoint_error"] = (dm.basepoint_error, s.tol("basepoint"))
    rows["constraint_residual"] = (dm.max_constraint_residual, s.tol("constraint"))
    # delta^r of the developed map reproduces the form
    fmap = GMap(G, s.domain, lambda x: develop_at(s.xi, x, cfg), name="Evol")
    pts = s.domain.interior_grid(4)
    rows["log_derivative_of_development"] = (_maxnorm(pullback_form(fmap)(pts) - s.xi(pts)),
                                             s.tol("fd_round_trip"))
    if s.F is not None:
        ref = s.F(dm.points) @ np.linalg.inv(s.F(np.zeros(s.domain.dim)))
        rows["matches_source_map"] = (_maxnorm(dm.values - ref), s.tol("round_trip"))
    ends = _sample(s.domain, rng, 50)
    rows["path_independence"] = (path_independence(s.xi, ends, cfg), s.tol("path_independence"))
    control = form_from_preset("const:L1,L2", group("so3"), Domain.box(2))
    norms, slope = holonomy_scaling(control, cfg=EvolConfig(steps=64))
    info["control_log_holonomy"] = norms
    info["control_holonomy_slope"] = slope
    rows["control_holonomy_slope"] = (abs(slope - 2.0), s.tol("holonomy_slope"))
    sub = s.domain.grid(5)
    for hom in ("det", "inclusion"):
        rows[f"naturality_{hom}"] = (naturality_check(s.xi, hom, sub, cfg), s.tol("naturality"))
    rows["domain_reparameterization"] = (reparameterization_check(s.xi, 0.7, sub * 0.7, cfg),
                                         s.tol("domain_reparameterization"))
    return rows, info


def path_independence(xi, ends, cfg):
    ends = np.asarray(ends, dtype=float)
    zero = np.zeros_like(ends)
    radial = develop_polylines(xi, np.stack([zero, ends], 1), cfg)
    corners = [zero]
    for i in range(ends.shape[1]):
        p = corners[-1].copy()
        p[:, i] = ends[:, i]
        corners.append(p)
    axis = develop_polylines(xi, np.stack(corners, 1), cfg)
    return _maxnorm(radial - axis)


def closed_forms(G, domain, rng, count=3):
    return [certify_closed(exact_form(random_polynomial_function(G, domain, rng)))
            for _ in range(count)]


def group_structure(s: Scenario, rng):
    rows, info = {}, {}
    cfg = s.cfg
    pts = s.domain.grid(4) * 0.9
    f1, f2 = develop_at(s.xi, pts, cfg), develop_at(s.xi2, pts, cfg)
    rows["star_residual"] = (_maxnorm(develop_at(star(s.xi, s.xi2, cfg), pts, cfg) - f1 @ f2),
                            s.tol("star"))
    eye = np.eye(s.G.n)
    rows["inverse_residual"] = (_maxnorm(develop_at(star(s.xi, star_inverse(s.xi, cfg), cfg), pts, cfg)
                                     - eye), s.tol("inverse"))
    b = closed_forms(s.G, s.domain, rng)
    q = s.domain.grid(2) * 0.5
    worst = 0.0
    for i, j in ((0, 1), (1, 2), (0, 2)):
        worst = max(worst, _maxnorm(flat_bracket(b[i], b[j]).form(q) - commutator_oracle(b[i], b[j], q)))
    rows["bracket_vs_oracle"] = (worst, s.tol("bracket_oracle"))
    rows["jacobi_residual"] = (jacobi_residual(b[0], b[1], b[2], q), s.tol("jacobi"))
    return rows, info


def poincare(s: Scenario, rng):
    rows, info = {}, {}
    pts = s.domain.interior_grid(5)
    h0 = random_polynomial_function(s.G, s.domain, rng, degree=3)
    beta = certify_closed(exact_form(h0))
    h = poincare_inverse(beta)
    rows["inverse_of_d"] = (_maxnorm(h(pts) - h0(pts)), s.tol("poincare_inverse_d"))
    rows["d_of_inverse"] = (_maxnorm(h.gradient(pts) - beta.form(pts)), s.tol("poincare_d_inverse"))
    return rows, info


def variation(s: Scenario, rng):
    rows, info = {}, {}
    h0 = random_polynomial_function(s.G, s.domain, rng)
    eta = variation_form(s.xi, h0, s.cfg)
    pts = s.domain.interior_grid(4)
    rows["tangency"] = (max_linearized_residual(s.xi, eta, pts), s.tol("tangency"))
    h = reconstruct_h(s.xi, eta, s.cfg)
    q = s.domain.grid(4) * 0.9
    rows["round_trip"] = (_maxnorm(h(q) - h0(q)), s.tol("variation"))
    return rows, info


def _sd_random(G, rng):
    return np.stack([random_algebra(G, rng), G.exp(random_algebra(G, rng))])


def _sd_algebra(G, rng):
    return np.stack([random_algebra(G, rng), random_algebra(G, rng)])


def sd_axiom_residuals(G, rng):
    a, b, c = (_sd_random(G, rng) for _ in range(3))
    u, v, w = (_sd_algebra(G, rng) for _ in range(3))

    def nrm(x):
        return float(np.linalg.norm(x))

    mul = lambda p, q: sd_mul_arr(G, p, q)
    Ad = lambda p, x: sd_Ad_arr(G, p, x)
    br = sd_bracket_arr
    out = {
        "associativity": nrm(mul(mul(a, b), c) - mul(a, mul(b, c))),
        "Ad_homomorphism": nrm(Ad(mul(a, b), u) - Ad(a, Ad(b, u))),
        "Ad_preserves_bracket": nrm(Ad(a, br(u, v)) - br(Ad(a, u), Ad(a, v))),
        "jacobi": nrm(br(u, br(v, w)) + br(v, br(w, u)) + br(w, br(u, v))),
        "exp_one_parameter": nrm(mul(sd_exp_arr(G, 0.3 * u), sd_exp_arr(G, 0.5 * u))
                                 - sd_exp_arr(G, 0.8 * u)),
    }
    return out


def tangent(s: Scenario, rng):
    rows, info = {}, {}
    G = s.G
    X, Y = _curve(G, rng), _curve(G, rng)
    cfg = EvolConfig(steps=256)
    rows["sd_routes_deviation"] = (evol_sd(Y, X, cfg, tol=math.inf).deviation, s.tol("sd_routes"))
    D = tangent_evol(X, Y, cfg).matrix
    e = 1e-5
    gp = _evolve(X + Y.scaled(e), 1.0, cfg, "right")[-1]
    gm = _evolve(X + Y.scaled(-e), 1.0, cfg, "right")[-1]
    g = _evolve(X, 1.0, cfg, "right")[-1]
    rows["tangent_vs_fd"] = (np.linalg.norm(G.inv(g) @ (gp - gm) / (2 * e) - D), s.tol("tangent_fd"))
    ax = sd_axiom_residuals(G, rng)
    info["sd_axiom_residuals"] = ax
    rows["sd_axiom_residuals"] = (max(ax.values()), s.tol("sd_axioms"))
    h = random_polynomial_function(G, s.domain, rng)
    dcfg = EvolConfig(steps=min(s.cfg.steps, 64))
    eta = variation_form(s.xi, h, dcfg)
    pts = s.domain.grid(4) * 0.8
    tm = tangent_develop(s.xi, eta, pts, dcfg)
    base = develop_at(s.xi, pts, dcfg)
    fp = develop_at(s.xi + e * eta, pts, dcfg)
    fm = develop_at(s.xi - e * eta, pts, dcfg)
    fd = (fp - fm) / (2 * e) @ G.inv(base)
    rows["tangent_develop_vs_fd"] = (_maxnorm(fd - tm.vectors), s.tol("tangent_fd"))
    rows["tangent_develop_base_matches_develop"] = (float(np.max(np.abs(base - tm.base), initial=0.0)),
                                                    s.tol("bit_identical"))
    return rows, info


# name, description, function; the order fixes the per-suite seeds
SUITES = (
    ("log-derivatives", "logarithmic derivatives and the Maurer-Cartan equation", log_derivatives),
    ("evolution-laws", "one dimensional evolution laws and convergence order", evolution_laws),
    ("development", "development of flat forms and its naturality", development),
    ("group-structure", "group structure of flat forms", group_structure),
    ("poincare-operator", "Poincare operator on closed forms", poincare),
    ("variation", "variations of flat forms and reconstruction of the potential", variation),
    ("tangent-group", "tangent group as a semidirect product", tangent),
)

SUITE_NAMES = tuple(name for name, _, _ in SUITES)


def suite_rng(seed: int, name: str):
    return np.random.default_rng([int(seed), SUITE_NAMES.index(name)])


def run_suite(name: str, s: Scenario):
    fn = {n: f for n, _, f in SUITES}[name]
    return fn(s, suite_rng(s.seed, name))
