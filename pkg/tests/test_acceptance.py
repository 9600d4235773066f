"""Acceptance gate: one PASS/FAIL line per criterion.

Run with pytest (lines appear in the terminal summary) or directly as a script.
"""
import hashlib
import json
import os
import time

import numpy as np

from cartan import group
from cartan.checks import (_curve, _maxnorm, closed_forms, convergence_table, path_independence,
                           sd_axiom_residuals, so3_test_curves)
from cartan.cli import main
from cartan.evolution import (AlgebraCurve, EvolConfig, _evolve, develop, develop_at,
                              evol_left, evol_left_via_right, holonomy_scaling, naturality_check,
                              reparam_law_residual, reparameterization_check)
from cartan.flat_group import (certify_closed, commutator_oracle, flat_bracket, poincare_inverse,
                               reconstruct_h, star, star_inverse, variation_form)
from cartan.forms import Domain, constant_form, exact_form, pullback_form
from cartan.presets import form_from_preset, map_from_preset, random_polynomial_function
from cartan.tangent_semidirect import evol_sd, tangent_develop, tangent_evol

D2 = Domain.box(2)

ROUND_TRIP_PRESETS = [
    ("so3", "pullback-expxy:L1,0.7*L2+L3"),
    ("so3", "su2-zcc:1.0,0.8"),
    ("se3", "pullback-expxy:L1+P2,0.5*L3-P1"),
    ("sl2", "pullback-expxy:H+E,0.5*F-0.3*H"),
    ("sl2", "su2-zcc:0.6,0.9"),
]
FLAT = ROUND_TRIP_PRESETS[:3]


def _rng(k):
    return np.random.default_rng([2024, k])


def _setting(name, value):
    old = os.environ.get(name)
    os.environ[name] = value
    return old


def _restore(name, old):
    if old is None:
        os.environ.pop(name, None)
    else:
        os.environ[name] = old


def test_criterion_1_round_trip(criterion):
    old = _setting("CARTAN_THREADS", "1")
    try:
        t0 = time.perf_counter()
        cfg = EvolConfig(steps=256)
        pts = D2.grid(33)
        worst = 0.0
        for gname, preset in ROUND_TRIP_PRESETS:
            G = group(gname)
            F = map_from_preset(preset, G, D2)
            dm = develop(pullback_form(F), pts, cfg)
            want = F(pts) @ G.inv(F(np.zeros(2)))
            worst = max(worst, _maxnorm(dm.values - want))
        elapsed = time.perf_counter() - t0
    finally:
        _restore("CARTAN_THREADS", old)
    ok = worst <= 1e-6 and elapsed < 30
    criterion(1, "develop(pullback F) vs F.F(0)^-1, 5 presets, 33x33, N=256", ok,
              f"max={worst:.2e} (<=1e-6) time={elapsed:.1f}s (<30s)")
    assert ok


def test_criterion_2_path_independence(criterion):
    cfg = EvolConfig(steps=256)
    rng = _rng(2)
    dev = 0.0
    for gname, preset in FLAT:
        xi = form_from_preset(preset, group(gname), D2)
        dev = max(dev, path_independence(xi, rng.uniform(-1, 1, (50, 2)), cfg))
    so3 = group("so3")
    control = constant_form(so3, D2, [so3.basis[0], so3.basis[1]])
    _, slope = holonomy_scaling(control, (0.2, 0.1, 0.05, 0.025), EvolConfig(steps=64))
    ok = dev <= 1e-6 and abs(slope - 2) <= 0.2
    criterion(2, "path independence on flat presets and holonomy slope on const:L1,L2", ok,
              f"deviation={dev:.2e} (<=1e-6) slope={slope:.4f} (2+-0.2)")
    assert ok


def test_criterion_3_convergence(criterion):
    so3 = group("so3")
    slopes, drift, rk4_drift = [], 0.0, []
    for X in so3_test_curves():
        slopes.append(convergence_table(X)[1])
        drift = max(drift, float(so3.residual(_evolve(X, 1.0, EvolConfig(steps=32), "right")[-1])))
        g = _evolve(X, 1.0, EvolConfig("rk4_ambient", 32), "right")[-1]
        rk4_drift.append(float(so3.residual(g)))
    ok = all(abs(s + 4) <= 0.3 for s in slopes) and drift <= 1e-10
    criterion(3, "rkmk4 order 4 on 3 so3 curves, constraint drift", ok,
              "slopes=" + ",".join(f"{-s:.3f}" for s in slopes)
              + f" (4+-0.3) drift={drift:.1e} (<=1e-10)"
              + " rk4_ambient drift (reported)=" + ",".join(f"{d:.1e}" for d in rk4_drift))
    assert ok


def test_criterion_4_group_structure(criterion):
    so3 = group("so3")
    cfg = EvolConfig(steps=256)
    xi = form_from_preset("pullback-expxy:L1,0.7*L2+L3", so3, D2)
    eta = form_from_preset("su2-zcc:1.0,0.8", so3, D2)
    pts = D2.grid(5) * 0.9
    f1, f2 = develop_at(xi, pts, cfg), develop_at(eta, pts, cfg)
    star_res = _maxnorm(develop_at(star(xi, eta, cfg), pts, cfg) - f1 @ f2)
    inv_res = _maxnorm(develop_at(star(xi, star_inverse(xi, cfg), cfg), pts, cfg) - np.eye(3))
    b = closed_forms(so3, D2, _rng(4))
    q = D2.grid(2) * 0.5
    oracle = max(_maxnorm(flat_bracket(b[i], b[j]).form(q) - commutator_oracle(b[i], b[j], q))
                 for i, j in ((0, 1), (1, 2), (0, 2)))
    ok = star_res <= 1e-6 and inv_res <= 1e-6 and oracle <= 1e-4
    criterion(4, "star product and inverse, bracket vs commutator oracle", ok,
              f"star={star_res:.1e} inverse={inv_res:.1e} (<=1e-6) bracket={oracle:.1e} (<=1e-4)")
    assert ok


def test_criterion_5_poincare(criterion):
    rng = _rng(5)
    pts = D2.interior_grid(7)
    d_inv, inv_d = 0.0, 0.0
    for gname in ("so3", "se3", "sl2"):
        G = group(gname)
        h0 = random_polynomial_function(G, D2, rng, degree=3)
        beta = certify_closed(exact_form(h0))
        h = poincare_inverse(beta)   # gradient by finite differences
        d_inv = max(d_inv, _maxnorm(h.gradient(pts) - beta.form(pts)))
        inv_d = max(inv_d, _maxnorm(h(pts) - h0(pts)))
    ok = d_inv <= 1e-6 and inv_d <= 1e-10
    criterion(5, "Poincare operator: d(d^-1 beta) and d^-1(d h0)", ok,
              f"d.d^-1={d_inv:.1e} (<=1e-6) d^-1.d={inv_d:.1e} (<=1e-10)")
    assert ok


def test_criterion_6_variation(criterion):
    rng = _rng(6)
    cfg = EvolConfig(steps=128)
    q = D2.grid(5) * 0.9
    worst = 0.0
    for gname, preset in FLAT:
        G = group(gname)
        xi = form_from_preset(preset, G, D2)
        h0 = random_polynomial_function(G, D2, rng)
        h = reconstruct_h(xi, variation_form(xi, h0, cfg), cfg)
        worst = max(worst, _maxnorm(h(q) - h0(q)))
    ok = worst <= 1e-5
    criterion(6, "variation_form then reconstruct_h on 3 presets", ok, f"max={worst:.1e} (<=1e-5)")
    assert ok


def test_criterion_7_tangent(criterion):
    so3 = group("so3")
    rng = _rng(7)
    cfg = EvolConfig(steps=256)
    X, Y = _curve(so3, rng), _curve(so3, rng)
    routes = evol_sd(Y, X, cfg, tol=np.inf).deviation
    e = 1e-5
    g = _evolve(X, 1.0, cfg, "right")[-1]
    gp = _evolve(X + Y.scaled(e), 1.0, cfg, "right")[-1]
    gm = _evolve(X + Y.scaled(-e), 1.0, cfg, "right")[-1]
    tan = float(np.linalg.norm(g.T @ (gp - gm) / (2 * e) - tangent_evol(X, Y, cfg).matrix))
    axioms = max(max(sd_axiom_residuals(group(n), rng).values()) for n in ("so3", "se3", "sl2"))
    xi = form_from_preset("su2-zcc:1.0,0.8", so3, D2)
    eta = variation_form(xi, random_polynomial_function(so3, D2, rng), EvolConfig(steps=128))
    pts = D2.grid(4) * 0.8
    tm = tangent_develop(xi, eta, pts, cfg)
    base = develop_at(xi, pts, cfg)
    fd = (develop_at(xi + e * eta, pts, cfg) - develop_at(xi - e * eta, pts, cfg)) / (2 * e)
    dev_fd = _maxnorm(fd @ np.swapaxes(base, -1, -2) - tm.vectors)
    ok = routes <= 1e-7 and tan <= 1e-4 and axioms <= 1e-10 and dev_fd <= 1e-4
    criterion(7, "semidirect evolution routes, tangent formula, sd axioms, tangent development",
              ok, f"routes={routes:.1e} (<=1e-7) tangent_fd={tan:.1e} (<=1e-4) "
              f"axioms={axioms:.1e} (<=1e-10) develop_fd={dev_fd:.1e} (<=1e-4)")
    assert ok


def test_criterion_8_naturality(criterion):
    cfg = EvolConfig(steps=256)
    pts = D2.grid(5)
    gl3 = group("gl3")
    xi = form_from_preset("pullback-expxy:E11+E23,0.5*E32-E22", gl3, D2)
    det = naturality_check(xi, "det", pts, cfg)
    so = form_from_preset("su2-zcc:1.0,0.8", group("so3"), D2)
    rep = reparameterization_check(so, 0.7, pts * 0.9, cfg)
    X = _curve(group("so3"), _rng(8))
    c512 = EvolConfig(steps=512)
    left = float(np.linalg.norm(evol_left(X, 1.0, c512).matrix
                                - evol_left_via_right(X, 1.0, c512).matrix))
    law = reparam_law_residual(X, lambda t: t * t, lambda t: 2 * t, 0.9, c512)
    ok = det <= 1e-8 and rep <= 1e-9 and left <= 1e-7 and law <= 1e-7
    criterion(8, "det/trace naturality, domain reparameterization, evolution laws at N=512", ok,
              f"det={det:.1e} (<=1e-8) reparam={rep:.1e} (<=1e-9) "
              f"left={left:.1e} law={law:.1e} (<=1e-7)")
    assert ok


def _digests(folder):
    return {p.name: hashlib.sha256(p.read_bytes()).hexdigest() for p in sorted(folder.iterdir())}


def test_criterion_9_determinism(criterion, tmp_path):
    cfg = tmp_path / "scenario.json"
    cfg.write_text(json.dumps({"group": "so3", "form": "su2-zcc:1.0,0.8", "seed": 7,
                               "grid": {"resolution": [5, 5]}, "evol": {"steps": 64}}))
    runs = []
    for k, threads in enumerate(("1", "1", "4")):
        old = _setting("CARTAN_THREADS", threads)
        try:
            out = tmp_path / f"verify{k}"
            main(["verify-all", "--config", str(cfg), "--out", str(out), "--quiet"])
            dev = tmp_path / f"develop{k}"
            main(["develop", "--config", str(cfg), "--out", str(dev), "--quiet"])
        finally:
            _restore("CARTAN_THREADS", old)
        runs.append((_digests(out), _digests(dev)))
    same_seed = runs[0][0] == runs[1][0]
    threads = runs[0] == runs[2]
    ok = same_seed and threads and bool(runs[0][0])
    criterion(9, "verify-all repeatable byte for byte, outputs independent of thread count", ok,
              f"repeat_identical={same_seed} threads_identical={threads}")
    assert ok


if __name__ == "__main__":
    import tempfile
    from pathlib import Path

    def record(number, title, ok, detail=""):
        print(f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {title}  {detail}".rstrip())
        return ok

    failures = 0
    for name, fn in sorted(globals().items()):
        if name.startswith("test_criterion_"):
            try:
                if "tmp_path" in fn.__code__.co_varnames[:fn.__code__.co_argcount]:
                    with tempfile.TemporaryDirectory() as d:
                        fn(record, Path(d))
                else:
                    fn(record)
            except AssertionError:
                failures += 1
    raise SystemExit(1 if failures else 0)
