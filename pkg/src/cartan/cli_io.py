"""Scenario configuration and bit-stable report output."""
from __future__ import annotations

import csv
import io
import json
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import checks
from .evolution import (AlgebraCurve, EvolConfig, PathCurve, _evolve, _threads,
                        develop, develop_polylines, holonomy_scaling, log_norm,
                        holonomy, square_loop)
from .forms import Domain, is_flat
from .lie_core import LieError, group
from .presets import PresetError, form_from_preset, map_from_preset, parse_algebra, split_preset

SUBCOMMANDS = ("check-flat", "develop", "develop-path", "holonomy-scan", "evolve",
               "group-law", "variation", "tangent", "verify-all")
FORMATS = ("csv", "json")
DEFAULT_EPS = (0.2, 0.1, 0.05, 0.025)


class ConfigError(ValueError):
    """Invalid scenario (exit code 2)."""


class EmitError(OSError):
    pass


def _require(cond, msg):
    if not cond:
        raise ConfigError(msg)


def _keys(d, allowed, where):
    _require(isinstance(d, dict), f"{where} must be an object")
    extra = sorted(set(d) - set(allowed))
    _require(not extra, f"unknown key(s) in {where}: {', '.join(extra)}")


@dataclass(frozen=True)
class ScenarioConfig:
    group: str
    form: str
    form2: Optional[str] = None
    resolution: tuple = (9, 9)
    half_widths: tuple = (1.0, 1.0)
    integrator: str = "rkmk4"
    steps: int = 256
    dexpinv_order: int = 4
    tolerances: tuple = ()          # sorted (name, value) pairs
    seed: int = 0
    out_dir: str = "."
    formats: tuple = FORMATS
    path: Optional[tuple] = None    # polyline vertices for develop-path
    eps: tuple = DEFAULT_EPS        # loop sizes for holonomy-scan
    curve: Optional[tuple] = None   # polynomial coefficients of the evolve curve

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioConfig":
        _keys(d, ("group", "form", "form2", "grid", "evol", "tolerances", "seed", "output",
                  "path", "eps", "curve"), "config")
        _require("group" in d and "form" in d, "config needs 'group' and 'form'")
        _require(isinstance(d["group"], str), "group must be a string")
        _require(isinstance(d["form"], str), "form must be a string")
        _require(d.get("form2") is None or isinstance(d["form2"], str), "form2 must be a string")
        grid = d.get("grid", {})
        _keys(grid, ("resolution", "half_widths"), "grid")
        hw = grid.get("half_widths", [1.0, 1.0])
        hw = [hw] if isinstance(hw, (int, float)) else hw
        _require(isinstance(hw, list) and 1 <= len(hw) <= 3
                 and all(isinstance(v, (int, float)) and v > 0 for v in hw),
                 "grid.half_widths must be 1 to 3 positive numbers")
        res = grid.get("resolution", 9)
        res = [res] * len(hw) if isinstance(res, int) else res
        _require(isinstance(res, list) and len(res) == len(hw)
                 and all(isinstance(r, int) and not isinstance(r, bool) and r >= 2 for r in res),
                 "grid.resolution must be integers >= 2, one per axis")
        ev = d.get("evol", {})
        _keys(ev, ("integrator", "steps", "dexpinv_order"), "evol")
        steps = ev.get("steps", 256)
        order = ev.get("dexpinv_order", 4)
        _require(isinstance(steps, int) and steps >= 1, "evol.steps must be an integer >= 1")
        _require(isinstance(order, int) and order >= 1, "evol.dexpinv_order must be an integer >= 1")
        integ = ev.get("integrator", "rkmk4")
        _require(integ in ("rkmk4", "rk4", "rk4_ambient"), f"unknown integrator {integ!r}")
        tol = d.get("tolerances", {})
        _require(isinstance(tol, dict), "tolerances must be an object")
        for k, v in tol.items():
            _require(k in checks.DEFAULT_TOLERANCES, f"unknown tolerance {k!r}")
            _require(isinstance(v, (int, float)) and not isinstance(v, bool) and v > 0,
                     f"tolerance {k!r} must be positive")
        seed = d.get("seed", 0)
        _require(isinstance(seed, int) and not isinstance(seed, bool) and seed >= 0,
                 "seed must be a non-negative integer")
        out = d.get("output", {})
        _keys(out, ("dir", "formats"), "output")
        fmts = out.get("formats", list(FORMATS))
        _require(isinstance(fmts, list) and set(fmts) <= set(FORMATS),
                 "output.formats must be a subset of ['csv', 'json']")
        path = d.get("path")
        if path is not None:
            _require(isinstance(path, list) and len(path) >= 2
                     and all(isinstance(p, list) and len(p) == len(hw) for p in path),
                     "path must be a list of at least two points")
            path = tuple(tuple(float(c) for c in p) for p in path)
        eps = d.get("eps", list(DEFAULT_EPS))
        _require(isinstance(eps, list) and len(eps) >= 2 and all(
            isinstance(e, (int, float)) and e > 0 for e in eps), "eps must be >= 2 positive numbers")
        curve = d.get("curve")
        if curve is not None:
            _require(isinstance(curve, list) and curve and all(isinstance(c, str) for c in curve),
                     "curve must be a list of algebra expressions")
            curve = tuple(curve)
        return cls(d["group"], d["form"], d.get("form2"), tuple(res), tuple(float(v) for v in hw),
                   "rk4_ambient" if integ == "rk4" else integ, steps, order,
                   tuple(sorted((k, float(v)) for k, v in tol.items())), seed,
                   str(out.get("dir", ".")), tuple(sorted(set(fmts), key=FORMATS.index)),
                   path, tuple(float(e) for e in eps), curve)

    def to_dict(self) -> dict:
        d = {
            "group": self.group,
            "form": self.form,
            "grid": {"resolution": list(self.resolution), "half_widths": list(self.half_widths)},
            "evol": {"integrator": self.integrator, "steps": self.steps,
                     "dexpinv_order": self.dexpinv_order},
            "tolerances": dict(self.tolerances),
            "seed": self.seed,
            "output": {"dir": self.out_dir, "formats": list(self.formats)},
            "eps": list(self.eps),
        }
        if self.form2 is not None:
            d["form2"] = self.form2
        if self.path is not None:
            d["path"] = [list(p) for p in self.path]
        if self.curve is not None:
            d["curve"] = list(self.curve)
        return d

    @classmethod
    def load(cls, path) -> "ScenarioConfig":
        try:
            with open(path, encoding="utf-8") as fh:
                data = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"{path}: {exc.strerror or exc}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from None
        return cls.from_dict(data)

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    def replace(self, **kw) -> "ScenarioConfig":
        d = self.__dict__.copy()
        d.update({k: v for k, v in kw.items() if v is not None})
        if d["integrator"] == "rk4":
            d["integrator"] = "rk4_ambient"
        cfg = ScenarioConfig(**d)
        _require(cfg.steps >= 1, "steps must be >= 1")
        _require(cfg.seed >= 0, "seed must be non-negative")
        return cfg

    @property
    def evol(self) -> EvolConfig:
        return EvolConfig(self.integrator, self.steps, self.dexpinv_order)

    def build(self) -> checks.Scenario:
        """Instantiate the scenario; preset errors become ConfigError."""
        try:
            G = group(self.group)
            domain = Domain(self.half_widths)
            xi = form_from_preset(self.form, G, domain)
            xi2 = form_from_preset(self.form2, G, domain) if self.form2 else xi
            F = None
            if split_preset(self.form)[0] in ("pullback-expxy", "su2-zcc"):
                F = map_from_preset(self.form, G, domain)
        except LieError as exc:
            raise ConfigError(str(exc)) from None
        return checks.Scenario(G, domain, xi, xi2, domain.grid(self.resolution), self.evol,
                               self.seed, dict(self.tolerances), F)


@dataclass
class Report:
    scenario: dict
    checks: dict = field(default_factory=dict)    # name -> {value, tolerance, pass}
    results: dict = field(default_factory=dict)   # informational numbers
    timings: dict = field(default_factory=dict)   # seconds; never written to disk

    def add(self, name, value, tolerance):
        value = float(value)
        self.checks[name] = {"value": value, "tolerance": float(tolerance),
                             "pass": bool(value <= tolerance)}

    def add_rows(self, prefix, rows):
        for k, (v, t) in rows.items():
            self.add(f"{prefix}.{k}" if prefix else k, v, t)

    @property
    def passed(self) -> bool:
        return all(r["pass"] for r in self.checks.values())

    def to_dict(self) -> dict:
        return {"scenario": self.scenario, "checks": self.checks, "results": self.results,
                "all_pass": self.passed}


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.floating, float)):
        return float(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


def json_text(obj) -> str:
    return json.dumps(_jsonable(obj), sort_keys=True, indent=2) + "\n"


def csv_text(points, values) -> str:
    """Header ``x1..xd,m00,m01,...`` then one row per point, 17 digits."""
    points = np.asarray(points, dtype=float)
    values = np.asarray(values, dtype=float)
    d = points.shape[-1]
    n = values.shape[-1]
    header = [f"x{i + 1}" for i in range(d)] + [f"m{r}{c}" for r in range(n) for c in range(n)]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for p, m in zip(points.reshape(-1, d), values.reshape(-1, n * n)):
        w.writerow([format(v, ".17g") for v in np.concatenate([p, m])])
    return buf.getvalue()


def table_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([format(v, ".17g") if isinstance(v, (float, np.floating)) else v for v in r])
    return buf.getvalue()


def emit(artifacts: dict, out_dir, formats=FORMATS) -> list:
    """Write ``{filename: text}``; files whose suffix is not in ``formats`` are skipped."""
    out = Path(out_dir)
    written = []
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise EmitError(f"{out}: {exc.strerror or exc}") from None
    for name in sorted(artifacts):
        if Path(name).suffix.lstrip(".") not in formats:
            continue
        path = out / name
        try:
            with open(path, "w", encoding="utf-8", newline="") as fh:
                fh.write(artifacts[name])
        except OSError as exc:
            raise EmitError(f"{path}: {exc.strerror or exc}") from None
        written.append(str(path))
    return written


# -- subcommands -------------------------------------------------------------

def _timed(report, name, fn, *args):
    t = time.perf_counter()
    out = fn(*args)
    report.timings[name] = time.perf_counter() - t
    return out


def run_check_flat(cfg, s, report, art):
    rep = is_flat(s.xi, max(cfg.resolution), s.tol("flat"))
    report.results.update({"flat": rep.flat, "max_residual": rep.max_residual, "points": rep.points})
    report.add("max_maurer_cartan_residual", rep.max_residual, s.tol("flat"))


def run_develop(cfg, s, report, art):
    dm = develop(s.xi, s.points, s.cfg, check=False)
    rng = checks.suite_rng(cfg.seed, "development")
    dev = checks.path_independence(s.xi, checks._sample(s.domain, rng, 50), s.cfg)
    diag = dict(dm.diagnostics(), path_independence_deviation=dev)
    report.results.update(diag)
    report.add("basepoint_error", dm.basepoint_error, s.tol("basepoint"))
    report.add("max_constraint_residual", dm.max_constraint_residual, s.tol("constraint"))
    report.add("path_independence_deviation", dev, s.tol("path_independence"))
    if s.F is not None:
        ref = s.F(dm.points) @ np.linalg.inv(s.F(np.zeros(s.domain.dim)))
        report.add("round_trip", checks._maxnorm(dm.values - ref), s.tol("round_trip"))
    art["develop.csv"] = csv_text(dm.points, dm.values)
    art["diagnostics.json"] = json_text(diag)


def run_develop_path(cfg, s, report, art):
    _require(cfg.path is not None, "develop-path needs a 'path' list in the config")
    V = np.array(cfg.path)
    try:
        s.domain.check(V)
    except LieError as exc:
        raise ConfigError(f"path: {exc}") from None
    # transport from the first vertex to each later vertex
    G = s.G
    prefixes = [V[: k + 1] for k in range(1, len(V))]
    vals = [develop_polylines(s.xi, p[None], s.cfg)[0] for p in prefixes]
    vals = np.stack([np.eye(G.n)] + vals)
    art["develop_path.csv"] = csv_text(V, vals)
    end = vals[-1]
    report.results["transport"] = end
    report.add("constraint_residual", float(G.residual(end)), s.tol("constraint"))
    radial = develop(s.xi, V[-1:] , s.cfg, check=False).values[0]
    start = develop(s.xi, V[:1], s.cfg, check=False).values[0]
    # flat forms: transport equals f(end) f(start)^-1
    if s.xi.flat_certificate is not None or is_flat(s.xi, 5).flat:
        report.add("path_independence_deviation",
                   float(np.linalg.norm(end - radial @ G.inv(start))), s.tol("path_independence"))


def run_holonomy_scan(cfg, s, report, art):
    _require(s.domain.dim >= 2, "holonomy-scan needs a domain of dimension >= 2")
    _require(max(cfg.eps) <= min(s.domain.half_widths), "eps exceeds the domain")
    norms, slope = holonomy_scaling(s.xi, cfg.eps, s.cfg)
    art["holonomy.csv"] = table_text(["eps", "log_holonomy_norm"], zip(cfg.eps, norms))
    report.results.update({"log_holonomy_norms": norms, "slope": slope})
    flat = is_flat(s.xi, 5, s.tol("flat")).flat
    report.results["flat"] = flat
    if flat:
        report.add("max_log_holonomy", max(norms), s.tol("path_independence"))
    else:
        report.add("slope_minus_2", abs(slope - 2.0) if np.isfinite(slope) else np.inf,
                   s.tol("holonomy_slope"))


def _evolve_curve(cfg, s):
    G = s.G
    if cfg.curve is None:
        coefs = [G.basis[0], G.basis[-1] if G.dim > 1 else G.basis[0]]
    else:
        try:
            coefs = [parse_algebra(G, c) for c in cfg.curve]
        except LieError as exc:
            raise ConfigError(f"curve: {exc}") from None
    return AlgebraCurve(G, lambda t: sum(c * t ** k for k, c in enumerate(coefs)))


def run_evolve(cfg, s, report, art):
    G = s.G
    X = _evolve_curve(cfg, s)
    ts = np.linspace(0.0, 1.0, s.cfg.steps + 1)
    gs = _evolve(X, 1.0, s.cfg, "right")
    art["evolve.csv"] = csv_text(ts[:, None], gs)
    drift = float(np.max(G.residual(gs)))
    report.results["constraint_drift"] = drift
    if s.cfg.integrator == "rkmk4":
        report.add("constraint_drift", drift, s.tol("constraint_drift"))
    steps = (32, 64, 128, 256)
    ref = _evolve(X, 1.0, s.cfg.with_steps(4096), "right")[-1]
    errs = [float(np.linalg.norm(_evolve(X, 1.0, s.cfg.with_steps(N), "right")[-1] - ref))
            for N in steps]
    drifts = [float(G.residual(_evolve(X, 1.0, s.cfg.with_steps(N), "right")[-1])) for N in steps]
    art["convergence.csv"] = table_text(["steps", "error", "constraint_drift"], zip(steps, errs, drifts))
    report.results["errors"] = errs
    if min(errs) > 1e-14:
        slope = float(np.polyfit(np.log(steps), np.log(errs), 1)[0])
        report.results["order"] = -slope
        if s.cfg.integrator == "rkmk4":
            report.add("order_minus_4", abs(-slope - 4.0), s.tol("convergence_order"))
    else:
        # the scheme is exact for this curve (e.g. commuting values)
        report.results["order"] = None


def run_suites(cfg, s, report, art, names):
    def one(name):
        t = time.perf_counter()
        try:
            rows, info = checks.run_suite(name, s)
        except PresetError:
            raise
        except LieError as exc:
            # a precondition failed (e.g. a non-flat input); count it as a failed check
            rows, info = {"precondition": (math.inf, 0.0)}, {"error": str(exc)}
        return name, rows, info, time.perf_counter() - t

    workers = min(_threads(), len(names))
    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            done = list(ex.map(one, names))
    else:
        done = [one(n) for n in names]
    for name, rows, info, dt in done:     # merge in fixed order
        report.add_rows(name, rows)
        if info:
            report.results[name] = info
        report.timings[name] = dt


def run_group_law(cfg, s, report, art):
    run_suites(cfg, s, report, art, ["group-structure"])


def run_variation(cfg, s, report, art):
    run_suites(cfg, s, report, art, ["variation"])


def run_tangent(cfg, s, report, art):
    run_suites(cfg, s, report, art, ["tangent-group"])
    G = s.G
    rng = checks.suite_rng(cfg.seed, "tangent-group")
    from .flat_group import variation_form
    from .presets import random_polynomial_function
    from .tangent_semidirect import tangent_develop
    eta = variation_form(s.xi, random_polynomial_function(G, s.domain, rng), s.cfg)
    tm = tangent_develop(s.xi, eta, s.points, s.cfg)
    art["tangent_develop.csv"] = csv_text(s.points, tm.vectors)


def run_verify_all(cfg, s, report, art):
    run_suites(cfg, s, report, art, list(checks.SUITE_NAMES))
    report.results["coverage"] = [desc for _, desc, _ in checks.SUITES]


RUNNERS = {
    "check-flat": run_check_flat,
    "develop": run_develop,
    "develop-path": run_develop_path,
    "holonomy-scan": run_holonomy_scan,
    "evolve": run_evolve,
    "group-law": run_group_law,
    "variation": run_variation,
    "tangent": run_tangent,
    "verify-all": run_verify_all,
}


def run(subcommand: str, cfg: ScenarioConfig):
    """Run a subcommand; returns the report and ``{filename: text}`` artifacts."""
    if subcommand not in RUNNERS:
        raise ConfigError(f"unknown subcommand {subcommand!r}")
    s = cfg.build()
    echo = cfg.to_dict()
    del echo["output"]   # where files go does not change their content
    report = Report(echo)
    art = {}
    t = time.perf_counter()
    try:
        RUNNERS[subcommand](cfg, s, report, art)
    except PresetError as exc:
        raise ConfigError(str(exc)) from None
    report.timings["total"] = time.perf_counter() - t
    art["report.json"] = json_text(report.to_dict())
    return report, art
