"""Command line front end: ``pxlap <subcommand> --config FILE [--out DIR] [--seed N]``.

Every run validates the whole configuration (expressions, exponent
hypotheses, application gates) before any solve and before creating the
output directory. Exit status: 0 success, 1 validation error, 2 honest
failure (no convergence, pair not certified, threshold exceeded).
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .applications import (ConcaveConvexProblem, LogisticParams, SublinearParams,
                           ThresholdReport, concave_convex_setup, logistic_setup,
                           sublinear_setup)
from .applications.concave_convex import concave_convex_gates
from .applications.logistic import TruncatedReaction, logistic_gates
from .applications.sublinear import sublinear_gates
from .config import ConfigError, RunConfig, load_config
from .domain import ExponentField, Grid, GridFunction, HypothesisError, build_grid, eval_field
from .expr import ExpressionError, compile_expression
from .fixedpoint import PicardOptions, continuum_sweep, solve_system
from .pxsolver import ConvergenceError, SolverOptions, solve_dirichlet
from .report import Report
from .subsuper import (BoundaryLayerParams, ParameterSearchError, SubSuperPair,
                       corner_ridge_mask, default_delta, exponent_ratio_constant, layer_pair,
                       select_sublinear_parameters, verify_subsupersolution)
from .system import SystemSpec
from .varlebesgue import holder_pairing_check, luxemburg_norm, modular_norm_diagnostics

EXIT_OK, EXIT_INVALID, EXIT_FAILED = 0, 1, 2
SUBCOMMANDS = ("norm", "solve-dirichlet", "solve-system", "verify-subsuper", "sweep", "app")
APPS = ("sublinear", "concave_convex", "logistic")

_PAIRED = ("p", "q", "r", "s", "alpha", "gamma", "f", "g")
KNOWN_KEYS = (
    {"domain.dim", "domain.n", "domain.bounds", "domain.delta", "run.seed",
     "solver.tol", "solver.max_iter", "solver.reg_eps", "verify.tol", "verify.w_samples",
     "picard.max_iter", "picard.step_tol", "picard.residual_tol", "picard.relaxation",
     "picard.shift", "norm.u", "norm.p", "norm.v", "dirichlet.p", "dirichlet.f",
     "dirichlet.shift", "system.A", "system.regime", "system.a0", "system.a_inf",
     "system.monotone", "pair.kind", "pair.k", "pair.lambda", "sweep.lambdas",
     "app.A", "app.regime", "app.a0", "app.a_inf", "app.b0", "app.lambda", "app.theta"}
    | {f"system.{k}{i}" for k in _PAIRED for i in (1, 2)}
    | {f"pair.{k}{i}" for k in ("lower", "upper") for i in (1, 2)}
    | {f"app.{k}{i}" for k in ("p", "q", "r", "s", "alpha", "beta", "gamma", "eta", "f", "theta")
       for i in (1, 2)}
)


class ValidationError(ValueError):
    pass


# ---------------------------------------------------------------- output
def _plain(value):
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return _plain(value.tolist())
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        v = float(value)
        return v if math.isfinite(v) else ("inf" if v > 0 else "-inf" if v < 0 else "nan")
    return value


class Artifacts:
    """Writes into ``out``; the directory is created on first write only."""

    def __init__(self, out: str):
        self.out = out
        self.written: list[str] = []

    def _path(self, name: str) -> str:
        os.makedirs(self.out, exist_ok=True)
        path = os.path.join(self.out, name)
        self.written.append(path)
        return path

    def json(self, name: str, data) -> None:
        with open(self._path(name), "w", encoding="utf-8") as fh:
            json.dump(_plain(data), fh, sort_keys=True, indent=2)
            fh.write("\n")

    def jsonl(self, name: str, rows) -> None:
        with open(self._path(name), "w", encoding="utf-8") as fh:
            for row in rows:
                fh.write(json.dumps(_plain(row), sort_keys=True) + "\n")

    def csv(self, name: str, u: GridFunction) -> None:
        grid = u.grid
        cols = list(grid.coords) + [u.values]
        header = ",".join(["x", "y"][: grid.dim] + ["value"])
        with open(self._path(name), "w", encoding="utf-8") as fh:
            fh.write(header + "\n")
            for row in zip(*cols):
                fh.write(",".join("%.17g" % v for v in row) + "\n")


# ------------------------------------------------------------ validation
@dataclass
class Plan:
    """A validated run: the work to do once outputs may be created."""

    execute: Callable[[Artifacts], int]
    summary: dict = field(default_factory=dict)


def _grid(cfg: RunConfig) -> Grid:
    dim = cfg.integer("domain.dim", 1)
    n = cfg.integer("domain.n", 65)
    bounds = None
    if "domain.bounds" in cfg:
        parts = [p for p in cfg.text("domain.bounds").split(";") if p.strip()]
        try:
            bounds = [[float(x) for x in p.split(",")] for p in parts]
        except ValueError:
            raise cfg._error("domain.bounds", "expected 'a,b' or 'a,b;c,d'") from None
        bounds = bounds[0] if len(bounds) == 1 else bounds
    return build_grid(dim, n, bounds)


def _solver(cfg: RunConfig) -> SolverOptions:
    base = SolverOptions()
    return SolverOptions(reg_eps=cfg.number("solver.reg_eps", base.reg_eps),
                         max_iter=cfg.integer("solver.max_iter", base.max_iter),
                         tol=cfg.number("solver.tol", base.tol))


def _picard(cfg: RunConfig, solver: SolverOptions, shift: float | None = None) -> PicardOptions:
    base = PicardOptions()
    return PicardOptions(max_iter=cfg.integer("picard.max_iter", base.max_iter),
                         step_tol=cfg.number("picard.step_tol", base.step_tol),
                         residual_tol=cfg.number("picard.residual_tol", base.residual_tol),
                         relaxation=cfg.number("picard.relaxation", base.relaxation),
                         shift=cfg.number("picard.shift", base.shift if shift is None else shift),
                         solver=solver)


def _check_expr(cfg: RunConfig, key: str, variables, dim: int) -> str:
    text = cfg.text(key)
    try:
        expr = compile_expression(text, variables)
    except ExpressionError as exc:
        raise cfg._error(key, str(exc)) from None
    if dim == 1 and "y" in expr.names_used:
        raise cfg._error(key, "'y' is not defined on a 1-D grid")
    return text


def _pairs(cfg, section, name, default, variables, dim):
    out = []
    for i in (1, 2):
        key = f"{section}.{name}{i}"
        if key not in cfg:
            if default is None:
                raise ConfigError(f"missing required key {key!r}", source=cfg.source)
            out.append(default)
        else:
            out.append(_check_expr(cfg, key, variables, dim))
    return tuple(out)


def _regime(cfg: RunConfig, key: str, default: str | None = None) -> str | None:
    text = cfg.text(key, default or "none").upper()
    if text not in ("A1", "A2", "NONE"):
        raise cfg._error(key, f"expected A1, A2 or none, got {cfg.text(key)!r}")
    return None if text == "NONE" else text


def _system(cfg: RunConfig, grid: Grid) -> SystemSpec:
    d = grid.dim
    xy = ("x", "y")
    fx = ("x", "y", "u", "v")
    p = _pairs(cfg, "system", "p", None, xy, d)
    q = _pairs(cfg, "system", "q", "2", xy, d)
    return SystemSpec.from_expressions(
        grid, p=p, q=q, r=_pairs(cfg, "system", "r", "2", xy, d),
        s=_pairs(cfg, "system", "s", None, xy, d) if "system.s1" in cfg else q,
        alpha=_pairs(cfg, "system", "alpha", "0", xy, d),
        gamma=_pairs(cfg, "system", "gamma", "0", xy, d),
        A=_check_expr(cfg, "system.A", ("x", "y", "t"), d) if "system.A" in cfg else "1",
        f=_pairs(cfg, "system", "f", None, fx, d), g=_pairs(cfg, "system", "g", "0", fx, d),
        regime=_regime(cfg, "system.regime"),
        a0=cfg.optional_number("system.a0"), a_inf=cfg.optional_number("system.a_inf"),
        monotone_in_other=cfg.flag("system.monotone"), name="system")


def _pair_builder(cfg: RunConfig, spec: SystemSpec, solver, verify_tol, w_samples, seed):
    """Validates the pair block; returns a thunk building the pair and exclusion mask."""
    grid = spec.grid
    kind = cfg.text("pair.kind", "layer")
    delta = cfg.number("domain.delta", default_delta(grid))
    if kind == "explicit":
        texts = {k: _check_expr(cfg, f"pair.{k}", ("x", "y"), grid.dim)
                 for k in ("lower1", "lower2", "upper1", "upper2")}

        def build():
            f = {k: eval_field(t, grid) for k, t in texts.items()}
            return (SubSuperPair(f["lower1"], f["lower2"], f["upper1"], f["upper2"]), None,
                    {"kind": "explicit", **texts})
        return build
    if kind != "layer":
        raise cfg._error("pair.kind", f"expected 'layer' or 'explicit', got {kind!r}")
    k = cfg.optional_number("pair.k")
    lam = cfg.optional_number("pair.lambda")
    if (k is None) != (lam is None):
        raise ConfigError("pair.k and pair.lambda must be given together", source=cfg.source)

    def build():
        if k is None:
            params, lam_ = select_sublinear_parameters(spec, delta=delta, w_samples=w_samples,
                                                       tol=verify_tol, seed=seed, opts=solver)
        else:
            params = BoundaryLayerParams.from_k(k, delta, exponent_ratio_constant(*spec.p))
            lam_ = lam
        pair = layer_pair(spec, params, lam_, solver)
        return pair, corner_ridge_mask(grid, delta), {"kind": "layer", "lambda": lam_,
                                                      **params.to_dict()}
    return build


def _pair_summary(pair: SubSuperPair, info: dict, report: Report | None) -> dict:
    out = {"certified": pair.certified, **info}
    for name, u in (("lower_1", pair.lower_1), ("lower_2", pair.lower_2),
                    ("upper_1", pair.upper_1), ("upper_2", pair.upper_2)):
        out[f"{name}_max"] = u.max()
    if report is not None:
        out["report"] = report.to_dict()
    return out


def _write_pair(art: Artifacts, pair: SubSuperPair) -> None:
    art.csv("lower_1.csv", pair.lower_1)
    art.csv("lower_2.csv", pair.lower_2)
    art.csv("upper_1.csv", pair.upper_1)
    art.csv("upper_2.csv", pair.upper_2)


# ------------------------------------------------------------- commands
def plan_norm(cfg: RunConfig, grid: Grid, seed: int) -> Plan:
    d = grid.dim
    u = eval_field(_check_expr(cfg, "norm.u", ("x", "y"), d), grid)
    p = ExponentField.from_expr(_check_expr(cfg, "norm.p", ("x", "y"), d), grid, "lebesgue", "p")
    v = eval_field(_check_expr(cfg, "norm.v", ("x", "y"), d), grid) if "norm.v" in cfg else None
    if v is not None and p.inf <= 1:
        raise ValidationError("(H): the Hoelder check needs p^- > 1")

    def execute(art: Artifacts) -> int:
        out = {"norm": luxemburg_norm(u, p), "p_inf": p.inf, "p_sup": p.sup}
        ok = True
        if u.sup_norm() > 0:
            diag = modular_norm_diagnostics(u, p)
            out["diagnostics"] = diag.to_report().to_dict()
            ok = diag.passed
        if v is not None:
            hold = holder_pairing_check(u, v, p)
            out["holder"] = hold.to_dict()
            ok = ok and hold.passed
        art.json("report.json", out)
        return EXIT_OK if ok else EXIT_FAILED
    return Plan(execute)


def plan_dirichlet(cfg: RunConfig, grid: Grid, seed: int) -> Plan:
    d = grid.dim
    p = ExponentField.from_expr(_check_expr(cfg, "dirichlet.p", ("x", "y"), d), grid,
                                "laplacian", "p")
    if p.inf <= 1:
        raise ValidationError(f"(H): p^- > 1 violated by p (min {p.inf:.6g})")
    f = eval_field(_check_expr(cfg, "dirichlet.f", ("x", "y"), d), grid)
    shift = cfg.number("dirichlet.shift", 0.0)
    if shift < 0:
        raise cfg._error("dirichlet.shift", "must be nonnegative")
    solver = _solver(cfg)

    def execute(art: Artifacts) -> int:
        sol = solve_dirichlet(f, p, solver, shift=shift, raise_on_failure=False)
        art.csv("u.csv", sol.u)
        art.jsonl("trace.jsonl", sol.history)
        art.json("report.json", {"converged": sol.converged, "iterations": sol.iterations,
                                 "residual": sol.final_residual, "energy": sol.energy,
                                 "method": sol.method, "max": sol.u.max()})
        return EXIT_OK if sol.converged else EXIT_FAILED
    return Plan(execute)


def _verify_settings(cfg):
    return cfg.number("verify.tol", 1e-10), cfg.integer("verify.w_samples", 4)


def plan_verify(cfg: RunConfig, grid: Grid, seed: int) -> Plan:
    spec = _system(cfg, grid)
    solver = _solver(cfg)
    vtol, ws = _verify_settings(cfg)
    build = _pair_builder(cfg, spec, solver, vtol, ws, seed)

    def execute(art: Artifacts) -> int:
        try:
            pair, excl, info = build()
        except ParameterSearchError as exc:
            art.json("report.json", {"certified": False, "error": str(exc),
                                     "last_margins": exc.last_margins})
            return EXIT_FAILED
        rep = verify_subsupersolution(pair, spec, ws, vtol, seed, excl)
        pair = pair.certify(rep)
        art.json("report.json", _pair_summary(pair, info, rep))
        return EXIT_OK if pair.certified else EXIT_FAILED
    return Plan(execute)


def plan_system(cfg: RunConfig, grid: Grid, seed: int) -> Plan:
    spec = _system(cfg, grid)
    solver = _solver(cfg)
    popts = _picard(cfg, solver)
    vtol, ws = _verify_settings(cfg)
    build = _pair_builder(cfg, spec, solver, vtol, ws, seed)

    def execute(art: Artifacts) -> int:
        try:
            pair, excl, info = build()
        except ParameterSearchError as exc:
            art.json("verdict.json", {"certified": False, "error": str(exc)})
            return EXIT_FAILED
        rep = verify_subsupersolution(pair, spec, ws, vtol, seed, excl)
        pair = pair.certify(rep)
        art.json("pair.json", _pair_summary(pair, info, rep))
        return _solve_and_write(art, spec, pair, popts, extra={"certified": pair.certified})
    return Plan(execute)


def _solve_and_write(art, spec, pair, popts, extra=None, certified_required=True) -> int:
    u1, u2, trace = solve_system(spec, pair, popts)
    art.csv("u1.csv", u1)
    art.csv("u2.csv", u2)
    art.jsonl("trace.jsonl", trace.rows)
    verdict = {**trace.verdict(), "iterations": trace.iterations,
               "residual": trace.last_residual, "message": trace.message, **(extra or {})}
    art.json("verdict.json", verdict)
    ok = trace.converged and trace.sandwich_ok and trace.positive_ok
    if certified_required:
        ok = ok and pair.certified
    return EXIT_OK if ok else EXIT_FAILED


def plan_sweep(cfg: RunConfig, grid: Grid, seed: int) -> Plan:
    spec = _system(cfg, grid)
    solver = _solver(cfg)
    popts = _picard(cfg, solver)
    vtol, ws = _verify_settings(cfg)
    lambdas = cfg.numbers("sweep.lambdas")
    if not lambdas or any(b < a for a, b in zip(lambdas, lambdas[1:])) or min(lambdas) < 0:
        raise cfg._error("sweep.lambdas", "need a nonempty nondecreasing list of values >= 0")
    build = _pair_builder(cfg, spec, solver, vtol, ws, seed)

    def execute(art: Artifacts) -> int:
        pair, excl, info = build()
        table = continuum_sweep(spec, pair, lambdas, popts)
        art.jsonl("trace.jsonl", table.rows)
        art.json("sweep.json", {**table.to_dict(), "pair": info})
        return EXIT_OK if all(r["converged"] for r in table.rows) else EXIT_FAILED
    return Plan(execute)


def _app_pairs(cfg, name, default, variables, dim):
    return _pairs(cfg, "app", name, default, variables, dim)


def plan_app(cfg: RunConfig, grid: Grid, seed: int, name: str) -> Plan:
    d = grid.dim
    xy = ("x", "y")
    solver = _solver(cfg)
    vtol, ws = _verify_settings(cfg)
    delta = cfg.optional_number("domain.delta")
    A = _check_expr(cfg, "app.A", ("x", "y", "t"), d) if "app.A" in cfg else None

    if name == "sublinear":
        base = SublinearParams()
        params = SublinearParams(
            p=_app_pairs(cfg, "p", "2", xy, d), q=_app_pairs(cfg, "q", "2", xy, d),
            r=_app_pairs(cfg, "r", "2", xy, d), alpha=_app_pairs(cfg, "alpha", "0.3", xy, d),
            beta=_app_pairs(cfg, "beta", "0.3", xy, d),
            gamma=_app_pairs(cfg, "gamma", "0.3", xy, d), A=A or base.A,
            regime=_regime(cfg, "app.regime", "A1"), a0=cfg.number("app.a0", 1.0),
            a_inf=cfg.optional_number("app.a_inf"), delta=delta, w_samples=ws, tol=vtol,
            seed=seed, solver=solver)
        sublinear_gates(grid, params)
        SystemSpec.from_expressions(grid, p=params.p, q=params.q, r=params.r,
                                    alpha=params.alpha, A=params.A)

        def execute(art: Artifacts) -> int:
            spec, pair = sublinear_setup(grid, params)
            art.json("pair.json", {"certified": pair.certified, **spec.extra})
            _write_pair(art, pair)
            return _solve_and_write(art, spec, pair, _picard(cfg, solver),
                                    extra={"certified": pair.certified})
        return Plan(execute)

    if name == "concave_convex":
        base = ConcaveConvexProblem()
        prob = ConcaveConvexProblem(
            p=_app_pairs(cfg, "p", "2", xy, d), q=_app_pairs(cfg, "q", "2", xy, d),
            r=_app_pairs(cfg, "r", "2", xy, d), s=_app_pairs(cfg, "s", "2", xy, d),
            alpha=_app_pairs(cfg, "alpha", base.alpha[0], xy, d),
            beta=_app_pairs(cfg, "beta", base.beta[0], xy, d),
            eta=_app_pairs(cfg, "eta", base.eta[0], xy, d),
            gamma=_app_pairs(cfg, "gamma", base.gamma[0], xy, d), A=A or base.A,
            regime=_regime(cfg, "app.regime", "A1"), a0=cfg.number("app.a0", 1.0),
            b0=cfg.number("app.b0", 1.0), delta=delta, w_samples=ws, tol=vtol, seed=seed,
            solver=solver)
        lam, theta = cfg.number("app.lambda", 1.0), cfg.number("app.theta", 1.0)
        if lam <= 0 or theta <= 0:
            raise ValidationError("app.lambda and app.theta must be positive")
        concave_convex_gates(grid, prob)
        SystemSpec.from_expressions(grid, p=prob.p, q=prob.q, r=prob.r, s=prob.s,
                                    alpha=prob.alpha, gamma=prob.gamma, A=prob.A)

        def execute(art: Artifacts) -> int:
            out = concave_convex_setup(lam, theta, grid, prob)
            if isinstance(out, ThresholdReport):
                art.json("verdict.json", {"certified": False, "threshold": out.to_dict()})
                return EXIT_FAILED
            spec, pair = out
            art.json("pair.json", {"certified": pair.certified, **spec.extra})
            _write_pair(art, pair)
            return _solve_and_write(art, spec, pair, _picard(cfg, solver),
                                    extra={"certified": pair.certified})
        return Plan(execute)

    if name == "logistic":
        base = LogisticParams()
        thetas = (cfg.number("app.theta1", 1.0), cfg.number("app.theta2", 1.0))
        params = LogisticParams(
            p=_app_pairs(cfg, "p", "2", xy, d), q=_app_pairs(cfg, "q", "2", xy, d),
            r=_app_pairs(cfg, "r", "2", xy, d), alpha=_app_pairs(cfg, "alpha", "0.5", xy, d),
            f=_app_pairs(cfg, "f", base.f[0], ("t",), d), theta=thetas, A=A or base.A,
            delta=delta, w_samples=ws, tol=vtol, seed=seed, solver=solver)
        lam = cfg.optional_number("app.lambda")
        if min(thetas) <= 0:
            raise ValidationError("app.theta1 and app.theta2 must be positive")
        SystemSpec.from_expressions(grid, p=params.p, q=params.q, r=params.r,
                                    alpha=params.alpha, A=params.A)
        logistic_gates(grid, params, [TruncatedReaction(t, th)
                                      for t, th in zip(params.f, params.theta)])

        def execute(art: Artifacts) -> int:
            spec, pair = logistic_setup(lam, grid, params)
            art.json("pair.json", {"certified": pair.certified, **spec.extra})
            _write_pair(art, pair)
            shift = spec.extra["picard_shift"] if "picard.shift" not in cfg else None
            return _solve_and_write(art, spec, pair, _picard(cfg, solver, shift),
                                    extra={"certified": pair.certified})
        return Plan(execute)

    raise ValidationError(f"unknown application {name!r}; expected one of {', '.join(APPS)}")


# ------------------------------------------------------------------ main
def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="pxlap", description=__doc__.splitlines()[0])
    ap.add_argument("subcommand", choices=SUBCOMMANDS)
    ap.add_argument("name", nargs="?", help="application name for 'app'")
    ap.add_argument("--config", required=True)
    ap.add_argument("--out", default="pxlap-out")
    ap.add_argument("--seed", type=int, default=None)
    return ap


def validate(cfg: RunConfig, subcommand: str, name: str | None, seed: int | None) -> Plan:
    """Touch every expression and gate; raises on any problem, creates nothing."""
    unknown = cfg.unused(KNOWN_KEYS)
    if unknown:
        raise cfg._error(unknown[0], "unknown key")
    seed = cfg.integer("run.seed", 0) if seed is None else seed
    if seed < 0:
        raise ValidationError("seed must be nonnegative")
    grid = _grid(cfg)
    if subcommand == "app":
        if name is None:
            raise ValidationError(f"'app' needs an application name: {', '.join(APPS)}")
        return plan_app(cfg, grid, seed, name)
    if name is not None:
        raise ValidationError(f"unexpected argument {name!r} for {subcommand!r}")
    table = {"norm": plan_norm, "solve-dirichlet": plan_dirichlet, "solve-system": plan_system,
             "verify-subsuper": plan_verify, "sweep": plan_sweep}
    return table[subcommand](cfg, grid, seed)


def run(config_path: str, subcommand: str, name: str | None = None, out: str = "pxlap-out",
        seed: int | None = None, stderr=None) -> int:
    stderr = stderr or sys.stderr
    try:
        cfg = load_config(config_path)
        plan = validate(cfg, subcommand, name, seed)
    except (ConfigError, ExpressionError, ValueError) as exc:
        print(f"pxlap: invalid configuration: {exc}", file=stderr)
        return EXIT_INVALID
    art = Artifacts(out)
    try:
        return plan.execute(art)
    except ConvergenceError as exc:
        print(f"pxlap: {exc}", file=stderr)
        return EXIT_FAILED
    except ParameterSearchError as exc:
        print(f"pxlap: {exc}", file=stderr)
        return EXIT_FAILED
    except HypothesisError as exc:
        print(f"pxlap: {exc}", file=stderr)
        return EXIT_INVALID


def main(argv=None) -> int:
    try:
        args = _parser().parse_args(argv)
    except SystemExit as exc:
        # usage errors are validation errors; exit 2 is reserved for honest failures
        return EXIT_OK if exc.code in (0, None) else EXIT_INVALID
    return run(args.config, args.subcommand, args.name, args.out, args.seed)


if __name__ == "__main__":
    sys.exit(main())
