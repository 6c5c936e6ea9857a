"""Sublinear system: own power plus cross power, times a norm power of the partner.

Component ``i`` has right-hand side

    (u_i^{beta_i} + u_j^{gamma_i}) |u_j|_{q_i}^{alpha_i} / A(x, |u_j|_{r_i}).

The pair is the boundary-layer lower function under the constant-RHS
upper function, with ``k`` and ``lam`` chosen by a verified ladder search.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from ..domain import Grid
from ..pxsolver import SolverOptions
from ..subsuper import (SubSuperPair, corner_ridge_mask, default_delta, layer_pair,
                        select_sublinear_parameters, verify_subsupersolution)
from ..system import SystemSpec
from ._shared import check_regime, coefficient_floor, fields, limit_level_scan, require

__all__ = ["SublinearParams", "sublinear_setup", "sublinear_gates"]


@dataclass
class SublinearParams:
    p: tuple[str, str] = ("2", "2")
    q: tuple[str, str] = ("2", "2")
    r: tuple[str, str] = ("2", "2")
    alpha: tuple[str, str] = ("0.3", "0.3")
    beta: tuple[str, str] = ("0.3", "0.3")
    gamma: tuple[str, str] = ("0.3", "0.3")
    A: str = "1"
    regime: str = "A1"
    a0: float = 1.0
    a_inf: float | None = None
    delta: float | None = None
    w_samples: int = 4
    tol: float = 1e-10
    seed: int = 0
    solver: SolverOptions = field(default_factory=SolverOptions)


def sublinear_gates(grid: Grid, params: SublinearParams) -> None:
    """Exponent inequalities; each failure names the inequality."""
    p = fields(params.p, grid, "laplacian", "p")
    al = fields(params.alpha, grid, "power", "alpha")
    be = fields(params.beta, grid, "power", "beta")
    ga = fields(params.gamma, grid, "power", "gamma")
    for i in (0, 1):
        j = 1 - i
        s = al[i].sup + ga[i].sup
        for pk in p:
            require(0 < s < pk.inf - 1,
                    f"0 < alpha{i + 1}+ + gamma{i + 1}+ < {pk.name}- - 1",
                    f"{s:.6g} vs {pk.inf - 1:.6g}")
        mixed = al[i].sup / (p[j].inf - 1) + be[i].sup / (p[i].inf - 1)
        require(0 < mixed < 1,
                f"0 < alpha{i + 1}+/(p{j + 1}- - 1) + beta{i + 1}+/(p{i + 1}- - 1) < 1",
                f"{mixed:.6g}")


def _build_spec(grid: Grid, params: SublinearParams) -> SystemSpec:
    be, ga = params.beta, params.gamma
    f = (f"u^({be[0]})", f"v^({be[1]})")
    g = (f"v^({ga[0]})", f"u^({ga[1]})")
    return SystemSpec.from_expressions(
        grid, p=params.p, q=params.q, r=params.r, s=params.q,
        alpha=params.alpha, gamma=params.alpha, A=params.A, f=f, g=g,
        regime=params.regime, a0=params.a0, a_inf=params.a_inf,
        monotone_in_other=True, name="sublinear")


def sublinear_setup(grid: Grid, params: SublinearParams | None = None
                    ) -> tuple[SystemSpec, SubSuperPair]:
    """Validate, search ``(k, lam)``, certify. Details land in ``spec.extra``."""
    params = params or SublinearParams()
    sublinear_gates(grid, params)
    spec = _build_spec(grid, params)
    a_inf = params.a_inf
    if params.regime == "A2" and a_inf is None:
        a_inf = float(spec.coefficient(1e12).min())
    check_regime(spec, params.regime, params.a0, a_limit=a_inf)

    delta = default_delta(grid) if params.delta is None else params.delta
    layer, lam = select_sublinear_parameters(
        spec, delta=delta, w_samples=params.w_samples, tol=params.tol, seed=params.seed,
        opts=params.solver)
    pair = layer_pair(spec, layer, lam, params.solver)
    excl = corner_ridge_mask(grid, delta)
    report = verify_subsupersolution(pair, spec, params.w_samples, params.tol, params.seed, excl)
    pair = pair.certify(report)

    extra = {"layer": layer.to_dict(), "lambda": lam, "report": report.to_dict()}
    if params.regime == "A2":
        a1 = limit_level_scan(spec, a_inf / 2.0)
        t_lo = min(spec.norms(1, pair.lower_1).r, spec.norms(2, pair.lower_2).r)
        m_k = coefficient_floor(spec, t_lo, max(a1, t_lo))
        A_k = min(m_k, a_inf / 2.0)
        require(A_k > 0, "A2", f"A_k = {A_k:.6g} is not positive")
        extra.update({"a1": a1, "m_k": m_k, "A_k": A_k, "a_inf": a_inf})
    spec.extra.update(extra)
    return spec, pair
