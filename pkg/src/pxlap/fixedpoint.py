"""Truncated fixed-point map and its Picard iteration.

``Phi(lam, z1, z2) = (u1, u2)`` where ``u_i`` solves
``-Delta_{p_i} u_i = lam H_i(T_1 z1, T_2 z2)`` and ``T_i`` clamps into
the order interval of a sub-supersolution pair. Fixed points at
``lam = 1`` that stay inside the box are solutions of the nonlocal system.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .domain import GridFunction
from .pxsolver import SolverOptions, apply_px_laplacian, solve_dirichlet
from .subsuper import SubSuperPair
from .system import CoefficientError, SystemSpec
from .varlebesgue import luxemburg_norm

__all__ = [
    "PicardOptions",
    "IterationTrace",
    "SweepTable",
    "truncate",
    "nonlocal_rhs",
    "nonlocal_bound",
    "fixed_point_map",
    "solve_system",
    "weak_residual",
    "continuum_sweep",
    "a_priori_bound",
]


@dataclass(frozen=True)
class PicardOptions:
    """Outer-iteration controls.

    ``relaxation`` blends ``u <- (1 - w) u + w Phi(u)``. A positive
    ``shift`` ``c`` replaces each half-step by
    ``-Delta_p u + c u = H(Tz) + c Tz``, which has the same fixed points
    and makes the map order preserving once ``c`` dominates the
    Lipschitz constant of ``H``. ``step_tol`` is relative to
    ``max(1, |u_i|)`` in the ``L^{p_i}`` norm.
    """

    max_iter: int = 200
    step_tol: float = 1e-10
    residual_tol: float = 1e-8
    relaxation: float = 1.0
    shift: float = 0.0
    solver: SolverOptions = field(default_factory=SolverOptions)

    def __post_init__(self):
        if not 0 < self.relaxation <= 1:
            raise ValueError("relaxation must lie in (0, 1]")
        if self.shift < 0:
            raise ValueError("shift must be nonnegative")


@dataclass
class IterationTrace:
    rows: list[dict] = field(default_factory=list)
    converged: bool = False
    sandwich_ok: bool = False
    positive_ok: bool = False
    message: str = ""

    def verdict(self) -> dict:
        return {"converged": self.converged, "sandwich_ok": self.sandwich_ok,
                "positive_ok": self.positive_ok}

    @property
    def iterations(self) -> int:
        return len(self.rows)

    @property
    def last_residual(self) -> float:
        return self.rows[-1]["residual"] if self.rows else math.inf


def truncate(z, lower, upper) -> GridFunction:
    """Nodewise clamp of ``z`` into ``[lower, upper]``."""
    lo = lower.values if isinstance(lower, GridFunction) else np.asarray(lower, float)
    hi = upper.values if isinstance(upper, GridFunction) else np.asarray(upper, float)
    zv = z.values if isinstance(z, GridFunction) else np.asarray(z, float)
    if np.any(lo > hi):
        raise ValueError("truncation needs lower <= upper nodewise")
    grid = next(x.grid for x in (z, lower, upper) if isinstance(x, GridFunction))
    return GridFunction(grid, np.minimum(np.maximum(zv, lo), hi))


def _vals(u) -> np.ndarray:
    return u.values if isinstance(u, GridFunction) else np.asarray(u, dtype=float)


def nonlocal_rhs(i: int, u1, u2, spec: SystemSpec) -> GridFunction:
    """``H_i(u1, u2)``: reactions times norm powers of the other component over ``A``.

    Raises :class:`CoefficientError` when ``A`` is not positive at the
    required norm value.
    """
    if i not in (1, 2):
        raise ValueError("component index must be 1 or 2")
    return GridFunction(spec.grid, spec.rhs(i, _vals(u1), _vals(u2)))


def nonlocal_bound(i: int, spec: SystemSpec, pair: SubSuperPair, levels: int = 9) -> float:
    """A sampled bound ``K_i >= |H_i(T_1 z1, T_2 z2)|`` over the whole box.

    Reactions are sampled on a tensor grid of nodewise convex
    combinations; norm powers take the worse of the two endpoint norms;
    the coefficient takes its sampled minimum over the reachable norms.
    """
    k = i - 1
    lo_j, hi_j = pair.lower[1 - k].values, pair.upper[1 - k].values
    nlo, nhi = spec.norms(i, lo_j), spec.norms(i, hi_j)
    a_min, _ = spec.coefficient_range(nlo.r, nhi.r)
    if np.any(a_min <= 0):
        raise CoefficientError(f"A(x, t) <= 0 on [{nlo.r:.6g}, {nhi.r:.6g}]")
    al, ga = spec.alpha[k].values, spec.gamma[k].values
    qpow = np.maximum(nlo.q**al, nhi.q**al)
    spow = np.maximum(nlo.s**ga, nhi.s**ga)
    fmax = np.zeros(spec.grid.size)
    gmax = np.zeros(spec.grid.size)
    ts = np.linspace(0.0, 1.0, levels)
    l1, h1 = pair.lower_1.values, pair.upper_1.values
    l2, h2 = pair.lower_2.values, pair.upper_2.values
    for a in ts:
        for b in ts:
            fv, gv = spec.reactions(i, l1 + a * (h1 - l1), l2 + b * (h2 - l2))
            fmax = np.maximum(fmax, np.abs(fv))
            gmax = np.maximum(gmax, np.abs(gv))
    return float(((fmax * qpow + gmax * spow) / a_min).max())


def _truncated_rhs(spec, pair, z1, z2):
    t1 = truncate(z1, pair.lower_1, pair.upper_1).values
    t2 = truncate(z2, pair.lower_2, pair.upper_2).values
    return (t1, t2), (spec.rhs(1, t1, t2), spec.rhs(2, t1, t2))


def fixed_point_map(lam: float, z1, z2, spec: SystemSpec, pair: SubSuperPair,
                    opts: PicardOptions | SolverOptions | None = None):
    """``Phi(lam, z1, z2)``: two independent Dirichlet solves."""
    sopts = opts.solver if isinstance(opts, PicardOptions) else opts
    if lam == 0:
        return spec.grid.zeros(), spec.grid.zeros()
    _, (H1, H2) = _truncated_rhs(spec, pair, _vals(z1), _vals(z2))
    u1 = solve_dirichlet(lam * H1, spec.p[0], sopts).u
    u2 = solve_dirichlet(lam * H2, spec.p[1], sopts).u
    return u1, u2


def _shifted_map(lam, z, spec, pair, opts: PicardOptions, initial):
    (t1, t2), (H1, H2) = _truncated_rhs(spec, pair, z[0], z[1])
    c = opts.shift
    out = []
    for k, (t, H) in enumerate(((t1, H1), (t2, H2))):
        sol = solve_dirichlet(lam * H + c * t, spec.p[k], opts.solver, shift=c,
                              initial=initial[k] if initial is not None else None)
        out.append(sol.u.values)
    return out


def weak_residual(u1, u2, spec: SystemSpec) -> float:
    """Largest defect of the weak formulation over the nodal hat functions.

    For the hat at node ``k`` the defect is ``w_k (A(u_i)_k - H_i(u)_k)``;
    it is divided by the hat's mass ``w_k`` and by ``max(1, max|H_i|)``.
    """
    a, b = _vals(u1), _vals(u2)
    interior = ~spec.grid.boundary_mask
    worst = 0.0
    for i, u in ((1, a), (2, b)):
        H = spec.rhs(i, a, b)
        Au = apply_px_laplacian(u, spec.p[i - 1]).values
        scale = max(1.0, float(np.abs(H[interior]).max()))
        worst = max(worst, float(np.abs(Au - H)[interior].max()) / scale)
    return worst


def _sandwich_margin(pair: SubSuperPair, u) -> float:
    return min(float(min((u[k] - pair.lower[k].values).min(),
                         (pair.upper[k].values - u[k]).min())) for k in (0, 1))


def _picard(lam, spec, pair, opts: PicardOptions, start, trace: IterationTrace):
    u = [np.array(start[0], float), np.array(start[1], float)]
    w = opts.relaxation
    for n in range(1, opts.max_iter + 1):
        if opts.shift > 0:
            new = _shifted_map(lam, u, spec, pair, opts, initial=u)
        else:
            new = [x.values for x in fixed_point_map(lam, u[0], u[1], spec, pair, opts)]
        new = [(1 - w) * u[k] + w * new[k] for k in (0, 1)]
        steps = [luxemburg_norm(new[k] - u[k], spec.p[k]) /
                 max(1.0, luxemburg_norm(new[k], spec.p[k])) for k in (0, 1)]
        u = new
        res = weak_residual(u[0], u[1], _scaled(spec, lam))
        trace.rows.append({"n": n, "step_norm_1": steps[0], "step_norm_2": steps[1],
                           "residual": res, "margin_min": _sandwich_margin(pair, u)})
        if max(steps) <= opts.step_tol and res <= opts.residual_tol:
            trace.converged = True
            break
    return u


class _ScaledSpec:
    """View of a spec whose right-hand sides are multiplied by ``lam``."""

    def __init__(self, spec: SystemSpec, lam: float):
        self._spec, self._lam = spec, lam

    def __getattr__(self, name):
        return getattr(self._spec, name)

    def rhs(self, i, u1, u2, norms=None, t=None):
        return self._lam * self._spec.rhs(i, u1, u2, norms, t)


def _scaled(spec, lam):
    return spec if lam == 1 else _ScaledSpec(spec, lam)


def solve_system(spec: SystemSpec, pair: SubSuperPair, opts: PicardOptions | None = None,
                 start=None, lam: float = 1.0, tol: float = 1e-10):
    """Picard iteration of ``Phi(lam, .)`` from the lower pair.

    Stops when both relative ``L^{p_i}`` steps are below ``step_tol`` and
    the weak residual is below ``residual_tol``. Then checks that the
    result lies in the box (within ``tol``) and is positive on interior
    nodes. Non-convergence is reported in the trace, not raised.
    """
    opts = opts or PicardOptions()
    trace = IterationTrace()
    start = start if start is not None else (pair.lower_1.values, pair.lower_2.values)
    u = _picard(lam, spec, pair, opts, start, trace)
    if not trace.converged:
        trace.message = (f"no convergence in {opts.max_iter} iterations; "
                         f"last residual {trace.last_residual:.3e}")
    interior = ~spec.grid.boundary_mask
    trace.sandwich_ok = bool(all(
        np.all(u[k] >= pair.lower[k].values - tol) and np.all(u[k] <= pair.upper[k].values + tol)
        for k in (0, 1)))
    trace.positive_ok = bool(all(np.all(u[k][interior] > 0) for k in (0, 1)))
    return GridFunction(spec.grid, u[0]), GridFunction(spec.grid, u[1]), trace


@dataclass
class SweepTable:
    rows: list[dict] = field(default_factory=list)

    @property
    def passes_through_origin(self) -> bool:
        zero = [r for r in self.rows if r["lambda"] == 0]
        return bool(zero) and all(r["norm_1"] == 0 and r["norm_2"] == 0 for r in zero)

    @property
    def nondecreasing(self) -> bool:
        ok = [r for r in self.rows if r["converged"]]
        return all(b["norm_1"] >= a["norm_1"] - 1e-12 and b["norm_2"] >= a["norm_2"] - 1e-12
                   for a, b in zip(ok, ok[1:]))

    def to_dict(self) -> dict:
        return {"rows": self.rows, "passes_through_origin": self.passes_through_origin,
                "nondecreasing": self.nondecreasing}


def continuum_sweep(spec: SystemSpec, pair: SubSuperPair, lambdas,
                    opts: PicardOptions | None = None) -> SweepTable:
    """Follow the fixed points of ``Phi(lam, .)`` along increasing ``lam``.

    Each point is warm-started from the previous one. A point that fails
    to converge is recorded and the sweep continues.
    """
    lambdas = [float(x) for x in lambdas]
    if any(b < a for a, b in zip(lambdas, lambdas[1:])):
        raise ValueError("lambdas must be nondecreasing")
    opts = opts or PicardOptions()
    table = SweepTable()
    u = (np.zeros(spec.grid.size), np.zeros(spec.grid.size))
    for lam in lambdas:
        if lam == 0:
            u = (np.zeros(spec.grid.size), np.zeros(spec.grid.size))
            table.rows.append({"lambda": 0.0, "norm_1": 0.0, "norm_2": 0.0, "converged": True,
                               "iterations": 0, "residual": 0.0})
            continue
        trace = IterationTrace()
        new = _picard(lam, spec, pair, opts, u, trace)
        table.rows.append({"lambda": lam,
                           "norm_1": luxemburg_norm(new[0], spec.p[0]),
                           "norm_2": luxemburg_norm(new[1], spec.p[1]),
                           "converged": trace.converged, "iterations": trace.iterations,
                           "residual": trace.last_residual})
        u = (new[0], new[1])
    return table


def a_priori_bound(lam: float, K: float, grid, poincare: float) -> float:
    """``|u|_2 <= lam K |Omega|^{1/2} C_P^2`` for exponent 2 and ``|RHS| <= lam K``."""
    return lam * K * math.sqrt(grid.measure) * poincare**2

