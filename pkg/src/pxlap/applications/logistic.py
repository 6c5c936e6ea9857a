"""Logistic system: reactions vanishing at zero and at a cap ``theta_i``.

Component ``i`` has right-hand side

    lam f_i(u_i) |u_j|_{q_i}^{alpha_i} / A(x, |u_j|_{r_i}).

The lower functions minimize the decoupled truncated energies
``J_i(u) = int |grad u|^{p_i} / p_i - lam~ int F~_i(u)``; the upper
functions are the constants ``theta_i``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from ..domain import ExponentField, Grid, GridFunction, boundary_distance
from ..expr import compile_expression
from ..pxsolver import (SolverOptions, apply_px_laplacian, energy, energy_gradient, energy_hessian,
                        solve_dirichlet)
from ..subsuper import SubSuperPair, default_delta, verify_subsupersolution
from ..system import SystemSpec
from ..varlebesgue import luxemburg_norm
from ._shared import GateError, coefficient_ceiling, coefficient_floor, fields, require

__all__ = [
    "LogisticParams",
    "TruncatedReaction",
    "EnergyMinimum",
    "seed_bump",
    "truncated_energy",
    "lambda_tilde_scan",
    "minimize_truncated_energy",
    "logistic_gates",
    "logistic_setup",
]

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(12)


class TruncatedReaction:
    """``f~(t) = f(t)`` on ``[0, theta]`` and zero elsewhere, with its primitive."""

    def __init__(self, text: str, theta: float, panels: int = 64):
        if not theta > 0:
            raise ValueError("theta must be positive")
        self.text = text
        self.theta = float(theta)
        self._expr = compile_expression(text, ("t",))
        # primitive on a panel grid, Gauss-Legendre on each panel
        self._knots = np.linspace(0.0, self.theta, panels + 1)
        cum = [0.0]
        for a, b in zip(self._knots[:-1], self._knots[1:]):
            cum.append(cum[-1] + self._gauss(a, b))
        self._cum = np.array(cum)

    def raw(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        return np.broadcast_to(np.asarray(self._expr.evaluate({"t": t}), dtype=float), t.shape)

    def __call__(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        inside = (t >= 0) & (t <= self.theta)
        return np.where(inside, self.raw(np.clip(t, 0.0, self.theta)), 0.0)

    def _gauss(self, a, b) -> float:
        mid, half = 0.5 * (a + b), 0.5 * (b - a)
        return float(half * (_GL_WEIGHTS @ self.raw(mid + half * _GL_NODES)))

    def primitive(self, t) -> np.ndarray:
        """``F~(t) = int_0^t f~``; constant beyond ``theta``, zero below zero."""
        t = np.clip(np.asarray(t, dtype=float), 0.0, self.theta)
        idx = np.clip(np.searchsorted(self._knots, t, side="right") - 1, 0, len(self._knots) - 2)
        a = self._knots[idx]
        half = 0.5 * (t - a)
        pts = (a + half)[..., None] + half[..., None] * _GL_NODES
        return self._cum[idx] + half * (self.raw(pts) @ _GL_WEIGHTS)

    def derivative(self, t, rel_step: float = 1e-6) -> np.ndarray:
        """Central-difference ``f~'``; zero outside ``[0, theta]``."""
        t = np.asarray(t, dtype=float)
        h = rel_step * self.theta
        inside = (t >= 0) & (t <= self.theta)
        tc = np.clip(t, 0.0, self.theta)
        return np.where(inside, (self.raw(tc + h) - self.raw(tc - h)) / (2 * h), 0.0)

    def lipschitz(self, samples: int = 4097) -> float:
        ts = np.linspace(0.0, self.theta, samples)
        return float(np.abs(np.diff(self.raw(ts)) / np.diff(ts)).max())


@dataclass
class LogisticParams:
    p: tuple[str, str] = ("2", "2")
    q: tuple[str, str] = ("2", "2")
    r: tuple[str, str] = ("2", "2")
    alpha: tuple[str, str] = ("0.5", "0.5")
    f: tuple[str, str] = ("t*(1 - t)", "t*(1 - t)")
    theta: tuple[float, float] = (1.0, 1.0)
    A: str = "1 + t"
    delta: float | None = None
    ladder: tuple[float, ...] = tuple(2.0**e for e in range(0, 31))
    mm_tol: float = 1e-11
    mm_max_iter: int = 5000
    w_samples: int = 4
    tol: float = 1e-10
    seed: int = 0
    solver: SolverOptions = field(default_factory=SolverOptions)


@dataclass
class EnergyMinimum:
    u: GridFunction
    energy: float
    residual: float
    iterations: int
    converged: bool
    energies: list[float]


def seed_bump(grid: Grid, theta: float, delta: float | None = None) -> GridFunction:
    """Plateau at ``theta / 2`` at distance ``>= delta`` from the boundary, linear ramp inside."""
    delta = default_delta(grid) if delta is None else delta
    d = boundary_distance(grid).values
    return GridFunction(grid, 0.5 * theta * np.minimum(1.0, d / delta))


def truncated_energy(u, p: ExponentField, reaction: TruncatedReaction, lam: float) -> float:
    vals = u.values if isinstance(u, GridFunction) else np.asarray(u, float)
    return energy(vals, p) - lam * p.grid.integrate(reaction.primitive(vals))


def lambda_tilde_scan(grid: Grid, ps, reactions, ladder, delta=None) -> float:
    """First ladder value with a negative truncated energy at the seed, for both components."""
    seeds = [seed_bump(grid, rc.theta, delta) for rc in reactions]
    for lam in ladder:
        if all(truncated_energy(s, p, rc, lam) < 0 for s, p, rc in zip(seeds, ps, reactions)):
            return float(lam)
    raise GateError("(energy) truncated energy never negative at the seed on the ladder")


def _equation_residual(u, p, reaction, lam) -> float:
    interior = ~p.grid.boundary_mask
    rhs = lam * reaction(u)
    gap = apply_px_laplacian(u, p).values - rhs
    return float(np.abs(gap[interior]).max()) / max(1.0, float(np.abs(rhs).max()))


def _newton_step(u, p, reaction, lam, J, res):
    """One damped Newton step on the truncated energy, or ``None`` if it does not descend."""
    grid = p.grid
    I = grid.interior_idx
    q = grid.weights
    grad = energy_gradient(u, p, lam * reaction(u))[I]
    gmax = float(np.abs(grid.gradient.apply(u)).max())
    H = energy_hessian(u, p, 1e-8 * gmax) - sp.diags(lam * q * reaction.derivative(u))
    try:
        d = -spla.spsolve(H.tocsr()[I][:, I].tocsc(), grad)
    except RuntimeError:
        return None
    slope = float(grad @ d)
    if not np.all(np.isfinite(d)) or slope >= 0:
        return None
    t = 1.0
    noise = abs(slope) <= 1e-11 * max(abs(J), 1e-300)
    for _ in range(40):
        trial = u.copy()
        trial[I] += t * d
        Jt = truncated_energy(trial, p, reaction, lam)
        if noise:
            rt = _equation_residual(trial, p, reaction, lam)
            if rt < res:
                return trial, Jt, rt
        elif Jt <= J + 1e-4 * t * slope:
            return trial, Jt, _equation_residual(trial, p, reaction, lam)
        t *= 0.5
    return None


def minimize_truncated_energy(lam: float, p: ExponentField, reaction: TruncatedReaction,
                              start, *, tol: float = 1e-11, max_iter: int = 5000,
                              newton_below: float = 1e-3,
                              opts: SolverOptions | None = None) -> EnergyMinimum:
    """Majorize-minimize descent on the truncated energy, Newton once close.

    The outer step solves ``-Delta_p u + c u = lam f~(u_n) + c u_n`` with
    ``c = lam Lip(f~)``. The quadratic majorant of ``-lam F~`` makes the
    energy nonincreasing along the iterates; fixed points solve
    ``-Delta_p u = lam f~(u)``. Once the relative residual is below
    ``newton_below`` a damped Newton step on the full energy is tried
    first; the majorize-minimize step is the fallback.
    """
    c = lam * reaction.lipschitz()
    u = np.array(start.values if isinstance(start, GridFunction) else start, dtype=float)
    J = truncated_energy(u, p, reaction, lam)
    energies = [J]
    res = _equation_residual(u, p, reaction, lam)
    n = 0
    while res > tol and n < max_iter:
        n += 1
        step = _newton_step(u, p, reaction, lam, J, res) if res < newton_below else None
        if step is None:
            sol = solve_dirichlet(lam * reaction(u) + c * u, p, opts, shift=c, initial=u,
                                  raise_on_failure=False)
            u = sol.u.values
            J = truncated_energy(u, p, reaction, lam)
            res = _equation_residual(u, p, reaction, lam)
        else:
            u, J, res = step
        energies.append(J)
    return EnergyMinimum(GridFunction(p.grid, u), J, res, n, res <= tol, energies)


def logistic_gates(grid: Grid, params: LogisticParams, reactions) -> None:
    """Sign conditions on each ``f_i`` and positivity of ``A`` on the needed range."""
    for i, rc in enumerate(reactions, start=1):
        ts = np.linspace(0.0, rc.theta, 1025)
        vals = rc.raw(ts)
        scale = max(1.0, float(np.abs(vals).max()))
        require(abs(vals[0]) <= 1e-12 * scale and abs(vals[-1]) <= 1e-12 * scale, "f2",
                f"f{i}(0) = {vals[0]:.3g}, f{i}(theta{i}) = {vals[-1]:.3g}; both must vanish")
        require(bool(np.all(vals[1:-1] > 0)), "f2", f"f{i} must be positive on (0, theta{i})")
    r = fields(params.r, grid, "lebesgue", "r")
    t_max = max(luxemburg_norm(np.full(grid.size, params.theta[0]), r[1]),
                luxemburg_norm(np.full(grid.size, params.theta[1]), r[0]))
    A = compile_expression(params.A, ("x", "y", "t"))
    ts = np.geomspace(1e-9 * t_max, t_max, 257)[:, None]
    env = grid.env()
    vals = np.broadcast_to(A.evaluate({"x": 0.0, "y": 0.0, **env, "t": ts}), (ts.size, grid.size))
    require(bool(np.all(vals > 0)), "A > 0",
            f"A(x, t) must be positive on (0, {t_max:.6g}]; min {vals.min():.6g}")


def _build_spec(grid, params, lam, reactions) -> SystemSpec:
    f1, f2 = reactions

    def r1(env, u, v):
        return lam * f1(u)

    def r2(env, u, v):
        return lam * f2(v)

    return SystemSpec.from_expressions(
        grid, p=params.p, q=params.q, r=params.r, alpha=params.alpha, A=params.A,
        f=(r1, r2), monotone_in_other=True, name="logistic", extra={"lambda": lam})


def logistic_setup(lam: float | None, grid: Grid, params: LogisticParams | None = None):
    """Lower functions from the truncated energies, constants ``theta_i`` above.

    ``lam=None`` uses ``2 lambda0``. Constants of the construction are
    recorded in ``spec.extra``.
    """
    params = params or LogisticParams()
    reactions = [TruncatedReaction(t, th) for t, th in zip(params.f, params.theta)]
    logistic_gates(grid, params, reactions)
    ps = fields(params.p, grid, "laplacian", "p")
    lam_t = lambda_tilde_scan(grid, ps, reactions, params.ladder, params.delta)

    mins = []
    for p, rc in zip(ps, reactions):
        m = minimize_truncated_energy(lam_t, p, rc, seed_bump(grid, rc.theta, params.delta),
                                      tol=params.mm_tol, max_iter=params.mm_max_iter,
                                      opts=params.solver)
        interior = ~grid.boundary_mask
        if np.any(m.u.values[interior] <= 0):
            raise GateError("(positivity) truncated-energy minimizer is not positive inside")
        if m.u.max() > rc.theta + 1e-8:
            raise GateError(f"(cap) minimizer exceeds theta = {rc.theta:g} "
                            f"by {m.u.max() - rc.theta:.3e}")
        mins.append(m)
    z0, w0 = mins[0].u, mins[1].u

    probe = _build_spec(grid, params, 1.0, reactions)
    C = min(float((luxemburg_norm(w0.values, probe.q[0]) ** probe.alpha[0].values).min()),
            float((luxemburg_norm(z0.values, probe.q[1]) ** probe.alpha[1].values).min()))
    th = [np.full(grid.size, t) for t in params.theta]
    t_lo = min(luxemburg_norm(z0.values, probe.r[1]), luxemburg_norm(w0.values, probe.r[0]))
    t_hi = max(luxemburg_norm(th[0], probe.r[1]), luxemburg_norm(th[1], probe.r[0]))
    A0 = coefficient_ceiling(probe, t_lo, t_hi)
    mu0 = A0 / C
    lam0 = lam_t * mu0
    lam = 2.0 * lam0 if lam is None else float(lam)

    spec = _build_spec(grid, params, lam, reactions)
    pair = SubSuperPair(z0, w0, GridFunction(grid, th[0]), GridFunction(grid, th[1]))
    rep = verify_subsupersolution(pair, spec, params.w_samples, params.tol, params.seed)
    pair = pair.certify(rep)
    # shift making the Picard half-step order preserving over the box
    shifts = []
    for i, rc in enumerate(reactions):
        lo_j, hi_j = pair.lower[1 - i].values, pair.upper[1 - i].values
        nq = max(luxemburg_norm(lo_j, spec.q[i]), luxemburg_norm(hi_j, spec.q[i]))
        a_min = coefficient_floor(spec, luxemburg_norm(lo_j, spec.r[i]),
                                  luxemburg_norm(hi_j, spec.r[i]))
        shifts.append(lam * rc.lipschitz() * float((max(nq, 1.0) ** spec.alpha[i].values).max())
                      / a_min)
    spec.extra.update({
        "lambda_tilde0": lam_t, "C": C, "A0": A0, "mu0": mu0, "lambda0": lam0,
        "minimizer_residuals": [m.residual for m in mins],
        "minimizer_iterations": [m.iterations for m in mins],
        "minimizer_energies": [m.energy for m in mins],
        "picard_shift": max(shifts),
        "report": rep.to_dict()})
    if not math.isfinite(lam0):
        raise GateError("(C > 0) norm powers of the lower functions vanish")
    return spec, pair
