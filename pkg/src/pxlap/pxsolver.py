"""Discrete p(x)-Laplacian, its Dirichlet energy and the Dirichlet solver.

The operator is defined as the gradient of a discrete energy

    E(u) = sum_e |e| W_e(grad_e u) - sum_i w_i f_i u_i + c/2 sum_i w_i u_i^2,
    W_e(g) = ((|g|^2 + eps^2)^(p_e/2) - eps^p_e) / p_e,

divided by the nodal trapezoid weight ``w_i``. Element gradients and
element exponents come from :class:`~pxlap.domain.ElementGradient`.
Because the operator is an exact energy gradient, the solver can use
energy decrease as its globalization and the discrete problem inherits
convexity, uniqueness and the comparison principle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.linalg import eigh
from scipy.optimize import minimize_scalar

from .domain import ExponentField, GridFunction, GridMismatchError, HypothesisError
from .report import Report

__all__ = [
    "SolverOptions",
    "DirichletSolution",
    "ConvergenceError",
    "apply_px_laplacian",
    "energy",
    "energy_gradient",
    "energy_hessian",
    "residual",
    "solve_dirichlet",
    "solve_constant_rhs",
    "fan_scaling_check",
    "comparison_check",
    "stiffness_matrix",
    "discrete_poincare_constant",
]


@dataclass(frozen=True)
class SolverOptions:
    """Tunables for :func:`solve_dirichlet`.

    ``reg_eps`` is relative: the Hessian (or preconditioner) sees element
    gradients no smaller than ``reg_eps * max|grad u|``. The objective and
    the reported residual are never regularized. ``tol`` is relative to
    ``max(1, max|f|)``.
    """

    reg_eps: float = 1e-8
    max_iter: int = 200
    tol: float = 1e-10
    shrink: float = 0.5
    c1: float = 1e-4
    max_backtracks: int = 60

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if not 0 < self.shrink < 1:
            raise ValueError("shrink must lie in (0, 1)")
        if not 0 < self.c1 < 0.5:
            raise ValueError("sufficient-decrease constant must lie in (0, 1/2)")
        if self.reg_eps < 0:
            raise ValueError("reg_eps must be nonnegative")
        if int(self.max_iter) != self.max_iter or self.max_iter < 1:
            raise ValueError("max_iter must be a positive integer")


@dataclass
class DirichletSolution:
    u: GridFunction
    iterations: int
    final_residual: float
    energy: float
    converged: bool
    method: str
    history: list[dict] = field(default_factory=list)
    noise_floor: float = 0.0


class ConvergenceError(RuntimeError):
    """Raised when the solver stops without meeting its tolerance.

    The best iterate and its history are kept on ``solution``.
    """

    def __init__(self, message: str, solution: DirichletSolution):
        super().__init__(message)
        self.solution = solution


def _check_pair(u, p: ExponentField) -> np.ndarray:
    if isinstance(u, GridFunction):
        if u.grid != p.grid:
            raise GridMismatchError("function and exponent live on different grids")
        return u.values
    arr = np.asarray(u, dtype=float).reshape(-1)
    if arr.size != p.grid.size:
        raise GridMismatchError(f"expected {p.grid.size} nodal values, got {arr.size}")
    return arr


class _Discretization:
    """Per-(grid, exponent) cached pieces of the discrete energy."""

    def __init__(self, p: ExponentField):
        self.p = p
        self.grid = p.grid
        self.G = p.grid.gradient
        self.pe = self.G.average @ p.values
        self.we = self.G.weights
        self.q = p.grid.weights
        self.interior = p.grid.interior_idx

    def element_state(self, u: np.ndarray, eps: float = 0.0):
        g = self.G.apply(u)
        s = np.einsum("ij,ij->j", g, g) + eps * eps
        return g, s

    def energy(self, u, f, eps=0.0, shift=0.0) -> float:
        _, s = self.element_state(u, eps)
        pe = self.pe
        with np.errstate(under="ignore"):
            W = (np.power(s, pe / 2) - eps**pe) / pe
        val = float(self.we @ W)
        if f is not None:
            val -= float(self.q @ (f * u))
        if shift:
            val += 0.5 * shift * float(self.q @ (u * u))
        return val

    def flux_coefficient(self, s: np.ndarray, eps: float) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore", under="ignore"):
            kappa = np.power(s, (self.pe - 2) / 2)
        if eps == 0.0:
            kappa = np.where(s > 0, kappa, 0.0)
        return kappa

    def operator_gradient(self, u, eps=0.0) -> np.ndarray:
        """Gradient of the gradient-energy term alone (unweighted)."""
        g, s = self.element_state(u, eps)
        k = self.we * self.flux_coefficient(s, eps)
        out = np.zeros(u.size)
        for d, op in enumerate(self.G.ops):
            out += op.T @ (k * g[d])
        return out

    def hessian(self, u, floor: float, shift=0.0, secant: bool = False) -> sp.csr_matrix:
        """Energy Hessian with ``|grad u|^2`` floored; ``secant`` keeps only the
        isotropic part, the curvature of the quadratic majorant when ``p <= 2``."""
        g, s = self.element_state(u, 0.0)
        sf = s + floor * floor
        pe = self.pe
        kappa = np.power(sf, (pe - 2) / 2)
        beta = 0.0 * pe if secant else (pe - 2) * np.power(sf, (pe - 4) / 2)
        ops = self.G.ops
        H = None
        for a in range(len(ops)):
            for b in range(len(ops)):
                coef = beta * g[a] * g[b]
                if a == b:
                    coef = coef + kappa
                block = ops[a].T @ sp.diags(self.we * coef) @ ops[b]
                H = block if H is None else H + block
        if shift:
            H = H + sp.diags(shift * self.q)
        return H.tocsr()


def _disc(p: ExponentField) -> _Discretization:
    return _Discretization(p)


def apply_px_laplacian(u, p: ExponentField, reg_eps: float = 0.0) -> GridFunction:
    """Nodal values of ``-div((|grad u|^2 + eps^2)^((p-2)/2) grad u)``.

    Interior values are the energy gradient divided by the nodal
    quadrature weight, so ``<A(u), phi>`` in the shared quadrature is the
    discrete flux pairing. Boundary values are set to zero.
    """
    vals = _check_pair(u, p)
    D = _disc(p)
    out = D.operator_gradient(vals, reg_eps) / D.q
    out[p.grid.boundary_mask] = 0.0
    return GridFunction(p.grid, out)


def energy(u, p: ExponentField, f=None, reg_eps: float = 0.0, shift: float = 0.0) -> float:
    """``sum |e| W_e - <f, u> (+ c/2 <u, u>)`` in the shared quadrature."""
    vals = _check_pair(u, p)
    fv = None if f is None else _check_pair(f, p)
    return _disc(p).energy(vals, fv, reg_eps, shift)


def energy_gradient(u, p: ExponentField, f=None, reg_eps: float = 0.0,
                    shift: float = 0.0) -> np.ndarray:
    """Full gradient of :func:`energy` with respect to the nodal values."""
    vals = _check_pair(u, p)
    D = _disc(p)
    out = D.operator_gradient(vals, reg_eps)
    if f is not None:
        out -= D.q * _check_pair(f, p)
    if shift:
        out += shift * D.q * vals
    return out


def energy_hessian(u, p: ExponentField, floor: float = 0.0, shift: float = 0.0) -> sp.csr_matrix:
    """Hessian of :func:`energy` in the nodal values, ``|grad u|^2`` floored by ``floor^2``."""
    return _disc(p).hessian(_check_pair(u, p), floor, shift)


def residual(u, p: ExponentField, f, shift: float = 0.0) -> float:
    """Max over interior nodes of ``|A(u) + c u - f|`` with the exact operator."""
    vals = _check_pair(u, p)
    fv = _check_pair(f, p)
    D = _disc(p)
    r = D.operator_gradient(vals) / D.q + shift * vals - fv
    return float(np.abs(r[D.interior]).max())


def stiffness_matrix(grid) -> sp.csr_matrix:
    """The exponent-2 operator's energy Hessian (unweighted)."""
    G = grid.gradient
    K = None
    for op in G.ops:
        block = op.T @ sp.diags(G.weights) @ op
        K = block if K is None else K + block
    return K.tocsr()


def _linear_guess(D: _Discretization, f: np.ndarray, shift: float) -> np.ndarray:
    I = D.interior
    K = stiffness_matrix(D.grid)
    if shift:
        K = K + sp.diags(shift * D.q)
    K = K[I][:, I].tocsc()
    u = np.zeros(D.grid.size)
    u[I] = spla.spsolve(K, D.q[I] * f[I])
    return u


def _scale_guess(D, v, f, shift) -> np.ndarray:
    if not np.any(v):
        return v
    phi = lambda s: D.energy(s * v, f, 0.0, shift)  # noqa: E731
    res = minimize_scalar(phi, bracket=(0.0, 1.0), tol=1e-10)
    s = float(res.x)
    return s * v if phi(s) < phi(1.0) else v


def _direction(H, grad, D, shift) -> np.ndarray:
    I = D.interior
    try:
        d = -spla.spsolve(H[I][:, I].tocsc(), grad)
    except RuntimeError:
        d = -grad / (D.q[I] * max(1.0, shift))
    if not np.all(np.isfinite(d)) or float(grad @ d) >= 0:
        d = -grad / D.q[I]
    return d


def _search(D, u, d, grad, E, f, shift, opts, res_vec, r):
    slope = float(grad @ d)
    # near the minimizer the predicted decrease drowns in the energy's
    # round-off; judge steps by the residual there instead
    noise_level = abs(slope) <= 1e-11 * max(abs(E), 1e-300)
    step = None if noise_level else _backtrack(D, u, d, E, slope, f, shift, opts)
    if step is None:
        step = _backtrack(D, u, d, E, slope, f, shift, opts, res_vec, r)
    return step


def _backtrack(D, u, d, E, slope, f, shift, opts, res_vec=None, r=None):
    """Armijo backtracking, or plain residual decrease when ``res_vec`` is given."""
    I = D.interior
    t = 1.0
    for _ in range(opts.max_backtracks):
        trial = u.copy()
        trial[I] += t * d
        Et = D.energy(trial, f, 0.0, shift)
        if res_vec is None:
            if Et <= E + opts.c1 * t * slope:
                return trial, Et, t
        elif float(np.abs(res_vec(trial)).max()) < r:
            return trial, Et, t
        t *= opts.shrink
    return None


def _noise_floor(u, res_vec, I) -> float:
    """Largest residual seen after moving ``u`` by one ulp in a few fixed sign patterns.

    Residuals below this cannot be told apart in double precision.
    """
    ulp = np.spacing(np.abs(u[I]))
    alt = np.where(np.arange(I.size) % 2 == 0, 1.0, -1.0)
    worst = 0.0
    for sign in (alt, -alt, np.ones(I.size), -np.ones(I.size)):
        v = u.copy()
        v[I] += sign * ulp
        worst = max(worst, float(np.abs(res_vec(v)).max()))
    return worst


def solve_dirichlet(f, p: ExponentField, opts: SolverOptions | None = None, *,
                    shift: float = 0.0, initial=None, raise_on_failure: bool = True
                    ) -> DirichletSolution:
    """Minimize the strictly convex discrete energy with zero boundary values.

    ``p^- >= 2``: damped Newton on the exact energy with a floored Hessian.
    ``p^- < 2``: preconditioned gradient descent, the preconditioner being
    the same Hessian with a coarser floor (the exact one is unbounded
    where the gradient vanishes). Both use Armijo backtracking on the
    unregularized energy. A nonnegative ``shift`` adds ``c u`` to the
    operator (strictly convex still).

    If the line search stalls, the iterate is accepted when its residual
    is within the round-off floor of the residual itself (recorded as
    ``noise_floor``); for ``p`` near one with vanishing gradients that
    floor can exceed ``tol``.
    """
    opts = opts or SolverOptions()
    if p.inf <= 1.0:
        raise HypothesisError(f"(H): Laplacian exponent needs p^- > 1; {p.name} has minimum {p.inf:.6g}")
    if shift < 0:
        raise ValueError("shift must be nonnegative")
    fv = np.array(_check_pair(f, p), dtype=float)
    if not np.all(np.isfinite(fv)):
        raise ValueError("right-hand side must be finite")
    fv[p.grid.boundary_mask] = 0.0
    D = _disc(p)
    I = D.interior
    newton = p.inf >= 2.0
    method = "newton" if newton else "preconditioned-descent"
    floor_rel = opts.reg_eps
    scale = max(1.0, float(np.abs(fv).max()))
    target = opts.tol * scale

    if initial is None:
        u = _scale_guess(D, _linear_guess(D, fv, shift), fv, shift)
    else:
        u = np.array(_check_pair(initial, p), dtype=float)
    u[p.grid.boundary_mask] = 0.0

    def res_vec(x):
        return (D.operator_gradient(x) / D.q + shift * x - fv)[I]

    E = D.energy(u, fv, 0.0, shift)
    r = float(np.abs(res_vec(u)).max())
    history = [{"iteration": 0, "residual": r, "energy": E, "step": 0.0}]
    it = 0
    stalled = False
    while r > target and it < opts.max_iter:
        it += 1
        grad = energy_gradient(u, p, fv, 0.0, shift)[I]
        gmax = float(np.abs(D.G.apply(u)).max()) if np.any(u) else 0.0
        floor = max(floor_rel * gmax, 1e-300 if gmax else 1e-12)
        steps = [_search(D, u, _direction(D.hessian(u, floor, shift), grad, D, shift), grad,
                         E, fv, shift, opts, res_vec, r)]
        if not newton:
            # the majorant step always descends; Newton is kept when it does better
            steps.append(_search(D, u, _direction(D.hessian(u, floor, shift, secant=True),
                                                  grad, D, shift), grad, E, fv, shift, opts,
                                 res_vec, r))
        steps = [st for st in steps if st is not None]
        step = min(steps, key=lambda st: st[1]) if steps else None
        if step is None:
            stalled = True
            break
        trial, Et, t = step
        u = trial
        E = Et
        r = float(np.abs(res_vec(u)).max())
        history.append({"iteration": it, "residual": r, "energy": E, "step": t})

    floor_r = _noise_floor(u, res_vec, I) if stalled else 0.0
    converged = r <= max(target, floor_r)
    sol = DirichletSolution(GridFunction(p.grid, u), it, r, E, converged, method, history,
                            floor_r)
    if not converged and raise_on_failure:
        why = "line search stalled" if stalled else f"max_iter={opts.max_iter} reached"
        raise ConvergenceError(f"{method}: {why}, residual {r:.3e} > {target:.3e}", sol)
    return sol


@lru_cache(maxsize=256)
def _cached_constant(lam: float, grid, pbytes: bytes, opts: SolverOptions) -> DirichletSolution:
    p = ExponentField(grid, np.frombuffer(pbytes, dtype=float), "laplacian")
    return solve_dirichlet(np.full(grid.size, lam), p, opts)


def solve_constant_rhs(lam: float, p: ExponentField, opts: SolverOptions | None = None
                       ) -> DirichletSolution:
    """Solution of ``-Delta_p z = lam`` with zero boundary values (cached)."""
    if not lam > 0:
        raise ValueError("lambda must be positive")
    return _cached_constant(float(lam), p.grid, p.values.tobytes(), opts or SolverOptions())


def fan_scaling_check(p: ExponentField, lambdas, opts: SolverOptions | None = None,
                      slack: float = 0.05) -> Report:
    """Fit the log-log slope of ``max z_lam`` against ``lam``.

    Passes when the slope does not exceed ``1/(p^- - 1) + slack``.
    """
    lambdas = [float(x) for x in lambdas]
    if len(lambdas) < 3:
        raise ValueError("need at least 3 lambda values to fit a slope")
    sups = [solve_constant_rhs(lam, p, opts).u.sup_norm() for lam in lambdas]
    slope, _ = np.polyfit(np.log(lambdas), np.log(sups), 1)
    bound = 1.0 / (p.inf - 1.0)
    return Report("fan_scaling", bool(slope <= bound + slack),
                  {"slope": float(slope), "bound": bound, "slack": slack,
                   "lambdas": lambdas, "sup_norms": sups,
                   "small_lambda_exponent": 1.0 / (p.sup - 1.0)})


def comparison_check(u, v, p: ExponentField, tol: float = 1e-8) -> Report:
    """Check that ``A(u) <= A(v)`` and ``u <= v`` on the boundary imply ``u <= v``.

    The premise is tested relative to ``max(1, max|A|)``; a failed premise
    is reported rather than raised.
    """
    uv, vv = _check_pair(u, p), _check_pair(v, p)
    bmask = p.grid.boundary_mask
    Au = apply_px_laplacian(uv, p).values
    Av = apply_px_laplacian(vv, p).values
    scale = max(1.0, float(np.abs(Au).max()), float(np.abs(Av).max()))
    op_gap = float((Av - Au)[~bmask].min()) / scale
    bnd_gap = float((vv - uv)[bmask].min())
    premise = op_gap >= -tol and bnd_gap >= -tol
    margin = float((vv - uv).min())
    notes = [] if premise else ["premise violated: operator or boundary ordering fails"]
    return Report("comparison", premise and margin >= -tol,
                  {"premise_ok": premise, "operator_gap": op_gap, "boundary_gap": bnd_gap,
                   "margin": margin, "tol": tol}, notes)


def discrete_poincare_constant(grid) -> float:
    """``C`` with ``|u|_2 <= C |grad u|_2`` for the exponent-2 discrete energy.

    Smallest generalized eigenvalue of (stiffness, nodal weights) on the
    interior, ``C = lambda_1^(-1/2)``.
    """
    I = grid.interior_idx
    K = stiffness_matrix(grid)[I][:, I]
    M = sp.diags(grid.weights[I])
    if I.size <= 400:
        lam1 = float(eigh(K.toarray(), M.toarray(), eigvals_only=True, subset_by_index=[0, 0])[0])
    else:
        lam1 = float(spla.eigsh(K.tocsc(), k=1, M=M.tocsc(), sigma=0.0, which="LM",
                                return_eigenvectors=False)[0])
    return 1.0 / math.sqrt(lam1)


def with_options(opts: SolverOptions | None, **changes) -> SolverOptions:
    return replace(opts or SolverOptions(), **changes)
