"""Concave-convex system with a sublinear ``lam`` term and a superlinear ``theta`` term.

Component ``i`` has right-hand side

    (lam u_i^{beta_i} |u_j|_{q_i}^{alpha_i} + theta u_j^{eta_i} |u_j|_{s_i}^{gamma_i})
        / A(x, |u_j|_{r_i}).

Two regimes. ``A1`` (``A >= a0`` near zero) scans ``lam`` downward.
``A2`` (``A`` bounded above, positive limit ``b0``) fixes ``lam`` and
picks the constant-RHS level ``M`` that minimizes the scalar majorant

    Psi(M) = (lam K / A_lam) M^{rho - 1} + (theta K / A_lam) M^{tau - 1},

reporting a ``theta`` threshold when ``min Psi > 1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..domain import ExponentField, Grid
from ..pxsolver import SolverOptions, apply_px_laplacian, solve_constant_rhs
from ..subsuper import (BoundaryLayerParams, SubSuperPair, boundary_layer, corner_ridge_mask,
                        default_delta, exponent_ratio_constant, verify_subsupersolution)
from ..system import SystemSpec
from ..varlebesgue import luxemburg_norm
from ._shared import (GateError, check_regime, coefficient_floor, fields, limit_level_scan,
                      require)

__all__ = [
    "ConcaveConvexParams",
    "ConcaveConvexProblem",
    "ThresholdReport",
    "psi",
    "minimizer",
    "psi_at_minimizer",
    "theta_threshold",
    "concave_convex_gates",
    "concave_convex_setup",
]


@dataclass(frozen=True)
class ConcaveConvexParams:
    """Scalars of the majorant ``Psi``; needs ``0 < rho < 1 < tau``."""

    lam: float
    theta: float
    rho: float
    tau: float
    K_bar: float = 1.0
    A_lam: float = 1.0

    def __post_init__(self):
        if not 0 < self.rho < 1 < self.tau:
            raise ValueError(f"need 0 < rho < 1 < tau, got rho={self.rho}, tau={self.tau}")
        for name in ("lam", "theta", "K_bar", "A_lam"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")

    @property
    def c(self) -> float:
        return ((1 - self.rho) / (self.tau - 1)) ** (1 / (self.tau - self.rho))

    def with_theta(self, theta: float) -> "ConcaveConvexParams":
        return ConcaveConvexParams(self.lam, theta, self.rho, self.tau, self.K_bar, self.A_lam)


def psi(M, params: ConcaveConvexParams):
    M = np.asarray(M, dtype=float)
    if np.any(M <= 0):
        raise ValueError("Psi is defined for M > 0 only")
    scale = params.K_bar / params.A_lam
    out = scale * (params.lam * M ** (params.rho - 1) + params.theta * M ** (params.tau - 1))
    return float(out) if out.ndim == 0 else out


def minimizer(params: ConcaveConvexParams) -> float:
    """Unique critical point ``(lam / theta)^{1/(tau - rho)} c``."""
    return (params.lam / params.theta) ** (1 / (params.tau - params.rho)) * params.c


def psi_at_minimizer(params: ConcaveConvexParams) -> float:
    return psi(minimizer(params), params)


def theta_threshold(params: ConcaveConvexParams, rtol: float = 1e-12) -> float:
    """``theta0`` with ``Psi(M_{lam, theta0}) = 1``, by bisection in ``log theta``.

    ``min Psi`` is increasing in ``theta``, so the set where it is at most
    one is an interval ``(0, theta0]``.
    """
    def g(log_t):
        return psi_at_minimizer(params.with_theta(math.exp(log_t))) - 1.0

    lo = hi = math.log(params.theta)
    while g(lo) > 0:
        lo -= 4.0
    while g(hi) <= 0:
        hi += 4.0
    while hi - lo > rtol:
        mid = 0.5 * (lo + hi)
        if g(mid) > 0:
            hi = mid
        else:
            lo = mid
    return math.exp(lo)


@dataclass
class ThresholdReport:
    """Returned instead of a pair when ``theta`` is above the verified threshold."""

    lam: float
    theta: float
    theta0: float
    psi_min: float
    M: float
    rho: float
    tau: float
    K_bar: float
    A_lam: float
    reason: str = ""

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class ConcaveConvexProblem:
    p: tuple[str, str] = ("2", "2")
    q: tuple[str, str] = ("2", "2")
    r: tuple[str, str] = ("2", "2")
    s: tuple[str, str] = ("2", "2")
    alpha: tuple[str, str] = ("0.2", "0.2")
    beta: tuple[str, str] = ("0.3", "0.3")
    eta: tuple[str, str] = ("1.2", "1.2")
    gamma: tuple[str, str] = ("0.3", "0.3")
    A: str = "1"
    regime: str = "A1"
    a0: float = 1.0
    b0: float = 1.0
    delta: float | None = None
    k_ladder: tuple[float, ...] = tuple(2.0**e for e in range(1, 11))
    scan_depth: int = 60
    w_samples: int = 4
    tol: float = 1e-10
    seed: int = 0
    solver: SolverOptions = field(default_factory=SolverOptions)


def _exponents(grid: Grid, prob: ConcaveConvexProblem) -> dict:
    return {"p": fields(prob.p, grid, "laplacian", "p"),
            "q": fields(prob.q, grid, "lebesgue", "q"),
            "s": fields(prob.s, grid, "lebesgue", "s"),
            "alpha": fields(prob.alpha, grid, "power", "alpha"),
            "beta": fields(prob.beta, grid, "power", "beta"),
            "eta": fields(prob.eta, grid, "power", "eta"),
            "gamma": fields(prob.gamma, grid, "power", "gamma")}


def concave_convex_gates(grid: Grid, prob: ConcaveConvexProblem) -> dict:
    """Exponent inequalities of both regimes; returns ``rho`` and ``tau``."""
    e = _exponents(grid, prob)
    p, al, be, et, ga = e["p"], e["alpha"], e["beta"], e["eta"], e["gamma"]
    for i in (0, 1):
        j = 1 - i
        lo, hi = al[i].inf + be[i].inf, al[i].sup + be[i].sup
        require(0 < lo <= hi < p[i].inf - 1,
                f"0 < alpha{i + 1}- + beta{i + 1}- <= alpha{i + 1}+ + beta{i + 1}+ < p{i + 1}- - 1",
                f"{lo:.6g}, {hi:.6g} vs {p[i].inf - 1:.6g}")
        sup_lo = et[i].inf + ga[i].inf
        require(p[j].sup - 1 < sup_lo,
                f"p{j + 1}+ - 1 < eta{i + 1}- + gamma{i + 1}-",
                f"{p[j].sup - 1:.6g} vs {sup_lo:.6g}")
        if prob.regime == "A2":
            mixed = be[i].sup / (p[i].inf - 1) + al[i].sup / (p[j].inf - 1)
            require(mixed < 1, f"beta{i + 1}+/(p{i + 1}- - 1) + alpha{i + 1}+/(p{j + 1}- - 1) < 1",
                    f"{mixed:.6g}")
    rho = max(be[i].sup / (p[i].inf - 1) + al[i].sup / (p[1 - i].inf - 1) for i in (0, 1))
    tau = max((et[i].sup + ga[i].sup) / (p[1 - i].inf - 1) for i in (0, 1))
    return {"rho": rho, "tau": tau, **e}


def _build_spec(grid: Grid, prob: ConcaveConvexProblem, lam: float, theta: float) -> SystemSpec:
    be, et = prob.beta, prob.eta
    f = (f"{lam!r} * u^({be[0]})", f"{lam!r} * v^({be[1]})")
    g = (f"{theta!r} * v^({et[0]})", f"{theta!r} * u^({et[1]})")
    return SystemSpec.from_expressions(
        grid, p=prob.p, q=prob.q, r=prob.r, s=prob.s, alpha=prob.alpha, gamma=prob.gamma,
        A=prob.A, f=f, g=g, regime=prob.regime, a0=prob.a0, a_inf=prob.b0,
        monotone_in_other=True, name="concave_convex",
        extra={"lambda": lam, "theta": theta})


def fan_constant(p: ExponentField, levels=tuple(2.0**e for e in range(0, 13, 2)),
                 opts: SolverOptions | None = None) -> float:
    """Sampled ``K >= 1`` with ``|z_M|_inf <= K M^{1/(p^- - 1)}`` on the level ladder."""
    ratios = [solve_constant_rhs(M, p, opts).u.sup_norm() / M ** (1 / (p.inf - 1)) for M in levels]
    return max(1.0, max(ratios))


def k_bar(K: float, e: dict, grid: Grid) -> float:
    """Largest of the four power products of ``K`` and its norms, over both components."""
    const = np.full(grid.size, K)
    out = []
    for i in (0, 1):
        nq = luxemburg_norm(const, e["q"][i])
        ns = luxemburg_norm(const, e["s"][i])
        al, be, et, ga = e["alpha"][i], e["beta"][i], e["eta"][i], e["gamma"][i]
        out += [K**be.sup * nq**al.sup, K**be.sup * nq**al.inf,
                K**et.sup * ns**ga.sup, K**et.sup * ns**ga.inf]
    return float(max(out))


def _layers(spec: SystemSpec, k: float, delta: float, a: float):
    params = BoundaryLayerParams.from_k(k, delta, a)
    lows = [params.mu * boundary_layer(params, p) for p in spec.p]
    ops = [float(apply_px_laplacian(lo, p).values.max()) for lo, p in zip(lows, spec.p)]
    return params, lows, max(ops)


def _certify(spec, lows, ups, prob, excl):
    pair = SubSuperPair(lows[0], lows[1], ups[0], ups[1])
    if pair.invariant_problems(tol=1e-12):
        return pair, None
    rep = verify_subsupersolution(pair, spec, prob.w_samples, prob.tol, prob.seed, excl)
    return pair.certify(rep), rep


def _scan_a1(grid, prob, theta, lam_start, delta, a, excl):
    """Halve ``lam`` until some ``k`` on the ladder gives a verified pair."""
    last = None
    for e in range(prob.scan_depth + 1):
        lam = lam_start * 2.0**-e
        spec = _build_spec(grid, prob, lam, theta)
        ups = [solve_constant_rhs(lam, p, prob.solver).u for p in spec.p]
        for k in prob.k_ladder:
            if math.log(2.0) / k >= delta:
                continue
            params, lows, op = _layers(spec, k, delta, a)
            if op > lam:
                continue
            pair, rep = _certify(spec, lows, ups, prob, excl)
            if rep is None:
                continue
            last = rep
            if rep.passed:
                spec.extra.update({"lambda0": lam, "scan_index": e, "layer": params.to_dict(),
                                   "report": rep.to_dict()})
                return spec, pair
            if min(rep.values["super_1"], rep.values["super_2"]) < -prob.tol:
                break
    raise GateError("(A1) lambda scan exhausted without a verified pair"
                    + (f"; last min slack {last.values['min_slack']:.3e}" if last else ""))


def _setup_a2(grid, prob, lam, theta, gates, delta, a, excl):
    spec = _build_spec(grid, prob, lam, theta)
    e = gates
    # lower functions: -Delta(mu phi) <= 1 and the sub inequality with A <= a0
    chosen = None
    interior = ~grid.boundary_mask & ~excl
    for k in prob.k_ladder:
        if math.log(2.0) / k >= delta:
            continue
        params, lows, op = _layers(spec, k, delta, a)
        if op > 1.0:
            continue
        ok = True
        for i in (1, 2):
            lo_i, lo_j = lows[i - 1].values, lows[2 - i].values
            Alo = apply_px_laplacian(lo_i, spec.p[i - 1]).values
            nq = luxemburg_norm(lo_j, spec.q[i - 1])
            rhs = lam * lo_i ** e["beta"][i - 1].values * nq ** spec.alpha[i - 1].values / prob.a0
            if np.any((rhs - Alo)[interior] < -prob.tol * max(1.0, float(rhs.max()))):
                ok = False
                break
        if ok:
            chosen = (params, lows, op)
            break
    if chosen is None:
        raise GateError("(A2) no k on the ladder gives a lower function with "
                        "-Delta(mu phi) <= 1 and the sub inequality")
    params, lows, op = chosen
    K = max(fan_constant(p, opts=prob.solver) for p in spec.p)
    Kb = k_bar(K, e, grid)
    a1 = limit_level_scan(spec, prob.b0 / 2.0)
    t_lo = min(luxemburg_norm(lows[0].values, spec.r[0]),
               luxemburg_norm(lows[1].values, spec.r[1]))
    m_lam = coefficient_floor(spec, t_lo, max(a1, t_lo))
    A_lam = min(m_lam, prob.b0 / 2.0)
    require(A_lam > 0, "A2", f"A_lambda = {A_lam:.6g} is not positive")
    cc = ConcaveConvexParams(lam, theta, e["rho"], e["tau"], Kb, A_lam)
    M = minimizer(cc)
    pmin = psi(M, cc)
    # M >= max(1, max -Delta(mu phi)) keeps the lower functions below z_M
    theta_m = lam * (cc.c / max(1.0, op)) ** (cc.tau - cc.rho)
    info = {"K": K, "K_bar": Kb, "a1": a1, "m_lambda": m_lam, "A_lambda": A_lam, "M": M,
            "psi_min": pmin, "rho": cc.rho, "tau": cc.tau, "layer": params.to_dict()}
    if pmin > 1.0 or M < max(1.0, op):
        theta0 = min(theta_threshold(cc), theta_m)
        reason = "Psi(M) > 1" if pmin > 1.0 else "M below max(1, -Delta(mu phi))"
        return ThresholdReport(lam, theta, theta0, pmin, M, cc.rho, cc.tau, Kb, A_lam, reason)
    ups = [solve_constant_rhs(M, p, prob.solver).u for p in spec.p]
    pair, rep = _certify(spec, lows, ups, prob, excl)
    info["report"] = rep.to_dict() if rep is not None else {"passed": False}
    spec.extra.update(info)
    return spec, pair


def concave_convex_setup(lam: float, theta: float, grid: Grid,
                         prob: ConcaveConvexProblem | None = None):
    """Pair for the given ``(lam, theta)`` or a :class:`ThresholdReport`.

    In regime ``A1`` ``lam`` is the start of the downward scan and the
    returned spec is built at the verified ``lambda0`` (see ``spec.extra``).
    """
    prob = prob or ConcaveConvexProblem()
    if not (lam > 0 and theta > 0):
        raise ValueError("lambda and theta must be positive")
    gates = concave_convex_gates(grid, prob)
    probe = _build_spec(grid, prob, lam, theta)
    if prob.regime == "A1":
        check_regime(probe, "A1", prob.a0, b0=prob.b0)
    else:
        check_regime(probe, "A2", prob.a0, a_limit=prob.b0)
    delta = default_delta(grid) if prob.delta is None else prob.delta
    a = exponent_ratio_constant(*probe.p)
    excl = corner_ridge_mask(grid, delta)
    if prob.regime == "A1":
        return _scan_a1(grid, prob, theta, lam, delta, a, excl)
    return _setup_a2(grid, prob, lam, theta, gates, delta, a, excl)
