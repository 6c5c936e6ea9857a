"""Boundary-layer subsolutions, constant-RHS supersolutions and their verification.

The lower functions are ``mu * phi_i`` where ``phi_i`` is a profile of the
boundary distance ``d``: exponential growth ``e^{kd} - 1`` in a thin layer
``d < sigma``, a power-law taper up to ``d = 2 delta`` and a plateau
beyond. The upper functions solve ``-Delta_{p_i} z = lam``.

Verification works node by node. The discrete operator is an energy
gradient, so testing a weak inequality against every nonnegative test
function is the same as testing it against every nodal hat function,
which is the same as comparing nodal values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .domain import ExponentField, Grid, GridFunction, boundary_distance, side_distances
from .pxsolver import SolverOptions, apply_px_laplacian, solve_constant_rhs
from .report import Report
from .system import CoefficientError, SystemSpec

__all__ = [
    "BoundaryLayerParams",
    "SubSuperPair",
    "ParameterSearchError",
    "default_delta",
    "exponent_ratio_constant",
    "boundary_layer_profile",
    "boundary_layer",
    "px_laplacian_boundary_layer",
    "corner_ridge_mask",
    "negative_condition_margin",
    "lhopital_ratio",
    "verify_subsupersolution",
    "select_sublinear_parameters",
    "layer_pair",
]

LN2 = math.log(2.0)


class ParameterSearchError(RuntimeError):
    """No (k, lambda) on the ladders satisfied the verified inequalities."""

    def __init__(self, message: str, last_margins: dict | None = None):
        super().__init__(message)
        self.last_margins = last_margins or {}


def default_delta(grid: Grid) -> float:
    """One sixth of the shorter side, so that ``3 delta`` stays inside the box."""
    return min(b - a for a, b in grid.bounds) / 6.0


def _nodal_gradient(field: ExponentField) -> np.ndarray:
    grid = field.grid
    nod = field.values.reshape(grid.shape)
    if grid.dim == 1:
        return np.gradient(nod, grid.spacing[0]).reshape(1, -1)
    gx, gy = np.gradient(nod, *grid.spacing)
    return np.stack([gx.ravel(), gy.ravel()])


def exponent_ratio_constant(p1: ExponentField, p2: ExponentField) -> float:
    """``min(p_i^- - 1) / max(max|grad p_i| + 1)``."""
    top = min(p1.inf - 1.0, p2.inf - 1.0)
    bottom = max(float(np.linalg.norm(_nodal_gradient(p), axis=0).max()) + 1.0 for p in (p1, p2))
    return top / bottom


@dataclass(frozen=True)
class BoundaryLayerParams:
    k: float
    sigma: float
    delta: float
    mu: float
    a: float

    def __post_init__(self):
        if not self.k > 0:
            raise ValueError("k must be positive")
        if not 0 < self.sigma < self.delta:
            raise ValueError(f"need 0 < sigma < delta, got sigma={self.sigma:.6g}, "
                             f"delta={self.delta:.6g}")
        if not self.mu > 0:
            raise ValueError("mu must be positive")

    @classmethod
    def from_k(cls, k: float, delta: float, a: float, mu: float | None = None
               ) -> "BoundaryLayerParams":
        """``sigma = ln 2 / k`` and, unless given, ``mu = exp(-a k)``."""
        return cls(float(k), LN2 / k, float(delta), math.exp(-a * k) if mu is None else mu, a)

    def to_dict(self) -> dict:
        return {"k": self.k, "sigma": self.sigma, "delta": self.delta, "mu": self.mu, "a": self.a}


def boundary_layer_profile(d, k: float, sigma: float, delta: float, m: float) -> np.ndarray:
    """The three-branch profile as a function of the distance ``d``.

    ``m`` is the taper exponent ``2 / (p^- - 1)``.
    """
    d = np.asarray(d, dtype=float)
    L = 2.0 * delta - sigma
    eks = math.exp(k * sigma)
    with np.errstate(over="ignore"):
        inner = np.expm1(k * np.minimum(d, sigma))
    s = np.clip((2.0 * delta - d) / L, 0.0, 1.0)
    middle = eks - 1.0 + k * eks * L / (m + 1.0) * (1.0 - s ** (m + 1.0))
    return np.where(d < sigma, inner, middle)


def boundary_layer(params: BoundaryLayerParams, p_i: ExponentField, grid: Grid | None = None
                   ) -> GridFunction:
    """Nodal ``phi_i`` (without the factor ``mu``)."""
    grid = grid or p_i.grid
    if params.sigma >= params.delta:
        raise ValueError("sigma must be smaller than delta")
    d = boundary_distance(grid).values
    m = 2.0 / (p_i.inf - 1.0)
    return GridFunction(grid, boundary_layer_profile(d, params.k, params.sigma, params.delta, m))


def corner_ridge_mask(grid: Grid, delta: float) -> np.ndarray:
    """Nodes near a ridge of ``d`` (equidistant from two sides) inside ``d < 2 delta``.

    There ``d`` is not differentiable and the discrete operator of any
    function of ``d`` picks up a singular positive part.
    """
    if grid.dim == 1:
        return np.zeros(grid.size, dtype=bool)
    sd = np.sort(side_distances(grid), axis=1)
    return (sd[:, 1] - sd[:, 0] <= grid.h * (1 + 1e-9)) & (sd[:, 0] < 2.0 * delta) \
        & ~grid.boundary_mask


def _distance_normal(grid: Grid) -> np.ndarray:
    """Gradient of ``d``: inward unit normal of the nearest side."""
    nearest = np.argmin(side_distances(grid), axis=1)
    out = np.zeros((grid.dim, grid.size))
    axis, sign = nearest // 2, np.where(nearest % 2 == 0, 1.0, -1.0)
    out[axis, np.arange(grid.size)] = sign
    return out


def px_laplacian_boundary_layer(params: BoundaryLayerParams, p_i: ExponentField,
                                grid: Grid | None = None) -> GridFunction:
    """Closed-form ``-Delta_{p_i}(mu phi_i)`` node by node.

    ``grad p`` uses centred differences, ``grad d`` is exact and the
    Laplacian of ``d`` is zero away from ridges (see
    :func:`corner_ridge_mask`; values there are not meaningful).
    """
    grid = grid or p_i.grid
    k, sigma, delta, mu = params.k, params.sigma, params.delta, params.mu
    d = boundary_distance(grid).values
    p = p_i.values
    pd = np.einsum("ij,ij->j", _nodal_gradient(p_i), _distance_normal(grid))
    lap_d = 0.0
    L = 2.0 * delta - sigma
    m = 2.0 / (p_i.inf - 1.0)
    kmu = k * mu
    eks = math.exp(k * sigma)

    inner = -k * (kmu * np.exp(k * np.minimum(d, sigma))) ** (p - 1.0) * (
        (p - 1.0) + (d + math.log(kmu) / k) * pd + lap_d / k)
    s = np.clip((2.0 * delta - d) / L, 0.0, 1.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        log_term = np.log(kmu * eks) + m * np.log(s)
        bracket = 2.0 * (p - 1.0) / ((p_i.inf - 1.0) * L) - s * (log_term * pd + lap_d)
        middle = bracket * (kmu * eks) ** (p - 1.0) * s ** (m * (p - 1.0) - 1.0)
    middle = np.where(s > 0, middle, 0.0)
    out = np.where(d < sigma, inner, np.where(d < 2.0 * delta, middle, 0.0))
    return GridFunction(grid, out)


def negative_condition_margin(params: BoundaryLayerParams, p_i: ExponentField) -> float:
    """``min (p^- - 1) - |d + ln(k mu)/k| |grad p| |grad d|`` over nodes with ``d < sigma``.

    Positive means the bracket of the thin-layer branch stays positive,
    so the operator is nonpositive there.
    """
    grid = p_i.grid
    d = boundary_distance(grid).values
    sel = d < params.sigma
    gp = np.linalg.norm(_nodal_gradient(p_i), axis=0)
    lhs = np.abs(d + math.log(params.k * params.mu) / params.k) * gp
    return float((p_i.inf - 1.0 - lhs[sel]).min()) if np.any(sel) else math.inf


def lhopital_ratio(k: float, p_inf: float, exponent_sum: float, a: float) -> float:
    """``F(2k) / F(k)`` for ``F(k) = k^{p^- - 1} |ln(k e^{-ak})| / e^{a k (p^- - 1 - s)}``.

    Tends to zero when ``s < p^- - 1``.
    """
    def F(kk):
        return kk ** (p_inf - 1.0) * abs(math.log(kk) - a * kk) * math.exp(
            -a * kk * (p_inf - 1.0 - exponent_sum))
    return F(2.0 * k) / F(k)


@dataclass(frozen=True)
class SubSuperPair:
    """Ordered lower/upper functions for both components."""

    lower_1: GridFunction
    lower_2: GridFunction
    upper_1: GridFunction
    upper_2: GridFunction
    certified: bool = False
    margins: dict = field(default_factory=dict)

    @property
    def lower(self) -> tuple[GridFunction, GridFunction]:
        return (self.lower_1, self.lower_2)

    @property
    def upper(self) -> tuple[GridFunction, GridFunction]:
        return (self.upper_1, self.upper_2)

    def certify(self, report: Report) -> "SubSuperPair":
        return replace(self, certified=bool(report.passed), margins=dict(report.values))

    def invariant_problems(self, tol: float = 0.0) -> list[str]:
        out = []
        for i, (lo, hi) in enumerate(zip(self.lower, self.upper), start=1):
            grid = lo.grid
            b = grid.boundary_mask
            if np.any(lo.values > hi.values + tol):
                out.append(f"lower_{i} exceeds upper_{i} (max gap "
                           f"{float((lo.values - hi.values).max()):.3e})")
            if np.any(lo.values[b] != 0.0):
                out.append(f"lower_{i} is not zero on the boundary")
            if np.any(hi.values[b] < -tol):
                out.append(f"upper_{i} is negative on the boundary")
            if np.any(lo.values[~b] <= 0.0):
                out.append(f"lower_{i} is not positive on interior nodes")
        return out


def layer_pair(spec: SystemSpec, params: BoundaryLayerParams, lam: float,
               opts: SolverOptions | None = None) -> SubSuperPair:
    """``(mu phi_1, mu phi_2)`` below ``(z_lam, y_lam)``; not yet certified."""
    lowers = [params.mu * boundary_layer(params, p) for p in spec.p]
    uppers = [solve_constant_rhs(lam, p, opts).u for p in spec.p]
    return SubSuperPair(lowers[0], lowers[1], uppers[0], uppers[1])


def _norm_sup(values: np.ndarray) -> float:
    return max(1.0, float(np.abs(values).max()))


def verify_subsupersolution(pair: SubSuperPair, spec: SystemSpec, w_samples: int = 4,
                            tol: float = 1e-10, seed: int = 0,
                            exclude: np.ndarray | None = None) -> Report:
    """Check the sub- and supersolution inequalities of both components.

    For component ``i`` and every ``w`` in the sample set of the other
    component's order interval (both endpoints plus ``w_samples`` random
    nodewise convex combinations) the slacks

        sub:   RHS_i(lower_i, w; norms of lower_j) - A_i(lower_i)
        super: A_i(upper_i) - RHS_i(upper_i, w; norms of upper_j)

    are computed at interior nodes and scaled by ``max(1, max|RHS|)``.
    When ``spec.monotone_in_other`` holds, an interval bound valid for
    every ``w`` between the endpoints is checked as well (the coefficient
    is sampled over the reachable range of ``|w|_{r_i}``). Nodes in
    ``exclude`` are skipped for the sub inequality only and counted.
    """
    grid = spec.grid
    rng = np.random.default_rng(seed)
    interior = ~grid.boundary_mask
    excl = np.zeros(grid.size, dtype=bool) if exclude is None else np.asarray(exclude, bool)
    sub_nodes = interior & ~excl
    values: dict = {}
    notes: list[str] = []
    problems = pair.invariant_problems(tol=1e-12)
    notes += problems

    for i in (1, 2):
        k = i - 1
        p = spec.p[k]
        lo_i, hi_i = pair.lower[k].values, pair.upper[k].values
        lo_j, hi_j = pair.lower[1 - k].values, pair.upper[1 - k].values
        A_lo = apply_px_laplacian(lo_i, p).values
        A_hi = apply_px_laplacian(hi_i, p).values
        n_sub = spec.norms(i, lo_j)
        n_sup = spec.norms(i, hi_j)
        ws = [lo_j, hi_j] + [lo_j + rng.uniform(size=grid.size) * (hi_j - lo_j)
                             for _ in range(int(w_samples))]
        sub_min, sup_min = math.inf, math.inf
        try:
            for w in ws:
                t = spec.norms(i, w).r
                a = spec.coefficient(t)
                if np.any(a <= 0):
                    raise CoefficientError(f"A(x, {t:.6g}) <= 0 for component {i}")
                sub_rhs = spec.numerator(i, *spec.reaction_args(i, lo_i, w), n_sub) / a
                sup_rhs = spec.numerator(i, *spec.reaction_args(i, hi_i, w), n_sup) / a
                sub = (sub_rhs - A_lo)[sub_nodes] / _norm_sup(sub_rhs[interior])
                sup = (A_hi - sup_rhs)[interior] / _norm_sup(sup_rhs[interior])
                sub_min = min(sub_min, float(sub.min()) if sub.size else math.inf)
                sup_min = min(sup_min, float(sup.min()))
            if spec.monotone_in_other:
                t_lo = spec.norms(i, lo_j).r
                t_hi = spec.norms(i, hi_j).r
                amin, amax = spec.coefficient_range(t_lo, t_hi)
                if np.any(amin <= 0):
                    raise CoefficientError(f"A(x, t) <= 0 on [{t_lo:.6g}, {t_hi:.6g}]")
                sub_rhs = spec.numerator(i, *spec.reaction_args(i, lo_i, lo_j), n_sub) / amax
                sup_rhs = spec.numerator(i, *spec.reaction_args(i, hi_i, hi_j), n_sup) / amin
                sub = (sub_rhs - A_lo)[sub_nodes] / _norm_sup(sub_rhs[interior])
                sup = (A_hi - sup_rhs)[interior] / _norm_sup(sup_rhs[interior])
                values[f"sub_interval_{i}"] = float(sub.min()) if sub.size else math.inf
                values[f"super_interval_{i}"] = float(sup.min())
        except CoefficientError as exc:
            notes.append(str(exc))
            sub_min = sup_min = -math.inf
        values[f"sub_{i}"] = sub_min
        values[f"super_{i}"] = sup_min

    # hypotheses of the existence theorem on this pair
    values["reaction_sign_ok"] = _reaction_sign_ok(spec, pair)
    values["coefficient_positive_ok"] = _coefficient_positive_ok(spec, pair)
    values["corner_excluded"] = int(excl.sum())
    values["w_samples"] = int(w_samples)
    values["interval_bound"] = bool(spec.monotone_in_other)
    slacks = [v for key, v in values.items() if key.startswith(("sub_", "super_"))]
    values["min_slack"] = float(min(slacks))
    passed = (not problems and values["min_slack"] >= -tol and values["reaction_sign_ok"]
              and values["coefficient_positive_ok"])
    if not values["reaction_sign_ok"]:
        notes.append("f_i or g_i negative on the box [0, |upper_1|] x [0, |upper_2|]")
    if not values["coefficient_positive_ok"]:
        notes.append("A(x, t) not positive on the required t-interval")
    return Report("subsupersolution", passed, values, notes)


def _reaction_sign_ok(spec: SystemSpec, pair: SubSuperPair, levels: int = 5) -> bool:
    m1, m2 = pair.upper_1.sup_norm(), pair.upper_2.sup_norm()
    ts = np.linspace(0.0, 1.0, levels)
    for a in ts:
        for b in ts:
            u1 = np.full(spec.grid.size, a * m1)
            u2 = np.full(spec.grid.size, b * m2)
            for i in (1, 2):
                fv, gv = spec.reactions(i, u1, u2)
                if np.any(fv < 0) or np.any(gv < 0):
                    return False
    return True


def _coefficient_positive_ok(spec: SystemSpec, pair: SubSuperPair) -> bool:
    w_lo = np.minimum(pair.lower_1.values, pair.lower_2.values)
    w_hi = np.maximum(pair.upper_1.values, pair.upper_2.values)
    t_lo = min(spec.norms(i, w_lo).r for i in (1, 2))
    t_hi = max(spec.norms(i, w_hi).r for i in (1, 2))
    amin, _ = spec.coefficient_range(t_lo, t_hi)
    return bool(np.all(amin > 0))


def select_sublinear_parameters(spec: SystemSpec, *, delta: float | None = None,
                                k_ladder=None, lam_ladder=None, w_samples: int = 4,
                                tol: float = 1e-10, seed: int = 0,
                                opts: SolverOptions | None = None):
    """Search ``k`` and ``lam`` until the layer pair verifies.

    For each ``k`` on a doubling ladder (skipping ``sigma >= delta``) and
    ``mu = exp(-a k)``, ``lam`` doubles until ``-Delta_{p_i}(mu phi_i) <= lam``
    at every node and the supersolution inequalities hold. A failing
    subsolution inequality moves on to the next ``k``.

    Returns ``(params, lam)``.
    """
    grid = spec.grid
    delta = default_delta(grid) if delta is None else float(delta)
    a = exponent_ratio_constant(*spec.p)
    k_ladder = k_ladder or [2.0**e for e in range(1, 9)]
    lam_ladder = lam_ladder or [2.0**e for e in range(1, 81)]
    excl = corner_ridge_mask(grid, delta)
    last: dict = {}
    for k in k_ladder:
        if LN2 / k >= delta:
            continue
        params = BoundaryLayerParams.from_k(k, delta, a)
        lowers = [params.mu * boundary_layer(params, p) for p in spec.p]
        op_max = max(float(apply_px_laplacian(lo, p).values.max())
                      for lo, p in zip(lowers, spec.p))
        for lam in lam_ladder:
            if op_max > lam:
                continue
            pair = layer_pair(spec, params, lam, opts)
            rep = verify_subsupersolution(pair, spec, w_samples, tol, seed, excl)
            last = {"k": k, "lambda": lam, **rep.values}
            if rep.passed:
                return params, lam
            subs = [v for key, v in rep.values.items() if key.startswith("sub_")]
            if min(subs) < -tol:
                break
    raise ParameterSearchError("ladders exhausted without a verified pair", last)
