"""Modulars and Luxemburg norms on variable-exponent Lebesgue spaces.

Every integral goes through the grid's trapezoid weights, so the
inequalities checked here are consistent with the ones the solver sees.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .domain import ExponentField, GridFunction, GridMismatchError, HypothesisError
from .report import Report

__all__ = [
    "modular",
    "luxemburg_norm",
    "conjugate_exponent",
    "holder_pairing_check",
    "modular_norm_diagnostics",
    "ModularReport",
    "NORM_RTOL",
]

NORM_RTOL = 1e-12


def _values(u, grid):
    if isinstance(u, GridFunction):
        if u.grid != grid:
            raise GridMismatchError("function and exponent live on different grids")
        return u.values
    arr = np.asarray(u, dtype=float).reshape(-1)
    if arr.size != grid.size:
        raise GridMismatchError(f"expected {grid.size} nodal values, got {arr.size}")
    return arr


def _modular_values(a: np.ndarray, p: np.ndarray, w: np.ndarray) -> float:
    with np.errstate(under="ignore"):
        return float(w @ np.power(a, p))


def modular(u, p: ExponentField) -> float:
    """Quadrature of ``|u|^p`` over the domain."""
    a = np.abs(_values(u, p.grid))
    return _modular_values(a, p.values, p.grid.weights)


def luxemburg_norm(u, p: ExponentField, rtol: float = NORM_RTOL) -> float:
    """The scale ``lam > 0`` with ``modular(u / lam) == 1``; zero for ``u == 0``.

    The map ``lam -> modular(u / lam)`` is continuous and strictly
    decreasing wherever ``u`` is not identically zero, so bisection on a
    bracket is unconditionally safe.
    """
    a = np.abs(_values(u, p.grid))
    if not np.all(np.isfinite(a)):
        raise ValueError("norm of a non-finite function")
    if p.inf < 1.0:
        raise HypothesisError(f"(H): Lebesgue exponent needs ess inf >= 1; {p.name} has {p.inf:.6g}")
    w = p.grid.weights
    umax = float(a.max())
    if umax == 0.0 or _modular_values(a / umax, p.values, w) == 0.0:
        return 0.0
    pv = p.values
    meas = p.grid.measure
    rho = lambda lam: _modular_values(a / lam, pv, w)  # noqa: E731

    lo = umax * min(1.0, meas) ** (1.0 / p.sup) / 2.0
    hi = umax * max(1.0, meas) ** (1.0 / p.inf) * 2.0
    while rho(lo) < 1.0:
        lo /= 2.0
    while rho(hi) > 1.0:
        hi *= 2.0
    while hi - lo > rtol * 0.25 * lo:
        mid = 0.5 * (lo + hi)
        if rho(mid) > 1.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def conjugate_exponent(p: ExponentField) -> ExponentField:
    if p.inf <= 1.0:
        raise HypothesisError(f"(H): conjugate exponent needs p^- > 1; {p.name} has {p.inf:.6g}")
    return ExponentField(p.grid, p.values / (p.values - 1.0), "lebesgue", f"{p.name}'")


def holder_pairing_check(u, v, p: ExponentField, tol: float = 1e-12) -> Report:
    """``|int u v| <= (1/p^- + 1/q^-) |u|_p |v|_q`` with ``q`` the conjugate of ``p``."""
    q = conjugate_exponent(p)
    uu, vv = _values(u, p.grid), _values(v, p.grid)
    lhs = abs(p.grid.integrate(uu * vv))
    nu, nv = luxemburg_norm(uu, p), luxemburg_norm(vv, q)
    bound = (1.0 / p.inf + 1.0 / q.inf) * nu * nv
    passed = lhs <= bound * (1.0 + tol) + tol
    return Report("holder", passed, {"lhs": lhs, "bound": bound, "norm_u": nu, "norm_v": nv,
                                     "p_inf": p.inf, "q_inf": q.inf})


@dataclass
class ModularReport:
    """Modular, norm and the norm/modular relations checked on them.

    ``relation_flags`` maps each relation to ``"held"``, ``"failed"`` or
    ``"n/a"`` (branch not applicable for this norm value).
    """

    modular: float
    norm: float
    p_inf: float
    p_sup: float
    relation_flags: dict[str, str] = field(default_factory=dict)
    tol: float = 1e-9

    @property
    def passed(self) -> bool:
        return all(v != "failed" for v in self.relation_flags.values())

    def to_report(self) -> Report:
        return Report("modular_norm", self.passed,
                      {"modular": self.modular, "norm": self.norm, "p_inf": self.p_inf,
                       "p_sup": self.p_sup, "flags": dict(self.relation_flags)})


def _flag(ok: bool) -> str:
    return "held" if ok else "failed"


def modular_norm_diagnostics(u, p: ExponentField, tol: float = 1e-9) -> ModularReport:
    """Check the norm/modular relations for one nonzero ``u``.

    * ``unit_scale``: the modular of ``u / |u|`` equals one.
    * ``trichotomy``: norm and modular sit on the same side of one.
    * ``above_one`` / ``below_one``: the power sandwiches for norm > 1 and < 1.
    """
    uu = _values(u, p.grid)
    rho = modular(uu, p)
    nrm = luxemburg_norm(uu, p)
    if nrm == 0.0:
        raise ValueError("diagnostics need a nonzero function")
    flags: dict[str, str] = {}
    flags["unit_scale"] = _flag(abs(modular(uu / nrm, p) - 1.0) <= tol)

    near_one = abs(nrm - 1.0) <= tol
    if near_one:
        flags["trichotomy"] = _flag(abs(rho - 1.0) <= tol * max(1.0, p.sup))
    elif nrm < 1.0:
        flags["trichotomy"] = _flag(rho < 1.0 + tol)
    else:
        flags["trichotomy"] = _flag(rho > 1.0 - tol)

    lo_pow, hi_pow = nrm**p.inf, nrm**p.sup
    if nrm > 1.0:
        flags["above_one"] = _flag(lo_pow * (1 - tol) <= rho <= hi_pow * (1 + tol))
    else:
        flags["above_one"] = "n/a"
    if nrm < 1.0:
        flags["below_one"] = _flag(hi_pow * (1 - tol) <= rho <= lo_pow * (1 + tol))
    else:
        flags["below_one"] = "n/a"
    return ModularReport(rho, nrm, p.inf, p.sup, flags, tol)
