"""Gates and coefficient scans shared by the application presets."""

from __future__ import annotations

import math

import numpy as np

from ..domain import ExponentField, Grid, HypothesisError
from ..system import SystemSpec


class GateError(HypothesisError):
    """A named inequality required by an application does not hold."""


def require(ok: bool, label: str, detail: str = "") -> None:
    if not ok:
        raise GateError(f"({label}) violated" + (f": {detail}" if detail else ""))


def fields(texts, grid: Grid, kind: str, label: str) -> tuple[ExponentField, ExponentField]:
    return tuple(ExponentField.from_expr(t, grid, kind, f"{label}{i + 1}")
                 for i, t in enumerate(texts))


def probe_ts(t_max: float = 1e12, n: int = 97) -> np.ndarray:
    return np.concatenate([[0.0], np.geomspace(1e-12, t_max, n)])


def check_regime(spec: SystemSpec, regime: str, a0: float, *, b0: float | None = None,
                 a_limit: float | None = None) -> None:
    """Sampled check of the lower or upper bound on ``A`` named by ``regime``.

    ``A1``: ``A >= a0`` on ``[0, b0]`` (``b0 = inf`` means the half line).
    ``A2``: ``0 < A <= a0`` on ``(0, inf)`` and ``A`` near ``a_limit`` at the
    far end of the sample range.
    """
    if regime == "A1":
        top = 1e12 if b0 is None or math.isinf(b0) else b0
        ts = np.concatenate([np.linspace(0.0, top, 65), probe_ts(top)])
        vals = spec.coefficient(ts[:, None])
        require(bool(np.all(vals >= a0 * (1 - 1e-12))), "A1",
                f"A(x, t) >= a0 = {a0:g} fails (min {vals.min():.6g})")
    elif regime == "A2":
        ts = probe_ts()[1:]
        vals = spec.coefficient(ts[:, None])
        require(bool(np.all(vals > 0)), "A2", f"A(x, t) > 0 fails (min {vals.min():.6g})")
        require(bool(np.all(vals <= a0 * (1 + 1e-12))), "A2",
                f"A(x, t) <= a0 = {a0:g} fails (max {vals.max():.6g})")
        if a_limit is not None:
            far = vals[-1]
            require(bool(np.all(np.abs(far - a_limit) <= 1e-3 * a_limit)), "A2",
                    f"A(x, t) does not approach {a_limit:g} (far value {far.min():.6g})")
    else:
        raise ValueError(f"unknown regime {regime!r}")


def limit_level_scan(spec: SystemSpec, level: float, max_exp: int = 80) -> float:
    """Smallest ``a1 = 2^e`` with ``A(x, t) >= level`` for all sampled ``t >= a1``."""
    for e in range(0, max_exp + 1):
        t = 2.0**e
        ts = np.geomspace(t, t * 2.0**40, 81)
        if np.all(spec.coefficient(ts[:, None]) >= level):
            return t
    raise GateError(f"(A2) no a1 <= 2^{max_exp} with A >= {level:g} beyond it")


def coefficient_floor(spec: SystemSpec, t_lo: float, t_hi: float) -> float:
    amin, _ = spec.coefficient_range(t_lo, t_hi, samples=129)
    return float(amin.min())


def coefficient_ceiling(spec: SystemSpec, t_lo: float, t_hi: float) -> float:
    _, amax = spec.coefficient_range(t_lo, t_hi, samples=129)
    return float(amax.max())
