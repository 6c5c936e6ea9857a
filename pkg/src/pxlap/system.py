"""Data of a coupled nonlocal system and its right-hand sides.

Component ``i`` (1 or 2) reads

    -A(x, |u_j|_{r_i}) Delta_{p_i} u_i
        = f_i(x, u1, u2) |u_j|_{q_i}^{alpha_i} + g_i(x, u1, u2) |u_j|_{s_i}^{gamma_i}

with ``j`` the other component.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .domain import ExponentField, Grid, GridFunction, HypothesisError
from .expr import compile_expression
from .varlebesgue import luxemburg_norm

__all__ = ["SystemSpec", "CoefficientError", "NormSet", "Reaction", "Coefficient",
           "reaction_from_expr", "coefficient_from_expr"]

Reaction = Callable[[dict, np.ndarray, np.ndarray], np.ndarray]
Coefficient = Callable[[dict, np.ndarray], np.ndarray]


class CoefficientError(ValueError):
    """The nonlocal coefficient is not positive where it must be."""


def reaction_from_expr(text: str) -> Reaction:
    """Reaction term from an expression in ``x, y, u, v``."""
    expr = compile_expression(text, ("x", "y", "u", "v"))

    def f(env, u1, u2):
        return expr.evaluate({"x": 0.0, "y": 0.0, **env, "u": u1, "v": u2})

    f.text = text
    return f


def coefficient_from_expr(text: str) -> Coefficient:
    """Nonlocal coefficient from an expression in ``x, y, t``."""
    expr = compile_expression(text, ("x", "y", "t"))

    def a(env, t):
        return expr.evaluate({"x": 0.0, "y": 0.0, **env, "t": t})

    a.text = text
    return a


def _zero(env, u1, u2):
    return np.zeros(np.broadcast_shapes(np.shape(u1), np.shape(u2)))


@dataclass(frozen=True)
class NormSet:
    """The three norms of ``u_j`` that enter component ``i``."""

    q: float
    s: float
    r: float


@dataclass(eq=False)
class SystemSpec:
    """Complete data of the system: exponents, coefficient, reactions, regime.

    ``monotone_in_other`` declares that ``f_i`` and ``g_i`` are
    nondecreasing in the other component, which lets the verifier bound
    the right-hand side over a whole order interval from its endpoints.
    """

    grid: Grid
    p: tuple[ExponentField, ExponentField]
    q: tuple[ExponentField, ExponentField]
    r: tuple[ExponentField, ExponentField]
    s: tuple[ExponentField, ExponentField]
    alpha: tuple[ExponentField, ExponentField]
    gamma: tuple[ExponentField, ExponentField]
    A: Coefficient
    f: tuple[Reaction, Reaction]
    g: tuple[Reaction, Reaction] = (_zero, _zero)
    regime: str | None = None
    a0: float | None = None
    a_inf: float | None = None
    monotone_in_other: bool = False
    name: str = "system"
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        self.validate_exponents()

    # construction -----------------------------------------------------
    @classmethod
    def from_expressions(cls, grid: Grid, *, p, q=("2", "2"), r=("2", "2"), s=None,
                         alpha=("0", "0"), gamma=("0", "0"), A="1", f=("0", "0"),
                         g=("0", "0"), **kw) -> "SystemSpec":
        s = q if s is None else s

        def fields(texts, kind, label):
            return tuple(ExponentField.from_expr(t, grid, kind, f"{label}{i + 1}")
                         for i, t in enumerate(texts))

        if grid.dim == 1:
            for text in (A, *f, *g):
                if not callable(text) and "y" in compile_expression(
                        str(text), ("x", "y", "t", "u", "v")).names_used:
                    raise ValueError(f"'y' is not defined on a 1-D grid: {text!r}")
        A_fn = A if callable(A) else coefficient_from_expr(str(A))
        f_fn = tuple(x if callable(x) else reaction_from_expr(str(x)) for x in f)
        g_fn = tuple(x if callable(x) else reaction_from_expr(str(x)) for x in g)
        return cls(grid, fields(p, "laplacian", "p"), fields(q, "lebesgue", "q"),
                   fields(r, "lebesgue", "r"), fields(s, "lebesgue", "s"),
                   fields(alpha, "power", "alpha"), fields(gamma, "power", "gamma"),
                   A_fn, f_fn, g_fn, **kw)

    # gates ------------------------------------------------------------
    def validate_exponents(self) -> None:
        """(H): ``p_i^- > 1``, ``q_i, r_i, s_i >= 1``, ``alpha_i, gamma_i >= 0``."""
        checks = [(self.p, "laplacian", lambda lo: lo > 1.0, "p^- > 1"),
                  (self.q, "lebesgue", lambda lo: lo >= 1.0, "ess inf q >= 1"),
                  (self.r, "lebesgue", lambda lo: lo >= 1.0, "ess inf r >= 1"),
                  (self.s, "lebesgue", lambda lo: lo >= 1.0, "ess inf s >= 1"),
                  (self.alpha, "power", lambda lo: lo >= 0.0, "alpha >= 0"),
                  (self.gamma, "power", lambda lo: lo >= 0.0, "gamma >= 0")]
        for pair, _, ok, what in checks:
            for fld in pair:
                if fld.grid != self.grid:
                    raise ValueError(f"{fld.name} lives on a different grid")
                if not ok(fld.inf):
                    raise HypothesisError(f"(H): {what} violated by {fld.name} (min {fld.inf:.6g})")
        if self.regime not in (None, "A1", "A2"):
            raise ValueError(f"regime must be A1 or A2, got {self.regime!r}")

    def below_dimension(self) -> bool:
        """``p_i^+ < N`` for both components; recorded only."""
        return all(p.below_dimension() for p in self.p)

    @property
    def env(self) -> dict:
        return self.grid.env()

    # evaluation -------------------------------------------------------
    def coefficient(self, t) -> np.ndarray:
        """Nodal ``A(x, t)``; ``t`` may be a column of values (rows = t)."""
        t = np.asarray(t, dtype=float)
        out = np.asarray(self.A(self.env, t), dtype=float)
        shape = (self.grid.size,) if t.ndim == 0 else (t.shape[0], self.grid.size)
        return np.broadcast_to(out, shape)

    def coefficient_range(self, t_lo: float, t_hi: float, samples: int = 65):
        """Nodewise min and max of ``A(x, t)`` sampled on ``[t_lo, t_hi]``."""
        ts = np.unique(np.concatenate([np.linspace(t_lo, t_hi, samples),
                                       np.geomspace(max(t_lo, 1e-300), max(t_hi, 1e-300), samples)
                                       if t_lo > 0 else []]))
        vals = self.coefficient(ts[:, None])
        return vals.min(axis=0), vals.max(axis=0)

    def norms(self, i: int, uj) -> NormSet:
        k = i - 1
        vals = uj.values if isinstance(uj, GridFunction) else np.asarray(uj, dtype=float)
        return NormSet(luxemburg_norm(vals, self.q[k]), luxemburg_norm(vals, self.s[k]),
                       luxemburg_norm(vals, self.r[k]))

    def reaction_args(self, i: int, own, other):
        """Order (own, other) into (u1, u2) for component ``i``."""
        return (own, other) if i == 1 else (other, own)

    def reactions(self, i: int, u1, u2):
        k = i - 1
        env = self.env
        fv = np.broadcast_to(np.asarray(self.f[k](env, u1, u2), dtype=float), np.shape(u1))
        gv = np.broadcast_to(np.asarray(self.g[k](env, u1, u2), dtype=float), np.shape(u1))
        return fv, gv

    def numerator(self, i: int, u1, u2, norms: NormSet) -> np.ndarray:
        """``f_i N_q^alpha_i + g_i N_s^gamma_i`` without the coefficient."""
        k = i - 1
        fv, gv = self.reactions(i, u1, u2)
        return fv * norms.q ** self.alpha[k].values + gv * norms.s ** self.gamma[k].values

    def rhs(self, i: int, u1, u2, norms: NormSet | None = None, t: float | None = None
            ) -> np.ndarray:
        """Nodal right-hand side of component ``i`` divided by ``A``.

        Norms default to those of the other component; ``t`` defaults to
        its ``r_i`` norm.
        """
        uj = u2 if i == 1 else u1
        norms = norms or self.norms(i, uj)
        t = norms.r if t is None else t
        a = self.coefficient(t)
        if np.any(a <= 0):
            raise CoefficientError(
                f"A(x, t) must be positive; min {a.min():.6g} at t={t:.6g} (component {i})")
        return self.numerator(i, u1, u2, norms) / a
