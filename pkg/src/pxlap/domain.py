"""Grids over an interval or rectangle, nodal fields and exponent fields.

Nodes are stored flat in C order over the per-axis index tuple
``(i_x[, i_y])``, i.e. ``x`` varies slowest.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .expr import ExpressionError, compile_expression

__all__ = [
    "Grid",
    "GridFunction",
    "ExponentField",
    "HypothesisError",
    "GridMismatchError",
    "ElementGradient",
    "build_grid",
    "boundary_distance",
    "side_distances",
    "eval_field",
]


class HypothesisError(ValueError):
    """A structural hypothesis on the data does not hold.

    The message always starts with the name of the violated condition,
    e.g. ``"(H): ..."``.
    """


class GridMismatchError(ValueError):
    pass


@dataclass(frozen=True)
class Grid:
    dim: int
    n: int
    bounds: tuple[tuple[float, float], ...]

    @cached_property
    def spacing(self) -> tuple[float, ...]:
        return tuple((b - a) / (self.n - 1) for a, b in self.bounds)

    @property
    def h(self) -> float:
        """Grid spacing; the largest one if the axes differ."""
        return max(self.spacing)

    @cached_property
    def shape(self) -> tuple[int, ...]:
        return (self.n,) * self.dim

    @property
    def size(self) -> int:
        return self.n**self.dim

    @cached_property
    def axes(self) -> tuple[np.ndarray, ...]:
        return tuple(np.linspace(a, b, self.n) for a, b in self.bounds)

    @cached_property
    def coords(self) -> tuple[np.ndarray, ...]:
        """Flat coordinate arrays, one per axis."""
        mesh = np.meshgrid(*self.axes, indexing="ij")
        out = tuple(m.ravel() for m in mesh)
        for a in out:
            a.setflags(write=False)
        return out

    @cached_property
    def boundary_mask(self) -> np.ndarray:
        idx = np.indices(self.shape).reshape(self.dim, -1)
        mask = np.any((idx == 0) | (idx == self.n - 1), axis=0)
        mask.setflags(write=False)
        return mask

    @cached_property
    def interior_idx(self) -> np.ndarray:
        return np.flatnonzero(~self.boundary_mask)

    @cached_property
    def boundary_idx(self) -> np.ndarray:
        return np.flatnonzero(self.boundary_mask)

    @cached_property
    def weights(self) -> np.ndarray:
        """Composite trapezoid weights; the one quadrature used everywhere."""
        per_axis = []
        for h in self.spacing:
            w = np.full(self.n, h)
            w[[0, -1]] = h / 2
            per_axis.append(w)
        w = per_axis[0]
        for other in per_axis[1:]:
            w = np.multiply.outer(w, other)
        w = w.ravel()
        w.setflags(write=False)
        return w

    @property
    def measure(self) -> float:
        return float(np.prod([b - a for a, b in self.bounds]))

    def integrate(self, values) -> float:
        return float(self.weights @ np.asarray(values, dtype=float))

    def env(self) -> dict[str, np.ndarray]:
        names = ("x", "y")
        return {names[k]: self.coords[k] for k in range(self.dim)}

    @cached_property
    def gradient(self) -> "ElementGradient":
        return ElementGradient.build(self)

    def field(self, values) -> "GridFunction":
        return GridFunction(self, values)

    def zeros(self) -> "GridFunction":
        return GridFunction(self, np.zeros(self.size))


def build_grid(dim: int, n: int, bounds=None) -> Grid:
    """Uniform grid with ``n`` nodes per axis on an interval or rectangle.

    ``bounds`` is ``(a, b)`` (applied to every axis) or one pair per axis;
    it defaults to the unit interval/square.
    """
    if dim not in (1, 2):
        raise ValueError(f"dim must be 1 or 2, got {dim}")
    if int(n) != n or n < 3:
        raise ValueError(f"need n >= 3 nodes per axis to have an interior node, got {n}")
    if bounds is None:
        bounds = (0.0, 1.0)
    arr = np.asarray(bounds, dtype=float)
    if arr.shape == (2,):
        arr = np.tile(arr, (dim, 1))
    if arr.shape != (dim, 2):
        raise ValueError(f"bounds must be a pair or {dim} pairs, got {bounds!r}")
    if not np.all(np.isfinite(arr)) or np.any(arr[:, 1] <= arr[:, 0]):
        raise ValueError(f"degenerate bounds {arr.tolist()}")
    return Grid(dim, int(n), tuple((float(a), float(b)) for a, b in arr))


class GridFunction:
    """Finite nodal values on a grid. Immutable."""

    __slots__ = ("grid", "values")

    def __init__(self, grid: Grid, values):
        arr = np.array(values, dtype=float)
        if arr.ndim == 0:
            arr = np.full(grid.size, float(arr))
        arr = arr.reshape(-1)
        if arr.size != grid.size:
            raise GridMismatchError(f"expected {grid.size} nodal values, got {arr.size}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("grid function values must be finite")
        arr.setflags(write=False)
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "values", arr)

    def __setattr__(self, name, value):
        raise AttributeError("GridFunction is immutable")

    def __repr__(self):
        return (f"{type(self).__name__}(dim={self.grid.dim}, n={self.grid.n}, "
                f"min={self.values.min():.6g}, max={self.values.max():.6g})")

    def _other(self, other):
        if isinstance(other, GridFunction):
            if other.grid != self.grid:
                raise GridMismatchError("grid functions live on different grids")
            return other.values
        return other

    def __add__(self, other):
        return GridFunction(self.grid, self.values + self._other(other))

    __radd__ = __add__

    def __sub__(self, other):
        return GridFunction(self.grid, self.values - self._other(other))

    def __rsub__(self, other):
        return GridFunction(self.grid, self._other(other) - self.values)

    def __mul__(self, other):
        return GridFunction(self.grid, self.values * self._other(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        return GridFunction(self.grid, self.values / self._other(other))

    def __neg__(self):
        return GridFunction(self.grid, -self.values)

    def __abs__(self):
        return GridFunction(self.grid, np.abs(self.values))

    def nodal(self) -> np.ndarray:
        return self.values.reshape(self.grid.shape)

    def max(self) -> float:
        return float(self.values.max())

    def min(self) -> float:
        return float(self.values.min())

    def sup_norm(self) -> float:
        return float(np.abs(self.values).max())

    def integral(self) -> float:
        return self.grid.integrate(self.values)

    def leq(self, other, tol: float = 0.0) -> bool:
        return bool(np.all(self.values <= self._other(other) + tol))


_KINDS = {
    # kind: (check, message)
    "laplacian": (lambda lo: lo > 1.0, "(H): Laplacian exponent needs p^- > 1"),
    "lebesgue": (lambda lo: lo >= 1.0, "(H): Lebesgue exponent needs ess inf >= 1"),
    "power": (lambda lo: lo >= 0.0, "(H): power exponent must be nonnegative"),
    "any": (lambda lo: True, ""),
}


class ExponentField(GridFunction):
    """A nodal exponent with cached extrema ``inf`` (p^-) and ``sup`` (p^+)."""

    __slots__ = ("kind", "name", "inf", "sup")

    def __init__(self, grid: Grid, values, kind: str = "any", name: str = "p"):
        super().__init__(grid, values)
        if kind not in _KINDS:
            raise ValueError(f"unknown exponent kind {kind!r}")
        lo, hi = float(self.values.min()), float(self.values.max())
        check, message = _KINDS[kind]
        if not check(lo):
            raise HypothesisError(f"{message}; {name} has minimum {lo:.6g}")
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "name", name)
        object.__setattr__(self, "inf", lo)
        object.__setattr__(self, "sup", hi)

    @classmethod
    def constant(cls, grid: Grid, value: float, kind: str = "any", name: str = "p"):
        return cls(grid, np.full(grid.size, float(value)), kind, name)

    @classmethod
    def from_expr(cls, text, grid: Grid, kind: str = "any", name: str = "p"):
        return cls(grid, eval_field(text, grid).values, kind, name)

    @property
    def base(self) -> GridFunction:
        return GridFunction(self.grid, self.values)

    @property
    def is_constant(self) -> bool:
        return self.inf == self.sup

    def below_dimension(self) -> bool:
        """Whether p^+ < N holds; recorded only, the discrete scheme never needs it."""
        return self.sup < self.grid.dim


def eval_field(expr_text, grid: Grid) -> GridFunction:
    """Evaluate an expression in ``x`` (and ``y`` in 2-D) at every node."""
    expr = compile_expression(expr_text, variables=("x", "y"))
    if "y" in expr.names_used and grid.dim < 2:
        raise ExpressionError("'y' is not defined on a 1-D grid", expr.text.find("y"), expr.text)
    values = expr.evaluate({**{"x": 0.0, "y": 0.0}, **grid.env()})
    return GridFunction(grid, np.broadcast_to(values, (grid.size,)))


def side_distances(grid: Grid) -> np.ndarray:
    """Distances from every node to each side, shape ``(size, 2*dim)``."""
    cols = []
    for k, (a, b) in enumerate(grid.bounds):
        c = grid.coords[k]
        cols += [c - a, b - c]
    out = np.stack(cols, axis=1)
    out[grid.boundary_mask] = np.where(out[grid.boundary_mask] < 1e-14 * grid.h, 0.0,
                                       out[grid.boundary_mask])
    return np.maximum(out, 0.0)


def boundary_distance(grid: Grid) -> GridFunction:
    """Exact distance to the boundary; zero exactly on boundary nodes."""
    d = side_distances(grid).min(axis=1)
    d[grid.boundary_mask] = 0.0
    return GridFunction(grid, d)


@dataclass(frozen=True)
class ElementGradient:
    """Piecewise-constant gradients on the elements of a grid.

    In 1-D the elements are the cells between consecutive nodes. In 2-D
    every square cell carries four corner triangles (the union of both
    diagonal splits, each triangle weighted by a quarter of the cell area),
    which reduces to the five-point Laplacian when the exponent is 2.

    ``ops[d] @ u`` is the d-th gradient component per element, ``weights``
    the element measures and ``average @ p`` the element exponent (mean of
    the element's vertex values).
    """

    ops: tuple[sp.csr_matrix, ...]
    weights: np.ndarray
    average: sp.csr_matrix

    @classmethod
    def build(cls, grid: Grid) -> "ElementGradient":
        n = grid.n
        if grid.dim == 1:
            (h,) = grid.spacing
            m = n - 1
            rows = np.repeat(np.arange(m), 2)
            cols = np.stack([np.arange(m), np.arange(1, n)], axis=1).ravel()
            vals = np.tile([-1.0 / h, 1.0 / h], m)
            g = sp.csr_matrix((vals, (rows, cols)), shape=(m, n))
            avg = sp.csr_matrix((np.full(2 * m, 0.5), (rows, cols)), shape=(m, n))
            return cls((g,), np.full(m, h), avg)

        hx, hy = grid.spacing
        idx = np.arange(grid.size).reshape(n, n)
        ll, lr = idx[:-1, :-1].ravel(), idx[1:, :-1].ravel()
        ul, ur = idx[:-1, 1:].ravel(), idx[1:, 1:].ravel()
        # (corner, x-edge (from, to), y-edge (from, to), third vertex)
        tris = [
            (ll, (ll, lr), (ll, ul)),
            (lr, (ll, lr), (lr, ur)),
            (ul, (ul, ur), (ll, ul)),
            (ur, (ul, ur), (lr, ur)),
        ]
        m = 4 * ll.size
        elem = np.arange(m).reshape(4, -1)
        gx_r, gx_c, gx_v, gy_r, gy_c, gy_v, av_r, av_c = ([] for _ in range(8))
        for t, (corner, (xa, xb), (ya, yb)) in enumerate(tris):
            e = elem[t]
            gx_r += [e, e]
            gx_c += [xa, xb]
            gx_v += [np.full(e.size, -1.0 / hx), np.full(e.size, 1.0 / hx)]
            gy_r += [e, e]
            gy_c += [ya, yb]
            gy_v += [np.full(e.size, -1.0 / hy), np.full(e.size, 1.0 / hy)]
            # the triangle's three distinct vertices: the x-edge plus the far y-edge end
            other = np.where((yb == xa) | (yb == xb), ya, yb)
            for v in (xa, xb, other):
                av_r.append(e)
                av_c.append(v)
        cat = np.concatenate
        gx = sp.csr_matrix((cat(gx_v), (cat(gx_r), cat(gx_c))), shape=(m, grid.size))
        gy = sp.csr_matrix((cat(gy_v), (cat(gy_r), cat(gy_c))), shape=(m, grid.size))
        avg = sp.csr_matrix((np.full(3 * m, 1.0 / 3.0), (cat(av_r), cat(av_c))),
                            shape=(m, grid.size))
        return cls((gx, gy), np.full(m, hx * hy / 4.0), avg)

    @property
    def n_elements(self) -> int:
        return self.weights.size

    def apply(self, u: np.ndarray) -> np.ndarray:
        """Element gradients, shape ``(dim, n_elements)``."""
        return np.stack([g @ u for g in self.ops])
