"""
Integrable functions on the half-line.

Functions are piecewise-linear on a nonuniform grid covering [0, T_max] and
are extended by zero beyond T_max. Everything here is exact for that
representation: |x| is integrated by splitting cells at sign changes, and the
worst subset of a given measure is found by a level-set sweep.
"""

import logging
import math
from dataclasses import dataclass
from typing import Callable, Iterable, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import integrate

from app.config import settings
from app.errors import InputError

logger = logging.getLogger(__name__)

# two-point Gauss-Legendre rule on [-1, 1]
_GAUSS_X, _GAUSS_W = np.polynomial.legendre.leggauss(2)


def _frozen(values) -> np.ndarray:
    arr = np.array(values, dtype=float)
    arr.setflags(write=False)
    return arr


# =========================
# GRID
# =========================
class Grid:
    """Strictly increasing nodes 0 = t_0 < ... < t_n = T_max."""

    __slots__ = ("nodes",)

    def __init__(self, nodes: Sequence[float]):
        nodes = np.asarray(nodes, dtype=float)
        if nodes.ndim != 1 or nodes.size < 2:
            raise InputError("Grid needs at least 2 nodes")
        if not np.all(np.isfinite(nodes)):
            raise InputError("Grid nodes must be finite")
        if nodes[0] != 0.0:
            raise InputError(f"Grid must start at 0, got {nodes[0]}")
        if np.any(np.diff(nodes) <= 0.0):
            raise InputError("Grid nodes must be strictly increasing")
        self.nodes = _frozen(nodes)

    @classmethod
    def uniform(cls, t_max: float, cells: int) -> "Grid":
        if t_max <= 0 or cells < 1:
            raise InputError(f"Invalid uniform grid: t_max={t_max}, cells={cells}")
        return cls(np.linspace(0.0, t_max, cells + 1))

    @classmethod
    def geometric(cls, t_max: float, cells: int, scale: float = 1.0) -> "Grid":
        """
        Nodes scale*(exp(k*s) - 1) for s uniform on [0, 1].

        Cell widths grow like (scale + t), so both t ~ 0 and the tail are
        resolved with the same relative accuracy.
        """
        if t_max <= 0 or cells < 1 or scale <= 0:
            raise InputError(f"Invalid geometric grid: t_max={t_max}, cells={cells}, scale={scale}")
        kappa = math.log1p(t_max / scale)
        nodes = scale * np.expm1(kappa * np.linspace(0.0, 1.0, cells + 1))
        nodes[0] = 0.0
        nodes[-1] = t_max
        return cls(nodes)

    @classmethod
    def default(
        cls,
        t_max: Optional[float] = None,
        cells: Optional[int] = None,
        kind: Optional[str] = None,
    ) -> "Grid":
        t_max = settings.T_MAX if t_max is None else t_max
        cells = settings.CELLS if cells is None else cells
        kind = settings.GRID if kind is None else kind
        if kind == "uniform":
            return cls.uniform(t_max, cells)
        if kind == "geometric":
            return cls.geometric(t_max, cells, settings.GRID_SCALE)
        raise InputError(f"Unknown grid kind: {kind}")

    @property
    def t_max(self) -> float:
        return float(self.nodes[-1])

    @property
    def cells(self) -> int:
        return self.nodes.size - 1

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.nodes)

    def refined(self) -> "Grid":
        """2x finer grid (cell midpoints inserted)."""
        mids = 0.5 * (self.nodes[:-1] + self.nodes[1:])
        out = np.empty(2 * self.cells + 1)
        out[0::2] = self.nodes
        out[1::2] = mids
        return Grid(out)

    def coarsened(self) -> "Grid":
        """Every other node, always keeping T_max."""
        nodes = self.nodes[::2]
        if nodes[-1] != self.nodes[-1]:
            nodes = np.append(nodes, self.nodes[-1])
        return Grid(nodes)

    def merged(self, other: "Grid") -> "Grid":
        return self.with_breakpoints(other.nodes)

    def with_breakpoints(self, points: Iterable[float]) -> "Grid":
        points = np.asarray(list(points), dtype=float)
        points = points[np.isfinite(points) & (points >= 0.0)]
        nodes = np.union1d(self.nodes, points)
        # drop near-duplicates created by round-off
        keep = np.concatenate(([True], np.diff(nodes) > 1e-14 * np.maximum(1.0, nodes[1:])))
        nodes = nodes[keep]
        return Grid(nodes)

    def gauss_points(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """
        Two Gauss points per cell.

        Returns:
            (points, weights, cell_index), each of length 2 * cells, ordered by cell
        """
        left = self.nodes[:-1]
        half = 0.5 * self.widths
        mid = left + half
        points = (mid[:, None] + half[:, None] * _GAUSS_X[None, :]).ravel()
        weights = (half[:, None] * _GAUSS_W[None, :]).ravel()
        cell_index = np.repeat(np.arange(self.cells), 2)
        return points, weights, cell_index

    def __eq__(self, other) -> bool:
        if not isinstance(other, Grid):
            return NotImplemented
        return self is other or np.array_equal(self.nodes, other.nodes)

    __hash__ = None

    def __repr__(self) -> str:
        return f"Grid(cells={self.cells}, t_max={self.t_max})"


# =========================
# GRID FUNCTION
# =========================
Scalar = Union[int, float]


class GridFunction:
    """
    Piecewise-linear function with nodal values on a Grid, zero beyond T_max.

    Instances are immutable.
    """

    __slots__ = ("grid", "values")

    def __init__(self, grid: Grid, values: Sequence[float]):
        values = np.asarray(values, dtype=float)
        if values.shape != grid.nodes.shape:
            raise InputError(f"Expected {grid.nodes.size} values, got {values.shape}")
        if not np.all(np.isfinite(values)):
            bad = int(np.flatnonzero(~np.isfinite(values))[0])
            raise InputError(f"GridFunction values must be finite (t={grid.nodes[bad]})")
        self.grid = grid
        self.values = _frozen(values)

    @classmethod
    def sample(cls, grid: Grid, fn: Callable[[np.ndarray], np.ndarray]) -> "GridFunction":
        values = np.broadcast_to(np.asarray(fn(grid.nodes), dtype=float), grid.nodes.shape)
        return cls(grid, values)

    @classmethod
    def zeros(cls, grid: Grid) -> "GridFunction":
        return cls(grid, np.zeros_like(grid.nodes))

    @classmethod
    def box(
        cls,
        grid: Grid,
        start: float,
        end: float,
        height: float = 1.0,
        ramp: float = 1e-9,
    ) -> "GridFunction":
        """
        height on [start, end], zero elsewhere.

        The jumps are represented by ramps of width `ramp` at explicit
        breakpoints added to the grid.
        """
        if not 0.0 <= start < end:
            raise InputError(f"Invalid box [{start}, {end}]")
        points = [start, end, end + ramp]
        if start > 0.0:
            points.append(max(0.0, start - ramp))
        fine = grid.with_breakpoints(points)
        t = fine.nodes
        values = np.where((t >= start) & (t <= end), height, 0.0)
        return cls(fine, values)

    @property
    def t_max(self) -> float:
        return self.grid.t_max

    def __call__(self, t) -> np.ndarray:
        return np.interp(t, self.grid.nodes, self.values, left=0.0, right=0.0)

    def resample(self, grid: Grid) -> "GridFunction":
        if grid == self.grid:
            return self
        return GridFunction(grid, self(grid.nodes))

    def norm(self) -> float:
        return integrate_abs(self, MeasurableSubset.half_line())

    def _binary(self, other, op) -> "GridFunction":
        if isinstance(other, GridFunction):
            if other.grid == self.grid:
                return GridFunction(self.grid, op(self.values, other.values))
            grid = self.grid.merged(other.grid)
            return GridFunction(grid, op(self(grid.nodes), other(grid.nodes)))
        return NotImplemented

    def __add__(self, other) -> "GridFunction":
        return self._binary(other, np.add)

    def __sub__(self, other) -> "GridFunction":
        return self._binary(other, np.subtract)

    def __neg__(self) -> "GridFunction":
        return GridFunction(self.grid, -self.values)

    def __mul__(self, factor: Scalar) -> "GridFunction":
        if isinstance(factor, (int, float, np.floating)):
            return GridFunction(self.grid, self.values * float(factor))
        return NotImplemented

    __rmul__ = __mul__

    def __repr__(self) -> str:
        return f"GridFunction({self.grid!r})"


# =========================
# MEASURABLE SUBSETS
# =========================
@dataclass(frozen=True)
class MeasurableSubset:
    """Finite union of closed intervals in [0, inf); touching endpoints allowed."""

    intervals: Tuple[Tuple[float, float], ...]

    def __post_init__(self):
        cleaned = []
        for lo, hi in self.intervals:
            lo, hi = float(lo), float(hi)
            if math.isnan(lo) or math.isnan(hi) or lo < 0.0:
                raise InputError(f"Interval [{lo}, {hi}] is not inside [0, inf)")
            if not hi > lo:
                raise InputError(f"Interval [{lo}, {hi}] must have positive length")
            cleaned.append((lo, hi))
        cleaned.sort()
        for (lo0, hi0), (lo1, hi1) in zip(cleaned, cleaned[1:]):
            if lo1 < hi0:
                raise InputError(f"Intervals [{lo0}, {hi0}] and [{lo1}, {hi1}] overlap")
        object.__setattr__(self, "intervals", tuple(cleaned))

    @classmethod
    def interval(cls, lo: float, hi: float = math.inf) -> "MeasurableSubset":
        return cls(((lo, hi),))

    @classmethod
    def half_line(cls) -> "MeasurableSubset":
        return cls(((0.0, math.inf),))

    @property
    def total_measure(self) -> float:
        return sum(hi - lo for lo, hi in self.intervals)

    def union(self, other: "MeasurableSubset") -> "MeasurableSubset":
        return MeasurableSubset(self.intervals + other.intervals)


# =========================
# INTEGRALS
# =========================
def _abs_trapezoid(t: np.ndarray, v: np.ndarray) -> float:
    """Exact integral of |linear interpolant| through (t, v)."""
    h = np.diff(t)
    v0, v1 = v[:-1], v[1:]
    a0, a1 = np.abs(v0), np.abs(v1)
    denom = a0 + a1
    # sign change inside the cell: two triangles meeting at the root
    crossing = np.divide(v0 * v0 + v1 * v1, 2.0 * denom, out=np.zeros_like(denom), where=denom > 0)
    per_cell = np.where(v0 * v1 >= 0.0, 0.5 * (a0 + a1), crossing)
    return float(np.sum(h * per_cell))


def _abs_between(x: GridFunction, lo: float, hi: float) -> float:
    hi = min(hi, x.t_max)
    if hi <= lo:
        return 0.0
    nodes = x.grid.nodes
    i0 = np.searchsorted(nodes, lo, side="right")
    i1 = np.searchsorted(nodes, hi, side="left")
    t = np.concatenate(([lo], nodes[i0:i1], [hi]))
    return _abs_trapezoid(t, x(t))


def integrate_abs(x: GridFunction, subset: MeasurableSubset) -> float:
    """
    ||x||_I, the integral of |x| over I.

    Args:
        x: function to integrate
        subset: measurable subset I; parts beyond T_max contribute zero

    Returns:
        The exact integral for the piecewise-linear representation
    """
    return sum(_abs_between(x, lo, hi) for lo, hi in subset.intervals)


def distance(x: GridFunction, y: GridFunction) -> float:
    """L1 distance, evaluated on the merged grid."""
    return integrate_abs(x - y, MeasurableSubset.half_line())


def tail_mass(x: GridFunction, tau: float) -> float:
    if tau < 0:
        raise InputError(f"tau must be nonnegative, got {tau}")
    return _abs_between(x, float(tau), math.inf)


def representation_error(x: GridFunction) -> float:
    """Richardson estimate of the error in ||x|| due to the grid."""
    if x.grid.cells < 2:
        return 0.0
    fine = x.norm()
    coarse = x.resample(x.grid.coarsened()).norm()
    return abs(fine - coarse) / 3.0


def _split_at_sign_changes(x: GridFunction) -> Tuple[np.ndarray, np.ndarray]:
    t = x.grid.nodes
    v = x.values
    v0, v1 = v[:-1], v[1:]
    crosses = v0 * v1 < 0.0
    if not np.any(crosses):
        return t, v
    idx = np.flatnonzero(crosses)
    theta = v0[idx] / (v0[idx] - v1[idx])
    roots = t[idx] + theta * (t[idx + 1] - t[idx])
    t_all = np.concatenate((t, roots))
    v_all = np.concatenate((v, np.zeros_like(roots)))
    order = np.argsort(t_all, kind="stable")
    return t_all[order], v_all[order]


def worst_subset_masses(x: GridFunction, epsilons: Sequence[float]) -> np.ndarray:
    """
    sup { ||x||_Omega : meas(Omega) <= eps } for each eps.

    Uses the dual form min_{lam >= 0} [ int (|x| - lam)_+ + lam * eps ]: the
    minimizing level lam* is where the super-level set {|x| > lam*} has
    measure eps, which is the greedy fill from the highest values down.
    """
    eps = np.asarray(epsilons, dtype=float)
    if np.any(~(eps > 0)):
        raise InputError("epsilon must be positive")
    t, v = _split_at_sign_changes(x)
    a = np.abs(v)
    h = np.diff(t)
    lo = np.minimum(a[:-1], a[1:])[:, None]
    hi = np.maximum(a[:-1], a[1:])[:, None]
    h = h[:, None]
    span = np.where(hi > lo, hi - lo, 1.0)

    def measure_above(lam):
        partial = h * (hi - lam) / span
        return np.sum(np.where(hi <= lam, 0.0, np.where(lo >= lam, h, partial)), axis=0)

    def dual(lam):
        full = h * (0.5 * (lo + hi) - lam)
        partial = h * (hi - lam) ** 2 / (2.0 * span)
        excess = np.where(hi <= lam, 0.0, np.where(lo >= lam, full, partial))
        return np.sum(excess, axis=0) + np.ravel(lam) * eps

    norm = _abs_trapezoid(t, v)
    top = float(np.max(a)) if a.size else 0.0
    if top == 0.0:
        return np.zeros_like(eps)
    left = np.zeros_like(eps)
    right = np.full_like(eps, top)
    for _ in range(200):
        mid = 0.5 * (left + right)
        too_big = measure_above(mid[None, :]) > eps
        left = np.where(too_big, mid, left)
        right = np.where(too_big, right, mid)
        if np.all(right - left <= 4e-16 * top):
            break
    result = np.minimum(dual(left[None, :]), dual(right[None, :]))
    # whole support fits in Omega
    fits = measure_above(np.zeros((1, 1)))[0] <= eps
    result = np.where(fits, norm, np.minimum(result, norm))
    return result


def worst_subset_mass(x: GridFunction, epsilon: float) -> float:
    return float(worst_subset_masses(x, [epsilon])[0])


# =========================
# ENVELOPES
# =========================
class Envelope:
    """
    Integrable function of t given by a vectorized callable.

    Unlike a GridFunction it is not truncated: norms are computed by adaptive
    quadrature on any interval, including [0, inf).
    """

    def __init__(self, fn: Callable[[np.ndarray], np.ndarray], name: str = "envelope", zero: bool = False):
        self._fn = fn
        self.name = name
        self.is_zero = zero

    @classmethod
    def zero(cls) -> "Envelope":
        return cls(lambda t: np.zeros_like(np.asarray(t, dtype=float)), name="zero", zero=True)

    def __call__(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        return np.broadcast_to(np.asarray(self._fn(t), dtype=float), t.shape)

    def sample(self, grid: Grid) -> GridFunction:
        return GridFunction(grid, self(grid.nodes))

    def norm(self, lower: float = 0.0, upper: float = math.inf) -> float:
        if self.is_zero or upper <= lower:
            return 0.0
        value, _ = integrate.quad(
            lambda t: abs(float(self(t))),
            lower,
            upper,
            limit=400,
            epsabs=1e-13,
            epsrel=settings.QUAD_RTOL,
        )
        return float(value)

    def norm_on(self, subset: MeasurableSubset) -> float:
        return sum(self.norm(lo, hi) for lo, hi in subset.intervals)

    def tail(self, tau: float) -> float:
        return self.norm(tau, math.inf)

    def __repr__(self) -> str:
        return f"Envelope({self.name})"
