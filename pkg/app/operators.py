"""
Operator algebra of x = Ax + Bx.

B = N_g T and A = N_f U Q, where N_f, N_g are superposition operators,
T and Q are inner operators with deviating arguments and U is the nonlinear
Volterra operator (Ux)(t) = int_0^t k(t, s) u(t, s, x(s)) ds.
"""

import dataclasses
import logging
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy import integrate, optimize

from app.config import settings
from app.errors import EvaluationError, SpecificationError, TruncationError
from app.l1core import Envelope, Grid, GridFunction, distance

logger = logging.getLogger(__name__)

Field2 = Callable[[np.ndarray, np.ndarray], np.ndarray]
Field3 = Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]


# =========================
# TYPES
# =========================
@dataclass(frozen=True)
class ScalarField2:
    """(t, x) -> value with claimed bound |eval(t, x)| <= offset(t) + slope |x|."""

    eval: Field2
    envelope_offset: Envelope
    envelope_slope: float
    name: str = "field"


@dataclass(frozen=True)
class KernelField3:
    """
    u(t, s, x) with its growth bound alpha(s) + beta |x| and its modulus in t:
    |u(t,s,x) - u(t+d,s,x)| <= h(d) [gamma_mod(s) + lambda |x|].
    """

    eval: Field3
    envelope_offset: Envelope
    envelope_slope: float
    modulus_weight: Envelope
    modulus_slope: float
    modulus: Callable[[np.ndarray], np.ndarray]
    name: str = "u"


@dataclass(frozen=True)
class Kernel2:
    eval: Field2
    name: str = "k"


@dataclass(frozen=True)
class InnerOperator:
    """
    x -> T x with claimed bound |(Tx)(t)| <= offset(t) + factor |x(deviation(t))|
    and deviation'(t) >= deviation_slope_min.
    """

    apply: Callable[[GridFunction], GridFunction]
    envelope_offset: Envelope
    envelope_factor: float
    deviation: Callable[[np.ndarray], np.ndarray]
    deviation_slope_min: float
    name: str = "inner"

    def __call__(self, x: GridFunction) -> GridFunction:
        return self.apply(x)


@dataclass(frozen=True)
class ProblemSpec:
    g: ScalarField2
    f: ScalarField2
    k: Kernel2
    u: KernelField3
    T_op: InnerOperator
    Q_op: InnerOperator
    kernel_norm: Optional[float]
    kernel_norm_source: str = "declared"
    kernel_norm_slack: float = 0.0
    contraction: Optional[float] = None
    name: str = "problem"
    grid: Optional[Grid] = None

    def __post_init__(self):
        if self.kernel_norm is not None and not self.kernel_norm >= 0.0:
            raise SpecificationError(f"kernel_norm must be nonnegative, got {self.kernel_norm}")

    def with_kernel_norm(self, value: float, source: str, slack: float = 0.0) -> "ProblemSpec":
        return dataclasses.replace(self, kernel_norm=value, kernel_norm_source=source, kernel_norm_slack=slack)

    def default_grid(self) -> Grid:
        return self.grid if self.grid is not None else Grid.default()


# =========================
# SUPERPOSITION
# =========================
def superpose(field: ScalarField2, x: GridFunction) -> GridFunction:
    """(N_f x)(t) = f(t, x(t)) on x's grid."""
    t = x.grid.nodes
    with np.errstate(all="ignore"):
        values = np.asarray(field.eval(t, x.values), dtype=float)
    bad = ~np.isfinite(values)
    if np.any(bad):
        i = int(np.flatnonzero(bad)[0])
        raise EvaluationError(f"{field.name} returned a non-finite value", t=float(t[i]), x=float(x.values[i]))
    return GridFunction(x.grid, values)


# =========================
# VOLTERRA QUADRATURE
# =========================
def _volterra(x: GridFunction, integrand: Field3, what: str) -> GridFunction:
    """
    t_i -> int_0^{t_i} integrand(t_i, s, x(s)) ds.

    Two Gauss points per cell; the upper limit always falls on a node, so
    cell j contributes to node i iff j < i.
    """
    grid = x.grid
    t = grid.nodes
    s, w, cell = grid.gauss_points()
    xs = x(s)
    out = np.zeros_like(t)
    rows = max(1, settings.BLOCK_SIZE // max(1, s.size))
    for start in range(1, t.size, rows):
        stop = min(t.size, start + rows)
        idx = np.arange(start, stop)
        cols = 2 * (stop - 1)
        tt = t[idx][:, None]
        with np.errstate(all="ignore"):
            vals = np.asarray(integrand(tt, s[None, :cols], xs[None, :cols]), dtype=float)
        vals = np.broadcast_to(vals, (idx.size, cols))
        mask = cell[None, :cols] < idx[:, None]
        bad = mask & ~np.isfinite(vals)
        if np.any(bad):
            i, j = np.argwhere(bad)[0]
            raise EvaluationError(
                f"Non-finite {what} integrand at s={s[j]!r}", t=float(tt[i, 0]), x=float(xs[j])
            )
        out[idx] = np.where(mask, vals, 0.0) @ w[:cols]
    return GridFunction(grid, out)


def apply_kernel_linear(k: Kernel2, x: GridFunction) -> GridFunction:
    """(Kx)(t) = int_0^t |k(t, s)| x(s) ds."""
    return _volterra(x, lambda t, s, xs: np.abs(k.eval(t, s)) * xs, "linear kernel")


def apply_kernel_nonlinear(k: Kernel2, u: KernelField3, x: GridFunction) -> GridFunction:
    """(Ux)(t) = int_0^t k(t, s) u(t, s, x(s)) ds with the signed kernel."""
    return _volterra(x, lambda t, s, xs: k.eval(t, s) * u.eval(t, s, xs), "Volterra")


# =========================
# COMPOSITIONS
# =========================
def apply_A(spec: ProblemSpec, x: GridFunction) -> GridFunction:
    """A = N_f U Q: Q first, then U, then superposition by f."""
    return superpose(spec.f, apply_kernel_nonlinear(spec.k, spec.u, spec.Q_op(x)))


def apply_B(spec: ProblemSpec, x: GridFunction) -> GridFunction:
    """B = N_g T."""
    return superpose(spec.g, spec.T_op(x))


def fixed_point_map(spec: ProblemSpec, x: GridFunction) -> GridFunction:
    return apply_A(spec, x) + apply_B(spec, x)


def residual(spec: ProblemSpec, x: GridFunction) -> float:
    """||x - Ax - Bx||."""
    return distance(x, fixed_point_map(spec, x))


# =========================
# KERNEL NORM
# =========================
@dataclass(frozen=True)
class KernelNormEstimate:
    value: float
    slack: float
    argmax: float
    cells: int
    refinements: int


def _column_integrals(k: Kernel2, grid: Grid, s_count: int, lower: Optional[float] = None) -> np.ndarray:
    """int_{max(s_j, lower)}^{T_max} |k(t, s_j)| dt for the first s_count nodes."""
    tg, w, cell = grid.gauss_points()
    s = grid.nodes[:s_count]
    keep = np.ones_like(tg, dtype=bool) if lower is None else tg >= lower
    out = np.zeros(s_count)
    rows = max(1, settings.BLOCK_SIZE // max(1, tg.size))
    for start in range(0, s_count, rows):
        stop = min(s_count, start + rows)
        idx = np.arange(start, stop)
        with np.errstate(all="ignore"):
            vals = np.abs(np.asarray(k.eval(tg[None, :], s[idx][:, None]), dtype=float))
        vals = np.broadcast_to(vals, (idx.size, tg.size))
        mask = (cell[None, :] >= idx[:, None]) & keep[None, :]
        bad = mask & ~np.isfinite(vals)
        if np.any(bad):
            i, j = np.argwhere(bad)[0]
            raise EvaluationError(f"{k.name} returned a non-finite value at s={s[idx[i]]!r}", t=float(tg[j]))
        out[idx] = np.where(mask, vals, 0.0) @ w
    return out


def kernel_norm_estimate(
    k: Kernel2,
    t_max: Optional[float] = None,
    cells: Optional[int] = None,
    rtol: float = 1e-6,
    tail_tol: float = 1e-6,
    max_refinements: int = 3,
) -> KernelNormEstimate:
    """
    sup_s int_s^{T_max} |k(t, s)| dt, the L1 -> L1 norm of K.

    The supremum is scanned over every grid node, polished by a bounded
    scalar maximization around the best node, and the grid is doubled until
    the polished value changes by less than rtol. The tail check covers
    columns with s <= T_max / 2; later columns are cut short by T_max.

    Raises:
        TruncationError: the mass of |k(., s)| on [0.9 T_max, T_max] is not
            negligible (> tail_tol relative), so the cut at T_max is unsafe
    """
    t_max = settings.T_MAX if t_max is None else t_max
    cells = settings.NORM_CELLS if cells is None else cells

    def column(s_val: float) -> float:
        value, _ = integrate.quad(
            lambda t: abs(float(k.eval(np.asarray(t), np.asarray(s_val)))),
            s_val,
            t_max,
            limit=200,
            epsabs=1e-14,
            epsrel=settings.QUAD_RTOL,
        )
        return value

    previous = None
    estimate = None
    for refinement in range(max_refinements + 1):
        grid = Grid.geometric(t_max, cells)
        s_count = grid.nodes.size
        columns = _column_integrals(k, grid, s_count)
        best = int(np.argmax(columns))
        scan = float(columns[best])
        if scan == 0.0:
            logger.info("[KERNEL NORM] kernel vanishes on the truncated triangle")
            return KernelNormEstimate(0.0, 0.0, 0.0, cells, refinement)

        tail_count = int(np.searchsorted(grid.nodes, 0.5 * t_max, side="right"))
        tails = _column_integrals(k, grid, tail_count, lower=0.9 * t_max)
        worst_tail = float(np.max(tails))
        if worst_tail > tail_tol * scan:
            raise TruncationError(
                f"{k.name}: tail mass {worst_tail:.3e} on [{0.9 * t_max:g}, {t_max:g}] "
                f"exceeds {tail_tol:g} x norm {scan:.6g}"
            )

        lo = float(grid.nodes[max(best - 1, 0)])
        hi = float(grid.nodes[min(best + 1, s_count - 1)])
        polished, argmax = scan, float(grid.nodes[best])
        if hi > lo:
            res = optimize.minimize_scalar(
                lambda s_val: -column(s_val), bounds=(lo, hi), method="bounded", options={"xatol": 1e-10}
            )
            if -res.fun > polished:
                polished, argmax = float(-res.fun), float(res.x)

        estimate = KernelNormEstimate(polished, worst_tail, argmax, cells, refinement)
        logger.debug(f"[KERNEL NORM] cells={cells} scan={scan:.10g} polished={polished:.10g} s*={argmax:.6g}")
        if previous is not None:
            change = abs(polished - previous)
            estimate = dataclasses.replace(estimate, slack=change + worst_tail)
            if change <= rtol * polished:
                break
        previous = polished
        cells *= 2
    else:
        logger.warning(f"[KERNEL NORM] refinement did not settle below rtol={rtol}")

    logger.info(f"[KERNEL NORM] ||K|| ~ {estimate.value:.10g} (slack {estimate.slack:.2e})")
    return estimate


def estimate_kernel_norm(k: Kernel2, **kwargs) -> float:
    return kernel_norm_estimate(k, **kwargs).value
