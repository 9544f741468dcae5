"""
Fixed-point iteration for x = Ax + Bx.

Existence is all the theory gives, so no scheme here is guaranteed to
converge. A run succeeds when the residual ||x - Ax - Bx|| drops below
tol (1 + ||x||); anything else is reported as a status.
"""

import logging
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Tuple

import numpy as np

from app.errors import EvaluationError, InputError
from app.l1core import GridFunction, distance
from app.models import SolveConfig
from app.operators import ProblemSpec, apply_A, apply_B, fixed_point_map, residual

logger = logging.getLogger(__name__)

CONVERGED = "converged"
MAX_ITERS = "max_iters"
DIVERGED = "diverged"

DIVERGENCE_FACTOR = 1e6


@dataclass
class SolveReport:
    final_iterate: GridFunction
    residual_history: List[float]
    status: str
    scheme: str
    initial_residual: float
    refinement_check: Optional[float] = None
    norm_history: List[float] = field(default_factory=list)
    damping_history: List[float] = field(default_factory=list)
    inner_iterations: List[int] = field(default_factory=list)
    message: str = ""

    @property
    def iterations(self) -> int:
        return len(self.residual_history)

    @property
    def residual(self) -> float:
        return self.residual_history[-1] if self.residual_history else self.initial_residual

    @property
    def norm(self) -> float:
        return self.final_iterate.norm()

    def table(self) -> np.ndarray:
        """(t, x*(t)) rows on the iterate's grid."""
        return np.column_stack((self.final_iterate.grid.nodes, self.final_iterate.values))

    def to_dict(self) -> Dict[str, Any]:
        return {
            "status": self.status,
            "scheme": self.scheme,
            "iterations": self.iterations,
            "initial_residual": self.initial_residual,
            "residual": self.residual,
            "residual_history": list(self.residual_history),
            "norm": self.norm,
            "norm_history": list(self.norm_history),
            "damping_history": list(self.damping_history),
            "inner_iterations": list(self.inner_iterations),
            "refinement_check": self.refinement_check,
            "cells": self.final_iterate.grid.cells,
            "message": self.message,
        }


def project_ball(x: GridFunction, r: float) -> GridFunction:
    """x if ||x|| <= r, else x scaled onto the sphere of radius r."""
    if not r > 0:
        raise InputError(f"Ball radius must be positive, got {r}")
    norm = x.norm()
    if norm <= r:
        return x
    return x * (r / norm)


def refinement_residual(spec: ProblemSpec, x: GridFunction) -> float:
    """Residual of the interpolated iterate on a 2x finer grid."""
    return residual(spec, x.resample(x.grid.refined()))


# =========================
# DRIVER
# =========================
# (x_k, A x_k + B x_k, damping) -> (candidate, inner iteration count or None, failure message or None)
Step = Callable[[GridFunction, GridFunction, float], Tuple[GridFunction, Optional[int], Optional[str]]]


def _divergence_bound(config: SolveConfig, radius: Optional[float]) -> float:
    return DIVERGENCE_FACTOR * (1.0 + (radius or config.project_to_ball or 0.0))


def _blend(x: GridFunction, target: GridFunction, damping: float) -> GridFunction:
    if damping == 1.0:
        return target
    return x * (1.0 - damping) + target * damping


def _iterate(
    spec: ProblemSpec,
    x0: Optional[GridFunction],
    config: SolveConfig,
    step: Step,
    radius: Optional[float],
) -> SolveReport:
    x = x0 if x0 is not None else GridFunction.zeros(spec.default_grid())
    if config.project_to_ball is not None:
        x = project_ball(x, config.project_to_ball)
    bound = _divergence_bound(config, radius)

    mapped = fixed_point_map(spec, x)
    res = distance(x, mapped)
    report = SolveReport(
        final_iterate=x,
        residual_history=[],
        status=MAX_ITERS,
        scheme=config.scheme,
        initial_residual=res,
    )
    logger.info(f"[SOLVER] {config.scheme} on '{spec.name}' ({x.grid.cells} cells), initial residual {res:.3e}")
    damping = config.damping
    halvings = 0

    if res <= config.tol * (1.0 + x.norm()):
        report.status = CONVERGED
    else:
        for k in range(config.max_iters):
            while True:
                candidate, inner, failure = step(x, mapped, damping)
                if failure is not None:
                    report.status = DIVERGED
                    report.message = failure
                    logger.warning(f"[SOLVER] iteration {k + 1}: {failure}")
                    break
                if config.project_to_ball is not None:
                    candidate = project_ball(candidate, config.project_to_ball)
                candidate_mapped = fixed_point_map(spec, candidate)
                candidate_res = distance(candidate, candidate_mapped)
                if candidate_res > res and halvings < config.max_halvings:
                    halvings += 1
                    damping *= 0.5
                    logger.debug(f"[SOLVER] residual rose to {candidate_res:.3e}, damping -> {damping:g}")
                    continue
                break
            if report.status == DIVERGED:
                break

            x, mapped, res = candidate, candidate_mapped, candidate_res
            norm = x.norm()
            report.residual_history.append(res)
            report.norm_history.append(norm)
            report.damping_history.append(damping)
            if inner is not None:
                report.inner_iterations.append(inner)
            logger.debug(f"[SOLVER] iteration {k + 1}: residual {res:.3e}, ||x|| {norm:.6g}")

            if not norm <= bound:
                report.status = DIVERGED
                report.message = f"||x|| = {norm:.3e} exceeds {bound:.3e}"
                break
            if res <= config.tol * (1.0 + norm):
                report.status = CONVERGED
                break

    report.final_iterate = x
    if report.status == CONVERGED and config.refinement_check:
        report.refinement_check = refinement_residual(spec, x)

    if report.status == CONVERGED:
        logger.info(
            f"[SOLVER] ✅ converged in {report.iterations} iteration(s), residual {report.residual:.3e}, "
            f"refined residual {report.refinement_check}"
        )
    else:
        logger.warning(f"[SOLVER] {report.status} after {report.iterations} iteration(s), residual {report.residual:.3e}")
    return report


# =========================
# SCHEMES
# =========================
def solve_picard(
    spec: ProblemSpec,
    x0: Optional[GridFunction] = None,
    config: Optional[SolveConfig] = None,
    radius: Optional[float] = None,
) -> SolveReport:
    """
    x_{k+1} = (1 - damping) x_k + damping (A x_k + B x_k).

    Args:
        spec: problem
        x0: initial iterate (default 0 on the problem grid)
        config: solve configuration (default SolveConfig())
        radius: invariant-ball radius used by the divergence test

    Returns:
        SolveReport; non-convergence is a status, never an exception
    """
    config = config or SolveConfig()

    def step(x, mapped, damping):
        return _blend(x, mapped, damping), None, None

    return _iterate(spec, x0, config.model_copy(update={"scheme": "picard"}), step, radius)


def solve_split(
    spec: ProblemSpec,
    x0: Optional[GridFunction] = None,
    config: Optional[SolveConfig] = None,
    radius: Optional[float] = None,
) -> SolveReport:
    """
    Outer loop over y = A x_k; inner loop solves z = Bz + y by iterating B.

    The inner loop stops when ||z - Bz - y|| <= inner_tol (1 + ||z||); if it
    does not within inner_max_iters, or an inner iterate leaves the divergence
    bound or cannot be evaluated, the run ends with status diverged.
    """
    config = config or SolveConfig()
    bound = _divergence_bound(config, radius)

    def step(x, mapped, damping):
        y = apply_A(spec, x)
        z = x
        for j in range(1, config.inner_max_iters + 1):
            try:
                z_next = apply_B(spec, z) + y
            except EvaluationError as exc:
                return x, j, f"inner loop z = Bz + y failed at iteration {j}: {exc}"
            size = z_next.norm()
            if not size <= bound:
                return x, j, f"inner loop z = Bz + y: ||z|| = {size:.3e} exceeds {bound:.3e}"
            gap = distance(z, z_next)
            if gap <= config.inner_tol * (1.0 + z.norm()):
                return _blend(x, z, damping), j, None
            z = z_next
        return x, config.inner_max_iters, (
            f"inner loop z = Bz + y did not settle in {config.inner_max_iters} iterations (gap {gap:.3e})"
        )

    return _iterate(spec, x0, config.model_copy(update={"scheme": "split"}), step, radius)


def solve(
    spec: ProblemSpec,
    x0: Optional[GridFunction] = None,
    config: Optional[SolveConfig] = None,
    radius: Optional[float] = None,
) -> SolveReport:
    config = config or SolveConfig()
    if config.scheme == "split":
        return solve_split(spec, x0, config, radius)
    return solve_picard(spec, x0, config, radius)
