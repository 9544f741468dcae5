"""
Seeded random inputs for the sampling checks and the ensemble generators.

Scalars are drawn log-uniformly so that both small- and large-argument
regimes are exercised. Random functions are sign-flipped exponential bumps
with random decay.
"""

import logging
import math
from typing import List

import numpy as np

from app.errors import InputError
from app.l1core import Grid, GridFunction

logger = logging.getLogger(__name__)

T_FLOOR = 1e-3
X_RANGE = (1e-3, 1e3)
DELTA_RANGE = (1e-6, 1e-2)


def log_uniform(rng: np.random.Generator, lo: float, hi: float, size: int) -> np.ndarray:
    return np.exp(rng.uniform(math.log(lo), math.log(hi), size))


def signed_log_uniform(rng: np.random.Generator, lo: float, hi: float, size: int) -> np.ndarray:
    return rng.choice([-1.0, 1.0], size) * log_uniform(rng, lo, hi, size)


def random_function(rng: np.random.Generator, grid: Grid, max_bumps: int = 3) -> GridFunction:
    """Sum of 1..max_bumps terms sign * A * exp(-decay * |t - center|)."""
    t = grid.nodes
    values = np.zeros_like(t)
    for _ in range(int(rng.integers(1, max_bumps + 1))):
        sign = rng.choice([-1.0, 1.0])
        amplitude = float(log_uniform(rng, 0.1, 10.0, 1)[0])
        decay = float(log_uniform(rng, 0.2, 5.0, 1)[0])
        center = float(rng.uniform(0.0, 0.5 * grid.t_max))
        values += sign * amplitude * np.exp(-decay * np.abs(t - center))
    return GridFunction(grid, values)


def random_in_ball(rng: np.random.Generator, grid: Grid, r: float, on_boundary: bool = False) -> GridFunction:
    """Random function with norm r (on_boundary) or uniform in [0, r]."""
    x = random_function(rng, grid)
    target = r if on_boundary else r * float(rng.uniform())
    norm = x.norm()
    if norm == 0.0:
        return GridFunction.zeros(grid)
    return x * (target / norm)


# =========================
# ENSEMBLE GENERATORS
# =========================
def concentrating(grid: Grid, size: int, scale: float = 1.0) -> List[GridFunction]:
    """Members scale * n * 1_[0, 1/n], n = 1..size (unit mass squeezed toward 0)."""
    if size < 1:
        raise InputError("Ensemble size must be positive")
    return [GridFunction.box(grid, 0.0, 1.0 / n, scale * n) for n in range(1, size + 1)]


def escaping(grid: Grid, size: int, scale: float = 1.0, width: float = 1.0) -> List[GridFunction]:
    """
    Unit-mass boxes marching toward T_max.

    Starts are 1, 2, ..., size when they fit below T_max, otherwise evenly
    spread over [1, T_max - width).
    """
    if size < 1:
        raise InputError("Ensemble size must be positive")
    if size + width <= grid.t_max:
        starts = np.arange(1, size + 1, dtype=float)
    else:
        starts = np.linspace(1.0, grid.t_max - width * (1.0 + 1e-6), size)
    return [GridFunction.box(grid, float(s), float(s) + width, scale / width) for s in starts]


def random_ball(rng: np.random.Generator, grid: Grid, size: int, r: float) -> List[GridFunction]:
    if size < 1:
        raise InputError("Ensemble size must be positive")
    return [random_in_ball(rng, grid, r) for _ in range(size)]


def oscillating(grid: Grid, count: int, norm: float) -> List[GridFunction]:
    """x_n(t) = (1 + sin(n t)) e^{-t}, each scaled to the given norm."""
    members = []
    for n in range(1, count + 1):
        x = GridFunction.sample(grid, lambda t, n=n: (1.0 + np.sin(n * t)) * np.exp(-t))
        members.append(x * (norm / x.norm()))
    return members
