"""
Closed registry of parameterized primitives.

A ProblemDefinition names primitives by kind with numeric parameters; this
module turns it into a ProblemSpec. There is no expression language, so
every definition is safe to evaluate.
"""

import logging
import math
from typing import Callable, Dict, Optional, Tuple

import numpy as np

from app.errors import DefinitionError, UnknownPrimitiveError
from app.l1core import Envelope, Grid, GridFunction
from app.models import FieldDef, Primitive, ProblemDefinition
from app.operators import (
    InnerOperator,
    Kernel2,
    KernelField3,
    ProblemSpec,
    ScalarField2,
    kernel_norm_estimate,
)

logger = logging.getLogger(__name__)

# kind -> (parameter defaults (None = required), builder)
Table = Dict[str, Tuple[Dict[str, Optional[float]], Callable]]


def _resolve(table: Table, section: str, primitive: Primitive):
    try:
        defaults, builder = table[primitive.kind]
    except KeyError:
        known = ", ".join(sorted(table))
        raise UnknownPrimitiveError(f"{section}: unknown primitive '{primitive.kind}' (known: {known})")
    unknown = set(primitive.params) - set(defaults)
    if unknown:
        raise DefinitionError(f"{section}: unknown parameter(s) {sorted(unknown)} for '{primitive.kind}'")
    params = {**defaults, **primitive.params}
    missing = [name for name, value in params.items() if value is None]
    if missing:
        raise DefinitionError(f"{section}: missing parameter(s) {missing} for '{primitive.kind}'")
    bad = [name for name, value in params.items() if not math.isfinite(value)]
    if bad:
        raise DefinitionError(f"{section}: non-finite parameter(s) {bad}")
    return builder(**params)


# =========================
# FUNCTIONS OF t
# =========================
def _rational(scale, shift, power, constant, degree) -> Envelope:
    def fn(t):
        z = t + shift
        return scale * z**power / (constant + z**degree)

    return Envelope(fn, name="rational")


def _exponential(scale, rate) -> Envelope:
    return Envelope(lambda t: scale * np.exp(-rate * t), name="exponential")


FUNCTIONS: Table = {
    "zero": ({}, Envelope.zero),
    "rational": (
        {"scale": 1.0, "shift": 0.0, "power": 1.0, "constant": 1.0, "degree": 3.0},
        _rational,
    ),
    "exponential": ({"scale": 1.0, "rate": 1.0}, _exponential),
}

# =========================
# NONLINEARITIES OF x
# =========================
NONLINEARITIES: Table = {
    "zero": ({}, lambda: (lambda x: np.zeros_like(x))),
    "linear": ({"scale": 1.0}, lambda scale: (lambda x: scale * x)),
    "square": ({"scale": 1.0}, lambda scale: (lambda x: scale * x * x)),
    "log1p_square": ({"scale": 1.0}, lambda scale: (lambda x: scale * np.log1p(x * x))),
    "arctan_square": ({"scale": 1.0}, lambda scale: (lambda x: scale * np.arctan(x * x))),
}

# =========================
# KERNELS k(t, s)
# =========================
def _polynomial_exp(t_coef, s_coef, constant, rate):
    return lambda t, s: (t_coef * t + s_coef * s + constant) * np.exp(-rate * t)


def _rational_kernel(scale, s_power, t_power):
    return lambda t, s: scale * (1.0 + s) ** s_power / (1.0 + t) ** t_power


KERNELS: Table = {
    "zero": ({}, lambda: (lambda t, s: np.zeros(np.broadcast(t, s).shape))),
    "polynomial_exp": (
        {"t_coef": 1.0, "s_coef": 1.0, "constant": 0.0, "rate": 1.0},
        _polynomial_exp,
    ),
    "rational": ({"scale": 1.0, "s_power": 0.0, "t_power": 2.0}, _rational_kernel),
}

# =========================
# u(t, s, x)
# =========================
def _saturating_mixed(constant, oscillation, denominator):
    """z/(c + z^3) + ts(ts + sigma sin x) x / (d (s+1)(t^2 s^2 + 1)) with z = 1 + t + s."""

    def u(t, s, x):
        z = 1.0 + t + s
        ts = t * s
        return z / (constant + z**3) + ts * (ts + oscillation * np.sin(x)) * x / (
            denominator * (s + 1.0) * (ts * ts + 1.0)
        )

    return u


U_FIELDS: Table = {
    "zero": ({}, lambda: (lambda t, s, x: np.zeros(np.broadcast(t, s, x).shape))),
    "identity": ({}, lambda: (lambda t, s, x: np.broadcast_to(x, np.broadcast(t, s, x).shape))),
    "affine": (
        {"intercept": 0.0, "slope": 1.0},
        lambda intercept, slope: (lambda t, s, x: intercept + slope * np.broadcast_to(x, np.broadcast(t, s, x).shape)),
    ),
    "saturating_mixed": (
        {"constant": 2.0, "oscillation": math.sqrt(3.0), "denominator": 4.0},
        _saturating_mixed,
    ),
}

# =========================
# INNER OPERATORS
# =========================
def _saturated_cubic_memory(dilation, memory_scale, memory_rate):
    """(Tx)(t) = y^3/(1+y^2) + scale e^{-t} int_0^inf e^{-rate tau} x/(1+x^2) dtau, y = x(dilation t)."""

    def apply(x: GridFunction) -> GridFunction:
        t = x.grid.nodes
        s, w, _ = x.grid.gauss_points()
        xs = x(s)
        memory = float(np.sum(w * np.exp(-memory_rate * s) * xs / (1.0 + xs * xs)))
        y = x(dilation * t)
        return GridFunction(x.grid, y**3 / (1.0 + y * y) + memory_scale * np.exp(-t) * memory)

    return apply


def _damped_square_memory(rate):
    """(Qx)(t) = x(t)^2/(1+|x(t)|) int_0^t e^{-rate (t+tau)} x/(1+x^2) dtau."""

    def apply(x: GridFunction) -> GridFunction:
        t = x.grid.nodes
        s, w, _ = x.grid.gauss_points()
        xs = x(s)
        per_cell = (w * np.exp(-rate * s) * xs / (1.0 + xs * xs)).reshape(-1, 2).sum(axis=1)
        running = np.concatenate(([0.0], np.cumsum(per_cell)))
        v = x.values
        return GridFunction(x.grid, v * v / (1.0 + np.abs(v)) * np.exp(-rate * t) * running)

    return apply


def _scaled_deviation(factor, dilation):
    return lambda x: GridFunction(x.grid, factor * x(dilation * x.grid.nodes))


INNER_OPERATORS: Table = {
    "zero": ({}, lambda: (lambda x: GridFunction.zeros(x.grid))),
    "identity": ({}, lambda: (lambda x: x)),
    "scaled_deviation": ({"factor": 1.0, "dilation": 1.0}, _scaled_deviation),
    "saturated_cubic_memory": (
        {"dilation": 2.0, "memory_scale": 1.0, "memory_rate": 1.0},
        _saturated_cubic_memory,
    ),
    "damped_square_memory": ({"rate": 1.0}, _damped_square_memory),
}

DEVIATIONS: Table = {
    "dilation": ({"factor": 1.0}, lambda factor: (lambda t: factor * np.asarray(t, dtype=float))),
}

MODULI: Table = {
    "linear": ({"scale": 1.0}, lambda scale: (lambda d: scale * np.abs(d))),
    "power": ({"scale": 1.0, "exponent": 1.0}, lambda scale, exponent: (lambda d: scale * np.abs(d) ** exponent)),
}


# =========================
# ASSEMBLY
# =========================
def build_field(section: str, definition: FieldDef, offset: Envelope, slope: float) -> ScalarField2:
    base = _resolve(FUNCTIONS, f"{section}.offset", definition.offset)
    nonlinearity = _resolve(NONLINEARITIES, f"{section}.nonlinearity", definition.nonlinearity)
    return ScalarField2(
        eval=lambda t, x: base(t) + nonlinearity(x),
        envelope_offset=offset,
        envelope_slope=slope,
        name=section,
    )


def build_grid(definition: ProblemDefinition) -> Grid:
    numerics = definition.numerics
    if numerics.grid == "uniform":
        return Grid.uniform(numerics.t_max, numerics.cells)
    return Grid.geometric(numerics.t_max, numerics.cells, numerics.grid_scale)


def build_problem(definition: ProblemDefinition, estimate_norm: bool = True) -> ProblemSpec:
    """
    Turn a validated definition into a ProblemSpec.

    Args:
        definition: validated problem definition
        estimate_norm: estimate ||K|| numerically when no exact value is declared

    Returns:
        ProblemSpec on the definition's grid
    """
    c = definition.constants
    parts = definition.components

    def fn(name: str) -> Envelope:
        return _resolve(FUNCTIONS, f"constants.{name}", getattr(c, name))

    g = build_field("g", parts.g, fn("a"), c.b)
    f = build_field("f", parts.f, fn("a1"), c.b1)
    k = Kernel2(eval=_resolve(KERNELS, "k", parts.k), name=f"k[{parts.k.kind}]")
    u = KernelField3(
        eval=_resolve(U_FIELDS, "u", parts.u),
        envelope_offset=fn("alpha"),
        envelope_slope=c.beta,
        modulus_weight=fn("gamma_mod"),
        modulus_slope=c.lambda_,
        modulus=_resolve(MODULI, "constants.h", c.h),
        name=f"u[{parts.u.kind}]",
    )
    T_op = InnerOperator(
        apply=_resolve(INNER_OPERATORS, "T", parts.T),
        envelope_offset=fn("gamma1"),
        envelope_factor=c.rho1,
        deviation=_resolve(DEVIATIONS, "constants.phi", c.phi),
        deviation_slope_min=c.m,
        name=f"T[{parts.T.kind}]",
    )
    Q_op = InnerOperator(
        apply=_resolve(INNER_OPERATORS, "Q", parts.Q),
        envelope_offset=fn("gamma2"),
        envelope_factor=c.rho2,
        deviation=_resolve(DEVIATIONS, "constants.psi", c.psi),
        deviation_slope_min=c.M,
        name=f"Q[{parts.Q.kind}]",
    )

    spec = ProblemSpec(
        g=g, f=f, k=k, u=u, T_op=T_op, Q_op=Q_op,
        kernel_norm=c.kernel_norm,
        kernel_norm_source="declared",
        contraction=c.kappa,
        name=definition.name,
        grid=build_grid(definition),
    )
    if c.kernel_norm is None and estimate_norm:
        estimate = kernel_norm_estimate(k, t_max=definition.numerics.t_max)
        spec = spec.with_kernel_norm(estimate.value, "estimated", estimate.slack)
    logger.info(f"[REGISTRY] Built problem '{definition.name}' ({spec.kernel_norm_source} ||K||={spec.kernel_norm})")
    return spec
