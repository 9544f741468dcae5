"""
Discretized measure of weak noncompactness mu = c + d on finite ensembles.

c(X) = lim_{eps -> 0} sup_{x in X} sup { ||x||_Omega : meas(Omega) <= eps }
d(X) = lim_{tau -> inf} sup_{x in X} int_tau^inf |x|

Limits are replaced by finite schedules. For a finite ensemble of
integrable functions both limits are 0, so the estimates are read at
fixed resolution, together with flags saying whether they had settled.
"""

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from app import sampling
from app.certify import FALSIFIED, INCONCLUSIVE, SKIPPED, contraction_constant, judge
from app.config import settings
from app.errors import InputError
from app.l1core import Envelope, Grid, GridFunction, distance, tail_mass, worst_subset_masses
from app.operators import ProblemSpec, apply_A, apply_B

logger = logging.getLogger(__name__)

DEFAULT_EPSILONS = (1.0, 1e-1, 1e-2, 1e-3, 1e-4, 1e-5)
DEFAULT_TAUS = (5.0, 10.0, 20.0, 40.0)
STABLE_RTOL = 1e-6


# =========================
# TYPES
# =========================
@dataclass
class Ensemble:
    members: List[GridFunction]
    label: str = "ensemble"

    def __post_init__(self):
        if not self.members:
            raise InputError("Ensemble must have at least one member")
        t_max = self.members[0].t_max
        for x in self.members[1:]:
            if abs(x.t_max - t_max) > 1e-12 * max(1.0, t_max):
                raise InputError(f"Ensemble members disagree on T_max ({x.t_max} vs {t_max})")

    @property
    def t_max(self) -> float:
        return self.members[0].t_max

    def __len__(self) -> int:
        return len(self.members)


def _epsilon_schedule(values: Sequence[float]) -> Tuple[float, ...]:
    eps = np.asarray(values, dtype=float)
    if eps.size < 3 or np.any(~(eps > 0)) or np.any(np.diff(eps) >= 0):
        raise InputError("epsilon schedule must be >= 3 strictly decreasing positive values")
    return tuple(float(e) for e in eps)


def _tau_schedule(values: Sequence[float]) -> Tuple[float, ...]:
    taus = np.asarray(values, dtype=float)
    if taus.size < 1 or np.any(~(taus > 0)) or np.any(np.diff(taus) <= 0):
        raise InputError("tau schedule must be strictly increasing positive values")
    return tuple(float(t) for t in taus)


@dataclass(frozen=True)
class Schedules:
    epsilons: Tuple[float, ...] = DEFAULT_EPSILONS
    taus: Tuple[float, ...] = DEFAULT_TAUS

    def __post_init__(self):
        object.__setattr__(self, "epsilons", _epsilon_schedule(self.epsilons))
        object.__setattr__(self, "taus", _tau_schedule(self.taus))

    @classmethod
    def for_horizon(cls, t_max: float) -> "Schedules":
        """
        Default schedules with tau kept strictly below t_max.

        Tails at tau = T_max are zero by truncation, so that tau would only
        hide the escaping mass.
        """
        taus = tuple(t for t in DEFAULT_TAUS if t < t_max) or (0.5 * t_max,)
        return cls(DEFAULT_EPSILONS, taus)


@dataclass(frozen=True)
class LimitEstimate:
    schedule: Tuple[float, ...]
    values: Tuple[float, ...]
    stabilized: bool

    @property
    def value(self) -> float:
        return self.values[-1]


@dataclass(frozen=True)
class MeasureEstimate:
    c_hat: float
    d_hat: float
    mu_hat: float
    epsilon_schedule: Tuple[float, ...]
    tau_schedule: Tuple[float, ...]
    c_values: Tuple[float, ...]
    d_values: Tuple[float, ...]
    convergence_flags: Dict[str, bool]
    tail_truncated: bool = False

    def to_dict(self) -> Dict[str, Any]:
        return {
            "c_hat": self.c_hat,
            "d_hat": self.d_hat,
            "mu_hat": self.mu_hat,
            "epsilon_schedule": list(self.epsilon_schedule),
            "tau_schedule": list(self.tau_schedule),
            "c_values": list(self.c_values),
            "d_values": list(self.d_values),
            "convergence_flags": dict(self.convergence_flags),
            "tail_truncated": self.tail_truncated,
        }


def _stabilized(values: Sequence[float]) -> bool:
    last, previous = values[-1], values[-2]
    return abs(last - previous) <= STABLE_RTOL * max(abs(last), abs(previous))


# =========================
# c, d AND mu
# =========================
def c_limit(X: Ensemble, epsilon_schedule: Sequence[float]) -> LimitEstimate:
    eps = _epsilon_schedule(epsilon_schedule)
    per_member = np.array([worst_subset_masses(x, eps) for x in X.members])
    values = tuple(float(v) for v in per_member.max(axis=0))
    return LimitEstimate(eps, values, _stabilized(values))


def d_limit(X: Ensemble, tau_schedule: Sequence[float]) -> LimitEstimate:
    taus = _tau_schedule(tau_schedule)
    if taus[-1] > X.t_max * (1.0 + 1e-12):
        raise InputError(f"tau schedule exceeds T_max ({taus[-1]} > {X.t_max})")
    values = tuple(max(tail_mass(x, tau) for x in X.members) for tau in taus)
    stabilized = len(values) > 1 and _stabilized(values)
    return LimitEstimate(taus, values, stabilized)


def c_measure(X: Ensemble, epsilon_schedule: Sequence[float]) -> float:
    return c_limit(X, epsilon_schedule).value


def d_measure(X: Ensemble, tau_schedule: Sequence[float]) -> float:
    return d_limit(X, tau_schedule).value


def mu_measure(X: Ensemble, schedules: Optional[Schedules] = None) -> MeasureEstimate:
    schedules = schedules or Schedules.for_horizon(X.t_max)
    c = c_limit(X, schedules.epsilons)
    d = d_limit(X, schedules.taus)
    estimate = MeasureEstimate(
        c_hat=c.value,
        d_hat=d.value,
        mu_hat=c.value + d.value,
        epsilon_schedule=c.schedule,
        tau_schedule=d.schedule,
        c_values=c.values,
        d_values=d.values,
        convergence_flags={"c": c.stabilized, "d": d.stabilized},
        tail_truncated=bool(d.schedule[-1] >= X.t_max * (1.0 - 1e-12)),
    )
    if not (c.stabilized and d.stabilized):
        logger.debug(f"[MEASURE] '{X.label}': limits not settled {estimate.convergence_flags}")
    logger.info(f"[MEASURE] '{X.label}' ({len(X)} members): c={c.value:.6g} d={d.value:.6g} mu={estimate.mu_hat:.6g}")
    return estimate


# =========================
# ENSEMBLES
# =========================
ENSEMBLE_KINDS = ("concentrating", "escaping", "random-in-ball", "zero")


def build_ensemble(
    kind: str,
    size: int,
    grid: Grid,
    r: float = 1.0,
    seed: Optional[int] = None,
) -> Ensemble:
    """Generator-backed ensemble whose members lie in B_r."""
    if size < 1:
        raise InputError("Ensemble size must be positive")
    if kind == "concentrating":
        members = sampling.concentrating(grid, size, scale=r)
    elif kind == "escaping":
        members = sampling.escaping(grid, size, scale=r)
    elif kind == "random-in-ball":
        seed = settings.SEED if seed is None else seed
        members = sampling.random_ball(np.random.default_rng(seed), grid, size, r)
    elif kind == "zero":
        members = [GridFunction.zeros(grid) for _ in range(size)]
    else:
        raise InputError(f"Unknown ensemble kind '{kind}' (known: {', '.join(ENSEMBLE_KINDS)})")
    return Ensemble(members, label=f"{kind}:{size}")


def parse_ensemble(text: str) -> Tuple[str, int]:
    """'kind:size' -> (kind, size)."""
    kind, sep, size = text.partition(":")
    if not sep:
        raise InputError(f"Ensemble must look like kind:size, got '{text}'")
    try:
        count = int(size)
    except ValueError:
        raise InputError(f"Ensemble size must be an integer, got '{size}'")
    if kind not in ENSEMBLE_KINDS:
        raise InputError(f"Unknown ensemble kind '{kind}' (known: {', '.join(ENSEMBLE_KINDS)})")
    if count < 1:
        raise InputError("Ensemble size must be positive")
    return kind, count


# =========================
# mu-CONTRACTION
# =========================
@dataclass
class MuContractionReport:
    status: str
    gamma: float
    source: Optional[MeasureEstimate] = None
    image: Optional[MeasureEstimate] = None
    ratio: Optional[float] = None
    allowance: float = 0.0
    slack: float = 0.0
    cross_sums: bool = False
    note: str = ""

    def to_dict(self) -> Dict[str, Any]:
        return {
            "status": self.status,
            "gamma": self.gamma,
            "source": self.source.to_dict() if self.source else None,
            "image": self.image.to_dict() if self.image else None,
            "ratio": self.ratio,
            "allowance": self.allowance,
            "slack": self.slack,
            "cross_sums": self.cross_sums,
            "note": self.note,
        }


def offset_envelope(spec: ProblemSpec) -> Envelope:
    """a1 + b1 ||K|| (alpha + beta gamma2) + a + b gamma1."""
    b1, kn, beta, b = spec.f.envelope_slope, spec.kernel_norm, spec.u.envelope_slope, spec.g.envelope_slope
    a1, alpha, gamma2 = spec.f.envelope_offset, spec.u.envelope_offset, spec.Q_op.envelope_offset
    a, gamma1 = spec.g.envelope_offset, spec.T_op.envelope_offset

    def fn(t):
        return np.abs(a1(t)) + b1 * kn * (np.abs(alpha(t)) + beta * np.abs(gamma2(t))) + np.abs(a(t)) + b * np.abs(gamma1(t))

    return Envelope(fn, name="offset")


def _interpolation_error(y: GridFunction, epsilon: float, tau: float) -> float:
    """
    Grid error in the small-set and tail masses of y.

    The sup-norm interpolation error (Richardson, from the coarsened grid)
    bounds the error of any mass on a set of measure epsilon; the tail term
    is the Richardson estimate of the tail mass beyond tau.
    """
    if y.grid.cells < 2:
        return 0.0
    coarse = y.resample(y.grid.coarsened())
    sup_error = float(np.max(np.abs(y.values - coarse(y.grid.nodes)))) / 3.0
    tail_error = abs(tail_mass(y, tau) - tail_mass(coarse, tau)) / 3.0
    return epsilon * sup_error + tail_error


def image_ensemble(spec: ProblemSpec, X: Ensemble, cross_sums: bool = False) -> Ensemble:
    """{Ax + Bx} on the diagonal, or every {Ax + By} with cross_sums."""
    ax = [apply_A(spec, x) for x in X.members]
    if not cross_sums:
        members = [a + apply_B(spec, x) for a, x in zip(ax, X.members)]
    else:
        bx = [apply_B(spec, y) for y in X.members]
        members = [a + b for a in ax for b in bx]
    return Ensemble(members, label=f"image({X.label})")


def check_mu_contraction(
    spec: ProblemSpec,
    X: Ensemble,
    schedules: Optional[Schedules] = None,
    cross_sums: bool = False,
) -> MuContractionReport:
    """
    mu_hat(AS + BS) <= gamma mu_hat(S) + slack at fixed schedules.

    The slack carries the finite-resolution allowance mu_hat of the aggregated
    offset envelope (which the limit sends to zero), the grid interpolation
    error of the image members at the finest epsilon and the last tau, and
    the kernel-norm estimation slack. A slack above gamma mu_hat(S) leaves
    the check unable to see a violation, so a nonzero image is then only
    inconclusive.
    """
    gamma = contraction_constant(spec)
    if gamma >= 1.0:
        logger.warning(f"[MEASURE] gamma = {gamma:.6g} >= 1, mu-contraction not checked")
        return MuContractionReport(SKIPPED, gamma, cross_sums=cross_sums, note="gamma >= 1")
    schedules = schedules or Schedules.for_horizon(X.t_max)

    source = mu_measure(X, schedules)
    image = image_ensemble(spec, X, cross_sums)
    target = mu_measure(image, schedules)

    envelope = Ensemble([offset_envelope(spec).sample(X.members[0].grid)], label="offset envelope")
    allowance = mu_measure(envelope, schedules).mu_hat
    gamma_slack = (
        spec.f.envelope_slope * spec.Q_op.envelope_factor * spec.u.envelope_slope
        * spec.kernel_norm_slack / spec.Q_op.deviation_slope_min
    )
    interpolation = max(_interpolation_error(y, schedules.epsilons[-1], schedules.taus[-1]) for y in image.members)
    slack = allowance + interpolation + gamma_slack * source.mu_hat + settings.CHECK_RTOL * (1.0 + source.mu_hat)

    rhs = gamma * source.mu_hat
    report = judge("mu_contraction", np.array([target.mu_hat]), np.array([rhs]), np.array([slack]), {})
    ratio = target.mu_hat / source.mu_hat if source.mu_hat > 0.0 else None
    status, note = report.status, ""
    if slack > rhs and target.mu_hat > 0.0 and status != FALSIFIED:
        status, note = INCONCLUSIVE, f"slack {slack:.3g} exceeds gamma*mu(S) = {rhs:.3g}"
    result = MuContractionReport(
        status=status,
        gamma=gamma,
        source=source,
        image=target,
        ratio=ratio,
        allowance=allowance,
        slack=slack,
        cross_sums=cross_sums,
        note=note,
    )
    level = logging.WARNING if result.status == FALSIFIED else logging.INFO
    logger.log(level, f"[MEASURE] mu(image)={target.mu_hat:.6g} vs gamma*mu(S)={rhs:.6g} (+{slack:.3g}): {result.status}")
    return result


# =========================
# DIAGNOSTICS
# =========================
@dataclass(frozen=True)
class DieudonneReport:
    epsilon: float
    tau: float
    small_sets: float
    tail: float
    members: int
    tail_truncated: bool = False

    def to_dict(self) -> Dict[str, Any]:
        return {
            "epsilon": self.epsilon,
            "tau": self.tau,
            "small_sets": self.small_sets,
            "tail": self.tail,
            "members": self.members,
            "tail_truncated": self.tail_truncated,
        }


def dieudonne_report(X: Ensemble, epsilon: float, tau: float) -> DieudonneReport:
    """
    Uniform small-set mass and uniform tail of X at one (epsilon, tau).

    A tau at or beyond T_max gives a zero tail by truncation; the report
    flags it.
    """
    if not (epsilon > 0 and tau > 0):
        raise InputError(f"epsilon and tau must be positive, got {epsilon}, {tau}")
    small = max(float(worst_subset_masses(x, [epsilon])[0]) for x in X.members)
    tail = max(tail_mass(x, tau) for x in X.members)
    truncated = bool(tau >= X.t_max * (1.0 - 1e-12))
    if truncated:
        logger.warning(f"[MEASURE] tau={tau:g} reaches T_max={X.t_max:g}; the tail is zero by truncation")
    return DieudonneReport(epsilon, tau, small, tail, len(X), truncated)


@dataclass
class CompactnessReport:
    count: int
    radius: float
    distances: np.ndarray = field(repr=False)

    @property
    def consecutive(self) -> List[float]:
        return [float(self.distances[i, i + 1]) for i in range(self.count - 1)]

    def to_dict(self) -> Dict[str, Any]:
        off = self.distances[~np.eye(self.count, dtype=bool)]
        return {
            "count": self.count,
            "radius": self.radius,
            "consecutive": self.consecutive,
            "min_distance": float(off.min()) if off.size else 0.0,
            "max_distance": float(off.max()) if off.size else 0.0,
        }


def sample_ws_compactness(
    spec: ProblemSpec,
    count: int,
    r: float,
    grid: Optional[Grid] = None,
) -> CompactnessReport:
    """
    Pairwise distances of {A x_n} for x_n = (1 + sin(n t)) e^{-t} scaled to norm r.

    x_n converges weakly; small late distances are consistent with A being
    (ws)-compact. Nothing is claimed about subsequences.
    """
    if count < 2:
        raise InputError("(ws) sampling needs at least 2 members")
    grid = grid or spec.default_grid()
    images = [apply_A(spec, x) for x in sampling.oscillating(grid, count, r)]
    distances = np.zeros((count, count))
    for i in range(count):
        for j in range(i + 1, count):
            distances[i, j] = distances[j, i] = distance(images[i], images[j])
    logger.info(f"[MEASURE] (ws) sample: {count} images, consecutive distances {np.round(distances.diagonal(1), 8)}")
    return CompactnessReport(count, r, distances)
