import numpy as np
import pytest
from pydantic import ValidationError

from app.errors import InputError
from app.l1core import Grid, GridFunction, distance
from app.models import SolveConfig
from app.operators import residual
from app.sampling import random_function
from app.solver import (
    CONVERGED,
    DIVERGED,
    MAX_ITERS,
    project_ball,
    solve,
    solve_picard,
    solve_split,
)


@pytest.fixture(scope="module")
def halving_spec(make_spec, raw_problem):
    """B x = e^{-t} + x/2, A = 0: fixed point 2 e^{-t}."""
    raw = raw_problem("forced_fixed_point")
    raw["components"]["g"]["nonlinearity"] = {"kind": "linear", "params": {"scale": 0.5}}
    return make_spec(raw, cells=128)


@pytest.fixture(scope="module")
def volterra_spec(make_spec, raw_problem):
    """B x = e^{-t} + x/2 and A x = 0.2 int_0^t e^{-t} x(s) ds."""
    raw = raw_problem("forced_fixed_point")
    raw["components"]["g"]["nonlinearity"] = {"kind": "linear", "params": {"scale": 0.5}}
    raw["components"]["f"]["nonlinearity"] = {"kind": "linear", "params": {"scale": 0.2}}
    raw["components"]["u"] = {"kind": "identity"}
    return make_spec(raw, cells=128)


@pytest.fixture(scope="module")
def doubling_spec(make_spec, raw_problem):
    raw = raw_problem("forced_fixed_point")
    raw["components"]["g"]["nonlinearity"] = {"kind": "linear", "params": {"scale": 2.0}}
    return make_spec(raw, cells=64)


# =========================
# PROJECTION
# =========================
def test_project_ball_keeps_interior_points(rng):
    x = random_function(rng, Grid.geometric(10.0, 32))
    assert project_ball(x, 2.0 * x.norm() + 1.0) is x


def test_project_ball_lands_on_sphere():
    rng = np.random.default_rng(0)
    grid = Grid.geometric(10.0, 32)
    for _ in range(1000):
        x = random_function(rng, grid)
        r = float(rng.uniform(0.01, 5.0))
        y = project_ball(x, r)
        assert y.norm() <= r * (1.0 + 1e-12)
        if x.norm() > r:
            assert y.norm() == pytest.approx(r, rel=1e-12)


def test_project_ball_of_zero():
    zero = GridFunction.zeros(Grid.uniform(1.0, 4))
    assert project_ball(zero, 1.0).norm() == 0.0


@pytest.mark.parametrize("r", [0.0, -1.0])
def test_project_ball_needs_positive_radius(r):
    with pytest.raises(InputError):
        project_ball(GridFunction.zeros(Grid.uniform(1.0, 4)), r)


# =========================
# CONFIG
# =========================
@pytest.mark.parametrize(
    "update",
    [{"tol": 0.0}, {"damping": 0.0}, {"damping": 1.5}, {"max_iters": 0}, {"scheme": "newton"}, {"project_to_ball": -1.0}],
)
def test_invalid_solve_config(update):
    with pytest.raises(ValidationError):
        SolveConfig(**update)


# =========================
# PICARD
# =========================
def test_forced_fixed_point_in_one_step(forced_spec):
    report = solve_picard(forced_spec)
    assert report.status == CONVERGED
    assert report.iterations == 1
    assert np.array_equal(report.final_iterate.values, np.exp(-report.final_iterate.grid.nodes))
    assert report.residual == 0.0
    assert report.refinement_check is not None


def test_converged_start_takes_no_steps(forced_spec):
    x0 = GridFunction.sample(forced_spec.default_grid(), lambda t: np.exp(-t))
    report = solve_picard(forced_spec, x0=x0)
    assert report.status == CONVERGED
    assert report.iterations == 0
    assert report.residual_history == []


def test_residual_contracts_at_rate_one_half(halving_spec):
    report = solve_picard(halving_spec, config=SolveConfig(tol=1e-12, refinement_check=False))
    assert report.status == CONVERGED
    history = np.array([report.initial_residual] + report.residual_history)
    # below ~1e-8 the residual is dominated by rounding in ||x - Bx||
    resolved = history[:-1] > 1e-8
    assert np.count_nonzero(resolved) >= 20
    ratios = history[1:][resolved] / history[:-1][resolved]
    assert np.all(ratios <= 0.5 + 1e-6)
    assert np.all(history[1:] <= 0.5 * history[:-1] + 1e-13)
    expected = 2.0 * np.exp(-report.final_iterate.grid.nodes)
    assert np.allclose(report.final_iterate.values, expected, rtol=0, atol=1e-11)


def test_residual_matches_final_iterate(volterra_spec):
    report = solve_picard(volterra_spec, config=SolveConfig(tol=1e-10))
    assert report.status == CONVERGED
    assert report.residual == pytest.approx(residual(volterra_spec, report.final_iterate), rel=1e-9, abs=1e-15)
    assert len(report.residual_history) == len(report.norm_history) == len(report.damping_history)


def test_max_iters_keeps_one_history_entry_per_step(deviating_spec):
    report = solve_picard(deviating_spec, config=SolveConfig(max_iters=1))
    assert report.status == MAX_ITERS
    assert report.iterations == 1
    assert report.refinement_check is None


def test_divergence_is_reported(doubling_spec):
    report = solve_picard(doubling_spec, config=SolveConfig(max_halvings=0, max_iters=100))
    assert report.status == DIVERGED
    assert report.iterations < 100
    assert "exceeds" in report.message


def test_residual_increase_halves_damping(doubling_spec):
    report = solve_picard(doubling_spec, config=SolveConfig(max_halvings=3, max_iters=5))
    assert report.damping_history[-1] == 0.125
    assert report.iterations == 5


def test_projection_keeps_iterates_in_ball(deviating_spec):
    report = solve_picard(deviating_spec, config=SolveConfig(project_to_ball=0.5, max_iters=5, refinement_check=False))
    assert max(report.norm_history) <= 0.5 * (1.0 + 1e-12)


# =========================
# SPLIT
# =========================
def test_split_agrees_with_picard(volterra_spec):
    config = SolveConfig(tol=1e-12, inner_tol=1e-13, refinement_check=False)
    picard = solve_picard(volterra_spec, config=config)
    split = solve_split(volterra_spec, config=config)
    assert picard.status == split.status == CONVERGED
    assert distance(picard.final_iterate, split.final_iterate) <= 1e-9
    assert split.inner_iterations and all(n >= 1 for n in split.inner_iterations)


def test_split_reports_inner_failure(doubling_spec):
    report = solve_split(doubling_spec, config=SolveConfig(inner_max_iters=5))
    assert report.status == DIVERGED
    assert "inner loop" in report.message
    assert report.iterations == 0


def test_split_inner_loop_stops_at_divergence_bound(doubling_spec):
    report = solve_split(doubling_spec)
    assert report.status == DIVERGED
    assert "exceeds" in report.message
    assert report.iterations == 0


def test_split_inner_blowup_is_reported_not_raised(make_spec, raw_problem):
    raw = raw_problem("forced_fixed_point")
    raw["components"]["g"]["nonlinearity"] = {"kind": "square", "params": {"scale": 1.0}}
    spec = make_spec(raw, cells=64)
    x0 = GridFunction.sample(spec.default_grid(), lambda t: 3.0 * np.exp(-t))
    report = solve_split(spec, x0=x0)
    assert report.status == DIVERGED
    assert "inner loop" in report.message
    assert report.iterations == 0


def test_dispatch_by_scheme(forced_spec):
    assert solve(forced_spec, config=SolveConfig(scheme="split")).scheme == "split"
    assert solve(forced_spec).scheme == "picard"


def test_worked_example_schemes_agree(deviating_spec):
    config = SolveConfig(tol=1e-8, refinement_check=False)
    picard = solve_picard(deviating_spec, config=config)
    split = solve_split(deviating_spec, config=config)
    assert picard.status == split.status == CONVERGED
    norm = picard.final_iterate.norm()
    assert distance(picard.final_iterate, split.final_iterate) <= 10.0 * config.tol * (1.0 + norm)


def test_report_table_and_payload(forced_spec):
    report = solve(forced_spec)
    table = report.table()
    assert table.shape == (forced_spec.default_grid().cells + 1, 2)
    payload = report.to_dict()
    assert payload["status"] == CONVERGED
    assert payload["cells"] == forced_spec.default_grid().cells


@pytest.mark.slow
def test_worked_example_converges_on_full_grid(make_spec, raw_problem):
    spec = make_spec(raw_problem("taoudi_example"), cells=4096)
    report = solve_picard(spec)
    assert report.status == CONVERGED
    tol = SolveConfig().tol
    assert report.refinement_check <= 10.0 * tol * (1.0 + report.norm)
