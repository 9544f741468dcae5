import copy
import json

import numpy as np
import pytest

from app.l1core import Grid
from app.main import PROBLEMS_DIR
from app.models import parse_definition
from app.registry import build_problem


def _raw(name):
    return json.loads((PROBLEMS_DIR / f"{name}.json").read_text(encoding="utf-8"))


def _spec(raw, cells=256, t_max=40.0, grid="geometric", estimate_norm=True):
    raw = copy.deepcopy(raw)
    raw["numerics"] = {"t_max": t_max, "cells": cells, "grid": grid, "grid_scale": 1.0}
    return build_problem(parse_definition(json.dumps(raw)), estimate_norm=estimate_norm)


@pytest.fixture(scope="session")
def raw_problem():
    """Factory: bundled definition as a mutable dict."""
    return _raw


@pytest.fixture(scope="session")
def make_spec():
    """Factory: dict definition -> ProblemSpec on a small grid."""
    return _spec


@pytest.fixture(scope="session")
def deviating_spec():
    return _spec(_raw("taoudi_example"), cells=256)


@pytest.fixture(scope="session")
def zero_spec():
    return _spec(_raw("zero_problem"), cells=128)


@pytest.fixture(scope="session")
def forced_spec():
    return _spec(_raw("forced_fixed_point"), cells=256)


@pytest.fixture
def small_grid():
    return Grid.geometric(40.0, 256)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
