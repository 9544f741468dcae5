import json
import math

import pytest

from app.errors import ConstantRangeError, DefinitionError, ParseError, UnknownPrimitiveError
from app.main import bundled_problems, load_problem, with_cells
from app.models import Provenance, Report, config_hash, emit_definition, parse_definition
from app.registry import build_problem


def test_bundled_problems():
    assert bundled_problems() == ["forced_fixed_point", "taoudi_example", "zero_problem"]


def test_worked_example_loads():
    definition = load_problem("taoudi_example")
    c = definition.constants
    assert (c.b, c.b1, c.rho1, c.m, c.rho2, c.M, c.beta, c.kappa) == (0.25, 1.0, 1.0, 2.0, 1.0, 1.0, 0.375, 0.5)
    assert c.lambda_ == pytest.approx((1.0 + math.sqrt(3.0)) / 4.0, rel=1e-15)
    assert definition.numerics.cells == 4096


def test_missing_problem():
    with pytest.raises(DefinitionError) as exc:
        load_problem("no_such_problem")
    assert "taoudi_example" in str(exc.value)


def test_empty_definition():
    with pytest.raises(ParseError):
        parse_definition("   \n")


def test_invalid_json_reports_position():
    with pytest.raises(ParseError) as exc:
        parse_definition('{\n  "name": "broken",\n  "version": 1,,\n}')
    assert exc.value.line == 3
    assert exc.value.column is not None


def test_non_object_definition():
    with pytest.raises(ParseError):
        parse_definition("[1, 2, 3]")


def test_unknown_key_rejected(raw_problem):
    raw = raw_problem("zero_problem")
    raw["constants"]["mystery"] = 1.0
    with pytest.raises(DefinitionError) as exc:
        parse_definition(json.dumps(raw))
    assert "mystery" in str(exc.value)


def test_missing_constants_reported_together(raw_problem):
    raw = raw_problem("zero_problem")
    del raw["constants"]["b"]
    del raw["constants"]["beta"]
    with pytest.raises(DefinitionError) as exc:
        parse_definition(json.dumps(raw))
    message = str(exc.value)
    assert message.startswith("2 problem(s)")
    assert "constants.b:" in message and "constants.beta:" in message


@pytest.mark.parametrize(
    "name,value,label",
    [("m", 0.0, "(A2)"), ("M", -1.0, "(A2)"), ("b", -0.1, "(A1)"), ("beta", -1.0, "(A5)"), ("kappa", 1.0, "(A3)"), ("kernel_norm", -2.0, "(A6)")],
)
def test_constant_out_of_range(raw_problem, name, value, label):
    raw = raw_problem("taoudi_example")
    raw["constants"][name] = value
    with pytest.raises(ConstantRangeError) as exc:
        parse_definition(json.dumps(raw))
    assert exc.value.assumption == label
    assert exc.value.name == name


def test_m_error_names_the_constraint(raw_problem):
    raw = raw_problem("taoudi_example")
    raw["constants"]["m"] = 0.0
    with pytest.raises(ConstantRangeError) as exc:
        parse_definition(json.dumps(raw))
    assert "phi'(t) >= m" in str(exc.value)


def test_definition_round_trip():
    definition = load_problem("taoudi_example")
    assert parse_definition(emit_definition(definition)) == definition


def test_with_cells_overrides_numerics_only():
    definition = load_problem("taoudi_example")
    smaller = with_cells(definition, 64)
    assert smaller.numerics.cells == 64
    assert smaller.constants == definition.constants
    assert with_cells(definition, None) is definition


# =========================
# REGISTRY
# =========================
def test_unknown_primitive(raw_problem):
    raw = raw_problem("zero_problem")
    raw["components"]["k"] = {"kind": "bessel"}
    with pytest.raises(UnknownPrimitiveError) as exc:
        build_problem(parse_definition(json.dumps(raw)))
    assert "polynomial_exp" in str(exc.value)


def test_unknown_primitive_parameter(raw_problem):
    raw = raw_problem("zero_problem")
    raw["constants"]["a"] = {"kind": "exponential", "params": {"speed": 2.0}}
    with pytest.raises(DefinitionError) as exc:
        build_problem(parse_definition(json.dumps(raw)))
    assert "speed" in str(exc.value)


def test_kernel_norm_estimated_when_absent(raw_problem, make_spec):
    raw = raw_problem("taoudi_example")
    del raw["constants"]["kernel_norm"]
    spec = make_spec(raw, cells=64)
    assert spec.kernel_norm_source == "estimated"
    assert spec.kernel_norm == pytest.approx(2.0 / math.sqrt(math.e), abs=1e-4)
    assert spec.kernel_norm_slack >= 0.0


def test_declared_kernel_norm_kept(deviating_spec):
    assert deviating_spec.kernel_norm_source == "declared"
    assert deviating_spec.kernel_norm_slack == 0.0
    assert deviating_spec.contraction == 0.5


def test_worked_example_grid(deviating_spec):
    grid = deviating_spec.default_grid()
    assert grid.cells == 256
    assert grid.t_max == 40.0


# =========================
# REPORTS
# =========================
def test_report_json_round_trip():
    report = Report(
        kind="solve",
        payload={"status": "converged", "residual_history": [1.0, 0.5], "r": None},
        provenance=Provenance(tool_version="0.1.0", seed=3, config_hash=config_hash({"a": 1})),
    )
    assert Report.from_json(report.to_json()) == report


def test_config_hash_ignores_key_order():
    assert config_hash({"a": 1, "b": [1, 2]}) == config_hash({"b": [1, 2], "a": 1})
    assert config_hash({"a": 1}) != config_hash({"a": 2})
