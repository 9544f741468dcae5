import math

import numpy as np
import pytest
from scipy import integrate

from app.certify import (
    COMPUTED,
    DECLARED,
    FALSIFIED,
    INCONCLUSIVE,
    SKIPPED,
    UNVERIFIABLE,
    VERIFIED,
    ContractionWitness,
    certify_problem,
    check_ball_invariance,
    check_envelopes,
    check_estimates,
    check_separate_contraction,
    contraction_constant,
    invariant_ball_radius,
    judge,
)
from app.errors import SpecificationError
from app.l1core import distance
from app.operators import apply_A, apply_B

GAMMA = 1.0 / 8.0 + 3.0 / (4.0 * math.sqrt(math.e))
KERNEL_NORM = 2.0 / math.sqrt(math.e)


def expected_C():
    tail, _ = integrate.quad(lambda z: z / (2.0 + z**3), 1.0, math.inf, epsabs=1e-14, epsrel=1e-12)
    return 2.0 * math.pi / (3.0 * math.sqrt(3.0)) + KERNEL_NORM * tail + 0.25


@pytest.fixture(scope="module")
def deviating_envelopes(deviating_spec):
    return check_envelopes(deviating_spec, sample_count=2000, seed=7)


@pytest.fixture(scope="module")
def worked_radius(deviating_spec):
    return invariant_ball_radius(deviating_spec)[1]


# =========================
# JUDGE
# =========================
def test_judge_classifies_by_slack():
    points = {"i": np.arange(3.0)}
    assert judge("ok", [1.0, 2.0, 3.0], [1.0, 2.0, 3.0], 0.0, points).status == VERIFIED
    assert judge("close", [1.0, 2.0 + 1e-10, 3.0], [1.0, 2.0, 3.0], 1e-8, points).status == INCONCLUSIVE
    report = judge("bad", [1.0, 2.5, 3.1], [1.0, 2.0, 3.0], 1e-8, points)
    assert report.status == FALSIFIED
    assert report.witness["i"] == 1.0
    assert report.witness["lhs"] - report.witness["rhs"] > report.witness["slack"]


def test_judge_treats_nonfinite_lhs_as_violation():
    report = judge("nan", [np.nan], [1.0], 1.0, {"i": np.zeros(1)})
    assert report.status == FALSIFIED
    assert report.to_dict()["max_violation"] == "inf"


def test_judge_without_samples_skips():
    assert judge("empty", [], [], 0.0, {}).status == SKIPPED


# =========================
# GAMMA, C, r
# =========================
def test_gamma_of_worked_example(deviating_spec):
    assert contraction_constant(deviating_spec) == pytest.approx(GAMMA, abs=1e-12)


def test_gamma_with_estimated_kernel_norm(raw_problem, make_spec):
    raw = raw_problem("taoudi_example")
    del raw["constants"]["kernel_norm"]
    spec = make_spec(raw, cells=128)
    assert spec.kernel_norm_source == "estimated"
    assert contraction_constant(spec) == pytest.approx(GAMMA, abs=1e-4)


def test_gamma_without_kernel_norm_is_rejected(raw_problem, make_spec):
    raw = raw_problem("taoudi_example")
    del raw["constants"]["kernel_norm"]
    spec = make_spec(raw, cells=64, estimate_norm=False)
    with pytest.raises(SpecificationError):
        contraction_constant(spec)


@pytest.mark.parametrize(
    "name,direction",
    [("b", 1), ("b1", 1), ("rho1", 1), ("rho2", 1), ("beta", 1), ("kernel_norm", 1), ("m", -1), ("M", -1)],
)
def test_gamma_is_monotone_in_each_constant(raw_problem, make_spec, name, direction):
    raw = raw_problem("taoudi_example")
    base = contraction_constant(make_spec(raw, cells=32))
    raw["constants"][name] *= 1.5
    moved = contraction_constant(make_spec(raw, cells=32))
    assert direction * (moved - base) > 0


def test_gamma_vanishes_without_slopes(zero_spec):
    assert contraction_constant(zero_spec) == 0.0


def test_C_and_r_of_worked_example(deviating_spec):
    C, r = invariant_ball_radius(deviating_spec)
    assert C == pytest.approx(expected_C(), abs=1e-6)
    assert C + contraction_constant(deviating_spec) * r == pytest.approx(r, rel=1e-12)


def test_zero_problem_has_zero_ball(zero_spec):
    assert invariant_ball_radius(zero_spec) == (0.0, 0.0)


def test_doubling_offsets_doubles_C(raw_problem, make_spec):
    raw = raw_problem("taoudi_example")
    C, _ = invariant_ball_radius(make_spec(raw, cells=32))
    constants = raw["constants"]
    constants["a"]["params"]["scale"] = 2.0
    constants["gamma1"]["params"]["scale"] = 2.0
    constants["alpha"]["params"]["scale"] = 2.0
    doubled, _ = invariant_ball_radius(make_spec(raw, cells=32))
    assert doubled == pytest.approx(2.0 * C, rel=1e-9)


def test_gamma_of_one_has_no_ball(raw_problem, make_spec):
    raw = raw_problem("zero_problem")
    raw["constants"].update(b=1.0, rho1=1.0, m=1.0)
    spec = make_spec(raw, cells=32)
    assert contraction_constant(spec) == 1.0
    assert invariant_ball_radius(spec)[1] is None


# =========================
# ENVELOPES
# =========================
@pytest.mark.parametrize("name", ["A1.g", "A1.f", "A2.T", "A2.Q", "A2.phi", "A2.psi", "A5.growth", "A5.modulus", "A5.h_limit"])
def test_worked_example_envelopes_hold(deviating_envelopes, name):
    assert deviating_envelopes[name].status == VERIFIED, deviating_envelopes[name].witness


def test_worked_example_labels(deviating_envelopes):
    assert deviating_envelopes["A4"].status == UNVERIFIABLE
    assert deviating_envelopes["A6"].status == DECLARED
    assert deviating_envelopes["A7"].status == COMPUTED


def test_estimated_kernel_norm_is_computed(raw_problem, make_spec):
    raw = raw_problem("forced_fixed_point")
    del raw["constants"]["kernel_norm"]
    spec = make_spec(raw, cells=64)
    reports = check_envelopes(spec, sample_count=200, seed=0)
    assert reports["A6"].status == COMPUTED


def test_envelope_reports_are_reproducible(deviating_spec, deviating_envelopes):
    again = check_envelopes(deviating_spec, sample_count=2000, seed=7)
    assert {k: v.to_dict() for k, v in again.items()} == {k: v.to_dict() for k, v in deviating_envelopes.items()}


def test_square_nonlinearity_is_falsified(raw_problem, make_spec):
    raw = raw_problem("taoudi_example")
    raw["components"]["f"]["nonlinearity"] = {"kind": "square", "params": {"scale": 1.0}}
    spec = make_spec(raw, cells=64)
    report = check_envelopes(spec, sample_count=1000, seed=1)["A1.f"]
    assert report.status == FALSIFIED
    w = report.witness
    assert abs(w["x"]) > 1.0
    # the witness reproduces on re-evaluation
    lhs = abs(float(spec.f.eval(np.array(w["t"]), np.array(w["x"]))))
    rhs = float(spec.f.envelope_offset(np.array(w["t"]))) + spec.f.envelope_slope * abs(w["x"])
    assert lhs - rhs > w["slack"]


def test_understated_growth_slope_is_falsified(raw_problem, make_spec):
    raw = raw_problem("taoudi_example")
    raw["constants"]["beta"] = 0.3
    spec = make_spec(raw, cells=64)
    report = check_envelopes(spec, sample_count=1000, seed=2)["A5.growth"]
    assert report.status == FALSIFIED
    w = report.witness
    t, s, x = (np.array(w[key]) for key in ("t", "s", "x"))
    lhs = abs(float(spec.u.eval(t, s, x)))
    rhs = float(spec.u.envelope_offset(s)) + 0.3 * abs(w["x"])
    assert lhs - rhs > w["slack"]


def test_gamma_above_one_fails_A7(raw_problem, make_spec):
    raw = raw_problem("taoudi_example")
    raw["constants"]["beta"] = 1.0
    spec = make_spec(raw, cells=64)
    assert contraction_constant(spec) == pytest.approx(0.125 + KERNEL_NORM, abs=1e-12)
    assert check_envelopes(spec, sample_count=200, seed=0)["A7"].status == FALSIFIED


# =========================
# SEPARATE CONTRACTION
# =========================
def test_worked_example_B_is_contractive(deviating_spec, worked_radius):
    report = check_separate_contraction(deviating_spec, ContractionWitness.strict(0.5), 100, worked_radius, seed=3)
    assert report.status == VERIFIED
    assert report.samples == 100
    assert report.details["pair_condition"] == VERIFIED


@pytest.mark.parametrize("scale", [1.0, 0.9])
def test_non_contractive_B_is_falsified(raw_problem, make_spec, scale):
    raw = raw_problem("zero_problem")
    raw["components"]["g"]["nonlinearity"] = {"kind": "linear", "params": {"scale": scale}}
    raw["components"]["T"] = {"kind": "identity"}
    spec = make_spec(raw, cells=64)
    report = check_separate_contraction(spec, ContractionWitness.strict(0.5), 20, 1.0, seed=4)
    assert report.status == FALSIFIED
    x, y = report.evidence
    assert distance(apply_B(spec, x), apply_B(spec, y)) - 0.5 * distance(x, y) > report.slack


def test_pair_condition_is_checked(zero_spec):
    witness = ContractionWitness(phi_c=lambda r: 0.6 * r, psi_c=lambda r: 0.6 * r, label="loose")
    report = check_separate_contraction(zero_spec, witness, 4, 1.0, seed=0)
    assert report.status == FALSIFIED
    assert "rho" in report.witness


@pytest.mark.parametrize("kappa", [0.0, 1.0, 1.5, -0.2])
def test_strict_witness_needs_kappa_below_one(kappa):
    with pytest.raises(SpecificationError):
        ContractionWitness.strict(kappa)


def test_strict_witness_pair_sums_to_identity():
    witness = ContractionWitness.strict(0.25)
    rho = np.geomspace(1e-3, 1e3, 7)
    assert np.allclose(witness.phi_c(rho) + witness.psi_c(rho), rho, rtol=1e-15)


# =========================
# BALL INVARIANCE AND ESTIMATES
# =========================
def test_ball_invariance_of_worked_example(deviating_spec, worked_radius):
    report = check_ball_invariance(deviating_spec, worked_radius, 40, seed=5)
    assert report.status == VERIFIED
    assert report.details["max_norm"] <= worked_radius


def test_ball_invariance_of_zero_problem(zero_spec):
    report = check_ball_invariance(zero_spec, 0.0, 8, seed=0)
    assert report.status == VERIFIED
    assert report.details["max_norm"] == 0.0


def test_per_subset_estimates_hold(deviating_spec):
    reports = check_estimates(deviating_spec, 4, seed=6)
    assert reports["estimates.A"].status == VERIFIED
    assert reports["estimates.B"].status == VERIFIED
    assert reports["estimates.A"].samples == 4 * 9


# =========================
# CERTIFICATE
# =========================
def test_worked_example_certificate_passes(deviating_spec):
    certificate = certify_problem(deviating_spec, sample_count=1000, pair_count=20, seed=11)
    assert certificate.passed, certificate.failures
    payload = certificate.to_dict()
    assert payload["status"] == "passed"
    assert payload["gamma"] == pytest.approx(GAMMA, abs=1e-12)
    assert payload["assumptions"]["A3"]["status"] == VERIFIED
    assert payload["kernel_norm"]["source"] == "declared"
    assert payload["kernel_norm"]["value"] == pytest.approx(KERNEL_NORM, rel=1e-15)


def test_certificate_is_reproducible(zero_spec):
    first = certify_problem(zero_spec, sample_count=300, pair_count=8, seed=3).to_dict()
    second = certify_problem(zero_spec, sample_count=300, pair_count=8, seed=3).to_dict()
    assert first == second
    assert first["status"] == "passed"
    assert first["r"] == 0.0


def test_certificate_fails_without_ball(raw_problem, make_spec):
    raw = raw_problem("taoudi_example")
    raw["constants"]["beta"] = 1.0
    certificate = certify_problem(make_spec(raw, cells=64), sample_count=300, pair_count=8, seed=0)
    assert not certificate.passed
    assert certificate.r is None
    assert certificate.failures[0] == "gamma >= 1"
    assert certificate.checks["ball_invariance"].status == SKIPPED


def test_missing_witness_leaves_A3_unverifiable(raw_problem, make_spec):
    raw = raw_problem("zero_problem")
    del raw["constants"]["kappa"]
    certificate = certify_problem(make_spec(raw, cells=32), sample_count=200, pair_count=4, seed=0)
    assert certificate.assumption_status["A3"].status == UNVERIFIABLE
    assert certificate.passed


def test_understated_g_slope_falsifies_B_estimate(raw_problem, make_spec):
    raw = raw_problem("taoudi_example")
    raw["constants"]["b"] = 0.01
    report = check_estimates(make_spec(raw, cells=128), 4, seed=6)["estimates.B"]
    assert report.status == FALSIFIED
    assert report.witness["lhs"] - report.witness["rhs"] > report.witness["slack"]


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_ball_invariance_witness_rechecks(deviating_spec, seed):
    report = check_ball_invariance(deviating_spec, 0.1, 12, seed=seed)
    assert report.status == FALSIFIED
    x, y = report.evidence
    assert x.norm() <= 0.1 * (1.0 + 1e-12)
    assert y.norm() <= 0.1 * (1.0 + 1e-12)
    assert (apply_A(deviating_spec, x) + apply_B(deviating_spec, y)).norm() > 0.1 + report.witness["slack"]
