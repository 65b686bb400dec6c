import math

import numpy as np
import pytest

from hypercone.acceptance import lorenz_samples
from hypercone.config import POLICY, DominationPolicy
from hypercone.domination import (DegenerateRestrictionError, IncompatibleSplittingError,
                                  adapted_metric_check, adapted_norm, certify_orbit,
                                  classify_trichotomy, delta_area, domination_rate,
                                  estimate_splitting, growth_margin, quotient_margins,
                                  sectional_rate, tangency_check, theoremA_crosscheck,
                                  wedge_splitting)
from hypercone.flow import (integrate, lorenz_origin_spectrum, model_classic_lorenz,
                            model_geometric_lorenz, model_linear, model_linear_saddle)

SADDLE = (1.0, -3.0, -0.5)
LORENZ = lorenz_origin_spectrum()
E_AXIS = np.array([[0.0], [1.0], [0.0]])
F_PLANE = np.array([[1.0, 0.0], [0.0, 0.0], [0.0, 1.0]])
ONES = np.array([1.0, 1.0, 1.0])


@pytest.fixture(scope="module")
def lorenz_data():
    return lorenz_samples()


# ---- delta areas -------------------------------------------------------------

def test_delta_area_constant():
    t = np.linspace(0.0, 10.0, 101)
    assert delta_area(t, np.full(t.size, -3.0)) == pytest.approx(-30.0)


def test_delta_area_rejects_missing_values():
    with pytest.raises(ValueError):
        delta_area([0.0, 1.0], [1.0, math.nan])


def test_saddle_running_area_slope_is_selected_delta():
    model = model_linear_saddle(*SADDLE)
    orbit = integrate(model, ONES, 10.0)
    cert = certify_orbit(model, orbit, stride=10)
    assert np.allclose(cert.deltas(), -3.5, atol=1e-6)
    assert delta_area(cert.times, cert.deltas()) == pytest.approx(-35.0, abs=1e-4)
    assert np.allclose(cert.running_area(), -3.5 * cert.times, atol=1e-4)


def test_classic_lorenz_delta_area_is_negative():
    """Negative delta area along a classic Lorenz orbit with the default form.

    No constant form strictly separates the classic Lorenz cocycle along its
    attractor, so delta is undefined at most samples and this check stays red.
    """
    model = model_classic_lorenz()
    orbit = integrate(model, np.array([1.0, 1.0, 20.0]), 10.0)
    cert = certify_orbit(model, orbit, stride=10, mode="full-jacobian")
    assert delta_area(cert.times, cert.deltas()) < 0.0


# ---- trichotomy --------------------------------------------------------------

def test_trichotomy_saddle_tangent_contracting():
    model = model_linear_saddle(*SADDLE)
    cert = certify_orbit(model, integrate(model, ONES, 10.0), stride=10)
    report = classify_trichotomy([cert], "tangent")
    assert report.verdict == "F--contracting"
    assert report.divergence == "-inf" and not report.generator_positive
    assert all(s == pytest.approx(-3.5, abs=1e-4) for s in report.slopes)


def test_trichotomy_saddle_wedge_near_lo_is_hyperbolic():
    model = model_linear_saddle(*SADDLE)
    cert = certify_orbit(model, integrate(model, ONES, 10.0), rule="near-lo", stride=10)
    report = classify_trichotomy([cert], "wedge")
    assert report.verdict == "hyperbolic"
    assert report.generator_positive and report.divergence == "+inf"


def test_trichotomy_geometric_lobe_is_hyperbolic():
    model = model_geometric_lorenz()
    orbit = integrate(model, np.array([2.5, 0.3, 0.5]), 0.05)
    report = classify_trichotomy([certify_orbit(model, orbit)], "tangent")
    assert report.verdict == "hyperbolic"
    assert report.slopes == () and report.note


def test_trichotomy_inconclusive_without_separation():
    model = model_classic_lorenz()
    cert = certify_orbit(model, integrate(model, np.array([1.0, 1.0, 20.0]), 1.0), stride=50)
    assert classify_trichotomy([cert]).verdict == "inconclusive"
    with pytest.raises(ValueError):
        classify_trichotomy([cert], "normal")


# ---- splittings --------------------------------------------------------------

def principal_angle(A, B):
    QA, _ = np.linalg.qr(A)
    QB, _ = np.linalg.qr(B)
    s = np.linalg.svd(QB - QA @ (QA.T @ QB), compute_uv=False)
    return math.asin(min(1.0, s[0]))


def test_estimate_splitting_saddle_axes():
    est = estimate_splitting(model_linear_saddle(*SADDLE), ONES, 5.0, 1)
    assert principal_angle(est.E, E_AXIS) < 1e-8
    assert principal_angle(est.F, F_PLANE) < 1e-8
    assert est.usable and est.quality < 1e-8


def test_estimate_splitting_rotated_saddle():
    Q, _ = np.linalg.qr(np.random.default_rng(0).standard_normal((3, 3)))
    model = model_linear(Q @ np.diag(SADDLE) @ Q.T)
    est = estimate_splitting(model, ONES, 5.0, 1)
    assert principal_angle(est.E, Q @ E_AXIS) < 1e-8


def test_estimate_splitting_lorenz_quality(lorenz_data):
    *_, estimates = lorenz_data
    assert all(e.quality < 0.05 and e.usable for e in estimates)


def test_estimate_splitting_rejects_bad_dimension():
    with pytest.raises(ValueError):
        estimate_splitting(model_linear_saddle(*SADDLE), ONES, 1.0, 3)


# ---- rates -------------------------------------------------------------------

@pytest.mark.parametrize("spectrum", [SADDLE, LORENZ])
def test_saddle_rates_match_spectrum(spectrum):
    l1, l2, l3 = spectrum
    orbit = integrate(model_linear_saddle(*spectrum), ONES, 5.0, with_wedge=True)
    dom = domination_rate(orbit, E_AXIS, F_PLANE)
    sec = sectional_rate(orbit, F_PLANE)
    assert dom.rate == pytest.approx(l2 - l3, rel=0.01)
    assert sec.rate == pytest.approx(l1 + l3, rel=0.01)
    assert dom.verdict and sec.verdict
    assert dom.r2 > 0.999 and dom.K == pytest.approx(1.0, rel=1e-6)
    assert dom.to_dict()["verdict"] == "pass"


def test_swapped_saddle_fails():
    orbit = integrate(model_linear_saddle(*LORENZ), ONES, 1.0)
    E = np.array([[1.0], [0.0], [0.0]])
    F = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    report = domination_rate(orbit, E, F)
    assert not report.verdict and report.rate > 0


def test_degenerate_restriction_is_reported():
    orbit = integrate(model_linear_saddle(*LORENZ), ONES, 5.0)
    E = np.array([[1.0], [0.0], [0.0]])
    F = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    with pytest.raises(DegenerateRestrictionError):
        domination_rate(orbit, E, F)


def test_sectional_rate_on_larger_F_needs_planes():
    orbit = integrate(model_linear_saddle(*SADDLE), ONES, 5.0)
    with pytest.raises(ValueError):
        sectional_rate(orbit, np.eye(3))
    with pytest.raises(ValueError):
        sectional_rate(orbit, np.array([[1.0], [0.0], [0.0]]))
    # every plane grows between the smallest and largest pair sums, and the
    # slowest sampled plane cannot beat the best coordinate plane
    report = sectional_rate(orbit, np.eye(3), planes=10, seed=3)
    assert SADDLE[0] + SADDLE[1] - 1e-6 <= report.rate <= SADDLE[0] + SADDLE[2] + 1e-6


def test_sectional_rate_without_wedge_uses_compounds():
    orbit = integrate(model_linear_saddle(*SADDLE), ONES, 5.0)
    assert sectional_rate(orbit, F_PLANE).rate == pytest.approx(0.5, rel=0.01)


def test_policy_scaling():
    assert POLICY.scaled(2).max_K == POLICY.max_K
    assert POLICY.scaled(3).max_K == POLICY.max_K ** 2
    assert DominationPolicy(max_K=2.0).scaled(4).max_K == 8.0


# ---- exterior cross-check ----------------------------------------------------

def test_wedge_splitting_dimensions():
    Et, Ft = wedge_splitting(E_AXIS, F_PLANE, 2)
    assert Ft.shape == (3, 1) and Et.shape == (3, 2)
    E4 = np.eye(4)[:, :1]
    F4 = np.eye(4)[:, 1:]
    Et, Ft = wedge_splitting(E4, F4, 2)
    assert Ft.shape == (6, 3) and Et.shape == (6, 3)
    with pytest.raises(ValueError):
        wedge_splitting(E_AXIS, F_PLANE, 3)


def test_crosscheck_saddle_passes():
    report = theoremA_crosscheck(model_linear_saddle(*LORENZ), [ONES], splittings=[(E_AXIS, F_PLANE)])
    r = report.records[0]
    assert report.agree and r.tangent.verdict and r.exterior.verdict
    assert r.exterior.rate == pytest.approx(r.tangent.rate, rel=0.01)


def test_crosscheck_near_degenerate_saddle_is_marginal():
    model = model_linear_saddle(1.0, -1.01, -1.0)
    report = theoremA_crosscheck(model, [ONES], T=5.0, splittings=[(E_AXIS, F_PLANE)])
    r = report.records[0]
    assert r.tangent.marginal and r.exterior.marginal and report.agree


def test_crosscheck_swapped_saddle_agrees_on_fail():
    E = np.array([[1.0], [0.0], [0.0]])
    F = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    report = theoremA_crosscheck(model_linear_saddle(*LORENZ), [ONES], T=1.0, splittings=[(E, F)])
    r = report.records[0]
    assert report.agree and not r.tangent.verdict and not r.exterior.verdict


def test_crosscheck_higher_power_in_dimension_four():
    D = np.diag([1.0, 0.5, -3.0, -0.2])
    model = model_linear(D)
    E = np.eye(4)[:, [2]]
    F = np.eye(4)[:, [0, 1, 3]]
    report = theoremA_crosscheck(model, [np.ones(4)], k=3, T=3.0, splittings=[(E, F)])
    assert report.agree and report.records[0].exterior.verdict


# ---- tangency ----------------------------------------------------------------

def test_tangency_saddle_and_origin():
    model = model_linear_saddle(*SADDLE)
    report = tangency_check(model, [np.array([1.0, 0.0, 2.0]), np.zeros(3)], [F_PLANE, F_PLANE])
    assert report.max_angle < 1e-14 and report.skipped == 1
    off = tangency_check(model, [ONES], [F_PLANE])
    assert off.max_angle > 0.1


def test_tangency_on_lorenz_samples(lorenz_data):
    model, samples, splittings, _ = lorenz_data
    report = tangency_check(model, samples, [F for _, F in splittings])
    assert report.max_angle < 1e-6


# ---- adapted metric ----------------------------------------------------------

def test_adapted_metric_lorenz_saddle():
    model = model_linear_saddle(*LORENZ)
    report = adapted_metric_check(model, [np.array([1.0, 0.0, 1.0])], [(E_AXIS, F_PLANE)])
    assert report.lam == pytest.approx(LORENZ[0] + LORENZ[2], rel=0.01)
    assert report.passed and report.times[-1] == pytest.approx(5.0)
    assert report.domination_rate == pytest.approx(LORENZ[2] - LORENZ[1], rel=0.01)


def test_adapted_metric_geometric_linear_region():
    model = model_geometric_lorenz()
    report = adapted_metric_check(model, [np.array([1e-5, 0.5, 0.5])], [(E_AXIS, F_PLANE)],
                                  T=0.25)
    assert report.passed


def test_adapted_metric_rejects_incompatible_splitting():
    model = model_linear_saddle(*SADDLE)
    with pytest.raises(IncompatibleSplittingError, match="E"):
        adapted_metric_check(model, [ONES], [(np.array([[1.0], [0.0], [0.0]]), F_PLANE)])
    F_bad = np.array([[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]])
    with pytest.raises(IncompatibleSplittingError, match="F"):
        adapted_metric_check(model, [ONES], [(E_AXIS, F_bad)])


def test_adapted_norm_is_a_norm():
    J = np.diag([1.0, -1.0, 1.0])
    rng = np.random.default_rng(4)
    for _ in range(100):
        u, v = rng.standard_normal((2, 3))
        a = rng.uniform(-3, 3)
        N = lambda w: adapted_norm(J, E_AXIS, F_PLANE, w)
        assert N(u + v) <= N(u) + N(v) + 1e-12
        assert N(a * u) == pytest.approx(abs(a) * N(u))
    assert adapted_norm(J, E_AXIS, F_PLANE, np.array([3.0, 4.0, 0.0])) == pytest.approx(5.0)


# ---- orbit inequalities ------------------------------------------------------

@pytest.mark.parametrize("rule", ["midpoint", "near-lo", "max-margin"])
def test_growth_inequality_on_saddle(rule):
    model = model_linear_saddle(*SADDLE)
    orbit = integrate(model, ONES, 5.0)
    cert = certify_orbit(model, orbit, rule=rule, stride=10)
    for v in (np.array([1.0, 0.0, 0.0]), np.array([0.6, 0.3, 0.8])):
        assert growth_margin(orbit, model.form, cert.times, cert.deltas(), v) >= -1e-6


def test_quotient_ratio_is_monotone_but_literal_bound_fails():
    model = model_linear_saddle(*SADDLE)
    orbit = integrate(model, ONES, 2.0)
    times = orbit.times[::10]
    deltas = np.full(times.size, -5.9)
    monotone, literal = quotient_margins(orbit, model.form, times, deltas,
                                         np.array([0.0, 1.0, 0.0]), np.array([1.0, 0.0, 0.0]))
    assert monotone <= 1e-9
    # log ratio falls at rate 8 while the bound only allows rate 11.8
    assert literal == pytest.approx(-3.8 * 2.0, rel=1e-6)
