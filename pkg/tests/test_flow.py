import math

import numpy as np
import pytest
import scipy.integrate
import scipy.linalg
from hypothesis import given, settings, strategies as st

from hypercone.exterior import compound
from hypercone.flow import (Box, ConfigError, RegionError, StepSizeError, cumulative_simpson,
                            integrate, lorenz_origin_spectrum, model_classic_lorenz,
                            model_from_config, model_geometric_lorenz, model_linear,
                            model_linear_saddle, parse_kv, read_orbit_csv, simpson,
                            write_orbit_csv)
from hypercone.forms import jprime


SADDLE = (1.0, -3.0, -0.5)


def test_linear_saddle_field_and_ordering():
    m = model_linear_saddle(*SADDLE)
    assert np.allclose(m.X([1.0, 2.0, 3.0]), [1.0, -6.0, -1.5])
    assert np.allclose(m.DX([0, 0, 0]), np.diag(SADDLE))
    with pytest.raises(ValueError):
        model_linear_saddle(1.0, -0.5, -3.0)
    relaxed = model_linear_saddle(1.0, -0.5, -3.0, relaxed=True)
    assert relaxed.params["relaxed"]


def test_lorenz_origin():
    m = model_classic_lorenz()
    assert np.array_equal(m.X([0.0, 0.0, 0.0]), np.zeros(3))
    l1, l2, l3 = lorenz_origin_spectrum()
    eig = np.sort(np.linalg.eigvals(m.DX([0.0, 0.0, 0.0])).real)
    assert np.allclose(eig, sorted([l1, l2, l3]))
    assert l2 < l3 < 0 < l1
    assert l3 == pytest.approx(-8.0 / 3.0)


def test_lorenz_jacobian_matches_finite_differences():
    assert model_classic_lorenz().derivative_residual([1.0, 2.0, 3.0]) < 1e-7


def test_mode_is_validated():
    with pytest.raises(ValueError):
        model_classic_lorenz().DX([0, 0, 0], mode="exact")


def test_geometric_lobe_matrix_literal():
    g = model_geometric_lorenz(rho=0.05, zeta=0.05).params["impl"]
    l1, l2, _ = lorenz_origin_spectrum()
    assert np.allclose(g.A[1], [[0.05 * l1, 0, 1], [0, 0.05 * l2, 0], [-1, 0, 0.05 * l1]])
    assert np.allclose(g.A[2], [[0.05 * l1, 0, -1], [0, 0.05 * l2, 0], [1, 0, 0.05 * l1]])


def test_geometric_blend_endpoints_and_midpoint():
    m = model_geometric_lorenz(rho=0.05, zeta=0.05)
    g = m.params["impl"]
    assert np.array_equal(m.DX(g.transition_point(1.0, 1)), g.D)
    assert np.array_equal(m.DX(np.array([0.3, 0.1, 0.1])), g.D)
    x = g.transition_point(0.5, 1)
    assert g.classify(x)[2] == pytest.approx(0.5, abs=1e-12)
    Dm = m.DX(x, "matrix-family")
    assert np.allclose(Dm, 0.5 * g.D + 0.5 * g.A[1])
    Jt = jprime(m.form, Dm)
    assert np.allclose(np.diag(Jt), [12.419, 23.970, -2.0753], atol=1e-3)


@pytest.mark.parametrize("x", [[1.2, 0.3, -0.4], [1.5, -0.5, 0.5], [-1.7, 0.2, 0.1],
                               [3.0, 0.5, 0.5], [0.5, 0.5, 0.5]])
def test_geometric_full_jacobian_matches_finite_differences(x):
    m = model_geometric_lorenz()
    assert m.derivative_residual(x, mode="full-jacobian") < 1e-6


def test_geometric_field_is_continuous_at_lobe_entrance():
    m = model_geometric_lorenz()
    for s in (1.0, -1.0):
        a = np.array([s * (2.0 - 1e-9), 0.0, 0.0])
        b = np.array([s * (2.0 + 1e-9), 0.0, 0.0])
        assert np.allclose(m.X(a), m.X(b), atol=1e-6)


def test_integrate_rejects_start_outside_region():
    with pytest.raises(RegionError):
        integrate(model_classic_lorenz(), np.array([100.0, 0.0, 0.0]), 1.0)


def test_linear_saddle_closed_form():
    m = model_linear_saddle(*SADDLE)
    x0 = np.array([1.0, 1.0, 1.0])
    orbit = integrate(m, x0, 2.0, 1e-3)
    assert orbit.times[-1] == pytest.approx(2.0)
    exact = np.exp(np.array(SADDLE) * 2.0) * x0
    assert np.max(np.abs(orbit.states[-1] - exact) / np.abs(exact)) < 1e-7
    assert np.allclose(orbit.fundamentals[-1], np.diag(np.exp(2.0 * np.array(SADDLE))), rtol=1e-7)


def test_zero_horizon_is_identity():
    orbit = integrate(model_classic_lorenz(), np.array([1.0, 1.0, 20.0]), 0.0, with_wedge=True)
    assert len(orbit) == 1
    assert np.array_equal(orbit.fundamentals[0], np.eye(3))
    assert np.array_equal(orbit.wedge_fundamentals[0], np.eye(3))


def test_fundamental_of_linear_field_matches_scipy_expm():
    D = np.array([[0.3, 1.0, 0.0], [-1.0, 0.3, 0.2], [0.0, 0.5, -1.0]])
    orbit = integrate(model_linear(D), np.ones(3), 1.5, 1e-3)
    assert np.allclose(orbit.fundamentals[-1], scipy.linalg.expm(1.5 * D), rtol=1e-9, atol=1e-11)


def test_lorenz_state_matches_scipy_solver():
    m = model_classic_lorenz()
    x0 = np.array([1.0, 1.0, 20.0])
    orbit = integrate(m, x0, 1.0, 1e-3)
    ref = scipy.integrate.solve_ivp(lambda t, x: m.X(x), (0, 1.0), x0, rtol=1e-12, atol=1e-12)
    assert np.allclose(orbit.states[-1], ref.y[:, -1], rtol=1e-6, atol=1e-6)


def test_wedge_fundamentals_are_compounds_on_lorenz():
    orbit = integrate(model_classic_lorenz(), np.array([1.0, 1.0, 20.0]), 2.0, 1e-3,
                      with_wedge=True)
    W = orbit.wedge_lex()
    for k in (len(orbit) // 2, len(orbit) - 1):
        C = compound(orbit.fundamentals[k], 2)
        assert np.max(np.abs(W[k] - C)) <= 1e-6 * np.max(np.abs(C))


def test_liouville_and_rebasing_on_lorenz():
    m = model_classic_lorenz()
    orbit = integrate(m, np.array([1.0, 1.0, 20.0]), 4.0, 1e-3)
    assert orbit.liouville_residual() < 1e-6
    half = (len(orbit) - 1) // 2
    later = integrate(m, orbit.states[half], 2.0, 1e-3)
    rebased = later.fundamentals[-1] @ orbit.fundamentals[half]
    assert np.max(np.abs(rebased - orbit.fundamentals[-1])) < 1e-6 * np.linalg.norm(
        orbit.fundamentals[-1], 2)


def test_propagator_between_nodes():
    m = model_classic_lorenz()
    orbit = integrate(m, np.array([1.0, 1.0, 20.0]), 1.0, 1e-3)
    later = integrate(m, orbit.states[500], 0.5, 1e-3)
    assert np.allclose(orbit.propagator(500, len(orbit) - 1), later.fundamentals[-1],
                       rtol=1e-7, atol=1e-7)


def test_steps_reproduce_fundamentals():
    orbit = integrate(model_classic_lorenz(), np.array([1.0, 1.0, 20.0]), 0.5, 1e-3)
    Phi = np.eye(3)
    for R in orbit.steps:
        Phi = R @ Phi
    assert np.allclose(Phi, orbit.fundamentals[-1], rtol=1e-12)
    assert orbit.steps.shape[0] == len(orbit) - 1


def test_rk4_convergence_order():
    m = model_linear_saddle(*SADDLE)
    x0 = np.array([1.0, 1.0, 1.0])
    exact = np.exp(np.array(SADDLE) * 1.0) * x0
    err = [np.linalg.norm(integrate(m, x0, 1.0, h, liouville_tol=1.0).states[-1] - exact)
           for h in (0.04, 0.02)]
    assert 12.0 <= err[0] / err[1] <= 20.0


def test_region_exit_truncates_with_notice():
    m = model_geometric_lorenz()
    orbit = integrate(m, np.array([2.5, 0.3, 0.5]), 2.0, 1e-3)
    assert orbit.truncated and "left the model region" in orbit.notice
    assert m.region.contains(orbit.states[-1])
    assert orbit.steps.shape[0] == len(orbit) - 1


def test_coarse_step_is_rejected():
    with pytest.raises(StepSizeError):
        integrate(model_classic_lorenz(), np.array([1.0, 1.0, 20.0]), 2.0, 0.02)


def test_step_divides_horizon():
    orbit = integrate(model_linear_saddle(*SADDLE), np.ones(3), 1.0, 0.3, liouville_tol=1.0)
    assert orbit.step == pytest.approx(0.25)
    assert orbit.times[-1] == pytest.approx(1.0)


def test_orbit_csv_round_trip(tmp_path):
    orbit = integrate(model_classic_lorenz(), np.array([1.0, 1.0, 20.0]), 0.1, 1e-2,
                      with_wedge=True)
    path = tmp_path / "orbit.csv"
    write_orbit_csv(orbit, path)
    back = read_orbit_csv(path)
    assert np.array_equal(back["t"], orbit.times)
    assert np.array_equal(back["states"], orbit.states)
    assert np.array_equal(back["fundamentals"], orbit.fundamentals)
    assert np.array_equal(back["wedge"], orbit.wedge_fundamentals)


def test_config_builds_models():
    m = model_from_config(parse_kv("model = linear_saddle\nspectrum = 2, -4, -1\n"))
    assert m.params["spectrum"] == (2.0, -4.0, -1.0)
    m = model_from_config(parse_kv("model = linear\nmatrix = 1,0;0,-1\n"))
    assert m.dim == 2
    m = model_from_config(parse_kv("model = geometric_lorenz  # comment\nrho = 0.1\n"))
    assert m.params["rho"] == 0.1


@pytest.mark.parametrize("text, line", [
    ("model = linear_saddle\nthis line is bad\n", 2),
    ("model = linear_saddle\nspectrum = 1, x, 2\n", 2),
    ("# header\n\nmodel = unicorn\n", 3),
    ("model = linear_saddle\nspectrum = 1, -0.5, -3\n", 1),
    ("model = linear_saddle\nmodel = linear\n", 2),
])
def test_config_errors_carry_line_numbers(text, line):
    with pytest.raises(ConfigError) as info:
        model_from_config(parse_kv(text))
    assert info.value.line == line
    assert f"line {line}:" in str(info.value)


def test_config_requires_model():
    with pytest.raises(ConfigError):
        model_from_config(parse_kv("rho = 0.1\n"))


def test_box_grid():
    pts = Box((0.0, 0.0), (1.0, 2.0)).grid(3)
    assert pts.shape == (9, 2)
    assert Box((0.0,), (1.0,)).contains([1.0])


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 30), st.integers(0, 2**32 - 1))
def test_simpson_exact_on_quadratics_nonuniform(panels, seed):
    rng = np.random.default_rng(seed)
    t = np.cumsum(np.r_[0.0, rng.uniform(0.05, 0.5, 2 * panels)])
    f = 3 * t ** 2 - 2 * t + 1
    exact = t[-1] ** 3 - t[-1] ** 2 + t[-1]
    assert simpson(t, f) == pytest.approx(exact, rel=1e-10)


def test_simpson_exact_on_cubics_uniform_grid():
    t = np.linspace(0.0, 2.0, 11)
    assert simpson(t, t ** 3 - t) == pytest.approx(4.0 - 2.0, abs=1e-12)
    assert simpson(t, t ** 3) == pytest.approx(scipy.integrate.simpson(t ** 3, x=t), abs=1e-12)


def test_cumulative_simpson_endpoints():
    t = np.linspace(0.0, 1.0, 101)
    c = cumulative_simpson(t, np.exp(t))
    assert c[0] == 0.0
    assert c[-1] == pytest.approx(math.e - 1.0, abs=1e-9)
    assert np.allclose(c, np.exp(t) - 1.0, atol=1e-5)
