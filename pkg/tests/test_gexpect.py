import numpy as np
import pytest
from scipy.special import zeta

from reflected_gbsde.errors import NumericalFailure, PreconditionError, RefusalError
from reflected_gbsde.gexpect import (
    Lattice,
    VolBand,
    bdg_check,
    brute_force_expectation,
    doob_check,
    doob_series_constant,
    g_expectation,
    g_value,
    jensen_check,
    running_functional_expectation,
    solve_g_heat,
    step_backward,
)

BAND = VolBand(0.5, 1.0)


@pytest.fixture(scope="module")
def lat200():
    return Lattice.for_band(BAND, 1.0, 200)


# --- band and lattice -------------------------------------------------------


@pytest.mark.parametrize("lo, hi", [(0.0, 1.0), (-0.1, 1.0), (1.0, 0.5), (float("nan"), 1.0)])
def test_band_rejects_degenerate(lo, hi):
    with pytest.raises(PreconditionError):
        VolBand(lo, hi)


def test_band_collapse_flag():
    assert VolBand(0.2, 0.2).collapsed
    assert not BAND.collapsed


def test_lattice_cfl_enforced_at_construction():
    with pytest.raises(NumericalFailure, match="CFL"):
        Lattice(horizon=1.0, n_steps=10, dx=0.1, half_width=100, sigma_max=1.0)


def test_lattice_domain_truncation_rule():
    with pytest.raises(PreconditionError, match="narrow"):
        Lattice(horizon=1.0, n_steps=100, dx=0.1, half_width=10, sigma_max=1.0)


def test_for_band_geometry(lat200):
    assert lat200.n_nodes == 2 * lat200.half_width + 1
    assert BAND.var_high * lat200.dt / lat200.dx**2 == pytest.approx(0.9)
    assert lat200.half_width * lat200.dx >= 6.0 * BAND.sigma_high
    assert lat200.x[lat200.origin] == 0.0


# --- G and one step ---------------------------------------------------------


@pytest.mark.parametrize("a, expected", [(1.0, 0.5), (0.0, 0.0), (-1.0, -0.125)])
def test_g_value(a, expected):
    assert g_value(a, BAND) == expected


def _tiny(dt_over_dx2=1.0):
    # dx = 0.1, dt = 0.01: sigma_high^2 dt / dx^2 = 1
    return Lattice(horizon=0.01, n_steps=1, dx=0.1, half_width=1, sigma_max=1.0, coverage_factor=0)


def test_step_backward_hand_example():
    values, policy = step_backward(np.array([0.0, 0.0, 1.0]), BAND, _tiny())
    assert values[1] == pytest.approx(0.5, abs=1e-15)
    assert policy[1] == BAND.var_high


def test_step_backward_constant_and_linear():
    lat = Lattice.for_band(BAND, 1.0, 20)
    c = np.full(lat.n_nodes, 3.25)
    out, policy = step_backward(c, BAND, lat)
    assert np.array_equal(out, c)
    assert np.all((policy >= BAND.var_low) & (policy <= BAND.var_high))
    line = 2.0 * lat.x - 1.0
    out, _ = step_backward(line, BAND, lat)
    np.testing.assert_allclose(out, line, atol=1e-14)


def test_step_backward_checks_shape_and_finiteness():
    lat = Lattice.for_band(BAND, 1.0, 20)
    with pytest.raises(PreconditionError):
        step_backward(np.zeros(3), BAND, lat)
    bad = np.zeros(lat.n_nodes)
    bad[4] = np.nan
    with pytest.raises(NumericalFailure, match="index 4"):
        step_backward(bad, BAND, lat)


# --- expectations -----------------------------------------------------------


def test_second_moment(lat200):
    assert abs(g_expectation(lambda x: x**2, BAND, lat200) - 1.0) <= 5 * lat200.dt


def test_first_moment_vanishes(lat200):
    assert abs(g_expectation(lambda x: x, BAND, lat200)) <= 1e-12


def test_negative_second_moment(lat200):
    assert abs(g_expectation(lambda x: -(x**2), BAND, lat200) + 0.25) <= 5 * lat200.dt


def _bf_lattice(n):
    return Lattice.for_band(BAND, 1.0, n, coverage_factor=0.0, min_half_width=n + 1)


@pytest.mark.parametrize("n", [1, 2, 3, 4, 5])
@pytest.mark.parametrize(
    "payoff",
    [lambda x: x**2, lambda x: -(x**2), lambda x: np.abs(x), lambda x: np.cos(3 * x), lambda x: np.full(np.shape(x), 2.5)],
    ids=["square", "neg-square", "abs", "cos", "const"],
)
def test_brute_force_matches_engine(n, payoff):
    lat = _bf_lattice(n)
    assert abs(brute_force_expectation(payoff, BAND, lat) - g_expectation(payoff, BAND, lat)) <= 1e-12


def test_brute_force_closed_forms():
    lat = _bf_lattice(3)
    assert brute_force_expectation(lambda x: x**2, BAND, lat) == pytest.approx(1.0, abs=1e-14)
    assert brute_force_expectation(lambda x: -(x**2), BAND, lat) == pytest.approx(-0.25, abs=1e-14)


def test_brute_force_refuses_large_trees():
    with pytest.raises(RefusalError):
        brute_force_expectation(lambda x: x, BAND, _bf_lattice(6))


def test_collapsed_band_is_linear():
    band = VolBand(0.7, 0.7)
    for a in (-2.0, -0.3, 0.0, 0.4, 5.0):
        assert g_value(a, band) + g_value(-a, band) == 0.0
    lat = Lattice.for_band(band, 1.0, 100)
    u = g_expectation(lambda x: np.sin(x) + x**2, band, lat)
    v = -g_expectation(lambda x: -(np.sin(x) + x**2), band, lat)
    assert u == pytest.approx(v, abs=1e-13)


def test_policy_surface_in_band(lat200):
    _, policy = solve_g_heat(np.abs(lat200.x) - lat200.x**2, BAND, lat200)
    assert set(np.unique(policy)) <= {BAND.var_low, BAND.var_high}


# --- running functional -----------------------------------------------------


def test_running_functional_zero_increments(lat200):
    zero = np.zeros((lat200.n_steps + 1, lat200.n_nodes))
    assert running_functional_expectation(zero, lat200, "sum", lambda s: s + 1.0, band=BAND) == 1.0


def test_running_functional_constant_sum():
    lat = Lattice.for_band(BAND, 1.0, 40)
    a = np.full((lat.n_steps + 1, lat.n_nodes), 0.5)
    val = running_functional_expectation(a, lat, "sum", band=BAND)
    assert val == pytest.approx(0.5 * (lat.n_steps + 1), rel=1e-12)


def test_running_functional_argument_checks(lat200):
    a = np.zeros((lat200.n_steps + 1, lat200.n_nodes))
    with pytest.raises(PreconditionError):
        running_functional_expectation(a, lat200, "sum")
    with pytest.raises(PreconditionError):
        running_functional_expectation(a, lat200, "mean", band=BAND)
    with pytest.raises(PreconditionError):
        running_functional_expectation(-np.ones_like(a), lat200, "sum", band=BAND)


# --- inequality checks ------------------------------------------------------


@pytest.mark.parametrize("s", [1.01, 1.2, 1.5, 2.0, 3.0])
def test_doob_series_against_zeta(s):
    assert doob_series_constant(s) == pytest.approx(zeta(s), abs=1e-10)


def test_doob_series_needs_s_above_one():
    with pytest.raises(PreconditionError):
        doob_series_constant(1.0)


def test_jensen_affine_is_equality(lat200):
    r = jensen_check(lambda u: 2.0 * u + 1.0, lambda x: x**2, BAND, lat200)
    assert r.passed and r.lhs == pytest.approx(r.rhs, abs=1e-9)


def test_jensen_negative_square(lat200):
    r = jensen_check(lambda u: -(u**2), lambda x: x, BAND, lat200)
    assert r.passed
    assert r.lhs == pytest.approx(-0.25, abs=5 * lat200.dt)
    assert r.rhs == pytest.approx(0.0, abs=1e-12)
    assert r.details["h_nondecreasing"] is False


def test_jensen_truncated_identity(lat200):
    r = jensen_check(lambda u: np.minimum(u, 1.0), lambda x: x**2, BAND, lat200)
    assert r.passed and r.details["h_nondecreasing"]


def test_jensen_refuses_convex_h(lat200):
    with pytest.raises(PreconditionError, match="concav"):
        jensen_check(lambda u: u**2, lambda x: x, BAND, lat200)


@pytest.fixture(scope="module")
def lat60():
    return Lattice.for_band(BAND, 1.0, 60)


def test_doob_constant(lat60):
    r = doob_check(lambda x: np.full(np.shape(x), 1.5), 2.0, 1.0, 1.25, BAND, lat60)
    assert r.lhs == pytest.approx(1.5**2, rel=1e-9)
    assert r.passed and r.rhs > r.details["gamma_star"] * 1.5**2


@pytest.mark.parametrize(
    "payoff, alpha, delta, gamma",
    [(lambda x: x**2, 2.0, 1.0, 1.25), (lambda x: np.abs(x), 2.0, 2.0, 1.5)],
    ids=["square", "abs"],
)
def test_doob_pass(lat60, payoff, alpha, delta, gamma):
    r = doob_check(payoff, alpha, delta, gamma, BAND, lat60)
    assert r.passed
    assert r.details["conditional_power"] <= r.lhs + 1e-9


@pytest.mark.parametrize("gamma", [1.0, 1.5, 2.5])
def test_doob_gamma_range(lat60, gamma):
    with pytest.raises(PreconditionError):
        doob_check(lambda x: x, 2.0, 1.0, gamma, BAND, lat60)


def test_bdg_examples(lat200):
    r = bdg_check(lambda t: 1.0, BAND, lat200)
    assert r.passed and r.value == pytest.approx(1.0, abs=1e-9)
    r = bdg_check(lambda t: 0.0, BAND, lat200)
    assert r.value == 0.0 and r.passed
    r = bdg_check(lambda t: 1.0 if t < 0.5 else 0.0, BAND, lat200)
    assert r.passed and r.value == pytest.approx(0.5, abs=1e-9)


def test_bdg_rejects_random_integrand(lat200):
    with pytest.raises(PreconditionError, match="deterministic"):
        bdg_check(lambda t, x: x, BAND, lat200)
