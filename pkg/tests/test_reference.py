import math
import time

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import brentq

from spbc.boundary import membership_A, membership_B
from spbc.dynamics import MassModel, accelerations
from spbc.errors import DegenerateOmega, SegmentCollision
from spbc.reference import (A_TEST, homographic_action, homographic_action_equal_mass,
                            homographic_action_for_omega, homographic_action_scaled,
                            homographic_family, omega_from_theta, scan_region,
                            segment_inverse_distance_integral,
                            segment_inverse_distance_quadrature, solve_rhombus_radii,
                            test_path_action)

PI = math.pi
HOMOGRAPHIC = [(0.78, 5.3497), (0.77, 5.2216), (1.11, 6.6722), (1.12, 6.5576)]
TEST_PATH = [(0.78, 5.3444), (0.77, 5.4085), (1.11, 6.5124), (1.12, 6.6465)]


def test_omega_examples():
    assert omega_from_theta(0.8 * PI) == pytest.approx(0.3 * PI)
    assert omega_from_theta(PI / 2) == 0
    assert omega_from_theta(1.5 * PI) == 0
    assert omega_from_theta(1.2 * PI, T=2) == pytest.approx(0.15 * PI)


def test_equal_mass_radii_closed_form():
    w = 0.3 * PI
    r1, r2 = solve_rhombus_radii(w, 1.0, 1.0)
    expected = ((2 * math.sqrt(2) + 1) / (4 * w * w)) ** (1 / 3)
    assert r1 == pytest.approx(expected, rel=1e-13) and r2 == pytest.approx(expected, rel=1e-13)


def test_radii_scaling():
    r = np.array(solve_rhombus_radii(0.4, 1.0, 2.5))
    r8 = np.array(solve_rhombus_radii(3.2, 1.0, 2.5))
    assert np.allclose(r8, r / 4, rtol=1e-12)


def _bisection_radii(w, m1, m2):
    # inner: r2 from the first balance at fixed r1; outer: r1 from the second
    def r2_of(r1):
        f = lambda r2: -w * w + 2 * m2 / (r1 * r1 + r2 * r2) ** 1.5 + m1 / (4 * r1 ** 3)
        return brentq(f, 1e-6, 1e6, xtol=1e-15, rtol=1e-15)

    def g(r1):
        r2 = r2_of(r1)
        return -w * w + 2 * m1 / (r1 * r1 + r2 * r2) ** 1.5 + m2 / (4 * r2 ** 3)

    lo = (m1 / (4 * w * w)) ** (1 / 3) * (1 + 1e-6)    # r2_of needs m1/(4 r1^3) < w^2
    hi = ((2 * m2 + m1 / 4) / (w * w)) ** (1 / 3) * (1 - 1e-6)   # r2 > 0 needs this
    r1 = brentq(g, lo, hi, xtol=1e-15, rtol=1e-15)
    return r1, r2_of(r1)


def test_radii_against_bisection_oracle():
    got = solve_rhombus_radii(0.3 * PI, 1.0, 2.0)
    assert np.allclose(got, _bisection_radii(0.3 * PI, 1.0, 2.0), rtol=0, atol=1e-10)


def test_degenerate_omega():
    with pytest.raises(DegenerateOmega):
        solve_rhombus_radii(0.0, 1, 1)
    with pytest.raises(DegenerateOmega):
        homographic_action(PI / 2, 1.0)


@pytest.mark.parametrize("t,value", HOMOGRAPHIC)
def test_homographic_actions(t, value):
    assert homographic_action(t * PI, 1.0) == pytest.approx(value, abs=1e-3)


def test_homographic_action_mu2():
    assert homographic_action(0.8 * PI, 2.0) == pytest.approx(10.52, abs=1e-2)
    assert homographic_action_for_omega(0.7 * PI, 2.0) == pytest.approx(18.51, abs=1e-1)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.52, 0.98).filter(lambda x: abs(x - 0.5) > 0.01) | st.floats(1.02, 1.48))
def test_equal_mass_closed_form(t):
    assert homographic_action(t * PI, 1.0) == pytest.approx(homographic_action_equal_mass(t * PI), rel=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.55, 0.95), st.floats(0.55, 0.95), st.floats(0.2, 3.0))
def test_scaling_law(t0, t1, mu):
    k = t1 / t0
    assert homographic_action_scaled(t0 * PI, k, mu) == pytest.approx(homographic_action(t1 * PI, mu), rel=1e-10)


def test_scaling_examples():
    assert homographic_action_scaled(0.78 * PI, 1.0, 1.3) == homographic_action(0.78 * PI, 1.3)
    assert homographic_action_scaled(0.78 * PI, 0.9 / 0.78, 1.0) == pytest.approx(
        homographic_action(0.9 * PI, 1.0), rel=1e-10)
    ratios = [homographic_action(t * PI, 1.0) / omega_from_theta(t * PI) ** (2 / 3)
              for t in (0.6, 0.8, 1.2, 1.4)]
    assert np.ptp(ratios) < 1e-12


@pytest.mark.parametrize("theta,mu", [(0.8 * PI, 2.0), (1.2 * PI, 0.5), (0.7 * PI, 1.0)])
def test_homographic_family_is_a_solution_with_spbc_ends(theta, mu):
    fam = homographic_family(theta, mu)
    m = fam.masses
    assert membership_A(fam.positions(0.0), theta, m).member
    assert membership_B(fam.positions(1.0), m).member
    q = fam.positions(0.3)
    # rigid rotation: acceleration = -omega^2 q
    assert np.allclose(accelerations(q, m), -fam.omega ** 2 * q, atol=1e-10)
    assert fam.action() == pytest.approx(homographic_action(theta, mu), rel=1e-12)


@pytest.mark.parametrize("t,value", TEST_PATH)
def test_test_path_actions(t, value):
    assert test_path_action(t * PI, 1.0, A_TEST[1.0]) == pytest.approx(value, abs=1e-3)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 100_000))
def test_closed_form_matches_quadrature(seed):
    rng = np.random.default_rng(seed)
    d0, d1 = rng.normal(size=2), rng.normal(size=2)
    assert segment_inverse_distance_integral(d0, d1) == pytest.approx(
        segment_inverse_distance_quadrature(d0, d1), rel=1e-10, abs=1e-10)


def test_near_collinear_branches():
    d0, d1 = np.array([1.0, 0.0]), np.array([3.0, 1e-9])
    assert segment_inverse_distance_integral(d0, d1) == pytest.approx(math.log(3) / 2, rel=1e-8)
    assert segment_inverse_distance_integral([1.0, 0], [1.0, 0]) == 1.0
    with pytest.raises(SegmentCollision):
        segment_inverse_distance_integral([-1.0, 0.0], [1.0, 0.0])


def test_stationary_path_action_is_potential():
    # at theta = 3pi/2 the start and end rhombi coincide for a = (a1, 0, a3, a3, 0, a1);
    # the evaluator does not enforce admissibility, so the degenerate case is reachable
    from spbc.boundary import build_qend, build_qstart
    from spbc.dynamics import potential_energy
    m = MassModel()
    a = np.array([0.7, 0.0, 1.2, 1.2, 0.0, 0.7])
    q0 = build_qstart(*a[:3], 1.5 * PI, m)
    assert np.allclose(q0, build_qend(*a[3:], m), atol=1e-15)
    assert test_path_action(1.5 * PI, 1.0, a) == pytest.approx(potential_energy(q0, m), rel=1e-12)


def test_region_transitions_mu1():
    scan = scan_region(theta_grid=np.arange(0.6, 1.4001, 0.01) * PI, mu_grid=[1.0])
    brackets = scan.intervals()[0][1]
    lows = [(lo, hi) for lo, hi, _ in brackets]
    assert any(abs(lo - 0.77) < 1e-9 and abs(hi - 0.78) < 1e-9 for lo, hi in lows)
    assert any(abs(lo - 1.11) < 1e-9 and abs(hi - 1.12) < 1e-9 for lo, hi in lows)
    assert not scan.mask[0][np.argmin(np.abs(scan.theta_grid - PI))]


def test_full_window_scan_fast():
    t0 = time.perf_counter()
    scan = scan_region()
    assert time.perf_counter() - t0 < 60
    assert scan.mask.shape == (141, 161)
    assert "mu" in scan.to_csv().splitlines()[0]


def test_scan_validation():
    with pytest.raises(ValueError):
        scan_region(theta_grid=[], mu_grid=[1.0])
    with pytest.raises(ValueError):
        scan_region(a_test_list=[])
