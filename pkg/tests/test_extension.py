import io
import math
from math import gcd

import numpy as np
import pytest

from spbc.boundary import RotationAngle, rotation_matrix
from spbc.dynamics import MassModel, PhaseState, integrate
from spbc.errors import ExcludedAngle, NegativeTime, VerificationFailure
from spbc.extension import (DOUBLE, NON_CHOREOGRAPHIC, QUASI_PERIODIC, SIMPLE,
                            ExtensionOperators, OrbitClassification, OrbitExtension,
                            classify, curve_csv, curve_table, extend_state,
                            matching_residuals, rationalize_theta, verify_classification)
from spbc.fixtures import FIXTURES
from spbc.minimize import minimize_outer, refine_to_seed
from spbc.reference import A_TEST

from conftest import refined

PI = math.pi
SYM = A_TEST[1.0]
ASYM = (0.6, 1.1, 0.5, 0.7, 1.0, 0.55)


@pytest.fixture(scope="module")
def ext1():
    fx = FIXTURES[1]
    seed, _ = refined(1)
    return OrbitExtension(seed, fx.theta, fx.masses)


def test_operators_are_involutions():
    ops = ExtensionOperators(0.8 * PI)
    assert ops.sigma_power(2) == (0, 1, 2, 3)
    assert ops.sigma_power(1) == (2, 3, 0, 1)
    assert np.allclose(ops.B @ ops.B, np.eye(2))
    assert np.allclose(ops.rotation(1), rotation_matrix(-1.6 * PI))


def test_time_zero_is_seed(ext1):
    s = ext1(0.0)
    assert np.array_equal(s.to_vector(), ext1.seed.to_vector())


def test_published_fixture_closes_under_extension():
    fx = FIXTURES[1]
    s0 = fx.state()
    end = extend_state(s0, fx.theta, fx.period, fx.masses)
    assert np.max(np.abs(end.q - s0.q)) < 1e-5


def test_matches_direct_integration_on_first_arc(ext1):
    fx = FIXTURES[1]
    direct = integrate(ext1.seed, 0.7, fx.masses).state(-1)
    assert np.allclose(ext1(0.7).to_vector(), direct.to_vector(), atol=1e-10)


@pytest.mark.parametrize("t0", [1.0, 2.0, 4.0])
def test_continuity_at_block_joins(ext1, t0):
    eps = 1e-9
    a, b = ext1(t0 - eps).to_vector(), ext1(t0 + eps).to_vector()
    assert np.max(np.abs(a - b)) < 1e-8


def test_extension_is_a_solution_across_T(ext1):
    # integrating straight through t = T reproduces the reflected image
    fx = FIXTURES[1]
    direct = integrate(ext1.seed, 1.6, fx.masses).state(-1)
    assert np.allclose(ext1(1.6).to_vector(), direct.to_vector(), atol=1e-8)


@pytest.mark.parametrize("t", [0.0, 0.3, 1.0, 1.45, 2.0])
def test_sigma_squared_collapses_to_rotation(ext1, t):
    R = rotation_matrix(-4 * ext1.theta)
    later, now = ext1(t + 4.0), ext1(t)
    assert np.allclose(later.q, now.q @ R, atol=1e-12)
    assert np.allclose(later.v, now.v @ R, atol=1e-12)


@pytest.mark.parametrize("t", [0.25, 1.3, 3.7, 9.9])
def test_period_consistency(ext1, t):
    assert np.allclose(ext1(t).to_vector(), ext1(t + 20.0).to_vector(), atol=1e-5)


def test_negative_time():
    fx = FIXTURES[1]
    seed, _ = refined(1)
    with pytest.raises(NegativeTime):
        extend_state(seed, fx.theta, -1.0, fx.masses)
    ext = OrbitExtension(seed, fx.theta, fx.masses, period=20.0)
    assert np.allclose(ext(-1.0).to_vector(), ext(19.0).to_vector())


@pytest.mark.parametrize("key", sorted(FIXTURES))
def test_matching_residuals_published(key):
    fx = FIXTURES[key]
    assert matching_residuals(fx.state(), fx.theta, fx.masses).max_residual < 1e-4


@pytest.mark.parametrize("key", sorted(FIXTURES))
def test_matching_residuals_refined(key):
    fx = FIXTURES[key]
    seed, _ = refined(key)
    rep = matching_residuals(seed, fx.theta, fx.masses)
    assert rep.max_residual < 1e-9
    assert set(rep.as_dict()) == {"end", "rotation", "start", "max"}


def test_matching_residuals_random_state(rng):
    fx = FIXTURES[1]
    s = PhaseState(fx.state().q, rng.normal(size=(4, 2))).normalized(fx.masses)
    assert matching_residuals(s, fx.theta, fx.masses).max_residual > 1e-2


def test_rationalize_examples():
    assert rationalize_theta(0.8 * PI, 100, 1e-12) == (4, 5)
    assert rationalize_theta(2.43, 50, 1e-9) is None
    assert rationalize_theta(7 * PI / 9 + 1e-13, 20, 1e-9) == (7, 9)
    assert rationalize_theta(22 * PI / 23) == (22, 23)


def _expected(P, Q, mu, shapes_equal):
    """Decision table, written out branch by branch."""
    if Q % 2 == 0:
        return NON_CHOREOGRAPHIC, 2 * Q, Q // 2, None
    table = {
        (False, 0, False): (DOUBLE, "1"), (False, 0, True): (DOUBLE, "1"),
        (False, 1, False): (DOUBLE, "1"), (False, 1, True): (DOUBLE, "1"),
        (True, 1, False): (DOUBLE, "2"), (True, 1, True): (DOUBLE, "2"),
        (True, 0, False): (DOUBLE, "4"),
        (True, 0, True): (SIMPLE, "3A" if (Q - 1) // 2 in range(1, 100, 2) else "3B"),
    }
    kind, case = table[(mu == 1.0, P % 2, shapes_equal)]
    return kind, 4 * Q, Q, case


def test_classification_truth_table():
    checked = 0
    for Q in range(1, 26):
        for P in range(1, 2 * Q):
            if gcd(P, Q) != 1 or P * 2 in (Q, 2 * Q, 3 * Q) or P == Q:
                continue
            for mu in (1.0, 0.8):
                for a in (SYM, ASYM):
                    angle = RotationAngle.from_rational(P, Q)
                    c = classify(angle, mu, a)
                    kind, per, sides, case = _expected(P, Q, mu, a == SYM)
                    assert (c.kind, c.period, c.sides) == (kind, per, sides), (P, Q, mu, a)
                    if case is not None:
                        assert c.case == case
                    assert c.beyond_pi == (P > Q)
                    if kind == SIMPLE:
                        assert c.order == ((1, 2, 3, 4) if case == "3A" else (1, 4, 3, 2))
                    checked += 1
    assert checked > 1000


@pytest.mark.parametrize("P,Q,mu,a,kind,order", [
    (3, 4, 0.8, SYM, NON_CHOREOGRAPHIC, None),
    (5, 6, 1.0, SYM, NON_CHOREOGRAPHIC, None),
    (7, 8, 1.5, SYM, NON_CHOREOGRAPHIC, None),
    (6, 7, 0.8, SYM, DOUBLE, None),
    (7, 9, 0.8, SYM, DOUBLE, None),
    (18, 19, 1.4, SYM, DOUBLE, None),
    (7, 9, 1.0, SYM, DOUBLE, None),
    (13, 15, 1.0, SYM, DOUBLE, None),
    (23, 21, 1.0, SYM, DOUBLE, None),
    (6, 7, 1.0, SYM, SIMPLE, (1, 2, 3, 4)),
    (16, 19, 1.0, SYM, SIMPLE, (1, 2, 3, 4)),
    (22, 23, 1.0, SYM, SIMPLE, (1, 2, 3, 4)),
    (8, 9, 1.0, SYM, SIMPLE, (1, 4, 3, 2)),
    (10, 13, 1.0, SYM, SIMPLE, (1, 4, 3, 2)),
    (22, 21, 1.0, SYM, SIMPLE, (1, 4, 3, 2)),
    (6, 7, 1.0, ASYM, DOUBLE, None),
    (8, 9, 1.0, ASYM, DOUBLE, None),
    (12, 13, 1.0, ASYM, DOUBLE, None),
])
def test_figure_assignments(P, Q, mu, a, kind, order):
    c = classify(RotationAngle.from_rational(P, Q), mu, a)
    assert c.kind == kind
    assert c.order == order


def test_classify_examples():
    c = classify(5 * PI / 6, 1.0, SYM)
    assert (c.kind, c.period, c.sides) == (NON_CHOREOGRAPHIC, 12.0, 3)
    assert classify(2.43, 0.5).kind == QUASI_PERIODIC
    assert classify(RotationAngle.from_rational(12, 11), 1.5).beyond_pi
    with pytest.raises(ValueError):
        classify(RotationAngle.from_rational(4, 5), 1.0)     # case 3 vs 4 needs shapes


@pytest.mark.parametrize("theta", [PI / 2, PI, 3 * PI / 2])
def test_classify_excluded(theta):
    with pytest.raises(ExcludedAngle):
        classify(theta, 1.0, SYM)


def test_simple_chase_relations():
    c = classify(RotationAngle.from_rational(4, 5), 1.0, SYM)
    assert c.chase == ((1, 4, 5.0), (4, 3, 5.0), (3, 2, 5.0), (2, 1, 5.0))
    assert c.curve_ids() == (0, 0, 0, 0)
    assert "1->4->3->2" in c.describe()


def test_verify_fixture_one():
    fx = FIXTURES[1]
    seed, _ = refined(1)
    c = classify(fx.angle, fx.mu, SYM)
    assert c.kind == SIMPLE and c.period == 20.0
    rep = verify_classification(seed, c, fx.theta, fx.masses)
    assert rep.passed and rep.closure < 1e-8
    assert rep.minimality > 1e-2


def test_verify_fixture_two():
    fx = FIXTURES[2]
    seed, _ = refined(2)
    c = classify(fx.angle, fx.mu)
    assert c.kind == DOUBLE and c.case == "1"
    rep = verify_classification(seed, c, fx.theta, fx.masses)
    assert rep.passed
    assert rep.chase["q1(t+10)=q3(t)"] < 1e-4


def test_verify_rejects_wrong_relation():
    fx = FIXTURES[1]
    seed, _ = refined(1)
    wrong = OrbitClassification(SIMPLE, 4, 5, 20.0, 5, "3A",
                                ((1, 2, 5.0), (2, 3, 5.0), (3, 4, 5.0), (4, 1, 5.0)), (1, 2, 3, 4))
    with pytest.raises(VerificationFailure):
        verify_classification(seed, wrong, fx.theta, fx.masses)
    with pytest.raises(ValueError):
        verify_classification(seed, OrbitClassification(QUASI_PERIODIC), fx.theta, fx.masses)


def test_quasi_periodic_orbit_does_not_close():
    masses = MassModel.from_mu(0.5)
    res = minimize_outer(2.43, masses)
    seed, _ = refine_to_seed(res, masses)
    ext = OrbitExtension(seed, 2.43, masses)
    dist = [np.max(np.abs(ext(t).q - seed.q)) for t in np.arange(1.0, 200.0, 0.25)]
    assert min(dist) > 1e-2


def test_curve_table_and_csv(ext1):
    c = classify(RotationAngle.from_rational(4, 5), 1.0, SYM)
    rows = curve_table(ext1, c, 20.0, 41)
    assert len(rows) == 41 * 4
    assert {r[3] for r in rows} == set(range(5))
    text = curve_csv(rows)
    data = np.loadtxt(io.StringIO(text), delimiter=",", skiprows=1)
    assert text.splitlines()[0] == "t,body,curve_id,side_id,x,y,vx,vy"
    assert data.shape == (164, 8)
    single = curve_table(ext1, c, 0.0, 10)
    assert len(single) == 4 and all(r[0] == 0.0 for r in single)
    with pytest.raises(NegativeTime):
        curve_table(ext1, c, -1.0, 10)
