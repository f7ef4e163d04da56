import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spbc.boundary import (BoundaryParams, RotationAngle, build_qend, build_qstart,
                           check_admissible_angle, membership_A, membership_B,
                           projector_A, projector_B, rotation_matrix)
from spbc.dynamics import MassModel, integrate
from spbc.errors import ExcludedAngle
from spbc.fixtures import FIXTURES
from spbc.reference import A_TEST

params = st.floats(-3, 3, allow_nan=False)
mus = st.floats(0.2, 3.0)
thetas = st.floats(0.05, 2 * math.pi - 0.05)


def test_qend_example():
    q = build_qend(1, 1, 2, MassModel())
    assert np.allclose(q, [[1, 1], [0, -2], [-1, 1], [0, 0]], atol=1e-15)


def test_qstart_unrotated_layout():
    m = MassModel.from_mu(2.0)
    q = build_qstart(0.5, 0.7, 0.3, 0.0, m)
    assert np.allclose(q[0], [0, -0.3])
    assert np.allclose(q[1], [-0.5, 0.7]) and np.allclose(q[3], [0.5, 0.7])
    assert q[2, 0] == 0


@settings(max_examples=50, deadline=None)
@given(params, params, params, thetas, mus)
def test_start_template_properties(a1, a2, a3, theta, mu):
    m = MassModel.from_mu(mu)
    q = build_qstart(a1, a2, a3, theta, m)
    assert np.allclose(m.array @ q, 0, atol=1e-13)
    base = q @ rotation_matrix(-theta)
    # bodies 1, 3 on the symmetry axis; 2 and 4 mirror images across it
    assert abs(base[0, 0]) < 1e-13 and abs(base[2, 0]) < 1e-13
    assert np.allclose(base[1], base[3] * [-1, 1], atol=1e-13)
    mem = membership_A(q, theta, m)
    assert mem.member
    assert np.allclose(mem.params, [a1, a2, a3], atol=1e-12)


@settings(max_examples=50, deadline=None)
@given(params, params, params, mus)
def test_end_template_properties(a4, a5, a6, mu):
    m = MassModel.from_mu(mu)
    q = build_qend(a4, a5, a6, m)
    assert np.allclose(m.array @ q, 0, atol=1e-13)
    mem = membership_B(q, m)
    assert mem.member
    assert np.allclose(mem.params, [a4, a5, a6], atol=1e-12)


def test_generic_configuration_rejected(rng):
    m = MassModel()
    q = rng.normal(size=(4, 2))
    assert not membership_A(q, 0.8 * math.pi, m).member
    assert not membership_B(q, m).member
    assert not membership_B(build_qstart(0.6, 1.1, 0.5, 0.8 * math.pi, m), m).member


def test_projectors_are_idempotent():
    m = MassModel.from_mu(1.3)
    for P in (projector_A(0.8 * math.pi, m), projector_B(m)):
        assert np.allclose(P @ P, P, atol=1e-13)
        assert np.allclose(P, P.T, atol=1e-13)


def test_equal_shapes_congruent_under_rotation():
    m = MassModel()
    a = np.array(A_TEST[1.0])
    theta = 0.8 * math.pi
    start = build_qstart(*a[:3], theta, m) @ rotation_matrix(-theta)
    end = build_qend(*a[:3], m)
    # same isosceles triangle: pairwise distance multisets agree
    def dists(q):
        return sorted(np.linalg.norm(q[i] - q[j]) for i in range(4) for j in range(i + 1, 4))
    assert np.allclose(dists(start), dists(end), atol=1e-12)


def test_fixture_one_positions_in_A():
    fx = FIXTURES[1]
    assert membership_A(np.array(fx.q).reshape(4, 2), fx.theta, fx.masses, tol=1e-3).member


def test_qstart_reproduces_published_positions():
    fx = FIXTURES[1]
    q = build_qstart(*A_TEST[1.0][:3], 0.8 * math.pi, MassModel())
    assert np.max(np.abs(q - np.array(fx.q).reshape(4, 2))) < 5e-5


def test_fixture_one_reaches_B_at_T():
    fx = FIXTURES[1]
    end = integrate(fx.state(), 1.0, fx.masses).state(-1)
    assert membership_B(end.q, fx.masses, tol=1e-4).member


@pytest.mark.parametrize("text,expected", [
    ("4pi/5", (4, 5)), ("4*pi/5", (4, 5)), ("pi", (1, 1)), ("7π/8", (7, 8)),
    ("8/10pi", (4, 5)),
])
def test_parse_rational(text, expected):
    a = RotationAngle.parse(text)
    assert (a.P, a.Q) == expected
    assert a.theta == pytest.approx(expected[0] * math.pi / expected[1], rel=1e-15)


def test_parse_decimal_and_radians():
    a = RotationAngle.parse("0.78pi")
    assert a.P is None and a.theta == pytest.approx(0.78 * math.pi)
    assert RotationAngle.parse("2.43").theta == 2.43
    assert "pi" in RotationAngle.parse("2.43").label()


@pytest.mark.parametrize("bad", ["0", "2pi", "-1", "7"])
def test_parse_out_of_range(bad):
    with pytest.raises(ValueError):
        RotationAngle.parse(bad)


@pytest.mark.parametrize("text", ["pi/2", "pi", "3pi/2"])
def test_excluded_angles(text):
    with pytest.raises(ExcludedAngle):
        RotationAngle.parse(text).check_admissible()
    with pytest.raises(ExcludedAngle):
        check_admissible_angle(RotationAngle.parse(text).theta)


def test_boundary_params_validation():
    with pytest.raises(ValueError):
        BoundaryParams((1, 2, 3))
    with pytest.raises(ValueError):
        BoundaryParams((1, 2, 3, 4, 5, float("nan")))
    b = BoundaryParams(A_TEST[1.0])
    assert b.shapes_equal() and not BoundaryParams(A_TEST[2.0]).shapes_equal()
