"""Structural boundary spaces A and B and the boundary configurations.

Positions are row vectors multiplied on the right by ``R(theta)``; with this
orientation the published star-pentagon initial positions are reproduced.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from fractions import Fraction
from typing import NamedTuple

import numpy as np

from .errors import ExcludedAngle

EXCLUDED_ANGLES = (math.pi / 2, math.pi, 3 * math.pi / 2)
MEMBERSHIP_TOL = 1e-9


def rotation_matrix(theta):
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


@dataclass(frozen=True)
class BoundaryParams:
    """A point ``(a1, ..., a6)`` of the boundary parameter space."""

    a: tuple

    def __post_init__(self):
        a = tuple(float(x) for x in np.asarray(self.a, dtype=float).ravel())
        if len(a) != 6:
            raise ValueError("boundary parameters need exactly six values")
        if not all(math.isfinite(x) for x in a):
            raise ValueError("boundary parameters must be finite")
        object.__setattr__(self, "a", a)

    @property
    def start(self):
        return np.array(self.a[:3])

    @property
    def end(self):
        return np.array(self.a[3:])

    def as_array(self):
        return np.array(self.a)

    def shapes_equal(self, rtol=1e-6):
        """True when the start and end isosceles shapes coincide."""
        s, e = self.start, self.end
        return bool(np.all(np.abs(s - e) <= rtol * np.maximum(1.0, np.maximum(np.abs(s), np.abs(e)))))


@dataclass(frozen=True)
class RotationAngle:
    """Rotation angle in radians with an optional exact form ``P*pi/Q``."""

    theta: float
    P: int | None = None
    Q: int | None = None

    def __post_init__(self):
        if (self.P is None) != (self.Q is None):
            raise ValueError("P and Q must be given together")
        if self.P is not None:
            if self.P <= 0 or self.Q <= 0 or math.gcd(self.P, self.Q) != 1:
                raise ValueError("P, Q must be coprime positive integers")
            if abs(self.P * math.pi / self.Q - self.theta) > 1e-15 * max(1.0, abs(self.theta)) * 4:
                raise ValueError("rational form does not reproduce theta")
        if not 0.0 < self.theta < 2 * math.pi:
            raise ValueError("theta must lie in (0, 2pi)")

    @classmethod
    def from_rational(cls, P, Q):
        f = Fraction(P, Q)
        return cls(f.numerator * math.pi / f.denominator, f.numerator, f.denominator)

    @classmethod
    def parse(cls, text):
        """Parse ``'4pi/5'``, ``'0.78pi'``, ``'pi'``, ``'4*pi/5'`` or plain radians."""
        s = text.strip().lower().replace(" ", "").replace("*", "").replace("π", "pi")
        m = re.fullmatch(r"([0-9.eE+-]*)pi(?:/([0-9]+))?", s)
        if m:
            coef, den = m.group(1), m.group(2)
            if coef in ("", "+"):
                coef = "1"
            elif coef == "-":
                coef = "-1"
            if re.fullmatch(r"[0-9]+", coef):
                P, Q = int(coef), int(den or 1)
                return cls.from_rational(P, Q)
            value = float(coef) * math.pi / (int(den) if den else 1)
            return cls(value)
        m = re.fullmatch(r"([0-9]+)/([0-9]+)pi", s)
        if m:
            return cls.from_rational(int(m.group(1)), int(m.group(2)))
        return cls(float(s))

    @property
    def is_rational(self):
        return self.P is not None

    def check_admissible(self, tol=1e-12):
        for bad in EXCLUDED_ANGLES:
            if abs(self.theta - bad) <= tol:
                raise ExcludedAngle(f"theta = {self.theta:.15g} is excluded (pi/2, pi, 3pi/2)")
        return self

    def label(self):
        if self.is_rational:
            return f"{self.P}pi/{self.Q}" if self.Q != 1 else f"{self.P}pi"
        return f"{self.theta:.12g} (= {self.theta / math.pi:.12g}pi)"


def check_admissible_angle(theta, tol=1e-12):
    for bad in EXCLUDED_ANGLES:
        if abs(float(theta) - bad) <= tol:
            raise ExcludedAngle(f"theta = {float(theta):.15g} is excluded (pi/2, pi, 3pi/2)")


def template_A(masses):
    """Linear map ``(a1, a2, a3) -> `` unrotated start template, ``(8, 3)``."""
    m1, m2, m3, m4 = masses.array
    L = np.zeros((8, 3))
    L[1, 2] = -1.0                       # body 1: (0, -a3)
    L[2, 0], L[3, 1] = -1.0, 1.0         # body 2: (-a1, a2)
    L[5, 1], L[5, 2] = -(m2 + m4) / m3, m1 / m3
    L[6, 0], L[7, 1] = 1.0, 1.0          # body 4: (a1, a2)
    return L


def template_B(masses):
    """Linear map ``(a4, a5, a6) -> `` end template, ``(8, 3)``."""
    m1, m2, m3, m4 = masses.array
    L = np.zeros((8, 3))
    L[0, 0], L[1, 1] = 1.0, 1.0          # body 1: (a4, a5)
    L[3, 2] = -1.0                       # body 2: (0, -a6)
    L[4, 0], L[5, 1] = -1.0, 1.0         # body 3: (-a4, a5)
    L[7, 1], L[7, 2] = -(m1 + m3) / m4, m2 / m4
    return L


def rotation_operator(theta):
    """``(8, 8)`` matrix applying ``q -> q @ R(theta)`` to ``q.ravel()``."""
    return np.kron(np.eye(4), rotation_matrix(theta).T)


def start_operator(theta, masses):
    """``(8, 3)`` map from ``(a1, a2, a3)`` to the flattened start configuration."""
    return rotation_operator(theta) @ template_A(masses)


def build_qstart(a1, a2, a3, theta, masses):
    base = (template_A(masses) @ np.array([a1, a2, a3], dtype=float)).reshape(4, 2)
    return base @ rotation_matrix(theta)


def build_qend(a4, a5, a6, masses):
    return (template_B(masses) @ np.array([a4, a5, a6], dtype=float)).reshape(4, 2)


class Membership(NamedTuple):
    member: bool
    params: np.ndarray
    residual: float


def _project(flat, L):
    params, *_ = np.linalg.lstsq(L, flat, rcond=None)
    resid = float(np.max(np.abs(flat - L @ params)))
    return params, resid


def membership_A(config, theta, masses, tol=MEMBERSHIP_TOL):
    """Test ``config @ R(-theta)`` against the start template."""
    base = np.asarray(config, dtype=float).reshape(4, 2) @ rotation_matrix(-theta)
    params, resid = _project(base.ravel(), template_A(masses))
    return Membership(resid <= tol, params, resid)


def membership_B(config, masses, tol=MEMBERSHIP_TOL):
    params, resid = _project(np.asarray(config, dtype=float).ravel(), template_B(masses))
    return Membership(resid <= tol, params, resid)


def projector_B(masses):
    """Orthogonal projector of ``R^8`` onto the end space B."""
    L = template_B(masses)
    return L @ np.linalg.pinv(L)


def projector_A(theta, masses):
    L = start_operator(theta, masses)
    return L @ np.linalg.pinv(L)
