"""Extension of a boundary-to-boundary arc to all time, and orbit classification.

On ``[0, T]`` the motion is integrated directly. On ``(T, 2T]`` it is the
time-reversed, reflected image with bodies 1 and 3 exchanged. Beyond ``2T``
each block of length ``2T`` is the first one with bodies permuted by
``sigma = [3, 4, 1, 2]`` (k times) and rotated by ``R(-2k theta)``.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .boundary import EXCLUDED_ANGLES, RotationAngle, rotation_matrix
from .dynamics import PhaseState, newton_rhs
from .errors import ExcludedAngle, NegativeTime, VerificationFailure
from .integrator import IntegratorSettings, rkf45

REFLECTION = np.diag([-1.0, 1.0])
SIGMA = (2, 3, 0, 1)          # zero-based [3, 4, 1, 2]
_SWAP_13 = (2, 1, 0, 3)


@dataclass(frozen=True)
class ExtensionOperators:
    """Reflection ``B``, body permutation ``sigma`` and the block rotation."""

    theta: float
    B: np.ndarray = field(default_factory=lambda: REFLECTION.copy())
    sigma: tuple = SIGMA

    def sigma_power(self, k):
        perm = tuple(range(4))
        for _ in range(k % 2):
            perm = tuple(self.sigma[i] for i in perm)
        return perm

    def rotation(self, k):
        return rotation_matrix(-2.0 * k * self.theta)


class OrbitExtension:
    """Lazily evaluates the extended orbit from one integration over ``[0, T]``."""

    def __init__(self, seed, theta, masses, T=1.0, settings=None, period=None):
        self.seed = seed.copy()
        self.seed.t = 0.0
        self.theta = float(theta)
        self.masses = masses
        self.T = float(T)
        self.period = period
        self.ops = ExtensionOperators(self.theta)
        self.settings = settings or IntegratorSettings()
        self._rhs = newton_rhs(masses)
        self._sol = rkf45(self._rhs, 0.0, self.seed.to_vector(), self.T, self.settings)

    def _arc(self, s):
        """State on ``[0, T]``, re-integrated from the nearest accepted node."""
        ts = self._sol.ts
        if s <= 0.0:
            return self._sol.ys[0].copy()
        i = int(np.searchsorted(ts, s, side="right")) - 1
        i = min(max(i, 0), len(ts) - 1)
        if ts[i] == s:
            return self._sol.ys[i].copy()
        sub = IntegratorSettings(**{**self.settings.__dict__, "dense_output": False})
        return rkf45(self._rhs, ts[i], self._sol.ys[i], s, sub).y_end

    def _first_block(self, s):
        """State on ``[0, 2T]`` as ``(q, v)`` arrays."""
        if s <= self.T:
            y = self._arc(s)
            return y[:8].reshape(4, 2), y[8:].reshape(4, 2)
        y = self._arc(2 * self.T - s)
        q = y[:8].reshape(4, 2)[list(_SWAP_13)] @ REFLECTION
        v = -y[8:].reshape(4, 2)[list(_SWAP_13)] @ REFLECTION
        return q, v

    def __call__(self, t):
        t = float(t)
        if t < 0:
            if not self.period:
                raise NegativeTime(f"t={t} < 0 on an orbit without a known period")
            t = t % self.period
        if t == 0.0:
            return self.seed.copy()
        k = int(math.floor(t / (2 * self.T)))
        s = t - 2 * k * self.T
        if s == 0.0 and k > 0:
            k, s = k - 1, 2 * self.T
        q, v = self._first_block(s)
        perm = list(self.ops.sigma_power(k))
        R = self.ops.rotation(k)
        return PhaseState(q[perm] @ R, v[perm] @ R, t)

    def sample(self, times):
        return [self(t) for t in times]


def extend_state(seed, theta, t, masses, T=1.0, settings=None, period=None):
    """Evaluate the extended orbit at time ``t`` (see :class:`OrbitExtension`)."""
    return OrbitExtension(seed, theta, masses, T, settings, period)(t)


# ---------------------------------------------------------------------------
# matching conditions

@dataclass
class MatchingReport:
    end_conditions: np.ndarray      # four velocity conditions at t = T
    rotation_conditions: np.ndarray  # (4, 2) mismatch of the start velocities
    start_conditions: np.ndarray    # three natural conditions at t = 0

    @property
    def max_residual(self):
        return float(max(np.max(np.abs(self.end_conditions)),
                         np.max(np.abs(self.rotation_conditions)),
                         np.max(np.abs(self.start_conditions))))

    def as_dict(self):
        return {"end": self.end_conditions.tolist(),
                "rotation": self.rotation_conditions.ravel().tolist(),
                "start": self.start_conditions.tolist(),
                "max": self.max_residual}


def rotation_mismatch(v0, theta):
    """Velocity mismatch at ``t = 0`` between the arc and its rotated image.

    Row ``i`` is ``v_i - (v_k1, -v_k2) R(2 theta)`` with ``k = i`` for bodies
    1, 3 and the partner body for 2, 4.
    """
    c, s = math.cos(2 * theta), math.sin(2 * theta)
    partner = (0, 3, 2, 1)
    out = np.empty((4, 2))
    for i, k in enumerate(partner):
        vk1, vk2 = v0[k]
        out[i, 0] = v0[i, 0] - vk1 * c + vk2 * s
        out[i, 1] = v0[i, 1] + vk1 * s + vk2 * c
    return out


def start_natural_conditions(v0, theta):
    c, s = math.cos(theta), math.sin(theta)
    return np.array([
        v0[2, 0] * s + v0[2, 1] * c,
        v0[0, 0] * s + v0[0, 1] * c,
        v0[1, 0] * s + v0[1, 1] * c + v0[3, 0] * s + v0[3, 1] * c,
    ])


def end_velocity_conditions(vT):
    return np.array([vT[0, 0] - vT[2, 0], vT[0, 1] + vT[2, 1], vT[1, 1], vT[3, 1]])


def matching_residuals(seed, theta, masses, T=1.0, settings=None):
    """Smooth-matching residuals of the extension at ``t = T`` and ``t = 0``."""
    sol = rkf45(newton_rhs(masses), 0.0, seed.to_vector(), T,
                IntegratorSettings(**{**(settings or IntegratorSettings()).__dict__,
                                      "dense_output": False}))
    vT = sol.y_end[8:].reshape(4, 2)
    v0 = seed.v
    return MatchingReport(end_velocity_conditions(vT), rotation_mismatch(v0, theta),
                          start_natural_conditions(v0, theta))


# ---------------------------------------------------------------------------
# classification

def rationalize_theta(theta_real, Qmax=100, tol=1e-12):
    """Continued-fraction convergent ``(P, Q)`` of ``theta/pi`` within ``tol``."""
    x = float(theta_real) / math.pi
    if x <= 0:
        return None
    h0, h1, k0, k1 = 0, 1, 1, 0
    r = x
    for _ in range(64):
        a = math.floor(r)
        h0, h1 = h1, a * h1 + h0
        k0, k1 = k1, a * k1 + k0
        if k1 > Qmax:
            return None
        if abs(h1 * math.pi / k1 - theta_real) <= tol:
            f = Fraction(h1, k1)
            return f.numerator, f.denominator
        frac = r - a
        if frac < 1e-15:
            return None
        r = 1.0 / frac
    return None


QUASI_PERIODIC = "QuasiPeriodic"
NON_CHOREOGRAPHIC = "NonChoreographic"
DOUBLE = "DoubleChoreographic"
SIMPLE = "SimpleChoreographic"


@dataclass(frozen=True)
class OrbitClassification:
    """Kind of orbit and the relations it must satisfy.

    ``chase`` holds ``(i, j, lag)`` meaning ``q_i(t + lag) = q_j(t)`` with
    one-based body labels; ``order`` lists bodies so that each one reaches,
    a lag ``QT`` later, the position the next one in the list holds now.
    """

    kind: str
    P: int | None = None
    Q: int | None = None
    period: float | None = None
    sides: int | None = None
    case: str | None = None
    chase: tuple = ()
    order: tuple | None = None
    beyond_pi: bool = False

    @property
    def periodic(self):
        return self.kind != QUASI_PERIODIC

    def curve_ids(self):
        """Closed-curve label of each body."""
        if self.kind == SIMPLE:
            return (0, 0, 0, 0)
        if self.kind == DOUBLE:
            return (0, 1, 0, 1)
        return (0, 1, 2, 3)

    def describe(self):
        if not self.periodic:
            return self.kind
        text = f"{self.kind} ({self.P}pi/{self.Q}), period {self.period:g}, {self.sides} sides"
        if self.case:
            text += f", case {self.case}"
        if self.order:
            text += ", order " + "->".join(str(i) for i in self.order)
        return text


def _double_chase(lag):
    return ((1, 3, lag), (3, 1, lag), (2, 4, lag), (4, 2, lag))


def classify(theta, mu, a_star=None, T=1.0, tol=1e-6, Qmax=100):
    """Classify the extended orbit from ``theta = P pi / Q``, ``mu`` and the
    boundary shapes.

    ``theta`` may be a :class:`RotationAngle` (exact P, Q) or a float that is
    rationalized with ``Qmax``.
    """
    if isinstance(theta, RotationAngle):
        angle = theta
    else:
        pq = rationalize_theta(float(theta), Qmax, 1e-12)
        angle = RotationAngle.from_rational(*pq) if pq else RotationAngle(float(theta))
    for bad in EXCLUDED_ANGLES:
        if abs(angle.theta - bad) <= 1e-12:
            raise ExcludedAngle(f"theta = {angle.label()} is excluded")
    if not angle.is_rational:
        return OrbitClassification(QUASI_PERIODIC)
    P, Q = angle.P, angle.Q
    beyond = angle.theta > math.pi
    if Q % 2 == 0:
        return OrbitClassification(NON_CHOREOGRAPHIC, P, Q, 2 * Q * T, Q // 2, None, (), None, beyond)
    period = 4 * Q * T
    lag = 2 * Q * T
    if abs(mu - 1.0) > 1e-12:
        return OrbitClassification(DOUBLE, P, Q, period, Q, "1", _double_chase(lag), None, beyond)
    if P % 2 == 1:
        return OrbitClassification(DOUBLE, P, Q, period, Q, "2", _double_chase(lag), None, beyond)
    if a_star is None:
        raise ValueError("boundary parameters are needed to separate cases 3 and 4")
    from .boundary import BoundaryParams
    a = a_star if isinstance(a_star, BoundaryParams) else BoundaryParams(a_star)
    if not a.shapes_equal(tol):
        return OrbitClassification(DOUBLE, P, Q, period, Q, "4", _double_chase(lag), None, beyond)
    if ((Q - 1) // 2) % 2 == 1:
        order, case = (1, 2, 3, 4), "3A"
    else:
        order, case = (1, 4, 3, 2), "3B"
    qt = Q * T
    chase = tuple((order[n], order[(n + 1) % 4], qt) for n in range(4))
    return OrbitClassification(SIMPLE, P, Q, period, Q, case, chase, order, beyond)


@dataclass
class VerificationReport:
    closure: float
    chase: dict
    minimality: float | None
    tol: float
    passed: bool
    violations: list

    def lines(self):
        out = [f"closure |q(T)-q(0)| = {self.closure:.3e}"]
        for k, v in self.chase.items():
            out.append(f"chase {k}: {v:.3e}")
        if self.minimality is not None:
            out.append(f"half-period distance = {self.minimality:.3e}")
        return out


def verify_classification(seed, classification, theta, masses, T=1.0, tol=1e-4, n_samples=16,
                          settings=None, raise_on_failure=True):
    """Check periodicity, chase relations and minimality by integration."""
    if not classification.periodic:
        raise ValueError("quasi-periodic orbits have no relations to verify")
    ext = OrbitExtension(seed, theta, masses, T, settings)
    per = classification.period
    x0 = seed.to_vector()
    closure = float(np.max(np.abs(ext(per).to_vector() - x0)))
    violations = []
    if closure > tol:
        violations.append(f"closure {closure:.3e} > {tol:g}")
    chase = {}
    ts = np.linspace(0.0, 2 * T, n_samples, endpoint=False)
    base = [ext(t) for t in ts]
    for i, j, lag in classification.chase:
        err = max(float(np.max(np.abs(ext(t + lag).q[i - 1] - b.q[j - 1])))
                  for t, b in zip(ts, base))
        chase[f"q{i}(t+{lag:g})=q{j}(t)"] = err
        if err > tol:
            violations.append(f"q{i}(t+{lag:g}) != q{j}(t): {err:.3e}")
    half = float(np.max(np.abs(ext(per / 2).q - seed.q)))
    if half <= tol:
        violations.append(f"orbit already closes at {per / 2:g}")
    report = VerificationReport(closure, chase, half, tol, not violations, violations)
    if violations and raise_on_failure:
        raise VerificationFailure("; ".join(violations), violations)
    return report


# ---------------------------------------------------------------------------
# export

def curve_table(ext, classification, t_max, samples):
    """Rows ``(t, body, curve_id, side_id, x, y, vx, vy)`` on a uniform grid."""
    if t_max < 0:
        raise NegativeTime("t_max must be non-negative")
    times = np.linspace(0.0, t_max, samples) if samples > 1 and t_max > 0 else np.array([0.0])
    curves = classification.curve_ids()
    sides = classification.sides or 1
    side_len = 4 * ext.T
    rows = []
    for t in times:
        st = ext(t)
        side = int(math.floor(t / side_len + 1e-12)) % sides
        for b in range(4):
            rows.append((float(t), b + 1, curves[b], side, *st.q[b], *st.v[b]))
    return rows


def curve_csv(rows, path_or_buffer=None):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t", "body", "curve_id", "side_id", "x", "y", "vx", "vy"])
    for r in rows:
        w.writerow([f"{r[0]:.17g}", r[1], r[2], r[3]] + [f"{x:.17g}" for x in r[4:]])
    text = buf.getvalue()
    if path_or_buffer is not None:
        if hasattr(path_or_buffer, "write"):
            path_or_buffer.write(text)
        else:
            with open(path_or_buffer, "w") as fh:
                fh.write(text)
    return text
