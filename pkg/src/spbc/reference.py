"""Reference actions: the rotating-rhombus (homographic) family, the
straight-line test path, and the admissible-region scan built from them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad

from .boundary import BoundaryParams, build_qend, build_qstart, membership_A, membership_B
from .dynamics import COLLISION_FLOOR, MassModel, Trajectory
from .errors import DegenerateOmega, NoConvergence, SegmentCollision

# minimizers at theta = 4pi/5 for mu = 2, 1, 0.8, 0.5
A_TEST = {
    2.0: (0.8347577868, 0.8492284757, 1.107411045, 0.6740939528, 1.7071110, 0.072136065),
    1.0: (0.6676542303, 1.11499232, 0.5099504088, 0.6676542314, 1.11499232, 0.5099504078),
    0.8: (0.6216336897, 1.197204657, 0.347804861, 0.6658203645, 0.9561601763, 0.6379731628),
    0.5: (0.5350313653, 1.354931439, 0.0572523078, 0.6625485, 0.674032487, 0.8789531194),
}

_CC_EQUAL = (2 * math.sqrt(2) + 1) / 4


def omega_from_theta(theta, T=1.0):
    """Smallest rotation speed carrying an A-rhombus onto a B-rhombus in time T."""
    if not 0 < theta < 2 * math.pi:
        raise ValueError("theta must lie in (0, 2pi)")
    if theta < math.pi:
        return abs(math.pi / 2 - theta) / T
    return abs(3 * math.pi / 2 - theta) / T


def _rhombus_residual(r, omega, m1, m2):
    r1, r2 = r
    s = (r1 * r1 + r2 * r2) ** 1.5
    return np.array([-omega ** 2 + 2 * m2 / s + m1 / (4 * r1 ** 3),
                     -omega ** 2 + 2 * m1 / s + m2 / (4 * r2 ** 3)])


def solve_rhombus_radii(omega, m1, m2, tol=1e-13, max_iter=60):
    """Radii ``(r1, r2)`` of the rigidly rotating rhombus with angular speed omega.

    Newton iteration in log-radii, seeded from the equal-mass closed form at
    the geometric mean mass.
    """
    if not omega > 0:
        raise DegenerateOmega("rhombus radii need omega > 0")
    if not (m1 > 0 and m2 > 0):
        raise ValueError("masses must be positive")
    r0 = (_CC_EQUAL * math.sqrt(m1 * m2) / omega ** 2) ** (1 / 3)
    x = np.log([r0, r0])
    w2 = omega ** 2
    for _ in range(max_iter):
        r1, r2 = np.exp(x)
        s2 = r1 * r1 + r2 * r2
        s = s2 ** 1.5
        f = _rhombus_residual((r1, r2), omega, m1, m2) / w2
        if np.max(np.abs(f)) < tol:
            return float(r1), float(r2)
        # derivatives with respect to log r1, log r2
        ds1 = -3.0 * r1 * r1 / s2 ** 2.5
        ds2 = -3.0 * r2 * r2 / s2 ** 2.5
        jac = np.array([
            [2 * m2 * ds1 - 3 * m1 / (4 * r1 ** 3), 2 * m2 * ds2],
            [2 * m1 * ds1, 2 * m1 * ds2 - 3 * m2 / (4 * r2 ** 3)],
        ]) / w2
        step = np.linalg.solve(jac, -f)
        # cap the log step to keep the iteration in the basin
        x = x + np.clip(step, -1.0, 1.0)
    raise NoConvergence(f"rhombus radii did not converge for omega={omega}, m=({m1}, {m2})")


@dataclass(frozen=True)
class HomographicFamily:
    """Rigidly rotating rhombus satisfying the boundary structure.

    ``omega`` is the rotation speed (positive); ``direction`` is +1 for
    counter-clockwise rotation. Body k sits at angle
    ``direction*omega*t + rho_k`` with ``rho_k = (k-1)*pi/2 + alpha0``.
    """

    omega: float
    r1: float
    r2: float
    alpha0: float
    direction: int
    masses: MassModel

    @property
    def rho(self):
        return np.array([k * math.pi / 2 + self.alpha0 for k in range(4)])

    @property
    def radii(self):
        return np.array([self.r1, self.r2, self.r1, self.r2])

    @property
    def period(self):
        return 2 * math.pi / self.omega

    @property
    def lam(self):
        """Central-configuration multiplier (equals omega squared)."""
        return self.omega ** 2

    def positions(self, t):
        ang = self.direction * self.omega * t + self.rho
        return self.radii[:, None] * np.column_stack([np.cos(ang), np.sin(ang)])

    def velocities(self, t):
        ang = self.direction * self.omega * t + self.rho
        w = self.direction * self.omega
        return w * self.radii[:, None] * np.column_stack([-np.sin(ang), np.cos(ang)])

    def action(self, T=1.0):
        m = self.masses
        return 3 * self.omega ** 2 * (m.m1 * self.r1 ** 2 + m.m2 * self.r2 ** 2) * T


def _wrap(x):
    return (x + math.pi) % (2 * math.pi) - math.pi


def homographic_family(theta, mu, T=1.0, m1=1.0):
    """Rotating rhombus whose t=0 and t=T configurations lie in A and B.

    The phase is solved from the boundary structure: body 1 must start on the
    rotated symmetry axis of A (angle ``-theta +- pi/2``) and reach the x-axis
    (angle 0 or pi) at time T, turning through the smallest possible angle.
    """
    masses = MassModel.from_mu(mu, m1)
    omega = omega_from_theta(theta, T)
    if omega <= 1e-14:
        raise DegenerateOmega(f"omega vanishes at theta = {theta}")
    best = None
    for start in (-math.pi / 2 - theta, math.pi / 2 - theta):
        for target in (0.0, math.pi):
            sweep = _wrap(target - start)
            if best is None or abs(sweep) < abs(best[1]) - 1e-12:
                best = (start, sweep)
    start, sweep = best
    r1, r2 = solve_rhombus_radii(omega, masses.m1, masses.m2)
    return HomographicFamily(omega, r1, r2, _wrap(start), 1 if sweep > 0 else -1, masses)


def homographic_action(theta, mu, T=1.0, m1=1.0):
    """Action over [0, T] of the homographic rhombus solution."""
    omega = omega_from_theta(theta, T)
    if omega <= 1e-14:
        raise DegenerateOmega(f"omega vanishes at theta = {theta}")
    return homographic_action_for_omega(omega, mu, T, m1)


def homographic_action_for_omega(omega, mu, T=1.0, m1=1.0):
    m2 = mu * m1
    r1, r2 = solve_rhombus_radii(omega, m1, m2)
    return 3 * omega ** 2 * (m1 * r1 ** 2 + m2 * r2 ** 2) * T


def homographic_action_equal_mass(theta, T=1.0):
    """Closed form of the homographic action for mu = 1, m1 = 1."""
    w = abs(math.pi / 2 - theta) if theta < math.pi else abs(3 * math.pi / 2 - theta)
    return 6 * _CC_EQUAL ** (2 / 3) * w ** (2 / 3) * T ** (1 / 3)


def homographic_action_scaled(theta, k, mu, T=1.0, m1=1.0):
    """Homographic action at ``k*theta`` from the value at theta via the
    two-thirds power law in the speed ratio."""
    if not 0 < k * theta < 2 * math.pi:
        raise ValueError("k*theta must lie in (0, 2pi)")
    w0 = omega_from_theta(theta, T)
    w1 = omega_from_theta(k * theta, T)
    if w0 <= 1e-14 or w1 <= 1e-14:
        raise DegenerateOmega("omega vanishes")
    return (w1 / w0) ** (2 / 3) * homographic_action(theta, mu, T, m1)


def segment_inverse_distance_integral(d0, d1, floor=COLLISION_FLOOR):
    """``int_0^1 ds / |d0 + s (d1 - d0)|`` for planar vectors.

    Closed form through ``asinh``; falls back to adaptive quadrature when the
    segment is nearly collinear with the origin.
    """
    d0 = np.asarray(d0, dtype=float)
    delta = np.asarray(d1, dtype=float) - d0
    a = float(d0 @ d0)
    b = 2.0 * float(d0 @ delta)
    c = float(delta @ delta)
    if c <= 1e-16 * a or c == 0.0:
        # (near-)stationary pair: midpoint value, error O(c/a)
        if a < floor ** 2:
            raise SegmentCollision("stationary pair in collision")
        return 1.0 / float(np.linalg.norm(d0 + 0.5 * delta))
    cross = float(d0[0] * delta[1] - d0[1] * delta[0])
    disc = 4.0 * cross * cross                     # 4ac - b^2 without cancellation
    s_star = -b / (2 * c)
    if disc < 1e-12 * c:
        if 0.0 <= s_star <= 1.0 and disc / (4 * c) < floor ** 2:
            raise SegmentCollision("straight-line paths of a pair intersect")
        if disc == 0.0 and not 0.0 <= s_star <= 1.0:
            # exactly collinear, origin outside the segment: 1/|linear|
            sc = math.sqrt(c)
            lo, hi = sc * (0 - s_star), sc * (1 - s_star)
            return abs(math.log(abs(hi)) - math.log(abs(lo))) / sc
        val, _ = quad(lambda s: 1.0 / math.sqrt(a + b * s + c * s * s), 0.0, 1.0,
                      points=[s_star] if 0 < s_star < 1 else None,
                      epsabs=1e-14, epsrel=1e-13, limit=200)
        return val
    sd = math.sqrt(disc)
    return (math.asinh((2 * c + b) / sd) - math.asinh(b / sd)) / math.sqrt(c)


def segment_inverse_distance_quadrature(d0, d1):
    """Adaptive-quadrature oracle for :func:`segment_inverse_distance_integral`."""
    d0 = np.asarray(d0, dtype=float)
    delta = np.asarray(d1, dtype=float) - d0
    val, _ = quad(lambda s: 1.0 / np.linalg.norm(d0 + s * delta), 0.0, 1.0,
                  epsabs=1e-14, epsrel=1e-13, limit=200)
    return val


def test_path_action(theta, mu, a_test, T=1.0, m1=1.0, floor=COLLISION_FLOOR):
    """Action of the constant-velocity path joining Qstart and Qend."""
    masses = MassModel.from_mu(mu, m1)
    a = np.asarray(getattr(a_test, "a", a_test), dtype=float)
    q0 = build_qstart(*a[:3], theta, masses)
    q1 = build_qend(*a[3:], masses)
    m = masses.array
    kinetic = float(np.sum(m * np.sum((q1 - q0) ** 2, axis=1))) / (2 * T)
    potential = 0.0
    for i in range(4):
        for j in range(i + 1, 4):
            potential += m[i] * m[j] * segment_inverse_distance_integral(
                q0[i] - q0[j], q1[i] - q1[j], floor)
    return kinetic + potential * T


# test_path_action is not a pytest test
test_path_action.__test__ = False


def _test_path_grid(thetas, mu, a, T, m1):
    """Vectorized test-path action along a theta grid for one mu."""
    masses = MassModel.from_mu(mu, m1)
    m = masses.array
    from .boundary import template_A, template_B
    base0 = (template_A(masses) @ a[:3]).reshape(4, 2)
    q1 = (template_B(masses) @ a[3:]).reshape(4, 2)
    c, s = np.cos(thetas), np.sin(thetas)
    # row vector times R(theta): (x c + y s, -x s + y c)
    q0 = np.stack([base0[None, :, 0] * c[:, None] + base0[None, :, 1] * s[:, None],
                   -base0[None, :, 0] * s[:, None] + base0[None, :, 1] * c[:, None]], axis=-1)
    kinetic = np.sum(m * np.sum((q1[None] - q0) ** 2, axis=-1), axis=-1) / (2 * T)
    potential = np.zeros(len(thetas))
    for i in range(4):
        for j in range(i + 1, 4):
            d0 = q0[:, i] - q0[:, j]
            delta = (q1[i] - q1[j])[None] - d0
            aa = np.sum(d0 * d0, axis=-1)
            bb = 2 * np.sum(d0 * delta, axis=-1)
            cc = np.sum(delta * delta, axis=-1)
            cross = d0[:, 0] * delta[:, 1] - d0[:, 1] * delta[:, 0]
            sd = 2 * np.abs(cross)
            bad = (sd * sd < 1e-12 * cc) | (cc <= 1e-16 * aa)
            with np.errstate(divide="ignore", invalid="ignore"):
                val = (np.arcsinh((2 * cc + bb) / sd) - np.arcsinh(bb / sd)) / np.sqrt(cc)
            for k in np.flatnonzero(bad):
                try:
                    val[k] = segment_inverse_distance_integral(d0[k], d0[k] + delta[k])
                except SegmentCollision:
                    val[k] = np.inf
            potential += m[i] * m[j] * val
    return kinetic + potential * T


@dataclass
class OmegaRegionScan:
    theta_grid: np.ndarray
    mu_grid: np.ndarray
    mask: np.ndarray                 # shape (len(mu_grid), len(theta_grid))
    a_tests: list
    homographic: np.ndarray
    test_path: np.ndarray            # min over a_tests
    diagnostics: list = field(default_factory=list)

    def intervals(self):
        """Per mu row, the theta/pi values bracketing each mask sign change."""
        out = []
        for row, mu in enumerate(self.mu_grid):
            m = self.mask[row]
            brackets = []
            for k in range(len(m) - 1):
                if m[k] != m[k + 1]:
                    brackets.append((float(self.theta_grid[k] / math.pi),
                                     float(self.theta_grid[k + 1] / math.pi),
                                     "enter" if m[k + 1] else "leave"))
            out.append((float(mu), brackets))
        return out

    def interval_report(self):
        lines = []
        for mu, brackets in self.intervals():
            parts = [f"{kind} ({lo:.6g}pi, {hi:.6g}pi)" for lo, hi, kind in brackets]
            if not parts:
                row = self.mask[list(self.mu_grid).index(mu)]
                state = "inside" if row.all() else ("outside" if not row.any() else "mixed")
                parts = [f"no transition ({state})"]
            lines.append(f"mu={mu:.6g}: " + "; ".join(parts))
        return "\n".join(lines) + "\n"

    def to_csv(self, path_or_buffer=None):
        header = "mu," + ",".join(f"{t / math.pi:.17g}" for t in self.theta_grid)
        lines = [header]
        for mu, row in zip(self.mu_grid, self.mask):
            lines.append(f"{mu:.17g}," + ",".join("1" if x else "0" for x in row))
        text = "\n".join(lines) + "\n"
        if path_or_buffer is None:
            return text
        if hasattr(path_or_buffer, "write"):
            path_or_buffer.write(text)
        else:
            with open(path_or_buffer, "w") as fh:
                fh.write(text)
        return text


def default_theta_grid():
    return np.arange(0, 161) * 0.005 * math.pi + 0.6 * math.pi


def default_mu_grid():
    return np.round(0.2 + 0.02 * np.arange(0, 141), 12)


def scan_region(theta_grid=None, mu_grid=None, a_test_list=None, T=1.0, m1=1.0):
    """Mask of (theta, mu) where some test path undercuts the homographic action."""
    theta_grid = default_theta_grid() if theta_grid is None else np.atleast_1d(np.asarray(theta_grid, float))
    mu_grid = default_mu_grid() if mu_grid is None else np.atleast_1d(np.asarray(mu_grid, float))
    if a_test_list is None:
        a_test_list = [A_TEST[1.0]]
    a_tests = [np.asarray(getattr(a, "a", a), dtype=float) for a in a_test_list]
    if not len(theta_grid) or not len(mu_grid):
        raise ValueError("grids must be nonempty")
    if not a_tests:
        raise ValueError("need at least one test-path boundary vector")
    nm, nt = len(mu_grid), len(theta_grid)
    hom = np.full((nm, nt), np.nan)
    tp = np.full((nm, nt), np.inf)
    diagnostics = []
    omegas = np.array([omega_from_theta(t, T) for t in theta_grid])
    for r, mu in enumerate(mu_grid):
        # radii scale as omega^(-2/3): one solve per mu
        try:
            r1, r2 = solve_rhombus_radii(1.0, m1, mu * m1)
        except Exception as exc:  # noqa: BLE001 - per-row diagnostic
            diagnostics.append(f"mu={mu}: {exc}")
            continue
        with np.errstate(divide="ignore"):
            hom[r] = 3 * omegas ** (2 / 3) * (m1 * r1 ** 2 + mu * m1 * r2 ** 2) * T
        hom[r][omegas <= 1e-14] = np.nan
        for a in a_tests:
            tp[r] = np.minimum(tp[r], _test_path_grid(theta_grid, mu, a, T, m1))
    not_pi = np.abs(theta_grid - math.pi) > 1e-12
    with np.errstate(invalid="ignore"):
        mask = (hom > tp) & not_pi[None, :] & np.isfinite(hom)
    return OmegaRegionScan(theta_grid, mu_grid, mask, a_tests, hom, tp, diagnostics)


def homographic_boundary_params(theta, mu, T=1.0, m1=1.0):
    fam = homographic_family(theta, mu, T, m1)
    a_start = membership_A(fam.positions(0.0), theta, fam.masses).params
    a_end = membership_B(fam.positions(T), fam.masses).params
    return BoundaryParams(np.concatenate([a_start, a_end]))


def build_homographic_trajectory(theta, mu, T=1.0, samples=101, m1=1.0):
    fam = homographic_family(theta, mu, T, m1)
    times = np.linspace(0.0, T, samples)
    q = np.array([fam.positions(t) for t in times])
    v = np.array([fam.velocities(t) for t in times])
    return Trajectory(times, q, v)
