"""Linear stability of periodic orbits on the rotation-reduced phase space.

The planar four-body Hamiltonian is reduced in three symplectic steps:
Jacobi coordinates remove the center of mass, polar coordinates expose the
rotation symmetry, and the angle shift ``theta_2 = x2, theta_3 = x3 + x2,
theta_4 = x4 + x3 + x2`` makes ``x2`` cyclic with conjugate momentum equal to
the total angular momentum ``c``. What remains is a 10-dimensional system in
``z = (r2, r3, r4, x3, x4, R2, R3, R4, X3, X4)``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .dynamics import PhaseState, state_transition
from .errors import CollisionError, ConditioningWarning, DegenerateRadius, SingularMatrix
from .integrator import IntegratorSettings, rkf45

RADIUS_FLOOR = 1e-10
HESSIAN_STEP = 1e-6
VERDICT_TOL = 1e-4

LINEARLY_STABLE = "LinearlyStable"
SPECTRALLY_STABLE = "SpectrallyStable"
UNSTABLE = "Unstable"
INDETERMINATE = "Indeterminate"

J10 = np.block([[np.zeros((5, 5)), np.eye(5)], [-np.eye(5), np.zeros((5, 5))]])
_PAIRS = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]


# ---------------------------------------------------------------------------
# Jacobi coordinates

def jacobi_masses(masses):
    """Cumulative masses ``mu_i`` and reduced masses ``M_i`` (index 1..4 -> 0..3)."""
    m = masses.array
    mu = np.cumsum(m)
    M = np.zeros(4)
    M[1:] = m[1:] * mu[:-1] / mu[1:]
    return mu, M


def jacobi_matrix(masses):
    """Rows give ``g4, u2, u3, u4`` as combinations of ``q1..q4``."""
    m = masses.array
    mu, _ = jacobi_masses(masses)
    A = np.zeros((4, 4))
    A[0] = m / mu[3]
    for i in range(1, 4):
        A[i, :i] = -m[:i] / mu[i - 1]
        A[i, i] = 1.0
    return A


def jacobi_momentum_matrix(masses):
    """Rows give ``G4, v2, v3, v4`` from ``p1..p4`` exactly as displayed."""
    m = masses.array
    mu, _ = jacobi_masses(masses)
    B = np.zeros((4, 4))
    B[0] = 1.0
    for i in range(1, 4):
        B[i, :i] = -m[i] / mu[i]
        B[i, i] = mu[i - 1] / mu[i]
    return B


@dataclass
class JacobiState:
    g4: np.ndarray
    G4: np.ndarray
    u: np.ndarray     # (3, 2): u2, u3, u4
    v: np.ndarray     # (3, 2): v2, v3, v4
    mu: np.ndarray
    M: np.ndarray


def to_jacobi(state, masses):
    p = masses.array[:, None] * state.v
    X = jacobi_matrix(masses) @ state.q
    Y = jacobi_momentum_matrix(masses) @ p
    mu, M = jacobi_masses(masses)
    return JacobiState(X[0], Y[0], X[1:], Y[1:], mu, M[1:])


def from_jacobi(js, masses):
    X = np.vstack([js.g4, js.u])
    Y = np.vstack([js.G4, js.v])
    q = np.linalg.solve(jacobi_matrix(masses), X)
    p = np.linalg.solve(jacobi_momentum_matrix(masses), Y)
    return PhaseState(q, p / masses.array[:, None])


# ---------------------------------------------------------------------------
# polar reduction

@dataclass
class ReducedState:
    z: np.ndarray
    c: float
    x2: float = 0.0

    @property
    def radii(self):
        return self.z[:3]


def to_reduced(state, masses):
    js = to_jacobi(state, masses)
    r = np.linalg.norm(js.u, axis=1)
    if np.min(r) < RADIUS_FLOOR:
        raise DegenerateRadius(f"Jacobi radius {np.min(r):.3e} too small")
    th = np.arctan2(js.u[:, 1], js.u[:, 0])
    R = np.sum(js.u * js.v, axis=1) / r
    Th = js.u[:, 0] * js.v[:, 1] - js.u[:, 1] * js.v[:, 0]
    X4 = Th[2]
    X3 = Th[1] + X4
    c = Th[0] + X3
    z = np.array([r[0], r[1], r[2], th[1] - th[0], th[2] - th[1], R[0], R[1], R[2], X3, X4])
    return ReducedState(z, float(c), float(th[0]))


def _polar_to_jacobi(z, c, x2=0.0):
    r = z[..., 0:3]
    phi = np.stack([np.full_like(z[..., 3], x2), x2 + z[..., 3], x2 + z[..., 3] + z[..., 4]], -1)
    R = z[..., 5:8]
    X3, X4 = z[..., 8], z[..., 9]
    Th = np.stack([c - X3, X3 - X4, X4], -1)
    cs, sn = np.cos(phi), np.sin(phi)
    u = np.stack([r * cs, r * sn], -1)
    v = np.stack([R * cs - Th / r * sn, R * sn + Th / r * cs], -1)
    return u, v


def from_reduced(rs, masses, g4=(0.0, 0.0), G4=(0.0, 0.0)):
    u, v = _polar_to_jacobi(np.asarray(rs.z, float), rs.c, rs.x2)
    mu, M = jacobi_masses(masses)
    js = JacobiState(np.asarray(g4, float), np.asarray(G4, float), u, v, mu, M[1:])
    return from_jacobi(js, masses)


_PI = np.array([i for i, _ in _PAIRS])
_PJ = np.array([j for _, j in _PAIRS])


class _ReducedModel:
    """Constants of the reduced Hamiltonian for one mass model."""

    _cache = {}

    def __init__(self, masses):
        m = masses.array
        self.Ainv_u = np.linalg.inv(jacobi_matrix(masses))[:, 1:]
        # pair vectors q_j - q_i as combinations of u2, u3, u4
        self.D = self.Ainv_u[_PJ] - self.Ainv_u[_PI]
        self.mm = m[_PI] * m[_PJ]
        _, M = jacobi_masses(masses)
        self.M2, self.M3, self.M4 = M[1:]

    @classmethod
    def get(cls, masses):
        key = tuple(masses.array)
        if key not in cls._cache:
            cls._cache[key] = cls(masses)
        return cls._cache[key]


def _positions_from_u(u, masses):
    """Cartesian positions (center of mass at origin) from Jacobi vectors."""
    return np.einsum("bk,...kd->...bd", _ReducedModel.get(masses).Ainv_u, u)


def _potential_and_grad_u(u, masses, need_grad=True):
    model = _ReducedModel.get(masses)
    d = np.einsum("pk,...kd->...pd", model.D, u)
    rr = np.sqrt(np.sum(d * d, axis=-1))
    if np.min(rr) < 1e-13:
        raise CollisionError("reconstructed pair distance below floor")
    U = np.sum(model.mm / rr, axis=-1)
    if not need_grad:
        return U, None
    w = (model.mm / rr ** 3)[..., None] * d
    # dU/du_k with U = sum mm/|D u|: -sum_p D[p, k] w_p
    gu = -np.einsum("pk,...pd->...kd", model.D, w)
    return U, gu


def _check_radii(z):
    if np.min(z[..., 0:3]) < RADIUS_FLOOR:
        raise DegenerateRadius("Jacobi radius below floor")


def reduced_hamiltonian(z, c, masses):
    """Value of the reduced Hamiltonian ``H4`` (kinetic minus potential)."""
    z = np.asarray(getattr(z, "z", z), dtype=float)
    _check_radii(z)
    _, M = jacobi_masses(masses)
    M2, M3, M4 = M[1:]
    r2, r3, r4, _, _, R2, R3, R4, X3, X4 = np.moveaxis(z, -1, 0)
    kin = ((R2 ** 2 * r2 ** 2 + (c - X3) ** 2) / (2 * M2 * r2 ** 2)
           + (R3 ** 2 * r3 ** 2 + (X3 - X4) ** 2) / (2 * M3 * r3 ** 2)
           + (R4 ** 2 * r4 ** 2 + X4 ** 2) / (2 * M4 * r4 ** 2))
    u, _ = _polar_to_jacobi(z, c)
    U, _ = _potential_and_grad_u(u, masses, need_grad=False)
    return kin - U


def reduced_gradient(z, c, masses):
    """Analytic gradient of ``H4``; ``z`` may carry leading batch axes."""
    z = np.asarray(z, dtype=float)
    _check_radii(z)
    model = _ReducedModel.get(masses)
    M2, M3, M4 = model.M2, model.M3, model.M4
    r2, r3, r4, x3, x4, R2, R3, R4, X3, X4 = np.moveaxis(z, -1, 0)
    c3, s3 = np.cos(x3), np.sin(x3)
    c4, s4 = np.cos(x3 + x4), np.sin(x3 + x4)
    u = np.empty(z.shape[:-1] + (3, 2))
    u[..., 0, 0], u[..., 0, 1] = r2, 0.0
    u[..., 1, 0], u[..., 1, 1] = r3 * c3, r3 * s3
    u[..., 2, 0], u[..., 2, 1] = r4 * c4, r4 * s4
    _, gu = _potential_and_grad_u(u, masses)
    g = np.empty_like(z)
    a2, a3, a4 = c - X3, X3 - X4, X4
    g[..., 0] = -a2 ** 2 / (M2 * r2 ** 3) - gu[..., 0, 0]
    g[..., 1] = -a3 ** 2 / (M3 * r3 ** 3) - (gu[..., 1, 0] * c3 + gu[..., 1, 1] * s3)
    g[..., 2] = -a4 ** 2 / (M4 * r4 ** 3) - (gu[..., 2, 0] * c4 + gu[..., 2, 1] * s4)
    dphi3 = r3 * (-gu[..., 1, 0] * s3 + gu[..., 1, 1] * c3)
    dphi4 = r4 * (-gu[..., 2, 0] * s4 + gu[..., 2, 1] * c4)
    g[..., 3] = -(dphi3 + dphi4)
    g[..., 4] = -dphi4
    g[..., 5] = R2 / M2
    g[..., 6] = R3 / M3
    g[..., 7] = R4 / M4
    g[..., 8] = -a2 / (M2 * r2 ** 2) + a3 / (M3 * r3 ** 2)
    g[..., 9] = -a3 / (M3 * r3 ** 2) + a4 / (M4 * r4 ** 2)
    return g


def reduced_hessian(z, c, masses, step=HESSIAN_STEP):
    """Central differences of the analytic gradient, symmetrized."""
    z = np.asarray(z, dtype=float)
    E = np.eye(10) * step
    pts = np.concatenate([z + E, z - E])
    g = reduced_gradient(pts, c, masses)
    H = (g[:10] - g[10:]).T / (2 * step)
    return 0.5 * (H + H.T)


def reduced_rhs(c, masses):
    def rhs(t, z):
        return J10 @ reduced_gradient(z, c, masses)
    return rhs


def reduced_flow(z0, c, t_end, masses, settings=None, t_eval=None):
    """Integrate the reduced Hamiltonian vector field; returns ``(times, states)``."""
    settings = settings or IntegratorSettings()
    sol = rkf45(reduced_rhs(c, masses), 0.0, np.asarray(z0, float), t_end, settings,
                t_stops=() if t_eval is None else tuple(t_eval))
    if t_eval is None:
        return sol.ts, sol.ys
    idx = [int(np.argmin(np.abs(sol.ts - t))) for t in t_eval]
    return np.asarray(t_eval, float), sol.ys[idx]


def wrap_angle_difference(dz):
    """Reduce the angle components of a state difference into ``(-pi, pi]``."""
    out = np.array(dz, dtype=float)
    out[..., 3:5] = (out[..., 3:5] + math.pi) % (2 * math.pi) - math.pi
    return out


def symplectic_defect(X, J=None):
    J = J10 if J is None else J
    return float(np.max(np.abs(X.T @ J @ X - J)))


def monodromy(seed, period, masses, settings=None, closure_tol=1e-5, step=HESSIAN_STEP):
    """Reduced 10x10 monodromy matrix along the orbit through ``seed``.

    The orbit and the variational equations are integrated together so the
    Hessian is always evaluated on the same internal state as the orbit.
    """
    settings = settings or IntegratorSettings()
    settings = IntegratorSettings(**{**settings.__dict__, "dense_output": False})
    rs = to_reduced(seed, masses)
    if period == 0:
        return np.eye(10)
    c = rs.c

    def rhs(t, y):
        z = y[:10]
        X = y[10:].reshape(10, 10)
        H = reduced_hessian(z, c, masses, step)
        return np.concatenate([J10 @ reduced_gradient(z, c, masses), (J10 @ H @ X).ravel()])

    y0 = np.concatenate([rs.z, np.eye(10).ravel()])
    y = rkf45(rhs, 0.0, y0, period, settings).y_end
    gap = float(np.max(np.abs(wrap_angle_difference(y[:10] - rs.z))))
    if closure_tol is not None and gap > closure_tol:
        warnings.warn(f"reduced orbit misses closure by {gap:.3e}", ConditioningWarning,
                      stacklevel=2)
    X = y[10:].reshape(10, 10)
    defect = symplectic_defect(X)
    if defect > 1e-5:
        warnings.warn(f"symplectic defect {defect:.3e}", ConditioningWarning, stacklevel=2)
    return X


@dataclass
class MonodromyReport:
    multipliers: np.ndarray
    w_eigenvalues: np.ndarray
    verdict: str
    symplectic_defect: float
    distinct_gap: float | None = None
    reciprocal_error: float = 0.0
    full_multipliers: np.ndarray | None = None
    full_max_modulus: float | None = None
    notes: list = field(default_factory=list)

    def stable_values(self):
        """The four W-eigenvalues besides the trivial pair (pair means)."""
        return _nontrivial_pairs(self.w_eigenvalues)

    def lines(self):
        out = [f"verdict: {self.verdict}",
               "W spectrum: " + ", ".join(f"{w.real:+.6f}" + (f"{w.imag:+.1e}i" if abs(w.imag) > 1e-12 else "")
                                         for w in self.w_eigenvalues),
               f"symplectic defect: {self.symplectic_defect:.3e}",
               f"reciprocal-pair error: {self.reciprocal_error:.3e}"]
        if self.distinct_gap is not None:
            out.append(f"smallest gap between W values: {self.distinct_gap:.3e}")
        if self.full_max_modulus is not None:
            out.append(f"full monodromy max |lambda| = {self.full_max_modulus:.6f}")
        out.extend(self.notes)
        return out


def _nontrivial_pairs(w):
    w = np.sort_complex(np.asarray(w))
    order = np.argsort(np.abs(w - 1.0))
    rest = np.sort(np.delete(w, order[:2]).real)
    return 0.5 * (rest[0::2] + rest[1::2])


def reciprocal_pair_error(lam):
    lam = np.asarray(lam, dtype=complex)
    return float(max(np.min(np.abs(lam - 1.0 / l)) for l in lam))


def stability_verdict(X, tol=VERDICT_TOL):
    """Classify a symplectic monodromy matrix through ``W = (X + X^-1)/2``."""
    X = np.asarray(X, dtype=float)
    n = X.shape[0]
    if np.linalg.cond(X) > 1e14:
        raise SingularMatrix("monodromy matrix is numerically singular")
    Xinv = np.linalg.inv(X)
    W = 0.5 * (X + Xinv)
    w = np.linalg.eigvals(W)
    w = w[np.argsort(-w.real)]
    lam = np.linalg.eigvals(X)
    J = np.block([[np.zeros((n // 2, n // 2)), np.eye(n // 2)],
                  [-np.eye(n // 2), np.zeros((n // 2, n // 2))]])
    defect = symplectic_defect(X, J)
    recip = reciprocal_pair_error(lam)
    notes = []
    if np.any(np.abs(w.imag) > tol) or np.any(np.abs(w.real) > 1 + tol):
        return MonodromyReport(lam, w, UNSTABLE, defect, None, recip, notes=notes)
    near_one = int(np.sum(np.abs(w - 1.0) <= tol))
    if near_one != 2:
        notes.append(f"{near_one} W-eigenvalues at +1 (expected the trivial 2)")
        return MonodromyReport(lam, w, INDETERMINATE, defect, None, recip, notes=notes)
    vals = _nontrivial_pairs(w)
    rest = np.sort(np.delete(w, np.argsort(np.abs(w - 1.0))[:2]).real)
    pair_split = float(np.max(np.abs(rest[0::2] - rest[1::2])))
    if pair_split > tol:
        notes.append(f"W eigenvalues not paired (split {pair_split:.2e})")
        return MonodromyReport(lam, w, INDETERMINATE, defect, None, recip, notes=notes)
    gap = float(np.min(np.diff(np.sort(vals)))) if len(vals) > 1 else math.inf
    inside = bool(np.all(np.abs(vals) < 1 - tol))
    if not inside:
        notes.append("a W eigenvalue sits on the boundary of [-1, 1]")
        return MonodromyReport(lam, w, INDETERMINATE, defect, gap, recip, notes=notes)
    verdict = LINEARLY_STABLE if gap > tol else SPECTRALLY_STABLE
    return MonodromyReport(lam, w, verdict, defect, gap, recip, notes=notes)


def full_monodromy_check(seed, period, masses, settings=None):
    """Multipliers of the 16-dimensional Cartesian monodromy and their max modulus."""
    _, phi = state_transition(seed, period, masses, settings)
    lam = np.linalg.eigvals(phi)
    return lam, float(np.max(np.abs(lam)))


def analyze(seed, period, masses, settings=None, full=True, tol=VERDICT_TOL):
    """Reduced verdict plus (optionally) the full-dimension cross-check."""
    X = monodromy(seed, period, masses, settings)
    rep = stability_verdict(X, tol)
    if full:
        lam, mx = full_monodromy_check(seed, period, masses, settings)
        rep.full_multipliers = lam
        rep.full_max_modulus = mx
        trivial = int(np.sum(np.abs(lam - 1.0) <= 1e-3))
        rep.notes.append(f"full monodromy: {trivial} multipliers within 1e-3 of +1")
    return rep
