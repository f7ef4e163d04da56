"""Planar four-body kinematics, energies and the Newtonian flow.

Units: G = 1. Configurations are ``(4, 2)`` float arrays, one row per body,
bodies ordered 1..4. Phase-space vectors used by the integrator are the
16-vector ``[q.ravel(), v.ravel()]``.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np

from .errors import CollisionError
from .integrator import IntegratorSettings, OdeSolution, rkf45

COLLISION_FLOOR = 1e-13

_PAIRS = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]
_I, _J = (np.array(x) for x in zip(*_PAIRS))


@dataclass(frozen=True)
class MassModel:
    """Four masses with ``m1 == m3`` and ``m2 == m4``."""

    m1: float = 1.0
    m2: float = 1.0
    m3: float | None = None
    m4: float | None = None

    def __post_init__(self):
        m3 = self.m1 if self.m3 is None else self.m3
        m4 = self.m2 if self.m4 is None else self.m4
        if m3 != self.m1 or m4 != self.m2:
            raise ValueError("mass symmetry requires m1 == m3 and m2 == m4")
        if not (self.m1 > 0 and self.m2 > 0):
            raise ValueError("masses must be strictly positive")
        object.__setattr__(self, "m3", float(m3))
        object.__setattr__(self, "m4", float(m4))
        object.__setattr__(self, "m1", float(self.m1))
        object.__setattr__(self, "m2", float(self.m2))

    @classmethod
    def from_mu(cls, mu, m1=1.0):
        return cls(m1=m1, m2=mu * m1)

    @property
    def mu(self):
        return self.m2 / self.m1

    @property
    def M(self):
        return 2.0 * (self.m1 + self.m2)

    @property
    def array(self):
        return np.array([self.m1, self.m2, self.m3, self.m4])


@dataclass
class PhaseState:
    q: np.ndarray
    v: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        self.q = np.array(self.q, dtype=float).reshape(4, 2)
        self.v = np.array(self.v, dtype=float).reshape(4, 2)
        if not (np.all(np.isfinite(self.q)) and np.all(np.isfinite(self.v))):
            raise ValueError("non-finite phase state")

    @classmethod
    def from_vector(cls, y, t=0.0):
        y = np.asarray(y, dtype=float)
        return cls(y[:8].reshape(4, 2), y[8:16].reshape(4, 2), t)

    def to_vector(self):
        return np.concatenate([self.q.ravel(), self.v.ravel()])

    def center_of_mass(self, masses):
        m = masses.array
        return m @ self.q / m.sum()

    def momentum(self, masses):
        return masses.array @ self.v

    def normalized(self, masses):
        """Copy shifted to the center-of-mass frame with zero total momentum."""
        m = masses.array
        q = self.q - m @ self.q / m.sum()
        v = self.v - m @ self.v / m.sum()
        return PhaseState(q, v, self.t)

    def copy(self):
        return PhaseState(self.q.copy(), self.v.copy(), self.t)


@dataclass
class Trajectory:
    """Sampled states of an integration, with access to the dense solution."""

    times: np.ndarray
    q: np.ndarray
    v: np.ndarray
    steps: int = 0
    rejected: int = 0
    max_error: float = 0.0
    solution: OdeSolution | None = field(default=None, repr=False)

    def __len__(self):
        return len(self.times)

    def state(self, i):
        return PhaseState(self.q[i], self.v[i], float(self.times[i]))

    @property
    def samples(self):
        return [self.state(i) for i in range(len(self))]

    def at(self, t):
        """Dense-output state at an arbitrary time inside the integrated span."""
        if self.solution is None:
            raise ValueError("trajectory carries no dense solution")
        return PhaseState.from_vector(self.solution(t), t)

    def to_csv(self, path_or_buffer=None):
        header = ["t"] + [f"q{i}{c}" for i in range(1, 5) for c in "xy"]
        header += [f"v{i}{c}" for i in range(1, 5) for c in "xy"]
        rows = np.column_stack([self.times, self.q.reshape(len(self), 8),
                                self.v.reshape(len(self), 8)])
        buf = io.StringIO()
        buf.write(",".join(header) + "\n")
        for row in rows:
            buf.write(",".join(f"{x:.17g}" for x in row) + "\n")
        text = buf.getvalue()
        if path_or_buffer is None:
            return text
        if hasattr(path_or_buffer, "write"):
            path_or_buffer.write(text)
        else:
            with open(path_or_buffer, "w") as fh:
                fh.write(text)
        return text


def _pair_vectors(q):
    d = q[..., _J, :] - q[..., _I, :]
    r = np.sqrt(np.sum(d * d, axis=-1))
    return d, r


def min_pair_distance(q):
    return float(np.min(_pair_vectors(np.asarray(q, dtype=float))[1]))


def _check(r, floor):
    if np.min(r) < floor:
        raise CollisionError(f"pair distance {np.min(r):.3e} below floor {floor:.1e}")


def potential_energy(q, masses, floor=COLLISION_FLOOR):
    """Newtonian potential ``U = sum_{i<j} m_i m_j / |q_i - q_j|`` (positive)."""
    q = np.asarray(q, dtype=float)
    m = masses.array
    _, r = _pair_vectors(q)
    _check(r, floor)
    return float(np.sum(m[_I] * m[_J] / r))


def kinetic_energy(state, masses):
    return 0.5 * float(np.sum(masses.array * np.sum(state.v ** 2, axis=1)))


def total_energy(state, masses, floor=COLLISION_FLOOR):
    return kinetic_energy(state, masses) - potential_energy(state.q, masses, floor)


def angular_momentum(state, masses):
    q, v = state.q, state.v
    return float(np.sum(masses.array * (q[:, 0] * v[:, 1] - q[:, 1] * v[:, 0])))


def accelerations(q, masses, floor=COLLISION_FLOOR):
    """Gravitational accelerations, ``(4, 2)``."""
    q = np.asarray(q, dtype=float)
    m = masses.array
    d, r = _pair_vectors(q)
    _check(r, floor)
    w = d / (r ** 3)[..., None]
    acc = np.zeros_like(q)
    for k, (i, j) in enumerate(_PAIRS):
        acc[..., i, :] += m[j] * w[..., k, :]
        acc[..., j, :] -= m[i] * w[..., k, :]
    return acc


def acceleration_jacobian(q, masses, floor=COLLISION_FLOOR):
    """``d accel / d q`` as an ``(8, 8)`` matrix in ``q.ravel()`` ordering."""
    q = np.asarray(q, dtype=float)
    m = masses.array
    d, r = _pair_vectors(q)
    _check(r, floor)
    jac = np.zeros((4, 2, 4, 2))
    eye = np.eye(2)
    for k, (i, j) in enumerate(_PAIRS):
        dk = d[k]
        rk = r[k]
        # derivative of (q_j - q_i)/|q_j - q_i|^3 with respect to q_j
        blk = eye / rk ** 3 - 3.0 * np.outer(dk, dk) / rk ** 5
        jac[i, :, j, :] += m[j] * blk
        jac[i, :, i, :] -= m[j] * blk
        jac[j, :, i, :] += m[i] * blk
        jac[j, :, j, :] -= m[i] * blk
    return jac.reshape(8, 8)


def newton_rhs(masses, floor=COLLISION_FLOOR):
    def rhs(t, y):
        return np.concatenate([y[8:], accelerations(y[:8].reshape(4, 2), masses, floor).ravel()])
    return rhs


def variational_rhs(masses, floor=COLLISION_FLOOR):
    """Right-hand side for the state plus its 16x16 fundamental matrix."""
    def rhs(t, y):
        q = y[:8].reshape(4, 2)
        phi = y[16:].reshape(16, 16)
        a = accelerations(q, masses, floor)
        jac = acceleration_jacobian(q, masses, floor)
        dphi = np.empty_like(phi)
        dphi[:8] = phi[8:]
        dphi[8:] = jac @ phi[:8]
        return np.concatenate([y[8:16], a.ravel(), dphi.ravel()])
    return rhs


def integrate(state0, t_end, masses, settings=None, t_eval=None, t_stops=(),
              floor=COLLISION_FLOOR):
    """Propagate Newton's equations from ``state0`` to ``t_end``.

    Samples are returned at ``t_eval`` (dense output) or, by default, at
    every accepted step.
    """
    settings = settings or IntegratorSettings()
    t0 = float(state0.t)
    sol = rkf45(newton_rhs(masses, floor), t0, state0.to_vector(), t_end,
                settings, t_stops=t_stops)
    if t_eval is None:
        times, ys = sol.ts, sol.ys
    else:
        times = np.asarray(t_eval, dtype=float)
        if np.any(np.diff(times) <= 0):
            raise ValueError("t_eval must be strictly increasing")
        ys = sol.sample(times)
    n = len(times)
    return Trajectory(np.array(times), ys[:, :8].reshape(n, 4, 2), ys[:, 8:16].reshape(n, 4, 2),
                      sol.stats.steps, sol.stats.rejected, sol.stats.max_error, sol)


def state_transition(state0, t_end, masses, settings=None, floor=COLLISION_FLOOR):
    """Integrate the 16-dimensional variational equations from the identity.

    Returns ``(final_state, phi)`` where ``phi`` maps perturbations of
    ``[q, v]`` at ``state0.t`` to perturbations at ``t_end``.
    """
    settings = settings or IntegratorSettings()
    y0 = np.concatenate([state0.to_vector(), np.eye(16).ravel()])
    sol = rkf45(variational_rhs(masses, floor), state0.t, y0, t_end,
                IntegratorSettings(**{**settings.__dict__, "dense_output": False}))
    y = sol.y_end
    return PhaseState.from_vector(y[:16], t_end), y[16:].reshape(16, 16)
