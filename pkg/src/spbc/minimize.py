"""Two-step action minimization over paths with structural boundaries.

The path is piecewise linear on a uniform grid; the kinetic part of the
action is exact for that interpolant and the potential is integrated by the
midpoint rule. Minimization is a preconditioned Polak-Ribiere conjugate
gradient whose preconditioner is the (constant) Hessian of the kinetic part,
so convergence does not degrade as the grid is refined.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp
from scipy.linalg import null_space
from scipy.optimize import minimize as scipy_minimize
from scipy.sparse.linalg import splu

from .boundary import (BoundaryParams, build_qend, build_qstart, check_admissible_angle,
                       membership_B, projector_B, start_operator, template_B)
from .dynamics import (COLLISION_FLOOR, PhaseState, _I, _J, _pair_vectors, accelerations,
                       newton_rhs, state_transition)
from .errors import CollisionError, DivergenceWarning, NoConvergence, ShootingDivergence
from .integrator import IntegratorSettings, rkf45

log = logging.getLogger(__name__)


@dataclass
class DiscretePath:
    """Nodes of a path at ``t_k = k*T/N``; ``nodes[0]`` in A and ``nodes[N]`` in B."""

    T: float
    nodes: np.ndarray
    a: BoundaryParams
    theta: float

    def __post_init__(self):
        self.nodes = np.asarray(self.nodes, dtype=float)
        if self.nodes.ndim != 3 or self.nodes.shape[1:] != (4, 2):
            raise ValueError("nodes must have shape (N+1, 4, 2)")
        if self.N < 2:
            raise ValueError("need at least two segments")

    @property
    def N(self):
        return self.nodes.shape[0] - 1

    @property
    def dt(self):
        return self.T / self.N

    @property
    def times(self):
        return np.linspace(0.0, self.T, self.N + 1)

    def check_endpoints(self, masses, tol=1e-14):
        a = self.a.a
        q0 = build_qstart(*a[:3], self.theta, masses)
        q1 = build_qend(*a[3:], masses)
        scale = max(1.0, float(np.max(np.abs(self.nodes))))
        return (np.max(np.abs(self.nodes[0] - q0)) <= tol * scale
                and np.max(np.abs(self.nodes[-1] - q1)) <= tol * scale)

    def refined(self, factor=2):
        """Linear prolongation onto a grid with ``factor`` times more segments."""
        s = np.linspace(0.0, self.N, self.N * factor + 1)
        k = np.minimum(np.floor(s).astype(int), self.N - 1)
        w = (s - k)[:, None, None]
        nodes = (1 - w) * self.nodes[k] + w * self.nodes[k + 1]
        return DiscretePath(self.T, nodes, self.a, self.theta)


@dataclass(frozen=True)
class MinimizerSettings:
    grad_tol: float = 1e-10
    max_inner_iter: int = 4000
    armijo_c1: float = 1e-4
    backtrack: float = 0.25
    restart_every: int = 50
    simplex_tol: float = 1e-12
    N_schedule: tuple = (512,)
    N_polish: int = 2048
    T: float = 1.0
    divergence_bound: float = 50.0
    collision_floor: float = COLLISION_FLOOR

    def __post_init__(self):
        if self.grad_tol <= 0 or self.simplex_tol <= 0:
            raise ValueError("tolerances must be positive")
        if any(n < 2 for n in self.N_schedule):
            raise ValueError("grid sizes must be at least 2")


@dataclass
class MinimizationResult:
    path: DiscretePath
    action: float
    a: BoundaryParams
    converged: bool
    grad_norm: float
    iterations: int = 0
    history: list = field(default_factory=list, repr=False)
    refinement_residuals: list = field(default_factory=list)
    alternatives: list = field(default_factory=list, repr=False)

    @property
    def theta(self):
        return self.path.theta


# ---------------------------------------------------------------------------
# action and gradient

def _node_action_and_grad(nodes, dt, masses, floor, need_grad=True):
    m = masses.array
    diff = nodes[1:] - nodes[:-1]
    kin = float(np.sum(m[None, :, None] * diff * diff)) / (2 * dt)
    mid = 0.5 * (nodes[1:] + nodes[:-1])
    d, r = _pair_vectors(mid)
    if np.min(r) < floor:
        raise CollisionError(f"midpoint pair distance {np.min(r):.3e} below floor")
    pot = float(np.sum(m[_I] * m[_J] / r)) * dt
    if not need_grad:
        return kin + pot, None
    g = np.zeros_like(nodes)
    flux = m[None, :, None] * diff / dt
    g[:-1] -= flux
    g[1:] += flux
    # grad U = m * accel; each midpoint shares it equally between its two nodes
    gu = m[None, :, None] * accelerations(mid, masses, floor) * (0.5 * dt)
    g[:-1] += gu
    g[1:] += gu
    return kin + pot, g


def discretized_action(path, masses, floor=COLLISION_FLOOR):
    """Kinetic part exact for the piecewise-linear path, midpoint-rule potential."""
    val, _ = _node_action_and_grad(path.nodes, path.dt, masses, floor, need_grad=False)
    return val


def action_gradient(path, masses, floor=COLLISION_FLOOR):
    """Gradient with respect to interior nodes ``(N-1, 4, 2)`` and to ``(a1..a6)``."""
    _, g = _node_action_and_grad(path.nodes, path.dt, masses, floor)
    ga = np.concatenate([start_operator(path.theta, masses).T @ g[0].ravel(),
                         template_B(masses).T @ g[-1].ravel()])
    return g[1:-1].copy(), ga


# ---------------------------------------------------------------------------
# optimization problem in reduced variables

class _PathProblem:
    """Maps optimization variables onto path nodes.

    Variables are the interior nodes, optionally followed by the six boundary
    parameters (joint descent over paths with free boundaries in A and B).
    """

    def __init__(self, theta, masses, N, T, a, free_boundary, floor):
        self.theta, self.masses, self.N, self.T = theta, masses, N, T
        self.dt = T / N
        self.free_boundary = free_boundary
        self.floor = floor
        self.SA = start_operator(theta, masses)
        self.LB = template_B(masses)
        self.a_fixed = np.asarray(a, dtype=float)
        self.n_int = (N - 1) * 8
        self.n = self.n_int + (6 if free_boundary else 0)
        self._factor = splu(self._kinetic_hessian().tocsc())

    def _embedding(self):
        rows, cols, vals = [], [], []
        for k in range(self.n_int):
            rows.append(8 + k)
            cols.append(k)
            vals.append(1.0)
        if self.free_boundary:
            for i in range(8):
                for j in range(3):
                    if self.SA[i, j] != 0:
                        rows.append(i)
                        cols.append(self.n_int + j)
                        vals.append(self.SA[i, j])
                    if self.LB[i, j] != 0:
                        rows.append(8 * self.N + i)
                        cols.append(self.n_int + 3 + j)
                        vals.append(self.LB[i, j])
        return sp.csr_matrix((vals, (rows, cols)), shape=(8 * (self.N + 1), self.n))

    def _kinetic_hessian(self):
        N = self.N
        diff = sp.diags([-np.ones(N), np.ones(N)], [0, 1], shape=(N, N + 1))
        mvec = np.tile(np.repeat(self.masses.array, 2), N)
        D = sp.kron(diff, sp.eye(8))
        K = D.T @ sp.diags(mvec) @ D / self.dt
        E = self._embedding()
        H = (E.T @ K @ E).tocsc()
        return H + sp.eye(self.n) * 1e-14 * abs(H).max()

    def precondition(self, g):
        return self._factor.solve(g)

    def nodes(self, z):
        if self.free_boundary:
            a = z[self.n_int:]
        else:
            a = self.a_fixed
        x0 = self.SA @ a[:3]
        x1 = self.LB @ a[3:]
        inner = z[:self.n_int].reshape(self.N - 1, 4, 2)
        return np.concatenate([x0.reshape(1, 4, 2), inner, x1.reshape(1, 4, 2)])

    def a_of(self, z):
        return z[self.n_int:].copy() if self.free_boundary else self.a_fixed.copy()

    def pack(self, nodes, a):
        z = nodes[1:-1].ravel()
        if self.free_boundary:
            z = np.concatenate([z, np.asarray(a, dtype=float)])
        return z.copy()

    def value(self, z):
        return _node_action_and_grad(self.nodes(z), self.dt, self.masses, self.floor, False)[0]

    def value_and_grad(self, z):
        f, g = _node_action_and_grad(self.nodes(z), self.dt, self.masses, self.floor)
        gz = g[1:-1].ravel()
        if self.free_boundary:
            ga = np.concatenate([self.SA.T @ g[0].ravel(), self.LB.T @ g[-1].ravel()])
            gz = np.concatenate([gz, ga])
        return f, gz


def _safe_value_grad(problem, z):
    try:
        return problem.value_and_grad(z)
    except CollisionError:
        return math.inf, None


def _preconditioned_cg(problem, z0, settings, max_iter=None):
    """Polak-Ribiere (PR+) conjugate gradient with restarts and an Armijo
    safeguard around a secant step-length estimate."""
    max_iter = settings.max_inner_iter if max_iter is None else max_iter
    z = z0.copy()
    f, g = problem.value_and_grad(z)
    s = problem.precondition(g)
    gs = float(g @ s)
    d = -s
    history = [f]
    gnorm = float(np.linalg.norm(g))
    it = 0
    since_restart = 0
    while gnorm > settings.grad_tol and it < max_iter:
        it += 1
        slope = float(g @ d)
        if slope >= 0:
            d = -s
            slope = -gs
            since_restart = 0
        noise = 1e-14 * max(1.0, abs(f))
        alpha = 1.0
        accepted = None
        for _ in range(60):
            f1, g1 = _safe_value_grad(problem, z + alpha * d)
            if not math.isfinite(f1):
                alpha *= settings.backtrack
                continue
            cands = [(alpha, f1, g1)]
            slope1 = float(g1 @ d)
            if slope1 > slope:
                a_sec = alpha * (-slope) / (slope1 - slope)
                if 0 < a_sec and abs(a_sec - alpha) > 1e-3 * alpha:
                    f2, g2 = _safe_value_grad(problem, z + a_sec * d)
                    if math.isfinite(f2):
                        cands.append((a_sec, f2, g2))
            best = None
            for a_c, f_c, g_c in cands:
                if f_c <= f + settings.armijo_c1 * a_c * slope + noise:
                    if best is None or f_c < best[1] - noise or (
                            abs(f_c - best[1]) <= noise and abs(g_c @ d) < abs(best[2] @ d)):
                        best = (a_c, f_c, g_c)
            if best is not None:
                accepted = best
                break
            alpha *= settings.backtrack
        if accepted is None:
            if since_restart == 0:
                break
            d = -s
            since_restart = 0
            continue
        alpha, f_new, g_new = accepted
        z = z + alpha * d
        s_new = problem.precondition(g_new)
        gs_new = float(g_new @ s_new)
        beta = max(0.0, float(g_new @ (s_new - s)) / gs) if gs > 0 else 0.0
        since_restart += 1
        if since_restart >= settings.restart_every:
            beta = 0.0
            since_restart = 0
        d = -s_new + beta * d
        f, g, s, gs = f_new, g_new, s_new, gs_new
        history.append(f)
        gnorm = float(np.linalg.norm(g))
    return z, f, gnorm, it, history


def straight_line_path(a, theta, masses, N, T=1.0):
    """Constant-velocity path between the boundary configurations."""
    a = np.asarray(getattr(a, "a", a), dtype=float)
    q0 = build_qstart(*a[:3], theta, masses)
    q1 = build_qend(*a[3:], masses)
    s = np.linspace(0.0, 1.0, N + 1)[:, None, None]
    return DiscretePath(T, (1 - s) * q0 + s * q1, BoundaryParams(a), theta)


def _resample(path, N):
    if path.N == N:
        return path
    t_old = np.linspace(0.0, 1.0, path.N + 1)
    t_new = np.linspace(0.0, 1.0, N + 1)
    flat = path.nodes.reshape(path.N + 1, 8)
    nodes = np.column_stack([np.interp(t_new, t_old, flat[:, c]) for c in range(8)])
    return DiscretePath(path.T, nodes.reshape(N + 1, 4, 2), path.a, path.theta)


def minimize_inner(a, theta, masses, settings=None, N=None, seed_path=None, raise_on_failure=False):
    """Minimize the discretized action over interior nodes with fixed boundaries."""
    settings = settings or MinimizerSettings()
    check_admissible_angle(theta)
    N = N or settings.N_schedule[0]
    a = np.asarray(getattr(a, "a", a), dtype=float)
    if seed_path is None:
        seed_path = straight_line_path(a, theta, masses, N, settings.T)
    else:
        seed_path = _resample(seed_path, N)
    prob = _PathProblem(theta, masses, N, settings.T, a, False, settings.collision_floor)
    z0 = prob.pack(seed_path.nodes, a)
    z, f, gnorm, it, hist = _preconditioned_cg(prob, z0, settings)
    path = DiscretePath(settings.T, prob.nodes(z), BoundaryParams(a), theta)
    res = MinimizationResult(path, f, BoundaryParams(a), gnorm <= settings.grad_tol, gnorm, it, hist)
    if not res.converged and raise_on_failure:
        raise NoConvergence(f"inner minimization stopped at |g|={gnorm:.3e}", res)
    return res


def _joint_descent(a0, theta, masses, settings, seed_path=None):
    """Joint minimization over interior nodes and boundary parameters, run
    through the configured grid schedule."""
    a = np.asarray(a0, dtype=float)
    path = seed_path
    res = None
    total_it = 0
    residuals = []
    for N in settings.N_schedule:
        if path is None:
            path = straight_line_path(a, theta, masses, N, settings.T)
        else:
            path = _resample(path, N)
        prob = _PathProblem(theta, masses, N, settings.T, a, True, settings.collision_floor)
        z, f, gnorm, it, hist = _preconditioned_cg(prob, prob.pack(path.nodes, a), settings)
        total_it += it
        a = prob.a_of(z)
        path = DiscretePath(settings.T, prob.nodes(z), BoundaryParams(a), theta)
        residuals.append((N, f, gnorm))
        res = MinimizationResult(path, f, BoundaryParams(a), gnorm <= settings.grad_tol,
                                 gnorm, total_it, hist, residuals)
        if np.linalg.norm(a) > settings.divergence_bound:
            warnings.warn(f"boundary parameters grew to |a|={np.linalg.norm(a):.3g}",
                          DivergenceWarning, stacklevel=3)
            break
    return res


def _nelder_mead(a0, theta, masses, settings):
    N = settings.N_schedule[0]
    cache = {"path": None}

    def inner(a):
        try:
            r = minimize_inner(a, theta, masses, settings, N=N, seed_path=cache["path"])
        except CollisionError:
            return 1e6
        cache["path"] = r.path
        return r.action

    out = scipy_minimize(inner, np.asarray(a0, float), method="Nelder-Mead",
                         options={"xatol": settings.simplex_tol, "fatol": settings.simplex_tol,
                                  "maxiter": 4000, "maxfev": 8000})
    res = minimize_inner(out.x, theta, masses, settings, N=N, seed_path=cache["path"])
    res.converged = bool(res.converged and out.success)
    res.refinement_residuals.append(("nelder-mead", out.nit, out.fun))
    if np.linalg.norm(out.x) > settings.divergence_bound:
        warnings.warn(f"boundary parameters grew to |a|={np.linalg.norm(out.x):.3g}",
                      DivergenceWarning, stacklevel=3)
    return res


def default_seeds(theta, masses, T=1.0):
    """Known boundary vectors (minimizers at 4pi/5), cheapest test path first."""
    from .reference import A_TEST, test_path_action
    seeds = []
    for vec in A_TEST.values():
        try:
            val = test_path_action(theta, masses.mu, vec, T, masses.m1)
        except CollisionError:
            continue
        seeds.append((val, np.array(vec)))
    seeds.sort(key=lambda x: x[0])
    return [s for _, s in seeds]


def minimize_outer(theta, masses, a_init=None, settings=None, strategy="joint", seeds=None,
                   max_seeds=2):
    """Minimize the action over paths whose ends lie in A and B.

    Every seed is run to convergence; the lowest action is returned and the
    others are kept in ``alternatives``.
    """
    settings = settings or MinimizerSettings()
    check_admissible_angle(theta)
    if seeds is None:
        seeds = [] if a_init is None else [np.asarray(getattr(a_init, "a", a_init), float)]
        if a_init is None:
            seeds = default_seeds(theta, masses, settings.T)[:max_seeds]
    results = []
    for a0 in seeds:
        try:
            if strategy == "joint":
                r = _joint_descent(a0, theta, masses, settings)
            elif strategy in ("nelder-mead", "nm"):
                r = _nelder_mead(a0, theta, masses, settings)
            else:
                raise ValueError(f"unknown strategy {strategy!r}")
        except CollisionError as exc:
            log.warning("seed %s failed: %s", a0, exc)
            continue
        results.append(r)
    if not results:
        raise NoConvergence("no seed produced a minimizer")
    results.sort(key=lambda r: r.action)
    distinct = [results[0]]
    for r in results[1:]:
        if all(abs(r.action - d.action) > 1e-8 or
               np.max(np.abs(r.a.as_array() - d.a.as_array())) > 1e-6 for d in distinct):
            distinct.append(r)
    best = distinct[0]
    best.alternatives = distinct[1:]
    return best


def polish(result, masses, settings=None):
    """Re-converge a minimizer on the finer polishing grid."""
    settings = settings or MinimizerSettings()
    fine = replace(settings, N_schedule=(settings.N_polish,))
    r = _joint_descent(result.a.as_array(), result.theta, masses, fine,
                       seed_path=result.path)
    r.refinement_residuals = list(result.refinement_residuals) + r.refinement_residuals
    return r


# ---------------------------------------------------------------------------
# shooting refinement

def natural_constraints_start(theta, masses):
    """Rows annihilating admissible initial velocities: zero momentum and the
    natural boundary conditions of the free start configuration."""
    m = np.repeat(masses.array, 2)
    px = np.zeros(8)
    px[0::2] = masses.array
    py = np.zeros(8)
    py[1::2] = masses.array
    nat = start_operator(theta, masses).T * m[None, :]
    return np.vstack([px, py, nat])


def velocity_basis(theta, masses):
    """Orthonormal ``(8, 3)`` basis of admissible initial velocities."""
    return null_space(natural_constraints_start(theta, masses))


@dataclass
class ShootingReport:
    residual: float
    iterations: int
    a: BoundaryParams
    history: list = field(default_factory=list)
    unknowns: np.ndarray | None = None


def _shoot_residual(state_T, masses, PB_perp, LBm):
    q = state_T[:8]
    v = state_T[8:16]
    return np.concatenate([PB_perp @ q, LBm @ v])


def _state_from_unknowns(u, SA, Vb):
    return np.concatenate([SA @ u[:3], Vb @ u[3:]])


def shoot(u0, theta, masses, T=1.0, tol=1e-10, max_iter=40, integrator=None):
    """Damped Gauss-Newton (Levenberg-Marquardt) on the boundary-value problem.

    Unknowns are the start shape ``(a1, a2, a3)`` and three coordinates of the
    initial velocity in the admissible subspace. Residuals are the distance of
    ``q(T)`` from B and the natural boundary conditions at ``t = T``.
    """
    integrator = integrator or IntegratorSettings()
    SA = start_operator(theta, masses)
    Vb = velocity_basis(theta, masses)
    D = np.zeros((16, 6))
    D[:8, :3] = SA
    D[8:, 3:] = Vb
    PB_perp = np.eye(8) - projector_B(masses)
    LBm = template_B(masses).T * np.repeat(masses.array, 2)[None, :]
    S = np.zeros((11, 16))
    S[:8, :8] = PB_perp
    S[8:, 8:] = LBm
    u = np.asarray(u0, dtype=float).copy()
    lam = 1e-6
    history = []

    def evaluate(u):
        st0 = PhaseState.from_vector(_state_from_unknowns(u, SA, Vb))
        stT, phi = state_transition(st0, T, masses, integrator)
        r = S @ stT.to_vector()
        return r, S @ phi @ D

    r, J = evaluate(u)
    rn = float(np.max(np.abs(r)))
    history.append(rn)
    it = 0
    while rn > tol and it < max_iter:
        it += 1
        JtJ = J.T @ J
        g = J.T @ r
        improved = False
        for _ in range(12):
            A = JtJ + lam * np.diag(np.maximum(np.diag(JtJ), 1e-12))
            step = np.linalg.solve(A, -g)
            try:
                r_new, J_new = evaluate(u + step)
            except CollisionError:
                lam *= 10
                continue
            rn_new = float(np.max(np.abs(r_new)))
            if np.linalg.norm(r_new) < np.linalg.norm(r):
                u, r, J, rn = u + step, r_new, J_new, rn_new
                lam = max(lam / 10, 1e-12)
                improved = True
                break
            lam *= 10
        history.append(rn)
        if not improved:
            break
    return u, rn, it, history


def unknowns_from_state(state, theta, masses):
    """Project a phase state onto the shooting unknowns."""
    SA = start_operator(theta, masses)
    a_start, *_ = np.linalg.lstsq(SA, state.q.ravel(), rcond=None)
    Vb = velocity_basis(theta, masses)
    beta = Vb.T @ state.v.ravel()
    return np.concatenate([a_start, beta])


def state_from_unknowns(u, theta, masses):
    SA = start_operator(theta, masses)
    Vb = velocity_basis(theta, masses)
    return PhaseState.from_vector(_state_from_unknowns(np.asarray(u, float), SA, Vb))


def refine_state(state, theta, masses, T=1.0, tol=1e-10, max_iter=40, integrator=None):
    """Shooting refinement starting from an approximate phase state."""
    u0 = unknowns_from_state(state, theta, masses)
    u, rn, it, hist = shoot(u0, theta, masses, T, tol, max_iter, integrator)
    seed = state_from_unknowns(u, theta, masses)
    end = rkf45(newton_rhs(masses), 0.0, seed.to_vector(), T,
                integrator or IntegratorSettings()).y_end
    a_end = membership_B(end[:8].reshape(4, 2), masses).params
    report = ShootingReport(rn, it, BoundaryParams(np.concatenate([u[:3], a_end])), hist, u)
    if rn > tol:
        raise ShootingDivergence(f"shooting stalled at residual {rn:.3e}", (seed, report))
    return seed, report


def refine_to_seed(result, masses, settings=None, tol=1e-10, integrator=None):
    """Turn a converged discrete minimizer into a machine-precision initial state."""
    settings = settings or MinimizerSettings()
    path = result.path
    dt = path.dt
    x = path.nodes
    v0 = (-3 * x[0] + 4 * x[1] - x[2]) / (2 * dt)
    guess = PhaseState(x[0], v0)
    return refine_state(guess, path.theta, masses, path.T, tol, integrator=integrator)


# ---------------------------------------------------------------------------
# coercivity diagnostic

def kinetic_lower_bound(a, theta, masses, T=1.0):
    """``sum m_i |Qend_i - Qstart_i|^2 / (2T)``, a lower bound on the action."""
    a = np.asarray(getattr(a, "a", a), dtype=float)
    q0 = build_qstart(*a[:3], theta, masses)
    q1 = build_qend(*a[3:], masses)
    return 0.5 * float(np.sum(masses.array * np.sum((q1 - q0) ** 2, axis=1))) / T


def coercivity_probe(theta, masses, radius_schedule=(1, 2, 5, 10, 20, 50, 100), n_directions=64,
                     T=1.0, seed=0):
    """Minimum of the kinetic lower bound over sampled directions at each radius.

    Rows are ``(radius, sampled_min, exact_min)``; the exact minimum comes from
    the smallest eigenvalue of the quadratic form and grows like radius**2.
    """
    check_admissible_angle(theta)
    rng = np.random.default_rng(seed)
    dirs = np.vstack([np.eye(6), -np.eye(6), rng.normal(size=(n_directions, 6))])
    dirs /= np.linalg.norm(dirs, axis=1)[:, None]
    G = np.hstack([-start_operator(theta, masses), template_B(masses)])
    W = np.diag(np.repeat(masses.array, 2))
    quad_form = 0.5 * G.T @ W @ G / T
    lam_min = float(np.linalg.eigvalsh(quad_form)[0])
    rows = []
    for rad in radius_schedule:
        vals = [kinetic_lower_bound(rad * d, theta, masses, T) for d in dirs]
        rows.append((float(rad), float(min(vals)), lam_min * rad * rad))
    return rows
