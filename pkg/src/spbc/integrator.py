"""Adaptive Runge-Kutta-Fehlberg 4(5) integrator with Hermite dense output.

The stepper is generic over the right-hand side ``f(t, y) -> dy/dt`` so the
Cartesian flow, the reduced Hamiltonian flow and the variational systems all
share one implementation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import StepFailure

# Fehlberg tableau
_C = np.array([0.0, 1 / 4, 3 / 8, 12 / 13, 1.0, 1 / 2])
_A = (
    (),
    (1 / 4,),
    (3 / 32, 9 / 32),
    (1932 / 2197, -7200 / 2197, 7296 / 2197),
    (439 / 216, -8.0, 3680 / 513, -845 / 4104),
    (-8 / 27, 2.0, -3544 / 2565, 1859 / 4104, -11 / 40),
)
_B4 = np.array([25 / 216, 0.0, 1408 / 2565, 2197 / 4104, -1 / 5, 0.0])
_B5 = np.array([16 / 135, 0.0, 6656 / 12825, 28561 / 56430, -9 / 50, 2 / 55])
_E = _B5 - _B4


@dataclass(frozen=True)
class IntegratorSettings:
    """Tolerances and step bounds for :func:`rkf45`."""

    abs_tol: float = 1e-12
    rel_tol: float = 1e-12
    min_step: float = 1e-13
    max_step: float = 0.05
    dense_output: bool = True
    safety: float = 0.9
    first_step: float | None = None
    max_steps: int = 5_000_000

    def __post_init__(self):
        if self.abs_tol <= 0 or self.rel_tol <= 0:
            raise ValueError("tolerances must be positive")
        if not 0 < self.min_step < self.max_step:
            raise ValueError("need 0 < min_step < max_step")


@dataclass
class IntegratorStats:
    steps: int = 0
    rejected: int = 0
    max_error: float = 0.0


class OdeSolution:
    """Accepted step nodes of an integration plus cubic Hermite interpolation."""

    def __init__(self, ts, ys, fs, stats):
        self.ts = np.asarray(ts)
        self.ys = np.asarray(ys)
        self.fs = np.asarray(fs)
        self.stats = stats

    @property
    def t0(self):
        return self.ts[0]

    @property
    def t_end(self):
        return self.ts[-1]

    @property
    def y_end(self):
        return self.ys[-1]

    def __call__(self, t):
        t = float(t)
        ts = self.ts
        if t < ts[0] - 1e-12 * max(1.0, abs(ts[0])) or t > ts[-1] + 1e-12 * max(1.0, abs(ts[-1])):
            raise ValueError(f"t={t} outside [{ts[0]}, {ts[-1]}]")
        i = int(np.searchsorted(ts, t, side="right")) - 1
        i = min(max(i, 0), len(ts) - 2)
        if len(ts) == 1:
            return self.ys[0].copy()
        if t == ts[i]:
            return self.ys[i].copy()
        if t == ts[i + 1]:
            return self.ys[i + 1].copy()
        h = ts[i + 1] - ts[i]
        s = (t - ts[i]) / h
        s2, s3 = s * s, s * s * s
        h00 = 2 * s3 - 3 * s2 + 1
        h10 = s3 - 2 * s2 + s
        h01 = -2 * s3 + 3 * s2
        h11 = s3 - s2
        return (h00 * self.ys[i] + h10 * h * self.fs[i]
                + h01 * self.ys[i + 1] + h11 * h * self.fs[i + 1])

    def sample(self, times):
        return np.array([self(t) for t in times])


def _initial_step(fun, t0, y0, f0, settings, span):
    if settings.first_step is not None:
        return min(settings.first_step, span)
    scale = settings.abs_tol + settings.rel_tol * np.abs(y0)
    d0 = np.max(np.abs(y0) / scale)
    d1 = np.max(np.abs(f0) / scale)
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    h0 = min(h0, span)
    f1 = fun(t0 + h0, y0 + h0 * f0)
    d2 = np.max(np.abs(f1 - f0) / scale) / h0
    if max(d1, d2) <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** 0.2
    return min(100 * h0, h1, settings.max_step, span)


def rkf45(fun, t0, y0, t_end, settings=None, t_stops=()):
    """Integrate ``y' = fun(t, y)`` from ``t0`` to ``t_end``.

    Steps are clipped so that every time in ``t_stops`` (and ``t_end``) is an
    accepted node, which makes values there exact rather than interpolated.
    """
    settings = settings or IntegratorSettings()
    y = np.array(y0, dtype=float)
    t = float(t0)
    t_end = float(t_end)
    if t_end < t:
        raise ValueError("only forward integration is supported")
    f = fun(t, y)
    ts, ys, fs = [t], [y.copy()], [f.copy()]
    stats = IntegratorStats()
    if t_end == t:
        return OdeSolution(ts, ys, fs, stats)

    stops = sorted(s for s in t_stops if t < s < t_end) + [t_end]
    stop_i = 0
    h = _initial_step(fun, t, y, f, settings, t_end - t)
    atol, rtol, safety = settings.abs_tol, settings.rel_tol, settings.safety
    k = np.empty((6,) + y.shape)
    while True:
        target = stops[stop_i]
        h = min(h, settings.max_step)
        h_free = h
        last = False
        if t + h >= target - 1e-14 * max(1.0, abs(target)):
            h = target - t
            last = True
        k[0] = f
        for s in range(1, 6):
            a = _A[s]
            ys_ = y.copy()
            for j, aj in enumerate(a):
                if aj != 0.0:
                    ys_ += (h * aj) * k[j]
            k[s] = fun(t + _C[s] * h, ys_)
        y_new = y + h * np.tensordot(_B4, k, axes=1)
        err_vec = h * np.tensordot(_E, k, axes=1)
        scale = atol + rtol * np.maximum(np.abs(y), np.abs(y_new))
        err = float(np.max(np.abs(err_vec) / scale))
        if err <= 1.0:
            t = target if last else t + h
            y = y_new
            f = fun(t, y)
            stats.steps += 1
            stats.max_error = max(stats.max_error, float(np.max(np.abs(err_vec))))
            if settings.dense_output or last:
                ts.append(t)
                ys.append(y.copy())
                fs.append(f.copy())
            if last:
                stop_i += 1
                if stop_i == len(stops):
                    break
            fac = 5.0 if err == 0.0 else min(5.0, safety * err ** -0.2)
            h_next = h * fac
            if last:
                # a step shortened to land on a stop says nothing about the scale
                h_next = max(h_next, h_free)
            h = h_next
        else:
            stats.rejected += 1
            h = h * max(0.1, safety * err ** -0.25)
            if h < settings.min_step:
                raise StepFailure(f"step size underflow at t={t:.6g} (h={h:.3g})")
        if stats.steps + stats.rejected > settings.max_steps:
            raise StepFailure(f"exceeded {settings.max_steps} steps at t={t:.6g}")
    return OdeSolution(ts, ys, fs, stats)
