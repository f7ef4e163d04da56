"""Figures written straight to files (Agg backend, no display needed)."""

from __future__ import annotations

import math

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

BODY_COLORS = ("tab:red", "black", "tab:blue", "tab:green")


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def plot_region(scan, path):
    """Shaded (theta/pi, mu) cells where a test path beats the homographic action."""
    fig, ax = plt.subplots(figsize=(6, 4.5))
    x = scan.theta_grid / math.pi
    y = scan.mu_grid
    ax.pcolormesh(x, y, scan.mask.astype(float), shading="nearest", cmap="Greys", vmin=0, vmax=1.6)
    ax.set_xlabel(r"$\theta/\pi$")
    ax.set_ylabel(r"$\mu$")
    ax.set_title("test path below homographic action")
    return _save(fig, path)


def plot_orbit(rows, path, title=None):
    """Body curves from the rows of :func:`spbc.extension.curve_table`."""
    arr = np.array([(r[1], r[4], r[5]) for r in rows])
    fig, ax = plt.subplots(figsize=(5, 5))
    for b in range(1, 5):
        sel = arr[:, 0] == b
        ax.plot(arr[sel, 1], arr[sel, 2], color=BODY_COLORS[b - 1], lw=0.9, label=f"q{b}")
        ax.plot(arr[sel, 1][:1], arr[sel, 2][:1], "o", color=BODY_COLORS[b - 1], ms=4)
    ax.set_aspect("equal")
    ax.legend(loc="upper right", fontsize=8)
    if title:
        ax.set_title(title)
    return _save(fig, path)


def plot_spectrum(report, path):
    """Reduced multipliers against the unit circle, and the W spectrum on [-1, 1]."""
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 4))
    t = np.linspace(0, 2 * math.pi, 400)
    ax1.plot(np.cos(t), np.sin(t), color="0.7", lw=0.8)
    lam = np.asarray(report.multipliers)
    ax1.plot(lam.real, lam.imag, "o", color="tab:blue", ms=5, label="reduced")
    if report.full_multipliers is not None:
        full = np.asarray(report.full_multipliers)
        ax1.plot(full.real, full.imag, "x", color="tab:red", ms=5, label="full")
    ax1.set_aspect("equal")
    ax1.legend(fontsize=8)
    ax1.set_title("multipliers")
    w = np.asarray(report.w_eigenvalues)
    ax2.axvspan(-1, 1, color="0.93")
    ax2.plot(w.real, w.imag, "o", color="tab:blue")
    ax2.set_xlim(-1.2, 1.2)
    ax2.set_title(f"W spectrum: {report.verdict}")
    return _save(fig, path)


def plot_actions(thetas, homographic, test_path, path, mu=None):
    fig, ax = plt.subplots(figsize=(6, 4))
    x = np.asarray(thetas) / math.pi
    ax.plot(x, homographic, label="homographic")
    ax.plot(x, test_path, label="test path")
    ax.set_xlabel(r"$\theta/\pi$")
    ax.set_ylabel("action")
    if mu is not None:
        ax.set_title(rf"$\mu$ = {mu:g}")
    ax.legend()
    return _save(fig, path)
