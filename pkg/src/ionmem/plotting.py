"""Matplotlib renderings of the report data (Agg backend, PNG)."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "figure.figsize": (5.0, 3.4),
    "figure.dpi": 120,
    "font.size": 9,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "legend.frameon": False,
    "xtick.direction": "in",
    "ytick.direction": "in",
    "lines.linewidth": 1.2,
    "lines.markersize": 4,
    "svg.hashsalt": "ionmem",
}


def _save(fig, path: Path):
    # no Software/date metadata so reruns are byte-identical
    fig.savefig(path, metadata={"Software": None})
    plt.close(fig)


def plot_levels(fields, energies: dict, clock_points, path):
    """Zeeman levels (GHz) vs field (mT), clock fields marked."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(constrained_layout=True)
        for (F, m), e in energies.items():
            ax.plot(np.asarray(fields) * 1e3, np.asarray(e) * 1e-9, color="C0" if F == 2 else "C1", lw=0.9)
            ax.annotate(f"{F},{m:+d}", (fields[-1] * 1e3, e[-1] * 1e-9), fontsize=6, xytext=(2, 0),
                        textcoords="offset points", va="center")
        for B in clock_points:
            ax.axvline(B * 1e3, color="0.6", ls=":", lw=0.8)
        ax.set_xlabel("B (mT)")
        ax.set_ylabel("E/h (GHz)")
        _save(fig, path)


def plot_parabola(B, nu, path, measured=None, B0=None):
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(constrained_layout=True)
        B = np.asarray(B)
        ref = B0 if B0 is not None else B[np.argmin(nu)]
        nu_min = float(np.min(nu))
        ax.plot((B - ref) * 1e6, np.asarray(nu) - nu_min, "k-", label="theory")
        if measured is not None:
            mB, sB, mnu, snu = measured
            ax.errorbar((np.asarray(mB) - ref) * 1e6, np.asarray(mnu) - nu_min, xerr=np.asarray(sB) * 1e6,
                        yerr=snu, fmt="o", mfc="none", color="C3", label="simulated data")
        ax.set_xlabel(r"$B - B_0$ ($\mu$T)")
        ax.set_ylabel(r"$\nu - \nu_{min}$ (Hz)")
        ax.legend()
        _save(fig, path)


def plot_phase_scans(scans, path):
    """``scans``: list of (label, phi, p, sigma, fit callable or None)."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(constrained_layout=True)
        for k, (label, phi, p, s, model) in enumerate(scans):
            c = f"C{k}"
            ax.errorbar(phi, p, yerr=s, fmt="s^o"[k % 3], color=c, mfc="none", label=label)
            if model is not None:
                x = np.linspace(np.min(phi), np.max(phi), 300)
                ax.plot(x, model(x), color=c, lw=0.9)
        ax.set_xlabel(r"analysis phase $\phi$ (rad)")
        ax.set_ylabel(r"$P_\uparrow$")
        ax.set_ylim(-0.05, 1.05)
        ax.legend()
        _save(fig, path)


def plot_contrast(T, b, s, path, b0=None, tau=None):
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(constrained_layout=True)
        ax.errorbar(T, b, yerr=s, fmt="o", color="k", mfc="none")
        if b0 is not None and tau is not None and np.isfinite(tau):
            x = np.linspace(0, max(T) * 1.05, 300)
            ax.plot(x, b0 * np.exp(-x / tau), "C3-", label=rf"$\tau$ = {tau:.1f} s")
            ax.legend()
        ax.set_xlabel(r"$T_R$ (s)")
        ax.set_ylabel("contrast b")
        ax.set_ylim(0, 1.05)
        _save(fig, path)


def plot_dfs_windows(t, p, s, centers, path, model=None):
    """One panel per delay window, as in the Psi+/Psi- oscillation figure."""
    centers = list(centers)
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(1, len(centers), sharey=True, constrained_layout=True,
                                 figsize=(1.6 * len(centers) + 1, 2.8))
        axes = np.atleast_1d(axes)
        edges = centers[1:] + [np.inf]
        for ax, lo, hi in zip(axes, centers, edges):
            m = (t >= lo - 1e-12) & (t < hi - 1e-12)
            ax.errorbar((t[m] - lo) * 1e3, p[m], yerr=s[m], fmt="o", color="k", mfc="none", ms=3)
            if model is not None and m.any():
                x = np.linspace(t[m].min(), t[m].max(), 200)
                ax.plot((x - lo) * 1e3, model(x), "C3-", lw=0.9)
            ax.set_title(f"t_D = {lo:g} s", fontsize=8)
            ax.set_xlabel("+ms")
        axes[0].set_ylabel(r"$P_{\Psi_-}$")
        axes[0].set_ylim(-0.05, 1.05)
        _save(fig, path)
