"""Figure rendering for scenario traces: written next to the CSV output."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .scenario import TimeSeries

_GAIN_LABELS = ("k1", "k2", "k3")


def render_figures(series: TimeSeries, outdir, stem: str = "scenario",
                   baseline: TimeSeries | None = None) -> list[Path]:
    """Render the standard report figures; returns the written paths.

    When a baseline series is given, the trajectory figure overlays both
    runs for comparison.
    """
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    paths = []
    t = series.t

    fig, axes = plt.subplots(2, 1, figsize=(8, 5), sharex=True)
    axes[0].plot(t, series.ref_m, color="0.7", lw=2.0, label="reference")
    axes[0].plot(t, series.p_m, "C0", lw=0.9, label="manipulator")
    if baseline is not None:
        axes[0].plot(baseline.t, baseline.p_m, "C3--", lw=0.9, label="baseline")
    axes[0].set_ylabel("manipulator pos")
    axes[0].legend(loc="upper right", fontsize=8)
    axes[1].plot(t, series.ref_v, color="0.7", lw=2.0)
    axes[1].plot(t, series.p_v, "C0", lw=0.9)
    if baseline is not None:
        axes[1].plot(baseline.t, baseline.p_v, "C3--", lw=0.9)
    axes[1].set_ylabel("vehicle pos")
    axes[1].set_xlabel("t [s]")
    fig.suptitle("Tracking")
    paths.append(_save(fig, outdir / f"{stem}_trajectories.png"))

    fig, axes = plt.subplots(2, 1, figsize=(8, 5), sharex=True)
    for j, lab in enumerate(_GAIN_LABELS):
        axes[0].plot(t, series.k_h[:, j], f"C{j}", lw=1.0, label=f"human {lab}")
        axes[0].plot(t, series.k_h_hat[:, j], f"C{j}", ls="--", lw=0.9,
                     label=f"estimate {lab}")
    axes[0].set_ylabel("human gains")
    axes[0].legend(loc="upper right", fontsize=7, ncols=3)
    for j, lab in enumerate(_GAIN_LABELS):
        axes[1].plot(t, series.k_a[:, j], f"C{j}", lw=1.0, label=f"automation {lab}")
    axes[1].set_ylabel("automation gains")
    axes[1].set_xlabel("t [s]")
    axes[1].legend(loc="upper right", fontsize=7, ncols=3)
    fig.suptitle("Feedback gains")
    paths.append(_save(fig, outdir / f"{stem}_gains.png"))

    fig, ax = plt.subplots(figsize=(8, 3))
    for j in range(series.eig.shape[1]):
        ax.plot(t, series.eig[:, j], lw=0.9)
    ax.axhline(0.0, color="k", lw=0.6)
    ax.set_xlabel("t [s]")
    ax.set_ylabel("Re(eig)")
    fig.suptitle("Closed-loop eigenvalues")
    paths.append(_save(fig, outdir / f"{stem}_eigenvalues.png"))

    fig, ax = plt.subplots(figsize=(8, 3))
    ax.semilogy(t, np.maximum(series.e_k, 1e-16), lw=0.9)
    ax.set_xlabel("t [s]")
    ax.set_ylabel("gain estimation error")
    fig.suptitle("Estimator convergence")
    paths.append(_save(fig, outdir / f"{stem}_gain_error.png"))

    return paths


def _save(fig, path: Path) -> Path:
    fig.savefig(path, dpi=120, bbox_inches="tight")
    plt.close(fig)
    return path
