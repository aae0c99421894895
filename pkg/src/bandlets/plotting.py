"""Matplotlib figures for the CLI (rendered off-screen to image files)."""

from __future__ import annotations

import math

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .synthlab import RiskReport  # noqa: E402


def plot_risk_curves(reports: list[RiskReport], path) -> None:
    """Log-log risk against ``sigma^2 |log sigma|`` with fitted lines."""
    fig, ax = plt.subplots(figsize=(5.5, 4.0))
    for rep in reports:
        sig = np.array([r[0] for r in rep.rows])
        mse = rep.mse
        se = np.array([r[3] for r in rep.rows])
        x = sig**2 * np.abs(np.log(sig))
        label = rep.label
        if math.isfinite(rep.slope):
            label += f" (slope {rep.slope:.3f})"
            ax.plot(x, np.exp(rep.intercept) * x**rep.slope, "--", lw=0.8, color="0.5")
        ax.errorbar(x, mse, yerr=se, marker="o", ms=4, capsize=2, label=label)
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel(r"$\sigma^2\,|\log\sigma|$")
    ax.set_ylabel("mean squared error")
    ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_denoise(obs: np.ndarray, out: np.ndarray, path, title: str = "denoised") -> None:
    """Observation and estimate side by side on a shared grey scale."""
    lo = float(min(obs.min(), out.min()))
    hi = float(max(obs.max(), out.max()))
    if hi == lo:
        hi = lo + 1.0
    fig, axes = plt.subplots(1, 2, figsize=(8.0, 4.0))
    for ax, img, name in zip(axes, (obs, out), ("observation", title)):
        ax.imshow(img, cmap="gray", vmin=lo, vmax=hi, interpolation="nearest")
        ax.set_title(name)
        ax.set_axis_off()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
