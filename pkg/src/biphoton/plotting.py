"""Optional SVG figures. CSV tables remain the data contract."""
from __future__ import annotations

import os

import matplotlib
import numpy as np

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def plot_run(run, directory):
    paths = []
    fig, axes = plt.subplots(2, 4, figsize=(14, 6.5))
    for col, (name, axis) in enumerate(run.axes().items()):
        if axis.profile is None or axis.jdp is None:
            continue
        top, bottom = axes[0, col], axes[1, col]
        top.imshow(axis.jdp.resolved(), origin="lower", cmap="viridis")
        top.set_title(f"JDP {name}")
        prof = axis.profile
        bottom.plot(prof.offsets, prof.values, ".", ms=3, label="JDP")
        f = axis.fit
        dx = prof.offsets - f.center_px
        model = f.amp_signal * np.exp(-0.5 * (dx / f.width_signal_px) ** 2) + f.baseline
        if np.isfinite(f.width_noise_px):
            model = model + f.amp_noise * np.exp(-0.5 * (dx / f.width_noise_px) ** 2)
        bottom.plot(prof.offsets, model, "-", lw=1, label="fit")
        bottom.set_xlabel(f"{prof.coordinate} offset (px)")
        bottom.set_title(f"width {axis.width_px:.2f} px")
        bottom.legend(fontsize=7)
    fig.tight_layout()
    path = os.path.join(directory, "jdp_profiles.svg")
    fig.savefig(path, metadata={"Date": None})
    plt.close(fig)
    paths.append(path)
    return paths


def plot_sweep(sweep, directory):
    rows = sweep.trend_rows()
    beta = [r["beta"] for r in rows]
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.plot(beta, [r["gamma_x"] for r in rows], "o-", label="γx measured")
    ax.plot(beta, [r["gamma_y"] for r in rows], "s-", label="γy measured")
    ax.plot(beta, [r["theory_gamma_x"] for r in rows], ":", label="γx model")
    ax.plot(beta, [r["theory_gamma_y"] for r in rows], "--", label="γy model")
    ax.axhline(0.5, color="k", lw=0.8)
    ax.set_xlabel("β = ωy/ωx")
    ax.set_ylabel("γ (ħ)")
    ax.legend(fontsize=8)
    fig.tight_layout()
    path = os.path.join(directory, "gamma_vs_beta.svg")
    fig.savefig(path, metadata={"Date": None})
    plt.close(fig)
    return [path]
