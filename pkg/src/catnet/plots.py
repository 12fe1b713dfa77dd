"""Optional SVG/PNG figures (requires matplotlib)."""
from __future__ import annotations

from pathlib import Path

import numpy as np


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.rcParams["svg.hashsalt"] = "catnet"
    return plt


def _save(fig, path):
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    meta = {"Date": None} if p.suffix == ".svg" else {}
    fig.savefig(p, metadata=meta)
    return p


def plot_trajectories(times, paths, path, max_paths: int = 20):
    """First ``max_paths`` sample paths, one panel per coordinate."""
    plt = _pyplot()
    d = paths.shape[2]
    fig, axes = plt.subplots(d, 1, figsize=(6, 2 * d), sharex=True, squeeze=False)
    for k in range(d):
        ax = axes[k, 0]
        for i in range(min(max_paths, paths.shape[0])):
            ax.plot(times, paths[i, :, k], lw=0.7)
        ax.set_ylabel(f"x_{k + 1}")
    axes[-1, 0].set_xlabel("t")
    out = _save(fig, path)
    plt.close(fig)
    return out


def plot_density(grid, values, path, samples=None, label="density"):
    """Density curve, optionally overlaid on a normalised histogram of samples."""
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(6, 4))
    if samples is not None:
        ax.hist(np.asarray(samples), bins=60, density=True, alpha=0.4, label="samples")
    ax.plot(grid, values, lw=1.5, label=label)
    ax.legend()
    out = _save(fig, path)
    plt.close(fig)
    return out
