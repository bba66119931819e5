"""Figure rendering for the report path of the CLI.

All functions take already-computed arrays and write a PNG next to the CSV
output; nothing here feeds back into the numerics.  The Agg backend is forced
so rendering works headless.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def _finish(fig, path: str):
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_density(x: np.ndarray, density: np.ndarray, path: str,
                   title: str = "posterior density"):
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(x, density, lw=1.5)
    ax.fill_between(x, 0, density, alpha=0.2)
    ax.set_xlabel("x")
    ax.set_ylabel("density")
    ax.set_title(title)
    _finish(fig, path)


def render_paths(t: np.ndarray, paths: np.ndarray, path: str,
                 title: str = "sample paths", ylabel: str = "x"):
    """paths may be 1-D (one path) or 2-D (paths as rows)."""
    fig, ax = plt.subplots(figsize=(6, 4))
    arr = np.atleast_2d(paths)
    for row in arr[:50]:
        ax.plot(t, row, lw=0.8, alpha=0.8 if arr.shape[0] == 1 else 0.4)
    ax.set_xlabel("t")
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    _finish(fig, path)


def render_filter_tracks(t: np.ndarray, tracks: dict, path: str,
                         truth: np.ndarray | None = None,
                         title: str = "filtered expectations"):
    fig, ax = plt.subplots(figsize=(6, 4))
    if truth is not None:
        ax.plot(t, truth, "k-", lw=1.0, alpha=0.6, label="truth")
    for name, vals in tracks.items():
        ax.plot(t, vals, lw=1.2, label=name)
    ax.set_xlabel("t")
    ax.set_ylabel("value")
    ax.set_title(title)
    ax.legend(loc="best", fontsize=8)
    _finish(fig, path)


def render_ensemble(t: np.ndarray, mean: np.ndarray, se: np.ndarray,
                    reference: np.ndarray, path: str, name: str = "X"):
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(t, reference, "k--", lw=1.2, label="deterministic reference")
    ax.plot(t, mean, lw=1.2, label=f"ensemble mean {name}")
    ax.fill_between(t, mean - 2 * se, mean + 2 * se, alpha=0.25,
                    label="2 SE band")
    ax.set_xlabel("t")
    ax.set_ylabel(name)
    ax.legend(loc="best", fontsize=8)
    _finish(fig, path)
