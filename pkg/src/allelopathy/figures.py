"""Matplotlib figure emission for the CLI report paths.

All figures render to files through the Agg backend with pinned
metadata so reruns are byte-identical.
"""

from __future__ import annotations

import matplotlib
matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np
from matplotlib.colors import ListedColormap

# free, blue (inhibitory), red (susceptible), frozen
STATE_COLORS = ["#ffffff", "#000000", "#c8c8c8", "#606060"]
STATE_NAMES = ["free", "inhibitory", "susceptible", "frozen"]
_CMAP = ListedColormap(STATE_COLORS)
_META = {"Software": "allelopathy"}


def _save(fig, path):
    fig.savefig(path, dpi=150, metadata=_META)
    plt.close(fig)


def snapshot_figure(config, shape, path, title=""):
    """Lattice snapshot with the four-state palette."""
    img = np.asarray(config, dtype=np.uint8).reshape(shape)
    fig, ax = plt.subplots(figsize=(5.4, 5.4))
    ax.imshow(img, cmap=_CMAP, vmin=0, vmax=3, interpolation="nearest")
    ax.set_xticks([])
    ax.set_yticks([])
    if title:
        ax.set_title(title, fontsize=10)
    handles = [plt.Rectangle((0, 0), 1, 1, fc=c, ec="k", lw=0.3)
               for c in STATE_COLORS]
    ax.legend(handles, STATE_NAMES, loc="upper left",
              bbox_to_anchor=(1.01, 1.0), fontsize=8, frameon=False)
    fig.tight_layout()
    _save(fig, path)


def density_figure(times, densities, path, title=""):
    """Per-state density time series."""
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    labels = ["free", "blue", "red", "frozen"]
    colors = ["#bbbbbb", "#1f4fa8", "#c0392b", "#606060"]
    for i in range(4):
        ax.plot(times, densities[:, i], label=labels[i], color=colors[i])
    ax.set_xlabel("time")
    ax.set_ylabel("density")
    ax.set_ylim(-0.02, 1.02)
    ax.legend(fontsize=8)
    if title:
        ax.set_title(title, fontsize=10)
    fig.tight_layout()
    _save(fig, path)


def variants_figure(times, series, labels, path, ylabel="red density",
                    title=""):
    """One curve per coupled variant."""
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    for y, lab in zip(series, labels):
        ax.plot(times, y, label=lab)
    ax.set_xlabel("time")
    ax.set_ylabel(ylabel)
    ax.legend(fontsize=8)
    if title:
        ax.set_title(title, fontsize=10)
    fig.tight_layout()
    _save(fig, path)


def trend_figure(xvals, means, lo, hi, path, xlabel="thaw rate",
                 ylabel="value", title="", logx=True):
    """Means with interval bars against a (log) parameter axis."""
    fig, ax = plt.subplots(figsize=(5.6, 4.0))
    x = np.asarray(xvals, dtype=float)
    means = np.asarray(means, dtype=float)
    yerr = np.vstack([means - np.asarray(lo), np.asarray(hi) - means])
    ax.errorbar(x, means, yerr=np.maximum(yerr, 0.0), fmt="o-", capsize=3)
    if logx:
        ax.set_xscale("log")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title, fontsize=10)
    fig.tight_layout()
    _save(fig, path)


def phase_figure(rows, path, title=""):
    """Region map over (lambda1, lambda2), one panel per thaw rate.

    Color encodes which boundary equilibria are attracting and whether
    an interior fixed point exists.
    """
    gammas = sorted({r["gamma"] for r in rows})
    l1s = sorted({r["lambda1"] for r in rows})
    l2s = sorted({r["lambda2"] for r in rows})
    ncol = min(len(gammas), 4)
    nrow = (len(gammas) + ncol - 1) // ncol
    fig, axes = plt.subplots(nrow, ncol, figsize=(3.3 * ncol, 3.1 * nrow),
                             squeeze=False)
    cmap = ListedColormap(["#f2f2f2", "#4878cf", "#d65f5f", "#8064a2"])
    for gi, g in enumerate(gammas):
        ax = axes[gi // ncol][gi % ncol]
        grid = np.zeros((len(l2s), len(l1s)))
        for r in rows:
            if r["gamma"] != g:
                continue
            i = l2s.index(r["lambda2"])
            j = l1s.index(r["lambda1"])
            code = 0
            if r["in_w1"] and r["in_w2"]:
                code = 3
            elif r["in_w1"]:
                code = 1
            elif r["in_w2"]:
                code = 2
            grid[i, j] = code
        ax.imshow(grid, origin="lower", cmap=cmap, vmin=0, vmax=3,
                  extent=[min(l1s), max(l1s), min(l2s), max(l2s)],
                  aspect="auto", interpolation="nearest")
        ax.set_title(f"thaw rate {g:g}", fontsize=9)
        ax.set_xlabel("lambda1")
        ax.set_ylabel("lambda2")
    for k in range(len(gammas), nrow * ncol):
        axes[k // ncol][k % ncol].axis("off")
    if title:
        fig.suptitle(title, fontsize=11)
    fig.tight_layout()
    _save(fig, path)


def meanfield_figure(times, states, path, title=""):
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    labels = ["free", "blue", "red", "frozen"]
    colors = ["#bbbbbb", "#1f4fa8", "#c0392b", "#606060"]
    for i in range(4):
        ax.plot(times, states[:, i], label=labels[i], color=colors[i])
    ax.set_xlabel("time")
    ax.set_ylabel("density")
    ax.legend(fontsize=8)
    if title:
        ax.set_title(title, fontsize=10)
    fig.tight_layout()
    _save(fig, path)
