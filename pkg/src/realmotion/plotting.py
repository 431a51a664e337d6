"""Static figures: one panel per segment showing how the forecast evolves,
plus a final panel overlaying everything against the full ground truth."""
from __future__ import annotations

from typing import Sequence

import numpy as np

from .scene import Scene


def _draw_lanes(ax, scene: Scene) -> None:
    for lane in scene.lanes:
        ax.plot(lane.points[:, 0], lane.points[:, 1], color="0.85", lw=1.0, zorder=0)


def _draw_modes(ax, Y, probs, color, label=None) -> None:
    order = np.argsort(-probs, kind="stable")
    for rank, m in enumerate(order):
        a = 0.25 + 0.75 * float(probs[m]) / float(probs.max())
        ax.plot(Y[m, :, 0], Y[m, :, 1], color=color, alpha=a, lw=1.4 if rank else 2.2,
                label=label if rank == 0 else None)
        ax.plot(Y[m, -1, 0], Y[m, -1, 1], "o", color=color, alpha=a, ms=3)


def plot_sequence(scene: Scene, split_points: Sequence[int], Y: np.ndarray, probs: np.ndarray,
                  gt: np.ndarray, path, focal: str = None) -> int:
    """Write a (segments + 1)-panel PNG; returns the number of panels.

    ``Y`` (S, modes, K, 2), ``probs`` (S, modes) and ``gt`` (S, K, 2) are global.
    """
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    focal = focal or scene.focal_ids[0]
    track = scene.track(focal)
    S = len(split_points)
    n = S + 1
    fig, axes = plt.subplots(1, n, figsize=(4 * n, 4), squeeze=False)
    axes = axes[0]
    pos = track.position
    everything = np.concatenate([Y.reshape(-1, 2), gt.reshape(-1, 2), pos[track.valid]])
    lo, hi = everything.min(0) - 10, everything.max(0) + 10
    colors = plt.cm.viridis(np.linspace(0.15, 0.85, S))
    for s, t in enumerate(split_points):
        ax = axes[s]
        _draw_lanes(ax, scene)
        ax.plot(pos[:t, 0], pos[:t, 1], color="k", lw=2, label="observed")
        ax.plot(gt[s, :, 0], gt[s, :, 1], "--", color="tab:red", lw=1.5, label="ground truth")
        _draw_modes(ax, Y[s], probs[s], colors[s], label="forecast")
        ax.set_title(f"({chr(ord('a') + s)}) t = {t / scene.q:.1f} s")
    ax = axes[S]
    _draw_lanes(ax, scene)
    ax.plot(pos[: split_points[-1], 0], pos[: split_points[-1], 1], color="k", lw=2)
    ax.plot(gt[-1, :, 0], gt[-1, :, 1], "--", color="tab:red", lw=1.5)
    for s in range(S):
        best = int(np.argmax(probs[s]))
        ax.plot(Y[s, best, :, 0], Y[s, best, :, 1], color=colors[s], lw=2, label=f"top-1 @ {split_points[s]}")
    ax.set_title("final")
    for ax in axes:
        ax.set_xlim(lo[0], hi[0])
        ax.set_ylim(lo[1], hi[1])
        ax.set_aspect("equal", adjustable="box")
        ax.set_xticks([])
        ax.set_yticks([])
        ax.legend(loc="best", fontsize=7)
    fig.tight_layout()
    fig.savefig(path, dpi=90, metadata={"Software": None})
    plt.close(fig)
    return n
