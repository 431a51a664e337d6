"""Reorganize one scene into a sequence of sub-scenes anchored at split points.

A split point ``T_i`` counts observed frames: the sub-scene's current frame is
``T_i - 1``, its history the ``segment_hist_len`` frames ending there and its
future the ``K`` frames starting at ``T_i``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .errors import SplitPointsInvalid
from .geometry import to_local_np
from .scene import DEFAULT_RADIUS, Scene, VectorizedScene, vectorize

DEFAULT_SPLIT_POINTS = (30, 40, 50)


@dataclass
class SceneSequence:
    sub_scenes: List[VectorizedScene]
    split_points: Tuple[int, ...]
    segment_hist_len: int
    focal: str

    def __len__(self) -> int:
        return len(self.sub_scenes)


def check_split_points(scene: Scene, split_points: Sequence[int], hist_len: Optional[int] = None) -> int:
    """Validate ``split_points`` against ``scene``; returns the history length."""
    pts = [int(p) for p in split_points]
    if not pts:
        raise SplitPointsInvalid("no split points")
    if any(b <= a for a, b in zip(pts, pts[1:])):
        raise SplitPointsInvalid(f"split points must be strictly increasing: {pts}")
    if pts[-1] != scene.T_hist:
        raise SplitPointsInvalid(f"last split point {pts[-1]} must equal T_hist={scene.T_hist}")
    hist_len = pts[0] if hist_len is None else int(hist_len)
    if hist_len < 1 or pts[0] < hist_len:
        raise SplitPointsInvalid(f"history of {hist_len} frames underflows split point {pts[0]}")
    return hist_len


def split_scene(scene: Scene, split_points: Sequence[int] = DEFAULT_SPLIT_POINTS, focal: Optional[str] = None,
                radius: float = DEFAULT_RADIUS, *, hist_len: Optional[int] = None,
                max_agents: Optional[int] = None, max_lanes: Optional[int] = None) -> SceneSequence:
    focal = scene.focal_ids[0] if focal is None else focal
    hist_len = check_split_points(scene, split_points, hist_len)
    subs = [vectorize(scene, focal, radius, current=t - 1, hist_len=hist_len,
                      max_agents=max_agents, max_lanes=max_lanes) for t in split_points]
    return SceneSequence(subs, tuple(int(t) for t in split_points), hist_len, focal)


def future_window(scene: Scene, agent_id: str, split_point: int, K: int):
    """Global future positions (K, 2) and validity (K,) of an agent after ``split_point``."""
    tr = scene.track(agent_id)
    end = split_point + K
    if end > len(tr.valid):
        raise SplitPointsInvalid(f"future of {K} frames after {split_point} exceeds the track")
    return tr.position[split_point:end], tr.valid[split_point:end]


def future_targets(scene: Scene, split_points: Sequence[int] = DEFAULT_SPLIT_POINTS,
                   focal: Optional[str] = None, K: Optional[int] = None) -> List[np.ndarray]:
    """Focal ground-truth futures (K, 2), each in its sub-scene's local frame."""
    focal = scene.focal_ids[0] if focal is None else focal
    check_split_points(scene, split_points)
    K = scene.T_fut if K is None else K
    tr = scene.track(focal)
    out = []
    for t in split_points:
        pts, _ = future_window(scene, focal, t, K)
        out.append(to_local_np(pts, tr.pose(t - 1, scene.q)))
    return out
