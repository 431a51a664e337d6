"""Driving-scene containers and conversion to focal-frame model input."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from .errors import DegeneratePolyline, FocalInvalid
from .geometry import Pose2, rotate_np, to_local_np, wrap_angle

CATEGORIES = ("vehicle", "pedestrian", "cyclist")
AGENT_CHANNELS = 9  # x, y, cos h, sin h, vx, vy, ax, ay, valid
MAP_CHANNELS = 2
POINTS_PER_LANE = 20
DEFAULT_RADIUS = 150.0


@dataclass(eq=False)
class AgentTrack:
    """Per-frame states of one agent; invalid frames hold NaN."""

    id: str
    position: np.ndarray  # (T, 2)
    heading: np.ndarray  # (T,)
    velocity: np.ndarray  # (T, 2)
    acceleration: np.ndarray  # (T, 2)
    valid: np.ndarray  # (T,) bool
    category: str = "vehicle"

    def __len__(self) -> int:
        return len(self.valid)

    def __eq__(self, other) -> bool:
        if not isinstance(other, AgentTrack):
            return NotImplemented
        return (self.id == other.id and self.category == other.category
                and all(np.array_equal(getattr(self, f), getattr(other, f), equal_nan=True)
                        for f in ("position", "heading", "velocity", "acceleration"))
                and np.array_equal(self.valid, other.valid))

    def pose(self, frame: int, q: float) -> Pose2:
        if not self.valid[frame]:
            raise FocalInvalid(f"agent {self.id} invalid at frame {frame}")
        p = self.position[frame]
        return Pose2(float(p[0]), float(p[1]), float(self.heading[frame]), frame / q)


@dataclass(eq=False)
class LanePolyline:
    id: str
    points: np.ndarray  # (P, 2)

    def __eq__(self, other) -> bool:
        if not isinstance(other, LanePolyline):
            return NotImplemented
        return self.id == other.id and np.array_equal(self.points, other.points)


@dataclass(eq=False)
class Scene:
    tracks: List[AgentTrack]
    lanes: List[LanePolyline]
    focal_ids: List[str]
    T_hist: int
    T_fut: int
    q: float = 10.0

    def __eq__(self, other) -> bool:
        if not isinstance(other, Scene):
            return NotImplemented
        return (self.T_hist == other.T_hist and self.T_fut == other.T_fut and self.q == other.q
                and list(self.focal_ids) == list(other.focal_ids)
                and self.tracks == other.tracks and self.lanes == other.lanes)

    def track(self, agent_id: str) -> AgentTrack:
        for tr in self.tracks:
            if tr.id == agent_id:
                return tr
        raise KeyError(agent_id)

    @property
    def current_frame(self) -> int:
        return self.T_hist - 1


@dataclass
class VectorizedScene:
    """Model input in the focal agent's local frame at ``current`` frame."""

    A: np.ndarray  # (N_a, T, 9)
    agent_mask: np.ndarray  # (N_a, T) bool
    M: np.ndarray  # (N_m, P, 2)
    map_mask: np.ndarray  # (N_m,) bool
    focal_index: int
    frame: Pose2
    agent_ids: List[str] = field(default_factory=list)
    current: int = 0

    @property
    def num_agents(self) -> int:
        return self.A.shape[0]

    @property
    def num_lanes(self) -> int:
        return self.M.shape[0]


def resample_polyline(points, P: int = POINTS_PER_LANE) -> np.ndarray:
    """P points equally spaced by arc length along ``points``, endpoints kept."""
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise DegeneratePolyline(f"expected (n, 2) points, got {pts.shape}")
    if P < 2:
        raise ValueError("P must be >= 2")
    keep = np.ones(len(pts), dtype=bool)
    keep[1:] = np.any(np.diff(pts, axis=0) != 0, axis=1)
    pts = pts[keep]
    if len(pts) < 2:
        raise DegeneratePolyline("need at least 2 distinct points")
    seg = np.hypot(*np.diff(pts, axis=0).T)
    s = np.concatenate([[0.0], np.cumsum(seg)])
    targets = np.linspace(0.0, s[-1], P)
    out = np.stack([np.interp(targets, s, pts[:, 0]), np.interp(targets, s, pts[:, 1])], axis=-1)
    out[0], out[-1] = pts[0], pts[-1]
    return out


def _last_valid(track: AgentTrack, lo: int, hi: int) -> Optional[int]:
    idx = np.flatnonzero(track.valid[lo:hi + 1])
    return None if len(idx) == 0 else lo + int(idx[-1])


def vectorize(scene: Scene, focal: str, radius: float = DEFAULT_RADIUS, *,
              current: Optional[int] = None, hist_len: Optional[int] = None,
              max_agents: Optional[int] = None, max_lanes: Optional[int] = None) -> VectorizedScene:
    """Gather agents and lanes around ``focal`` at frame ``current`` and normalize
    them to the focal pose.

    An agent is included when its last valid position inside the history window
    lies within ``radius``; a lane when any of its points does. When capacities
    are given the nearest elements are kept. The focal agent is always row 0.
    """
    if focal not in scene.focal_ids:
        raise FocalInvalid(f"{focal!r} is not a focal agent")
    if radius <= 0:
        raise ValueError("radius must be positive")
    current = scene.current_frame if current is None else current
    hist_len = current + 1 if hist_len is None else hist_len
    lo = current - hist_len + 1
    if lo < 0:
        raise ValueError(f"history of {hist_len} frames underflows at frame {current}")
    ftrack = scene.track(focal)
    if not ftrack.valid[current]:
        raise FocalInvalid(f"focal agent {focal} invalid at frame {current}")
    frame = ftrack.pose(current, scene.q)
    center = frame.xy

    picked = []
    for tr in scene.tracks:
        last = _last_valid(tr, lo, current)
        if last is None:
            continue
        d = float(np.hypot(*(tr.position[last] - center)))
        if tr.id == focal:
            d = -1.0
        if d <= radius:
            picked.append((d, tr))
    picked.sort(key=lambda p: p[0])
    if max_agents is not None:
        picked = picked[:max_agents]

    window = slice(lo, current + 1)
    A = np.zeros((len(picked), hist_len, AGENT_CHANNELS))
    agent_mask = np.zeros((len(picked), hist_len), dtype=bool)
    for i, (_, tr) in enumerate(picked):
        valid = tr.valid[window].copy()
        pos = to_local_np(tr.position[window], frame)
        head = wrap_angle(tr.heading[window] - frame.theta)
        vel = rotate_np(tr.velocity[window], -frame.theta)
        acc = rotate_np(tr.acceleration[window], -frame.theta)
        feat = np.concatenate([pos, np.cos(head)[:, None], np.sin(head)[:, None], vel, acc,
                               np.ones((hist_len, 1))], axis=-1)
        feat[~valid] = 0.0
        A[i] = feat
        agent_mask[i] = valid
    if picked:
        # focal row sits exactly at the origin with zero heading at the current frame
        A[0, -1, 0:4] = (0.0, 0.0, 1.0, 0.0)

    lanes = []
    for lane in scene.lanes:
        d = np.hypot(*(lane.points - center).T)
        if np.min(d) <= radius:
            lanes.append((float(np.min(d)), lane))
    lanes.sort(key=lambda p: p[0])
    if max_lanes is not None:
        lanes = lanes[:max_lanes]
    P = lanes[0][1].points.shape[0] if lanes else POINTS_PER_LANE
    M = np.zeros((len(lanes), P, MAP_CHANNELS))
    for j, (_, lane) in enumerate(lanes):
        M[j] = to_local_np(lane.points, frame)
    return VectorizedScene(A=A, agent_mask=agent_mask, M=M, map_mask=np.ones(len(lanes), dtype=bool),
                           focal_index=0, frame=frame, agent_ids=[tr.id for _, tr in picked],
                           current=current)


def transform_scene(scene: Scene, rotation: float, translation: Sequence[float]) -> Scene:
    """Apply one rigid motion to every coordinate in ``scene``."""
    t = np.asarray(translation, dtype=np.float64)
    tracks = [AgentTrack(id=tr.id, position=rotate_np(tr.position, rotation) + t,
                         heading=wrap_angle(tr.heading + rotation),
                         velocity=rotate_np(tr.velocity, rotation),
                         acceleration=rotate_np(tr.acceleration, rotation),
                         valid=tr.valid.copy(), category=tr.category) for tr in scene.tracks]
    lanes = [LanePolyline(l.id, rotate_np(l.points, rotation) + t) for l in scene.lanes]
    return Scene(tracks, lanes, list(scene.focal_ids), scene.T_hist, scene.T_fut, scene.q)
