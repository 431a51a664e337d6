"""SE(2) pose algebra and trajectory re-projection.

Frame-change convention: a point ``p`` in the global frame is expressed in the
local frame of pose ``(x, y, theta)`` as ``R(-theta) @ (p - (x, y))``, so a
trajectory heading along ``theta`` maps onto the +x axis.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
import torch

from .errors import FrameMismatch, IndexOutOfRange


def wrap_angle(theta):
    """Wrap angle(s) into (-pi, pi]. Works on floats, numpy arrays and tensors."""
    if isinstance(theta, torch.Tensor):
        out = torch.remainder(theta + math.pi, 2 * math.pi) - math.pi
        return torch.where(out <= -math.pi, out + 2 * math.pi, out)
    if isinstance(theta, np.ndarray):
        out = np.mod(theta + np.pi, 2 * np.pi) - np.pi
        return np.where(out <= -np.pi, out + 2 * np.pi, out)
    out = math.fmod(theta + math.pi, 2 * math.pi)
    if out < 0:
        out += 2 * math.pi
    out -= math.pi
    if out <= -math.pi:
        out += 2 * math.pi
    return out


@dataclass(frozen=True)
class Pose2:
    x: float
    y: float
    theta: float
    t: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "theta", wrap_angle(float(self.theta)))

    @property
    def xy(self) -> np.ndarray:
        return np.array([self.x, self.y], dtype=np.float64)

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.theta, self.t], dtype=np.float64)

    @classmethod
    def from_array(cls, a) -> "Pose2":
        return cls(float(a[0]), float(a[1]), float(a[2]), float(a[3]) if len(a) > 3 else 0.0)


def rotation(theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]], dtype=np.float64)


@dataclass(frozen=True)
class Trajectory:
    """Sampled 2D path. ``frame`` is None for global, else the local-frame pose.

    For a local trajectory produced by :func:`transform_trajectory`, ``origin``
    holds the global point that was moved to (0, 0).
    """

    points: np.ndarray
    q: float = 10.0
    frame: Optional[Pose2] = None
    origin: Optional[Tuple[float, float]] = None

    @property
    def is_global(self) -> bool:
        return self.frame is None

    def __len__(self) -> int:
        return len(self.points)


def relative_motion(src: Pose2, dst: Pose2) -> Tuple[float, float, float, float]:
    """Motion of ``src`` seen from ``dst``: src's origin in dst's local frame,
    heading difference ``src - dst`` (wrapped) and time gap ``dst.t - src.t``."""
    c, s = math.cos(dst.theta), math.sin(dst.theta)
    ex, ey = src.x - dst.x, src.y - dst.y
    dx = c * ex + s * ey
    dy = -s * ex + c * ey
    return dx, dy, wrap_angle(src.theta - dst.theta), dst.t - src.t


def compose_motion(ab, bc) -> Tuple[float, float, float, float]:
    """Chain ``relative_motion(a, b)`` and ``relative_motion(b, c)`` into ``relative_motion(a, c)``."""
    dx1, dy1, dth1, dt1 = ab
    dx2, dy2, dth2, dt2 = bc
    c, s = math.cos(dth2), math.sin(dth2)
    return (c * dx1 - s * dy1 + dx2, s * dx1 + c * dy1 + dy2,
            wrap_angle(dth1 + dth2), dt1 + dt2)


def transform_trajectory(y: Trajectory, origin_pose: Pose2, dt: float, q: float) -> Trajectory:
    """Re-express a global trajectory relative to ``y[round(dt*q)]``, rotated into
    the heading of ``origin_pose``."""
    if not y.is_global:
        raise FrameMismatch("transform_trajectory expects a global trajectory")
    if dt < 0:
        raise IndexOutOfRange(f"negative time offset {dt}")
    idx = int(round(dt * q))
    if idx > len(y) - 1:
        raise IndexOutOfRange(f"origin index {idx} beyond trajectory of length {len(y)}")
    pts = np.asarray(y.points, dtype=np.float64)
    ori = pts[idx]
    c, s = math.cos(origin_pose.theta), math.sin(origin_pose.theta)
    e = pts - ori
    local = np.stack([c * e[:, 0] + s * e[:, 1], -s * e[:, 0] + c * e[:, 1]], axis=-1)
    return Trajectory(local, q=q, frame=origin_pose, origin=(float(ori[0]), float(ori[1])))


def inverse_transform_trajectory(y: Trajectory, origin_pose: Pose2) -> Trajectory:
    """Map a local trajectory back to the global frame.

    The translation is the stored origin when the trajectory came from
    :func:`transform_trajectory`, else the position of ``origin_pose``.
    """
    if y.is_global:
        raise FrameMismatch("trajectory is already global")
    if y.origin is not None:
        ox, oy = y.origin
    else:
        ox, oy = origin_pose.x, origin_pose.y
    c, s = math.cos(origin_pose.theta), math.sin(origin_pose.theta)
    pts = np.asarray(y.points, dtype=np.float64)
    out = np.stack([c * pts[:, 0] - s * pts[:, 1] + ox, s * pts[:, 0] + c * pts[:, 1] + oy], axis=-1)
    return Trajectory(out, q=y.q, frame=None)


def to_local_np(points: np.ndarray, pose: Pose2) -> np.ndarray:
    """Global points (..., 2) into the local frame of ``pose``."""
    c, s = math.cos(pose.theta), math.sin(pose.theta)
    ex = points[..., 0] - pose.x
    ey = points[..., 1] - pose.y
    return np.stack([c * ex + s * ey, -s * ex + c * ey], axis=-1)


def rotate_np(vectors: np.ndarray, theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    return np.stack([c * vectors[..., 0] - s * vectors[..., 1],
                     s * vectors[..., 0] + c * vectors[..., 1]], axis=-1)


# batched torch helpers; poses are (..., 4) tensors of (x, y, theta, t)

def local_to_global(points: torch.Tensor, poses: torch.Tensor) -> torch.Tensor:
    """points (B, ..., 2) local to each pose (B, 4) -> global."""
    shape = (poses.shape[0],) + (1,) * (points.dim() - 2)
    c = torch.cos(poses[:, 2]).view(shape)
    s = torch.sin(poses[:, 2]).view(shape)
    px, py = points[..., 0], points[..., 1]
    gx = c * px - s * py + poses[:, 0].view(shape)
    gy = s * px + c * py + poses[:, 1].view(shape)
    return torch.stack([gx, gy], dim=-1)


def relative_motion_t(src: torch.Tensor, dst: torch.Tensor) -> torch.Tensor:
    """Batched :func:`relative_motion`; returns (..., 4) of (dx, dy, dtheta, dt)."""
    c, s = torch.cos(dst[..., 2]), torch.sin(dst[..., 2])
    ex, ey = src[..., 0] - dst[..., 0], src[..., 1] - dst[..., 1]
    return torch.stack([c * ex + s * ey, -s * ex + c * ey,
                        wrap_angle(src[..., 2] - dst[..., 2]), dst[..., 3] - src[..., 3]], dim=-1)
