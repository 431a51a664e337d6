"""Seeded synthetic driving scenes around a four-way intersection, plus scene files.

Layout (before a random rigid placement): two crossing roads through the
origin, ``n_lanes`` lanes per travel direction, right-hand traffic. Straight
lanes are cut into segments of ``segment_length`` meters; each approach also
gets a left-turn connector from its inner lane and a right-turn connector from
its outer lane.

Scene file schema (``realmotion-scene/1``, JSON)::

    {"format_version": "realmotion-scene/1",
     "q": float, "T_hist": int, "T_fut": int,
     "focal_ids": [str, ...],
     "lanes":  [{"id": str, "points": [[x, y], ...]}, ...],
     "tracks": [{"id": str, "category": str, "valid": [bool, ...],
                 "position": [[x, y], ...], "heading": [h, ...],
                 "velocity": [[vx, vy], ...], "acceleration": [[ax, ay], ...]}, ...],
     "checksum": "sha256 of the canonical document without this field"}

Invalid frames are written as ``NaN`` tokens. The binary variant (``.rms``)
holds the same document: magic ``RMSB``, a little-endian u32 header length,
a JSON header with array shapes, then all arrays as ``<f8``/``u1`` in header
order, then a 32-byte sha256 digest of everything before it.
"""
from __future__ import annotations

import hashlib
import json
import math
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Tuple

import numpy as np

from .errors import ConfigInvalid, CorruptFile, FormatVersionMismatch
from .geometry import wrap_angle, rotate_np
from .scene import POINTS_PER_LANE, AgentTrack, LanePolyline, Scene, resample_polyline

FORMAT_VERSION = "realmotion-scene/1"
BEHAVIORS = ("constant_velocity", "turn", "lane_change", "stop")
MAX_SPEED = 30.0


@dataclass
class WorldConfig:
    n_agents: int = 8
    n_lanes: int = 2  # per travel direction
    T_hist: int = 50
    T_fut: int = 60
    q: float = 10.0
    seed: int = 0
    behavior_mix: Dict[str, float] = field(default_factory=lambda: {
        "constant_velocity": 0.3, "turn": 0.4, "lane_change": 0.15, "stop": 0.15})
    noise: float = 0.02  # bound of uniform position noise, meters
    lane_width: float = 3.5
    road_half_length: float = 100.0
    segment_length: float = 50.0
    box: float = 10.0  # half-size of the intersection box
    points_per_lane: int = POINTS_PER_LANE
    min_split: int = 30  # smallest split point the sequencer will use

    def validate(self) -> None:
        if self.n_agents < 1 or self.n_lanes < 1:
            raise ConfigInvalid("need at least one agent and one lane")
        if self.T_hist < 1 or self.T_fut < 1 or self.q <= 0:
            raise ConfigInvalid("bad horizon or frequency")
        if not 0 <= self.seed < 2 ** 64:
            raise ConfigInvalid("seed must fit in 64 bits")
        unknown = set(self.behavior_mix) - set(BEHAVIORS)
        if unknown:
            raise ConfigInvalid(f"unknown behaviors {sorted(unknown)}")
        probs = list(self.behavior_mix.values())
        if any(p < 0 for p in probs) or abs(sum(probs) - 1.0) > 1e-9:
            raise ConfigInvalid("behavior_mix must be non-negative and sum to 1")
        if self.T_hist < self.min_split:
            raise ConfigInvalid("T_hist shorter than the sequencer's split points")
        if self.points_per_lane < 2:
            raise ConfigInvalid("points_per_lane must be >= 2")

    @classmethod
    def from_dict(cls, d: dict) -> "WorldConfig":
        known = {f for f in cls.__dataclass_fields__}
        extra = set(d) - known
        if extra:
            raise ConfigInvalid(f"unknown WorldConfig fields {sorted(extra)}")
        cfg = cls(**d)
        cfg.validate()
        return cfg

    def to_dict(self) -> dict:
        return asdict(self)


# ---------------------------------------------------------------------------
# road layout

def _rot90(points: np.ndarray, k: int) -> np.ndarray:
    return rotate_np(points, k * math.pi / 2)


def _arc(center, radius, a0, a1, n=24) -> np.ndarray:
    a = np.linspace(a0, a1, n)
    return np.stack([center[0] + radius * np.cos(a), center[1] + radius * np.sin(a)], axis=-1)


def build_layout(cfg: WorldConfig):
    """Centerlines of the intersection.

    Returns ``(paths, segments)``: ``paths`` maps route names to dense
    polylines used for driving, ``segments`` the lane segments for the map.
    Approach ``k`` is the eastbound approach rotated by ``k * 90`` degrees.
    """
    w, L, b = cfg.lane_width, cfg.road_half_length, cfg.box
    paths = {}
    segments: List[Tuple[str, np.ndarray]] = []
    for k in range(4):
        for lane in range(cfg.n_lanes):
            y = -(lane + 0.5) * w
            straight = np.array([[-L, y], [3 * L, y]])  # run-off past the map edge
            paths[f"a{k}l{lane}_straight"] = _rot90(straight, k)
            edges = np.arange(-L, L + 1e-9, cfg.segment_length)
            if edges[-1] < L:
                edges = np.append(edges, L)
            for s, (x0, x1) in enumerate(zip(edges[:-1], edges[1:])):
                segments.append((f"a{k}l{lane}s{s}", _rot90(np.array([[x0, y], [x1, y]]), k)))
        # left turn: inner eastbound lane -> inner northbound lane
        y_in = -0.5 * w
        left_arc = _arc((-b, b), b + 0.5 * w, -math.pi / 2, 0.0)
        left = np.concatenate([[[-L, y_in]], left_arc, [[0.5 * w, 3 * L]]])
        paths[f"a{k}_left"] = _rot90(left, k)
        segments.append((f"a{k}_left", _rot90(left_arc, k)))
        # right turn: outer eastbound lane -> outer southbound lane
        y_out = -(cfg.n_lanes - 0.5) * w
        r = b - (cfg.n_lanes - 0.5) * w
        right_arc = _arc((-b, -b), r, math.pi / 2, 0.0)
        right = np.concatenate([[[-L, y_out]], right_arc, [[-b + r, -3 * L]]])
        paths[f"a{k}_right"] = _rot90(right, k)
        segments.append((f"a{k}_right", _rot90(right_arc, k)))
    return paths, segments


class _Path:
    """Arc-length parameterized polyline."""

    def __init__(self, pts: np.ndarray):
        dense = []
        for p0, p1 in zip(pts[:-1], pts[1:]):
            n = max(2, int(math.ceil(np.hypot(*(p1 - p0)) / 0.5)) + 1)
            dense.append(np.linspace(p0, p1, n)[:-1])
        dense.append(pts[-1:])
        self.pts = np.concatenate(dense)
        seg = np.hypot(*np.diff(self.pts, axis=0).T)
        self.s = np.concatenate([[0.0], np.cumsum(seg)])
        self.length = float(self.s[-1])

    def at(self, s: np.ndarray):
        s = np.clip(s, 0.0, self.length)
        x = np.interp(s, self.s, self.pts[:, 0])
        y = np.interp(s, self.s, self.pts[:, 1])
        ds = 0.25
        x1 = np.interp(np.clip(s + ds, 0, self.length), self.s, self.pts[:, 0])
        y1 = np.interp(np.clip(s + ds, 0, self.length), self.s, self.pts[:, 1])
        x0 = np.interp(np.clip(s - ds, 0, self.length), self.s, self.pts[:, 0])
        y0 = np.interp(np.clip(s - ds, 0, self.length), self.s, self.pts[:, 1])
        tang = np.arctan2(y1 - y0, x1 - x0)
        return np.stack([x, y], axis=-1), tang


def _entry_s(cfg: WorldConfig) -> float:
    # arc length from the approach start to the intersection box
    return cfg.road_half_length - cfg.box


# ---------------------------------------------------------------------------
# agents

def _speed_profile(rng, behavior: str, n: int, dt: float, s_entry: float, s0: float):
    """Arc length along the route for each of ``n`` frames."""
    if behavior == "constant_velocity" or behavior == "lane_change":
        v0 = rng.uniform(6.0, 14.0)
        return s0 + v0 * dt * np.arange(n), np.full(n, v0)
    if behavior == "turn":
        v0 = rng.uniform(8.0, 14.0)
        v_turn = rng.uniform(4.0, 6.0)
        decel = rng.uniform(1.5, 3.0)
        brake_dist = (v0 ** 2 - v_turn ** 2) / (2 * decel)
        s_brake = s_entry - brake_dist - rng.uniform(0.0, 5.0)
        v = np.empty(n)
        s = np.empty(n)
        s[0], v[0] = s0, v0
        for i in range(1, n):
            a = -decel if (s[i - 1] >= s_brake and v[i - 1] > v_turn) else 0.0
            if s[i - 1] > s_entry + 25.0:
                a = 1.5 if v[i - 1] < v0 else 0.0
            v[i] = max(v[i - 1] + a * dt, 0.0)
            s[i] = s[i - 1] + 0.5 * (v[i - 1] + v[i]) * dt
        return s, v
    if behavior == "stop":
        v0 = rng.uniform(6.0, 12.0)
        s_stop = s_entry - rng.uniform(2.0, 5.0)
        decel = rng.uniform(2.0, 4.0)
        brake_start = s_stop - v0 ** 2 / (2 * decel)
        v = np.empty(n)
        s = np.empty(n)
        s[0], v[0] = s0, v0
        for i in range(1, n):
            a = -decel if s[i - 1] >= brake_start else 0.0
            v[i] = max(v[i - 1] + a * dt, 0.0)
            s[i] = s[i - 1] + 0.5 * (v[i - 1] + v[i]) * dt
        return s, v
    raise ConfigInvalid(behavior)


def _make_agent(rng, cfg: WorldConfig, paths, agent_id: str, focal: bool) -> AgentTrack:
    n = cfg.T_hist + cfg.T_fut
    dt = 1.0 / cfg.q
    names = list(BEHAVIORS)
    probs = np.array([cfg.behavior_mix.get(b, 0.0) for b in names])
    behavior = names[int(rng.choice(len(names), p=probs / probs.sum()))]
    k = int(rng.integers(4))
    lane = int(rng.integers(cfg.n_lanes))
    if behavior == "turn":
        route = f"a{k}_left" if rng.random() < 0.5 else f"a{k}_right"
    else:
        route = f"a{k}l{lane}_straight"
    path = _Path(paths[route])
    s_entry = _entry_s(cfg)
    # place the agent so that it reaches the box around the current frame
    arrival = rng.uniform(-2.0, 4.0) if focal else rng.uniform(-4.0, 8.0)
    v_guess = 10.0
    s0 = s_entry - v_guess * (cfg.T_hist * dt + arrival)
    s0 = float(np.clip(s0, 0.0, s_entry - 5.0))
    s, v = _speed_profile(rng, behavior, n, dt, s_entry, s0)
    pos, tang = path.at(s)
    if behavior == "lane_change" and cfg.n_lanes > 1:
        direction = -1.0 if lane == 0 else 1.0  # toward the neighbouring lane
        t0 = rng.uniform(0.0, n * dt - 3.0)
        dur = rng.uniform(2.5, 4.0)
        tt = np.arange(n) * dt
        frac = np.clip((tt - t0) / dur, 0.0, 1.0)
        offset = direction * cfg.lane_width * 0.5 * (1 - np.cos(math.pi * frac))
        normal = np.stack([-np.sin(tang), np.cos(tang)], axis=-1)
        pos = pos + offset[:, None] * normal
    clean = pos
    noise = rng.uniform(-cfg.noise, cfg.noise, size=pos.shape)
    pos = clean + noise
    vel = np.empty_like(pos)
    vel[1:] = (pos[1:] - pos[:-1]) * cfg.q
    vel[0] = vel[1]
    acc = np.empty_like(pos)
    acc[1:] = (vel[1:] - vel[:-1]) * cfg.q
    acc[0] = acc[1]
    clean_v = np.empty_like(clean)
    clean_v[1:] = (clean[1:] - clean[:-1]) * cfg.q
    clean_v[0] = clean_v[1]
    speed = np.hypot(*clean_v.T)
    heading = np.where(speed > 0.5, np.arctan2(clean_v[:, 1], clean_v[:, 0]), tang)
    heading = wrap_angle(heading)
    valid = np.ones(n, dtype=bool)
    if not focal and rng.random() < 0.3:
        start = int(rng.integers(0, n - 5))
        valid[start:start + int(rng.integers(5, 20))] = False
    track = AgentTrack(id=agent_id, position=pos, heading=heading, velocity=vel,
                       acceleration=acc, valid=valid, category="vehicle")
    for name in ("position", "heading", "velocity", "acceleration"):
        getattr(track, name)[~valid] = np.nan
    return track


def scene_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(index)]))


def generate_scene(cfg: WorldConfig, index: int = 0) -> Scene:
    """Scene number ``index`` of the dataset defined by ``cfg``."""
    cfg.validate()
    rng = scene_rng(cfg.seed, index)
    paths, segments = build_layout(cfg)
    tracks = [_make_agent(rng, cfg, paths, "focal" if i == 0 else f"agent{i}", focal=(i == 0))
              for i in range(cfg.n_agents)]
    lanes = [LanePolyline(name, resample_polyline(pts, cfg.points_per_lane)) for name, pts in segments]
    phi = rng.uniform(-math.pi, math.pi)
    shift = rng.uniform(-500.0, 500.0, size=2)
    for tr in tracks:
        tr.position = rotate_np(tr.position, phi) + shift
        tr.velocity = rotate_np(tr.velocity, phi)
        tr.acceleration = rotate_np(tr.acceleration, phi)
        tr.heading = wrap_angle(tr.heading + phi)
    for lane in lanes:
        lane.points = rotate_np(lane.points, phi) + shift
    return Scene(tracks=tracks, lanes=lanes, focal_ids=["focal"], T_hist=cfg.T_hist,
                 T_fut=cfg.T_fut, q=cfg.q)


# ---------------------------------------------------------------------------
# scene files

def scene_to_dict(scene: Scene) -> dict:
    return {
        "format_version": FORMAT_VERSION,
        "q": scene.q, "T_hist": scene.T_hist, "T_fut": scene.T_fut,
        "focal_ids": list(scene.focal_ids),
        "lanes": [{"id": l.id, "points": l.points.tolist()} for l in scene.lanes],
        "tracks": [{"id": t.id, "category": t.category, "valid": t.valid.tolist(),
                    "position": t.position.tolist(), "heading": t.heading.tolist(),
                    "velocity": t.velocity.tolist(), "acceleration": t.acceleration.tolist()}
                   for t in scene.tracks],
    }


def scene_from_dict(d: dict) -> Scene:
    if d.get("format_version") != FORMAT_VERSION:
        raise FormatVersionMismatch(f"expected {FORMAT_VERSION}, got {d.get('format_version')!r}")
    lanes = [LanePolyline(l["id"], np.array(l["points"], dtype=np.float64).reshape(-1, 2))
             for l in d["lanes"]]
    tracks = [AgentTrack(id=t["id"], category=t["category"],
                         valid=np.array(t["valid"], dtype=bool),
                         position=np.array(t["position"], dtype=np.float64).reshape(-1, 2),
                         heading=np.array(t["heading"], dtype=np.float64),
                         velocity=np.array(t["velocity"], dtype=np.float64).reshape(-1, 2),
                         acceleration=np.array(t["acceleration"], dtype=np.float64).reshape(-1, 2))
              for t in d["tracks"]]
    return Scene(tracks=tracks, lanes=lanes, focal_ids=list(d["focal_ids"]),
                 T_hist=int(d["T_hist"]), T_fut=int(d["T_fut"]), q=float(d["q"]))


def _canonical(d: dict) -> bytes:
    return json.dumps(d, sort_keys=True, separators=(",", ":")).encode()


def write_scene(scene: Scene, path) -> Path:
    """Write ``scene``; a ``.rms`` suffix selects the binary variant."""
    path = Path(path)
    if path.suffix == ".rms":
        path.write_bytes(_encode_binary(scene))
        return path
    d = scene_to_dict(scene)
    d["checksum"] = hashlib.sha256(_canonical(d)).hexdigest()
    path.write_text(json.dumps(d, sort_keys=True, separators=(",", ":")))
    return path


def read_scene(path) -> Scene:
    path = Path(path)
    raw = path.read_bytes()
    if path.suffix == ".rms":
        return _decode_binary(raw)
    try:
        d = json.loads(raw)
    except (json.JSONDecodeError, UnicodeDecodeError) as e:
        raise CorruptFile(f"{path}: {e}") from e
    if not isinstance(d, dict):
        raise CorruptFile(f"{path}: not a scene document")
    if d.get("format_version") != FORMAT_VERSION:
        raise FormatVersionMismatch(f"{path}: version {d.get('format_version')!r}")
    checksum = d.pop("checksum", None)
    if checksum != hashlib.sha256(_canonical(d)).hexdigest():
        raise CorruptFile(f"{path}: checksum mismatch")
    try:
        return scene_from_dict(d)
    except (KeyError, TypeError, ValueError) as e:
        raise CorruptFile(f"{path}: {e}") from e


_MAGIC = b"RMSB"


def _encode_binary(scene: Scene) -> bytes:
    arrays = []
    header = {"format_version": FORMAT_VERSION, "q": scene.q, "T_hist": scene.T_hist,
              "T_fut": scene.T_fut, "focal_ids": list(scene.focal_ids), "lanes": [], "tracks": []}
    for l in scene.lanes:
        header["lanes"].append({"id": l.id, "shape": list(l.points.shape)})
        arrays.append(np.ascontiguousarray(l.points, dtype="<f8"))
    for t in scene.tracks:
        header["tracks"].append({"id": t.id, "category": t.category, "n": len(t.valid)})
        arrays.append(np.ascontiguousarray(t.valid, dtype="u1"))
        for name in ("position", "heading", "velocity", "acceleration"):
            arrays.append(np.ascontiguousarray(getattr(t, name), dtype="<f8"))
    hbytes = json.dumps(header, sort_keys=True).encode()
    body = _MAGIC + struct.pack("<I", len(hbytes)) + hbytes + b"".join(a.tobytes() for a in arrays)
    return body + hashlib.sha256(body).digest()


def _decode_binary(raw: bytes) -> Scene:
    if len(raw) < 40 or raw[:4] != _MAGIC:
        raise CorruptFile("bad magic or truncated file")
    body, digest = raw[:-32], raw[-32:]
    if hashlib.sha256(body).digest() != digest:
        raise CorruptFile("checksum mismatch")
    (hlen,) = struct.unpack("<I", body[4:8])
    header = json.loads(body[8:8 + hlen])
    if header.get("format_version") != FORMAT_VERSION:
        raise FormatVersionMismatch(f"version {header.get('format_version')!r}")
    off = 8 + hlen

    def take(dtype, shape):
        nonlocal off
        count = int(np.prod(shape))
        size = np.dtype(dtype).itemsize * count
        a = np.frombuffer(body, dtype=dtype, count=count, offset=off).reshape(shape)
        off += size
        return a.astype(np.float64) if dtype == "<f8" else a.astype(bool)

    lanes = [LanePolyline(l["id"], take("<f8", tuple(l["shape"]))) for l in header["lanes"]]
    tracks = []
    for t in header["tracks"]:
        n = t["n"]
        valid = take("u1", (n,))
        pos, head = take("<f8", (n, 2)), take("<f8", (n,))
        vel, acc = take("<f8", (n, 2)), take("<f8", (n, 2))
        tracks.append(AgentTrack(id=t["id"], category=t["category"], valid=valid, position=pos,
                                 heading=head, velocity=vel, acceleration=acc))
    return Scene(tracks=tracks, lanes=lanes, focal_ids=header["focal_ids"], T_hist=header["T_hist"],
                 T_fut=header["T_fut"], q=header["q"])


def scene_filename(index: int, binary: bool = False) -> str:
    return f"scene_{index:06d}.{'rms' if binary else 'json'}"


def generate_dataset(cfg: WorldConfig, count: int, out_dir, binary: bool = False, jobs: int = 1) -> List[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    jobs_args = [(cfg, i, str(out), binary) for i in range(count)]
    if jobs > 1 and count > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(jobs) as ex:
            return list(ex.map(_write_one, jobs_args))
    return [_write_one(a) for a in jobs_args]


def _write_one(args):
    cfg, i, out, binary = args
    return write_scene(generate_scene(cfg, i), Path(out) / scene_filename(i, binary))


def list_scenes(data_dir) -> List[Path]:
    d = Path(data_dir)
    return sorted(list(d.glob("scene_*.json")) + list(d.glob("scene_*.rms")))
