"""Turn scenes into padded, per-segment tensors ready for batching."""
from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np
import torch

from .geometry import to_local_np
from .model import SegmentBatch
from .scene import DEFAULT_RADIUS, Scene
from .sequencer import future_targets, future_window, split_scene


@dataclass
class SequenceDataset:
    """All scenes, one :class:`SegmentBatch` per segment index."""

    segments: List[SegmentBatch]
    split_points: tuple
    hist_len: int

    def __len__(self) -> int:
        return self.segments[0].batch_size

    def batch(self, idx) -> List[SegmentBatch]:
        return [s.index(idx) for s in self.segments]


def build_dataset(scenes: Sequence[Scene], split_points: Sequence[int], hist_len: Optional[int] = None,
                  radius: float = DEFAULT_RADIUS, horizon: Optional[int] = None,
                  max_agents: int = 16, max_lanes: int = 64) -> SequenceDataset:
    seqs, targets = [], []
    for sc in scenes:
        seq = split_scene(sc, split_points, None, radius, hist_len=hist_len,
                          max_agents=max_agents, max_lanes=max_lanes)
        seqs.append(seq)
        targets.append(future_targets(sc, split_points, seq.focal, horizon))
    hist_len = seqs[0].segment_hist_len
    K = targets[0][0].shape[0]
    N = len(scenes)
    n_a = max(s.num_agents for seq in seqs for s in seq.sub_scenes)
    n_m = max(s.num_lanes for seq in seqs for s in seq.sub_scenes)
    P = seqs[0].sub_scenes[0].M.shape[1]
    segments = []
    for k, t_split in enumerate(split_points):
        A = np.zeros((N, n_a, hist_len, 9))
        fm = np.zeros((N, n_a, hist_len), dtype=bool)
        M = np.zeros((N, n_m, P, 2))
        mm = np.zeros((N, n_m), dtype=bool)
        pose = np.zeros((N, 4))
        gt = np.zeros((N, K, 2))
        aux = np.zeros((N, n_a, K, 2))
        aux_mask = np.zeros((N, n_a, K), dtype=bool)
        for i, (sc, seq) in enumerate(zip(scenes, seqs)):
            sub = seq.sub_scenes[k]
            na, nm = sub.num_agents, sub.num_lanes
            A[i, :na], fm[i, :na] = sub.A, sub.agent_mask
            M[i, :nm], mm[i, :nm] = sub.M, sub.map_mask
            pose[i] = sub.frame.as_array()
            gt[i] = targets[i][k]
            for j, aid in enumerate(sub.agent_ids):
                if j == sub.focal_index:
                    continue
                pts, valid = future_window(sc, aid, t_split, K)
                seen = np.flatnonzero(sub.agent_mask[j])
                base = sub.A[j, seen[-1], 0:2]
                loc = to_local_np(np.nan_to_num(pts), sub.frame) - base
                aux[i, j] = np.where(valid[:, None], loc, 0.0)
                aux_mask[i, j] = valid
        segments.append(SegmentBatch(
            A=torch.from_numpy(A).float(), frame_mask=torch.from_numpy(fm),
            M=torch.from_numpy(M).float(), map_mask=torch.from_numpy(mm),
            focal_index=torch.zeros(N, dtype=torch.long), pose=torch.from_numpy(pose).float(),
            gt=torch.from_numpy(gt).float(), aux_gt=torch.from_numpy(aux).float(),
            aux_mask=torch.from_numpy(aux_mask)))
    return SequenceDataset(segments, tuple(split_points), hist_len)
