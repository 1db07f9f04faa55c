"""Candidate contact points: strict local maxima of the blob response inside the VOI.

These only serve as attractors for the nearest-candidate particle heuristic, so a
plain blob-maxima detector is enough.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

from .volume import Box, Volume3D, VolumeError, blob_filter, volume_box


@dataclass(frozen=True, eq=False)
class CandidateSet:
    points: np.ndarray
    scores: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float).reshape(-1, 3)
        sc = np.asarray(self.scores, dtype=float).reshape(-1)
        if len(pts) != len(sc):
            raise ValueError("points and scores must have equal length")
        order = np.argsort(-sc, kind="stable")
        object.__setattr__(self, "points", pts[order])
        object.__setattr__(self, "scores", sc[order])

    def __len__(self):
        return len(self.points)

    def nearest(self, x, k: int) -> np.ndarray:
        """The ``k`` candidates closest to ``x`` (fewer if the set is smaller)."""
        if k <= 0 or len(self) == 0:
            return np.zeros((0, 3))
        d = np.linalg.norm(self.points - np.asarray(x, dtype=float), axis=1)
        return self.points[np.argsort(d, kind="stable")[:k]]

    def to_json(self) -> dict:
        return {"points_mm": self.points.tolist(), "scores": self.scores.tolist()}

    def dump(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2) + "\n")


def _refine(resp: np.ndarray, idx: np.ndarray) -> np.ndarray:
    # per-axis parabola through the maximum and its two neighbours, offset clamped to half a voxel
    offset = np.zeros(idx.shape, dtype=float)
    dims = np.asarray(resp.shape)
    for axis in range(3):
        lo = idx.copy()
        hi = idx.copy()
        lo[:, axis] -= 1
        hi[:, axis] += 1
        ok = (lo[:, axis] >= 0) & (hi[:, axis] < dims[axis])
        f0 = resp[tuple(idx.T)]
        fm = np.where(ok, resp[tuple(np.clip(lo, 0, dims - 1).T)], f0)
        fp = np.where(ok, resp[tuple(np.clip(hi, 0, dims - 1).T)], f0)
        denom = fm - 2 * f0 + fp
        with np.errstate(divide="ignore", invalid="ignore"):
            off = np.where(denom < 0, 0.5 * (fm - fp) / denom, 0.0)
        offset[:, axis] = np.clip(off, -0.5, 0.5)
    return offset


def extract_candidates(vol: Volume3D, voi: Box, scale: float, max_candidates: int) -> CandidateSet:
    if max_candidates < 1:
        raise VolumeError(f"max_candidates must be >= 1, got {max_candidates}")
    try:
        region = voi.intersect(volume_box(vol))
    except VolumeError:
        raise VolumeError("VOI does not intersect the volume") from None
    # filter a padded crop so the VOI border sees real neighbourhoods
    pad = 4.0 * scale + float(max(vol.spacing))
    sub = vol.crop(region.lo - pad, region.hi + pad)
    resp = blob_filter(sub, scale).data

    footprint = np.ones((3, 3, 3), dtype=bool)
    footprint[1, 1, 1] = False
    neigh = ndimage.maximum_filter(resp, footprint=footprint, mode="constant", cval=-np.inf)
    is_max = resp > neigh

    idx_all = np.indices(resp.shape).reshape(3, -1).T
    world_all = sub.index_to_world(idx_all)
    in_voi = region.contains(world_all).reshape(resp.shape)
    voi_vals = resp[in_voi]
    if voi_vals.size == 0:
        raise VolumeError("VOI contains no voxel centers")
    threshold = voi_vals.mean() + voi_vals.std()
    keep = is_max & in_voi & (resp > threshold)
    idx = np.argwhere(keep)
    scores = resp[keep] if len(idx) else np.zeros(0)
    if len(idx) == 0:
        return CandidateSet(np.zeros((0, 3)), np.zeros(0))
    order = np.argsort(-scores, kind="stable")[:max_candidates]
    idx, scores = idx[order], scores[order]
    pts = sub.index_to_world(idx + _refine(resp, idx))
    return CandidateSet(region.clip(pts), scores)
