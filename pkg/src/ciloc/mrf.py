"""MRF energy over an ordered chain of electrode positions.

Nodes are contacts 0..n-1 (0 basal). Each node has a unary image term; nodes one
apart are tied by a spring to the contact spacing and nodes two apart by a spring
to the chord length implied by the interior angle at the node between them.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .volume import Box, Volume3D, VolumeError, blob_filter, gaussian_smooth, sample_trilinear


class ContractError(ValueError):
    pass


def dst2_from_alpha(d_st1: float, alpha: float) -> float:
    """Chord between nodes two apart when both links have length ``d_st1`` and meet at angle ``alpha``."""
    if not (0.0 < alpha <= math.pi):
        raise ValueError(f"interior angle must be in (0, pi], got {alpha}")
    return 2.0 * d_st1 * math.sin(alpha / 2.0)


@dataclass(frozen=True, eq=False)
class MrfModel:
    n_nodes: int
    d_st1: float
    alpha_schedule: np.ndarray
    theta3: float = 4.0
    theta4: float = 2.0

    def __post_init__(self):
        if self.n_nodes < 3:
            raise ContractError(f"n_nodes must be >= 3, got {self.n_nodes}")
        if not self.d_st1 > 0:
            raise ContractError(f"d_st1 must be > 0, got {self.d_st1}")
        if self.theta3 < 0 or self.theta4 < 0:
            raise ContractError("theta3 and theta4 must be non-negative")
        alpha = np.asarray(self.alpha_schedule, dtype=float).reshape(-1)
        if len(alpha) != self.n_nodes:
            raise ContractError(f"alpha_schedule needs {self.n_nodes} entries, got {len(alpha)}")
        if np.any(alpha <= 0) or np.any(alpha > math.pi):
            raise ContractError("interior angles must lie in (0, pi]")
        if np.any(np.diff(alpha) > 1e-12):
            raise ContractError("alpha_schedule must be non-increasing from basal to apical")
        alpha.setflags(write=False)
        object.__setattr__(self, "alpha_schedule", alpha)
        d2 = np.array([dst2_from_alpha(self.d_st1, a) for a in alpha])
        d2.setflags(write=False)
        object.__setattr__(self, "d_st2", d2)

    @classmethod
    def linear(cls, n_nodes: int, d_st1: float, alpha_basal_deg: float = 170.0,
               alpha_apical_deg: float = 120.0, theta3: float = 4.0, theta4: float = 2.0) -> "MrfModel":
        alpha = np.radians(np.linspace(alpha_basal_deg, alpha_apical_deg, n_nodes))
        return cls(n_nodes, d_st1, alpha, theta3, theta4)

    def edges(self):
        """Undirected edges (s, t) with s < t, first-order then second-order."""
        first = [(s, s + 1) for s in range(self.n_nodes - 1)]
        second = [(s, s + 2) for s in range(self.n_nodes - 2)]
        return first + second

    def neighbors(self, s: int) -> list[int]:
        return [t for t in (s - 2, s - 1, s + 1, s + 2) if 0 <= t < self.n_nodes]

    def edge_params(self, s: int, t: int) -> tuple[float, float]:
        """(weight, rest length) of the spring between nodes s and t."""
        gap = abs(s - t)
        if gap == 1:
            return self.theta3, self.d_st1
        if gap == 2:
            return self.theta4, float(self.d_st2[min(s, t) + 1])
        raise ContractError(f"nodes {s} and {t} are not neighbours")


def pairwise_potential(model: MrfModel, s: int, t: int, xs, xt) -> float:
    w, rest = model.edge_params(s, t)
    d = float(np.linalg.norm(np.asarray(xs, float) - np.asarray(xt, float)))
    return w * (d - rest) ** 2


def pairwise_table(model: MrfModel, s: int, t: int, xs: np.ndarray, xt: np.ndarray) -> np.ndarray:
    """psi_{s,t} for every pair of rows: ``(len(xs), len(xt))``."""
    w, rest = model.edge_params(s, t)
    diff = xs[:, None, :] - xt[None, :, :]
    d = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
    return w * (d - rest) ** 2


@dataclass(frozen=True, eq=False)
class UnaryField:
    """Normalized energy images: 0 at the brightest / most blob-like voxel, 1 at the darkest.

    Points outside the field return the worst energy (1), which keeps particles in the VOI.
    """

    smoothed: Volume3D
    blob: Volume3D
    theta1: float = 1.0
    theta2: float = 1.0

    def __post_init__(self):
        if self.smoothed.dims != self.blob.dims or self.smoothed.spacing != self.blob.spacing \
                or self.smoothed.origin != self.blob.origin:
            raise ContractError("smoothed and blob fields must share their grid")
        if self.theta1 < 0 or self.theta2 < 0:
            raise ContractError("theta1 and theta2 must be non-negative")

        # trilinear sampling is linear, so one weighted field serves both terms
        combined = self.smoothed.with_data(self.theta1 * self.smoothed.data + self.theta2 * self.blob.data)
        object.__setattr__(self, "_combined", combined)
        object.__setattr__(self, "_oob", self.theta1 * self.smoothed.max_value + self.theta2 * self.blob.max_value)

    def energy(self, points) -> np.ndarray | float:
        return sample_trilinear(self._combined, points, oob_value=self._oob)


def _to_energy(field: np.ndarray, name: str) -> np.ndarray:
    lo, hi = float(field.min()), float(field.max())
    if hi - lo <= 0:
        warnings.warn(f"{name} field is constant over the VOI; its unary energy is zero", RuntimeWarning,
                      stacklevel=3)
        return np.zeros_like(field)
    return (hi - field) / (hi - lo)


def build_unary_field(vol: Volume3D, voi: Box, sigma2: float, blob_scale: float,
                      theta1: float = 1.0, theta2: float = 1.0) -> UnaryField:
    try:
        sub = vol.crop(voi.lo, voi.hi)
    except VolumeError:
        raise VolumeError("VOI does not intersect the volume") from None
    smooth = gaussian_smooth(sub, sigma2)
    blob = blob_filter(sub, blob_scale)
    return UnaryField(
        sub.with_data(_to_energy(smooth.data, "smoothed")),
        sub.with_data(_to_energy(blob.data, "blob")),
        theta1,
        theta2,
    )


def unary_potential(field: UnaryField, x) -> float:
    x = np.asarray(x, dtype=float)
    s = sample_trilinear(field.smoothed, x, oob_value=field.smoothed.max_value)
    b = sample_trilinear(field.blob, x, oob_value=field.blob.max_value)
    return float(field.theta1 * s + field.theta2 * b)


def total_energy(model: MrfModel, field: UnaryField, cfg) -> float:
    x = np.asarray(cfg, dtype=float)
    if x.shape != (model.n_nodes, 3):
        raise ContractError(f"configuration shape {x.shape} does not match {model.n_nodes} nodes")
    e = float(np.sum(field.energy(x)))
    d1 = np.linalg.norm(x[1:] - x[:-1], axis=1)
    e += float(np.sum(model.theta3 * (d1 - model.d_st1) ** 2))
    d2 = np.linalg.norm(x[2:] - x[:-2], axis=1)
    e += float(np.sum(model.theta4 * (d2 - model.d_st2[1:-1]) ** 2))
    return e
