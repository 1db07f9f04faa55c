"""3D scalar volumes and the filtering primitives used by the generator and the unary terms.

Indexing convention: ``data[i, j, k]`` is the voxel at index ``(i, j, k)`` along the
(u, v, w) axes and its center sits at ``origin + index * spacing`` in millimetres.
"""
from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage


class VolumeError(ValueError):
    """Invalid volume or filter parameter."""


@dataclass(frozen=True, eq=False)
class Volume3D:
    data: np.ndarray
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)
    origin: tuple[float, float, float] = (0.0, 0.0, 0.0)

    # cached per instance; volumes are treated as immutable
    _stats: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim != 3 or min(data.shape) < 1:
            raise VolumeError(f"volume data must be a non-empty 3D array, got shape {data.shape}")
        if not np.issubdtype(data.dtype, np.floating):
            data = data.astype(np.float64)
        spacing = tuple(float(s) for s in self.spacing)
        origin = tuple(float(o) for o in self.origin)
        if len(spacing) != 3 or any(not (s > 0 and math.isfinite(s)) for s in spacing):
            raise VolumeError(f"spacing must be 3 positive finite values, got {self.spacing}")
        if len(origin) != 3 or any(not math.isfinite(o) for o in origin):
            raise VolumeError(f"origin must be 3 finite values, got {self.origin}")
        if not np.all(np.isfinite(data)):
            raise VolumeError("volume contains non-finite intensities")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "spacing", spacing)
        object.__setattr__(self, "origin", origin)

    @property
    def dims(self) -> tuple[int, int, int]:
        return tuple(int(d) for d in self.data.shape)

    @property
    def min_value(self) -> float:
        if "min" not in self._stats:
            self._stats["min"] = float(self.data.min())
        return self._stats["min"]

    @property
    def max_value(self) -> float:
        if "max" not in self._stats:
            self._stats["max"] = float(self.data.max())
        return self._stats["max"]

    def with_data(self, data: np.ndarray) -> "Volume3D":
        return Volume3D(data, self.spacing, self.origin)

    def index_to_world(self, index) -> np.ndarray:
        return np.asarray(self.origin) + np.asarray(index, dtype=float) * np.asarray(self.spacing)

    def world_to_index(self, points) -> np.ndarray:
        return (np.asarray(points, dtype=float) - np.asarray(self.origin)) / np.asarray(self.spacing)

    def bounds_mm(self) -> tuple[np.ndarray, np.ndarray]:
        """World-space box spanned by the voxel centers."""
        lo = np.asarray(self.origin)
        hi = lo + (np.asarray(self.dims) - 1) * np.asarray(self.spacing)
        return lo, hi

    def crop(self, lo_mm, hi_mm) -> "Volume3D":
        """Sub-volume of all voxels whose centers fall in the closed box [lo_mm, hi_mm]."""
        lo_idx = np.ceil(self.world_to_index(lo_mm) - 1e-9).astype(int)
        hi_idx = np.floor(self.world_to_index(hi_mm) + 1e-9).astype(int)
        lo_idx = np.maximum(lo_idx, 0)
        hi_idx = np.minimum(hi_idx, np.asarray(self.dims) - 1)
        if np.any(hi_idx < lo_idx):
            raise VolumeError(f"box {list(lo_mm)}..{list(hi_mm)} does not intersect the volume")
        sl = tuple(slice(a, b + 1) for a, b in zip(lo_idx, hi_idx))
        return Volume3D(self.data[sl], self.spacing, tuple(self.index_to_world(lo_idx)))


def _check_finite(name: str, value: float) -> float:
    value = float(value)
    if not math.isfinite(value):
        raise VolumeError(f"{name} must be finite, got {value}")
    return value


def gaussian_kernel(sigma_vox: float) -> np.ndarray:
    """Sampled Gaussian truncated at +-4 sigma and renormalized to unit sum."""
    radius = max(1, int(math.ceil(4.0 * sigma_vox)))
    x = np.arange(-radius, radius + 1, dtype=float)
    k = np.exp(-0.5 * (x / sigma_vox) ** 2)
    return k / k.sum()


def _second_derivative_kernel(sigma_vox: float) -> np.ndarray:
    radius = max(2, int(math.ceil(4.0 * sigma_vox)))
    x = np.arange(-radius, radius + 1, dtype=float)
    g = np.exp(-0.5 * (x / sigma_vox) ** 2)
    g /= g.sum()
    k = g * (x**2 - sigma_vox**2) / sigma_vox**4
    # zero DC gain so constants map to exactly zero, unit second moment so x**2 -> 2
    k -= g * k.sum()
    k *= 2.0 / np.sum(k * x**2)
    return k


def _separable(data: np.ndarray, kernels) -> np.ndarray:
    out = np.asarray(data, dtype=np.float64)
    for axis, k in enumerate(kernels):
        if k is None:
            continue
        out = ndimage.correlate1d(out, k, axis=axis, mode="nearest")
    return out


def gaussian_smooth(vol: Volume3D, sigma: float) -> Volume3D:
    """Separable Gaussian blur with standard deviation ``sigma`` in mm; borders are clamped."""
    sigma = _check_finite("sigma", sigma)
    if sigma < 0:
        raise VolumeError(f"sigma must be >= 0, got {sigma}")
    if sigma == 0:
        return vol
    kernels = [gaussian_kernel(sigma / s) for s in vol.spacing]
    return vol.with_data(_separable(vol.data, kernels))


def blob_filter(vol: Volume3D, scale: float) -> Volume3D:
    """Scale-normalized negated Laplacian of Gaussian, ``-scale**2 * lap(G_scale * I)``.

    Bright blobs give positive responses; constant regions give zero.
    """
    scale = _check_finite("scale", scale)
    if scale <= 0:
        raise VolumeError(f"blob scale must be > 0, got {scale}")
    sig = [scale / s for s in vol.spacing]
    smooth = [gaussian_kernel(sv) for sv in sig]
    lap = np.zeros(vol.dims, dtype=np.float64)
    for axis in range(3):
        kernels = list(smooth)
        # second derivative in voxel units, converted to mm^-2
        kernels[axis] = _second_derivative_kernel(sig[axis]) / vol.spacing[axis] ** 2
        lap += _separable(vol.data, kernels)
    return vol.with_data(-(scale**2) * lap)


def catmull_rom_weights(t: np.ndarray) -> np.ndarray:
    """Weights for taps at offsets -1, 0, 1, 2 given fractional position ``t`` in [0, 1)."""
    t = np.asarray(t, dtype=float)
    t2, t3 = t * t, t * t * t
    return np.stack(
        [
            0.5 * (-t3 + 2 * t2 - t),
            0.5 * (3 * t3 - 5 * t2 + 2),
            0.5 * (-3 * t3 + 4 * t2 + t),
            0.5 * (t3 - t2),
        ],
        axis=-1,
    )


def _resample_matrix(n_src: int, n_dst: int) -> np.ndarray:
    # target voxel centers mapped so the physical extent (n * spacing) is preserved
    pos = (np.arange(n_dst) + 0.5) * (n_src / n_dst) - 0.5
    base = np.floor(pos).astype(int)
    w = catmull_rom_weights(pos - base)
    mat = np.zeros((n_dst, n_src))
    rows = np.arange(n_dst)
    for tap in range(4):
        idx = np.clip(base - 1 + tap, 0, n_src - 1)
        np.add.at(mat, (rows, idx), w[:, tap])
    return mat


def downsample_cubic(vol: Volume3D, target_dims) -> Volume3D:
    """Catmull-Rom resampling to ``target_dims`` preserving the physical extent."""
    target = tuple(int(d) for d in target_dims)
    if len(target) != 3:
        raise VolumeError(f"target_dims needs 3 entries, got {target_dims}")
    for t, d in zip(target, vol.dims):
        if t < 2 or t > d:
            raise VolumeError(f"target dim {t} must be in [2, {d}]")
    if target == vol.dims:
        return vol
    out = np.asarray(vol.data, dtype=np.float64)
    for axis, (d, t) in enumerate(zip(vol.dims, target)):
        if d == t:
            continue
        mat = _resample_matrix(d, t)
        out = np.moveaxis(np.tensordot(mat, np.moveaxis(out, axis, 0), axes=(1, 0)), 0, axis)
    ratio = np.asarray(vol.dims) / np.asarray(target)
    spacing = np.asarray(vol.spacing) * ratio
    origin = np.asarray(vol.origin) + (0.5 * ratio - 0.5) * np.asarray(vol.spacing)
    return Volume3D(out, tuple(spacing), tuple(origin))


def sample_trilinear(vol: Volume3D, points, oob_value: float | None = None):
    """Trilinear interpolation at world points (``(3,)`` or ``(n, 3)``).

    Points outside the box of voxel centers return ``oob_value`` (default: the
    volume minimum).
    """
    pts = np.asarray(points, dtype=float)
    scalar = pts.ndim == 1
    pts = np.atleast_2d(pts)
    if not np.all(np.isfinite(pts)):
        raise VolumeError("sample point has non-finite coordinates")
    fill = vol.min_value if oob_value is None else float(oob_value)
    if "grid" not in vol._stats:
        vol._stats["grid"] = (
            np.asarray(vol.data, dtype=np.float64),
            np.asarray(vol.origin),
            1.0 / np.asarray(vol.spacing),
            np.asarray(vol.dims) - 1 + 1e-9,
        )
    data, origin, inv_spacing, upper = vol._stats["grid"]
    idx = (pts - origin) * inv_spacing
    inside = ((idx >= -1e-9) & (idx <= upper)).all(axis=1)
    out = ndimage.map_coordinates(data, idx.T, order=1, mode="nearest", prefilter=False)
    out = np.where(inside, out, fill)
    return float(out[0]) if scalar else out


def add_white_noise(vol: Volume3D, sigma_n: float, rng: np.random.Generator) -> Volume3D:
    sigma_n = _check_finite("sigma_n", sigma_n)
    if sigma_n < 0:
        raise VolumeError(f"noise sigma must be >= 0, got {sigma_n}")
    if sigma_n == 0:
        return vol
    return vol.with_data(vol.data + rng.normal(0.0, sigma_n, size=vol.dims))


# -- file format: raw f32le voxels, u fastest, plus a JSON sidecar -------------------


def _atomic_write_bytes(path: Path, payload: bytes) -> None:
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(payload)
    os.replace(tmp, path)


def write_volume(vol: Volume3D, path) -> None:
    """Write ``<path>.raw`` and ``<path>.json``; ``path`` is the stem."""
    path = Path(path)
    if not path.parent.is_dir():
        raise FileNotFoundError(f"output directory does not exist: {path.parent}")
    raw = np.asarray(vol.data, dtype="<f4").ravel(order="F").tobytes()
    meta = {
        "dims": list(vol.dims),
        "spacing_mm": list(vol.spacing),
        "origin_mm": list(vol.origin),
        "dtype": "f32le",
    }
    _atomic_write_bytes(path.with_suffix(".raw"), raw)
    _atomic_write_bytes(path.with_suffix(".json"), (json.dumps(meta, indent=2) + "\n").encode())


def read_volume(path) -> Volume3D:
    path = Path(path)
    stem = path.with_suffix("") if path.suffix in (".raw", ".json") else path
    meta_path, raw_path = stem.with_suffix(".json"), stem.with_suffix(".raw")
    for p in (meta_path, raw_path):
        if not p.is_file():
            raise FileNotFoundError(f"volume file not found: {p}")
    meta = json.loads(meta_path.read_text())
    if meta.get("dtype") != "f32le":
        raise VolumeError(f"{meta_path}: unsupported dtype {meta.get('dtype')!r}")
    dims = tuple(int(d) for d in meta["dims"])
    buf = raw_path.read_bytes()
    expected = 4 * dims[0] * dims[1] * dims[2]
    if len(buf) != expected:
        raise VolumeError(f"{raw_path}: expected {expected} bytes for dims {dims}, found {len(buf)}")
    data = np.frombuffer(buf, dtype="<f4").reshape(dims, order="F").astype(np.float32)
    return Volume3D(data, tuple(meta["spacing_mm"]), tuple(meta["origin_mm"]))


@dataclass(frozen=True, eq=False)
class Box:
    """Axis-aligned world-space box in mm (closed)."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lo, dtype=float).reshape(3)
        hi = np.asarray(self.hi, dtype=float).reshape(3)
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))) or np.any(hi < lo):
            raise VolumeError(f"invalid box {lo.tolist()}..{hi.tolist()}")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.lo + self.hi)

    def contains(self, points, tol: float = 1e-9) -> np.ndarray:
        pts = np.atleast_2d(points)
        return np.all((pts >= self.lo - tol) & (pts <= self.hi + tol), axis=1)

    def clip(self, points) -> np.ndarray:
        return np.clip(points, self.lo, self.hi)

    def expanded(self, margin: float) -> "Box":
        return Box(self.lo - margin, self.hi + margin)

    def intersect(self, other: "Box") -> "Box":
        return Box(np.maximum(self.lo, other.lo), np.minimum(self.hi, other.hi))

    def to_json(self) -> dict:
        return {"min_mm": self.lo.tolist(), "max_mm": self.hi.tolist()}

    @classmethod
    def from_json(cls, d: dict) -> "Box":
        return cls(d["min_mm"], d["max_mm"])


def volume_box(vol: Volume3D) -> Box:
    lo, hi = vol.bounds_mm()
    return Box(lo, hi)
