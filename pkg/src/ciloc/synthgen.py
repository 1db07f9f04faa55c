"""Synthetic electrode-array phantoms with exact ground truth.

Two steps: contact positions are grown along a helix, mirrored and rotated; then an
impulse volume holding contacts plus random point distractors is blurred,
downsampled, intensity-mapped and corrupted by white noise.
"""
from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .volume import (
    Volume3D,
    _atomic_write_bytes,
    add_white_noise,
    downsample_cubic,
    gaussian_smooth,
    read_volume,
    write_volume,
)


class GenerationError(ValueError):
    pass


@dataclass(frozen=True)
class SynthParams:
    seed: int = 0
    l_prior: float = 1.0
    alpha: float = math.radians(25.0)
    lambda1: float = 0.12
    lambda2: float = 1.0
    lambda3: float = 500.0
    lambda4: float = 0.05
    lambda_mirror: int = 0
    theta_u: float = 0.0
    theta_v: float = 0.0
    theta_w: float = 0.0
    sigma1: float = 0.2
    n_bones: int = 5
    noise_sigma: float = 0.05
    n_electrodes: int = 12
    hires_dims: tuple[int, int, int] = (256, 256, 256)
    target_dims: tuple[int, int, int] = (64, 64, 64)
    hires_spacing: float = 0.0625
    guard_mm: float = 1.0
    # literal reading of the helix recursion: third step component 1 instead of lambda1
    literal_w_step: bool = False

    def __post_init__(self):
        object.__setattr__(self, "hires_dims", tuple(int(d) for d in self.hires_dims))
        object.__setattr__(self, "target_dims", tuple(int(d) for d in self.target_dims))
        object.__setattr__(self, "lambda_mirror", int(self.lambda_mirror))
        object.__setattr__(self, "n_bones", int(self.n_bones))
        object.__setattr__(self, "n_electrodes", int(self.n_electrodes))
        object.__setattr__(self, "seed", int(self.seed))
        problems = []
        if not self.l_prior > 0:
            problems.append("l_prior must be > 0")
        if self.sigma1 < 0:
            problems.append("sigma1 must be >= 0")
        if self.noise_sigma < 0:
            problems.append("noise_sigma must be >= 0")
        if self.lambda_mirror not in (0, 1):
            problems.append("lambda_mirror must be 0 or 1")
        if self.n_electrodes < 3:
            problems.append("n_electrodes must be >= 3")
        if self.n_bones < 0:
            problems.append("n_bones must be >= 0")
        if not self.hires_spacing > 0:
            problems.append("hires_spacing must be > 0")
        if len(self.hires_dims) != 3 or len(self.target_dims) != 3:
            problems.append("hires_dims and target_dims need 3 entries")
        if problems:
            raise GenerationError("; ".join(problems))

    @property
    def contact_spacing(self) -> float:
        """Distance between consecutive generated contacts."""
        w = 1.0 if self.literal_w_step else self.lambda1
        return self.l_prior * math.sqrt(1.0 + w * w)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["hires_dims"] = list(self.hires_dims)
        d["target_dims"] = list(self.target_dims)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SynthParams":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise GenerationError(f"unknown SynthParams fields: {sorted(unknown)}")
        return cls(**d)


@dataclass(frozen=True, eq=False)
class GroundTruth:
    """Ordered contact positions in mm; index 0 is the most basal, electrode number = index + 1."""

    contacts: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))

    def __post_init__(self):
        c = np.array(self.contacts, dtype=float).reshape(-1, 3)
        if not np.all(np.isfinite(c)):
            raise GenerationError("ground-truth contacts must be finite")
        if len(c) > 1 and np.min(np.linalg.norm(np.diff(c, axis=0), axis=1)) <= 0:
            raise GenerationError("consecutive ground-truth contacts must be distinct")
        c.setflags(write=False)
        object.__setattr__(self, "contacts", c)

    def __len__(self):
        return len(self.contacts)

    def to_json(self) -> dict:
        return {"contacts_mm": self.contacts.tolist()}

    @classmethod
    def from_json(cls, d: dict) -> "GroundTruth":
        return cls(np.asarray(d["contacts_mm"], dtype=float))


def generate_helix_positions(params: SynthParams, x0=(0.0, 0.0, 0.0)) -> GroundTruth:
    w_step = 1.0 if params.literal_w_step else params.lambda1
    pts = np.zeros((params.n_electrodes, 3))
    pts[0] = x0
    for n in range(params.n_electrodes - 1):
        heading = params.lambda2 * n * params.alpha
        pts[n + 1] = pts[n] + params.l_prior * np.array([math.cos(heading), math.sin(heading), w_step])
    return GroundTruth(pts)


def rotation_matrix(theta_u: float, theta_v: float, theta_w: float) -> np.ndarray:
    """R_w @ R_v @ R_u, each a right-handed rotation about the named axis."""
    cu, su = math.cos(theta_u), math.sin(theta_u)
    cv, sv = math.cos(theta_v), math.sin(theta_v)
    cw, sw = math.cos(theta_w), math.sin(theta_w)
    ru = np.array([[1, 0, 0], [0, cu, -su], [0, su, cu]])
    rv = np.array([[cv, 0, sv], [0, 1, 0], [-sv, 0, cv]])
    rw = np.array([[cw, -sw, 0], [sw, cw, 0], [0, 0, 1]])
    return rw @ rv @ ru


def apply_mirror_rotation(gt: GroundTruth, params: SynthParams) -> GroundTruth:
    pts = gt.contacts.copy()
    if params.lambda_mirror == 0 and params.theta_u == params.theta_v == params.theta_w == 0:
        return GroundTruth(pts)
    center = pts.mean(axis=0)
    rel = pts - center
    if params.lambda_mirror == 1:
        rel[:, 0] = -rel[:, 0]
    rot = rotation_matrix(params.theta_u, params.theta_v, params.theta_w)
    return GroundTruth(center + rel @ rot.T)


def hires_grid_origin(gt: GroundTruth, params: SynthParams) -> np.ndarray:
    """Origin that centers the high-resolution grid on the contact centroid."""
    dims = np.asarray(params.hires_dims)
    return gt.contacts.mean(axis=0) - 0.5 * (dims - 1) * params.hires_spacing


def sample_distractors(gt: GroundTruth, params: SynthParams, rng: np.random.Generator) -> np.ndarray:
    """Uniform distractor points in the guarded grid interior, rejecting any within 2*l_prior of a contact."""
    origin = hires_grid_origin(gt, params)
    lo = origin + params.guard_mm
    hi = origin + (np.asarray(params.hires_dims) - 1) * params.hires_spacing - params.guard_mm
    radius = 2.0 * params.l_prior
    taken = {tuple(np.rint((c - origin) / params.hires_spacing).astype(int)) for c in gt.contacts}
    bones = []
    attempts = 0
    while len(bones) < params.n_bones and attempts < 100 * max(params.n_bones, 1):
        attempts += 1
        p = rng.uniform(lo, hi)
        if np.min(np.linalg.norm(gt.contacts - p, axis=1)) < radius:
            continue
        key = tuple(np.rint((p - origin) / params.hires_spacing).astype(int))
        if key in taken:
            continue
        taken.add(key)
        bones.append(p)
    return np.asarray(bones, dtype=float).reshape(-1, 3)


def place_impulses(gt: GroundTruth, params: SynthParams, rng: np.random.Generator) -> Volume3D:
    """Indicator volume: 1 at the nearest voxel of every contact and distractor, 0 elsewhere."""
    origin = hires_grid_origin(gt, params)
    dims = np.asarray(params.hires_dims)
    sp = params.hires_spacing
    lo = origin + params.guard_mm
    hi = origin + (dims - 1) * sp - params.guard_mm
    for i, c in enumerate(gt.contacts):
        if np.any(c < lo) or np.any(c > hi):
            raise GenerationError(
                f"contact {i} at {c.tolist()} lies outside the guarded high-resolution volume"
            )
    data = np.zeros(tuple(dims), dtype=np.float64)
    bones = sample_distractors(gt, params, rng)
    for p in np.vstack([gt.contacts, bones]):
        idx = tuple(np.rint((p - origin) / sp).astype(int))
        data[idx] = 1.0
    return Volume3D(data, (sp, sp, sp), tuple(origin))


def render_synthetic_volume(i0: Volume3D, params: SynthParams, rng: np.random.Generator) -> Volume3D:
    """lambda3 * downsample(G_sigma1(I0)) + lambda4 + noise, stored as float32."""
    vol = gaussian_smooth(i0, params.sigma1)
    vol = downsample_cubic(vol, params.target_dims)
    vol = vol.with_data(params.lambda3 * vol.data + params.lambda4)
    vol = add_white_noise(vol, params.noise_sigma, rng)
    return vol.with_data(vol.data.astype(np.float32))


def generate(params: SynthParams) -> tuple[Volume3D, GroundTruth]:
    """Full pipeline; a pure function of ``params`` (including its seed)."""
    from .seeding import derive_rng

    gt = apply_mirror_rotation(generate_helix_positions(params), params)
    i0 = place_impulses(gt, params, derive_rng(params.seed, "synthgen", "distractors"))
    vol = render_synthetic_volume(i0, params, derive_rng(params.seed, "synthgen", "noise"))
    return vol, gt


# parameter ranges: name -> (min, max); integers are sampled inclusively
DEFAULT_RANGES: dict[str, tuple[float, float]] = {
    "l_prior": (1.0, 1.0),
    "alpha": (math.radians(20.0), math.radians(30.0)),
    "lambda1": (0.05, 0.2),
    "lambda2": (0.9, 1.1),
    "lambda3": (400.0, 600.0),
    "lambda4": (0.0, 0.1),
    "theta_u": (-math.pi, math.pi),
    "theta_v": (-math.pi, math.pi),
    "theta_w": (-math.pi, math.pi),
    "sigma1": (0.18, 0.22),
    "n_bones": (0, 10),
    "noise_sigma": (0.03, 0.06),
}

_INT_FIELDS = {"n_bones", "n_electrodes", "seed", "lambda_mirror"}


def sample_params(rng: np.random.Generator, ranges: dict | None = None, base: SynthParams | None = None,
                  seed: int | None = None) -> SynthParams:
    """Draw each ranged field uniformly; lambda_mirror is Bernoulli(0.5) unless ranged explicitly."""
    ranges = DEFAULT_RANGES if ranges is None else ranges
    base = SynthParams() if base is None else base
    names = {f.name for f in dataclasses.fields(SynthParams)}
    values = {}
    for name, rng_spec in ranges.items():
        if name not in names:
            raise GenerationError(f"range given for unknown parameter {name!r}")
        try:
            lo, hi = rng_spec
        except (TypeError, ValueError):
            raise GenerationError(f"range for {name!r} must be [min, max], got {rng_spec!r}") from None
        if not (math.isfinite(lo) and math.isfinite(hi)) or lo > hi:
            raise GenerationError(f"range for {name!r} must satisfy min <= max, got [{lo}, {hi}]")
        if name in _INT_FIELDS:
            values[name] = int(rng.integers(int(lo), int(hi) + 1))
        else:
            values[name] = float(lo) if lo == hi else float(rng.uniform(lo, hi))
    if "lambda_mirror" not in ranges:
        values["lambda_mirror"] = int(rng.random() < 0.5)
    if seed is not None:
        values["seed"] = int(seed)
    return dataclasses.replace(base, **values)


def write_dataset(vol: Volume3D, gt: GroundTruth, out_dir, params: SynthParams | None = None) -> None:
    out_dir = Path(out_dir)
    if not out_dir.is_dir():
        raise FileNotFoundError(f"dataset directory does not exist: {out_dir}")
    write_volume(vol, out_dir / "volume")
    _atomic_write_bytes(out_dir / "gt.json", (json.dumps(gt.to_json(), indent=2) + "\n").encode())
    if params is not None:
        _atomic_write_bytes(out_dir / "params.json", (json.dumps(params.to_dict(), indent=2) + "\n").encode())


def read_gt(path) -> GroundTruth:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"ground-truth file not found: {path}")
    return GroundTruth.from_json(json.loads(path.read_text()))


def read_dataset(out_dir) -> tuple[Volume3D, GroundTruth, SynthParams | None]:
    out_dir = Path(out_dir)
    vol = read_volume(out_dir / "volume")
    gt = read_gt(out_dir / "gt.json")
    params_path = out_dir / "params.json"
    params = SynthParams.from_dict(json.loads(params_path.read_text())) if params_path.is_file() else None
    return vol, gt, params
