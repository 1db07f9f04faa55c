"""Model and inference configuration, loadable from JSON files.

A config file may hold ``model``, ``inference``, ``synth``, ``localize`` and
``benchmark`` sections; missing keys take the defaults below. None of these defaults come with published values, they
were set by running the desk-scale benchmark.
"""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path


class ConfigError(ValueError):
    pass


def _from_mapping(cls, data: dict, where: str):
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise ConfigError(f"{where}: unknown keys {sorted(unknown)}")
    try:
        return cls(**data)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from None


@dataclass(frozen=True)
class ModelConfig:
    n_nodes: int = 12
    d_st1_mm: float = 1.0
    alpha_basal_deg: float = 165.0
    alpha_apical_deg: float = 145.0
    theta1: float = 1.0
    theta2: float = 1.0
    theta3: float = 8.0
    theta4: float = 2.0
    sigma2_mm: float = 0.15
    blob_scale_mm: float = 0.25

    def __post_init__(self):
        if self.n_nodes < 3:
            raise ConfigError("model.n_nodes must be >= 3")
        if self.d_st1_mm <= 0:
            raise ConfigError("model.d_st1_mm must be > 0")
        if self.sigma2_mm < 0 or self.blob_scale_mm <= 0:
            raise ConfigError("model.sigma2_mm must be >= 0 and model.blob_scale_mm > 0")

    def build_model(self):
        from .mrf import MrfModel

        return MrfModel.linear(self.n_nodes, self.d_st1_mm, self.alpha_basal_deg, self.alpha_apical_deg,
                               self.theta3, self.theta4)


@dataclass(frozen=True)
class InferenceConfig:
    n_iterations: int = 60
    mcmc_steps: int = 5
    n_particles: int = 30
    k_nearest: int = 3
    max_candidates: int = 60
    temperature: float = 1.0
    message_sweeps: int = 2
    plateau_window: int = 5
    plateau_rel_eps: float = 1e-6
    diversity_radius_factor: float = 0.25
    init_jitter_factor: float = 0.3
    basal_radius_factor: float = 0.5
    init_direction_tries: int = 100

    def __post_init__(self):
        if self.n_iterations < 0:
            raise ConfigError("inference.n_iterations must be >= 0")
        if self.mcmc_steps < 1:
            raise ConfigError("inference.mcmc_steps must be >= 1")
        if self.n_particles < 2:
            raise ConfigError("inference.n_particles must be >= 2")
        if self.k_nearest < 0 or self.max_candidates < 1:
            raise ConfigError("inference.k_nearest must be >= 0 and max_candidates >= 1")
        if self.temperature <= 0:
            raise ConfigError("inference.temperature must be > 0")
        if self.plateau_window < 2:
            raise ConfigError("inference.plateau_window must be >= 2")


SECTIONS = ("model", "inference", "synth", "localize", "benchmark")


@dataclass(frozen=True)
class Config:
    model: ModelConfig = ModelConfig()
    inference: InferenceConfig = InferenceConfig()
    synth: dict | None = None
    localize: dict | None = None
    benchmark: dict | None = None

    def to_dict(self) -> dict:
        d = {"model": dataclasses.asdict(self.model), "inference": dataclasses.asdict(self.inference)}
        for name in SECTIONS[2:]:
            if getattr(self, name) is not None:
                d[name] = getattr(self, name)
        return d

    @classmethod
    def from_dict(cls, d: dict, where: str = "config") -> "Config":
        unknown = set(d) - set(SECTIONS)
        if unknown:
            raise ConfigError(f"{where}: unknown sections {sorted(unknown)}")
        for name in SECTIONS:
            if name in d and not isinstance(d[name], dict):
                raise ConfigError(f"{where}[{name}] must be an object")
        model = _from_mapping(ModelConfig, d.get("model", {}), f"{where}[model]")
        inference = _from_mapping(InferenceConfig, d.get("inference", {}), f"{where}[inference]")
        return cls(model, inference, d.get("synth"), d.get("localize"), d.get("benchmark"))


def load_config(path) -> Config:
    if path is None:
        return Config()
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return Config.from_dict(data, str(path))
