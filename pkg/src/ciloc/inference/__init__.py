"""Particle belief propagation for the electrode chain."""
from .bp import compute_disbelief, compute_messages, decode, sweep_messages, zero_messages
from .heuristics import augment_particles, decimate_diverse, fit_helix
from .retie import detect_plateau_and_retie, shortest_open_path
from .run import InitializationError, RunResult, initial_chain, localize, prepare, run_single
from .slice import SamplerError, slice_sample, slice_sample_node

__all__ = [
    "InitializationError",
    "RunResult",
    "SamplerError",
    "augment_particles",
    "compute_disbelief",
    "compute_messages",
    "decimate_diverse",
    "decode",
    "detect_plateau_and_retie",
    "fit_helix",
    "initial_chain",
    "localize",
    "prepare",
    "run_single",
    "shortest_open_path",
    "slice_sample",
    "slice_sample_node",
    "sweep_messages",
    "zero_messages",
]
