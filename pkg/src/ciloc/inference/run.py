"""Single PBP runs and the best-of-N restart search."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from ..candidates import CandidateSet, extract_candidates
from ..config import InferenceConfig, ModelConfig
from ..mrf import MrfModel, UnaryField, build_unary_field, total_energy
from ..seeding import derive_rng
from ..volume import Box, Volume3D
from . import bp
from .heuristics import augment_particles, decimate_diverse
from .retie import detect_plateau_and_retie
from .slice import slice_sample

log = logging.getLogger(__name__)


class InitializationError(ValueError):
    pass


@dataclass
class RunResult:
    positions: np.ndarray
    energy: float
    n_iterations: int
    diagnostics: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "contacts_mm": self.positions.tolist(),
            "energy": self.energy,
            "n_iterations": self.n_iterations,
            "diagnostics": self.diagnostics,
        }


def initial_chain(basal, voi: Box, model: MrfModel, rng: np.random.Generator, tries: int = 100) -> np.ndarray:
    """Straight chain from the basal contact in a random direction pointing into the VOI.

    Directions are redrawn until the whole chain fits; after ``tries`` draws the last
    chain is clamped to the VOI.
    """
    basal = np.asarray(basal, dtype=float)
    if not voi.contains(basal)[0]:
        raise InitializationError(f"basal contact {basal.tolist()} lies outside the VOI")
    inward = voi.center - basal
    steps = np.arange(model.n_nodes)[:, None] * model.d_st1
    chain = None
    for _ in range(max(1, tries)):
        d = rng.normal(size=3)
        d /= np.linalg.norm(d)
        if d @ inward < 0:
            d = -d
        chain = basal + steps * d
        if np.all(voi.contains(chain)):
            return chain
    chain = voi.clip(chain)
    if np.max(np.linalg.norm(chain - basal, axis=1)) < 1e-9:
        raise InitializationError("VOI leaves no room for an initial chain")
    return chain


def _into_ball(points, center, radius):
    rel = points - center
    norm = np.linalg.norm(rel, axis=1, keepdims=True)
    scale = np.where(norm > radius, radius * (1 - 1e-9) / np.maximum(norm, 1e-300), 1.0)
    return center + rel * scale


class _Tables:
    """Unary/pairwise tables, messages and beliefs for one set of particles."""

    def __init__(self, model, field, particles, sweeps, unary=None, pair=None):
        self.particles = particles
        self.unary = bp.unary_tables(field, particles) if unary is None else unary
        self.pair = bp.pairwise_tables(model, particles) if pair is None else pair
        self.msgs = bp.sweep_messages(model, self.unary, self.pair, bp.zero_messages(model, particles), sweeps)
        self.beliefs = bp.compute_disbelief(model, field, particles, self.msgs, self.unary)

    def subset(self, model, field, kept, sweeps):
        particles = [p[k] for p, k in zip(self.particles, kept)]
        unary = [u[k] for u, k in zip(self.unary, kept)]
        pair = {(s, t): tab[np.ix_(kept[s], kept[t])] for (s, t), tab in self.pair.items()}
        return _Tables(model, field, particles, sweeps, unary, pair)

    def decode(self):
        idx = bp.decode(self.beliefs)
        return np.array([p[i] for p, i in zip(self.particles, idx)])


def run_single(model: MrfModel, field: UnaryField, cands: CandidateSet | None, basal, voi: Box,
               cfg: InferenceConfig, rng: np.random.Generator, x_init=None) -> RunResult:
    """One PBP run; returns the lowest-energy decoded configuration seen."""
    n, p = model.n_nodes, cfg.n_particles
    basal = np.asarray(basal, dtype=float)
    x_hat = initial_chain(basal, voi, model, rng, cfg.init_direction_tries) if x_init is None \
        else np.asarray(x_init, dtype=float)
    anchor_radius = cfg.basal_radius_factor * model.d_st1
    jitter = cfg.init_jitter_factor * model.d_st1
    particles = [np.vstack([x_hat[s], x_hat[s] + rng.normal(0.0, jitter, size=(p - 1, 3))]) for s in range(n)]
    particles[0] = _into_ball(particles[0], basal, anchor_radius)
    tables = _Tables(model, field, particles, cfg.message_sweeps)

    best_x = x_hat.copy()
    best_e = total_energy(model, field, x_hat)
    initial_e = best_e
    history: list[float] = []
    plateaus = reties = 0
    trace = [best_e]
    radius = cfg.diversity_radius_factor * model.d_st1

    for _it in range(cfg.n_iterations):
        nodes = np.concatenate([np.full(len(ps), s) for s, ps in enumerate(tables.particles)])
        target = bp.ContinuousDisbelief(model, field, tables.particles, tables.beliefs, tables.msgs, nodes,
                                        anchor=(basal, anchor_radius))
        moved = slice_sample(np.vstack(tables.particles), target, rng, cfg.mcmc_steps, width=model.d_st1,
                             temperature=cfg.temperature)
        current = []
        for s in range(n):
            parts = [tables.particles[s], moved[nodes == s]]
            if s == 0:
                parts.append(basal[None, :])
            current.append(np.vstack(parts))
        aug = augment_particles(current, x_hat, model, field, cands, cfg.k_nearest)
        aug[0] = aug[0][np.linalg.norm(aug[0] - basal, axis=1) <= anchor_radius]

        wide = _Tables(model, field, aug, cfg.message_sweeps)
        _, kept = decimate_diverse(aug, wide.beliefs, p, radius)
        tables = wide.subset(model, field, kept, cfg.message_sweeps)

        x_hat = tables.decode()
        e = total_energy(model, field, x_hat)
        history.append(e)
        if e < best_e:
            best_e, best_x = e, x_hat.copy()

        x_new, plateau = detect_plateau_and_retie(history, x_hat, cfg.plateau_window, cfg.plateau_rel_eps)
        if plateau:
            plateaus += 1
            history.clear()
            if not np.array_equal(x_new, x_hat):
                reties += 1
                grown = [np.vstack([x_new[s:s + 1], tables.particles[s]]) for s in range(n)]
                tables = _Tables(model, field, grown, cfg.message_sweeps)
                x_hat = x_new
                e = total_energy(model, field, x_hat)
                if e < best_e:
                    best_e, best_x = e, x_hat.copy()
        trace.append(best_e)

    return RunResult(
        positions=best_x,
        energy=float(total_energy(model, field, best_x)),
        n_iterations=cfg.n_iterations,
        diagnostics={
            "initial_energy": float(initial_e),
            "retie_count": reties,
            "plateau_events": plateaus,
            "best_energy_trace": [float(v) for v in trace],
        },
    )


@dataclass
class Problem:
    """Everything a run needs that does not depend on the run's seed."""

    model: MrfModel
    field: UnaryField
    cands: CandidateSet
    voi: Box
    basal: np.ndarray


def prepare(vol: Volume3D, voi: Box, basal, model_cfg: ModelConfig, inf_cfg: InferenceConfig) -> Problem:
    model = model_cfg.build_model()
    field = build_unary_field(vol, voi, model_cfg.sigma2_mm, model_cfg.blob_scale_mm,
                              model_cfg.theta1, model_cfg.theta2)
    cands = extract_candidates(vol, voi, model_cfg.blob_scale_mm, inf_cfg.max_candidates)
    return Problem(model, field, cands, voi, np.asarray(basal, dtype=float))


def localize(vol: Volume3D, voi: Box, basal, model_cfg: ModelConfig, inf_cfg: InferenceConfig,
             n_runs: int, seed: int, problem: Problem | None = None) -> RunResult:
    """Best of ``n_runs`` independent runs by MRF energy; ties keep the earliest run."""
    if n_runs < 1:
        raise ValueError(f"n_runs must be >= 1, got {n_runs}")
    if problem is None:
        problem = prepare(vol, voi, basal, model_cfg, inf_cfg)
    best = None
    best_run = -1
    energies = []
    for r in range(n_runs):
        res = run_single(problem.model, problem.field, problem.cands, problem.basal, problem.voi, inf_cfg,
                         derive_rng(seed, "run", r))
        energies.append(res.energy)
        log.debug("run %d energy %.6f", r, res.energy)
        if best is None or res.energy < best.energy:
            best, best_run = res, r
    best.diagnostics = dict(best.diagnostics, best_run=best_run, run_energies=energies,
                            n_candidates=len(problem.cands))
    return best
