import dataclasses

import numpy as np
import pytest
from hypothesis import settings

from ciloc.config import InferenceConfig, ModelConfig
from ciloc.synthgen import SynthParams, generate
from ciloc.volume import Box, Volume3D, volume_box

settings.register_profile("repro", derandomize=True, deadline=None)
settings.load_profile("repro")

# a quarter-size generator setting: 128^3 -> 32^3, 0.25 mm target voxels
SMALL = SynthParams(seed=11, hires_dims=(128, 128, 128), target_dims=(32, 32, 32), n_electrodes=8,
                    n_bones=0, noise_sigma=0.02, alpha=np.radians(25.0))

FAST = InferenceConfig(n_iterations=12, mcmc_steps=2, n_particles=12, temperature=0.25)


def problem_for(params: SynthParams, margin: float = 2.0):
    vol, gt = generate(params)
    voi = Box(gt.contacts.min(axis=0) - margin, gt.contacts.max(axis=0) + margin).intersect(volume_box(vol))
    model_cfg = ModelConfig(n_nodes=params.n_electrodes, d_st1_mm=params.contact_spacing)
    return vol, gt, voi, model_cfg


@pytest.fixture(scope="session")
def small_case():
    return problem_for(SMALL)


@pytest.fixture(scope="session")
def small_clean_case():
    return problem_for(dataclasses.replace(SMALL, noise_sigma=0.0))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def make_volume(data, spacing=(1.0, 1.0, 1.0), origin=(0.0, 0.0, 0.0)):
    return Volume3D(np.asarray(data, dtype=float), tuple(spacing), tuple(origin))
