import dataclasses

import numpy as np
import pytest

from conftest import FAST
from ciloc.evaluation import evaluate
from ciloc.inference.run import InitializationError, initial_chain, localize, prepare, run_single
from ciloc.mrf import total_energy
from ciloc.seeding import derive_rng
from ciloc.volume import Box

QUICK = dataclasses.replace(FAST, n_iterations=6)


@pytest.fixture(scope="module")
def small_problem(small_case):
    vol, gt, voi, mc = small_case
    return vol, gt, voi, mc, prepare(vol, voi, gt.contacts[0], mc, QUICK)


def test_best_trace_is_monotone(small_problem):
    _, gt, voi, _, pr = small_problem
    res = run_single(pr.model, pr.field, pr.cands, gt.contacts[0], voi, QUICK, np.random.default_rng(0))
    trace = res.diagnostics["best_energy_trace"]
    assert len(trace) == QUICK.n_iterations + 1
    assert np.all(np.diff(trace) <= 0)
    assert res.energy <= res.diagnostics["initial_energy"]
    assert res.energy == pytest.approx(trace[-1], abs=1e-9)


def test_reported_energy_is_recomputable(small_problem):
    _, gt, voi, _, pr = small_problem
    res = run_single(pr.model, pr.field, pr.cands, gt.contacts[0], voi, QUICK, np.random.default_rng(1))
    assert abs(res.energy - total_energy(pr.model, pr.field, res.positions)) < 1e-9
    assert res.positions.shape == (pr.model.n_nodes, 3)


def test_basal_node_stays_anchored(small_problem):
    _, gt, voi, _, pr = small_problem
    res = run_single(pr.model, pr.field, pr.cands, gt.contacts[0], voi, QUICK, np.random.default_rng(2))
    assert np.linalg.norm(res.positions[0] - gt.contacts[0]) <= QUICK.basal_radius_factor * pr.model.d_st1


def test_fixed_seed_is_bit_identical(small_problem):
    vol, gt, voi, mc, pr = small_problem
    a = localize(vol, voi, gt.contacts[0], mc, QUICK, 2, 7, problem=pr)
    b = localize(vol, voi, gt.contacts[0], mc, QUICK, 2, 7)
    np.testing.assert_array_equal(a.positions, b.positions)
    assert a.energy == b.energy


def test_single_run_is_run_zero(small_problem):
    vol, gt, voi, mc, pr = small_problem
    res = localize(vol, voi, gt.contacts[0], mc, QUICK, 1, 3, problem=pr)
    ref = run_single(pr.model, pr.field, pr.cands, pr.basal, voi, QUICK, derive_rng(3, "run", 0))
    np.testing.assert_array_equal(res.positions, ref.positions)
    assert res.diagnostics["best_run"] == 0


def test_best_of_more_runs_is_no_worse(small_problem):
    vol, gt, voi, mc, pr = small_problem
    few = localize(vol, voi, gt.contacts[0], mc, QUICK, 2, 5, problem=pr)
    many = localize(vol, voi, gt.contacts[0], mc, QUICK, 4, 5, problem=pr)
    assert many.energy <= few.energy
    assert many.diagnostics["run_energies"][:2] == few.diagnostics["run_energies"]
    assert many.energy == min(many.diagnostics["run_energies"])


def test_hundred_runs_accepted(small_problem):
    vol, gt, voi, mc, pr = small_problem
    res = localize(vol, voi, gt.contacts[0], mc, dataclasses.replace(QUICK, n_iterations=0), 100, 0, problem=pr)
    assert len(res.diagnostics["run_energies"]) == 100


def test_zero_runs_rejected(small_problem):
    vol, gt, voi, mc, pr = small_problem
    with pytest.raises(ValueError):
        localize(vol, voi, gt.contacts[0], mc, QUICK, 0, 0, problem=pr)


def test_truth_as_start_stays_close(small_clean_case):
    vol, gt, voi, mc = small_clean_case
    pr = prepare(vol, voi, gt.contacts[0], mc, QUICK)
    res = run_single(pr.model, pr.field, pr.cands, gt.contacts[0], voi, QUICK, np.random.default_rng(4),
                     x_init=gt.contacts)
    assert evaluate(res.positions, gt).mean_a <= 0.25 * mc.d_st1_mm


def test_localizes_small_case(small_problem):
    vol, gt, voi, mc, pr = small_problem
    res = localize(vol, voi, gt.contacts[0], mc, FAST, 3, 0, problem=pr)
    assert evaluate(res.positions, gt).score <= 0.5 * mc.d_st1_mm


class TestInitialChain:
    def test_inside_voi(self, small_problem):
        _, gt, voi, _, pr = small_problem
        for seed in range(5):
            chain = initial_chain(gt.contacts[0], voi, pr.model, np.random.default_rng(seed))
            assert np.all(voi.contains(chain))
            np.testing.assert_allclose(chain[0], gt.contacts[0])

    def test_straight_at_prior_spacing_when_it_fits(self, small_problem):
        pr = small_problem[4]
        box = Box(np.full(3, -20.0), np.full(3, 20.0))
        chain = initial_chain(np.zeros(3), box, pr.model, np.random.default_rng(0))
        steps = np.diff(chain, axis=0)
        np.testing.assert_allclose(np.linalg.norm(steps, axis=1), pr.model.d_st1)
        np.testing.assert_allclose(np.cross(steps[0], steps), 0.0, atol=1e-12)

    def test_basal_outside(self, small_problem):
        _, _, voi, _, pr = small_problem
        with pytest.raises(InitializationError):
            initial_chain(voi.hi + 1.0, voi, pr.model, np.random.default_rng(0))

    def test_tight_voi_is_clamped(self, small_problem):
        _, _, _, _, pr = small_problem
        box = Box(np.zeros(3), np.full(3, 2.0))
        chain = initial_chain(np.ones(3), box, pr.model, np.random.default_rng(0), tries=3)
        assert np.all(box.contains(chain))
