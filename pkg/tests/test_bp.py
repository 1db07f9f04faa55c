import itertools

import numpy as np
import pytest

from conftest import make_volume
from ciloc.inference import bp
from ciloc.mrf import MrfModel, UnaryField, pairwise_potential, total_energy, unary_potential


def random_field(seed=0, n=12):
    rng = np.random.default_rng(seed)
    a = make_volume(rng.uniform(size=(n, n, n)), spacing=(0.5, 0.5, 0.5))
    b = make_volume(rng.uniform(size=(n, n, n)), spacing=(0.5, 0.5, 0.5))
    return UnaryField(a, b, 1.0, 0.5)


def random_particles(n_nodes, p, seed=1):
    rng = np.random.default_rng(seed)
    base = np.outer(np.arange(n_nodes), [0.7, 0.3, 0.2]) + 1.0
    return [base[s] + rng.normal(0, 0.35, size=(p, 3)) for s in range(n_nodes)]


def random_tables(model, particles, seed=2):
    rng = np.random.default_rng(seed)
    msgs = {k: rng.normal(size=v.shape) for k, v in bp.zero_messages(model, particles).items()}
    beliefs = [rng.normal(size=len(p)) for p in particles]
    return msgs, beliefs


class TestMessages:
    def test_two_node_table_oracle(self):
        model = MrfModel(3, 1.0, np.full(3, 2.5), theta3=2.0, theta4=1.0)
        field = random_field()
        parts = random_particles(3, 3)
        msgs, beliefs = random_tables(model, parts)
        new = bp.compute_messages(model, field, parts, msgs, beliefs)
        for (t, s) in msgs:
            raw = np.array([min(pairwise_potential(model, s, t, xs, parts[t][j]) + beliefs[t][j] - msgs[(s, t)][j]
                                for j in range(3)) for xs in parts[s]])
            np.testing.assert_allclose(new[(t, s)], raw - raw.min(), atol=1e-12)
            assert new[(t, s)].min() == 0.0

    def test_no_pairwise_means_flat_messages(self):
        model = MrfModel(4, 1.0, np.full(4, 2.5), theta3=0.0, theta4=0.0)
        parts = random_particles(4, 5)
        msgs, beliefs = random_tables(model, parts)
        new = bp.compute_messages(model, random_field(), parts, msgs, beliefs)
        for m in new.values():
            np.testing.assert_array_equal(m, 0.0)

    def test_gauge_invariance(self):
        model = MrfModel.linear(5, 1.0, 170, 130, 3.0, 1.0)
        parts = random_particles(5, 4)
        msgs, beliefs = random_tables(model, parts)
        shifted = [b + 7.5 * (s == 2) for s, b in enumerate(beliefs)]
        a = bp.compute_messages(model, random_field(), parts, msgs, beliefs)
        b = bp.compute_messages(model, random_field(), parts, msgs, shifted)
        for k in a:
            np.testing.assert_allclose(a[k], b[k], atol=1e-12)


class TestDisbelief:
    def test_zero_messages_give_unary(self):
        model = MrfModel.linear(4, 1.0)
        field = random_field()
        parts = random_particles(4, 6)
        beliefs = bp.compute_disbelief(model, field, parts, bp.zero_messages(model, parts))
        for s in range(4):
            np.testing.assert_allclose(beliefs[s], [unary_potential(field, x) for x in parts[s]], atol=1e-12)

    def test_recomputation_oracle(self):
        model = MrfModel.linear(6, 1.0, 170, 130, 3.0, 1.0)
        field = random_field()
        parts = random_particles(6, 4)
        msgs, _ = random_tables(model, parts)
        beliefs = bp.compute_disbelief(model, field, parts, msgs)
        for s in range(6):
            expect = [unary_potential(field, parts[s][i]) + sum(msgs[(t, s)][i] for t in model.neighbors(s))
                      for i in range(4)]
            np.testing.assert_allclose(beliefs[s], expect, atol=1e-12)

    def test_argmin_stable_under_shift(self):
        model = MrfModel.linear(5, 1.0)
        field = random_field()
        parts = random_particles(5, 5)
        msgs, _ = random_tables(model, parts)
        shifted = {k: v + 3.0 for k, v in msgs.items()}
        np.testing.assert_array_equal(bp.decode(bp.compute_disbelief(model, field, parts, msgs)),
                                      bp.decode(bp.compute_disbelief(model, field, parts, shifted)))

    def test_decode_ties_lowest_index(self):
        np.testing.assert_array_equal(bp.decode([np.array([1.0, 0.0, 0.0]), np.array([2.0, 2.0])]), [1, 0])


@pytest.mark.parametrize("seed", range(4))
def test_chain_bp_matches_brute_force(seed):
    model = MrfModel(6, 1.0, np.full(6, 2.6), theta3=3.0, theta4=0.0)
    field = random_field(seed)
    parts = random_particles(6, 5, seed + 10)
    unary = bp.unary_tables(field, parts)
    pair = bp.pairwise_tables(model, parts)
    msgs = bp.sweep_messages(model, unary, pair, bp.zero_messages(model, parts), 1)
    beliefs = bp.compute_disbelief(model, field, parts, msgs, unary)
    x = np.array([parts[s][i] for s, i in enumerate(bp.decode(beliefs))])

    best = np.inf
    for combo in itertools.product(range(5), repeat=6):
        e = sum(unary[s][i] for s, i in enumerate(combo))
        e += sum(pair[(s, s + 1)][combo[s], combo[s + 1]] for s in range(5))
        best = min(best, e)
    assert abs(total_energy(model, field, x) - best) < 1e-9


class TestContinuousDisbelief:
    def setup_method(self):
        self.model = MrfModel.linear(5, 1.0, 170, 130, 3.0, 1.0)
        self.field = random_field()
        self.parts = random_particles(5, 4)
        self.msgs, _ = random_tables(self.model, self.parts)
        self.beliefs = bp.compute_disbelief(self.model, self.field, self.parts, self.msgs)

    def test_at_particles_matches_discrete_update(self):
        f = bp.ContinuousDisbelief(self.model, self.field, self.parts, self.beliefs, self.msgs)
        for s in range(5):
            direct = []
            for x in self.parts[s]:
                e = unary_potential(self.field, x)
                for t in self.model.neighbors(s):
                    e += min(pairwise_potential(self.model, s, t, x, xt) + self.beliefs[t][j] - self.msgs[(s, t)][j]
                             for j, xt in enumerate(self.parts[t]))
                direct.append(e)
            got = f(self.parts[s], np.full(4, s))
            np.testing.assert_allclose(got, direct, atol=1e-12)

    def test_axis_evaluator_agrees(self):
        nodes = np.repeat(np.arange(5), 3)
        f = bp.ContinuousDisbelief(self.model, self.field, self.parts, self.beliefs, self.msgs, nodes)
        x = np.random.default_rng(3).uniform(0, 4, size=(15, 3))
        rows = np.arange(15)
        vals = np.random.default_rng(4).uniform(0, 4, size=15)
        for axis in range(3):
            moved = x.copy()
            moved[:, axis] = vals
            np.testing.assert_allclose(f.for_axis(x, axis)(rows, vals), f(moved, rows), atol=1e-12)

    def test_anchor_is_hard(self):
        f = bp.ContinuousDisbelief(self.model, self.field, self.parts, self.beliefs, self.msgs,
                                   anchor=(self.parts[0][0], 0.1))
        far = self.parts[0][0] + [1.0, 0, 0]
        assert np.isinf(f(far[None], np.array([0]))[0])
        assert np.isfinite(f(far[None], np.array([1]))[0])
