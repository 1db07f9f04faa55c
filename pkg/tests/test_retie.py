import itertools

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from ciloc.inference.retie import detect_plateau_and_retie, is_plateau, retie, shortest_open_path


def path_length(dist, order):
    return sum(dist[a, b] for a, b in zip(order[:-1], order[1:]))


def brute_force(dist):
    n = len(dist)
    best = min(itertools.permutations(range(1, n)), key=lambda p: path_length(dist, (0,) + p))
    return [0, *best]


def test_fold_is_untied():
    x = np.array([[0, 0, 0], [1, 0, 0], [3, 0, 0], [2, 0, 0]], float)
    np.testing.assert_array_equal(retie(x)[:, 0], [0, 1, 2, 3])
    dist = np.abs(x[:, None, 0] - x[None, :, 0])
    assert shortest_open_path(dist) == brute_force(dist) == [0, 1, 3, 2]


@settings(max_examples=40)
@given(st.integers(2, 7).flatmap(lambda n: arrays(np.float64, (n, 3), elements=st.floats(-3, 3))))
def test_held_karp_matches_enumeration(pts):
    dist = np.linalg.norm(pts[:, None] - pts[None], axis=2)
    order = shortest_open_path(dist)
    assert order[0] == 0 and sorted(order) == list(range(len(pts)))
    assert abs(path_length(dist, order) - path_length(dist, brute_force(dist))) < 1e-9


@settings(max_examples=30)
@given(arrays(np.float64, (8, 3), elements=st.floats(-3, 3)))
def test_retie_permutes_only(pts):
    out = retie(pts)
    np.testing.assert_array_equal(out[0], pts[0])
    np.testing.assert_array_equal(np.sort(out, axis=0), np.sort(pts, axis=0))


def test_sixteen_nodes_runs():
    pts = np.outer(np.random.default_rng(0).permutation(16), [1.0, 0.5, 0.0])
    order = shortest_open_path(np.linalg.norm(pts[:, None] - pts[None], axis=2))
    assert len(order) == 16


def test_decreasing_history_keeps_labels():
    x = np.array([[0, 0, 0], [2, 0, 0], [1, 0, 0]], float)
    out, flag = detect_plateau_and_retie([5.0, 4.0, 3.0, 2.0, 1.0], x)
    assert not flag
    np.testing.assert_array_equal(out, x)


def test_plateau_triggers_retie():
    x = np.array([[0, 0, 0], [2, 0, 0], [1, 0, 0]], float)
    out, flag = detect_plateau_and_retie([1.0] * 5, x)
    assert flag
    np.testing.assert_array_equal(out[:, 0], [0, 1, 2])


def test_plateau_rule():
    assert not is_plateau([1.0] * 4, window=5)
    assert is_plateau([3.0, 1.0, 1.0, 1.0, 1.0, 1.0], window=5)
    assert not is_plateau([1.0, 1.0, 1.0, 1.0, 1.0 + 1e-3], window=5)
    assert is_plateau([100.0] * 4 + [100.0 + 5e-5], window=5)
