import numpy as np
import pytest

from ciloc.inference.slice import SamplerError, slice_sample, slice_sample_node


def quadratic(center, sigma):
    center = np.asarray(center, float)

    def f(points, rows=None):
        return np.sum((points - center) ** 2, axis=1) / (2 * sigma**2)

    return f


def box_energy(lo, hi):
    def f(points, rows=None):
        inside = np.all((points >= lo) & (points <= hi), axis=1)
        return np.where(inside, 0.0, np.inf)

    return f


def independent_chains(energy, start, n, steps, seed, width=1.0):
    x0 = np.broadcast_to(np.asarray(start, float), (n, 3))
    return slice_sample(x0, energy, np.random.default_rng(seed), steps, width=width)


def test_gaussian_moments():
    c, sigma, n = np.array([1.0, -2.0, 0.5]), 0.7, 10000
    xs = independent_chains(quadratic(c, sigma), c + 1.5, n, 15, seed=1)
    assert np.all(np.abs(xs.mean(axis=0) - c) <= 3 * sigma / np.sqrt(n))
    cov = np.cov(xs.T)
    np.testing.assert_allclose(np.diag(cov), sigma**2, rtol=0.1)
    off = cov[~np.eye(3, dtype=bool)]
    assert np.all(np.abs(off) <= 0.1 * sigma**2)


def test_gaussian_with_small_initial_width():
    # forces the doubling path
    c, sigma, n = np.zeros(3), 1.0, 10000
    xs = independent_chains(quadratic(c, sigma), c, n, 15, seed=2, width=0.05)
    assert np.all(np.abs(xs.mean(axis=0)) <= 3 * sigma / np.sqrt(n))
    np.testing.assert_allclose(xs.std(axis=0), sigma, rtol=0.05)


def test_temperature_scales_variance():
    xs = slice_sample(np.zeros((8000, 3)), quadratic(np.zeros(3), 1.0), np.random.default_rng(3), 15,
                      temperature=0.25)
    np.testing.assert_allclose(xs.var(axis=0), 0.25, rtol=0.1)


def test_flat_box_mean():
    lo, hi, n = np.array([0.0, 0.0, 0.0]), np.array([2.0, 1.0, 4.0]), 10000
    xs = independent_chains(box_energy(lo, hi), (lo + hi) / 2 + 0.1, n, 10, seed=4)
    half = (hi - lo) / 2
    assert np.all((xs >= lo) & (xs <= hi))
    assert np.all(np.abs(xs.mean(axis=0) - (lo + hi) / 2) <= 3 * (half / np.sqrt(3)) / np.sqrt(n))


def test_zero_width_slice_stays_put():
    x0 = np.array([0.3, 0.2, 0.1])

    def spike(points):
        return np.where(np.all(points == x0, axis=1), 0.0, np.inf)

    out = slice_sample_node(0, x0, spike, np.random.default_rng(5), 1)
    assert spike(out[None])[0] <= 0.0
    np.testing.assert_array_equal(out, x0)


def test_deterministic():
    f = quadratic(np.zeros(3), 1.0)
    a = slice_sample(np.zeros((5, 3)), f, np.random.default_rng(7), 3)
    b = slice_sample(np.zeros((5, 3)), f, np.random.default_rng(7), 3)
    np.testing.assert_array_equal(a, b)


def test_non_finite_start():
    with pytest.raises(SamplerError):
        slice_sample(np.full((1, 3), 5.0), box_energy(np.zeros(3), np.ones(3)), np.random.default_rng(0), 1)


def test_needs_a_step():
    with pytest.raises(SamplerError):
        slice_sample(np.zeros((1, 3)), quadratic(np.zeros(3), 1.0), np.random.default_rng(0), 0)
