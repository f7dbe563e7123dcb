"""Gradient-noise properties and the accelerated/fallback path equivalence."""

import numpy as np
import pytest

from worldsim.noise import fbm, numba_enabled, perlin2, sample_grid


def test_zero_at_lattice_points():
    rng = np.random.default_rng(0)
    xs = rng.integers(-1000, 1000, size=200)
    ys = rng.integers(-1000, 1000, size=200)
    values = perlin2(42, xs.astype(np.float64), ys.astype(np.float64))
    assert np.all(values == 0.0)


def test_bounded_magnitude():
    rng = np.random.default_rng(1)
    xs = rng.uniform(-100, 100, size=100_000)
    ys = rng.uniform(-100, 100, size=100_000)
    values = perlin2(42, xs, ys)
    assert np.all(np.abs(values) <= 1.0)


def test_deterministic_per_seed():
    xs = np.linspace(0, 10, 500)
    ys = np.linspace(0, 10, 500)
    assert np.array_equal(perlin2(7, xs, ys), perlin2(7, xs, ys))
    assert not np.array_equal(perlin2(7, xs, ys), perlin2(8, xs, ys))


def test_continuity_across_cell_boundary():
    # values immediately either side of an integer coordinate are close
    eps = 1e-6
    y = np.full(100, 0.37)
    left = perlin2(3, np.full(100, 1.0 - eps), y)
    right = perlin2(3, np.full(100, 1.0 + eps), y)
    assert np.max(np.abs(left - right)) < 1e-4


def test_fbm_octave1_equals_perlin():
    xs = np.linspace(0.1, 5.0, 200)
    ys = np.linspace(0.2, 4.0, 200)
    assert np.array_equal(fbm(9, xs, ys, octaves=1), perlin2(9, xs, ys))


def test_fbm_bounded_and_deterministic():
    rng = np.random.default_rng(2)
    xs = rng.uniform(-50, 50, size=10_000)
    ys = rng.uniform(-50, 50, size=10_000)
    a = fbm(5, xs, ys, octaves=4)
    assert np.all(np.abs(a) <= 1.0)
    assert np.array_equal(a, fbm(5, xs, ys, octaves=4))


def test_numpy_and_accelerated_paths_bit_identical():
    rng = np.random.default_rng(3)
    xs = rng.uniform(-20, 20, size=50_000)
    ys = rng.uniform(-20, 20, size=50_000)
    fast_p = perlin2(11, xs, ys)
    slow_p = perlin2(11, xs, ys, force_numpy=True)
    assert np.array_equal(fast_p, slow_p)
    fast_f = fbm(11, xs, ys, octaves=4)
    slow_f = fbm(11, xs, ys, octaves=4, force_numpy=True)
    assert np.array_equal(fast_f, slow_f)


def test_sample_grid_shape_and_determinism():
    grid = sample_grid(21, 64, 48, scale=1 / 16)
    assert grid.shape == (48, 64)
    assert np.array_equal(grid, sample_grid(21, 64, 48, scale=1 / 16))


def test_empirical_lipschitz_bound():
    rng = np.random.default_rng(4)
    delta = 1e-3
    xs = rng.uniform(-100, 100, size=100_000)
    ys = rng.uniform(-100, 100, size=100_000)
    base = perlin2(13, xs, ys)
    shifted = perlin2(13, xs + delta, ys)
    ratio = np.abs(shifted - base) / delta
    assert float(ratio.max()) <= 3.5


def test_invalid_parameters_rejected():
    xs = np.zeros(4)
    with pytest.raises(ValueError):
        fbm(1, xs, xs, octaves=0)
    with pytest.raises(ValueError):
        fbm(1, xs, xs, octaves=2, persistence=0.0)


def test_numba_flag_reports_a_boolean():
    assert isinstance(numba_enabled(), bool)
