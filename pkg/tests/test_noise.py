"""Sampling moments, reproducibility, and the integrated-process law."""

import math

import numpy as np
import pytest

from collapsim import (
    TimeGrid,
    build_covariance,
    exponential_kernel,
    gaussian_kernel,
    sample_paths,
    sample_white_increments,
    tabulated_kernel,
    white_kernel,
)
from collapsim.errors import ConfigError, KernelNotPSD, UnsupportedPointwiseEval
from collapsim.kernels import kernel_double_integral
from collapsim.noise import (
    checkpoint_indices,
    child_generator,
    fsum_mean,
    left_cumulative,
    trapezoid_cumulative,
)

from conftest import stderr_of_mean


def stack_paths(paths, attr="w"):
    return np.stack([getattr(p, attr) for p in paths])


def test_grid_validation():
    with pytest.raises(ConfigError):
        TimeGrid(0.0, 0.0, 10)
    with pytest.raises(ConfigError):
        TimeGrid(0.0, 1.0, 0)
    g = TimeGrid(-1.0, 1.0, 4)
    assert g.dt == 0.5
    assert np.allclose(g.nodes(), [-1.0, -0.5, 0.0, 0.5, 1.0])
    assert g.node_index(0.5) == 3
    with pytest.raises(ConfigError):
        g.node_index(0.3)


def test_checkpoint_indices_cover_ends():
    g = TimeGrid(0.0, 1.0, 400)
    idx = checkpoint_indices(g, 11)
    assert idx[0] == 0 and idx[-1] == 400 and len(idx) == 11
    small = checkpoint_indices(TimeGrid(0.0, 1.0, 3), 50)
    assert small.tolist() == [0, 1, 2, 3]


def test_covariance_entries_frozen():
    # high-precision oracle: (1/sqrt(2 pi)) e^{-2} = 0.05399096651318806
    grid = TimeGrid(0.0, 2.0, 2)
    factor = build_covariance(grid, gaussian_kernel(1.0, 1.0))
    assert factor.cov[0, 2] == pytest.approx(0.05399096651318806, rel=1e-12)
    assert np.array_equal(factor.cov, factor.cov.T)
    k = exponential_kernel(2.0, 0.25)
    fe = build_covariance(grid, k)
    assert fe.cov[1, 1] == pytest.approx(2.0 / (2.0 * 0.25), rel=1e-14)


def test_covariance_white_bypasses():
    with pytest.raises(UnsupportedPointwiseEval):
        build_covariance(TimeGrid(0.0, 1.0, 4), white_kernel(1.0))


def test_covariance_not_psd_raises():
    # zig-zag table with a strongly negative spectral lobe
    k = tabulated_kernel(1.0, [0.0, 0.5, 1.0], [1.0, -0.9, 0.8])
    with pytest.raises(KernelNotPSD):
        build_covariance(TimeGrid(0.0, 4.0, 128), k)


def test_sampling_reproducibility_bitwise():
    grid = TimeGrid(0.0, 1.0, 32)
    factor = build_covariance(grid, gaussian_kernel(1.0, 0.4))
    a = sample_paths(factor, 2, 3, master_seed=99)
    b = sample_paths(factor, 2, 3, master_seed=99)
    for pa, pb in zip(a, b):
        assert np.array_equal(pa.w, pb.w) and np.array_equal(pa.x, pb.x)
    # trajectory identity is absolute, not positional
    solo = sample_paths(factor, 2, 1, master_seed=99, start_index=2)[0]
    assert np.array_equal(solo.w, a[2].w)
    other = sample_paths(factor, 2, 1, master_seed=100, start_index=2)[0]
    assert not np.allclose(other.w, solo.w)


def test_child_generator_streams_differ():
    g0 = child_generator(7, 0).standard_normal(8)
    g1 = child_generator(7, 1).standard_normal(8)
    assert not np.allclose(g0, g1)


def test_integrated_path_invariants():
    grid = TimeGrid(0.0, 1.0, 64)
    factor = build_covariance(grid, exponential_kernel(1.0, 0.3))
    p = sample_paths(factor, 2, 1, master_seed=5)[0]
    assert np.all(p.x[:, 0] == 0.0)
    assert np.array_equal(p.x, trapezoid_cumulative(p.w, grid.dt))
    wh = sample_white_increments(grid, 1.0, 2, 1, master_seed=5)[0]
    assert np.all(wh.x[:, 0] == 0.0)
    assert np.array_equal(wh.x, left_cumulative(wh.w, grid.dt))


def test_colored_sample_moments():
    grid = TimeGrid(0.0, 1.0, 8)
    kernel = gaussian_kernel(1.0, 0.5)
    factor = build_covariance(grid, kernel)
    n = 10_000
    w = stack_paths(sample_paths(factor, 1, n, master_seed=31))[:, 0, :]  # (n, nodes)
    # zero mean within 4 sample standard errors per node
    for k in range(w.shape[1]):
        bound = 4.0 * w[:, k].std(ddof=1) / math.sqrt(n)
        assert abs(w[:, k].mean()) <= bound
    # entrywise covariance within 5 standard errors of C (SE computed here)
    cov_hat = np.cov(w.T, ddof=1)
    c = factor.cov
    se = np.sqrt((np.outer(np.diag(c), np.diag(c)) + c**2) / n)
    assert np.all(np.abs(cov_hat - c) <= 5.0 * se)


def test_gaussianity_kurtosis():
    grid = TimeGrid(0.0, 1.0, 8)
    factor = build_covariance(grid, exponential_kernel(1.0, 0.4))
    n = 10_000
    w = stack_paths(sample_paths(factor, 1, n, master_seed=13))[:, 0, :]
    bound = 5.0 * math.sqrt(24.0 / n)
    for k in (0, 4, 8):
        col = w[:, k]
        z = (col - col.mean()) / col.std(ddof=0)
        kurt = float(np.mean(z**4))
        assert abs(kurt - 3.0) <= bound


def test_white_increment_variance_and_x():
    grid = TimeGrid(0.0, 1.0, 50)
    gamma, n = 0.8, 10_000
    paths = sample_white_increments(grid, gamma, 1, n, master_seed=21)
    w = stack_paths(paths)[:, 0, :]
    target = gamma / grid.dt
    var_hat = w.var(ddof=1, axis=0)
    se = target * math.sqrt(2.0 / (n - 1))
    assert np.all(np.abs(var_hat - target) <= 5.0 * se)
    # <x(t1)^2> = gamma * (t1 - t0): the white double-integral law
    x1 = stack_paths(paths, "x")[:, 0, -1]
    vx = float(np.mean(x1**2))
    se_x = stderr_of_mean(x1**2)
    assert abs(vx - gamma * 1.0) <= 5.0 * se_x


def test_white_dt_invariance():
    gamma, n = 1.0, 8_000
    vs = []
    for steps in (64, 128):
        grid = TimeGrid(0.0, 1.0, steps)
        x1 = stack_paths(sample_white_increments(grid, gamma, 1, n, 77), "x")[:, 0, -1]
        vs.append((float(np.mean(x1**2)), stderr_of_mean(x1**2)))
    (v1, s1), (v2, s2) = vs
    assert abs(v1 - v2) <= 5.0 * math.hypot(s1, s2)


@pytest.mark.parametrize(
    "kernel",
    [
        white_kernel(0.9),
        gaussian_kernel(1.1, 0.3),
        exponential_kernel(0.7, 0.5),
        tabulated_kernel(0.8, np.linspace(0.0, 0.6, 13), 2.0 * (1.0 - np.linspace(0.0, 0.6, 13) / 0.6)),
    ],
)
def test_integrated_variance_matches_gamma_f(kernel):
    grid = TimeGrid(0.0, 1.5, 150)
    n = 10_000
    if kernel.family.value == "white":
        paths = sample_white_increments(grid, kernel.gamma, 1, n, master_seed=55)
    else:
        paths = sample_paths(build_covariance(grid, kernel), 1, n, master_seed=55)
    x = stack_paths(paths, "x")[:, 0, :]
    for idx in checkpoint_indices(grid, 6)[1:]:  # 5 checkpoints past t0
        t = grid.nodes()[idx]
        target = kernel.gamma * kernel_double_integral(kernel, float(t), 0.0)
        sample = x[:, idx] ** 2
        assert abs(float(np.mean(sample)) - target) <= 5.0 * stderr_of_mean(sample)


def test_fsum_mean_matches_numpy_scale():
    vals = np.linspace(-1.0, 1.0, 1001)
    assert fsum_mean(vals) == pytest.approx(0.0, abs=1e-15)


def test_sample_count_validation():
    grid = TimeGrid(0.0, 1.0, 4)
    with pytest.raises(ConfigError):
        sample_white_increments(grid, 1.0, 1, 0, master_seed=1)
    factor = build_covariance(grid, gaussian_kernel(1.0, 1.0))
    with pytest.raises(ConfigError):
        sample_paths(factor, 1, 0, master_seed=1)
