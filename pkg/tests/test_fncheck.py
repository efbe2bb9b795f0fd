"""Gaussian functional-average identity, per kernel family and functional."""

import math

import numpy as np
import pytest
from scipy import integrate

from collapsim import TimeGrid, exponential_kernel, fn_validate, gaussian_kernel, white_kernel
from collapsim.errors import UnknownFunctional
from collapsim.kernels import kernel_cumulative, kernel_double_integral, kernel_eval

GRID = TimeGrid(0.0, 1.0, 200)
KERNELS = [white_kernel(0.8), gaussian_kernel(0.8, 0.4), exponential_kernel(0.8, 0.4)]


@pytest.mark.parametrize("kernel", KERNELS, ids=lambda k: k.family.value)
def test_constant_functional(kernel):
    rep = fn_validate(kernel, "constant", GRID, 20_000, master_seed=5)
    assert rep.rhs == 0.0
    assert rep.rhs_analytic == 0.0
    assert abs(rep.lhs) <= 5.0 * rep.lhs_stderr  # zero-mean noise
    assert rep.sigmas <= 5.0


@pytest.mark.parametrize("kernel", KERNELS, ids=lambda k: k.family.value)
def test_linear_functional(kernel):
    # both sides must sit at gamma G(t); the Gaussian covariance identity
    # <x(t) w(t)> = gamma int D(t, s) ds is the quadrature oracle
    rep = fn_validate(kernel, "linear_x", GRID, 20_000, master_seed=6)
    want = kernel.gamma * kernel_cumulative(kernel, GRID.t1, GRID.t0)
    assert rep.rhs_analytic == pytest.approx(want, rel=1e-14)
    assert abs(rep.lhs - want) <= 5.0 * rep.lhs_stderr
    assert rep.sigmas <= 5.0


@pytest.mark.parametrize("kernel", KERNELS, ids=lambda k: k.family.value)
def test_exp_functional(kernel):
    # Gaussian moment identity <e^x w> = Cov(x, w) e^{Var(x)/2}
    rep = fn_validate(kernel, "exp_x", GRID, 20_000, master_seed=7)
    g = kernel.gamma * kernel_cumulative(kernel, GRID.t1, GRID.t0)
    f = kernel.gamma * kernel_double_integral(kernel, GRID.t1, GRID.t0)
    assert rep.rhs_analytic == pytest.approx(g * math.exp(0.5 * f), rel=1e-14)
    assert rep.sigmas <= 5.0
    assert abs(rep.lhs - rep.rhs_analytic) <= 5.0 * rep.lhs_stderr


def test_white_half_convention_in_rhs():
    # the delta at the endpoint contributes half: gamma G = gamma / 2
    rep = fn_validate(white_kernel(0.8), "linear_x", GRID, 5_000, master_seed=8)
    assert rep.rhs_analytic == pytest.approx(0.4, rel=1e-14)


def test_functional_aliases_and_unknown():
    rep = fn_validate(white_kernel(1.0), "LinearX", GRID, 100, master_seed=1)
    assert rep.functional == "linear_x"
    rep = fn_validate(white_kernel(1.0), "ExpX", GRID, 100, master_seed=1)
    assert rep.functional == "exp_x"
    with pytest.raises(UnknownFunctional):
        fn_validate(white_kernel(1.0), "cubic", GRID, 100, master_seed=1)


@pytest.mark.parametrize(
    "kernel", [gaussian_kernel(0.8, 0.4), exponential_kernel(0.8, 0.4)],
    ids=lambda k: k.family.value,
)
def test_rhs_quadrature_deterministic_and_stable(kernel):
    # the RHS time integral is closed-form; adaptive quadrature at two
    # refinement levels agrees with it to well below 1e-8 relative
    closed = kernel_cumulative(kernel, GRID.t1, GRID.t0)
    coarse, _ = integrate.quad(
        lambda s: kernel_eval(kernel, GRID.t1, s), GRID.t0, GRID.t1, limit=50
    )
    fine, _ = integrate.quad(
        lambda s: kernel_eval(kernel, GRID.t1, s),
        GRID.t0,
        GRID.t1,
        limit=100,
        epsabs=1e-13,
        epsrel=1e-13,
    )
    assert coarse == pytest.approx(closed, rel=1e-10)
    assert abs(fine - coarse) / abs(closed) < 1e-8


def test_report_carries_sample_count():
    rep = fn_validate(white_kernel(1.0), "constant", GRID, 256, master_seed=2)
    assert rep.n == 256 and rep.kernel_family == "white"
