"""Monte Carlo validation of the Gaussian functional-average identity.

For a zero-mean Gaussian process w with covariance gamma * D, the average of
any functional F[w] times the endpoint value w(t) equals the kernel-weighted
average of the functional derivative:

    << F[w] w(t) >>  =  gamma * int_{t0}^{t} D(t, s) << dF/dw(s) >> ds

(the integral over s beyond [t0, t] drops because the solution functionals
cannot depend on noise outside the window, so the truncated integral is the
full identity).

The left side is a Monte Carlo average over sampled paths; the right side
uses the analytic functional derivative of a fixed menu of functionals:

    constant   F = 1          dF/dw(s) = 0
    linear_x   F = x(t)       dF/dw(s) = 1 on [t0, t]
    exp_x      F = e^{x(t)}   dF/dw(s) = e^{x(t)} on [t0, t]

so the time integral factors into gamma * G(t; t0) times the Monte Carlo
average of the derivative.  The report quotes both sides, their standard
errors, and |LHS - RHS| in units of the *paired* standard error (the two
sides are evaluated on the same paths, so the honest error is that of the
per-trajectory difference).

White noise keeps its discrete convention: w(t) at the final node is the
average of the two adjacent step values (the grid is extended by one step to
realize the boundary), which is exactly the half-weight the delta function
puts at the edge and is consistent with G_white = 1/2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, UnknownFunctional
from .kernels import (
    CorrelationKernel,
    KernelFamily,
    kernel_cumulative,
    kernel_double_integral,
)
from .noise import (
    TimeGrid,
    build_covariance,
    fsum_ordered,
    sample_paths,
    sample_white_increments,
)

__all__ = ["FnReport", "fn_validate", "FN_FUNCTIONALS"]

FN_FUNCTIONALS = ("constant", "linear_x", "exp_x")
_ALIASES = {
    "constant": "constant",
    "linearx": "linear_x",
    "linear_x": "linear_x",
    "expx": "exp_x",
    "exp_x": "exp_x",
}

_CHUNK = 1024


@dataclass(frozen=True)
class FnReport:
    """Both sides of the identity for one (kernel, functional) pair."""

    kernel_family: str
    functional: str
    n: int
    lhs: float
    lhs_stderr: float
    rhs: float
    rhs_stderr: float
    diff_stderr: float  # paired standard error of (F w - gamma G dF)
    sigmas: float  # |LHS - RHS| / diff_stderr
    rhs_analytic: float  # closed-form value of both sides


def _normalize_functional(functional: str) -> str:
    key = str(functional).replace("-", "_").lower()
    name = _ALIASES.get(key) or _ALIASES.get(key.replace("_", ""))
    if name is None:
        raise UnknownFunctional(f"unknown functional {functional!r}; pick from {FN_FUNCTIONALS}")
    return name


def _analytic_rhs(name: str, gamma: float, g_val: float, f_val: float) -> float:
    if name == "constant":
        return 0.0
    if name == "linear_x":
        return gamma * g_val
    return gamma * g_val * math.exp(0.5 * gamma * f_val)


def fn_validate(
    kernel: CorrelationKernel,
    functional: str,
    grid: TimeGrid,
    n: int,
    master_seed: int,
) -> FnReport:
    """Monte Carlo check of the identity for one functional and kernel.

    Single-process paths on ``grid``; the endpoint is t = grid.t1.  The RHS
    quadrature is closed-form (G from the kernel transforms), so refining it
    changes nothing; all Monte Carlo noise is shared between the two sides.
    """
    if n < 2:
        raise ConfigError("fn_validate needs n >= 2 samples")
    name = _normalize_functional(functional)
    gamma = kernel.gamma
    g_val = kernel_cumulative(kernel, grid.t1, grid.t0)
    f_val = kernel_double_integral(kernel, grid.t1, grid.t0)
    is_white = kernel.family is KernelFamily.WHITE

    if is_white:
        # one extra step so the boundary value (w_{M-1} + w_M)/2 exists
        ext = TimeGrid(grid.t0, grid.t1 + grid.dt, grid.steps + 1)
        factor = None
    else:
        ext = grid
        factor = build_covariance(grid, kernel)

    f_vals = np.empty(n)
    df_vals = np.empty(n)
    w_end = np.empty(n)
    node_t = grid.steps  # index of t on the (possibly extended) node grid
    for lo in range(0, n, _CHUNK):
        hi = min(lo + _CHUNK, n)
        if is_white:
            paths = sample_white_increments(ext, gamma, 1, hi - lo, master_seed, lo)
            for p in paths:
                i = p.index
                w_end[i] = 0.5 * (p.w[0, node_t - 1] + p.w[0, node_t])
                xt = p.x[0, node_t]
                f_vals[i], df_vals[i] = _functional_values(name, xt)
        else:
            paths = sample_paths(factor, 1, hi - lo, master_seed, lo)
            for p in paths:
                i = p.index
                w_end[i] = p.w[0, node_t]
                xt = p.x[0, node_t]
                f_vals[i], df_vals[i] = _functional_values(name, xt)

    lhs_samples = f_vals * w_end
    rhs_samples = (gamma * g_val) * df_vals
    diff = lhs_samples - rhs_samples
    lhs = fsum_ordered(lhs_samples) / n
    rhs = fsum_ordered(rhs_samples) / n
    lhs_err = _stderr(lhs_samples, lhs)
    rhs_err = _stderr(rhs_samples, rhs)
    diff_mean = fsum_ordered(diff) / n
    diff_err = _stderr(diff, diff_mean)
    sigmas = abs(diff_mean) / diff_err if diff_err > 0 else (0.0 if diff_mean == 0 else math.inf)
    return FnReport(
        kernel_family=kernel.family.value,
        functional=name,
        n=n,
        lhs=lhs,
        lhs_stderr=lhs_err,
        rhs=rhs,
        rhs_stderr=rhs_err,
        diff_stderr=diff_err,
        sigmas=sigmas,
        rhs_analytic=_analytic_rhs(name, gamma, g_val, f_val),
    )


def _functional_values(name: str, xt: float) -> tuple[float, float]:
    if name == "constant":
        return 1.0, 0.0
    if name == "linear_x":
        return xt, 1.0
    e = math.exp(xt)
    return e, e


def _stderr(samples: np.ndarray, mean: float) -> float:
    n = samples.size
    var = fsum_ordered((samples - mean) ** 2) / max(n - 1, 1)
    return math.sqrt(var / n)
