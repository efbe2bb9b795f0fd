"""Noise correlation kernels and their time-integral transforms.

A kernel describes the two-point function gamma * D(t1, t2) of the driving
Gaussian processes.  D itself is kept normalized (unit time integral for the
closed-form colored families); the strength prefactor gamma is stored on the
kernel and applied exactly once, either when a discrete covariance matrix is
built or inside an analytic rate formula.

Two integral transforms of D recur in every decay law:

    cumulative       G(t; t0) = int_{t0}^{t} D(t, s) ds
    double integral  f(t; t0) = int_{t0}^{t} int_{t0}^{t} D(s1, s2) ds1 ds2

f is the variance of the integrated process divided by gamma; its divergence
at large times is what drives reduction, which ``divergence_check`` reports.

White noise is kept strictly discrete (per-step variance gamma/dt); it has no
pointwise D value, and its G carries the delta-at-the-edge convention
G = 1/2 for every t >= t0.
"""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    ConfigError,
    InvalidInterval,
    OutOfRange,
    UnsupportedPointwiseEval,
)

__all__ = [
    "KernelFamily",
    "CorrelationKernel",
    "DivergenceReport",
    "white_kernel",
    "gaussian_kernel",
    "exponential_kernel",
    "tabulated_kernel",
    "kernel_from_config",
    "load_kernel_table",
    "kernel_eval",
    "kernel_cumulative",
    "kernel_double_integral",
    "divergence_check",
]

# Eigenvalue floor used by the PSD invariant: min eig >= -EPS_PSD * max(diag).
EPS_PSD = 1.0e-10


class KernelFamily(enum.Enum):
    WHITE = "white"
    GAUSSIAN = "gaussian"
    EXPONENTIAL = "exponential"
    TABULATED = "tabulated"


@dataclass(frozen=True, eq=False)
class CorrelationKernel:
    """Stationary correlation kernel for independent identical processes.

    The cross structure is restricted to delta_ij (each process carries the
    same D, processes are mutually independent), so a single scalar D(|lag|)
    fully describes the family.
    """

    family: KernelFamily
    gamma: float
    tau: float | None = None
    table_lags: np.ndarray | None = field(default=None, repr=False)
    table_values: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if not (self.gamma > 0.0 and math.isfinite(self.gamma)):
            raise ConfigError(f"kernel strength gamma must be positive, got {self.gamma}")
        if self.family in (KernelFamily.GAUSSIAN, KernelFamily.EXPONENTIAL):
            if self.tau is None or not (self.tau > 0.0 and math.isfinite(self.tau)):
                raise ConfigError(f"{self.family.value} kernel needs a positive tau")
        if self.family is KernelFamily.TABULATED:
            lags, vals = self.table_lags, self.table_values
            if lags is None or vals is None:
                raise ConfigError("tabulated kernel needs (lags, values)")
            lags = np.asarray(lags, dtype=float)
            vals = np.asarray(vals, dtype=float)
            if lags.ndim != 1 or lags.shape != vals.shape or lags.size < 2:
                raise ConfigError("kernel table must be two equal 1-D columns, >= 2 rows")
            if lags[0] != 0.0 or np.any(np.diff(lags) <= 0.0):
                raise ConfigError("kernel table lags must be strictly increasing from 0")
            if not (np.all(np.isfinite(lags)) and np.all(np.isfinite(vals))):
                raise ConfigError("kernel table entries must be finite")
            object.__setattr__(self, "table_lags", lags)
            object.__setattr__(self, "table_values", vals)

    @property
    def max_lag(self) -> float:
        return float(self.table_lags[-1])


def white_kernel(gamma: float) -> CorrelationKernel:
    return CorrelationKernel(KernelFamily.WHITE, gamma)


def gaussian_kernel(gamma: float, tau: float) -> CorrelationKernel:
    return CorrelationKernel(KernelFamily.GAUSSIAN, gamma, tau)


def exponential_kernel(gamma: float, tau: float) -> CorrelationKernel:
    return CorrelationKernel(KernelFamily.EXPONENTIAL, gamma, tau)


def tabulated_kernel(gamma: float, lags, values) -> CorrelationKernel:
    """Symmetric stationary table D(|lag|); D is zero beyond the last lag."""
    return CorrelationKernel(
        KernelFamily.TABULATED,
        gamma,
        table_lags=np.asarray(lags, dtype=float),
        table_values=np.asarray(values, dtype=float),
    )


def load_kernel_table(path) -> tuple[np.ndarray, np.ndarray]:
    """Read a two-column CSV (lag, D); a one-time header row is tolerated."""
    lags, vals = [], []
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row:
                continue
            try:
                lag, val = float(row[0]), float(row[1])
            except ValueError:
                if not lags:  # header line
                    continue
                raise ConfigError(f"bad kernel table row: {row!r}")
            lags.append(lag)
            vals.append(val)
    if len(lags) < 2:
        raise ConfigError(f"kernel table {path} has fewer than 2 rows")
    return np.asarray(lags), np.asarray(vals)


def kernel_from_config(block: dict, base_dir=None) -> CorrelationKernel:
    """Build a kernel from a run-config block {family, gamma, tau?, table_path?}."""
    try:
        family = KernelFamily(str(block["family"]).lower())
    except (KeyError, ValueError):
        raise ConfigError(f"unknown kernel family in {block!r}")
    gamma = block.get("gamma")
    if gamma is None:
        raise ConfigError("kernel block needs gamma")
    if family is KernelFamily.WHITE:
        return white_kernel(float(gamma))
    if family is KernelFamily.TABULATED:
        path = block.get("table_path")
        if path is None:
            raise ConfigError("tabulated kernel needs table_path")
        if base_dir is not None:
            import os

            path = os.path.join(base_dir, path) if not os.path.isabs(path) else path
        lags, vals = load_kernel_table(path)
        return tabulated_kernel(float(gamma), lags, vals)
    tau = block.get("tau")
    if tau is None:
        raise ConfigError(f"{family.value} kernel needs tau")
    return CorrelationKernel(family, float(gamma), float(tau))


# ---------------------------------------------------------------------------
# pointwise evaluation


def _table_interp(kernel: CorrelationKernel, lag: np.ndarray | float):
    lag = np.abs(lag)
    if np.any(lag > kernel.max_lag * (1.0 + 1e-12)):
        raise OutOfRange(
            f"tabulated kernel queried at lag {np.max(lag)} beyond {kernel.max_lag}"
        )
    return np.interp(lag, kernel.table_lags, kernel.table_values)


def eval_zero_extended(kernel: CorrelationKernel, t1, t2):
    """D(t1, t2) with tabulated kernels extended by zero beyond the table.

    Tables describe a compactly supported D; integral transforms and the
    discrete covariance use this extension, while the pointwise ``kernel_eval``
    keeps its out-of-range guard for direct queries.
    """
    if kernel.family is not KernelFamily.TABULATED:
        return kernel_eval(kernel, t1, t2)
    lag = np.abs(np.asarray(t1, dtype=float) - np.asarray(t2, dtype=float))
    out = np.interp(lag, kernel.table_lags, kernel.table_values, right=0.0)
    out = np.where(lag > kernel.max_lag, 0.0, out)
    return float(out) if out.ndim == 0 else out


def kernel_eval(kernel: CorrelationKernel, t1: float, t2: float):
    """Normalized D(t1, t2) without the gamma prefactor.

    Stationary families depend on |t1 - t2| only.  Accepts array arguments
    (broadcast) for grid construction.
    """
    t1 = np.asarray(t1, dtype=float)
    t2 = np.asarray(t2, dtype=float)
    if not (np.all(np.isfinite(t1)) and np.all(np.isfinite(t2))):
        raise InvalidInterval("kernel_eval needs finite times")
    lag = np.abs(t1 - t2)
    fam = kernel.family
    if fam is KernelFamily.WHITE:
        raise UnsupportedPointwiseEval(
            "white noise has no pointwise kernel value; use the discrete covariance"
        )
    if fam is KernelFamily.GAUSSIAN:
        tau = kernel.tau
        out = np.exp(-(lag**2) / (2.0 * tau * tau)) / (math.sqrt(2.0 * math.pi) * tau)
    elif fam is KernelFamily.EXPONENTIAL:
        tau = kernel.tau
        out = np.exp(-lag / tau) / (2.0 * tau)
    else:
        out = _table_interp(kernel, lag)
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# single time integral G(t; t0)


def _check_interval(t: float, t0: float, allow_inf_t0: bool):
    if not math.isfinite(t):
        raise InvalidInterval(f"t must be finite, got {t}")
    if t0 == -math.inf:
        if not allow_inf_t0:
            raise InvalidInterval("t0 = -inf only supported for closed-form families")
        return
    if not math.isfinite(t0):
        raise InvalidInterval(f"t0 must be finite or -inf, got {t0}")
    if t < t0:
        raise InvalidInterval(f"need t >= t0, got t={t} < t0={t0}")


def _table_cumulative(kernel: CorrelationKernel, upper: float) -> float:
    """Exact integral of the piecewise-linear table over [0, upper], zero beyond."""
    lags, vals = kernel.table_lags, kernel.table_values
    upper = min(upper, kernel.max_lag)
    if upper <= 0.0:
        return 0.0
    total = 0.0
    for lo, hi, vlo, vhi in zip(lags[:-1], lags[1:], vals[:-1], vals[1:]):
        if lo >= upper:
            break
        seg_hi = min(hi, upper)
        v_end = vlo + (vhi - vlo) * (seg_hi - lo) / (hi - lo)
        total += 0.5 * (vlo + v_end) * (seg_hi - lo)
    return total


def kernel_cumulative(kernel: CorrelationKernel, t: float, t0: float) -> float:
    """G(t; t0) = int_{t0}^{t} D(t, s) ds, by closed form where available.

    White noise: the delta sits at the interval edge s = t and contributes
    one half, so G = 1/2 for every t >= t0 (including t = t0).
    """
    fam = kernel.family
    allow_inf = fam in (KernelFamily.GAUSSIAN, KernelFamily.EXPONENTIAL, KernelFamily.WHITE)
    _check_interval(t, t0, allow_inf_t0=allow_inf)
    if fam is KernelFamily.WHITE:
        return 0.5
    if t0 == -math.inf:
        return 0.5
    span = t - t0
    if fam is KernelFamily.GAUSSIAN:
        return 0.5 * math.erf(span / (math.sqrt(2.0) * kernel.tau))
    if fam is KernelFamily.EXPONENTIAL:
        return 0.5 * (1.0 - math.exp(-span / kernel.tau))
    return _table_cumulative(kernel, span)


# ---------------------------------------------------------------------------
# double integral f(t; t0)


def _table_weighted_integral(kernel: CorrelationKernel, span: float) -> float:
    """Exact int_0^span (span - u) D(u) du for the piecewise-linear table."""
    lags, vals = kernel.table_lags, kernel.table_values
    upper = min(span, kernel.max_lag)
    total = 0.0
    for lo, hi, vlo, vhi in zip(lags[:-1], lags[1:], vals[:-1], vals[1:]):
        if lo >= upper:
            break
        seg_hi = min(hi, upper)
        slope = (vhi - vlo) / (hi - lo)
        # integrate (span - u)(vlo + slope (u - lo)) du over [lo, seg_hi]
        a, b = lo, seg_hi
        c0 = vlo - slope * lo
        # (span - u)(c0 + slope u) = span c0 + (span slope - c0) u - slope u^2
        total += (
            span * c0 * (b - a)
            + 0.5 * (span * slope - c0) * (b * b - a * a)
            - slope * (b**3 - a**3) / 3.0
        )
    return total


def kernel_double_integral(kernel: CorrelationKernel, t: float, t0: float) -> float:
    """f(t; t0), the double integral of D over [t0, t]^2.

    By stationarity and symmetry f = 2 int_0^T (T - u) D(u) du with T = t - t0,
    which the closed forms below evaluate exactly.
    """
    _check_interval(t, t0, allow_inf_t0=False)
    span = t - t0
    fam = kernel.family
    if fam is KernelFamily.WHITE:
        return span
    if fam is KernelFamily.EXPONENTIAL:
        tau = kernel.tau
        return span - tau * (1.0 - math.exp(-span / tau))
    if fam is KernelFamily.GAUSSIAN:
        tau = kernel.tau
        if span == 0.0:
            return 0.0
        return span * math.erf(span / (math.sqrt(2.0) * tau)) + tau * math.sqrt(
            2.0 / math.pi
        ) * (math.exp(-(span**2) / (2.0 * tau * tau)) - 1.0)
    return 2.0 * _table_weighted_integral(kernel, span)


# ---------------------------------------------------------------------------
# divergence report


@dataclass(frozen=True)
class DivergenceReport:
    """Monotonicity report for f(t) on a geometric sequence of horizons."""

    times: np.ndarray
    values: np.ndarray
    nondecreasing: bool
    last_slope: float
    slope_threshold: float

    @property
    def diverging(self) -> bool:
        return self.nondecreasing and self.last_slope > self.slope_threshold


def divergence_check(
    kernel: CorrelationKernel, horizon: float, t0: float, num_points: int = 16
) -> DivergenceReport:
    """Probe whether f(t; t0) keeps growing out to ``horizon``.

    Kernels whose double integral saturates (e.g. compactly supported
    oscillatory tables integrating to zero) violate the reduction condition
    and come back flagged; this is report-only, nothing is raised.
    """
    if not horizon > t0:
        raise InvalidInterval(f"horizon {horizon} must exceed t0 {t0}")
    spans = (horizon - t0) * np.geomspace(2.0**-10, 1.0, num_points)
    times = t0 + spans
    values = np.array([kernel_double_integral(kernel, t, t0) for t in times])
    diffs = np.diff(values)
    nondecreasing = bool(np.all(diffs >= -1e-14 * max(1.0, float(values[-1]))))
    last_slope = float(diffs[-1] / (times[-1] - times[-2]))
    return DivergenceReport(
        times=times,
        values=values,
        nondecreasing=nondecreasing,
        last_slope=last_slope,
        slope_threshold=1.0e-6 * kernel.gamma,
    )
