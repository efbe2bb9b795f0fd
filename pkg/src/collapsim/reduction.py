"""Cooking prescription and collapse statistics.

Physical statistics are obtained by reweighting raw trajectories with the
squared norm of the unnormalized state (self-normalized importance
weighting), which implements the cooked probability rule exactly and avoids
ever integrating the nonlinear norm-preserving dynamics.  Weight degeneracy
is guarded by the effective sample size, not repaired by resampling.

Outcome classification is a finite-time operationalization: a trajectory is
assigned to the joint eigenmanifold holding at least a threshold fraction
(default 0.99, config-exposed) of the physical weight, and Undecided
otherwise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DegenerateEnsemble, TooManyUndecided
from .hilbert import CommutingSet, born_weights
from .kernels import CorrelationKernel, kernel_double_integral
from .noise import fsum_ordered

__all__ = [
    "CookedWeights",
    "BornReport",
    "XDistributionReport",
    "cook_weights",
    "classify_outcomes",
    "born_frequencies",
    "cooked_x_distribution",
    "ks_critical_value",
    "UNDECIDED",
]

UNDECIDED = -1
N_EFF_FLOOR = 10.0


def _logsumexp(a: np.ndarray) -> float:
    peak = float(np.max(a))
    return peak + math.log(fsum_ordered(np.exp(a - peak)))


@dataclass
class CookedWeights:
    """Self-normalized cooking weights at one checkpoint."""

    weights: np.ndarray  # normalized to mean 1
    log_raw: np.ndarray  # log ||psi_raw||^2 per trajectory
    n_eff: float  # (sum w)^2 / sum w^2
    mean_raw: float  # mean of the unnormalized weights (should sit near 1)
    mean_raw_stderr: float


def cook_weights(result, checkpoint: int = -1, n_eff_floor: float = N_EFF_FLOOR) -> CookedWeights:
    """Cooking weights ~ ||psi_raw(t)||^2, normalized to mean one.

    The effective sample size is computed in the log domain,
    n_eff = exp(2 LSE(lw) - LSE(2 lw)), and guards downstream statistics.
    """
    lw = np.asarray(result.log_weights[:, checkpoint], dtype=float)
    n = lw.size
    if n < 1:
        raise ConfigError("cook_weights needs at least one record")
    n_eff = math.exp(2.0 * _logsumexp(lw) - _logsumexp(2.0 * lw))
    peak = float(np.max(lw))
    scaled = np.exp(lw - peak)
    mean_scaled = fsum_ordered(scaled) / n
    weights = scaled / mean_scaled
    log_mean = peak + math.log(mean_scaled)
    mean_raw = math.exp(log_mean) if log_mean < 709.0 else math.inf
    var = fsum_ordered((scaled - mean_scaled) ** 2) / max(n - 1, 1)
    stderr = math.sqrt(var / n) * math.exp(min(peak, 709.0))
    if n_eff < n_eff_floor:
        raise DegenerateEnsemble(
            f"effective sample size {n_eff:.2f} below floor {n_eff_floor}"
        )
    return CookedWeights(weights, lw, n_eff, mean_raw, stderr)


def classify_outcomes(
    result, aset: CommutingSet, threshold: float = 0.99, checkpoint: int = -1
) -> np.ndarray:
    """Outcome-group index per trajectory, or UNDECIDED (-1).

    A trajectory is decided when one joint eigenmanifold holds at least
    ``threshold`` of the physical weight |psi_phys|^2 at the checkpoint.
    """
    if not 0.5 < threshold <= 1.0:
        raise ConfigError("decision threshold must lie in (0.5, 1]")
    groups = aset.outcome_groups()
    probs = np.abs(result.amps[:, checkpoint, :]) ** 2  # (n, d)
    gp = np.stack([probs[:, g.indices].sum(axis=1) for g in groups], axis=1)  # (n, G)
    best = np.argmax(gp, axis=1)
    decided = gp[np.arange(gp.shape[0]), best] >= threshold
    return np.where(decided, best, UNDECIDED)


@dataclass
class BornReport:
    """Cooked outcome frequencies against the quantum-mechanical weights."""

    labels: list[str]
    born: np.ndarray  # ||P_g psi0||^2
    frequency: np.ndarray  # cooked frequency among decided trajectories
    stderr: np.ndarray  # binomial at the decided effective sample size
    n_eff: float  # over decided trajectories
    undecided_fraction: float  # cooked-weighted


def born_frequencies(
    result,
    aset: CommutingSet,
    psi0,
    threshold: float = 0.99,
    checkpoint: int = -1,
    min_decided: float = 0.95,
) -> BornReport:
    """Weighted outcome frequencies with binomial standard errors.

    Frequencies are conditional on the decided trajectories; the standard
    error is binomial under the reference weights at the decided effective
    sample size, sqrt(p0 (1 - p0) / n_eff).
    """
    cw = cook_weights(result, checkpoint)
    labels = [g.label for g in aset.outcome_groups()]
    outcomes = classify_outcomes(result, aset, threshold, checkpoint)
    w = cw.weights
    total = fsum_ordered(w)
    undecided = fsum_ordered(w[outcomes == UNDECIDED]) / total
    if 1.0 - undecided < min_decided:
        raise TooManyUndecided(
            f"cooked decided fraction {1.0 - undecided:.3f} below {min_decided}"
        )
    decided_mask = outcomes != UNDECIDED
    wd = w[decided_mask]
    od = outcomes[decided_mask]
    denom = fsum_ordered(wd)
    n_eff = denom**2 / fsum_ordered(wd**2)
    born = born_weights(np.asarray(psi0, complex), aset)
    freq = np.array([fsum_ordered(wd[od == g]) / denom for g in range(len(labels))])
    stderr = np.sqrt(np.clip(born * (1.0 - born), 0.0, None) / n_eff)
    return BornReport(labels, born, freq, stderr, n_eff, undecided)


def ks_critical_value(n_eff: float, alpha: float = 0.01) -> float:
    """Asymptotic Kolmogorov critical distance at level alpha for n_eff samples."""
    return math.sqrt(-0.5 * math.log(alpha / 2.0)) / math.sqrt(n_eff)


@dataclass
class XDistributionReport:
    """Weighted distribution of the integrated noise vs the analytic mixture."""

    x: np.ndarray
    weights: np.ndarray
    component_means: np.ndarray
    component_weights: np.ndarray
    sigma: float
    ks_distance: float
    ks_critical: float
    raw_ks_distance: float
    raw_ks_critical: float
    n_eff: float


def _mixture_cdf(x, means, weights, sigma):
    z = (x[:, None] - means[None, :]) / (sigma * math.sqrt(2.0))
    comp = 0.5 * (1.0 + np.vectorize(math.erf)(z))
    return comp @ weights


def _weighted_ks(x, w, cdf) -> float:
    order = np.argsort(x, kind="stable")
    xs = x[order]
    cum = np.cumsum(w[order])
    cum /= cum[-1]
    model = cdf(xs)
    lower = np.concatenate(([0.0], cum[:-1]))
    return float(np.max(np.maximum(np.abs(cum - model), np.abs(lower - model))))


def cooked_x_distribution(
    result,
    aset: CommutingSet,
    psi0,
    kernel: CorrelationKernel,
    checkpoint: int = -1,
    process: int = 0,
    alpha: float = 0.01,
) -> XDistributionReport:
    """Compare the cooked x(t) sample with the two-component Gaussian mixture.

    For a single preferred-basis operator the cooked distribution of the
    integrated noise is the mixture of Gaussians centered at 2 a_g gamma f(t)
    with common variance gamma f(t) and the initial-state weights; the raw
    (unweighted) sample must instead follow the single zero-mean Gaussian of
    the same variance.  Distances are Kolmogorov-Smirnov-type with the
    effective sample size in the critical value.
    """
    if aset.num_ops != 1:
        raise ConfigError("cooked_x_distribution is defined for a single operator")
    cw = cook_weights(result, checkpoint)
    x = result.x[:, process, checkpoint]
    t = float(result.times[checkpoint])
    t0 = float(result.grid.t0)
    gf = kernel.gamma * kernel_double_integral(kernel, t, t0)
    if gf <= 0.0:
        raise ConfigError("cooked_x_distribution needs f(t) > 0 (t past t0)")
    sigma = math.sqrt(gf)
    groups = aset.outcome_groups()
    means = np.array([2.0 * g.key[0] * gf for g in groups])
    comp_w = born_weights(np.asarray(psi0, complex), aset)
    dist = _weighted_ks(x, cw.weights, lambda xs: _mixture_cdf(xs, means, comp_w, sigma))
    raw_dist = _weighted_ks(
        x, np.ones_like(x), lambda xs: _mixture_cdf(xs, np.array([0.0]), np.array([1.0]), sigma)
    )
    return XDistributionReport(
        x=x,
        weights=cw.weights,
        component_means=means,
        component_weights=comp_w,
        sigma=sigma,
        ks_distance=dist,
        ks_critical=ks_critical_value(cw.n_eff, alpha),
        raw_ks_distance=raw_dist,
        raw_ks_critical=ks_critical_value(float(x.size), alpha),
        n_eff=cw.n_eff,
    )
