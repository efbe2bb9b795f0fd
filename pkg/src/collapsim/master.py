"""Deterministic density-matrix evolutions and analytic decay laws.

These are the oracles the stochastic ensembles are checked against.  Because
the preferred-basis operators are diagonal, the double commutator collapses
to an elementwise weight, [A_i, [A_i, rho]]_{ab} = (a_ia - a_ib)^2 rho_ab,
so both integrators reduce to RK4 on

    white:    drho/dt = -i [H0, rho] - (gamma/2) W . rho
    colored:  drho/dt = -gamma G(t) W . rho          (H0 absent by scope)

with W[a, b] = sum_i (a_ia - a_ib)^2 and "." elementwise.  The colored
integrator consumes the analytic cumulative G(t) rather than re-quadrature
per step, which removes a discretization axis from every comparison.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DegenerateEnsemble, StepSizeRejected
from .hilbert import CommutingSet, DensityMatrix, validate_hamiltonian
from .kernels import CorrelationKernel, kernel_cumulative, kernel_double_integral
from .noise import TimeGrid, checkpoint_indices, fsum_ordered

__all__ = [
    "DensityPath",
    "DecayReport",
    "ObservableReport",
    "evolve_lindblad_csl",
    "evolve_colored_master",
    "offdiag_analytic",
    "observable_mean",
    "ensemble_to_density",
    "offdiag_decay_report",
    "fit_exponential_rate",
    "log_derivative",
]

TRACE_DRIFT_TOL = 1.0e-8


@dataclass
class DensityPath:
    """rho(t) at checkpoint times, with optional entrywise standard errors."""

    times: np.ndarray
    rhos: np.ndarray  # (ncp, d, d)
    stderr_re: np.ndarray | None = None
    stderr_im: np.ndarray | None = None

    def offdiag(self, a: int, b: int) -> np.ndarray:
        return self.rhos[:, a, b]


def _rk4_density(rho0, grid, rhs, cp_idx):
    rho = np.array(rho0, dtype=np.complex128)
    nodes = grid.nodes()
    dt = grid.dt
    cp_set = {int(k): j for j, k in enumerate(cp_idx)}
    out = np.empty((len(cp_idx), *rho.shape), dtype=np.complex128)
    if 0 in cp_set:
        out[cp_set[0]] = rho
    for k in range(grid.steps):
        t = nodes[k]
        k1 = rhs(rho, t)
        k2 = rhs(rho + 0.5 * dt * k1, t + 0.5 * dt)
        k3 = rhs(rho + 0.5 * dt * k2, t + 0.5 * dt)
        k4 = rhs(rho + dt * k3, t + dt)
        rho = rho + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        drift = abs(float(np.trace(rho).real) - 1.0) + abs(float(np.trace(rho).imag))
        if drift > TRACE_DRIFT_TOL:
            raise StepSizeRejected(
                f"trace drift {drift:.2e} at t={nodes[k + 1]:.6g}; reduce the step size"
            )
        j = cp_set.get(k + 1)
        if j is not None:
            out[j] = rho
    return out


def evolve_lindblad_csl(
    h0,
    aset: CommutingSet,
    rho0: DensityMatrix,
    grid: TimeGrid,
    gamma: float,
    checkpoints=None,
) -> DensityPath:
    """White-noise master equation, 4th-order explicit stepping."""
    rho0.validate()
    cp_idx = checkpoint_indices(grid, 50) if checkpoints is None else np.asarray(checkpoints)
    w = aset.pairwise_gap_sq()
    h0m = validate_hamiltonian(h0, rho0.dim) if h0 is not None else None

    def rhs(rho, t):
        out = -(0.5 * gamma) * (w * rho)
        if h0m is not None:
            out = out - 1j * (h0m @ rho - rho @ h0m)
        return out

    rhos = _rk4_density(rho0.rho, grid, rhs, cp_idx)
    return DensityPath(grid.nodes()[cp_idx], rhos)


def evolve_colored_master(
    aset: CommutingSet,
    rho0: DensityMatrix,
    grid: TimeGrid,
    kernel: CorrelationKernel,
    checkpoints=None,
    kernel_t0: float | None = None,
) -> DensityPath:
    """Colored master equation (Hamiltonian absent by scope).

    kernel_t0 is where the noise history starts; it defaults to grid.t0 and
    may be -inf for the closed-form families (stationary long-history limit).
    """
    rho0.validate()
    cp_idx = checkpoint_indices(grid, 50) if checkpoints is None else np.asarray(checkpoints)
    w = aset.pairwise_gap_sq()
    t0 = grid.t0 if kernel_t0 is None else kernel_t0
    gamma = kernel.gamma

    def rhs(rho, t):
        g = kernel_cumulative(kernel, t, t0)
        return -(gamma * g) * (w * rho)

    rhos = _rk4_density(rho0.rho, grid, rhs, cp_idx)
    return DensityPath(grid.nodes()[cp_idx], rhos)


def offdiag_analytic(
    aset: CommutingSet,
    kernel: CorrelationKernel,
    alpha: int,
    beta: int,
    t: float,
    t0: float,
) -> float:
    """Damping factor of <alpha| rho |beta> between t0 and t (closed form)."""
    gap = float(aset.pairwise_gap_sq()[alpha, beta])
    if gap == 0.0:
        return 1.0
    f = kernel_double_integral(kernel, t, t0)
    return math.exp(-0.5 * kernel.gamma * gap * f)


@dataclass
class ObservableReport:
    """<O>(t) along a density path plus the analytic right-hand-side check."""

    times: np.ndarray
    values: np.ndarray
    rhs: np.ndarray  # analytic d<O>/dt at the checkpoints
    fd: np.ndarray  # centered finite differences (nan at the ends)
    max_mismatch: float  # max |fd - rhs| over interior checkpoints


def observable_mean(
    obs: np.ndarray,
    path: DensityPath,
    aset: CommutingSet,
    kernel: CorrelationKernel,
    kernel_t0: float | None = None,
) -> ObservableReport:
    """Tr(O rho(t)) with its derivative checked against the decay law."""
    obs = np.asarray(obs, dtype=np.complex128)
    if np.max(np.abs(obs - obs.conj().T)) > 1.0e-12:
        raise ConfigError("observable must be Hermitian")
    w = aset.pairwise_gap_sq()
    t0 = path.times[0] if kernel_t0 is None else kernel_t0
    values = np.array([float(np.trace(obs @ r).real) for r in path.rhos])
    rhs = np.array(
        [
            -kernel.gamma
            * kernel_cumulative(kernel, float(t), t0)
            * float(np.trace((w * obs) @ r).real)
            for t, r in zip(path.times, path.rhos)
        ]
    )
    fd = np.full_like(values, np.nan)
    if len(values) >= 3:
        fd[1:-1] = (values[2:] - values[:-2]) / (path.times[2:] - path.times[:-2])
    interior = slice(1, -1)
    max_mismatch = (
        float(np.max(np.abs(fd[interior] - rhs[interior]))) if len(values) >= 3 else 0.0
    )
    return ObservableReport(path.times, values, rhs, fd, max_mismatch)


# ---------------------------------------------------------------------------
# ensemble estimators


def _scaled_value(mean_val: complex, log_scale: float) -> complex:
    """exp(log_scale) * mean_val without overflowing through the product."""
    if mean_val == 0.0:
        return 0.0
    mag = abs(mean_val)
    out_log = log_scale + math.log(mag)
    if out_log > 709.0:
        raise DegenerateEnsemble("ensemble average overflowed; weights too degenerate")
    return (mean_val / mag) * math.exp(out_log)


def ensemble_to_density(result, mode: str = "raw", batches: int = 100) -> DensityPath:
    """Estimate rho(t) from gathered trajectory records.

    raw mode averages the unnormalized projectors |psi><psi| (log-offset
    aware); cooked mode averages weight * |psi_phys><psi_phys| with
    self-normalized weights.  Both estimate the same statistical operator.
    Standard errors come from batch means over trajectory-index batches
    (weights correlate with states, so per-sample variances would lie).
    """
    if mode not in ("raw", "cooked"):
        raise ConfigError(f"mode must be 'raw' or 'cooked', got {mode!r}")
    n, ncp, d = result.amps.shape
    if n < 2:
        raise ConfigError("need at least 2 trajectories for an ensemble estimate")
    nb = max(2, min(batches, n))
    edges = np.linspace(0, n, nb + 1).astype(int)
    rhos = np.empty((ncp, d, d), dtype=np.complex128)
    err_re = np.empty((ncp, d, d))
    err_im = np.empty((ncp, d, d))
    for c in range(ncp):
        lw = result.log_weights[:, c]
        peak = float(np.max(lw))
        if math.exp(min(peak, 709.0)) == 0.0:
            raise DegenerateEnsemble("all cooking weights underflow at this checkpoint")
        s = np.exp(lw - peak)
        proj = result.amps[:, c, :, None] * result.amps[:, c, None, :].conj()
        weighted = s[:, None, None] * proj
        if mode == "cooked":
            denom = fsum_ordered(s)
            wsums = np.array([fsum_ordered(s[lo:hi]) for lo, hi in zip(edges[:-1], edges[1:])])
            if denom == 0.0 or np.any(wsums == 0.0):
                raise DegenerateEnsemble("a weight batch summed to zero")
        else:
            scale = math.exp(min(peak, 709.0))
        for a in range(d):
            for b in range(d):
                vr = weighted[:, a, b].real
                vi = weighted[:, a, b].imag
                bsums = np.array(
                    [
                        complex(fsum_ordered(vr[lo:hi]), fsum_ordered(vi[lo:hi]))
                        for lo, hi in zip(edges[:-1], edges[1:])
                    ]
                )
                if mode == "raw":
                    mean = complex(fsum_ordered(vr) / n, fsum_ordered(vi) / n)
                    rhos[c, a, b] = _scaled_value(mean, peak)
                    bm = bsums / np.diff(edges) * scale
                else:
                    rhos[c, a, b] = complex(fsum_ordered(vr), fsum_ordered(vi)) / denom
                    bm = bsums / wsums
                err_re[c, a, b] = float(np.std(bm.real, ddof=1) / math.sqrt(nb))
                err_im[c, a, b] = float(np.std(bm.imag, ddof=1) / math.sqrt(nb))
    return DensityPath(result.times, rhos, err_re, err_im)


@dataclass
class DecayReport:
    """Analytic vs ensemble evolution of one density-matrix element."""

    pair: tuple[int, int]
    times: np.ndarray
    analytic: np.ndarray
    ensemble: np.ndarray
    stderr: np.ndarray


def offdiag_decay_report(
    ensemble_path: DensityPath,
    aset: CommutingSet,
    kernel: CorrelationKernel,
    alpha: int,
    beta: int,
    rho0: np.ndarray,
    t0: float | None = None,
) -> DecayReport:
    t0 = ensemble_path.times[0] if t0 is None else t0
    analytic = np.array(
        [
            offdiag_analytic(aset, kernel, alpha, beta, float(t), t0) * rho0[alpha, beta]
            for t in ensemble_path.times
        ]
    )
    err = (
        ensemble_path.stderr_re[:, alpha, beta]
        if ensemble_path.stderr_re is not None
        else np.zeros(len(ensemble_path.times))
    )
    return DecayReport(
        (alpha, beta), ensemble_path.times, analytic, ensemble_path.offdiag(alpha, beta), err
    )


def fit_exponential_rate(times, values) -> float:
    """Least-squares decay rate r of |v| ~ exp(-r t)."""
    times = np.asarray(times, dtype=float)
    mags = np.abs(np.asarray(values))
    if np.any(mags <= 0.0):
        raise ConfigError("cannot fit a decay rate through zero magnitudes")
    slope = np.polyfit(times, np.log(mags), 1)[0]
    return float(-slope)


def log_derivative(times, values, j: int) -> float:
    """Centered difference of ln|v| at checkpoint j (instantaneous rate is -this)."""
    if not 0 < j < len(times) - 1:
        raise ConfigError("log_derivative needs an interior checkpoint")
    return float(
        (math.log(abs(values[j + 1])) - math.log(abs(values[j - 1])))
        / (times[j + 1] - times[j - 1])
    )
