"""Trajectory-level solvers for the stochastic collapse equations.

Three closed cases are implemented, exactly the ones that admit controlled
numerics:

* ``evolve_csl_white`` -- white noise with an arbitrary Hamiltonian, via
  Trotter splitting: unitary half-step, exact diagonal stochastic factor
  exp(sum_i A_i w_i dt - gamma sum_i A_i^2 dt), unitary half-step.  The
  diagonal exponential realizes the Stratonovich reading exactly in the
  noise; the per-step error is O(dt^2) from the splitting alone.
* ``evolve_colored_commuting`` -- any kernel when the Hamiltonian commutes
  with the preferred-basis operators (or is absent).  Amplitudes propagate in
  closed form, c_a(t) = c_a(t0) exp(-i E_a (t-t0) + sum_i a_ia x_i(t)
  - gamma sum_i a_ia^2 f(t)), with x from the sampled realization and f from
  the kernel transforms; there is no time-stepping error beyond the
  trapezoid x itself.
* ``evolve_raw_linear`` -- the uncompensated linear equation, kept to
  demonstrate that the mean squared norm drifts, which is what motivates the
  compensating term.

The general non-commuting colored equation has no closed functional
derivative and is deliberately not time-stepped.

Amplitudes are carried as order-one mantissas with a running log offset
(per-step renormalization), so cooking weights stay finite in log form even
when exponents reach +-1e3.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, NonCommuting, ZeroNorm
from .hilbert import CommutingSet, commutation_check, validate_hamiltonian
from .kernels import CorrelationKernel, KernelFamily, kernel_double_integral
from .noise import (
    NoiseRealization,
    TimeGrid,
    checkpoint_indices,
    left_cumulative,
    sample_paths,
    sample_white_increments,
    trapezoid_cumulative,
    build_covariance,
)

__all__ = [
    "TrajectoryRecord",
    "EnsembleResult",
    "ProbeResult",
    "evolve_csl_white",
    "evolve_colored_commuting",
    "evolve_raw_linear",
    "functional_derivative_probe",
    "bump_realization",
    "simulate_ensemble",
]

COMMUTATION_TOL = 1.0e-10
CHUNK = 512  # fixed ensemble chunk; never depends on worker count


@dataclass
class TrajectoryRecord:
    """Physical state, log cooking weight, and integrated noise at checkpoints."""

    times: np.ndarray  # (ncp,)
    states: np.ndarray  # (ncp, d), unit rows
    log_weights: np.ndarray  # (ncp,)
    x: np.ndarray | None  # (m, ncp) integrated noise at the checkpoints
    master_seed: int
    index: int

    def weight(self, cp: int = -1) -> float:
        return math.exp(self.log_weights[cp])


def _unitary(h0: np.ndarray | None, dt: float) -> np.ndarray | None:
    """exp(-i H0 dt) through the eigendecomposition (H0 Hermitian, hbar = 1)."""
    if h0 is None:
        return None
    evals, vecs = np.linalg.eigh(h0)
    return (vecs * np.exp(-1j * evals * dt)) @ vecs.conj().T


def _normalize_rows(psi: np.ndarray, offsets: np.ndarray) -> None:
    norms = np.sqrt(np.sum(np.abs(psi) ** 2, axis=1))
    if np.any(norms == 0.0):
        raise ZeroNorm("trajectory mantissa collapsed to zero")
    psi /= norms[:, None]
    offsets += np.log(norms)


def _prepare_psi0(psi0) -> np.ndarray:
    psi0 = np.asarray(psi0, dtype=np.complex128).ravel()
    n = np.linalg.norm(psi0)
    if n == 0.0:
        raise ZeroNorm("initial state has zero norm")
    return psi0 / n


# ---------------------------------------------------------------------------
# chunk kernels (vectorized over trajectories; row i = trajectory i)


def _trotter_white_chunk(aset, psi0, grid, gamma, w_chunk, cp_idx, u_half, comp_gamma):
    """Trotter stepping for a chunk of white realizations.

    comp_gamma = gamma gives the compensated (norm-average-preserving)
    dynamics; comp_gamma = 0 the raw linear equation.
    """
    nc = w_chunk.shape[0]
    dt = grid.dt
    table = aset.table  # (m, d)
    comp = comp_gamma * np.sum(table**2, axis=0) * dt  # (d,)
    psi = np.broadcast_to(psi0, (nc, psi0.size)).copy()
    offsets = np.zeros(nc)
    cp_set = {int(k): j for j, k in enumerate(cp_idx)}
    ncp = len(cp_idx)
    amps = np.empty((nc, ncp, psi0.size), dtype=np.complex128)
    logw = np.empty((nc, ncp))

    def record(node):
        j = cp_set.get(node)
        if j is not None:
            amps[:, j, :] = psi
            logw[:, j] = 2.0 * offsets

    record(0)
    for k in range(grid.steps):
        if u_half is not None:
            psi = psi @ u_half.T
        expo = (w_chunk[:, :, k] @ table) * dt - comp
        peak = expo.max(axis=1)
        psi = psi * np.exp(expo - peak[:, None])
        offsets += peak
        if u_half is not None:
            psi = psi @ u_half.T
        _normalize_rows(psi, offsets)
        record(k + 1)
    return amps, logw


def _exact_commuting_chunk(aset, psi0, x_cp, gamma_f_cp, energies_u):
    """Closed-form amplitudes for a chunk: x_cp is (nc, m, ncp).

    gamma_f_cp carries gamma * f(t) at the checkpoints, so the exponent is
    sum_i a_ia x_i(t) - gamma f(t) sum_i a_ia^2 (diagonal cross structure).
    """
    table = aset.table
    a2 = np.sum(table**2, axis=0)  # (d,)
    mag0 = np.abs(psi0)
    with np.errstate(divide="ignore"):
        log_mag0 = np.where(mag0 > 0.0, np.log(np.where(mag0 > 0.0, mag0, 1.0)), -np.inf)
    phase0 = np.where(mag0 > 0.0, psi0 / np.where(mag0 > 0.0, mag0, 1.0), 0.0)
    nc, _, ncp = x_cp.shape
    d = psi0.size
    amps = np.empty((nc, ncp, d), dtype=np.complex128)
    logw = np.empty((nc, ncp))
    for j in range(ncp):
        expo = log_mag0[None, :] + np.tensordot(x_cp[:, :, j], table, axes=(1, 0))
        expo -= gamma_f_cp[j] * a2[None, :]
        peak = expo.max(axis=1)
        if not np.all(np.isfinite(peak)):
            raise ZeroNorm("all amplitudes vanished in the exact solver")
        v = np.exp(expo - peak[:, None]) * phase0[None, :]
        if energies_u is not None:
            v = v @ energies_u[j].T
        norms = np.sqrt(np.sum(np.abs(v) ** 2, axis=1))
        amps[:, j, :] = v / norms[:, None]
        logw[:, j] = 2.0 * (peak + np.log(norms))
    return amps, logw


def _raw_colored_chunk(aset, psi0, grid, w_chunk, cp_idx, u_half):
    """Uncompensated Trotter stepping for node-kind (colored) realizations.

    The per-step stochastic exponent uses the trapezoid average of adjacent
    node values, so with H0 = 0 the product telescopes to exp(A . x_trap).
    """
    nc = w_chunk.shape[0]
    dt = grid.dt
    table = aset.table
    psi = np.broadcast_to(psi0, (nc, psi0.size)).copy()
    offsets = np.zeros(nc)
    cp_set = {int(k): j for j, k in enumerate(cp_idx)}
    ncp = len(cp_idx)
    amps = np.empty((nc, ncp, psi0.size), dtype=np.complex128)
    logw = np.empty((nc, ncp))

    def record(node):
        j = cp_set.get(node)
        if j is not None:
            amps[:, j, :] = psi
            logw[:, j] = 2.0 * offsets

    record(0)
    for k in range(grid.steps):
        if u_half is not None:
            psi = psi @ u_half.T
        wbar = 0.5 * (w_chunk[:, :, k] + w_chunk[:, :, k + 1])
        expo = (wbar @ table) * dt
        peak = expo.max(axis=1)
        psi = psi * np.exp(expo - peak[:, None])
        offsets += peak
        if u_half is not None:
            psi = psi @ u_half.T
        _normalize_rows(psi, offsets)
        record(k + 1)
    return amps, logw


# ---------------------------------------------------------------------------
# single-trajectory solvers


def _single_record(grid, cp_idx, amps, logw, realization, x_cp):
    return TrajectoryRecord(
        times=grid.nodes()[cp_idx],
        states=amps[0],
        log_weights=logw[0],
        x=x_cp,
        master_seed=realization.master_seed,
        index=realization.index,
    )


def _x_at_checkpoints(realization: NoiseRealization, cp_idx) -> np.ndarray:
    return realization.x[:, cp_idx]


def evolve_csl_white(
    h0,
    aset: CommutingSet,
    psi0,
    grid: TimeGrid,
    gamma: float,
    realization: NoiseRealization,
    checkpoints=None,
    compensator_gamma: float | None = None,
) -> TrajectoryRecord:
    """Stratonovich Trotter propagation of one white-noise trajectory.

    ``compensator_gamma`` defaults to gamma (the compensated equation);
    passing 0 yields the raw linear dynamics on the same code path.
    """
    if realization.kind != "increments":
        raise ConfigError("evolve_csl_white needs a white (increment-kind) realization")
    psi0 = _prepare_psi0(psi0)
    cp_idx = checkpoint_indices(grid, 50) if checkpoints is None else np.asarray(checkpoints)
    u_half = _unitary(validate_hamiltonian(h0, psi0.size), 0.5 * grid.dt) if h0 is not None else None
    comp = gamma if compensator_gamma is None else compensator_gamma
    amps, logw = _trotter_white_chunk(
        aset, psi0, grid, gamma, realization.w[None, :, :], cp_idx, u_half, comp
    )
    return _single_record(grid, cp_idx, amps, logw, realization, _x_at_checkpoints(realization, cp_idx))


def _f_values(kernel: CorrelationKernel, times, t0: float) -> np.ndarray:
    return np.array([kernel.gamma * kernel_double_integral(kernel, float(t), t0) for t in times])


def _checkpoint_unitaries(h0, times, t0):
    evals, vecs = np.linalg.eigh(h0)
    return [
        (vecs * np.exp(-1j * evals * (float(t) - t0))) @ vecs.conj().T for t in times
    ]


def evolve_colored_commuting(
    aset: CommutingSet,
    psi0,
    grid: TimeGrid,
    kernel: CorrelationKernel,
    realization: NoiseRealization,
    h0=None,
    checkpoints=None,
) -> TrajectoryRecord:
    """Exact per-amplitude propagation for the commuting case (any kernel)."""
    psi0 = _prepare_psi0(psi0)
    cp_idx = checkpoint_indices(grid, 50) if checkpoints is None else np.asarray(checkpoints)
    energies_u = None
    if h0 is not None:
        h0 = validate_hamiltonian(h0, psi0.size)
        worst = commutation_check(h0, aset)
        if worst > COMMUTATION_TOL:
            raise NonCommuting(
                f"H0 does not commute with the preferred basis (max dev {worst:.2e})"
            )
        energies_u = _checkpoint_unitaries(h0, grid.nodes()[cp_idx], grid.t0)
    f_cp = _f_values(kernel, grid.nodes()[cp_idx], grid.t0)
    x_cp = _x_at_checkpoints(realization, cp_idx)
    amps, logw = _exact_commuting_chunk(aset, psi0, x_cp[None, :, :], f_cp, energies_u)
    return _single_record(grid, cp_idx, amps, logw, realization, x_cp)


def evolve_raw_linear(
    h0,
    aset: CommutingSet,
    psi0,
    grid: TimeGrid,
    realization: NoiseRealization,
    checkpoints=None,
) -> TrajectoryRecord:
    """Uncompensated linear propagation; the mean squared norm drifts upward."""
    psi0 = _prepare_psi0(psi0)
    cp_idx = checkpoint_indices(grid, 50) if checkpoints is None else np.asarray(checkpoints)
    u_half = _unitary(validate_hamiltonian(h0, psi0.size), 0.5 * grid.dt) if h0 is not None else None
    if realization.kind == "increments":
        amps, logw = _trotter_white_chunk(
            aset, psi0, grid, 0.0, realization.w[None, :, :], cp_idx, u_half, 0.0
        )
    else:
        amps, logw = _raw_colored_chunk(
            aset, psi0, grid, realization.w[None, :, :], cp_idx, u_half
        )
    return _single_record(grid, cp_idx, amps, logw, realization, _x_at_checkpoints(realization, cp_idx))


# ---------------------------------------------------------------------------
# functional-derivative probe


@dataclass(frozen=True)
class ProbeResult:
    """Finite-bump estimate of the functional derivative at one time."""

    estimate: np.ndarray  # (psi_pert - psi)/eps on raw vectors
    reference: np.ndarray  # A_j psi_raw(t)
    expected_factor: float  # 1.0 interior, 0.5 at the white endpoint
    rel_error: float


def bump_realization(
    realization: NoiseRealization, grid: TimeGrid, s_index: int, process: int, eps: float
) -> NoiseRealization:
    """Add a unit-area hat bump of area eps centered at node s_index.

    Node-kind paths get the single-node hat (peak eps/dt); increment-kind
    paths get the per-step average of the same hat, i.e. eps/(2 dt) on the
    two adjacent steps (one step only if s_index is the final node, which is
    how the boundary keeps half the bump's area).
    """
    w = realization.w.copy()
    if realization.kind == "nodes":
        w[process, s_index] += eps / grid.dt
        x = trapezoid_cumulative(w, grid.dt)
    else:
        if s_index >= 1:
            w[process, s_index - 1] += 0.5 * eps / grid.dt
        if s_index <= grid.steps - 1:
            w[process, s_index] += 0.5 * eps / grid.dt
        x = left_cumulative(w, grid.dt)
    return NoiseRealization(realization.kind, w, x, realization.master_seed, realization.index)


def _raw_vector(record: TrajectoryRecord, cp: int) -> np.ndarray:
    return record.states[cp] * math.exp(0.5 * record.log_weights[cp])


def functional_derivative_probe(
    aset: CommutingSet,
    psi0,
    grid: TimeGrid,
    kernel: CorrelationKernel,
    realization: NoiseRealization,
    s_index: int,
    process: int,
    eps: float,
    h0=None,
    eval_index: int | None = None,
) -> ProbeResult:
    """Re-run one trajectory with a bumped noise path and difference the states.

    Commuting case only.  The estimate is compared against A_j psi(t) for an
    interior bump and against (1/2) A_j psi(t) when the bump sits exactly at
    the endpoint of a white path (the delta then straddles the boundary).
    Bumps strictly beyond the evaluation time must produce the zero vector.
    """
    if h0 is not None and commutation_check(np.asarray(h0, complex), aset) > COMMUTATION_TOL:
        raise NonCommuting("probe is only defined for the commuting case")
    eval_index = grid.steps if eval_index is None else int(eval_index)
    cp = np.array([0, eval_index]) if eval_index != 0 else np.array([0])

    def run(rz):
        if rz.kind == "increments" and kernel.family is KernelFamily.WHITE:
            return evolve_csl_white(h0, aset, psi0, grid, kernel.gamma, rz, checkpoints=cp)
        return evolve_colored_commuting(aset, psi0, grid, kernel, rz, h0=h0, checkpoints=cp)

    base = run(realization)
    pert = run(bump_realization(realization, grid, s_index, process, eps))
    raw_base = _raw_vector(base, -1)
    raw_pert = _raw_vector(pert, -1)
    estimate = (raw_pert - raw_base) / eps
    reference = aset.table[process] * raw_base
    factor = 1.0
    if s_index > eval_index:
        factor = 0.0
    elif realization.kind == "increments" and s_index == eval_index:
        factor = 0.5
    expected = factor * reference
    scale = np.linalg.norm(reference)
    rel = float(np.linalg.norm(estimate - expected) / (scale if scale > 0 else 1.0))
    return ProbeResult(estimate, reference, factor, rel)


# ---------------------------------------------------------------------------
# ensembles


@dataclass
class EnsembleResult:
    """Gathered trajectory records in trajectory-index order (packed arrays)."""

    grid: TimeGrid
    checkpoint_idx: np.ndarray
    times: np.ndarray
    amps: np.ndarray  # (n, ncp, d)
    log_weights: np.ndarray  # (n, ncp)
    x: np.ndarray  # (n, m, ncp)
    master_seed: int
    method: str

    @property
    def n(self) -> int:
        return self.amps.shape[0]

    @property
    def dim(self) -> int:
        return self.amps.shape[2]

    def record(self, i: int) -> TrajectoryRecord:
        return TrajectoryRecord(
            self.times, self.amps[i], self.log_weights[i], self.x[i], self.master_seed, i
        )

    def records(self) -> list[TrajectoryRecord]:
        return [self.record(i) for i in range(self.n)]


def simulate_ensemble(
    aset: CommutingSet,
    psi0,
    grid: TimeGrid,
    kernel: CorrelationKernel,
    n: int,
    master_seed: int,
    h0=None,
    method: str = "auto",
    checkpoints=None,
    workers: int = 1,
    start_index: int = 0,
) -> EnsembleResult:
    """Run n independent trajectories and gather them in index order.

    method: "trotter_white" (white kernel, any H0), "exact_commuting" (any
    kernel, commuting or absent H0), or "raw_linear" (uncompensated).
    "auto" picks trotter_white for white kernels and exact_commuting
    otherwise.  Chunk boundaries are fixed, so results are byte-identical
    for any ``workers``.
    """
    if n < 1:
        raise ConfigError(f"ensemble needs n >= 1 trajectories, got {n}")
    psi0 = _prepare_psi0(psi0)
    cp_idx = checkpoint_indices(grid, 50) if checkpoints is None else np.asarray(checkpoints)
    if method == "auto":
        method = "trotter_white" if kernel.family is KernelFamily.WHITE else "exact_commuting"
    is_white = kernel.family is KernelFamily.WHITE
    if method == "trotter_white" and not is_white:
        raise ConfigError("trotter_white requires a white kernel")

    m = aset.num_ops
    d = psi0.size
    ncp = len(cp_idx)
    factor = None if is_white else build_covariance(grid, kernel)

    u_half = None
    energies_u = None
    if h0 is not None:
        h0 = validate_hamiltonian(h0, d)
        if method in ("exact_commuting",):
            if commutation_check(h0, aset) > COMMUTATION_TOL:
                raise NonCommuting("exact_commuting requires [A_i, H0] = 0")
            energies_u = _checkpoint_unitaries(h0, grid.nodes()[cp_idx], grid.t0)
        else:
            u_half = _unitary(h0, 0.5 * grid.dt)
    f_cp = _f_values(kernel, grid.nodes()[cp_idx], grid.t0) if method == "exact_commuting" else None

    amps = np.empty((n, ncp, d), dtype=np.complex128)
    logw = np.empty((n, ncp))
    x_out = np.empty((n, m, ncp))

    def run_chunk(lo: int, hi: int):
        count = hi - lo
        if is_white:
            paths = sample_white_increments(grid, kernel.gamma, m, count, master_seed, start_index + lo)
        else:
            paths = sample_paths(factor, m, count, master_seed, start_index + lo)
        w_stack = np.stack([p.w for p in paths])
        x_stack = np.stack([p.x for p in paths])
        x_cp = x_stack[:, :, cp_idx]
        if method == "trotter_white":
            a, lw = _trotter_white_chunk(
                aset, psi0, grid, kernel.gamma, w_stack, cp_idx, u_half, kernel.gamma
            )
        elif method == "exact_commuting":
            a, lw = _exact_commuting_chunk(aset, psi0, x_cp, f_cp, energies_u)
        elif method == "raw_linear":
            if is_white:
                a, lw = _trotter_white_chunk(
                    aset, psi0, grid, 0.0, w_stack, cp_idx, u_half, 0.0
                )
            else:
                a, lw = _raw_colored_chunk(aset, psi0, grid, w_stack, cp_idx, u_half)
        else:
            raise ConfigError(f"unknown solver method {method!r}")
        amps[lo:hi] = a
        logw[lo:hi] = lw
        x_out[lo:hi] = x_cp

    bounds = [(lo, min(lo + CHUNK, n)) for lo in range(0, n, CHUNK)]
    if workers > 1 and len(bounds) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(lambda b: run_chunk(*b), bounds))
    else:
        for b in bounds:
            run_chunk(*b)

    return EnsembleResult(
        grid, cp_idx, grid.nodes()[cp_idx], amps, logw, x_out, master_seed, method
    )
