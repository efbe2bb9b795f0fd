"""Finite-dimensional states, preferred-basis operators, and density matrices.

Everything lives in the joint eigenbasis of the preferred-basis operators:
the operators are given directly as an eigenvalue table a[i, alpha] (operator
i, basis state alpha), which makes them simultaneously diagonal by
construction.  hbar = 1 throughout.

Raw (unnormalized) vectors carry a separate log-magnitude offset so that
cooking weights stay representable even when amplitudes would under- or
overflow: the stored amplitudes are a mantissa of order one and the true
vector is exp(log_offset) times it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, EmptyEigenmanifold, ZeroNorm

__all__ = [
    "StateVector",
    "CommutingSet",
    "OutcomeGroup",
    "DensityMatrix",
    "normalize",
    "project",
    "commutation_check",
    "validate_hamiltonian",
    "born_weights",
]

HERMITICITY_TOL = 1.0e-12
TRACE_TOL = 1.0e-10
EIGENVALUE_FLOOR = -1.0e-9


@dataclass
class StateVector:
    """Complex amplitudes in the shared basis, times exp(log_offset)."""

    amplitudes: np.ndarray
    log_offset: float = 0.0

    def __post_init__(self):
        self.amplitudes = np.asarray(self.amplitudes, dtype=np.complex128)
        if self.amplitudes.ndim != 1:
            raise ConfigError("state amplitudes must be a 1-D complex array")

    @property
    def dim(self) -> int:
        return self.amplitudes.size

    def norm_sq(self) -> float:
        """Squared norm of the mantissa (excludes the log offset)."""
        return float(np.sum(np.abs(self.amplitudes) ** 2))

    def log_norm_sq(self) -> float:
        """log ||psi||^2 including the offset."""
        ns = self.norm_sq()
        if ns == 0.0:
            raise ZeroNorm("state vector has exactly zero mantissa norm")
        return math.log(ns) + 2.0 * self.log_offset

    def is_normalized(self, tol: float = 1.0e-12) -> bool:
        return self.log_offset == 0.0 and abs(self.norm_sq() - 1.0) <= tol


@dataclass(frozen=True)
class NormalizeResult:
    state: StateVector
    weight: float  # exp(log_weight); may under/overflow to 0/inf in float
    log_weight: float


def normalize(v: StateVector) -> NormalizeResult:
    """Unit vector plus the squared norm (the cooking weight), offset-aware."""
    ns = v.norm_sq()
    if ns == 0.0:
        raise ZeroNorm("cannot normalize a zero vector")
    log_weight = math.log(ns) + 2.0 * v.log_offset
    unit = StateVector(v.amplitudes / math.sqrt(ns))
    try:
        weight = math.exp(log_weight)
    except OverflowError:
        weight = math.inf
    return NormalizeResult(unit, weight, log_weight)


@dataclass(frozen=True)
class OutcomeGroup:
    """One joint eigenmanifold: shared eigenvalue vector and its basis states."""

    key: tuple
    indices: np.ndarray
    label: str


@dataclass(frozen=True, eq=False)
class CommutingSet:
    """Preferred-basis operators as an eigenvalue table a[i, alpha].

    Outcome classification groups basis states by the full eigenvalue vector
    (exact equality on the input values), so degenerate eigenmanifolds may be
    multi-dimensional.
    """

    table: np.ndarray
    basis_labels: tuple = ()

    def __post_init__(self):
        table = np.atleast_2d(np.asarray(self.table, dtype=float))
        if table.ndim != 2 or table.size == 0:
            raise ConfigError("eigenvalue table must be a (num_ops, dim) array")
        if not np.all(np.isfinite(table)):
            raise ConfigError("eigenvalue table must be finite")
        object.__setattr__(self, "table", table)
        if not self.basis_labels:
            object.__setattr__(
                self, "basis_labels", tuple(str(i) for i in range(table.shape[1]))
            )
        elif len(self.basis_labels) != table.shape[1]:
            raise ConfigError("basis_labels length must match dimension")

    @property
    def num_ops(self) -> int:
        return self.table.shape[0]

    @property
    def dim(self) -> int:
        return self.table.shape[1]

    def operator_matrix(self, i: int) -> np.ndarray:
        return np.diag(self.table[i].astype(np.complex128))

    def pairwise_gap_sq(self) -> np.ndarray:
        """W[a, b] = sum_i (a_ia - a_ib)^2, the double-commutator weight matrix."""
        diff = self.table[:, :, None] - self.table[:, None, :]
        return np.sum(diff**2, axis=0)

    def outcome_groups(self) -> list[OutcomeGroup]:
        """Joint eigenmanifolds in order of first appearance over the basis."""
        groups: dict[tuple, list[int]] = {}
        for alpha in range(self.dim):
            key = tuple(float(v) for v in self.table[:, alpha])
            groups.setdefault(key, []).append(alpha)
        out = []
        for key, idx in groups.items():
            label = "(" + ", ".join(repr(v) for v in key) + ")"
            out.append(OutcomeGroup(key, np.asarray(idx, dtype=int), label))
        return out

    def group_of_basis(self) -> np.ndarray:
        """For each basis state, the index of its outcome group."""
        out = np.empty(self.dim, dtype=int)
        for g, grp in enumerate(self.outcome_groups()):
            out[grp.indices] = g
        return out


def project(v: StateVector, aset: CommutingSet, op_index: int, eigenvalue: float) -> StateVector:
    """Zero every amplitude outside the selected eigenmanifold (unnormalized)."""
    if not 0 <= op_index < aset.num_ops:
        raise ConfigError(f"operator index {op_index} out of range")
    mask = aset.table[op_index] == eigenvalue
    if not mask.any():
        raise EmptyEigenmanifold(
            f"no basis state with eigenvalue {eigenvalue} for operator {op_index}"
        )
    return StateVector(np.where(mask, v.amplitudes, 0.0), v.log_offset)


def validate_hamiltonian(h0: np.ndarray, dim: int | None = None) -> np.ndarray:
    h0 = np.asarray(h0, dtype=np.complex128)
    if h0.ndim != 2 or h0.shape[0] != h0.shape[1]:
        raise ConfigError("Hamiltonian must be a square matrix")
    if dim is not None and h0.shape[0] != dim:
        raise ConfigError(f"Hamiltonian dimension {h0.shape[0]} != system dimension {dim}")
    if np.max(np.abs(h0 - h0.conj().T)) >= HERMITICITY_TOL:
        raise ConfigError("Hamiltonian is not Hermitian within 1e-12")
    return h0


def commutation_check(h0: np.ndarray, aset: CommutingSet) -> float:
    """max_i of the entrywise norm of [A_i, H0]; diagonal A makes this cheap."""
    h0 = np.asarray(h0, dtype=np.complex128)
    worst = 0.0
    for i in range(aset.num_ops):
        a = aset.table[i]
        comm = (a[:, None] - a[None, :]) * h0
        worst = max(worst, float(np.max(np.abs(comm))))
    return worst


def born_weights(psi0: np.ndarray, aset: CommutingSet) -> np.ndarray:
    """||P_g psi0||^2 per outcome group, for a normalized psi0."""
    p = np.abs(np.asarray(psi0, dtype=np.complex128)) ** 2
    return np.array([float(np.sum(p[g.indices])) for g in aset.outcome_groups()])


@dataclass
class DensityMatrix:
    """Statistical operator with the standard physicality checks."""

    rho: np.ndarray

    def __post_init__(self):
        self.rho = np.asarray(self.rho, dtype=np.complex128)
        if self.rho.ndim != 2 or self.rho.shape[0] != self.rho.shape[1]:
            raise ConfigError("density matrix must be square")

    @property
    def dim(self) -> int:
        return self.rho.shape[0]

    def validate(
        self,
        hermiticity_tol: float = HERMITICITY_TOL,
        trace_tol: float = TRACE_TOL,
        eigenvalue_floor: float = EIGENVALUE_FLOOR,
    ) -> None:
        """Raise ConfigError unless Hermitian, unit trace, and nearly PSD."""
        h_err = float(np.max(np.abs(self.rho - self.rho.conj().T)))
        if h_err > hermiticity_tol:
            raise ConfigError(f"density matrix not Hermitian: max dev {h_err:.2e}")
        tr_err = abs(float(np.trace(self.rho).real) - 1.0)
        if tr_err > trace_tol or abs(float(np.trace(self.rho).imag)) > trace_tol:
            raise ConfigError(f"density matrix trace off unity by {tr_err:.2e}")
        eigs = np.linalg.eigvalsh(0.5 * (self.rho + self.rho.conj().T))
        if float(eigs.min()) < eigenvalue_floor:
            raise ConfigError(f"density matrix eigenvalue {eigs.min():.2e} below floor")


def pure_density(psi: np.ndarray) -> np.ndarray:
    psi = np.asarray(psi, dtype=np.complex128)
    return np.outer(psi, psi.conj())
