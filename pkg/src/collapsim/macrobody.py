"""Macroscopic rigid-body sector: physical parameters and spatial decoherence.

Works in CGS-consistent units (cm, s).  The space-time correlation kernel
factorizes into a Gaussian space part g and a normalized Gaussian time part
h; the localization accuracy is 1/sqrt(alpha), the per-constituent rate
lambda, and the noise strength is tied to them by

    gamma = lambda (4 pi / alpha)^(3/2).

For a rigid body (constituents pinned at equilibrium offsets) the smeared
number density acts only on the center of mass, and the coherence between
center-of-mass positions Q' and Q'' decays at the closed-form rate

    Gamma(Q', Q'', t) = gamma(t) (alpha/4pi)^(3/2) *
        sum_ij [ e^{-(alpha/4)(q_i - q_j)^2} - e^{-(alpha/4)(dQ + q_i - q_j)^2} ]

obtained by Gaussian integration of (F'^2 + F''^2)/2 - F'F''; a direct 3-D
quadrature of that integrand is shipped alongside as the cross-check.  The
prefactor gamma(t) (alpha/4pi)^(3/2) is evaluated as lambda * gamma(t)/gamma
so the algebraic cancellation gamma (alpha/4pi)^(3/2) = lambda holds exactly
in floating point; for well-separated constituents the bracket counts pairs,
which is the linear-in-N amplification of the damping rate.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, InvalidInterval

__all__ = [
    "SPEED_OF_LIGHT_CM_S",
    "MacroParams",
    "MacroBody",
    "kernel_factorized",
    "gamma_of_t",
    "smeared_density",
    "macro_damping_rate",
    "macro_damping_rate_quadrature",
    "com_offdiag_decay",
]

SPEED_OF_LIGHT_CM_S = 2.99792458e10

# Standard choices: localization accuracy 1e-5 cm and rate 1e-16 / s.
DEFAULT_ALPHA = 1.0e10  # cm^-2
DEFAULT_LAMBDA = 1.0e-16  # s^-1


@dataclass(frozen=True)
class MacroParams:
    """Physical parameters; gamma and beta are derived unless overridden."""

    alpha: float = DEFAULT_ALPHA
    lam: float = DEFAULT_LAMBDA
    beta: float | None = None  # s^-2; defaults to c^2 alpha
    t0: float = 0.0

    def __post_init__(self):
        if self.alpha <= 0 or self.lam <= 0:
            raise ConfigError("alpha and lambda must be positive")
        if self.beta is None:
            object.__setattr__(self, "beta", SPEED_OF_LIGHT_CM_S**2 * self.alpha)
        if self.beta <= 0:
            raise ConfigError("beta must be positive")

    @property
    def gamma(self) -> float:
        """Noise strength, recomputed from (lam, alpha); never stored."""
        return self.lam * (4.0 * math.pi / self.alpha) ** 1.5

    @property
    def reduction_rate_coeff(self) -> float:
        """gamma (alpha/4pi)^(3/2), which cancels algebraically to lambda."""
        return self.lam


@dataclass(frozen=True)
class MacroBody:
    """Rigid body given by its constituent equilibrium offsets (N, 3) in cm."""

    offsets: np.ndarray = field(repr=False)

    def __post_init__(self):
        off = np.atleast_2d(np.asarray(self.offsets, dtype=float))
        if off.ndim != 2 or off.shape[1] != 3 or off.shape[0] < 1:
            raise ConfigError("body offsets must be an (N, 3) array")
        if not np.all(np.isfinite(off)):
            raise ConfigError("body offsets must be finite")
        object.__setattr__(self, "offsets", off)

    @property
    def num_constituents(self) -> int:
        return self.offsets.shape[0]

    @classmethod
    def lattice(cls, n: int, spacing: float, axis: int = 0) -> "MacroBody":
        """n constituents along one axis, ``spacing`` cm apart, centered."""
        off = np.zeros((n, 3))
        off[:, axis] = spacing * (np.arange(n) - 0.5 * (n - 1))
        return cls(off)

    @classmethod
    def from_csv(cls, path) -> "MacroBody":
        """Load (i, qx, qy, qz) rows; the index column is ignored."""
        rows = []
        with open(path, newline="") as fh:
            for row in csv.reader(fh):
                if not row:
                    continue
                try:
                    rows.append([float(row[1]), float(row[2]), float(row[3])])
                except (ValueError, IndexError):
                    if rows:
                        raise ConfigError(f"bad body row: {row!r}")
        if not rows:
            raise ConfigError(f"body file {path} holds no constituents")
        return cls(np.asarray(rows))


def kernel_factorized(params: MacroParams):
    """Space and time factors of the correlation kernel, as evaluators.

    g(r) = gamma (alpha/4pi)^(3/2) exp(-alpha r^2 / 4)  carries the strength;
    h(u) = (beta/4pi)^(1/2) exp(-beta u^2 / 4)          integrates to one.
    """
    alpha, beta, gamma = params.alpha, params.beta, params.gamma
    g_amp = gamma * (alpha / (4.0 * math.pi)) ** 1.5
    h_amp = math.sqrt(beta / (4.0 * math.pi))

    def g(r):
        r = np.asarray(r, dtype=float)
        return g_amp * np.exp(-(alpha / 4.0) * r**2)

    def h(u):
        u = np.asarray(u, dtype=float)
        return h_amp * np.exp(-(beta / 4.0) * u**2)

    return g, h


def _gamma_ratio(params: MacroParams, t: float) -> float:
    """gamma(t)/gamma = erf(sqrt(beta) (t - t0) / 2), monotone from 0 to 1."""
    if t < params.t0:
        raise InvalidInterval(f"need t >= t0, got t={t} < t0={params.t0}")
    return math.erf(0.5 * math.sqrt(params.beta) * (t - params.t0))


def gamma_of_t(params: MacroParams, t: float) -> float:
    """Effective strength gamma(t) = 2 gamma int_{t0}^t h(t - s) ds."""
    return params.gamma * _gamma_ratio(params, t)


def smeared_density(body: MacroBody, q: np.ndarray, x: np.ndarray, params: MacroParams):
    """F(Q - x): Gaussian-smeared constituent density seen from point x.

    Accepts x of shape (3,) or (..., 3); the sum runs over constituents at
    Q + offset_i.
    """
    q = np.asarray(q, dtype=float)
    x = np.asarray(x, dtype=float)
    centers = q[None, :] + body.offsets  # (N, 3)
    diff = x[..., None, :] - centers  # (..., N, 3)
    expo = -(params.alpha / 2.0) * np.sum(diff**2, axis=-1)
    amp = (params.alpha / (2.0 * math.pi)) ** 1.5
    out = amp * np.sum(np.exp(expo), axis=-1)
    return float(out) if out.ndim == 0 else out


def _pair_bracket(body: MacroBody, dq: np.ndarray, alpha: float) -> float:
    """sum_ij [e^{-(alpha/4)(qi-qj)^2} - e^{-(alpha/4)(dq+qi-qj)^2}]."""
    off = body.offsets
    rel = off[:, None, :] - off[None, :, :]  # (N, N, 3)
    same = np.exp(-(alpha / 4.0) * np.sum(rel**2, axis=-1))
    shifted = np.exp(-(alpha / 4.0) * np.sum((rel + dq) ** 2, axis=-1))
    return float(np.sum(same) - np.sum(shifted))


def macro_damping_rate(
    body: MacroBody, q1: np.ndarray, q2: np.ndarray, t: float, params: MacroParams
) -> float:
    """Closed-form coherence decay rate Gamma(Q', Q'', t), in 1/s.

    Vanishes identically at Q' = Q'' and saturates at
    lambda * gamma(t)/gamma * N for well-separated constituents and large
    separation (the linear-in-N amplification).
    """
    dq = np.asarray(q1, dtype=float) - np.asarray(q2, dtype=float)
    ratio = _gamma_ratio(params, t)
    if np.all(dq == 0.0):
        return 0.0
    return params.reduction_rate_coeff * ratio * _pair_bracket(body, dq, params.alpha)


def macro_damping_rate_quadrature(
    body: MacroBody,
    q1: np.ndarray,
    q2: np.ndarray,
    t: float,
    params: MacroParams,
    nodes_per_axis: int = 96,
    padding_sigmas: float = 8.5,
) -> float:
    """Direct 3-D Gauss-Legendre quadrature of gamma(t) * int (F' - F'')^2 / 2.

    Independent of the closed form: evaluates the smeared densities on a
    tensor grid covering every Gaussian center plus ``padding_sigmas`` widths
    of margin.  Practical for N <= 3 at default resolution.
    """
    q1 = np.asarray(q1, dtype=float)
    q2 = np.asarray(q2, dtype=float)
    sigma = 1.0 / math.sqrt(params.alpha)
    centers = np.vstack([q1[None, :] + body.offsets, q2[None, :] + body.offsets])
    lo = centers.min(axis=0) - padding_sigmas * sigma
    hi = centers.max(axis=0) + padding_sigmas * sigma
    xg, wg = np.polynomial.legendre.leggauss(nodes_per_axis)
    axes = [(0.5 * (h - l) * xg + 0.5 * (h + l), 0.5 * (h - l) * wg) for l, h in zip(lo, hi)]
    pts = np.stack(
        np.meshgrid(axes[0][0], axes[1][0], axes[2][0], indexing="ij"), axis=-1
    )  # (n, n, n, 3)
    wprod = (
        axes[0][1][:, None, None] * axes[1][1][None, :, None] * axes[2][1][None, None, :]
    )
    f1 = smeared_density(body, q1, pts, params)
    f2 = smeared_density(body, q2, pts, params)
    integral = float(np.sum(wprod * 0.5 * (f1 - f2) ** 2))
    return gamma_of_t(params, t) * integral


def _gamma_ratio_time_integral(params: MacroParams, t: float) -> float:
    """int_{t0}^{t} gamma(u)/gamma du, closed form via the erf antiderivative."""
    if t < params.t0:
        raise InvalidInterval(f"need t >= t0, got t={t} < t0={params.t0}")
    k = 0.5 * math.sqrt(params.beta)
    span = t - params.t0
    z = k * span
    # int_0^T erf(k u) du = T erf(kT) + (e^{-k^2 T^2} - 1)/(k sqrt(pi))
    return span * math.erf(z) + (math.exp(-(z**2)) - 1.0) / (k * math.sqrt(math.pi))


def com_offdiag_decay(
    body: MacroBody, q1: np.ndarray, q2: np.ndarray, times, params: MacroParams
) -> np.ndarray:
    """Center-of-mass coherence <Q'|rho(t)|Q''> relative to its initial value.

    exp(-int_{t0}^{t} Gamma(Q', Q'', u) du); only gamma(u) depends on time,
    so the geometric pair bracket factors out of the integral.
    """
    dq = np.asarray(q1, dtype=float) - np.asarray(q2, dtype=float)
    bracket = 0.0 if np.all(dq == 0.0) else _pair_bracket(body, dq, params.alpha)
    coeff = params.reduction_rate_coeff * bracket
    out = np.array(
        [math.exp(-coeff * _gamma_ratio_time_integral(params, float(t))) for t in np.atleast_1d(times)]
    )
    return out
