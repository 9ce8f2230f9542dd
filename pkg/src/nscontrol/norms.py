"""Instantaneous and space-time norms on the periodic box.

Vector and tensor fields are measured through their pointwise Euclidean
magnitude. Physical-space quadratures are plain sums times the cell volume
(the trapezoid rule is exactly the midpoint rule on a uniform periodic
grid); ``oversample`` evaluates the band-limited field on a finer grid by
zero-padding first, which matters for ``p != 2`` when the field is rough on
the grid scale.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
import scipy.fft as sfft
from scipy import integrate

from .grid import Grid, SymTensorField, sym_pairs


def _coeff_stack(v) -> tuple[Grid, np.ndarray]:
    c = np.asarray(v.coeffs)
    if c.ndim == v.grid.n:
        c = c[None]
    return v.grid, c


def _pad(grid: Grid, coeffs: np.ndarray, factor: int) -> np.ndarray:
    """Zero-pad rfft coefficients (leading component axis) to a ``factor * N`` grid."""
    N, M = grid.N, factor * grid.N
    n = grid.n
    out_shape = coeffs.shape[:1] + (M,) * (n - 1) + (M // 2 + 1,)
    out = np.zeros(out_shape, dtype=complex)
    lo = tuple(np.r_[0:N // 2, M - N // 2:M] for _ in range(n - 1))
    src = tuple(np.r_[0:N // 2, N // 2:N] for _ in range(n - 1))
    if n == 2:
        out[:, lo[0], :N // 2 + 1] = coeffs[:, src[0], :]
    else:
        out[:, lo[0][:, None], lo[1][None, :], :N // 2 + 1] = coeffs[:, src[0][:, None], src[1][None, :], :]
    return out * factor ** n


def physical_magnitude(v, oversample: int = 1) -> tuple[np.ndarray, float]:
    """Pointwise Euclidean magnitude on the (possibly refined) grid, and the cell volume."""
    grid, c = _coeff_stack(v)
    if oversample == 1:
        vals = grid.ifft(c)
        dv = grid.cell_volume
    else:
        M = oversample * grid.N
        vals = sfft.irfftn(_pad(grid, c, oversample), s=(M,) * grid.n, axes=tuple(range(-grid.n, 0)))
        dv = (grid.L / M) ** grid.n
    if vals.shape[0] == 1:
        return np.abs(vals[0]), dv
    if isinstance(v, SymTensorField):
        # upper-triangle storage: off-diagonal entries count twice in the Frobenius norm
        w = np.array([1.0 if k == l else 2.0 for k, l in sym_pairs(grid.n)])
        return np.sqrt(np.einsum("i,i...->...", w, vals ** 2)), dv
    return np.sqrt(np.sum(vals ** 2, axis=0)), dv


def lp_of_values(mag: np.ndarray, dv: float, p: float) -> float:
    if p < 1:
        raise ValueError(f"p must be >= 1, got {p}")
    if math.isinf(p):
        return float(mag.max(initial=0.0))
    return float((np.sum(mag ** p) * dv) ** (1.0 / p))


def lp_norm(v, p: float, oversample: int = 1) -> float:
    """``||v||_p`` of a scalar or vector field on the box."""
    if p < 1:
        raise ValueError(f"p must be >= 1, got {p}")
    mag, dv = physical_magnitude(v, oversample)
    return lp_of_values(mag, dv, p)


def spectral_l2(v) -> float:
    grid, c = _coeff_stack(v)
    return float(math.sqrt(sum(grid.inner(ci, ci) for ci in c)))


class HMinus1(NamedTuple):
    norm: float
    heat_energy_integral: float  # predicted int_0^inf ||e^{t Lap} v||_2^2 dt


def hminus1_norm(v, mean_tol: float = 1e-10) -> HMinus1:
    grid, c = _coeff_stack(v)
    zero = (slice(None),) + (0,) * grid.n
    l2 = spectral_l2(v)
    mean_mass = float(np.sqrt(np.sum(np.abs(c[zero]) ** 2))) * math.sqrt(grid.volume) / grid.N ** grid.n
    if mean_mass > mean_tol * max(l2, 1e-300):
        raise ValueError(f"field has nonzero mean (mean L2 mass {mean_mass:.3e}, total {l2:.3e})")
    w = (np.abs(c) ** 2 * grid.inv_k2 * grid.parseval_weight).sum()
    sq = float(w) * grid.volume / grid.N ** (2 * grid.n)
    return HMinus1(math.sqrt(sq), 0.5 * sq)


def heat_energy_integral(v, epsrel: float = 1e-10) -> float:
    """``int_0^inf ||e^{t Lap} v||_2^2 dt`` by adaptive time quadrature."""
    grid, c = _coeff_stack(v)
    w = (np.abs(c) ** 2).sum(axis=0) * grid.parseval_weight
    w = np.broadcast_to(w, grid.spectral_shape)
    keep = w > 0
    weights = w[keep] * grid.volume / grid.N ** (2 * grid.n)
    lam = np.broadcast_to(grid.k2, grid.spectral_shape)[keep]
    if np.any(lam == 0):
        raise ValueError("field has a nonzero mean; the time integral diverges")

    def energy(t):
        return float(np.dot(weights, np.exp(-2 * lam * t)))

    kmin2 = float(lam.min())
    # exponentially spaced breakpoints keep each panel well resolved
    edges = [0.0] + list(np.geomspace(1e-3, 60.0 / kmin2, 40))
    total = sum(integrate.quad(energy, a, b, epsabs=0, epsrel=epsrel, limit=200)[0]
                for a, b in zip(edges[:-1], edges[1:]))
    return total + integrate.quad(energy, edges[-1], np.inf, epsabs=0, epsrel=epsrel)[0]


# --- trajectory norms ---------------------------------------------------

TRAJECTORY_KINDS = ("X_r", "Y_r", "Xbar_p", "Ybar_p")


def weight_exponent(kind: str, index: float, n: int) -> float:
    if kind == "X_r":
        return 0.5 - n / (2 * index)
    if kind == "Y_r":
        return 1.0 - n / (2 * index)
    if kind == "Xbar_p":
        return 0.5 + 0.5 * n * (0.5 - 1 / index)
    if kind == "Ybar_p":
        return 1.0 + 0.5 * n * (0.5 - 1 / index)
    raise ValueError(f"unknown trajectory norm kind {kind!r}")


@dataclass(frozen=True)
class TrajectoryNorm:
    kind: str
    index: float
    value: float
    argmax_t: float

    def csv_row(self) -> list:
        return [self.kind, self.index, self.value, self.argmax_t]


def trajectory_norm(traj, kind: str, index: float, oversample: int = 1) -> TrajectoryNorm:
    """``sup_t t^e ||u(t)||_index`` over the snapshots with ``t > 0``."""
    snaps = [(t, v) for t, v in getattr(traj, "snapshots", []) if t > 0]
    if not snaps:
        raise ValueError("trajectory has no snapshots with t > 0")
    n = snaps[0][1].grid.n
    e = weight_exponent(kind, index, n)
    best, arg = -1.0, float("nan")
    for t, v in snaps:
        w = t ** e * lp_norm(v, index, oversample)
        if w > best:
            best, arg = w, t
    return TrajectoryNorm(kind, float(index), float(best), float(arg))


def spacetime_lebesgue_norm(obj, exponent: float, oversample: int = 1) -> float:
    """Space-time ``L^q`` norm of a profile (``lebesgue_norm`` method) or of a trajectory.

    Trajectories use the trapezoid rule in time over their snapshots.
    """
    if exponent < 1:
        raise ValueError(f"exponent must be >= 1, got {exponent}")
    if hasattr(obj, "lebesgue_norm"):
        return float(obj.lebesgue_norm(exponent))
    snaps = list(obj.snapshots)
    if len(snaps) < 2:
        raise ValueError("need at least two snapshots")
    ts = np.array([t for t, _ in snaps])
    if math.isinf(exponent):
        return max(lp_norm(v, math.inf, oversample) for _, v in snaps)
    vals = np.array([lp_norm(v, exponent, oversample) ** exponent for _, v in snaps])
    integral = float(np.sum(0.5 * (vals[1:] + vals[:-1]) * np.diff(ts)))
    return integral ** (1.0 / exponent)
