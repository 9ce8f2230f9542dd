"""The separable control profile ``chi(x, t) = R^n R' phi(R(x - c)) psi(R' t)``.

``phi`` lives on the centred unit cube and ``psi`` on ``[0, 1]``; both have unit
integral, so ``chi`` has unit space-time integral for every ``(R, R')``.

``indicator``     ``phi = 1`` on the cube, ``psi = 1`` on ``[0, 1]``.
``smooth_bump``   ``phi = prod_i (1 + cos 2 pi y_i)``, ``psi = 1 - cos 2 pi tau``.

Spatial coefficients are lattice samples of the exact transform of
``phi(R .)`` (Nyquist modes zeroed). Time dependence is handled exactly: the
exponentially weighted integrals of ``psi`` needed by the Duhamel formula have
closed forms, returned by :meth:`ChiProfile.heat_weights`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .grid import Grid, SymTensorField, VectorField, sym_pairs
from .operators import project_coeffs

SHAPES = ("indicator", "smooth_bump")


def _sinc(x):
    return np.sinc(x / (2 * math.pi))


def _phi1_hat(shape: str, k):
    """Transform of the 1D centred profile on ``[-1/2, 1/2]``."""
    if shape == "indicator":
        return _sinc(k)
    return _sinc(k) + 0.5 * (_sinc(k - 2 * math.pi) + _sinc(k + 2 * math.pi))


def _phi1(shape: str, y):
    y = np.asarray(y, dtype=float)
    inside = (y >= -0.5) & (y < 0.5)
    if shape == "indicator":
        return inside.astype(float)
    return np.where(inside, 1.0 + np.cos(2 * math.pi * y), 0.0)


@dataclass(frozen=True)
class ChiProfile:
    n: int
    R: float
    Rprime: float
    shape: str = "smooth_bump"
    time_shape: str | None = None
    center: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.shape not in SHAPES or self.temporal_shape not in SHAPES:
            raise ValueError(f"shape must be one of {SHAPES}")
        if not (self.R > 0 and self.Rprime > 0):
            raise ValueError("R and R' must be positive")
        if self.center is not None and len(self.center) != self.n:
            raise ValueError("center must have n components")

    @property
    def temporal_shape(self) -> str:
        return self.shape if self.time_shape is None else self.time_shape

    @property
    def t_end(self) -> float:
        return 1.0 / self.Rprime

    def check_fits(self, grid: Grid, T: float) -> None:
        """Support of ``phi(R .)`` inside the box and of ``psi(R' .)`` inside ``[0, T]``."""
        c = np.zeros(self.n) if self.center is None else np.asarray(self.center)
        if np.any(np.abs(c) + 0.5 / self.R >= grid.L / 2):
            raise ValueError("spatial support of chi leaves the box")
        if self.t_end > T:
            raise ValueError(f"chi is active until {self.t_end}, beyond the horizon {T}")

    # --- space ------------------------------------------------------------
    def spatial_coeffs(self, grid: Grid) -> np.ndarray:
        """Coefficients of ``R^n phi(R(x - c))``; the ``k = 0`` value times the cell volume is 1."""
        out = np.ones(grid.spectral_shape)
        for k in grid.wavevector:
            out = out * _phi1_hat(self.shape, k / self.R)
        out = out.astype(complex)
        if self.center is not None:
            out = out * np.exp(-1j * sum(k * c for k, c in zip(grid.wavevector, self.center)))
        out[grid.nyquist_mask] = 0.0
        return out / grid.cell_volume

    def phi(self, y: np.ndarray) -> np.ndarray:
        """Reference profile at points ``y`` of shape ``(n, ...)``."""
        out = 1.0
        for yi in y:
            out = out * _phi1(self.shape, yi)
        return out

    def psi(self, tau) -> np.ndarray:
        tau = np.asarray(tau, dtype=float)
        inside = (tau >= 0) & (tau <= 1)
        if self.temporal_shape == "indicator":
            return inside.astype(float)
        return np.where(inside, 1.0 - np.cos(2 * math.pi * tau), 0.0)

    def time_factor(self, t) -> np.ndarray:
        return self.Rprime * self.psi(self.Rprime * np.asarray(t, dtype=float))

    def time_integral(self, t: float) -> float:
        """``int_0^t R' psi(R' s) ds``."""
        tau = min(max(self.Rprime * t, 0.0), 1.0)
        if self.temporal_shape == "indicator":
            return tau
        return tau - math.sin(2 * math.pi * tau) / (2 * math.pi)

    def heat_weights(self, lam: np.ndarray, s0: float, s1: float, t_end: float) -> np.ndarray:
        """``int_{s0}^{s1} exp(-lam (t_end - s)) R' psi(R' s) ds`` for ``s1 <= t_end``."""
        lam = np.asarray(lam, dtype=float)
        a, b = max(s0, 0.0), min(s1, self.t_end)
        if b <= a:
            return np.zeros_like(lam)
        width = b - a
        decay = np.exp(-lam * (t_end - b))
        flat = width * _expm1_ratio(-lam * width)
        if self.temporal_shape == "indicator":
            return self.Rprime * decay * flat
        w = 2 * math.pi * self.Rprime
        z = lam + 1j * w
        osc = (np.exp(1j * w * b) * width * _expm1_ratio(-z * width)).real
        return self.Rprime * decay * (flat - osc)

    # --- norms ------------------------------------------------------------
    def reference_lp(self, q: float, samples: int = 4096) -> tuple[float, float]:
        """``(||phi||_q, ||psi||_q)`` by midpoint sums on the reference supports."""
        y = (np.arange(samples) + 0.5) / samples
        if math.isinf(q):
            p1 = float(np.max(_phi1(self.shape, y - 0.5)))
            return p1 ** self.n, float(np.max(self.psi(y)))
        p1 = float(np.mean(_phi1(self.shape, y - 0.5) ** q)) ** (1 / q)
        return p1 ** self.n, float(np.mean(self.psi(y) ** q)) ** (1 / q)

    def lebesgue_norm(self, q: float, samples: int = 4096) -> float:
        """Space-time ``L^q`` norm of ``chi`` on ``R^n x R^+``."""
        if q < 1:
            raise ValueError("exponent must be >= 1")
        p, s = self.reference_lp(q, samples)
        scale = (self.R ** self.n * self.Rprime) ** (1.0 if math.isinf(q) else 1 - 1 / q)
        return scale * p * s

    def y_norm(self, r: float, samples: int = 4096) -> float:
        """``sup_t t^{1 - n/(2r)} ||chi(t)||_r``."""
        p, _ = self.reference_lp(r, samples)
        e = 1 - self.n / (2 * r)
        tau = np.linspace(0.0, 1.0, 20 * samples + 1)
        sup = float(np.max(tau ** e * self.psi(tau)))
        return self.R ** (self.n * (1 - 1 / r)) * self.Rprime ** (self.n / (2 * r)) * p * sup


def _expm1_ratio(z):
    """``(1 - exp(z)) / (-z)`` i.e. ``expm1(z)/z`` with the removable limit 1 at 0."""
    z = np.asarray(z)
    small = np.abs(z) < 1e-5
    zs = np.where(small, 1.0, z)
    return np.where(small, 1 + z / 2 + z * z / 6, np.expm1(zs) / zs)


@dataclass(frozen=True)
class Forcing:
    """``f_kl(x, t) = coeffs[k, l] chi(x, t)`` for a constant symmetric matrix."""

    chi: ChiProfile
    coeffs: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=float)
        if c.shape != (self.chi.n, self.chi.n) or not np.allclose(c, c.T, rtol=0, atol=0):
            raise ValueError("forcing coefficients must be a symmetric n x n matrix")
        object.__setattr__(self, "coeffs", c)

    def tensor(self, grid: Grid, t: float) -> SymTensorField:
        prof = self.chi.spatial_coeffs(grid) * float(self.chi.time_factor(t))
        return SymTensorField(grid, np.stack([self.coeffs[k, l] * prof for k, l in sym_pairs(grid.n)]))

    def velocity_profile(self, grid: Grid) -> np.ndarray:
        """Coefficients of ``P div(coeffs * phi_R)``; multiply by time weights for the forcing effect."""
        phi = self.chi.spatial_coeffs(grid)
        k = grid.wavevector
        div = np.stack([sum(1j * k[l] * self.coeffs[j, l] for l in range(grid.n)) * phi
                        for j in range(grid.n)])
        return project_coeffs(grid, np.broadcast_to(div, (grid.n,) + grid.spectral_shape))

    def integral(self, t: float) -> np.ndarray:
        """``int_0^t int f dx ds``."""
        return self.coeffs * self.chi.time_integral(t)


def forcing_effect(forcing: Forcing | None, grid: Grid, s0: float, s1: float, t_end: float,
                   profile: np.ndarray | None = None) -> VectorField:
    """``int_{s0}^{s1} exp((t_end - s) Laplacian) P div f(s) ds``, exact in time."""
    if forcing is None:
        return VectorField.zeros(grid)
    prof = forcing.velocity_profile(grid) if profile is None else profile
    w = forcing.chi.heat_weights(grid.k2, s0, s1, t_end)
    return VectorField(grid, prof * w, divergence_free=True)
