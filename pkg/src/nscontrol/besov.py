"""Infrared Besov diagnostics on continuous radial Fourier profiles.

A torus has no frequencies below ``2 pi / L``, so the ``j -> -infinity``
behaviour that separates ``B^{-s}_{2,infinity}`` from its ``c_0`` subspace is
studied on a sampled radial amplitude ``A(rho) = |f_hat|`` over ``R^n``
instead. Between grid points ``A`` is interpolated log-log (power law per
cell), so annulus masses and heat-damped masses are exact for piecewise
power laws. Plancherel with the ``(2 pi)^{-n}`` convention is used throughout.

Dyadic blocks use sharp annuli ``2^j <= rho < 2^{j+1}``; the dyadic value is
``d_j = 2^{-js} ||Delta_j f||_2`` and the heat curve is
``h(t) = t^{s/2} ||e^{t Lap} f||_2``. Since ``t`` pairs with ``rho^{-2}``,
two decades of ``rho`` at the bottom of the spectrum correspond to four
decades of ``t`` at the top of the time grid; both verdicts compare across
those equivalent ranges with the same factor.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special


def sphere_area(n: int) -> float:
    return 2 * math.pi ** (n / 2) / math.gamma(n / 2)


@dataclass(frozen=True)
class RadialFourierProfile:
    rho: np.ndarray
    A: np.ndarray
    n: int = 2
    angular: str = "isotropic"
    angular_factor: float = 1.0  # mean of |harmonic|^2 over the sphere for fixed-harmonic models

    def __post_init__(self):
        rho = np.asarray(self.rho, dtype=float)
        A = np.asarray(self.A, dtype=float)
        if rho.ndim != 1 or rho.shape != A.shape:
            raise ValueError("rho and A must be 1D arrays of the same length")
        if rho.size and (rho[0] <= 0 or np.any(np.diff(rho) <= 0)):
            raise ValueError("rho grid must be positive and strictly increasing")
        if np.any(A < 0) or not np.all(np.isfinite(A)):
            raise ValueError("amplitudes must be finite and nonnegative")
        if self.angular not in ("isotropic", "fixed-harmonic"):
            raise ValueError(f"unknown angular model {self.angular!r}")
        object.__setattr__(self, "rho", rho)
        object.__setattr__(self, "A", A)

    @classmethod
    def power_law(cls, p: float, rho_min: float = 1e-4, rho_max: float = 1e2,
                  points: int = 601, n: int = 2, cutoff: float | None = None) -> "RadialFourierProfile":
        """``A = rho^p``, optionally times ``exp(-rho^2 / cutoff^2)`` for a finite L2 mass."""
        rho = np.geomspace(rho_min, rho_max, points)
        A = rho ** p
        if cutoff is not None:
            A = A * np.exp(-(rho / cutoff) ** 2)
        return cls(rho, A, n)

    @property
    def weight(self) -> float:
        """``|S^{n-1}| * angular factor / (2 pi)^n``."""
        return sphere_area(self.n) * self.angular_factor / (2 * math.pi) ** self.n

    def _cells(self):
        """Per-cell power laws ``A^2 rho^{n-1} = c rho^beta`` (zero cells flagged)."""
        r0, r1 = self.rho[:-1], self.rho[1:]
        a0, a1 = self.A[:-1], self.A[1:]
        live = (a0 > 0) & (a1 > 0)
        with np.errstate(divide="ignore", invalid="ignore"):
            slope = np.where(live, np.log(np.where(live, a1, 1) / np.where(live, a0, 1)) / np.log(r1 / r0), 0.0)
        beta = 2 * slope + self.n - 1
        c = np.where(live, a0 ** 2 / r0 ** beta * r0 ** (self.n - 1), 0.0)
        return r0, r1, c, beta, live

    def mass(self, lo: float = 0.0, hi: float = math.inf) -> float:
        """``int_{lo <= rho < hi} A^2 rho^{n-1} d rho`` (exact for the interpolant)."""
        r0, r1, c, beta, live = self._cells()
        a = np.clip(r0, lo, hi)
        b = np.clip(r1, lo, hi)
        ok = live & (b > a)
        if not np.any(ok):
            return 0.0
        a, b, c, beta = a[ok], b[ok], c[ok], beta[ok]
        e = beta + 1
        near = np.abs(e) < 1e-12
        es = np.where(near, 1.0, e)
        val = np.where(near, c * np.log(b / a), c * (b ** es - a ** es) / es)
        return float(np.sum(val))

    def heat_mass(self, t: float) -> float:
        """``int e^{-2 t rho^2} A^2 rho^{n-1} d rho`` (exact per cell via incomplete gamma)."""
        if t == 0:
            return self.mass()
        r0, r1, c, beta, live = self._cells()
        out = 0.0
        for i in np.nonzero(live)[0]:
            e = (beta[i] + 1) / 2
            x0, x1 = 2 * t * r0[i] ** 2, 2 * t * r1[i] ** 2
            if e > 0:
                g = special.gamma(e) * (special.gammainc(e, x1) - special.gammainc(e, x0))
                if g <= 0:
                    # both endpoints deep in the tail: use the upper-gamma difference
                    g = special.gamma(e) * (special.gammaincc(e, x0) - special.gammaincc(e, x1))
                out += c[i] * 0.5 * (2 * t) ** (-e) * g
            else:
                s = np.linspace(r0[i], r1[i], 65)
                y = c[i] * s ** beta[i] * np.exp(-2 * t * s ** 2)
                out += float(np.sum(0.5 * (y[1:] + y[:-1]) * np.diff(s)))
        return float(out)


def dyadic_block_norm(prof: RadialFourierProfile, j: int, r: float = 2) -> float:
    """``||Delta_j f||_2`` for the sharp annulus ``2^j <= rho < 2^{j+1}``."""
    if r != 2:
        raise NotImplementedError("dyadic norms are implemented for r = 2 only")
    lo, hi = 2.0 ** j, 2.0 ** (j + 1)
    if prof.rho.size == 0 or hi <= prof.rho[0] or lo >= prof.rho[-1]:
        raise ValueError(f"annulus [{lo}, {hi}) lies outside the profile grid")
    return math.sqrt(prof.weight * prof.mass(lo, hi))


def heat_norm(prof: RadialFourierProfile, t: float) -> float:
    return math.sqrt(prof.weight * prof.heat_mass(t))


@dataclass
class BesovReport:
    s: float
    r: float
    j: np.ndarray
    d: np.ndarray
    t: np.ndarray
    h: np.ndarray
    dyadic_verdict: str
    heat_verdict: str
    factor: float = 5.0
    notes: list = field(default_factory=list)

    @property
    def verdict(self) -> str:
        return self.dyadic_verdict if self.dyadic_verdict == self.heat_verdict else "inconsistent"

    @property
    def consistent(self) -> bool:
        return self.dyadic_verdict == self.heat_verdict

    def dyadic_rows(self):
        return [[int(j), float(d)] for j, d in zip(self.j, self.d)]

    def heat_rows(self):
        return [[float(t), float(h)] for t, h in zip(self.t, self.h)]


def _verdict(small_end: float, large_end: float, factor: float) -> str:
    """``c0_like`` when the infrared end is smaller by at least ``factor``."""
    if large_end == 0 and small_end == 0:
        return "c0_like"
    return "c0_like" if small_end * factor <= large_end else "plateau"


def dyadic_values(prof: RadialFourierProfile, s: float, decades: float = 2.0):
    """``d_j`` for every complete annulus over the lowest ``decades`` of the grid (plus one)."""
    jmin = math.ceil(math.log2(prof.rho[0]))
    jtop = math.floor(math.log2(prof.rho[0] * 10 ** decades))
    js = np.arange(jmin, jtop + 1)
    d = np.array([2.0 ** (-j * s) * dyadic_block_norm(prof, int(j)) for j in js])
    return js, d


def heat_characterization(prof: RadialFourierProfile, s: float, r: float = 2,
                          t_grid=None, factor: float = 5.0, decades: float = 2.0) -> BesovReport:
    if not s > 0:
        raise ValueError("regularity s must be positive")
    if r != 2:
        raise NotImplementedError("heat characterization is implemented for r = 2 only")
    if t_grid is None:
        # keep e^{-2 t rho_min^2} ~ 1 so the truncated infrared does not fake decay
        t_grid = np.geomspace(1.0 / prof.rho[-1] ** 2, 0.01 / prof.rho[0] ** 2, 41)
    t_grid = np.asarray(t_grid, dtype=float)
    if t_grid.ndim != 1 or t_grid.size < 2 or np.any(np.diff(t_grid) <= 0):
        raise ValueError("t_grid must be strictly increasing with at least two points")
    h = np.array([t ** (s / 2) * heat_norm(prof, t) for t in t_grid])
    js, d = dyadic_values(prof, s, decades)

    notes = []
    # dyadic route: lowest annulus vs the one `decades` higher
    dlo = d[0]
    dhi = d[-1]
    span = 2.0 ** (js[-1] - js[0])
    if span < 10 ** decades * 0.5:
        notes.append(f"dyadic span only {span:.3g}")
    dyadic = _verdict(dlo, dhi, factor)
    # heat route: t_max vs t_max / 10^(2 decades), the same frequency span
    t_lo = t_grid[-1] / 10 ** (2 * decades)
    if t_lo < t_grid[0]:
        notes.append("time grid shorter than the equivalent dyadic span")
        t_lo = t_grid[0]
    h_lo = float(np.exp(np.interp(np.log(t_lo), np.log(t_grid), np.log(np.maximum(h, 1e-300)))))
    heat = _verdict(h[-1] if h[-1] > 1e-300 else 0.0, h_lo if h_lo > 1e-300 else 0.0, factor)
    return BesovReport(s, r, js, d, t_grid, h, dyadic, heat, factor, notes)
