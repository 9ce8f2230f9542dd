"""Large-time profile verification and decay-exponent fitting.

For a kernel ``M`` of ``e^{t Lap}``-type (``M_hat(xi, t) = m(xi) e^{-t|xi|^2}``)
and a space-time source ``W`` the convolution
``Phi(x, t) = int_0^t int M(x - y, t - s) W(y, s) dy ds`` is compared with
``lambda M(x, t)``, ``lambda = int int W``, through the scaled gap
``t^{1/2 + (n/2)(1 - 1/q)} ||Phi(t) - lambda M(t)||_q``.

"Goes to zero" is certified by a finite surrogate: a decrease by at least
``factor`` (default 5) across every decade of the sampled window together
with a non-increasing trend over its last half-decade.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .control import energy_matrix
from .forcing import ChiProfile, _expm1_ratio
from .grid import Grid, SpectralField, VectorField
from .kernel import oseen_multiplier, trace_pairing_coeffs
from .norms import lp_norm
from .operators import heat_semigroup


# --- kernels ------------------------------------------------------------

@dataclass(frozen=True)
class OseenComponent:
    """``F_{kl,j}``: the ``(k, l) -> j`` component of ``e^{t Lap} P div``."""

    k: int
    l: int
    j: int
    symmetric: bool = True

    def multiplier(self, grid: Grid) -> np.ndarray:
        return oseen_multiplier(grid, self.k, self.l, self.j, self.symmetric)

    def coeffs(self, grid: Grid, t: float) -> np.ndarray:
        return self.multiplier(grid) * np.exp(-t * grid.k2) / grid.cell_volume


@dataclass(frozen=True)
class HeatKernel:
    """The heat kernel itself (``m = 1``); useful for testing the machinery."""

    def multiplier(self, grid: Grid) -> np.ndarray:
        return np.ones(grid.spectral_shape, dtype=complex)

    def coeffs(self, grid: Grid, t: float) -> np.ndarray:
        return np.exp(-t * grid.k2) / grid.cell_volume + 0j


# --- sources ------------------------------------------------------------

def _phi12(z):
    p1 = _expm1_ratio(z)
    small = np.abs(z) < 1e-3
    zs = np.where(small, 1.0, z)
    p2 = np.where(small, 0.5 + z / 6 + z * z / 24, (np.expm1(zs) - zs) / zs ** 2)
    return p1, p2


@dataclass
class SeparableSource:
    """``W = sum_i alpha_i chi_i`` for separable profiles."""

    terms: list[tuple[float, ChiProfile]]

    @property
    def support_end(self) -> float:
        return max(chi.t_end for _, chi in self.terms)

    def total(self, grid: Grid | None = None) -> float:
        return float(sum(alpha for alpha, _ in self.terms))

    def weighted(self, grid: Grid, s0: float, s1: float, t_end: float, zero_mode: bool = False) -> np.ndarray:
        """Coefficients of ``int_{s0}^{s1} e^{(t_end - s) Lap} W(s) ds`` (``zero_mode``: spatial mean only)."""
        out = np.zeros(grid.spectral_shape, dtype=complex)
        for alpha, chi in self.terms:
            w = chi.heat_weights(grid.k2, s0, s1, t_end)
            if zero_mode:
                out += alpha * w / grid.cell_volume
            else:
                out += alpha * w * chi.spatial_coeffs(grid)
        return out

    def mean_integral(self, s0: float, s1: float) -> float:
        return float(sum(alpha * (chi.time_integral(s1) - chi.time_integral(s0)) for alpha, chi in self.terms))

    def sample(self, grid: Grid, s: float) -> SpectralField:
        c = sum(alpha * float(chi.time_factor(s)) * chi.spatial_coeffs(grid) for alpha, chi in self.terms)
        return SpectralField(grid, np.asarray(c) + np.zeros(grid.spectral_shape, dtype=complex))

    def sample_times(self, t_max: float, count: int = 200) -> np.ndarray:
        """Dense over the time support, then geometric up to ``t_max`` (where ``W`` vanishes)."""
        end = min(self.support_end, t_max)
        ts = np.linspace(0.0, end, count)
        if t_max > end:
            ts = np.concatenate([ts, np.geomspace(end, t_max, 20)[1:]])
        return ts


@dataclass
class SampledSource:
    """Scalar source known at increasing times, linear in between, zero after the last sample.

    ``tail`` is an extra contribution to ``int int W`` beyond the last sample
    (for sources, such as ``u_1 u_2`` of a decaying flow, that do not stop).
    """

    grid: Grid
    times: np.ndarray
    coeffs: np.ndarray  # (len(times),) + spectral_shape
    tail: float = 0.0

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        if self.times.ndim != 1 or np.any(np.diff(self.times) <= 0):
            raise ValueError("source times must be strictly increasing")
        if self.coeffs.shape != (self.times.size,) + self.grid.spectral_shape:
            raise ValueError("source coefficient shape does not match the grid")

    @property
    def support_end(self) -> float:
        return float(self.times[-1])

    def _means(self) -> np.ndarray:
        return self.coeffs[(slice(None),) + (0,) * self.grid.n].real * self.grid.cell_volume

    def total(self, grid: Grid | None = None) -> float:
        w0 = self._means()
        return float(np.sum(0.5 * (w0[1:] + w0[:-1]) * np.diff(self.times))) + self.tail

    def _at(self, s: float) -> np.ndarray:
        i = int(np.clip(np.searchsorted(self.times, s) - 1, 0, self.times.size - 2))
        th = (s - self.times[i]) / (self.times[i + 1] - self.times[i])
        return (1 - th) * self.coeffs[i] + th * self.coeffs[i + 1]

    def weighted(self, grid: Grid, s0: float, s1: float, t_end: float, zero_mode: bool = False) -> np.ndarray:
        grid.check_same(self.grid)
        lam = grid.k2
        ts = self.times
        out = np.zeros(grid.spectral_shape, dtype=complex)
        s0, s1 = max(s0, ts[0]), min(s1, ts[-1])
        if s1 <= s0:
            return out
        knots = np.concatenate([[s0], ts[(ts > s0) & (ts < s1)], [s1]])
        for a, b in zip(knots[:-1], knots[1:]):
            wa, wb = self._at(a), self._at(b)
            if zero_mode:
                z0 = (0,) * grid.n
                wa = np.full(grid.spectral_shape, wa[z0].real, dtype=complex)
                wb = np.full(grid.spectral_shape, wb[z0].real, dtype=complex)
            d = b - a
            p1, p2 = _phi12(-lam * d)
            out += np.exp(-lam * (t_end - b)) * d * ((p1 - p2) * wa + p2 * wb)
        return out

    def mean_integral(self, s0: float, s1: float) -> float:
        ts = np.linspace(max(s0, self.times[0]), min(s1, self.times[-1]), 2)
        if ts[1] <= ts[0]:
            return 0.0
        knots = np.concatenate([[ts[0]], self.times[(self.times > ts[0]) & (self.times < ts[1])], [ts[1]]])
        z0 = (0,) * self.grid.n
        vals = np.array([self._at(s)[z0].real for s in knots]) * self.grid.cell_volume
        return float(np.sum(0.5 * (vals[1:] + vals[:-1]) * np.diff(knots)))

    def sample(self, grid: Grid, s: float) -> SpectralField:
        if s > self.times[-1]:
            return SpectralField.zeros(grid)
        return SpectralField(grid, self._at(s))

    def sample_times(self, t_max: float, count: int | None = None) -> np.ndarray:
        return self.times[self.times <= t_max]


# --- convolution and gaps -------------------------------------------------

def convolution_phi(M, W, t_grid, grid: Grid) -> list[SpectralField]:
    """``Phi(., t)`` for each ``t`` in ``t_grid``."""
    t_grid = np.asarray(t_grid, dtype=float)
    if isinstance(W, SampledSource) and W.tail == 0 and np.any(t_grid > W.support_end * (1 + 1e-12)):
        last = np.abs(W.coeffs[-1]).max()
        if last > 1e-12 * max(np.abs(W.coeffs).max(), 1e-300):
            raise ValueError("requested times beyond the source horizon while the source is still active")
    m = M.multiplier(grid)
    return [SpectralField(grid, m * W.weighted(grid, 0.0, t, t)) for t in t_grid]


def gap_exponent(q: float, n: int) -> float:
    return 0.5 + 0.5 * n * (1 - (0.0 if math.isinf(q) else 1 / q))


@dataclass
class ProfileGapReport:
    q: float
    lam: float
    times: np.ndarray
    gap: np.ndarray
    verdict: str
    decade_ratios: list[tuple[float, float]]  # (t, gap(t/10)/gap(t))
    hypothesis: dict = field(default_factory=dict)
    breakdown: dict | None = None  # t -> (I1, I2, I3, I4) scaled norms
    extra: dict = field(default_factory=dict)

    def rows(self):
        return [[float(t), float(g)] for t, g in zip(self.times, self.gap)]


def decrease_verdict(times, gap, factor: float = 5.0, plateau_factor: float = 1.5):
    """``decreasing`` if every available decade shrinks by ``factor`` and the last
    half-decade is non-increasing; ``plateau`` if the last decade shrinks by less
    than ``plateau_factor``; otherwise ``inconclusive``."""
    times = np.asarray(times, dtype=float)
    gap = np.asarray(gap, dtype=float)
    lt, lg = np.log(times), np.log(np.maximum(gap, 1e-300))
    ratios = []
    for t in times:
        if t / 10 >= times[0] * (1 - 1e-12):
            g_lo = math.exp(np.interp(math.log(t / 10), lt, lg))
            ratios.append((float(t), g_lo / max(float(np.exp(np.interp(math.log(t), lt, lg))), 1e-300)))
    if not ratios:
        return "inconclusive", ratios
    last = ratios[-1][1]
    half = times >= times[-1] / math.sqrt(10)
    monotone = bool(np.all(np.diff(gap[half]) <= 1e-12 * gap[half][:-1]))
    anchors = [times[-1] / 10 ** k for k in range(int(math.floor(math.log10(times[-1] / times[0]) + 1e-9)))]
    checks = []
    for ta in anchors:
        checks.append(math.exp(np.interp(math.log(ta / 10), lt, lg) - np.interp(math.log(ta), lt, lg)))
    if gap[-1] == 0 or (checks and all(c >= factor for c in checks) and monotone):
        return "decreasing", ratios
    if last < plateau_factor:
        return "plateau", ratios
    return "inconclusive", ratios


def _weighted_check(ts, vals, t_max):
    """Weighted norms stay bounded: the last decade does not exceed twice the earlier maximum."""
    late = ts >= t_max / 10
    early = ~late
    vmax = float(vals.max())
    vlate = float(vals[late].max()) if np.any(late) else 0.0
    vearly = float(vals[early].max()) if np.any(early) else vmax
    ok = bool(np.isfinite(vmax) and (vlate == 0 or vlate <= 2 * vearly))
    return vmax, vlate, ok


def _decay_hypothesis(W, grid: Grid, t_max: float, q: float, oversample: int) -> dict:
    """``s ||W(s)||_1`` bounded and, for ``q >= n/(n-1)``, ``s^{1 + (n/2)(1 - 1/beta)} ||W(s)||_beta`` bounded."""
    n = grid.n
    ts = W.sample_times(t_max)
    ts = ts[ts > 0]
    if ts.size == 0:
        return {"l1_weighted_max": 0.0, "l1_weighted_late": 0.0, "l1_ok": True, "ok": True}
    out = {}
    w1 = np.array([s * lp_norm(W.sample(grid, s), 1, oversample) for s in ts])
    out["l1_weighted_max"], out["l1_weighted_late"], out["l1_ok"] = _weighted_check(ts, w1, t_max)
    if q >= n / (n - 1):
        beta = 2.0 if math.isinf(q) else max(q, 2.0)
        e = 1 + 0.5 * n * (1 - 1 / beta)
        wb = np.array([s ** e * lp_norm(W.sample(grid, s), beta, oversample) for s in ts])
        out["beta"] = beta
        out["beta_weighted_max"], out["beta_weighted_late"], out["beta_ok"] = _weighted_check(ts, wb, t_max)
    out["ok"] = out["l1_ok"] and out.get("beta_ok", True)
    return out


def breakdown_fields(M, W, t: float, grid: Grid, a_eta: float = 0.9):
    """Coefficients of ``I_1 .. I_4`` with ``Phi(t) - lambda M(t) = I_1 + I_2 + I_3 + I_4``.

    With ``w_0(s) = int W(y, s) dy`` and the split at ``a_eta t``::

        I_1 = -M(t) int_{a t}^inf w_0
        I_2 = int_0^{a t} [M(t - s) - M(t)] w_0(s) ds
        I_3 = int_0^{a t} int [M(x - y, t - s) - M(x, t - s)] W(y, s) dy ds
        I_4 = int_{a t}^t int M(x - y, t - s) W(y, s) dy ds
    """
    if not 0 < a_eta < 1:
        raise ValueError("a_eta must lie in (0, 1)")
    m = M.multiplier(grid)
    s_split = a_eta * t
    Mt = M.coeffs(grid, t)
    head = W.mean_integral(0.0, s_split)
    mean_part = W.weighted(grid, 0.0, s_split, t, zero_mode=True)
    i1 = -Mt * (W.total(grid) - head)
    i2 = m * mean_part - Mt * head
    i3 = m * (W.weighted(grid, 0.0, s_split, t) - mean_part)
    i4 = m * W.weighted(grid, s_split, t, t)
    return i1, i2, i3, i4


def profile_gap(M, W, q: float, t_grid, grid: Grid, oversample: int = 2, factor: float = 5.0,
                breakdown: bool = False, a_eta: float = 0.9) -> ProfileGapReport:
    """Scaled gap between ``M * W`` and ``lambda M`` on a time grid."""
    t_grid = np.asarray(t_grid, dtype=float)
    lam = W.total(grid)
    hyp = _decay_hypothesis(W, grid, float(t_grid[-1]), q, oversample)
    phis = convolution_phi(M, W, t_grid, grid)
    e = gap_exponent(q, grid.n)
    gaps = []
    parts = {} if breakdown else None
    for t, phi in zip(t_grid, phis):
        diff = phi.coeffs - lam * M.coeffs(grid, t)
        gaps.append(t ** e * lp_norm(SpectralField(grid, diff), q, oversample))
        if breakdown:
            parts[float(t)] = tuple(t ** e * lp_norm(SpectralField(grid, x), q, oversample)
                                    for x in breakdown_fields(M, W, t, grid, a_eta))
    gaps = np.array(gaps)
    verdict, ratios = decrease_verdict(t_grid, gaps, factor)
    return ProfileGapReport(q, lam, t_grid, gaps, verdict, ratios, hyp, parts)


def kernel_scale(grid: Grid, t: float = 1.0) -> float:
    """Largest Fourier-coefficient modulus over all components ``F_{kl,j}(., t)``."""
    n = grid.n
    return max(float(np.abs(OseenComponent(k, l, j, symmetric=False).coeffs(grid, t)).max())
               for k in range(n) for l in range(n) for j in range(n))


def trace_pairing_check(grid: Grid, W, t: float = 1.0) -> tuple[float, float]:
    """``(max |sum_{kl} F_{kl,j} W_kl|, same relative to the kernel scale)``."""
    p = float(np.abs(trace_pairing_coeffs(grid, np.asarray(W, dtype=float), t)).max())
    return p, p / kernel_scale(grid, t)


def ms_cancellation_check(traj, a: VectorField, q: float, forcing=None, t_window=None,
                          oversample: int = 1, factor: float = 5.0, plateau_factor: float = 1.5,
                          energy=None) -> ProfileGapReport:
    """Scaled gap ``t^{1/2 + (n/2)(1 - 1/q)} ||u(t) - e^{t Lap} a||_q`` of a solved flow.

    The verdict compares the gap at the end of the window with its value one
    decade earlier (``decreasing``: by at least ``factor`` with a monotone
    last half-decade; ``plateau``: by less than ``plateau_factor``). Also
    evaluates the leading-order term ``sum_{kl} F_{kl,j}(., 1) W_kl`` with
    ``W = int int (u (x) u - f)``, and that of its isotropic part, which
    vanishes identically. An uncontrolled flow simply reports its verdict.
    """
    grid = traj.grid
    n = grid.n
    if t_window is None:
        t1 = min(traj.snapshots[-1][0], 0.05 * (grid.L / (2 * math.pi)) ** 2)
        t_window = (t1 / 10, t1)
    t0, t1 = t_window
    sel = [(t, v) for t, v in traj.snapshots if t0 * (1 - 1e-9) <= t <= t1 * (1 + 1e-9)]
    if len(sel) < 2:
        raise ValueError("not enough snapshots in the requested window")
    times = np.array([t for t, _ in sel])
    e = gap_exponent(q, n)
    gaps = np.array([t ** e * lp_norm(VectorField(grid, v.coeffs - heat_semigroup(a, t).coeffs), q, oversample)
                     for t, v in sel])
    ratio = float(gaps[0] / max(gaps[-1], 1e-300))
    half = times >= times[-1] / math.sqrt(10)
    monotone = bool(np.all(np.diff(gaps[half]) <= 0))
    if ratio >= factor and monotone:
        verdict = "decreasing"
    elif ratio < plateau_factor:
        verdict = "plateau"
    else:
        verdict = "inconclusive"

    if forcing is None and traj.config is not None:
        forcing = traj.config.forcing
    em = energy if energy is not None else energy_matrix(traj)
    Wm = np.array(em.c, dtype=float)
    if forcing is not None:
        Wm = Wm - forcing.integral(math.inf)
    scale = float(np.trace(Wm)) / n
    pairing, pairing_rel = trace_pairing_check(grid, Wm)
    iso, _ = trace_pairing_check(grid, scale * np.eye(n))
    extra = {
        "W": Wm,
        "pairing_max": pairing,
        "pairing_relative": pairing_rel,
        "isotropic_pairing_max": iso,
        "anisotropy": float(np.abs(Wm - scale * np.eye(n)).max() / abs(scale)) if scale else math.inf,
        "decade_ratio": ratio,
        "end_over_max": float(gaps[-1] / max(gaps.max(), 1e-300)),
    }
    return ProfileGapReport(q, scale, times, gaps, verdict, [(float(t1), ratio)], {}, None, extra)


def source_from_trajectory(traj, k: int, l: int, tail: bool = True) -> SampledSource:
    """``W = u_k u_l`` sampled at the trajectory's snapshots (dealiased products)."""
    grid = traj.grid
    times, coeffs = [], []
    snaps = list(traj.snapshots)
    if snaps[0][0] > 0 and getattr(traj, "a", None) is not None:
        snaps.insert(0, (0.0, traj.a))
    for t, v in snaps:
        up = v.physical()
        times.append(t)
        coeffs.append(grid.fft(up[k] * up[l]) * grid.dealias_mask)
    extra = 0.0
    if tail:
        em = energy_matrix(traj)
        extra = float(em.tail[k, l]) if em.tail_known else 0.0
    return SampledSource(grid, np.array(times), np.array(coeffs), extra)


# --- decay fits ---------------------------------------------------------

@dataclass(frozen=True)
class DecayReport:
    kind: str
    t0: float
    t1: float
    gamma: float
    r2: float
    samples: int
    reference: dict
    trusted: bool

    def text(self) -> str:
        ref = ", ".join(f"{k}={v:.6g}" for k, v in self.reference.items())
        return (f"kind = {self.kind}\ngamma = {self.gamma:.17g}\nr2 = {self.r2:.17g}\n"
                f"window = {self.t0:.17g}, {self.t1:.17g}\nsamples = {self.samples}\n"
                f"trusted = {str(self.trusted).lower()}\nreference = {ref}\n")


def decay_fit(t, values, window, trusted_max: float | None = None, kind: str = "l2_squared",
              n: int = 2, min_samples: int = 8, r2_required: float = 0.99) -> DecayReport:
    """Least-squares slope of ``log values`` against ``log t`` inside ``window``.

    ``gamma`` is the decay exponent (``values ~ t^-gamma``); trusted only when
    ``R^2 >= r2_required``.
    """
    t = np.asarray(t, dtype=float)
    values = np.asarray(values, dtype=float)
    t0, t1 = window
    if t0 < 1.0:
        raise ValueError("fit window must exclude the transient t < 1")
    if trusted_max is not None and t1 > trusted_max * (1 + 1e-12):
        raise ValueError(f"fit window end {t1} exceeds the trusted range {trusted_max}")
    sel = (t >= t0 * (1 - 1e-12)) & (t <= t1 * (1 + 1e-12)) & (values > 0)
    if sel.sum() < min_samples:
        raise ValueError(f"need at least {min_samples} positive samples in the window, got {int(sel.sum())}")
    x, y = np.log(t[sel]), np.log(values[sel])
    slope, icpt = np.polyfit(x, y, 1)
    resid = y - (slope * x + icpt)
    ss = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid ** 2)) / ss if ss > 0 else 1.0
    ref = {"l2_squared_generic": (n + 2) / 2, "l2_generic": (n + 2) / 4}
    return DecayReport(kind, float(t0), float(t1), float(-slope), r2, int(sel.sum()), ref, r2 >= r2_required)


__all__ = [
    "OseenComponent", "HeatKernel", "SeparableSource", "SampledSource", "convolution_phi", "profile_gap",
    "ProfileGapReport", "ms_cancellation_check", "decay_fit", "DecayReport", "decrease_verdict",
    "source_from_trajectory", "gap_exponent", "breakdown_fields", "kernel_scale", "trace_pairing_check",
]
