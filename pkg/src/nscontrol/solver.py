"""Mild-solution time integration with running space-time accumulators.

The velocity obeys ``u_t = Lap u + N(u) + P div f`` with
``N(u) = -P div(u (x) u)``. One step of size ``h`` is the second-order
exponential Runge-Kutta scheme (Cox-Matthews ETD2RK)::

    a       = E u_n + h phi1 N(u_n) + F_n
    u_{n+1} = a + h phi2 (N(a) - N(u_n))

with ``E = exp(-h|k|^2)``, ``phi1(z) = (e^z - 1)/z``,
``phi2(z) = (e^z - 1 - z)/z^2`` at ``z = -h|k|^2``, and ``F_n`` the forcing's
Duhamel contribution over the step integrated exactly in time.

During integration the solver records per-step norm samples, the energy
rate ``m(t) = int u (x) u dx`` and its running time integral (trapezoid),
the forcing integral, snapshots on a geometric schedule and — for Picard
checks — composite-Simpson sums of ``int e^{(t_c - s) Lap} N(u(s)) ds``.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .forcing import Forcing, forcing_effect
from .grid import Grid, VectorField, sym_pairs
from .norms import lp_of_values, spectral_l2
from .operators import heat_semigroup, project_coeffs, tensor_divergence_coeffs

log = logging.getLogger(__name__)


class SolverAbort(RuntimeError):
    """Integration stopped; ``last_time`` is the last time with a valid state."""

    def __init__(self, message: str, last_time: float):
        super().__init__(message)
        self.last_time = last_time


class CFLError(SolverAbort):
    pass


def _phi_functions(z: np.ndarray):
    """``phi1, phi2`` with Taylor series near ``z = 0``."""
    small = np.abs(z) < 1e-3
    zs = np.where(small, 1.0, z)
    em1 = np.expm1(zs)
    phi1 = np.where(small, 1 + z / 2 + z ** 2 / 6 + z ** 3 / 24, em1 / zs)
    phi2 = np.where(small, 0.5 + z / 6 + z ** 2 / 24 + z ** 3 / 120, (em1 - zs) / zs ** 2)
    return phi1, phi2


def geometric_schedule(dt: float, T: float, ratio: float = 1.25) -> list[float]:
    """Times ``dt, dt r, dt r^2, ... , T`` rounded to whole steps, strictly increasing."""
    steps = round(T / dt)
    out, x = [], 1.0
    while x < steps:
        k = max(1, round(x))
        if not out or k > out[-1]:
            out.append(k)
        x *= ratio
    if not out or out[-1] != steps:
        out.append(steps)
    return [k * dt for k in out]


@dataclass
class SolverConfig:
    grid: Grid
    dt: float
    T: float
    forcing: Forcing | None = None
    snapshot_ratio: float = 1.25
    snapshot_times: list[float] | None = None
    picard_check_times: list[float] = field(default_factory=list)
    r: float = 4.0  # Lebesgue index of the Kato-type weight recorded per step
    cfl: float = 0.5

    def __post_init__(self):
        if not (0 < self.dt <= self.T):
            raise ValueError(f"need 0 < dt <= T, got dt={self.dt}, T={self.T}")
        steps = self.T / self.dt
        if abs(steps - round(steps)) > 1e-9 * steps:
            raise ValueError("T must be a whole number of steps")
        if self.snapshot_times is None:
            # the default schedule also holds T/10, the start of the last decade
            sched = geometric_schedule(self.dt, self.T, self.snapshot_ratio)
            k10 = round(self.T / (10 * self.dt))
            if k10 >= 1 and k10 not in {round(t / self.dt) for t in sched}:
                sched = sorted(sched + [k10 * self.dt])
            self.snapshot_times = sched
        # Picard checks need the state itself at every check time
        have = {round(t / self.dt) for t in self.snapshot_times}
        extra = [t for t in self.picard_check_times if round(t / self.dt) not in have]
        self.snapshot_times = sorted(list(self.snapshot_times) + extra)
        if any(not (0 < t <= self.T * (1 + 1e-12)) for t in self.snapshot_times):
            raise ValueError("snapshot times must lie in (0, T]")
        for t in self.picard_check_times:
            k = t / self.dt
            if not (0 < t <= self.T * (1 + 1e-12)) or abs(k - round(k)) > 1e-9 * k or round(k) % 2:
                raise ValueError(f"Picard check time {t} must be an even number of steps inside (0, T]")
        if self.forcing is not None:
            self.forcing.chi.check_fits(self.grid, self.T)

    @property
    def steps(self) -> int:
        return round(self.T / self.dt)


@dataclass
class PicardReport:
    times: np.ndarray
    residual_l2: np.ndarray
    u_l2: np.ndarray

    @property
    def relative(self) -> np.ndarray:
        return self.residual_l2 / np.maximum(self.u_l2, 1e-300)


@dataclass
class Trajectory:
    grid: Grid
    config: SolverConfig
    a: VectorField
    t: np.ndarray  # per-step sample times
    l2: np.ndarray
    linf: np.ndarray
    x_r_weight: np.ndarray
    xbar2_weight: np.ndarray
    rate: np.ndarray  # (steps+1, n, n): int u (x) u dx
    acc_uu: np.ndarray  # (steps+1, n, n): int_0^t int u (x) u
    acc_f: np.ndarray  # (steps+1, n, n): int_0^t int f
    snapshots: list[tuple[float, VectorField]]
    picard_sums: dict[float, np.ndarray] = field(default_factory=dict)
    picard: PicardReport | None = None

    @property
    def final(self) -> VectorField:
        return self.snapshots[-1][1]

    def snapshot(self, t: float, tol: float = 1e-9) -> VectorField:
        for s, v in self.snapshots:
            if abs(s - t) <= tol * max(1.0, t):
                return v
        raise KeyError(f"no snapshot at t={t}")

    def csv_header(self) -> list[str]:
        n = self.grid.n
        cols = ["t", "l2", "linf", "x_r_weight", "xbar2_weight"]
        cols += [f"acc_c{k + 1}{k + 1}" for k in range(n)]
        cols += [f"acc_c{k + 1}{l + 1}" for k in range(n) for l in range(k + 1, n)]
        return cols + ["picard_residual"]

    def csv_rows(self) -> list[list]:
        n = self.grid.n
        res = {}
        if self.picard is not None:
            res = {round(t / self.config.dt): r for t, r in zip(self.picard.times, self.picard.residual_l2)}
        rows = []
        for i, t in enumerate(self.t):
            acc = self.acc_uu[i]
            row = [t, self.l2[i], self.linf[i], self.x_r_weight[i], self.xbar2_weight[i]]
            row += [acc[k, k] for k in range(n)]
            row += [acc[k, l] for k in range(n) for l in range(k + 1, n)]
            row.append(res.get(i, ""))
            rows.append(row)
        return rows


_NONLINEAR_CACHE: dict[Grid, np.ndarray] = {}


def _nonlinear_operator(grid: Grid) -> np.ndarray:
    """``Q[j, p]`` with ``N_j = sum_p Q[j, p] T_p`` for symmetric-storage products ``T``.

    Folds the 2/3-rule mask, the tensor divergence, the Leray projection and
    the sign into one multiplier per (component, entry) pair.
    """
    if grid not in _NONLINEAR_CACHE:
        pairs = sym_pairs(grid.n)
        Q = np.zeros((grid.n, len(pairs)) + grid.spectral_shape, dtype=complex)
        for p in range(len(pairs)):
            unit = np.zeros((len(pairs),) + grid.spectral_shape, dtype=complex)
            unit[p] = grid.dealias_mask
            Q[:, p] = -project_coeffs(grid, tensor_divergence_coeffs(grid, unit))
        _NONLINEAR_CACHE[grid] = Q
    return _NONLINEAR_CACHE[grid]


def nonlinear(u_coeffs: np.ndarray, grid: Grid):
    """``N(u) = -P div D(u (x) u)`` and the physical velocity it was computed from."""
    up = grid.ifft(u_coeffs)
    pairs = sym_pairs(grid.n)
    prod = np.empty((len(pairs),) + grid.shape)
    for i, (a, b) in enumerate(pairs):
        np.multiply(up[a], up[b], out=prod[i])
    ph = grid.fft(prod)
    Q = _nonlinear_operator(grid)
    out = Q[:, 0] * ph[0]
    for p in range(1, len(pairs)):
        out += Q[:, p] * ph[p]
    return out, up


def energy_rate(grid: Grid, coeffs: np.ndarray) -> np.ndarray:
    n = grid.n
    m = np.empty((n, n))
    for k in range(n):
        for l in range(k, n):
            m[k, l] = m[l, k] = grid.inner(coeffs[k], coeffs[l])
    return m


class _Stepper:
    def __init__(self, grid: Grid, dt: float, forcing: Forcing | None):
        self.grid, self.dt, self.forcing = grid, dt, forcing
        z = -dt * grid.k2
        self.E = np.exp(z)
        p1, p2 = _phi_functions(z)
        self.hphi1 = dt * p1
        self.hphi2 = dt * p2
        self.profile = forcing.velocity_profile(grid) if forcing is not None else None

    def forcing_term(self, t: float) -> np.ndarray | float:
        if self.forcing is None or t >= self.forcing.chi.t_end:
            return 0.0
        return forcing_effect(self.forcing, self.grid, t, t + self.dt, t + self.dt, self.profile).coeffs

    def advance(self, u: np.ndarray, Nu: np.ndarray, t: float) -> np.ndarray:
        Fn = self.forcing_term(t)
        a = self.E * u + self.hphi1 * Nu + Fn
        Na, _ = nonlinear(a, self.grid)
        return a + self.hphi2 * (Na - Nu)


def step(u: VectorField, t: float, dt: float, forcing: Forcing | None = None, cfl: float = 0.5) -> VectorField:
    """One ETD2RK step; raises :class:`CFLError` if ``dt > cfl * dx / max|u|``."""
    grid = u.grid
    Nu, up = nonlinear(u.coeffs, grid)
    umax = float(np.sqrt(np.sum(up ** 2, axis=0)).max())
    if umax > 0 and dt > cfl * grid.dx / umax:
        raise CFLError(f"CFL violated at t={t}: dt={dt} > {cfl}*dx/max|u| = {cfl * grid.dx / umax}", t)
    return VectorField(grid, _Stepper(grid, dt, forcing).advance(u.coeffs, Nu, t), divergence_free=True)


def _simpson_weight(i: int, steps: int, dt: float) -> float:
    if i == 0 or i == steps:
        return dt / 3
    return dt * (4 / 3 if i % 2 else 2 / 3)


def integrate(config: SolverConfig, a: VectorField, check_picard: bool = True) -> Trajectory:
    """Integrate from ``u(0) = a`` to ``T``; aborts with :class:`SolverAbort` on CFL or NaN."""
    grid = config.grid
    grid.check_same(a.grid)
    if a.divergence_defect() > 1e-10:
        raise ValueError("initial data must be divergence-free")
    steps, dt, n = config.steps, config.dt, grid.n
    stepper = _Stepper(grid, dt, config.forcing)
    snap_steps = {round(t / dt) for t in config.snapshot_times}
    pic_steps = {round(t / dt): t for t in config.picard_check_times}
    pic = {k: np.zeros((n,) + grid.spectral_shape, dtype=complex) for k in pic_steps}

    t_arr = dt * np.arange(steps + 1)
    l2, linf, xr, xb = (np.zeros(steps + 1) for _ in range(4))
    rate = np.zeros((steps + 1, n, n))
    acc = np.zeros((steps + 1, n, n))
    accf = np.zeros((steps + 1, n, n))
    snaps = [(0.0, a.copy())]
    e_r = 0.5 - n / (2 * config.r)

    u = a.coeffs.copy()
    for i in range(steps + 1):
        t = i * dt
        Nu, up = nonlinear(u, grid)
        mag = np.sqrt(np.sum(up ** 2, axis=0))
        umax = float(mag.max())
        if not np.isfinite(umax):
            raise SolverAbort(f"non-finite velocity at t={t}", (i - 1) * dt)
        l2[i] = spectral_l2(VectorField(grid, u))
        linf[i] = umax
        xr[i] = t ** e_r * lp_of_values(mag, grid.cell_volume, config.r) if t > 0 or e_r == 0 else 0.0
        xb[i] = math.sqrt(t) * l2[i]
        rate[i] = energy_rate(grid, u)
        if i > 0:
            acc[i] = acc[i - 1] + 0.5 * dt * (rate[i] + rate[i - 1])
        if config.forcing is not None:
            accf[i] = config.forcing.integral(t)
        for k in pic:
            if i <= k:
                pic[k] += _simpson_weight(i, k, dt) * np.exp(-(k - i) * dt * grid.k2) * Nu
        if i in snap_steps and i > 0:
            snaps.append((t, VectorField(grid, u.copy(), True)))
        if i == steps:
            break
        if umax > 0 and dt > config.cfl * grid.dx / umax:
            raise CFLError(f"CFL violated at t={t:.6g}: dt={dt} > {config.cfl}*dx/max|u| "
                           f"= {config.cfl * grid.dx / umax:.6g}", t)
        u = stepper.advance(u, Nu, t)

    traj = Trajectory(grid, config, a, t_arr, l2, linf, xr, xb, rate, acc, accf, snaps,
                      {pic_steps[k]: v for k, v in pic.items()})
    if check_picard and config.picard_check_times:
        traj.picard = picard_residual(traj, a, config.forcing, config.picard_check_times)
    return traj


def duhamel_force(forcing: Forcing | None, t: float, grid: Grid) -> VectorField:
    """``Phi(f)(t) = int_0^t e^{(t-s) Lap} P div f(s) ds`` (exact in time)."""
    if forcing is None:
        return VectorField.zeros(grid)
    return forcing_effect(forcing, grid, 0.0, t, t)


def picard_residual(traj: Trajectory, a: VectorField, forcing: Forcing | None, times) -> PicardReport:
    """``||u(t) - e^{t Lap} a - Phi(f)(t) - G(u,u)(t)||_2`` at recorded check times.

    ``G`` comes from the composite-Simpson sums accumulated over all steps,
    an independent quadrature of the Duhamel integral.
    """
    grid = traj.grid
    res, norms = [], []
    for t in times:
        key = next((s for s in traj.picard_sums if abs(s - t) <= 1e-9 * max(1.0, t)), None)
        if key is None:
            raise ValueError(f"no Picard sums recorded at t={t}; add it to picard_check_times")
        u = traj.snapshot(t) if any(abs(s - t) <= 1e-9 * max(1, t) for s, _ in traj.snapshots) else None
        if u is None:
            raise ValueError(f"no snapshot at the Picard check time t={t}")
        mild = heat_semigroup(a, t).coeffs + duhamel_force(forcing, t, grid).coeffs + traj.picard_sums[key]
        res.append(spectral_l2(VectorField(grid, u.coeffs - mild)))
        norms.append(spectral_l2(u))
    return PicardReport(np.asarray(times, dtype=float), np.array(res), np.array(norms))


def heat_flow_trajectory(a: VectorField, times) -> Trajectory:
    """A force-free linear trajectory ``e^{t Lap} a`` sampled at ``times`` (norm studies)."""
    times = sorted(float(t) for t in times if t > 0)
    snaps = [(0.0, a.copy())] + [(t, VectorField(a.grid, heat_semigroup(a, t).coeffs, True)) for t in times]
    empty = np.zeros(0)
    return Trajectory(a.grid, None, a, np.array([t for t, _ in snaps]), empty, empty, empty, empty,
                      np.zeros((0, a.grid.n, a.grid.n)), np.zeros((0, a.grid.n, a.grid.n)),
                      np.zeros((0, a.grid.n, a.grid.n)), snaps)
