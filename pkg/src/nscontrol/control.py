"""Iterative construction of a control force with scalar space-time energy matrix.

Starting from ``f^(0) = 0`` each iteration solves the forced problem, measures
the energy matrix ``c_kl = int_0^inf int u_k u_l`` of the resulting flow and
sets the next forcing coefficients to ``c_kl`` off the diagonal and
``c_kk - cbar`` on it, paired with the fixed profile ``chi``. At a fixed point
the residual matrix ``W = int int (u (x) u - f)`` equals ``cbar I``.
"""
from __future__ import annotations

import dataclasses
import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .forcing import ChiProfile, Forcing
from .grid import VectorField
from .norms import hminus1_norm, trajectory_norm
from .solver import SolverConfig, Trajectory, heat_flow_trajectory, integrate

log = logging.getLogger(__name__)


class ControlDivergence(RuntimeError):
    def __init__(self, message: str, state: "ControlState"):
        super().__init__(message)
        self.state = state


class SmallnessError(RuntimeError):
    def __init__(self, message: str, report: "SmallnessReport"):
        super().__init__(message)
        self.report = report


# --- energy matrix ------------------------------------------------------

@dataclass
class EnergyMatrix:
    c: np.ndarray
    truncated: np.ndarray
    tail: np.ndarray
    tail_fraction: float  # nan when the tail could not be extrapolated
    gamma: np.ndarray  # fitted rate exponents per entry (nan where not fitted)

    @property
    def cbar(self) -> float:
        return float(np.trace(self.c)) / self.c.shape[0]

    @property
    def tail_known(self) -> bool:
        return not math.isnan(self.tail_fraction)


def _fit_exponent(t: np.ndarray, y: np.ndarray) -> float:
    """``gamma`` in ``|y| ~ t^-gamma`` by least squares; nan if ``y`` vanishes or changes sign."""
    if np.any(y == 0) or not (np.all(y > 0) or np.all(y < 0)):
        return math.nan
    slope = np.polyfit(np.log(t), np.log(np.abs(y)), 1)[0]
    return float(-slope)


def energy_matrix(traj: Trajectory, tail: bool = True, decade: float = 10.0,
                  warn_fraction: float = 0.05) -> EnergyMatrix:
    """``int_0^T int u (x) u`` plus a power-law tail to infinity.

    Each entry's rate ``m_kl(t)`` is fitted on ``[T/decade, T]`` and
    integrated analytically from its value at ``T``; entries whose rate
    changes sign there, or whose fitted exponent does not exceed one, use
    the exponent of the trace. If the trace itself does not decay faster
    than ``1/t`` the truncated matrix is returned with an unknown tail.
    """
    n = traj.grid.n
    trunc = traj.acc_uu[-1].copy()
    trunc = 0.5 * (trunc + trunc.T)
    if not tail:
        return EnergyMatrix(trunc, trunc, np.zeros((n, n)), 0.0, np.full((n, n), math.nan))
    T = traj.t[-1]
    sel = traj.t >= T / decade
    t = traj.t[sel]
    rate = traj.rate[sel]
    trace = np.trace(rate, axis1=1, axis2=2)
    if np.all(trunc == 0) and np.all(trace == 0):
        z = np.zeros((n, n))
        return EnergyMatrix(z, z, z, 0.0, np.full((n, n), math.nan))
    g_tr = _fit_exponent(t, trace)
    if not (g_tr > 1):
        log.warning("energy rate does not decay faster than 1/t; tail left unknown")
        return EnergyMatrix(trunc, trunc, np.zeros((n, n)), math.nan, np.full((n, n), math.nan))
    tailm = np.zeros((n, n))
    gam = np.full((n, n), math.nan)
    for k in range(n):
        for l in range(k, n):
            g = _fit_exponent(t, rate[:, k, l])
            if not (g > 1):
                g = g_tr
            gam[k, l] = gam[l, k] = g
            tailm[k, l] = tailm[l, k] = rate[-1, k, l] * T / (g - 1)
    c = trunc + tailm
    frac = float(abs(np.trace(tailm)) / max(abs(np.trace(c)), 1e-300))
    if frac >= warn_fraction:
        warnings.warn(f"energy-matrix tail is {100 * frac:.1f}% of the total", RuntimeWarning, stacklevel=2)
    return EnergyMatrix(c, trunc, tailm, frac, gam)


# --- forcing update -----------------------------------------------------

CBAR_MODES = ("mean", "zero", "const")


def cbar_value(c: np.ndarray, mode: str = "mean", const: float | None = None) -> float:
    if mode == "mean":
        return float(np.trace(c)) / c.shape[0]
    if mode == "zero":
        return 0.0
    if mode == "const":
        if const is None:
            raise ValueError("cbar mode 'const' needs a value")
        return float(const)
    raise ValueError(f"unknown cbar mode {mode!r}; expected one of {CBAR_MODES}")


def forcing_update(c, chi: ChiProfile | None = None, mode: str = "mean",
                   const: float | None = None) -> np.ndarray:
    """Coefficients ``c_kl`` off the diagonal and ``c_kk - cbar`` on it."""
    c = np.asarray(getattr(c, "c", c), dtype=float)
    c = 0.5 * (c + c.T)
    out = c.copy()
    cb = cbar_value(c, mode, const)
    out[np.diag_indices_from(out)] = np.diag(c) - cb
    if mode == "mean":
        # make the diagonal exactly trace-free despite rounding in cbar
        d = np.diag(out).copy()
        d[-1] = -np.sum(d[:-1])
        out[np.diag_indices_from(out)] = d
    # entries at rounding level (e.g. from exactly symmetric data) are exact zeros
    out[np.abs(out) <= 64 * np.finfo(float).eps * np.abs(c).max(initial=0.0)] = 0.0
    return out


# --- smallness ----------------------------------------------------------

@dataclass(frozen=True)
class SmallnessReport:
    besov_proxy: float
    hminus1: float
    chi_y_norm: float
    chi_alt_norm: float
    condition_y: float  # besov proxy + ||a||^2 ||chi||_{Y_r}
    condition_alt: float  # ||a|| ||chi||_{L^{(4+2n)/(4+n)}}
    corollary: tuple[float, float, float]
    r: float
    n: int

    def named(self) -> dict[str, float]:
        return {
            "besov_proxy": self.besov_proxy,
            "hminus1": self.hminus1,
            "chi_Y_r": self.chi_y_norm,
            "chi_L_alt": self.chi_alt_norm,
            "condition_y": self.condition_y,
            "condition_alt": self.condition_alt,
            "corollary_1": self.corollary[0],
            "corollary_2": self.corollary[1],
            "corollary_3": self.corollary[2],
        }

    def exceeded(self, thresholds: dict[str, float]) -> dict[str, tuple[float, float]]:
        vals = self.named()
        return {k: (vals[k], v) for k, v in thresholds.items() if k in vals and vals[k] >= v}


def alternative_exponent(n: int) -> float:
    return (4 + 2 * n) / (4 + n)


def corollary_products(hm1: float, besov: float, R: float, Rprime: float, n: int, r: float):
    """The three scale-dependent smallness products for a profile with scales ``(R, R')``, in order."""
    p2 = hm1 ** 2 * R ** (n * (1 - 1 / r)) * Rprime ** (n / (2 * r))
    p3 = hm1 * R ** (n ** 2 / (4 + 2 * n)) * Rprime ** (n / (4 + 2 * n))
    return (besov, p2, p3)


def besov_proxy(a: VectorField, r: float, times=None) -> float:
    """``sup_t t^{1/2 - n/(2r)} ||e^{t Lap} a||_r`` over a geometric time grid."""
    if times is None:
        L = a.grid.L
        times = np.geomspace(1e-3, 0.05 * (L / (2 * math.pi)) ** 2, 60)
    if not np.any(a.coeffs):
        return 0.0
    return trajectory_norm(heat_flow_trajectory(a, times), "X_r", r).value


def smallness_check(a: VectorField, chi: ChiProfile, r: float = 4.0, times=None) -> SmallnessReport:
    n = a.grid.n
    if not r > n:
        raise ValueError(f"need r > n, got r={r}")
    zero = not np.any(a.coeffs)
    hm1 = 0.0 if zero else hminus1_norm(a).norm
    bp = 0.0 if zero else besov_proxy(a, r, times)
    y = chi.y_norm(r)
    alt = chi.lebesgue_norm(alternative_exponent(n))
    cor = corollary_products(hm1, bp, chi.R, chi.Rprime, n, r)
    return SmallnessReport(bp, hm1, y, alt, bp + hm1 ** 2 * y, hm1 * alt, cor, r, n)


# --- the iteration ------------------------------------------------------

@dataclass
class ControlState:
    m: int
    cbar_mode: str
    hminus1_sq: float
    energy: list[EnergyMatrix] = field(default_factory=list)
    coeffs: list[np.ndarray] = field(default_factory=list)  # forcing coefficients used at iteration m
    delta: list[float] = field(default_factory=list)  # ||c^(m) - c^(m-1)||_max, m >= 1
    converged: bool = False
    tol: float = 1e-6

    @property
    def coefficients(self) -> np.ndarray:
        return self.coeffs[-1]

    @property
    def sigma(self) -> np.ndarray:
        return self.coefficients / self.hminus1_sq if self.hminus1_sq > 0 else np.zeros_like(self.coefficients)

    @property
    def sigma_max(self) -> float:
        return float(np.abs(self.sigma).max())

    @property
    def contraction_ratios(self) -> list[float]:
        d = self.delta
        return [d[i] / d[i - 1] if d[i - 1] > 0 else math.nan for i in range(1, len(d))]

    @property
    def residual_matrix(self) -> np.ndarray:
        """``W = int_0^inf int (u (x) u - f)`` of the last solved flow."""
        return self.energy[-1].c - self.coeffs[-1]

    def residual_anisotropy(self) -> float:
        """``||W - (tr W / n) I||_max / (tr W / n)``."""
        W = self.residual_matrix
        s = np.trace(W) / W.shape[0]
        return float(np.abs(W - s * np.eye(W.shape[0])).max() / abs(s)) if s != 0 else math.inf

    def monotone_after_onset(self) -> bool:
        """Once the update size starts decreasing it keeps decreasing."""
        d = self.delta
        started = False
        for i in range(1, len(d)):
            if d[i] < d[i - 1]:
                started = True
            elif started and d[i] > 0:
                return False
        return True

    def history_rows(self) -> list[list]:
        n = self.coeffs[0].shape[0]
        rows = []
        ratios = [math.nan] + [math.nan] + self.contraction_ratios
        for m, e in enumerate(self.energy):
            c = e.c
            row = [m] + [c[k, k] for k in range(n)] + [c[k, l] for k in range(n) for l in range(k + 1, n)]
            sig = self.coeffs[m] / self.hminus1_sq if self.hminus1_sq > 0 else 0 * self.coeffs[m]
            row += [e.cbar, self.delta[m - 1] if m >= 1 else math.nan, ratios[m], float(np.abs(sig).max())]
            rows.append(row)
        return rows

    def history_header(self) -> list[str]:
        n = self.coeffs[0].shape[0]
        cols = ["m"] + [f"c{k + 1}{k + 1}" for k in range(n)]
        cols += [f"c{k + 1}{l + 1}" for k in range(n) for l in range(k + 1, n)]
        return cols + ["cbar", "delta_max", "contraction_ratio", "sigma_max"]


def run_control(a: VectorField, chi: ChiProfile, config: SolverConfig, tol: float = 1e-6,
                max_iter: int = 40, cbar_mode: str = "mean", cbar_const: float | None = None,
                thresholds: dict[str, float] | None = None, override_smallness: bool = False,
                r: float = 4.0, tail: bool = True, callback=None) -> tuple[ControlState, Trajectory]:
    """Iterate ``f^(m)`` until ``||c^(m) - c^(m-1)||_max <= tol * |cbar^(m)|``.

    Raises :class:`SmallnessError` when a configured threshold is exceeded
    (unless overridden, which only logs) and :class:`ControlDivergence` when
    ``max_iter`` iterations do not converge. ``config.forcing`` is ignored.
    """
    if thresholds:
        rep = smallness_check(a, chi, r)
        bad = rep.exceeded(thresholds)
        if bad:
            msg = ", ".join(f"{k}={v:.4g} >= {th:.4g}" for k, (v, th) in bad.items())
            if not override_smallness:
                raise SmallnessError(f"smallness thresholds exceeded: {msg}", rep)
            log.warning("smallness thresholds exceeded (override active): %s", msg)
    n = a.grid.n
    hm1 = hminus1_norm(a).norm if np.any(a.coeffs) else 0.0
    state = ControlState(0, cbar_mode, hm1 ** 2, tol=tol)
    coeff = np.zeros((n, n))
    traj = None
    for m in range(max_iter + 1):
        forcing = Forcing(chi, coeff) if np.any(coeff) else None
        cfg = dataclasses.replace(config, forcing=forcing)
        traj = integrate(cfg, a, check_picard=bool(cfg.picard_check_times))
        e = energy_matrix(traj, tail=tail)
        state.m = m
        state.energy.append(e)
        state.coeffs.append(coeff)
        if m >= 1:
            d = float(np.abs(e.c - state.energy[-2].c).max())
            state.delta.append(d)
            scale = abs(cbar_value(e.c, cbar_mode, cbar_const)) if cbar_mode != "zero" else abs(e.cbar)
            if callback is not None:
                callback(state)
            if d <= tol * scale:
                state.converged = True
                break
        elif callback is not None:
            callback(state)
        coeff = forcing_update(e.c, chi, cbar_mode, cbar_const)
    if not state.converged:
        raise ControlDivergence(f"no convergence in {max_iter} iterations "
                                f"(last change {state.delta[-1] if state.delta else math.nan:.3e})", state)
    return state, traj
