"""The Oseen-type kernel of ``exp(t Laplacian) P div``.

Component ``F_{kl,j}`` maps the tensor entry ``W_kl`` to velocity component
``j``. Its Fourier multiplier is ``i xi_l (delta_jk - xi_j xi_k/|xi|^2)
exp(-t|xi|^2)``; since the sources are symmetric tensors the default is the
average over ``(k, l)``. Summing the diagonal ``k = l`` gives exactly zero.

Two evaluation routes are provided: the periodized kernel on a grid (FFT)
and a closed form on the whole space built from the heat kernel ``g`` and
the radial potential ``E = (-Laplacian)^{-1} g``:
``F_{kl,j} = delta_jk d_l g + d_j d_k d_l E``.
"""
from __future__ import annotations

import math

import numpy as np
from scipy import optimize, special

from .grid import Grid, SpectralField


def oseen_multiplier(grid: Grid, k: int, l: int, j: int, symmetric: bool = True) -> np.ndarray:
    """Static (time-independent) part of the multiplier; homogeneous of degree one."""
    xi = grid.wavevector
    inv = grid.inv_k2

    def one(k, l):
        delta = 1.0 if j == k else 0.0
        return 1j * xi[l] * (delta - xi[j] * xi[k] * inv)

    m = one(k, l)
    if symmetric:
        m = 0.5 * (m + one(l, k))
    m = np.broadcast_to(m, grid.spectral_shape).copy()
    m[grid.nyquist_mask] = 0.0
    return m


def oseen_kernel_eval(grid: Grid, k: int, l: int, j: int, t: float,
                      symmetric: bool = True) -> SpectralField:
    """Periodized kernel ``F_{kl,j}(., t)`` on the grid."""
    if not t > 0:
        raise ValueError(f"kernel needs t > 0, got {t}")
    m = oseen_multiplier(grid, k, l, j, symmetric)
    return SpectralField(grid, m * np.exp(-t * grid.k2) / grid.cell_volume)


def trace_pairing_coeffs(grid: Grid, W: np.ndarray, t: float) -> np.ndarray:
    """Coefficients of ``sum_{k,l} F_{kl,j}(., t) W_kl`` for a constant matrix ``W``."""
    n = grid.n
    out = np.zeros((n,) + grid.spectral_shape, dtype=complex)
    for j in range(n):
        for k in range(n):
            for l in range(n):
                if W[k, l] != 0:
                    out[j] += W[k, l] * oseen_kernel_eval(grid, k, l, j, t, symmetric=False).coeffs
    return out


# --- closed form on R^n -----------------------------------------------------

def _phi_derivs(u: np.ndarray, s: float):
    """``phi(u) = P(s, u)/u^s`` and its first two derivatives (P regularized)."""
    u = np.asarray(u, dtype=float)
    g = math.gamma(s)
    small = u < 2.0
    us = np.where(small, u, 0.0)
    p0 = np.zeros_like(u)
    p1 = np.zeros_like(u)
    p2 = np.zeros_like(u)
    for m in range(60):
        c = (-1.0) ** m / (math.factorial(m) * (s + m) * g)
        p0 += c * us ** m
        if m >= 1:
            p1 += c * m * us ** (m - 1)
        if m >= 2:
            p2 += c * m * (m - 1) * us ** (m - 2)
    ul = np.where(small, 1.0, u)
    e = np.exp(-ul) / g
    q0 = special.gammainc(s, ul) / ul ** s
    q1 = e / ul - s * q0 / ul
    q2 = -e / ul - e / ul ** 2 - s * q1 / ul + s * q0 / ul ** 2
    return (np.where(small, p0, q0), np.where(small, p1, q1), np.where(small, p2, q2))


def oseen_kernel_pointwise(x: np.ndarray, t: float, k: int, l: int, j: int,
                           symmetric: bool = True) -> np.ndarray:
    """Whole-space kernel at points ``x`` (shape ``(n, ...)``)."""
    if not t > 0:
        raise ValueError(f"kernel needs t > 0, got {t}")
    x = np.asarray(x, dtype=float)
    n = x.shape[0]
    s = n / 2.0
    r2 = np.sum(x ** 2, axis=0)
    u = r2 / (4 * t)
    sphere = 2 * math.pi ** s / math.gamma(s)
    base = sphere * (4 * t) ** s
    _, d1, d2 = _phi_derivs(u, s)
    h2 = -d1 / (base * 2 * t)
    h3 = -d2 / (base * (2 * t) ** 2)
    g = np.exp(-u) / (4 * math.pi * t) ** s

    def delta(a, b):
        return 1.0 if a == b else 0.0

    third = (delta(j, k) * x[l] + delta(j, l) * x[k] + delta(k, l) * x[j]) * h2 + x[j] * x[k] * x[l] * h3
    if symmetric:
        gauss = 0.5 * (delta(j, k) * x[l] + delta(j, l) * x[k]) * (-g / (2 * t))
    else:
        gauss = delta(j, k) * x[l] * (-g / (2 * t))
    return gauss + third


def oseen_kernel_norm(t: float, alpha: float, k: int, l: int, j: int,
                      symmetric: bool = True, n_theta: int = 512) -> float:
    """``||F_{kl,j}(., t)||_alpha`` on R^2 by polar quadrature in absolute coordinates."""
    theta = np.linspace(0.0, 2 * math.pi, n_theta, endpoint=False)
    c, s = np.cos(theta), np.sin(theta)

    def ring(r):
        return oseen_kernel_pointwise(np.stack([r * c, r * s]), t, k, l, j, symmetric)

    if math.isinf(alpha):
        rs = math.sqrt(t) * np.geomspace(1e-2, 1e2, 300)
        vals = np.array([np.abs(ring(r)).max() for r in rs])
        i = int(vals.argmax())
        ti = float(theta[np.abs(ring(rs[i])).argmax()])

        def neg(p):
            return -abs(float(oseen_kernel_pointwise(
                np.array([[p[0] * math.cos(p[1])], [p[0] * math.sin(p[1])]]), t, k, l, j, symmetric)[0]))

        res = optimize.minimize(neg, [rs[i], ti], method="Nelder-Mead",
                                options={"xatol": 1e-12, "fatol": 1e-16, "maxiter": 4000})
        return max(-res.fun, vals.max())

    # Gauss-Legendre panels in log(r/sqrt t); the same relative nodes at every
    # t, plus the exact far-field tail where F is homogeneous of degree -n-1.
    scale = math.sqrt(t)
    nodes, weights = np.polynomial.legendre.leggauss(8)
    edges = np.arange(-12.0, 6.0 + 1e-12, 0.25)
    ys = (0.5 * (edges[1:] - edges[:-1])[:, None] * nodes[None, :]
          + 0.5 * (edges[1:] + edges[:-1])[:, None]).ravel()
    ws = (0.5 * (edges[1:] - edges[:-1])[:, None] * weights[None, :]).ravel()
    r = scale * np.exp(ys)
    vals = np.abs(oseen_kernel_pointwise(
        np.stack([r[:, None] * c[None, :], r[:, None] * s[None, :]]), t, k, l, j, symmetric)) ** alpha
    total = 2 * math.pi * float(np.sum(ws * r ** 2 * vals.mean(axis=1)))
    r_far = scale * math.exp(edges[-1])
    far = float(np.mean(np.abs(ring(r_far)) ** alpha))
    total += 2 * math.pi * far * r_far ** 2 / (3 * alpha - 2)
    return total ** (1.0 / alpha)
