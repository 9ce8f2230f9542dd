"""Linear and bilinear spectral operators of the mild formulation."""
from __future__ import annotations

import dataclasses

import numpy as np

from .grid import Grid, SymTensorField, VectorField, sym_pairs


def heat_semigroup(v, t: float):
    """Apply ``exp(t Laplacian)``; works for scalar, vector and tensor fields."""
    if t < 0:
        raise ValueError(f"heat semigroup needs t >= 0, got {t}")
    if t == 0:
        return dataclasses.replace(v, coeffs=v.coeffs.copy())
    return dataclasses.replace(v, coeffs=v.coeffs * np.exp(-t * v.grid.k2))


def project_coeffs(grid: Grid, w: np.ndarray) -> np.ndarray:
    """Leray projection ``I - k k^T/|k|^2`` of raw vector coefficients."""
    kdotw = sum(k * c for k, c in zip(grid.wavevector, w))
    kdotw = kdotw * grid.inv_k2
    out = np.stack([c - k * kdotw for k, c in zip(grid.wavevector, w)])
    out[:, grid.nyquist_mask] = 0.0
    return out


def leray_project(v: VectorField) -> VectorField:
    return VectorField(v.grid, project_coeffs(v.grid, v.coeffs), divergence_free=True)


def tensor_divergence_coeffs(grid: Grid, t: np.ndarray) -> np.ndarray:
    """``(div T)_j = sum_l i k_l T_jl`` for symmetric-storage coefficients."""
    n = grid.n
    idx = {p: i for i, p in enumerate(sym_pairs(n))}
    k = grid.wavevector
    out = []
    for j in range(n):
        acc = 0
        for l in range(n):
            acc = acc + 1j * k[l] * t[idx[(min(j, l), max(j, l))]]
        out.append(acc)
    out = np.stack(out)
    out[:, grid.nyquist_mask] = 0.0
    return out


def divergence_of_tensor(f: SymTensorField) -> VectorField:
    return VectorField(f.grid, tensor_divergence_coeffs(f.grid, f.coeffs))


def bilinear_term(u: VectorField, v: VectorField) -> VectorField:
    """``P div(u (x) v)`` with the product truncated by the 2/3 rule.

    ``(u (x) v)_{jl} = u_j v_l`` and the divergence contracts ``l``. With
    ``u is v`` only the symmetric entries are formed.
    """
    u.grid.check_same(v.grid)
    grid = u.grid
    n = grid.n
    up = grid.ifft(u.coeffs)
    k = grid.wavevector
    if v is u:
        prod = np.stack([up[a] * up[b] for a, b in sym_pairs(n)])
        ph = grid.fft(prod) * grid.dealias_mask
        div = tensor_divergence_coeffs(grid, ph)
    else:
        vp = grid.ifft(v.coeffs)
        div = []
        for j in range(n):
            ph = grid.fft(np.stack([up[j] * vp[l] for l in range(n)])) * grid.dealias_mask
            div.append(sum(1j * k[l] * ph[l] for l in range(n)))
        div = np.stack(div)
    return VectorField(grid, project_coeffs(grid, div), divergence_free=True)


def gradient_norm_sq(grid: Grid, coeffs: np.ndarray) -> float:
    """``||grad u||_2^2`` summed over components."""
    return float(sum(grid.inner(c, c) for c in coeffs * np.sqrt(grid.k2)))
