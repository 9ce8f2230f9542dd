"""Divergence-free, mean-zero, well-localized initial velocities.

Every kind is built from the exact Fourier transform of a Gaussian stream
function (2D: ``a = curl psi``; 3D: ``a = curl (psi e_3)``), sampled on the
lattice, so that the low-frequency behaviour of ``a_hat`` is known exactly:

``curl_gaussian``   ``psi = G``; ``a_hat ~ |xi|`` at the origin.
``symmetric``       an offset vortex dipole averaged over the rotation group
                    of the square (cube in 3D); the energy matrix is scalar.
``dipole``          ``psi = d_e G``; a vortex dipole with a strongly
                    anisotropic energy matrix, ``a_hat ~ |xi|^2``.
``high_ir_decay``   ``psi = d_e d_e G``; ``a_hat ~ |xi|^3`` and ``a`` is odd,
                    a parity the Navier-Stokes flow preserves exactly.

``amplitude`` is the maximum of ``|a|`` over the grid.
"""
from __future__ import annotations

import itertools
import math

import numpy as np

from .grid import Grid, VectorField
from .operators import project_coeffs

KINDS = ("curl_gaussian", "symmetric", "dipole", "high_ir_decay")

DEFAULT_WIDTH = {"curl_gaussian": 1.0, "symmetric": 2.0, "dipole": 2.0, "high_ir_decay": 2.0}


def _gaussian_hat(grid: Grid, width: float, center=None) -> np.ndarray:
    """Lattice samples of the transform of ``exp(-|x - c|^2 / (2 width^2))``."""
    g = (2 * math.pi * width ** 2) ** (grid.n / 2) * np.exp(-0.5 * width ** 2 * grid.k2)
    if center is not None:
        phase = sum(k * c for k, c in zip(grid.wavevector, center))
        g = g * np.exp(-1j * phase)
    return g


def _curl_coeffs(grid: Grid, psi_hat: np.ndarray) -> np.ndarray:
    k = grid.wavevector
    if grid.n == 2:
        comps = [-1j * k[1] * psi_hat, 1j * k[0] * psi_hat]
    else:
        comps = [1j * k[1] * psi_hat, -1j * k[0] * psi_hat, np.zeros_like(psi_hat)]
    return np.stack([np.broadcast_to(c, grid.spectral_shape) for c in comps])


def _direction(n: int, angle: float) -> np.ndarray:
    e = np.zeros(n)
    e[0], e[1] = math.cos(angle), math.sin(angle)
    return e


def rotation_group(n: int) -> list[np.ndarray]:
    """Proper rotations mapping the lattice to itself (signed permutations, det +1)."""
    out = []
    for perm in itertools.permutations(range(n)):
        for signs in itertools.product((1, -1), repeat=n):
            g = np.zeros((n, n), dtype=int)
            for i, (p, s) in enumerate(zip(perm, signs)):
                g[i, p] = s
            if round(np.linalg.det(g)) == 1:
                out.append(g)
    return out


def apply_rotation(values: np.ndarray, g: np.ndarray) -> np.ndarray:
    """``(g v)(x) = g v(g^T x)`` on physical vector values, as an index permutation."""
    n = g.shape[0]
    N = values.shape[-1]
    idx = np.indices((N,) * n)
    src = np.einsum("ji,j...->i...", g, idx) % N
    moved = values[(slice(None),) + tuple(src)]
    return np.einsum("ij,j...->i...", g, moved)


def symmetrize(grid: Grid, values: np.ndarray) -> np.ndarray:
    group = rotation_group(grid.n)
    acc = np.zeros_like(values)
    for g in group:
        acc += apply_rotation(values, g)
    return acc / len(group)


def make_initial_data(kind: str, amplitude: float, grid: Grid, width: float | None = None,
                      angle: float = math.pi / 6, offset: float | None = None) -> VectorField:
    if kind not in KINDS:
        raise ValueError(f"unknown initial data kind {kind!r}; expected one of {KINDS}")
    if not amplitude > 0:
        raise ValueError(f"amplitude must be positive, got {amplitude}")
    width = DEFAULT_WIDTH[kind] if width is None else float(width)
    e = _direction(grid.n, angle)
    xi_e = sum(ei * k for ei, k in zip(e, grid.wavevector))

    if kind == "curl_gaussian":
        psi = _gaussian_hat(grid, width)
    elif kind == "dipole":
        psi = 1j * xi_e * _gaussian_hat(grid, width)
    elif kind == "high_ir_decay":
        psi = -(xi_e ** 2) * _gaussian_hat(grid, width)
    else:
        d = 2.0 * width if offset is None else float(offset)
        center = d * _direction(grid.n, angle)
        psi = 1j * xi_e * _gaussian_hat(grid, width, center)

    coeffs = _curl_coeffs(grid, psi) / grid.cell_volume
    values = grid.ifft(coeffs)
    if kind == "symmetric":
        values = symmetrize(grid, values)
    coeffs = grid.fft(values)
    coeffs[(slice(None),) + (0,) * grid.n] = 0.0
    coeffs = project_coeffs(grid, coeffs)
    peak = np.sqrt(np.sum(grid.ifft(coeffs) ** 2, axis=0)).max()
    return VectorField(grid, coeffs * (amplitude / peak), divergence_free=True)


def taylor_green(grid: Grid, amplitude: float = 1.0, wavenumber: float = 1.0,
                 perturbation: float = 0.0) -> VectorField:
    """``u = A (sin kx cos ky, -cos kx sin ky)`` in the first two components.

    Unperturbed, the nonlinearity is a pure gradient, so the exact solution
    is ``u(t) = exp(-2 k^2 t) u(0)``. ``perturbation > 0`` adds the
    stream-function mode ``eps sin(2kx) sin(ky)``, whose interaction with the
    base flow is not a gradient, to exercise the nonlinear term.
    """
    k = float(wavenumber)
    m = k * grid.L / (2 * math.pi)
    if abs(m - round(m)) > 1e-9:
        raise ValueError(f"wavenumber {k} is not a lattice wavenumber of the box")
    x = grid.coords()
    psi = -amplitude * np.sin(k * x[0]) * np.sin(k * x[1]) / k
    if perturbation:
        psi = psi + perturbation * amplitude * np.sin(2 * k * x[0]) * np.sin(k * x[1]) / k
    coeffs = np.zeros((grid.n,) + grid.spectral_shape, dtype=complex)
    coeffs[:2] = _curl_coeffs(grid, grid.fft(psi))[:2]
    return VectorField(grid, project_coeffs(grid, coeffs), divergence_free=True)


def random_perturbation(grid: Grid, amplitude: float, rng: np.random.Generator,
                        envelope: float = 4.0, smoothing: float = 1.0) -> VectorField:
    """Seeded divergence-free perturbation: curl of Gaussian-windowed, smoothed white noise.

    ``amplitude`` is the maximum of ``|u|``; the window keeps the field
    localized (width ``envelope``) so large-time behaviour is unaffected in kind.
    """
    x = grid.coords()
    r2 = np.sum(x ** 2, axis=0)
    psi = rng.standard_normal(grid.shape) * np.exp(-0.5 * r2 / envelope ** 2)
    psi_hat = grid.fft(psi) * np.exp(-0.5 * smoothing ** 2 * grid.k2)
    coeffs = project_coeffs(grid, _curl_coeffs(grid, psi_hat))
    coeffs[(slice(None),) + (0,) * grid.n] = 0.0
    peak = np.sqrt(np.sum(grid.ifft(coeffs) ** 2, axis=0)).max()
    if not peak > 0:
        return VectorField.zeros(grid)
    return VectorField(grid, coeffs * (amplitude / peak), divergence_free=True)
