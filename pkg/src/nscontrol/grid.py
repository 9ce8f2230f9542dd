"""Periodic box discretization and Fourier-coefficient field containers.

Fields are stored as real-to-complex FFT coefficients (``scipy.fft.rfftn``
layout, unnormalized forward transform) over the last ``n`` axes. Physical
coordinates use the FFT-natural ordering wrapped into ``[-L/2, L/2)`` so that
a field centred at the origin sits on index 0 and the map ``x -> -x`` is an
exact index permutation.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np
import scipy.fft as sfft

_WORKERS = 1


def set_threads(k: int) -> None:
    """Set the FFT worker count. Results do not depend on it."""
    global _WORKERS
    if k < 1:
        raise ValueError("thread count must be >= 1")
    _WORKERS = int(k)


class GridMismatchError(ValueError):
    pass


@dataclass(frozen=True)
class Grid:
    n: int
    N: int
    L: float

    def __post_init__(self):
        if self.n not in (2, 3):
            raise ValueError(f"dimension must be 2 or 3, got {self.n}")
        if self.N < 16 or self.N & (self.N - 1):
            raise ValueError(f"N must be a power of two >= 16, got {self.N}")
        if not self.L > 0:
            raise ValueError(f"box length must be positive, got {self.L}")
        object.__setattr__(self, "L", float(self.L))

    @property
    def dx(self) -> float:
        return self.L / self.N

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.N,) * self.n

    @property
    def spectral_shape(self) -> tuple[int, ...]:
        return (self.N,) * (self.n - 1) + (self.N // 2 + 1,)

    @property
    def axes(self) -> tuple[int, ...]:
        return tuple(range(-self.n, 0))

    @property
    def cell_volume(self) -> float:
        return self.dx ** self.n

    @property
    def volume(self) -> float:
        return self.L ** self.n

    @property
    def kmin(self) -> float:
        return 2 * np.pi / self.L

    @cached_property
    def mode_index(self) -> tuple[np.ndarray, ...]:
        """Integer mode numbers per axis, broadcastable to ``spectral_shape``."""
        full = np.fft.fftfreq(self.N, 1.0 / self.N)
        half = np.fft.rfftfreq(self.N, 1.0 / self.N)
        out = []
        for ax in range(self.n):
            vals = half if ax == self.n - 1 else full
            shp = [1] * self.n
            shp[ax] = vals.size
            out.append(vals.reshape(shp))
        return tuple(out)

    @cached_property
    def wavevector(self) -> tuple[np.ndarray, ...]:
        return tuple(self.kmin * m for m in self.mode_index)

    @cached_property
    def k2(self) -> np.ndarray:
        return sum(k ** 2 for k in np.broadcast_arrays(*self.wavevector))

    @cached_property
    def inv_k2(self) -> np.ndarray:
        k2 = self.k2
        out = np.zeros_like(k2)
        np.divide(1.0, k2, out=out, where=k2 > 0)
        return out

    @cached_property
    def nyquist_mask(self) -> np.ndarray:
        """True on modes touching the Nyquist frequency of any axis."""
        mask = np.zeros(self.spectral_shape, dtype=bool)
        for m in self.mode_index:
            mask |= np.broadcast_to(np.abs(m) == self.N // 2, self.spectral_shape)
        return mask

    @cached_property
    def dealias_mask(self) -> np.ndarray:
        """2/3-rule retention mask: keep modes with every ``|m_i| <= N/3``."""
        keep = np.ones(self.spectral_shape, dtype=bool)
        for m in self.mode_index:
            keep &= np.broadcast_to(np.abs(m) <= self.N / 3.0, self.spectral_shape)
        return keep

    @cached_property
    def parseval_weight(self) -> np.ndarray:
        """Multiplicity of each stored rfft mode in the full spectrum."""
        w = np.full(self.N // 2 + 1, 2.0)
        w[0] = 1.0
        w[-1] = 1.0
        return w.reshape((1,) * (self.n - 1) + (-1,))

    def coords(self) -> np.ndarray:
        """Physical coordinates, shape ``(n, N, ..., N)``."""
        x1 = self.dx * np.fft.fftfreq(self.N, 1.0 / self.N)
        return np.stack(np.meshgrid(*([x1] * self.n), indexing="ij"))

    def fft(self, values: np.ndarray) -> np.ndarray:
        c = sfft.rfftn(values, axes=self.axes, workers=_WORKERS)
        c[..., self.nyquist_mask] = 0.0
        return c

    def ifft(self, coeffs: np.ndarray) -> np.ndarray:
        return sfft.irfftn(coeffs, s=self.shape, axes=self.axes, workers=_WORKERS)

    def inner(self, c1: np.ndarray, c2: np.ndarray) -> np.ndarray:
        """Spatial integral of the product of two real fields from their coefficients."""
        s = (c1 * np.conj(c2)).real * self.parseval_weight
        return s.sum(axis=self.axes) * self.cell_volume / self.N ** self.n

    def check_same(self, other: "Grid") -> None:
        if self != other:
            raise GridMismatchError(f"grid mismatch: {self} vs {other}")


def _hermitian_defect(grid: Grid, coeffs: np.ndarray) -> float:
    roundtrip = grid.fft(grid.ifft(coeffs))
    scale = max(np.abs(coeffs).max(initial=0.0), 1e-300)
    return float(np.abs(roundtrip - np.where(grid.nyquist_mask, 0, coeffs)).max(initial=0.0) / scale)


@dataclass
class SpectralField:
    grid: Grid
    coeffs: np.ndarray

    @classmethod
    def from_physical(cls, grid: Grid, values: np.ndarray) -> "SpectralField":
        return cls(grid, grid.fft(np.asarray(values, dtype=float)))

    @classmethod
    def zeros(cls, grid: Grid) -> "SpectralField":
        return cls(grid, np.zeros(grid.spectral_shape, dtype=complex))

    def physical(self) -> np.ndarray:
        return self.grid.ifft(self.coeffs)

    def mean(self) -> float:
        return float(self.coeffs[(0,) * self.grid.n].real) / self.grid.N ** self.grid.n

    def integral(self) -> float:
        return float(self.coeffs[(0,) * self.grid.n].real) * self.grid.cell_volume

    def hermitian_defect(self) -> float:
        return _hermitian_defect(self.grid, self.coeffs)


@dataclass
class VectorField:
    grid: Grid
    coeffs: np.ndarray
    divergence_free: bool = False

    def __post_init__(self):
        if self.coeffs.shape != (self.grid.n,) + self.grid.spectral_shape:
            raise ValueError(f"bad coefficient shape {self.coeffs.shape} for {self.grid}")

    @classmethod
    def from_physical(cls, grid: Grid, values: np.ndarray) -> "VectorField":
        return cls(grid, grid.fft(np.asarray(values, dtype=float)))

    @classmethod
    def zeros(cls, grid: Grid) -> "VectorField":
        return cls(grid, np.zeros((grid.n,) + grid.spectral_shape, dtype=complex), True)

    @property
    def components(self) -> list[SpectralField]:
        return [SpectralField(self.grid, c) for c in self.coeffs]

    def physical(self) -> np.ndarray:
        return self.grid.ifft(self.coeffs)

    def copy(self) -> "VectorField":
        return VectorField(self.grid, self.coeffs.copy(), self.divergence_free)

    def divergence_defect(self) -> float:
        """``max_k |k . u_hat(k)| / max_k |u_hat(k)|``."""
        div = sum(k * c for k, c in zip(self.grid.wavevector, self.coeffs))
        scale = np.abs(self.coeffs).max(initial=0.0)
        if scale == 0:
            return 0.0
        return float(np.abs(div).max() / scale)

    def hermitian_defect(self) -> float:
        return _hermitian_defect(self.grid, self.coeffs)


def sym_pairs(n: int) -> list[tuple[int, int]]:
    return [(k, l) for k in range(n) for l in range(k, n)]


@dataclass
class SymTensorField:
    """Symmetric tensor field; ``coeffs[i]`` holds entry ``sym_pairs(n)[i]``."""

    grid: Grid
    coeffs: np.ndarray

    def __post_init__(self):
        m = self.grid.n * (self.grid.n + 1) // 2
        if self.coeffs.shape != (m,) + self.grid.spectral_shape:
            raise ValueError(f"bad coefficient shape {self.coeffs.shape} for {self.grid}")

    @classmethod
    def zeros(cls, grid: Grid) -> "SymTensorField":
        m = grid.n * (grid.n + 1) // 2
        return cls(grid, np.zeros((m,) + grid.spectral_shape, dtype=complex))

    @classmethod
    def from_matrix_profile(cls, matrix: np.ndarray, profile: SpectralField) -> "SymTensorField":
        """Tensor ``matrix * profile`` for a constant symmetric matrix."""
        matrix = np.asarray(matrix, dtype=float)
        pairs = sym_pairs(profile.grid.n)
        coeffs = np.stack([matrix[k, l] * profile.coeffs for k, l in pairs])
        return cls(profile.grid, coeffs)

    def entry(self, k: int, l: int) -> np.ndarray:
        k, l = min(k, l), max(k, l)
        return self.coeffs[sym_pairs(self.grid.n).index((k, l))]

    def integral_matrix(self) -> np.ndarray:
        n = self.grid.n
        out = np.zeros((n, n))
        for i, (k, l) in enumerate(sym_pairs(n)):
            out[k, l] = out[l, k] = self.coeffs[i][(0,) * n].real * self.grid.cell_volume
        return out


# --- checkpoint format ------------------------------------------------------
# 32-byte little-endian header: magic(8s) n(i4) N(i4) L(f8) ncomp(i4) pad(4x),
# followed by the rfft coefficients as complex64.
_MAGIC = b"NSFIELD1"
_HEADER = struct.Struct("<8siidi4x")


def save_field(path, fld) -> None:
    coeffs = np.asarray(fld.coeffs)
    ncomp = 1 if coeffs.ndim == fld.grid.n else coeffs.shape[0]
    g = fld.grid
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(_MAGIC, g.n, g.N, g.L, ncomp))
        fh.write(coeffs.astype("<c8").tobytes())


def load_field(path):
    data = Path(path).read_bytes()
    magic, n, N, L, ncomp = _HEADER.unpack_from(data)
    if magic != _MAGIC:
        raise ValueError(f"{path}: not a field checkpoint")
    grid = Grid(n, N, L)
    coeffs = np.frombuffer(data, dtype="<c8", offset=_HEADER.size).astype(complex)
    if ncomp == 1:
        return SpectralField(grid, coeffs.reshape(grid.spectral_shape))
    shape = (ncomp,) + grid.spectral_shape
    if ncomp == n:
        return VectorField(grid, coeffs.reshape(shape))
    return SymTensorField(grid, coeffs.reshape(shape))
