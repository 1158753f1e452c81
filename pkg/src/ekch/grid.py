"""Uniform periodic grids on the flat torus and Fourier-collocation operators.

Scalar fields are plain ``ndarray`` objects of shape ``grid.shape``; vector
fields carry a leading component axis, shape ``(grid.dim,) + grid.shape``.
All operators are pure: inputs are never written to.

Nyquist convention: for even ``n`` the Nyquist wavenumber of an axis is
treated as unresolved, so every derivative symbol (first *and* second order)
vanishes there. This keeps ``divergence(gradient(f)) == laplacian(f)`` exact
for arbitrary grid data.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np


class NumericInputError(ValueError):
    """Raised when a field contains NaN or Inf."""


class GridMismatchError(ValueError):
    """Raised when fields or kernels live on different grids."""


IMAG_RESIDUE_TOL = 1e-12


@dataclass(frozen=True)
class TorusGrid:
    """The periodic cube ``[0, L)^d`` sampled with ``n`` points per axis."""

    dim: int
    n: int
    L: float = 1.0

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ValueError(f"dim must be 1 or 2, got {self.dim}")
        if self.n < 8:
            raise ValueError(f"n must be >= 8, got {self.n}")
        if not self.L > 0:
            raise ValueError(f"L must be positive, got {self.L}")

    @property
    def spacing(self) -> float:
        return self.L / self.n

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n,) * self.dim

    @property
    def size(self) -> int:
        return self.n**self.dim

    @property
    def volume(self) -> float:
        return self.L**self.dim

    @property
    def cell_volume(self) -> float:
        return self.spacing**self.dim

    def wrap(self, index):
        """Periodic indexing: ``i`` and ``i + n`` address the same point."""
        return np.mod(index, self.n)

    @cached_property
    def coords(self) -> tuple[np.ndarray, ...]:
        x = np.arange(self.n) * self.spacing
        return tuple(np.meshgrid(*([x] * self.dim), indexing="ij"))

    @cached_property
    def offsets(self) -> tuple[np.ndarray, ...]:
        """Minimal-image offsets ``x_j`` in FFT order (offset 0 at index 0)."""
        j = np.fft.fftfreq(self.n, d=1.0 / self.n)
        x = j * self.spacing
        return tuple(np.meshgrid(*([x] * self.dim), indexing="ij"))

    # -- spectral layout -------------------------------------------------
    @property
    def spectral_shape(self) -> tuple[int, ...]:
        return self.shape[:-1] + (self.n // 2 + 1,)

    @cached_property
    def mode_indices(self) -> tuple[np.ndarray, ...]:
        """Signed integer mode numbers for the ``rfftn`` layout."""
        full = np.fft.fftfreq(self.n, d=1.0 / self.n).astype(int)
        half = np.arange(self.n // 2 + 1)
        axes = [full] * (self.dim - 1) + [half]
        return tuple(np.meshgrid(*axes, indexing="ij"))

    @cached_property
    def wavenumbers(self) -> tuple[np.ndarray, ...]:
        scale = 2.0 * np.pi / self.L
        return tuple(scale * m.astype(float) for m in self.mode_indices)

    @cached_property
    def resolved(self) -> tuple[np.ndarray, ...]:
        """Per-axis masks, False on the Nyquist plane of that axis."""
        if self.n % 2:
            return tuple(np.ones(self.spectral_shape, dtype=bool) for _ in range(self.dim))
        return tuple(np.abs(m) != self.n // 2 for m in self.mode_indices)

    @cached_property
    def derivative_symbols(self) -> tuple[np.ndarray, ...]:
        return tuple(1j * k * r for k, r in zip(self.wavenumbers, self.resolved))

    @cached_property
    def laplacian_symbol(self) -> np.ndarray:
        return -sum(k**2 * r for k, r in zip(self.wavenumbers, self.resolved))

    @cached_property
    def ksq(self) -> np.ndarray:
        """Plain ``|k|^2`` including Nyquist planes."""
        return sum(k**2 for k in self.wavenumbers)

    def dealias_mask(self) -> np.ndarray:
        """2/3-rule mask; solvers opt in explicitly."""
        cutoff = self.n / 3.0
        return np.all([np.abs(m) < cutoff for m in self.mode_indices], axis=0)

    # -- transforms ------------------------------------------------------
    def fft(self, f: np.ndarray) -> np.ndarray:
        return np.fft.rfftn(f, axes=tuple(range(-self.dim, 0)))

    def ifft(self, fh: np.ndarray) -> np.ndarray:
        _check_self_conjugate(fh, self)
        return np.fft.irfftn(fh, s=self.shape, axes=tuple(range(-self.dim, 0)))

    # -- field helpers ---------------------------------------------------
    def zeros(self) -> np.ndarray:
        return np.zeros(self.shape)

    def check_scalar(self, f, name: str = "field") -> np.ndarray:
        f = np.asarray(f, dtype=float)
        if f.shape != self.shape:
            raise GridMismatchError(f"{name} has shape {f.shape}, grid expects {self.shape}")
        if not np.all(np.isfinite(f)):
            raise NumericInputError(f"{name} contains non-finite values")
        return f

    def check_vector(self, v, name: str = "vector field") -> np.ndarray:
        v = np.asarray(v, dtype=float)
        if v.shape != (self.dim,) + self.shape:
            raise GridMismatchError(
                f"{name} has shape {v.shape}, grid expects {(self.dim,) + self.shape}"
            )
        if not np.all(np.isfinite(v)):
            raise NumericInputError(f"{name} contains non-finite values")
        return v


def _check_self_conjugate(fh: np.ndarray, grid: TorusGrid) -> None:
    # DC (and Nyquist) bins of the last axis must be real for a real field;
    # a residue there means a symbol broke Hermitian symmetry.
    idx = [0, grid.n // 2] if grid.n % 2 == 0 else [0]
    edge = fh[..., idx]
    scale = max(np.max(np.abs(fh)), 1.0) if fh.size else 1.0
    if grid.dim == 1:
        residue = np.max(np.abs(edge.imag))
    else:
        # along axis 0 the edge planes must be Hermitian, not real
        flipped = np.conj(edge[np.mod(-np.arange(grid.n), grid.n)])
        residue = np.max(np.abs(edge - flipped)) / 2.0
    if residue > IMAG_RESIDUE_TOL * scale:
        raise NumericInputError(f"inverse transform would drop imaginary residue {residue:.3e}")


# -- differential operators ---------------------------------------------
def gradient(grid: TorusGrid, f) -> np.ndarray:
    f = grid.check_scalar(f)
    fh = grid.fft(f)
    return np.stack([grid.ifft(s * fh) for s in grid.derivative_symbols])


def divergence(grid: TorusGrid, v) -> np.ndarray:
    v = grid.check_vector(v)
    acc = sum(s * grid.fft(c) for s, c in zip(grid.derivative_symbols, v))
    return grid.ifft(acc)


def laplacian(grid: TorusGrid, f) -> np.ndarray:
    f = grid.check_scalar(f)
    return grid.ifft(grid.laplacian_symbol * grid.fft(f))


def circular_convolve(grid: TorusGrid, f, kern) -> np.ndarray:
    """Periodic convolution ``kern * f`` evaluated through the DFT."""
    f = grid.check_scalar(f)
    if kern.grid != grid:
        raise GridMismatchError("kernel was sampled on a different grid")
    return grid.ifft(kern.hat * grid.fft(f))


# -- quadrature and norms -----------------------------------------------
def integrate(grid: TorusGrid, f) -> float:
    return float(np.sum(f, axis=tuple(range(-grid.dim, 0))) * grid.cell_volume)


def mean(grid: TorusGrid, f) -> float:
    return integrate(grid, f) / grid.volume


def norm_l1(grid: TorusGrid, f) -> float:
    return integrate(grid, np.abs(f))


def norm_l2(grid: TorusGrid, f) -> float:
    return float(np.sqrt(integrate(grid, np.square(f))))


def norm_linf(grid: TorusGrid, f) -> float:
    return float(np.max(np.abs(f)))


def vector_norm_l2(grid: TorusGrid, v) -> float:
    return float(np.sqrt(integrate(grid, np.sum(np.square(v), axis=0))))


def parseval_l2_sq(grid: TorusGrid, f) -> float:
    """``||f||_2^2`` from the Fourier coefficients (rfft layout weights)."""
    fh = np.fft.fftn(np.asarray(f, dtype=float))
    return float(np.sum(np.abs(fh) ** 2) * grid.cell_volume / grid.size)


# -- snapshot files ------------------------------------------------------
def write_snapshot(path, grid: TorusGrid, f, t: float = 0.0) -> None:
    """Plain-text snapshot: header ``torus d n L t`` then ``n^d`` values."""
    f = grid.check_scalar(f)
    lines = [f"torus {grid.dim} {grid.n} {grid.L!r} {float(t)!r}"]
    lines.extend(repr(float(x)) for x in f.ravel(order="C"))
    Path(path).write_text("\n".join(lines) + "\n")


def read_snapshot(path) -> tuple[TorusGrid, np.ndarray, float]:
    tokens = Path(path).read_text().split()
    if not tokens or tokens[0] != "torus":
        raise ValueError(f"{path}: not a torus snapshot")
    d, n, L, t = int(tokens[1]), int(tokens[2]), float(tokens[3]), float(tokens[4])
    grid = TorusGrid(d, n, L)
    values = np.array([float(x) for x in tokens[5:]])
    if values.size != grid.size:
        raise ValueError(f"{path}: expected {grid.size} values, found {values.size}")
    return grid, values.reshape(grid.shape), t
