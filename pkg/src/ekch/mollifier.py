"""Discrete radial mollifiers, the nonlocal operator B_eta and the Poincare constant."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate as _quad

from .grid import GridMismatchError, TorusGrid, circular_convolve, integrate


class ResolutionError(ValueError):
    """Kernel radius resolved by fewer than four cells."""


class SupportError(ValueError):
    """Kernel support would wrap around the torus."""


class SingularKernelError(ArithmeticError):
    """Some nonzero mode has kernel symbol equal to one; Poincare fails."""


MIN_CELLS_PER_RADIUS = 4.0


def quartic_profile(r):
    r = np.asarray(r, dtype=float)
    return np.where(r < 1.0, (1.0 - r**2) ** 2, 0.0)


def bump_profile(r):
    r = np.asarray(r, dtype=float)
    out = np.zeros_like(r)
    inside = r < 1.0
    out[inside] = np.exp(-1.0 / (1.0 - r[inside] ** 2))
    return out


PROFILES: dict[str, Callable] = {"quartic": quartic_profile, "bump": bump_profile}


@dataclass(frozen=True)
class CertifiedMoments:
    m0: float
    m1: tuple[float, ...]
    m2_diag: tuple[float, ...]
    m2_offdiag: float

    def as_dict(self) -> dict:
        return {
            "m0": self.m0,
            "m1": list(self.m1),
            "m2_diag": list(self.m2_diag),
            "m2_offdiag": self.m2_offdiag,
        }


@dataclass(frozen=True, eq=False)
class MollifierKernel:
    """Sampled ``omega_eta`` on a torus grid.

    ``values`` holds the kernel density at the minimal-image offsets in FFT
    order (offset zero at index 0); ``weights = values * dx^d`` sum to one.
    Moments are taken in the rescaled variable ``y = x / eta``.
    """

    grid: TorusGrid
    eta: float
    profile: str
    values: np.ndarray = field(repr=False)
    moments: CertifiedMoments
    diffusivity: float

    @property
    def weights(self) -> np.ndarray:
        return self.values * self.grid.cell_volume

    @property
    def hat(self) -> np.ndarray:
        # real part only: the sample set is symmetric so the symbol is real
        return self._hat

    @property
    def m2_axis(self) -> float:
        return float(np.mean(self.moments.m2_diag))

    @property
    def limit_diffusivity(self) -> float:
        """Coefficient ``c`` with ``B_eta -> -c * Laplacian`` as eta -> 0.

        Equals ``diffusivity`` in one dimension and ``diffusivity / d`` in
        general, because the per-axis second moment is ``2 D / d``.
        """
        return 0.5 * self.m2_axis

    def centered(self) -> np.ndarray:
        return np.fft.fftshift(self.values)

    def __post_init__(self):
        object.__setattr__(self, "_hat", self.grid.fft(self.weights).real.copy())


def _radial_offsets(grid: TorusGrid, eta: float) -> np.ndarray:
    return np.sqrt(sum(x**2 for x in grid.offsets)) / eta


def build_kernel(profile="quartic", eta: float = 0.1, grid: TorusGrid | None = None) -> MollifierKernel:
    """Sample a radial profile at grid offsets and certify its moments.

    ``profile`` is ``"quartic"``, ``"bump"`` or a callable of the rescaled
    radius ``r = |x| / eta`` (values outside ``r < 1`` are zeroed).
    """
    if grid is None:
        raise ValueError("build_kernel needs a grid")
    if eta < MIN_CELLS_PER_RADIUS * grid.spacing * (1 - 1e-12):
        raise ResolutionError(
            f"eta={eta} is resolved by {eta / grid.spacing:.2f} cells (< {MIN_CELLS_PER_RADIUS})"
        )
    if eta >= grid.L / 2:
        raise SupportError(f"eta={eta} >= L/2={grid.L / 2}; kernel support would wrap")
    if callable(profile):
        fn, name = profile, getattr(profile, "__name__", "custom")
    else:
        try:
            fn, name = PROFILES[profile], profile
        except KeyError:
            raise ValueError(f"unknown kernel profile {profile!r}") from None

    r = _radial_offsets(grid, eta)
    raw = np.where(r < 1.0, np.asarray(fn(r), dtype=float), 0.0)
    if np.any(raw < 0):
        raise ValueError("kernel profile must be nonnegative")
    # enforce exact point symmetry x -> -x of the sample set
    flip = tuple(np.mod(-np.arange(grid.n), grid.n) for _ in range(grid.dim))
    raw = 0.5 * (raw + raw[np.ix_(*flip)])
    total = raw.sum()
    if total <= 0:
        raise ResolutionError("kernel has no samples inside its support")
    w = raw / total

    y = [x / eta for x in grid.offsets]
    m0 = float(w.sum())
    m1 = tuple(float(np.sum(w * yi)) for yi in y)
    m2_diag = tuple(float(np.sum(w * yi * yi)) for yi in y)
    m2_off = float(np.sum(w * y[0] * y[1])) if grid.dim == 2 else 0.0
    moments = CertifiedMoments(m0, m1, m2_diag, m2_off)
    D = grid.dim * float(np.mean(m2_diag)) / 2.0
    return MollifierKernel(grid, float(eta), name, w / grid.cell_volume, moments, D)


def continuum_second_moment(profile="quartic", dim: int = 1) -> float:
    """Per-axis ``int y_1^2 omega(y) dy`` of the normalized profile (dense quadrature)."""
    fn = profile if callable(profile) else PROFILES[profile]
    g = lambda r: float(fn(np.array([r]))[0])
    if dim == 1:
        mass = 2 * _quad.quad(g, 0, 1, epsabs=1e-14, epsrel=1e-13)[0]
        m2 = 2 * _quad.quad(lambda r: r * r * g(r), 0, 1, epsabs=1e-14, epsrel=1e-13)[0]
        return m2 / mass
    mass = 2 * np.pi * _quad.quad(lambda r: r * g(r), 0, 1, epsabs=1e-14, epsrel=1e-13)[0]
    m2 = np.pi * _quad.quad(lambda r: r**3 * g(r), 0, 1, epsabs=1e-14, epsrel=1e-13)[0]
    return m2 / mass


def _same_grid(kern: MollifierKernel, f: np.ndarray) -> np.ndarray:
    f = kern.grid.check_scalar(f)
    return f


def apply_B_eta(kern: MollifierKernel, rho) -> np.ndarray:
    """``(rho - omega_eta * rho) / eta^2``."""
    rho = _same_grid(kern, rho)
    return (rho - circular_convolve(kern.grid, rho, kern)) / kern.eta**2


def B_eta_symbol(kern: MollifierKernel) -> np.ndarray:
    return (1.0 - kern.hat) / kern.eta**2


def nonlocal_dirichlet_form(kern: MollifierKernel, f) -> float:
    """``(1/4eta^2) iint omega_eta(x-y) |f(x)-f(y)|^2`` via the expansion identity."""
    f = _same_grid(kern, f)
    conv = circular_convolve(kern.grid, f, kern)
    return integrate(kern.grid, f * (f - conv)) / (2.0 * kern.eta**2)


@dataclass(frozen=True)
class PoincareEstimate:
    c_p: float
    eta: float
    grid: TorusGrid
    extremal_mode: tuple[int, ...]

    def as_dict(self) -> dict:
        return {
            "c_p": self.c_p,
            "eta": self.eta,
            "grid": {"dim": self.grid.dim, "n": self.grid.n, "L": self.grid.L},
            "extremal_mode": list(self.extremal_mode),
        }


def estimate_poincare_constant(kern: MollifierKernel, grid: TorusGrid | None = None) -> PoincareEstimate:
    """Smallest ``C_P`` with ``||f - mean f||^2 <= C_P * dirichlet_form(f)`` on the grid.

    Each Fourier mode is an eigenfunction of the form with Rayleigh quotient
    ``2 eta^2 / (1 - w_hat(k))``; the maximum over nonzero modes certifies
    the inequality for every grid field by Parseval.
    """
    grid = grid or kern.grid
    if grid != kern.grid:
        raise GridMismatchError("kernel was sampled on a different grid")
    gap = 1.0 - kern.hat
    nonzero = np.any([m != 0 for m in grid.mode_indices], axis=0)
    gap = np.where(nonzero, gap, np.inf)
    flat = int(np.argmin(gap))
    g = float(gap.flat[flat])
    if not g > 1e-14:
        raise SingularKernelError(f"1 - w_hat(k) = {g:.3e} at a nonzero mode")
    mode = tuple(int(m.flat[flat]) for m in grid.mode_indices)
    return PoincareEstimate(2.0 * kern.eta**2 / g, kern.eta, grid, mode)


def kernel_derivative_sup(kern: MollifierKernel) -> tuple[float, float]:
    """``(||grad omega_eta||_inf, ||D^2 omega_eta||_inf)`` by spectral differentiation."""
    grid = kern.grid
    vh = grid.fft(kern.values)
    grad = [grid.ifft(s * vh) for s in grid.derivative_symbols]
    hess = [
        grid.ifft(si * sj * vh)
        for i, si in enumerate(grid.derivative_symbols)
        for sj in grid.derivative_symbols[i:]
    ]
    g = float(np.max(np.sqrt(sum(c**2 for c in grad))))
    h = float(max(np.max(np.abs(c)) for c in hess))
    return g, h
