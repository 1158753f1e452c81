"""Nonlocal Cahn-Hilliard in porous-medium form and the local degenerate Cahn-Hilliard.

The nonlocal equation is advanced as

    rho_t = Lap phi_delta(rho) - div(T_delta(rho) b),   b = grad(omega * rho) / eta^2,

with explicit SSP-RK2 steps; the local one with a first-order IMEX step that
treats ``-D rhobar Lap^2`` implicitly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Sequence

import numpy as np
from scipy import integrate as _quad

from . import backend
from .errors import StepSizeError
from .grid import TorusGrid, gradient, integrate, laplacian, norm_l1
from .mollifier import MollifierKernel, apply_B_eta, kernel_derivative_sup, nonlocal_dirichlet_form
from .potential import PotentialSpec
from .trajectory import Trajectory

GL_NODES, GL_WEIGHTS = np.polynomial.legendre.leggauss(8)


class EllipticityError(ValueError):
    """``T_delta (1/eta^2 + F'')`` is negative somewhere on the requested range."""


@dataclass
class CHState:
    rho: np.ndarray
    time: float = 0.0


@dataclass(frozen=True, eq=False)
class NLCHParams:
    kernel: MollifierKernel
    potential: PotentialSpec
    mobility_delta: float = 0.0
    cfl_parabolic: float = 0.8
    cfl: float = 0.5

    def __post_init__(self):
        if self.mobility_delta < 0:
            raise ValueError("mobility_delta must be >= 0")
        if not 0 < self.cfl_parabolic < 1:
            raise ValueError("cfl_parabolic must lie in (0, 1)")
        if not 0 < self.cfl < 1:
            raise ValueError("cfl must lie in (0, 1)")

    @property
    def grid(self) -> TorusGrid:
        return self.kernel.grid

    @cached_property
    def engine(self):
        mod, kind, par = backend.potential_args(self.potential)
        g = self.grid
        return mod.NLCHEngine(
            g.dim, g.n, g.L, self.kernel.hat, self.kernel.eta, kind, par,
            self.mobility_delta, GL_NODES, GL_WEIGHTS,
        )


@dataclass(frozen=True, eq=False)
class LCHParams:
    diffusivity_D: float
    potential: PotentialSpec
    grid: TorusGrid
    dt_factor: float = 0.1

    def __post_init__(self):
        if not self.diffusivity_D > 0:
            raise ValueError("diffusivity_D must be positive")
        if not self.dt_factor > 0:
            raise ValueError("dt_factor must be positive")

    @cached_property
    def engine(self):
        mod, kind, par = backend.potential_args(self.potential)
        g = self.grid
        return mod.LCHEngine(g.dim, g.n, g.L, self.diffusivity_D, kind, par)


# -- scalar building blocks ---------------------------------------------
def truncation_T_delta(rho, delta: float):
    """``delta/2 + (delta/2) s(rho/delta)`` with ``s(x) = 2x^3 - x^4`` on [0, 1], ``2x - 1`` beyond."""
    if delta < 0:
        raise ValueError("delta must be >= 0")
    out = backend._fallback.truncation(rho, float(delta))
    return float(out) if np.ndim(out) == 0 else out


def truncation_prime(rho, delta: float):
    if delta == 0:
        return np.ones_like(np.asarray(rho, dtype=float))
    x = np.asarray(rho, dtype=float) / delta
    xc = np.clip(x, 0.0, 1.0)
    return np.where(x >= 1.0, 1.0, np.where(x <= 0.0, 0.0, 3 * xc**2 - 2 * xc**3))


def _phi_integrand(spec: PotentialSpec, eta: float, delta: float):
    return lambda s: float(truncation_T_delta(s, delta)) * (1.0 / eta**2 + float(spec.d2F(s)))


def phi_delta(spec: PotentialSpec, kernel_eta: float, rho: float, delta: float = 0.0) -> float:
    """``int_0^rho T_delta(s) (1/eta^2 + F''(s)) ds`` by adaptive quadrature."""
    if rho < 0:
        raise ValueError("rho must be >= 0")
    if rho == 0:
        return 0.0
    s = np.linspace(0.0, rho, 2049)
    vals = truncation_T_delta(s, delta) * (1.0 / kernel_eta**2 + spec.d2F(s))
    if np.min(vals) < -1e-12:
        raise EllipticityError(
            f"phi_delta' < 0 on [0, {rho}] (min {np.min(vals):.3e}); eta too large for this potential"
        )
    f = _phi_integrand(spec, kernel_eta, delta)
    pts = [delta] if 0 < delta < rho else None
    val, _ = _quad.quad(f, 0.0, rho, epsabs=1e-10, epsrel=1e-12, limit=200, points=pts)
    return float(val)


def phi_delta_prime(spec: PotentialSpec, kernel_eta: float, rho, delta: float = 0.0):
    return truncation_T_delta(rho, delta) * (1.0 / kernel_eta**2 + spec.d2F(rho))


# -- nonlocal CH ---------------------------------------------------------
def _max_lap_symbol(grid: TorusGrid) -> float:
    return float(np.max(np.abs(grid.laplacian_symbol)))


def nlch_stable_dt(rho: np.ndarray, params: NLCHParams) -> float:
    """Largest step allowed by the parabolic and drift conditions."""
    g = params.grid
    eng = params.engine
    phip = float(np.max(eng.phi_prime(rho)))
    dt_par = 2.0 * params.cfl_parabolic / (_max_lap_symbol(g) * max(phip, 1e-300))
    b = drift_field(params.kernel, rho)
    bmax = float(np.max(np.sqrt(np.sum(b * b, axis=0))))
    dt_adv = params.cfl * g.spacing / bmax if bmax > 0 else math.inf
    return min(dt_par, dt_adv)


def drift_field(kern: MollifierKernel, rho) -> np.ndarray:
    """``b(rho) = grad(omega_eta * rho) / eta^2``."""
    g = kern.grid
    rho_h = g.fft(g.check_scalar(rho))
    return np.stack([g.ifft(s * kern.hat * rho_h) for s in g.derivative_symbols]) / kern.eta**2


def div_drift(kern: MollifierKernel, rho) -> np.ndarray:
    g = kern.grid
    return g.ifft(g.laplacian_symbol * kern.hat * g.fft(g.check_scalar(rho))) / kern.eta**2


def nlch_rhs(state: CHState, params: NLCHParams) -> np.ndarray:
    return params.engine.rhs(params.grid.check_scalar(state.rho))


def step_nlch(state: CHState, params: NLCHParams, dt: float) -> CHState:
    rho = params.grid.check_scalar(state.rho)
    limit = nlch_stable_dt(rho, params)
    if dt > limit * (1 + 1e-12):
        raise StepSizeError(f"dt={dt:.3e} exceeds the stability bound {limit:.3e}")
    new, _ = params.engine.advance(rho, float(dt), 1, float(state.time))
    return CHState(new, state.time + dt)


def nlch_energy(rho, kern: MollifierKernel, spec: PotentialSpec) -> float:
    g = kern.grid
    return integrate(g, spec.F(rho)) + nonlocal_dirichlet_form(kern, rho)


def lch_energy(rho, D: float, spec: PotentialSpec, grid: TorusGrid) -> float:
    gr = gradient(grid, rho)
    return integrate(grid, spec.F(rho)) + 0.5 * D * integrate(grid, np.sum(gr * gr, axis=0))


def _sample_times(T: float, samples: int) -> np.ndarray:
    if not T > 0:
        raise ValueError("T must be positive")
    if samples < 1:
        raise ValueError("samples must be >= 1")
    return np.linspace(0.0, T, samples + 1)


def _substeps(interval: float, dt_max: float) -> tuple[int, float]:
    k = max(1, math.ceil(interval / dt_max * (1 - 1e-12)))
    return k, interval / k


Observer = Callable[[float, np.ndarray], None]


def run_nlch(
    initial: CHState,
    params: NLCHParams,
    T: float,
    observers: Sequence[Observer] = (),
    samples: int = 50,
    weak_residual: bool = False,
    track_drift: bool = True,
) -> Trajectory:
    """Integrate to ``T`` landing exactly on ``samples`` equal intervals.

    ``meta['divb_integral']`` holds the cumulative trapezoid integral of
    ``||div b||_inf`` at each sample (used by the envelope audit); it is
    ``None`` when ``track_drift`` is off.
    """
    g = params.grid
    rho = g.check_scalar(initial.rho).copy()
    ts = _sample_times(T, samples) + initial.time
    traj = Trajectory(g, "nlch")
    eng = params.engine
    cum, dts, steps = 0.0, [], 0
    divb = []
    for i, t in enumerate(ts):
        if i > 0:
            k, dt = _substeps(t - ts[i - 1], nlch_stable_dt(rho, params))
            rho, inc = eng.advance(rho, dt, k, float(ts[i - 1]), track_drift)
            cum += inc
            dts.append(dt)
            steps += k
        traj.times.append(float(t))
        traj.rho.append(rho)
        divb.append(cum)
        traj.series.append(t, integrate(g, rho), nlch_energy(rho, params.kernel, params.potential))
        for obs in observers:
            obs(float(t), rho)
    traj.meta.update(divb_integral=divb if track_drift else None, dt=dts, steps=steps, backend=backend.NAME)
    if weak_residual:
        mu = lambda r: params.potential.dF(r) + apply_B_eta(params.kernel, r)
        traj.meta["weak_residual"] = weak_form_residual(traj, mu)
    return traj


# -- local CH ------------------------------------------------------------
def lch_stable_dt(rho: np.ndarray, params: LCHParams) -> float:
    rate = float(np.max(np.abs(rho) * np.abs(params.potential.d2F(rho)))) * _max_lap_symbol(params.grid)
    return 2.0 * params.dt_factor / rate if rate > 0 else math.inf


def step_lch(state: CHState, params: LCHParams, dt: float) -> CHState:
    rho = params.grid.check_scalar(state.rho)
    new = params.engine.advance(rho, float(dt), 1, float(state.time))
    return CHState(new, state.time + dt)


def run_lch(
    initial: CHState,
    params: LCHParams,
    T: float,
    observers: Sequence[Observer] = (),
    samples: int = 50,
    weak_residual: bool = False,
) -> Trajectory:
    g = params.grid
    rho = g.check_scalar(initial.rho).copy()
    ts = _sample_times(T, samples) + initial.time
    traj = Trajectory(g, "lch")
    eng = params.engine
    D = params.diffusivity_D
    dts, steps = [], 0
    for i, t in enumerate(ts):
        if i > 0:
            k, dt = _substeps(t - ts[i - 1], lch_stable_dt(rho, params))
            rho = eng.advance(rho, dt, k, float(ts[i - 1]))
            dts.append(dt)
            steps += k
        traj.times.append(float(t))
        traj.rho.append(rho)
        traj.series.append(t, integrate(g, rho), lch_energy(rho, D, params.potential, g))
        for obs in observers:
            obs(float(t), rho)
    traj.meta.update(dt=dts, steps=steps, backend=backend.NAME)
    if weak_residual:
        mu = lambda r: params.potential.dF(r) - D * laplacian(g, r)
        traj.meta["weak_residual"] = weak_form_residual(traj, mu)
    return traj


# -- weak-form residual --------------------------------------------------
def _test_functions(grid: TorusGrid, count: int = 10):
    """Low-mode trigonometric tests, deterministic order."""
    x = grid.coords
    k0 = 2 * np.pi / grid.L
    out = []
    mode = 1
    while len(out) < count:
        for ax in range(grid.dim):
            out.append(np.cos(k0 * mode * x[ax]))
            out.append(np.sin(k0 * mode * x[ax]))
        mode += 1
    return out[:count]


def weak_form_residual(traj: Trajectory, mu_of: Callable, count: int = 10) -> list[float]:
    """Per-test residual of ``int rho psi |_0^T + int_0^T int rho grad mu . grad psi``.

    Time integrals use the trapezoid rule on the stored samples, so the
    residual is a consistency diagnostic that shrinks with the sample spacing.
    """
    g = traj.grid
    tests = _test_functions(g, count)
    grads = [gradient(g, psi) for psi in tests]
    flux_terms = []
    for rho in traj.rho:
        gm = gradient(g, mu_of(rho))
        flux_terms.append([integrate(g, rho * np.sum(gm * gp, axis=0)) for gp in grads])
    flux_terms = np.array(flux_terms)
    t = np.asarray(traj.times)
    out = []
    for j, psi in enumerate(tests):
        jump = integrate(g, traj.rho[-1] * psi) - integrate(g, traj.rho[0] * psi)
        out.append(float(jump + _quad.trapezoid(flux_terms[:, j], t)))
    return out


# -- audits --------------------------------------------------------------
@dataclass(frozen=True)
class EnvelopeReport:
    sigma_low: float
    sigma_high: float
    lower_violations: int
    upper_violations: int
    min_lower_margin: float
    min_upper_margin: float
    same_sigma_upper_violations: int
    slack: list[float] = field(repr=False)

    @property
    def violations(self) -> int:
        return self.lower_violations + self.upper_violations

    def as_dict(self) -> dict:
        d = dict(self.__dict__)
        d["violations"] = self.violations
        return d


def max_principle_envelope(traj: Trajectory, sigma: float | None = None, slack_factor: float = 2.0) -> EnvelopeReport:
    """Audit ``sigma_lo e^{-I(t)} <= rho <= sigma_hi e^{I(t)}``, ``I = int_0^t ||div b||_inf``.

    ``sigma_lo = min rho_0`` and ``sigma_hi = max rho_0``; the reading with a
    single ``sigma`` for both sides is reported alongside
    (``same_sigma_upper_violations``).  Slack per sample is
    ``1e-8 + slack_factor * dt * ||div b||_inf``.
    """
    if traj.meta.get("divb_integral") is None:
        raise ValueError("trajectory lacks the drift-divergence integral (not from run_nlch?)")
    integ = np.asarray(traj.meta["divb_integral"])
    rho0 = traj.rho[0]
    lo = float(np.min(rho0)) if sigma is None else float(sigma)
    hi = float(np.max(rho0))
    dts = [0.0] + list(traj.meta.get("dt", []))
    lv = uv = same = 0
    mlo = mhi = math.inf
    slack = []
    for i, rho in enumerate(traj.rho):
        rate = (integ[i] - integ[i - 1]) / (traj.times[i] - traj.times[i - 1]) if i else 0.0
        s = 1e-8 + slack_factor * dts[i] * rate
        slack.append(s)
        low_b = lo * math.exp(-integ[i])
        up_b = hi * math.exp(integ[i])
        mlo = min(mlo, float(np.min(rho)) - low_b)
        mhi = min(mhi, up_b - float(np.max(rho)))
        lv += int(np.min(rho) < low_b - s)
        uv += int(np.max(rho) > up_b + s)
        same += int(np.max(rho) > lo * math.exp(integ[i]) + s)
    return EnvelopeReport(lo, hi, lv, uv, mlo, mhi, same, slack)


@dataclass(frozen=True)
class ContractionReport:
    times: list[float]
    l1_distance: list[float]
    fitted_rate: float
    theory_rate: float
    max_excess: float
    identical: bool

    @property
    def ok(self) -> bool:
        if self.identical:
            return max(self.l1_distance) <= 1e-10
        return math.isfinite(self.fitted_rate) and self.fitted_rate <= self.theory_rate

    def as_dict(self) -> dict:
        d = dict(self.__dict__)
        d["ok"] = self.ok
        return d


def l1_theory_rate(kern: MollifierKernel, rho1_series, rho2_series) -> float:
    """Rate from the uniqueness estimate, maximized over stored samples."""
    g = kern.grid
    grad_w, hess_w = kernel_derivative_sup(kern)
    e2 = kern.eta**2
    best = 0.0
    for r1, r2 in zip(rho1_series, rho2_series):
        n1, n2 = norm_l1(g, r1), norm_l1(g, r2)
        gr2 = integrate(g, np.sqrt(np.sum(gradient(g, r2) ** 2, axis=0)))
        c = hess_w / e2 * (n1 + n2) + grad_w / e2 * gr2 + n1 * hess_w / e2
        best = max(best, c)
    return best


def l1_contraction_test(initial1: CHState, initial2: CHState, params: NLCHParams, T: float, samples: int = 20) -> ContractionReport:
    """Run both data and fit the smallest ``C`` with ``w(t) <= e^{Ct} w(0)`` on the samples."""
    t1 = run_nlch(initial1, params, T, samples=samples)
    t2 = run_nlch(initial2, params, T, samples=samples)
    g = params.grid
    w = [norm_l1(g, a - b) for a, b in zip(t1.rho, t2.rho)]
    times = [t - t1.times[0] for t in t1.times]
    identical = w[0] == 0.0
    if identical:
        rate = 0.0
    else:
        rate = max(math.log(wi / w[0]) / ti for wi, ti in zip(w[1:], times[1:]))
    excess = max(wi - math.exp(rate * ti) * w[0] for wi, ti in zip(w, times))
    theory = l1_theory_rate(params.kernel, t1.rho, t2.rho)
    return ContractionReport(times, w, rate, theory, excess, identical)
