"""High-friction nonlocal Euler-Korteweg system, rescaled in time.

    rho_t + (1/eps) div m = 0
    m_t + (1/eps) div(m u + p(rho) I) = -m/eps^2 + rho grad(omega * rho) / (eps eta^2)

Friction is integrated exactly in two half steps around an SSP-RK2 step of
the remaining terms.  Mass moves by the spectral divergence; the momentum
flux is spectral with a local Rusanov jump term added (see
``dissipation_flux``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Sequence

import numpy as np

from . import backend
from .errors import PositivityError, StepSizeError
from .grid import TorusGrid, integrate
from .mollifier import MollifierKernel, nonlocal_dirichlet_form
from .potential import PotentialSpec
from .trajectory import Trajectory


@dataclass
class EKState:
    rho: np.ndarray
    momentum: np.ndarray
    time: float = 0.0

    def validate(self, grid: TorusGrid) -> "EKState":
        rho = grid.check_scalar(self.rho, "rho")
        m = grid.check_vector(self.momentum, "momentum")
        if np.min(rho) < -1e-12:
            raise PositivityError(f"density {np.min(rho):.3e} below -1e-12")
        return EKState(rho, m, float(self.time))


@dataclass(frozen=True, eq=False)
class EKParams:
    epsilon: float
    kernel: MollifierKernel
    potential: PotentialSpec
    delta_reg: float = 0.0
    cfl: float = 0.5
    density_floor: float = 1e-10
    fluxes: bool = True

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if not 0 < self.cfl < 1:
            raise ValueError("cfl must lie in (0, 1)")
        if self.delta_reg < 0:
            raise ValueError("delta_reg must be >= 0")
        if self.density_floor < 0:
            raise ValueError("density_floor must be >= 0")

    @property
    def grid(self) -> TorusGrid:
        return self.kernel.grid

    @cached_property
    def engine(self):
        mod, kind, par = backend.potential_args(self.potential)
        g = self.grid
        return mod.EKEngine(
            g.dim, g.n, g.L, self.kernel.hat, self.kernel.eta, self.epsilon, kind, par,
            self.delta_reg, self.density_floor, self.fluxes,
        )


def ek_rhs_flux(state: EKState, params: EKParams) -> tuple[np.ndarray, np.ndarray]:
    """Non-stiff right-hand side ``(d rho/dt, d m/dt)`` without friction."""
    s = state.validate(params.grid)
    return params.engine.rhs(s.rho, s.momentum)


def max_wave_speed(state: EKState, params: EKParams) -> float:
    """Sum over axes of ``max(|u_j| + sqrt(max(p', 0) / max(rho, floor)))``."""
    return float(params.engine.max_speed(state.rho, state.momentum))


def ek_stable_dt(state: EKState, params: EKParams, cfl: float | None = None) -> float:
    speed = max_wave_speed(state, params)
    c = params.cfl if cfl is None else cfl
    if not params.fluxes or speed == 0:
        return math.inf
    return c * params.epsilon * params.grid.spacing / speed


def step_ek(state: EKState, params: EKParams, dt: float) -> EKState:
    s = state.validate(params.grid)
    limit = ek_stable_dt(s, params)
    if dt > limit * (1 + 1e-12):
        raise StepSizeError(f"dt={dt:.3e} exceeds the CFL bound {limit:.3e}")
    rho, m, _ = params.engine.advance(s.rho, s.momentum, float(dt), 1, s.time)
    return EKState(rho, m, s.time + dt)


def kinetic_energy(grid: TorusGrid, rho, m, floor: float = 1e-10) -> float:
    return 0.5 * integrate(grid, np.sum(m * m, axis=0) / np.maximum(rho, floor))


def ek_energy(rho, m, kern: MollifierKernel, spec: PotentialSpec, floor: float = 1e-10) -> float:
    g = kern.grid
    return kinetic_energy(g, rho, m, floor) + integrate(g, spec.F(rho)) + nonlocal_dirichlet_form(kern, rho)


Observer = Callable[[float, EKState], None]


def run_ek(
    initial: EKState,
    params: EKParams,
    T: float,
    observers: Sequence[Observer] = (),
    samples: int = 50,
    dt: float | None = None,
) -> Trajectory:
    """Integrate to ``T`` landing exactly on ``samples`` equal intervals.

    Each interval takes equal sub-steps no larger than the CFL step of the
    state at its start (or ``dt`` when given).  The dissipation column is the
    left-endpoint rectangle sum of ``(1/eps^2) int |m|^2 / rho`` over steps.
    """
    g = params.grid
    s = initial.validate(g)
    if not T > 0:
        raise ValueError("T must be positive")
    ts = np.linspace(0.0, T, samples + 1) + s.time
    traj = Trajectory(g, "ek", momentum=[])
    eng = params.engine
    rho, m = s.rho.copy(), s.momentum.copy()
    diss, dts, steps = 0.0, [], 0
    floor = params.density_floor
    for i, t in enumerate(ts):
        if i > 0:
            interval = t - ts[i - 1]
            bound = ek_stable_dt(EKState(rho, m), params)
            step = bound if dt is None else min(dt, bound)
            if not math.isfinite(step):
                step = interval
            k = max(1, math.ceil(interval / step * (1 - 1e-12)))
            h = interval / k
            rho, m, inc = eng.advance(rho, m, h, k, float(ts[i - 1]))
            diss += inc
            dts.append(h)
            steps += k
            # the hard limit is cfl = 1 at the end of the interval
            if h > ek_stable_dt(EKState(rho, m), params, cfl=1.0) * (1 + 1e-9):
                raise StepSizeError(f"CFL exceeded 1 during [{ts[i - 1]:.6g}, {t:.6g}]")
        traj.times.append(float(t))
        traj.rho.append(rho)
        traj.momentum.append(m)
        ke = kinetic_energy(g, rho, m, floor)
        traj.series.append(t, integrate(g, rho), ek_energy(rho, m, params.kernel, params.potential, floor), ke, diss)
        state = EKState(rho, m, float(t))
        for obs in observers:
            obs(float(t), state)
    traj.meta.update(dt=dts, steps=steps, backend=backend.NAME, epsilon=params.epsilon)
    return traj
