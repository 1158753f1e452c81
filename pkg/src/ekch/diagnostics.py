"""Energy, relative entropy and limit-comparison functionals on deterministic runs.

Every measure-valued quantity is evaluated for the Dirac Young measure
generated by a smooth trajectory, so pairings reduce to pointwise evaluation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .ek import EKState, ek_energy
from .grid import TorusGrid, divergence, gradient, integrate, mean, norm_l2
from .mollifier import MollifierKernel, apply_B_eta, nonlocal_dirichlet_form
from .potential import PotentialSpec, relative_potential
from .trajectory import Trajectory


class TimeMismatchError(ValueError):
    pass


def energy_ek(state: EKState, kernel: MollifierKernel, potential: PotentialSpec, floor: float = 1e-10) -> float:
    """Kinetic + potential + nonlocal Dirichlet energy of a state."""
    g = kernel.grid
    s = state.validate(g)
    return ek_energy(s.rho, s.momentum, kernel, potential, floor)


@dataclass(frozen=True)
class BudgetReport:
    times: list[float]
    residual: list[float]
    residual_without_dissipation: list[float]

    @property
    def max_residual(self) -> float:
        return max(self.residual)

    def within(self, tol: float) -> bool:
        return self.max_residual <= tol

    def as_dict(self) -> dict:
        return {"max_residual": self.max_residual, **self.__dict__}


def dissipation_budget(traj: Trajectory, epsilon: float | None = None) -> BudgetReport:
    """``R(t) = E(t) + (1/eps^2) int_0^t int rho|u|^2 - E(0)`` at every sample.

    The dissipation column already carries the ``1/eps^2`` factor; ``epsilon``
    is accepted for symmetry with the report signature and checked against
    the trajectory when both are known.
    """
    ser = traj.series
    if epsilon is not None and "epsilon" in traj.meta and not math.isclose(traj.meta["epsilon"], epsilon):
        raise ValueError("epsilon does not match the trajectory")
    e0 = ser.energy[0]
    r = [e + d - e0 for e, d in zip(ser.energy, ser.dissipation_integral)]
    r_nodiss = [e - e0 for e in ser.energy]
    return BudgetReport(list(ser.times), r, r_nodiss)


def chemical_potential(P, kernel: MollifierKernel, potential: PotentialSpec) -> np.ndarray:
    return potential.dF(P) + apply_B_eta(kernel, P)


def limit_velocity_U(P, kernel: MollifierKernel, potential: PotentialSpec, epsilon: float) -> np.ndarray:
    """``U = -eps grad(F'(P) + B_eta[P])``."""
    return -epsilon * gradient(kernel.grid, chemical_potential(P, kernel, potential))


def _tensor_div(grid: TorusGrid, P, G) -> np.ndarray:
    """``div(P G (x) G)`` as a vector field (row-wise divergence)."""
    return np.stack([divergence(grid, P * G[i] * G) for i in range(grid.dim)])


def _stored_index(traj: Trajectory, t: float) -> int:
    j = int(np.argmin(np.abs(np.asarray(traj.times) - t)))
    if abs(traj.times[j] - t) > 1e-12:
        raise TimeMismatchError(f"t={t} is not a stored sample time")
    return j


def _nlch_time_derivative(P, kernel: MollifierKernel, potential: PotentialSpec) -> np.ndarray:
    g = kernel.grid
    return divergence(g, P * gradient(g, chemical_potential(P, kernel, potential)))


def error_term_e(
    P_traj: Trajectory,
    kernel: MollifierKernel,
    potential: PotentialSpec,
    epsilon: float,
    t: float,
    method: str = "difference",
) -> np.ndarray:
    """``e = eps div(P G (x) G) - eps d/dt(P G)``, ``G = grad(F'(P) + B_eta[P])``.

    ``method="difference"`` takes the time derivative by centred differences
    of the stored samples (one-sided at the ends); ``method="equation"``
    evaluates it from the nonlocal CH equation itself.  The two agree up to
    the sampling error.
    """
    g = kernel.grid
    j = _stored_index(P_traj, t)
    P = P_traj.rho[j]
    G = gradient(g, chemical_potential(P, kernel, potential))
    if method == "difference":
        n = len(P_traj.times)
        lo, hi = max(j - 1, 0), min(j + 1, n - 1)
        if lo == hi:
            raise ValueError("need at least two samples for a time difference")

        def PG(k):
            Pk = P_traj.rho[k]
            return Pk * gradient(g, chemical_potential(Pk, kernel, potential))

        dPG = (PG(hi) - PG(lo)) / (P_traj.times[hi] - P_traj.times[lo])
    elif method == "equation":
        Pt = _nlch_time_derivative(P, kernel, potential)
        Gt = gradient(g, potential.d2F(P) * Pt + apply_B_eta(kernel, Pt))
        dPG = Pt * G + P * Gt
    else:
        raise ValueError(f"unknown method {method!r}")
    return epsilon * _tensor_div(g, P, G) - epsilon * dPG


def error_term_momentum_form(P_traj, kernel, potential, epsilon, t) -> np.ndarray:
    """``d/dt(P U) + (1/eps) div(P U (x) U)`` with ``U`` from ``limit_velocity_U``."""
    g = kernel.grid
    j = _stored_index(P_traj, t)
    n = len(P_traj.times)
    lo, hi = max(j - 1, 0), min(j + 1, n - 1)

    def PU(k):
        Pk = P_traj.rho[k]
        return Pk * limit_velocity_U(Pk, kernel, potential, epsilon)

    P = P_traj.rho[j]
    U = limit_velocity_U(P, kernel, potential, epsilon)
    dPU = (PU(hi) - PU(lo)) / (P_traj.times[hi] - P_traj.times[lo])
    return dPU + _tensor_div(g, P, U) / epsilon


@dataclass(frozen=True)
class RelativeEntropyInputs:
    rho: np.ndarray
    momentum: np.ndarray
    P: np.ndarray
    U: np.ndarray
    kernel: MollifierKernel
    potential: PotentialSpec
    epsilon: float
    floor: float = 1e-10
    t_ek: float | None = None
    t_ch: float | None = None
    dt: float = 0.0

    def check(self):
        g = self.kernel.grid
        g.check_scalar(self.rho, "rho")
        g.check_scalar(self.P, "P")
        g.check_vector(self.momentum, "momentum")
        g.check_vector(self.U, "U")
        if self.t_ek is not None and self.t_ch is not None and abs(self.t_ek - self.t_ch) > self.dt / 2 + 1e-12:
            raise TimeMismatchError(f"EK time {self.t_ek} and CH time {self.t_ch} differ by more than dt/2")


@dataclass(frozen=True)
class ThetaValue:
    total: float
    kinetic: float
    potential: float
    nonlocal_: float

    def as_dict(self) -> dict:
        return {"total": self.total, "kinetic": self.kinetic, "potential": self.potential, "nonlocal": self.nonlocal_}


def relative_entropy_theta(inp: RelativeEntropyInputs) -> ThetaValue:
    """``int rho|u - U|^2/2 + int F(rho|P) + dirichlet_form(rho - P)``."""
    inp.check()
    g = inp.kernel.grid
    rc = np.maximum(inp.rho, inp.floor)
    u = inp.momentum / rc
    kin = 0.5 * integrate(g, inp.rho * np.sum((u - inp.U) ** 2, axis=0))
    pot = integrate(g, relative_potential(inp.potential, inp.rho, inp.P))
    nl = nonlocal_dirichlet_form(inp.kernel, inp.rho - inp.P)
    return ThetaValue(kin + pot + nl, kin, pot, nl)


def poincare_control(inp: RelativeEntropyInputs, c_p: float) -> float:
    """``c_p * dirichlet_form(rho - P) - ||rho - P||_2^2``; needs equal means."""
    g = inp.kernel.grid
    m1, m2 = mean(g, inp.rho), mean(g, inp.P)
    if abs(m1 - m2) > 1e-10 * max(1.0, abs(m1), abs(m2)):
        raise ValueError(f"means differ ({m1} vs {m2}); the Poincare inequality needs equal means")
    d = inp.rho - inp.P
    return c_p * nonlocal_dirichlet_form(inp.kernel, d) - norm_l2(g, d) ** 2


def w2_dirac_distance(rho_ek, momentum_ek, rho_ch, floor: float = 1e-10) -> np.ndarray:
    """Pointwise squared W2 between ``delta_(rho, sqrt(rho) u)`` and ``delta_(P, 0)``."""
    rho_ek = np.asarray(rho_ek, dtype=float)
    m = np.asarray(momentum_ek, dtype=float)
    return (rho_ek - np.asarray(rho_ch, dtype=float)) ** 2 + np.sum(m * m, axis=0) / np.maximum(rho_ek, floor)


@dataclass(frozen=True)
class ConcentrationReport:
    value: float
    label: str

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def concentration_tv_report(traj: Trajectory) -> ConcentrationReport:
    """Total variation of the concentration measures: zero for any deterministic run."""
    if not traj.times:
        raise ValueError("empty trajectory")
    return ConcentrationReport(0.0, "structural zero")


@dataclass
class ComparisonSeries:
    """EK trajectory against a CH reference at the EK sample times."""

    times: list[float]
    l2_error: list[float]
    theta: list[ThetaValue]
    w2_integral: list[float]
    poincare_slack: list[float]
    kinetic_l2: list[float]

    @property
    def sup_l2_error(self) -> float:
        return max(self.l2_error)

    @property
    def w2_spacetime(self) -> float:
        from scipy.integrate import trapezoid

        return float(trapezoid(self.w2_integral, self.times))

    @property
    def sup_theta(self) -> float:
        return max(th.total for th in self.theta)


def compare_to_reference(
    ek: Trajectory,
    ch: Trajectory,
    kernel: MollifierKernel,
    potential: PotentialSpec,
    epsilon: float,
    c_p: float | None = None,
    floor: float = 1e-10,
) -> ComparisonSeries:
    g = kernel.grid
    out = ComparisonSeries([], [], [], [], [], [])
    for i, t in enumerate(ek.times):
        P = ch.interpolate_rho(t)
        rho, m = ek.rho[i], ek.momentum[i]
        U = limit_velocity_U(P, kernel, potential, epsilon)
        inp = RelativeEntropyInputs(rho, m, P, U, kernel, potential, epsilon, floor)
        out.times.append(t)
        out.l2_error.append(norm_l2(g, rho - P))
        out.theta.append(relative_entropy_theta(inp))
        out.w2_integral.append(integrate(g, w2_dirac_distance(rho, m, P, floor)))
        out.poincare_slack.append(poincare_control(inp, c_p) if c_p is not None else math.nan)
        out.kinetic_l2.append(norm_l2(g, np.sqrt(np.sum(m * m, axis=0) / np.maximum(rho, floor))))
    return out
