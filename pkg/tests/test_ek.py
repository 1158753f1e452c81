import math

import numpy as np
import pytest

from ekch.ch import CHState, NLCHParams, run_nlch
from ekch.diagnostics import dissipation_budget, energy_ek
from ekch.ek import EKParams, EKState, ek_energy, ek_stable_dt, kinetic_energy, run_ek, step_ek
from ekch.errors import PositivityError, StepSizeError
from ekch.grid import TorusGrid, norm_l2
from ekch.mollifier import build_kernel
from ekch.potential import builtin_double_well, builtin_power

from .conftest import smooth_density


@pytest.fixture
def setup():
    g = TorusGrid(1, 64)
    return g, build_kernel("quartic", 0.125, g), builtin_double_well()


def test_parameter_validation(setup):
    g, k, spec = setup
    with pytest.raises(ValueError):
        EKParams(0.0, k, spec)
    with pytest.raises(ValueError):
        EKParams(0.1, k, spec, cfl=1.5)


def test_constant_state_at_rest(setup):
    g, k, spec = setup
    s = EKState(np.full(g.shape, 0.5), np.zeros((1,) + g.shape))
    traj = run_ek(s, EKParams(0.05, k, spec), 0.01, samples=2)
    assert np.allclose(traj.rho[-1], 0.5, atol=1e-15)
    assert np.allclose(traj.momentum[-1], 0.0, atol=1e-15)


def test_pure_friction_matches_closed_form(setup):
    g, k, spec = setup
    eps, T, N = 0.1, 0.02, 40
    rho = np.full(g.shape, 0.5)
    m = (0.2 * np.sin(2 * np.pi * g.coords[0]))[None]
    traj = run_ek(EKState(rho, m), EKParams(eps, k, spec, fluxes=False), T, samples=1, dt=T / N)
    assert np.allclose(traj.momentum[-1], m * math.exp(-T / eps**2), rtol=1e-13, atol=1e-16)
    K0 = kinetic_energy(g, rho, m)
    h = T / N
    q = math.exp(-2 * h / eps**2)
    rect = 2 * K0 * h / eps**2 * (1 - q**N) / (1 - q)
    assert traj.series.dissipation_integral[-1] == pytest.approx(rect, rel=1e-12)


def test_mass_conserved_and_positive(setup):
    g, k, spec = setup
    rho = smooth_density(g)
    m = (0.05 * rho * np.sin(2 * np.pi * g.coords[0]))[None]
    traj = run_ek(EKState(rho, m), EKParams(0.02, k, spec), 0.05, samples=10)
    mass = traj.series.mass
    assert max(abs(x - mass[0]) for x in mass) <= 1e-12 * mass[0]
    assert min(float(np.min(r)) for r in traj.rho) > 0


def test_two_dimensional_run():
    g = TorusGrid(2, 32)
    k = build_kernel("bump", 0.25, g)
    rho = smooth_density(g)
    traj = run_ek(EKState(rho, np.zeros((2,) + g.shape)), EKParams(0.05, k, builtin_power(3.0)), 0.01, samples=2)
    assert abs(traj.series.mass[-1] - traj.series.mass[0]) < 1e-12


def test_negative_density_rejected(setup):
    g, k, spec = setup
    rho = smooth_density(g)
    rho[3] = -0.1
    with pytest.raises(PositivityError):
        run_ek(EKState(rho, np.zeros((1,) + g.shape)), EKParams(0.05, k, spec), 0.01, samples=1)


def test_step_guard(setup):
    g, k, spec = setup
    s = EKState(smooth_density(g), np.zeros((1,) + g.shape))
    p = EKParams(0.05, k, spec)
    dt = ek_stable_dt(s, p)
    step_ek(s, p, dt)
    with pytest.raises(StepSizeError):
        step_ek(s, p, 3 * dt)


def test_energy_helpers_agree(setup):
    g, k, spec = setup
    rho = smooth_density(g)
    m = (0.1 * np.cos(2 * np.pi * g.coords[0]))[None]
    assert energy_ek(EKState(rho, m), k, spec) == pytest.approx(ek_energy(rho, m, k, spec))


def test_budget_residual_is_first_order(setup):
    g, k, spec = setup
    # friction-dominated regime: the left-rectangle dissipation sum overshoots by ~ (dt/eps^2) K0
    eps, T = 1e-3, 1e-4
    rho = np.full(g.shape, 0.5)
    m = (0.25 * np.sin(2 * np.pi * g.coords[0]))[None]
    res = []
    for dt in [1e-7, 5e-8, 2.5e-8]:
        traj = run_ek(EKState(rho, m), EKParams(eps, k, spec), T, samples=4, dt=dt)
        res.append(dissipation_budget(traj, eps).max_residual)
    assert 1.7 <= res[0] / res[1] <= 2.3 and 1.7 <= res[1] / res[2] <= 2.3
    # dropping the dissipation term breaks the balance by the full kinetic energy
    no_diss = dissipation_budget(traj).residual_without_dissipation
    assert min(no_diss) < -0.9 * kinetic_energy(g, rho, m)


def test_relaxes_towards_nonlocal_ch(setup):
    g, k, spec = setup
    rho = smooth_density(g)
    T = 0.05
    ref = run_nlch(CHState(rho), NLCHParams(k, spec), T, samples=5)
    errs = []
    for eps in [0.04, 0.02, 0.01]:
        traj = run_ek(EKState(rho, np.zeros((1,) + g.shape)), EKParams(eps, k, spec), T, samples=5)
        errs.append(max(norm_l2(g, a - b) for a, b in zip(traj.rho, ref.rho)))
    assert errs[0] > errs[1] > errs[2]
