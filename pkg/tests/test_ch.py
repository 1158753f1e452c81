import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ekch.ch import (
    CHState,
    EllipticityError,
    LCHParams,
    NLCHParams,
    l1_contraction_test,
    max_principle_envelope,
    nlch_rhs,
    nlch_stable_dt,
    phi_delta,
    phi_delta_prime,
    run_lch,
    run_nlch,
    step_nlch,
    truncation_prime,
    truncation_T_delta,
)
from ekch.errors import StepSizeError
from ekch.grid import TorusGrid, divergence, gradient, integrate
from ekch.mollifier import apply_B_eta, build_kernel
from ekch.potential import PressureParams, builtin_double_well, builtin_power, pressure

from .conftest import smooth_density


@given(st.floats(0.01, 1.0), st.floats(-1.0, 3.0))
def test_truncation_bounds(delta, rho):
    t = truncation_T_delta(rho, delta)
    assert t >= delta / 2 - 1e-15
    if rho >= delta:
        assert t == pytest.approx(rho, rel=1e-14)


@given(st.floats(0.05, 1.0), st.floats(-0.5, 2.0))
def test_truncation_derivative(delta, rho):
    h = 1e-6
    fd = (truncation_T_delta(rho + h, delta) - truncation_T_delta(rho - h, delta)) / (2 * h)
    assert float(truncation_prime(rho, delta)) == pytest.approx(fd, abs=1e-5)


def test_truncation_is_C1_at_delta():
    d = 0.3
    assert float(truncation_prime(d * (1 - 1e-9), d)) == pytest.approx(1.0, abs=1e-7)
    assert truncation_T_delta(0.0, d) == pytest.approx(d / 2)


def test_phi_without_truncation_is_pressure():
    spec, eta = builtin_double_well(), 0.1
    for rho in [0.1, 0.5, 1.3]:
        assert phi_delta(spec, eta, rho) == pytest.approx(float(pressure(spec, PressureParams(eta), rho)), rel=1e-10)


@pytest.mark.parametrize("delta", [0.0, 0.3])
def test_phi_derivative(delta):
    spec, eta, h = builtin_double_well(), 0.1, 1e-5
    for rho in [0.05, 0.2, 0.7]:
        fd = (phi_delta(spec, eta, rho + h, delta) - phi_delta(spec, eta, rho - h, delta)) / (2 * h)
        assert float(phi_delta_prime(spec, eta, rho, delta)) == pytest.approx(fd, rel=1e-6)


def test_engine_phi_differs_from_quadrature_by_a_constant():
    g = TorusGrid(1, 64)
    k = build_kernel("quartic", 0.125, g)
    spec, delta = builtin_double_well(), 0.4
    eng = NLCHParams(k, spec, mobility_delta=delta).engine
    rho = np.linspace(0.01, 1.5, 64)
    diff = eng.phi(rho) - np.array([phi_delta(spec, k.eta, r, delta) for r in rho])
    assert np.ptp(diff) < 1e-8


def test_ellipticity_error_for_wide_kernel():
    with pytest.raises(EllipticityError):
        phi_delta(builtin_double_well(), 2.0, 0.5)


def test_rhs_matches_chemical_potential_form():
    # rho grad(F' + B rho) = grad p - rho grad(omega * rho) / eta^2 in the continuum;
    # on a fine grid with smooth data both forms agree to spectral accuracy
    g = TorusGrid(1, 256)
    k = build_kernel("quartic", 0.1, g)
    spec = builtin_double_well()
    rho = smooth_density(g)
    mu = spec.dF(rho) + apply_B_eta(k, rho)
    ref = divergence(g, rho * gradient(g, mu))
    got = nlch_rhs(CHState(rho), NLCHParams(k, spec))
    assert np.max(np.abs(got - ref)) < 1e-8 * np.max(np.abs(ref))


def test_linear_decay_rate_matches_symbol():
    g = TorusGrid(1, 64)
    k = build_kernel("quartic", 0.125, g)
    spec = builtin_double_well()
    amp, rbar = 1e-6, 0.5
    x = g.coords[0]
    kw = 2 * math.pi
    # kernel symbol at k = 2 pi from the weights by direct cosine sum
    what = float(np.sum(k.weights * np.cos(kw * g.offsets[0])))
    rate = -rbar * kw**2 * (float(spec.d2F(rbar)) + (1 - what) / k.eta**2)
    T = 0.01
    traj = run_nlch(CHState(rbar + amp * np.cos(kw * x)), NLCHParams(k, spec), T, samples=1)
    got = np.sum((traj.rho[-1] - rbar) * np.cos(kw * x)) * 2 / g.n
    assert got / amp == pytest.approx(math.exp(rate * T), rel=1e-3)


def test_nlch_conserves_mass_and_dissipates_energy():
    g = TorusGrid(1, 64)
    k = build_kernel("quartic", 0.125, g)
    traj = run_nlch(CHState(smooth_density(g)), NLCHParams(k, builtin_double_well()), 0.05, samples=10)
    m = traj.series.mass
    assert max(abs(v - m[0]) for v in m) <= 1e-12 * m[0]
    e = traj.series.energy
    assert all(b <= a + 1e-14 for a, b in zip(e, e[1:]))


def test_constant_state_is_stationary():
    g = TorusGrid(2, 16)
    k = build_kernel("quartic", 0.3, g)
    traj = run_nlch(CHState(np.full(g.shape, 0.4)), NLCHParams(k, builtin_power(3.0)), 0.01, samples=2)
    assert np.allclose(traj.rho[-1], 0.4, atol=1e-14)


def test_step_size_guard():
    g = TorusGrid(1, 64)
    k = build_kernel("quartic", 0.125, g)
    p = NLCHParams(k, builtin_double_well())
    rho = smooth_density(g)
    dt = nlch_stable_dt(rho, p)
    step_nlch(CHState(rho), p, dt)
    with pytest.raises(StepSizeError):
        step_nlch(CHState(rho), p, 10 * dt)


def test_envelope_and_contraction():
    g = TorusGrid(1, 64)
    k = build_kernel("quartic", 0.125, g)
    p = NLCHParams(k, builtin_double_well())
    rho = 0.5 + 0.25 * np.cos(2 * np.pi * g.coords[0])
    traj = run_nlch(CHState(rho), p, 0.02, samples=10)
    assert max_principle_envelope(traj, sigma=0.25).violations == 0
    same = l1_contraction_test(CHState(rho), CHState(rho), p, 0.02, samples=5)
    assert same.identical and same.ok
    near = l1_contraction_test(CHState(rho), CHState(rho + 0.01 * np.cos(4 * np.pi * g.coords[0])), p, 0.02, 5)
    assert near.ok and math.isfinite(near.fitted_rate)


def test_envelope_needs_drift_integral():
    g = TorusGrid(1, 64)
    k = build_kernel("quartic", 0.125, g)
    traj = run_nlch(CHState(smooth_density(g)), NLCHParams(k, builtin_double_well()), 0.01, samples=2,
                    track_drift=False)
    with pytest.raises(ValueError):
        max_principle_envelope(traj)


def test_local_ch_spinodal_growth_rate():
    g = TorusGrid(1, 64)
    spec, D, rbar, amp = builtin_double_well(), 1e-3, 0.5, 1e-6
    kw = 2 * math.pi
    rate = -rbar * kw**2 * (float(spec.d2F(rbar)) + D * kw**2)
    assert rate > 0
    x = g.coords[0]
    T = 0.02
    traj = run_lch(CHState(rbar + amp * np.cos(kw * x)), LCHParams(D, spec, g, dt_factor=0.01), T, samples=4)
    got = np.sum((traj.rho[-1] - rbar) * np.cos(kw * x)) * 2 / g.n
    assert got / amp == pytest.approx(math.exp(rate * T), rel=2e-2)
    m = traj.series.mass
    assert abs(m[-1] - m[0]) < 1e-13


def test_weak_residual_shrinks_with_sampling():
    g = TorusGrid(1, 64)
    k = build_kernel("quartic", 0.125, g)
    p = NLCHParams(k, builtin_double_well())
    rho = smooth_density(g)
    coarse = run_nlch(CHState(rho), p, 0.02, samples=5, weak_residual=True).meta["weak_residual"]
    fine = run_nlch(CHState(rho), p, 0.02, samples=20, weak_residual=True).meta["weak_residual"]
    assert max(map(abs, fine)) < max(map(abs, coarse))
    assert integrate(g, rho) > 0
