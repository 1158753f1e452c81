import numpy as np
import pytest
import sympy as sp
from hypothesis import given
from hypothesis import strategies as st

from ekch.potential import (
    PressureParams,
    builtin_double_well,
    builtin_power,
    check_pressure_bounds,
    invalid_singular_potential,
    make_potential,
    pressure,
    pressure_prime,
    pressure_second,
    relative_potential,
    relative_pressure,
    validate_assumption,
)

U = sp.Symbol("u", positive=True)
SYMBOLIC = {
    "double_well": U**2 * (U - 1) ** 2,
    "power_3": U**3,
    "power_2.5": U**sp.Rational(5, 2),
}
GRID = np.linspace(0.05, 2.0, 40)


def _spec(name):
    if name == "double_well":
        return builtin_double_well()
    return builtin_power(float(name.split("_")[1]))


@pytest.mark.parametrize("name", sorted(SYMBOLIC))
def test_derivatives_match_symbolic(name):
    spec = _spec(name)
    expr = SYMBOLIC[name]
    for order, fn in enumerate([spec.F, spec.dF, spec.d2F, spec.d3F]):
        ref = sp.lambdify(U, sp.diff(expr, U, order), "numpy")(GRID)
        assert np.allclose(fn(GRID), ref, rtol=1e-12, atol=1e-12), order


@pytest.mark.parametrize("name", sorted(SYMBOLIC))
def test_pressure_matches_symbolic(name):
    spec = _spec(name)
    eta = sp.Rational(1, 10)
    F = SYMBOLIC[name]
    p = U * sp.diff(F, U) - F + U**2 / (2 * eta**2)
    pp = PressureParams(0.1)
    for fn, expr in [(pressure, p), (pressure_prime, sp.diff(p, U)), (pressure_second, sp.diff(p, U, 2))]:
        ref = sp.lambdify(U, expr, "numpy")(GRID)
        assert np.allclose(fn(spec, pp, GRID), ref, rtol=1e-11, atol=1e-10)


def test_double_well_split():
    spec = builtin_double_well()
    u = np.linspace(-1, 3, 2001)
    assert np.allclose(spec.f1.f(u) + spec.f2.f(u), u**2 * (u - 1) ** 2, atol=1e-12)
    assert np.min(spec.f1.d2(u)) >= -1e-12
    assert np.min(spec.f1.f(u)) >= -1e-12
    assert np.max(np.abs(spec.f2.d2(u))) == pytest.approx(1.0)


def test_pressure_rejects_negative_density():
    with pytest.raises(ValueError):
        pressure(builtin_double_well(), PressureParams(0.1), np.array([-0.1, 0.2]))


def test_unknown_potential_and_bad_gamma():
    with pytest.raises(ValueError):
        make_potential("quadratic")
    with pytest.raises(ValueError):
        builtin_power(2.0)


@given(st.floats(0, 2), st.floats(0, 2))
def test_relative_potential_lower_bound(rho, P):
    # F1 convex and F2'' >= -1 give F(rho|P) >= -(rho - P)^2 / 2
    spec = builtin_double_well()
    assert relative_potential(spec, rho, P) >= -0.5 * (rho - P) ** 2 - 1e-12


@given(st.floats(0, 2), st.floats(0, 2))
def test_convex_power_relative_potential_nonnegative(rho, P):
    assert relative_potential(builtin_power(3.0), rho, P) >= -1e-12


@given(st.floats(0, 2), st.floats(0, 2))
def test_relative_pressure_is_relative_potential_of_pressure(rho, P):
    spec, pp = builtin_double_well(), PressureParams(0.1)
    direct = pressure(spec, pp, rho) - pressure(spec, pp, P) - pressure_prime(spec, pp, P) * (rho - P)
    assert relative_pressure(spec, pp, rho, P) == pytest.approx(float(direct), abs=1e-10)


@pytest.mark.parametrize("spec", [builtin_double_well(), builtin_power(3.0)], ids=lambda s: s.name)
def test_bounds_hold_for_builtins(spec):
    rep = check_pressure_bounds(spec, PressureParams(0.1), samples=20000, seed=1)
    assert rep.bounded
    assert rep.violations_relative_pressure == 0 and rep.violations_growth == 0


def test_invalid_potential_reported_unbounded():
    rep = check_pressure_bounds(invalid_singular_potential(), PressureParams(0.1), samples=20000, seed=1)
    assert not rep.bounded
    assert "unbounded" in rep.reason


def test_assumption_margin():
    rep = validate_assumption(builtin_double_well(), 0.7)
    assert rep.ok and rep.margin_kappa == pytest.approx(0.3)
    assert not validate_assumption(builtin_double_well(), 1.2).ok
    assert not validate_assumption(invalid_singular_potential(), 0.5).ok
