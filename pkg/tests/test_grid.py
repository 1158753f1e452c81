import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from ekch.grid import (
    GridMismatchError,
    NumericInputError,
    TorusGrid,
    divergence,
    gradient,
    integrate,
    laplacian,
    mean,
    norm_l2,
    parseval_l2_sq,
    read_snapshot,
    write_snapshot,
)


def test_invalid_grids_rejected():
    with pytest.raises(ValueError):
        TorusGrid(3, 16)
    with pytest.raises(ValueError):
        TorusGrid(1, 4)
    with pytest.raises(ValueError):
        TorusGrid(1, 16, 0.0)


def test_coords_and_spacing():
    g = TorusGrid(1, 16, 2.0)
    assert g.spacing == 0.125
    assert g.coords[0][0] == 0.0 and g.coords[0][-1] == pytest.approx(2.0 - 0.125)
    assert g.wrap(17) == 1 and g.wrap(-1) == 15


@pytest.mark.parametrize("dim", [1, 2])
def test_spectral_derivative_of_trig_is_exact(dim):
    g = TorusGrid(dim, 32, 2.0)
    x = g.coords[0]
    f = np.sin(2 * np.pi * 3 * x / g.L)
    df = gradient(g, f)[0]
    exact = 2 * np.pi * 3 / g.L * np.cos(2 * np.pi * 3 * x / g.L)
    assert np.max(np.abs(df - exact)) < 1e-11


def test_laplacian_of_mode():
    g = TorusGrid(2, 32)
    x, y = g.coords
    f = np.cos(2 * np.pi * x) * np.sin(4 * np.pi * y)
    assert np.allclose(laplacian(g, f), -(4 + 16) * np.pi**2 * f, atol=1e-9)


@given(arrays(np.float64, (32,), elements=st.floats(-10, 10)))
def test_div_grad_equals_laplacian(values):
    # derivative symbols vanish on the Nyquist plane, so the identity is exact
    g = TorusGrid(1, 32)
    lhs = divergence(g, gradient(g, values))
    assert np.allclose(lhs, laplacian(g, values), atol=1e-9 * (1 + np.max(np.abs(values))))


@given(arrays(np.float64, (16, 16), elements=st.floats(-5, 5)))
def test_parseval(values):
    g = TorusGrid(2, 16, 3.0)
    assert parseval_l2_sq(g, values) == pytest.approx(norm_l2(g, values) ** 2, rel=1e-10, abs=1e-12)


@given(arrays(np.float64, (32,), elements=st.floats(-5, 5)))
def test_gradient_has_zero_mean(values):
    g = TorusGrid(1, 32)
    assert abs(integrate(g, gradient(g, values)[0])) < 1e-10 * (1 + np.max(np.abs(values)))


def test_integrate_and_mean():
    g = TorusGrid(2, 16, 2.0)
    assert integrate(g, np.ones(g.shape)) == pytest.approx(4.0)
    assert mean(g, 3.0 * np.ones(g.shape)) == pytest.approx(3.0)


def test_shape_and_finiteness_checks():
    g = TorusGrid(1, 16)
    with pytest.raises(GridMismatchError):
        g.check_scalar(np.zeros(8))
    with pytest.raises(NumericInputError):
        g.check_scalar(np.full(16, np.nan))
    with pytest.raises(GridMismatchError):
        g.check_vector(np.zeros((2, 16)))


def test_ifft_refuses_imaginary_residue():
    g = TorusGrid(1, 16)
    fh = g.fft(np.random.default_rng(0).standard_normal(16))
    fh[0] += 1j
    with pytest.raises(NumericInputError):
        g.ifft(fh)


def test_snapshot_round_trip(tmp_path):
    g = TorusGrid(2, 8, 1.5)
    f = np.random.default_rng(1).standard_normal(g.shape)
    write_snapshot(tmp_path / "s.txt", g, f, 0.25)
    g2, f2, t = read_snapshot(tmp_path / "s.txt")
    assert g2 == g and t == 0.25
    assert np.array_equal(f, f2)
