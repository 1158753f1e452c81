import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from ekch.grid import TorusGrid, circular_convolve, laplacian, norm_l2
from ekch.harness.sweeps import direct_convolution
from ekch.mollifier import (
    B_eta_symbol,
    ResolutionError,
    SupportError,
    apply_B_eta,
    build_kernel,
    continuum_second_moment,
    estimate_poincare_constant,
    kernel_derivative_sup,
    nonlocal_dirichlet_form,
)

# hand integrals of (1 - r^2)^2: 1D (16/105)/(16/15), 2D per axis (pi/24)/(pi/3)
QUARTIC_M2 = {1: 1 / 7, 2: 1 / 8}


@pytest.mark.parametrize("profile", ["quartic", "bump"])
@pytest.mark.parametrize("eta", [0.2, 0.1, 0.05])
def test_moments_certified_1d(profile, eta):
    k = build_kernel(profile, eta, TorusGrid(1, 256))
    assert abs(k.moments.m0 - 1) <= 1e-14
    assert max(abs(m) for m in k.moments.m1) <= 1e-14
    assert np.all(k.values >= 0)


@pytest.mark.parametrize("profile", ["quartic", "bump"])
def test_offdiagonal_moment_2d(profile):
    k = build_kernel(profile, 0.1, TorusGrid(2, 128))
    assert abs(k.moments.m2_offdiag) <= 1e-12
    assert k.moments.m2_diag[0] == pytest.approx(k.moments.m2_diag[1], rel=1e-13)


@pytest.mark.parametrize("dim", [1, 2])
def test_continuum_second_moment_matches_hand_integral(dim):
    assert continuum_second_moment("quartic", dim) == pytest.approx(QUARTIC_M2[dim], rel=1e-12)


def test_discrete_diffusivity_approaches_continuum():
    k = build_kernel("quartic", 0.1, TorusGrid(1, 512))
    assert k.diffusivity == pytest.approx(QUARTIC_M2[1] / 2, rel=1e-3)
    assert k.limit_diffusivity == pytest.approx(k.diffusivity)


def test_resolution_and_support_errors():
    g = TorusGrid(1, 64)
    with pytest.raises(ResolutionError):
        build_kernel("quartic", 0.05, g)
    with pytest.raises(SupportError):
        build_kernel("quartic", 0.5, g)
    with pytest.raises(ValueError):
        build_kernel("triangle", 0.2, g)


@pytest.mark.parametrize("dim,n", [(1, 32), (2, 16)])
def test_spectral_convolution_matches_direct_sum(dim, n):
    g = TorusGrid(dim, n)
    k = build_kernel("bump", 0.3, g)
    rng = np.random.default_rng(5)
    for _ in range(5):
        f = rng.standard_normal(g.shape)
        ref = direct_convolution(k, f)
        assert np.max(np.abs(circular_convolve(g, f, k) - ref)) <= 1e-12 * np.max(np.abs(ref))


def test_convolution_preserves_constants(kern1):
    f = np.full(kern1.grid.shape, 2.5)
    assert np.allclose(apply_B_eta(kern1, f), 0.0, atol=1e-12)


def test_symbol_nonnegative(kern1):
    assert np.min(B_eta_symbol(kern1)) >= -1e-12


@given(arrays(np.float64, (64,), elements=st.floats(-3, 3)))
def test_dirichlet_form_matches_double_sum(values):
    g = TorusGrid(1, 64)
    k = build_kernel("quartic", 0.125, g)
    w = k.weights
    idx = np.arange(64)
    diff = values[:, None] - values[None, :]
    ref = np.sum(w[(idx[:, None] - idx[None, :]) % 64] * diff**2) * g.cell_volume / (4 * k.eta**2)
    assert nonlocal_dirichlet_form(k, values) == pytest.approx(ref, rel=1e-9, abs=1e-12)


def test_B_eta_consistent_with_laplacian():
    g = TorusGrid(1, 256)
    f = np.cos(2 * np.pi * g.coords[0])
    errs = []
    etas = [0.2, 0.1, 0.05]
    for eta in etas:
        k = build_kernel("quartic", eta, g)
        target = -k.diffusivity * laplacian(g, f)
        errs.append(norm_l2(g, apply_B_eta(k, f) - target) / norm_l2(g, target))
    slope = np.polyfit(np.log(etas), np.log(errs), 1)[0]
    assert abs(slope - 2) < 0.2


@pytest.mark.parametrize("eta", [0.3, 0.15])
def test_poincare_constant_matches_dense_eigenproblem(eta):
    g = TorusGrid(1, 32)
    k = build_kernel("quartic", eta, g)
    n = g.n
    W = k.weights[(np.arange(n)[:, None] - np.arange(n)[None, :]) % n]
    lam, vec = np.linalg.eigh(np.eye(n) - W)
    # drop the constant mode (eigenvalue 0)
    order = np.argsort(lam)
    lam_min = lam[order[1]]
    est = estimate_poincare_constant(k)
    assert est.c_p == pytest.approx(2 * eta**2 / lam_min, rel=1e-10)
    spectrum = np.abs(np.fft.rfft(vec[:, order[1]]))
    assert int(np.argmax(spectrum)) == abs(est.extremal_mode[0])


def test_poincare_inequality_on_random_fields():
    g = TorusGrid(1, 128)
    k = build_kernel("quartic", 0.1, g)
    cp = estimate_poincare_constant(k).c_p
    rng = np.random.default_rng(0)
    for _ in range(20):
        f = rng.standard_normal(g.shape)
        f -= f.mean()
        assert norm_l2(g, f) ** 2 <= cp * nonlocal_dirichlet_form(k, f) * (1 + 1e-12)


def test_kernel_derivative_sup_scales_with_eta():
    g = TorusGrid(1, 512)
    g1, _ = kernel_derivative_sup(build_kernel("quartic", 0.2, g))
    g2, _ = kernel_derivative_sup(build_kernel("quartic", 0.1, g))
    # grad of omega_eta scales like eta^{-(d+1)}
    assert g2 / g1 == pytest.approx(4.0, rel=0.05)
