import numpy as np
import pytest
from scipy import integrate

from mrgp.basis import (
    BasisSet,
    SpectralSpec,
    design_matrix,
    eigenfunction,
    eigenvalue,
    eigenvalues,
    kernel_approx,
    matern32,
    prior_variances,
    spectral_density,
)


def test_eigenvalue_1d():
    assert eigenvalue(1, 1.0) == pytest.approx(np.pi**2 / 4, rel=1e-15)
    assert eigenvalue(3, [2.0]) == pytest.approx((3 * np.pi / 4) ** 2, rel=1e-15)


def test_eigenvalue_sums_over_dimensions():
    lam = eigenvalues(4, [1.0, 2.0])
    i = np.arange(1, 5)
    assert np.allclose(lam, (np.pi * i / 2) ** 2 + (np.pi * i / 4) ** 2, rtol=1e-14)


def test_eigenfunction_values():
    assert eigenfunction(1, [0.0], [1.0]) == pytest.approx(1.0)
    assert eigenfunction(2, [0.0], [1.0]) == pytest.approx(0.0, abs=1e-15)
    assert eigenfunction(1, [1.0], [1.0]) == pytest.approx(0.0, abs=1e-15)


def test_eigenfunctions_orthonormal():
    tau = 1.7
    for i in range(1, 5):
        for k in range(1, 5):
            val, _ = integrate.quad(lambda x: eigenfunction(i, [x], [tau]) * eigenfunction(k, [x], [tau]), -tau, tau)
            assert val == pytest.approx(float(i == k), abs=1e-10)


def test_laplace_eigenpair():
    # -phi'' = lambda phi, checked by central differences
    tau, i, x, h = 1.3, 3, 0.37, 1e-4
    f = lambda z: eigenfunction(i, [z], [tau])  # noqa: E731
    second = (f(x + h) - 2 * f(x) + f(x - h)) / h**2
    assert -second == pytest.approx(eigenvalue(i, tau) * f(x), rel=1e-6)


def test_design_matrix_shape():
    Phi = design_matrix(np.linspace(-1, 1, 7)[:, None], [1.5], 5)
    assert Phi.shape == (7, 5)


def test_rejects_nonpositive_tau():
    with pytest.raises(ValueError):
        design_matrix(np.zeros((2, 1)), [0.0], 3)


def test_matern32_spectral_density_integrates_to_variance():
    spec = SpectralSpec(lengthscale=0.7, variance=1.3)
    val, _ = integrate.quad(lambda s: spectral_density(spec, s), -np.inf, np.inf)
    assert val / (2 * np.pi) == pytest.approx(1.3, rel=1e-8)


def test_matern32_spectral_closed_form():
    # S(s) = 4 sqrt(3)^3 sigma^2 / ell^3 / (3 / ell^2 + s^2)^2
    spec = SpectralSpec(lengthscale=2.0, variance=0.5)
    s = np.array([0.0, 0.3, 2.0])
    ref = 4 * 3 * np.sqrt(3) * 0.5 / 8.0 / (0.75 + s**2) ** 2
    assert np.allclose(spectral_density(spec, s), ref, rtol=1e-13)


def test_se_spectral_density():
    spec = SpectralSpec(family="se", lengthscale=0.5)
    val, _ = integrate.quad(lambda s: spectral_density(spec, s), -np.inf, np.inf)
    assert val / (2 * np.pi) == pytest.approx(1.0, rel=1e-8)


def test_bad_spectral_spec():
    with pytest.raises(ValueError):
        SpectralSpec(family="rq")
    with pytest.raises(ValueError):
        SpectralSpec(lengthscale=0.0)


def test_kernel_approx_close_to_matern():
    spec = SpectralSpec()
    L = 4.0
    grid = np.linspace(-L / 2, L / 2, 41)
    Phi = design_matrix(grid[:, None], [2 * L], 100)
    K = (Phi * prior_variances(spec, 100, [2 * L])) @ Phi.T
    ref = matern32(grid[:, None] - grid[None, :])
    assert np.abs(K - ref).max() < 0.05
    assert kernel_approx([0.3], [-0.2], [2 * L], 100, spec) == pytest.approx(float(matern32(0.5)), abs=0.05)
    assert kernel_approx([1.0], [1.5], [2 * L], 100, spec) == pytest.approx(K[30, 35], rel=1e-12)


def test_basis_set_region_design():
    spec = SpectralSpec()
    bs = BasisSet(3, 1, spec, tau=[np.array([[2.0]])], center=[np.array([[1.0]])], half_width=[np.array([[1.0]])])
    assert np.allclose(bs.design(0, 0, [[1.0]]), design_matrix(np.zeros((1, 1)), [2.0], 3))
    lo, hi = bs.tau_bounds(0, 0)
    assert lo[0] == 1.0 and hi[0] == 4.0
    assert np.allclose(bs.prior_var(0, 0), prior_variances(spec, 3, [2.0]))
