"""Reduced-rank GP machinery: Laplace eigenfunctions on a box and Matern spectra.

On ``[-tau_1, tau_1] x ... x [-tau_D, tau_D]`` the basis functions are

    phi_i(x, tau) = prod_d tau_d**-0.5 * sin(pi * i * (x_d + tau_d) / (2 tau_d))

with eigenvalues ``lambda_i(tau) = sum_d (pi * i / (2 tau_d))**2``. The same
scalar index ``i`` runs over every input dimension.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln


@dataclass(frozen=True)
class SpectralSpec:
    """Stationary covariance described through its spectral density.

    ``family`` is ``"matern"`` (order ``nu``) or ``"se"`` (exponentiated
    quadratic, ``nu`` ignored).
    """

    family: str = "matern"
    nu: float = 1.5
    lengthscale: float = 1.0
    variance: float = 1.0

    def __post_init__(self):
        if self.family not in ("matern", "se"):
            raise ValueError(f"unknown spectral family {self.family!r}")
        if not (self.nu > 0 and self.lengthscale > 0 and self.variance > 0):
            raise ValueError("nu, lengthscale and variance must be positive")


def spectral_density(spec: SpectralSpec, s, d_x: int = 1) -> np.ndarray:
    """Angular-frequency spectral density ``S(s)`` of ``spec`` in ``d_x`` dims."""
    s = np.asarray(s, dtype=float)
    ell, var = spec.lengthscale, spec.variance
    if spec.family == "se":
        return var * (2.0 * np.pi * ell**2) ** (d_x / 2.0) * np.exp(-0.5 * (ell * s) ** 2)
    nu = spec.nu
    log_c = (
        np.log(var)
        + d_x * np.log(2.0)
        + 0.5 * d_x * np.log(np.pi)
        + gammaln(nu + 0.5 * d_x)
        - gammaln(nu)
        + nu * np.log(2.0 * nu)
        - 2.0 * nu * np.log(ell)
    )
    return np.exp(log_c - (nu + 0.5 * d_x) * np.log(2.0 * nu / ell**2 + s**2))


def _check_tau(tau) -> np.ndarray:
    tau = np.atleast_1d(np.asarray(tau, dtype=float))
    if np.any(~(tau > 0)):
        raise ValueError(f"basis intervals must be positive, got {tau}")
    return tau


def eigenvalues(p: int, tau) -> np.ndarray:
    """``lambda_i(tau)`` for ``i = 1..p``."""
    tau = _check_tau(tau)
    i = np.arange(1, p + 1, dtype=float)
    return (np.pi * i[:, None] / (2.0 * tau[None, :])) ** 2 @ np.ones(tau.size)


def eigenvalue(i: int, tau) -> float:
    return float(eigenvalues(int(i), tau)[-1])


def design_matrix(X, tau, p: int) -> np.ndarray:
    """Basis evaluations ``Phi[t, i-1] = phi_i(X[t], tau)`` with shape ``(n, p)``."""
    tau = _check_tau(tau)
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None] if tau.size == 1 else X[None, :]
    i = np.arange(1, p + 1, dtype=float)
    arg = np.pi * i[None, :, None] * (X[:, None, :] + tau) / (2.0 * tau)
    return np.prod(np.sin(arg) / np.sqrt(tau), axis=2)


def design_row(x, tau, p: int) -> np.ndarray:
    return design_matrix(np.atleast_1d(np.asarray(x, dtype=float))[None, :], tau, p)[0]


def eigenfunction(i: int, x, tau) -> float:
    return float(design_row(x, tau, int(i))[-1])


def prior_variances(spec: SpectralSpec, p: int, tau) -> np.ndarray:
    """``S(sqrt(lambda_i(tau)))`` for ``i = 1..p``."""
    tau = _check_tau(tau)
    return spectral_density(spec, np.sqrt(eigenvalues(p, tau)), d_x=tau.size)


def kernel_approx(x, x2, tau, p: int, spec: SpectralSpec) -> float:
    """Truncated expansion ``sum_i S(sqrt(lambda_i)) phi_i(x) phi_i(x2)``."""
    a = design_row(x, tau, p)
    b = design_row(x2, tau, p)
    return float(np.sum(prior_variances(spec, p, tau) * a * b))


def matern32(r, lengthscale: float = 1.0, variance: float = 1.0):
    """Closed-form Matern-3/2 kernel at distance ``r``."""
    z = np.sqrt(3.0) * np.abs(np.asarray(r, dtype=float)) / lengthscale
    return variance * (1.0 + z) * np.exp(-z)


@dataclass
class BasisSet:
    """Per-region basis configuration of a trained model.

    ``tau[j]``, ``center[j]`` and ``half_width[j]`` have shape
    ``(n_regions_j, d_x)``; inputs are shifted by ``center`` before ``phi`` is
    evaluated so each region sits symmetrically inside its box.
    """

    p: int
    d_x: int
    spectral: SpectralSpec
    tau: list[np.ndarray] = field(default_factory=list)
    center: list[np.ndarray] = field(default_factory=list)
    half_width: list[np.ndarray] = field(default_factory=list)

    def design(self, level: int, region: int, X) -> np.ndarray:
        X = np.asarray(X, dtype=float).reshape(-1, self.d_x)
        return design_matrix(X - self.center[level][region], self.tau[level][region], self.p)

    def prior_var(self, level: int, region: int) -> np.ndarray:
        return prior_variances(self.spectral, self.p, self.tau[level][region])

    def tau_bounds(self, level: int, region: int) -> tuple[np.ndarray, np.ndarray]:
        """Admissible open interval ``(L, L + p / L)`` for each input dimension."""
        L = self.half_width[level][region]
        return L, L + self.p / L
