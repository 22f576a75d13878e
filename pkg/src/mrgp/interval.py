"""Point estimation of the basis intervals ``tau`` of a region.

For region ``(j, l)`` and input dimension ``d`` the expected log joint is
maximised over ``tau_d`` with every variational factor held fixed:

    h(tau_d) = sum_i [-1/2 log S_i - <r_i><a_i^2> / (2 S_i)]
               - <gamma>/2 sum_t [||X_t||^2 + 2 k_t^T X_t + sum_i cen_i Phi_ti^2]

where ``S_i = S(sqrt(lambda_i))``, ``X_t = sum_i <a_i u_i> Phi_ti`` and
``k_t = <b> - target_t``. Only the factor of ``phi`` in dimension ``d``
depends on ``tau_d``; the other dimensions stay at their current values.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar

from .basis import SpectralSpec, spectral_density

log = logging.getLogger(__name__)

GRID_POINTS = 64
EDGE_FRAC = 1e-9


@dataclass
class IntervalObjective:
    """Everything ``h`` needs for one ``(region, dimension)`` pair.

    ``x`` holds the centred coordinate in dimension ``dim`` (n_l,), ``phi_rest``
    the product of the basis factors of the other dimensions (n_l, p), and
    ``lam_rest`` their eigenvalue contribution (p,).
    """

    x: np.ndarray
    phi_rest: np.ndarray
    lam_rest: np.ndarray
    r_mean: np.ndarray  # (p,)
    a2: np.ndarray  # (p,)
    au: np.ndarray  # (p, d_y)
    cen: np.ndarray  # (p,)
    carrier: np.ndarray  # (n_l, d_y) <b> - target
    gamma: float
    spectral: SpectralSpec
    d_x: int
    lower: float
    upper: float

    def __post_init__(self):
        if not self.lower < self.upper:
            raise ValueError("interval bounds must satisfy lower < upper")

    @property
    def p(self) -> int:
        return self.a2.size


def objective_h(obj: IntervalObjective, tau) -> np.ndarray:
    """``h`` at one or several candidate values of ``tau_d`` (vectorised)."""
    tau = np.atleast_1d(np.asarray(tau, dtype=float))
    if np.any((tau <= obj.lower) | (tau >= obj.upper)):
        raise ValueError(f"tau outside the admissible interval ({obj.lower}, {obj.upper})")
    i = np.arange(1, obj.p + 1, dtype=float)
    lam = (np.pi * i[None, :] / (2.0 * tau[:, None])) ** 2 + obj.lam_rest[None, :]
    S = spectral_density(obj.spectral, np.sqrt(lam), d_x=obj.d_x)  # (m, p)
    h_prior = np.sum(-0.5 * np.log(S) - obj.r_mean * obj.a2 / (2.0 * S), axis=1)

    arg = np.pi * i[None, None, :] * (obj.x[None, :, None] + tau[:, None, None]) / (2.0 * tau[:, None, None])
    Phi = np.sin(arg) / np.sqrt(tau)[:, None, None] * obj.phi_rest[None]  # (m, n, p)
    X = Phi @ obj.au  # (m, n, d)
    lik = (
        np.sum(X**2, axis=(1, 2))
        + 2.0 * np.einsum("mtd,td->m", X, obj.carrier)
        + np.einsum("mtp,p->m", Phi**2, obj.cen)
    )
    return h_prior - 0.5 * obj.gamma * lik


def optimize_tau(obj: IntervalObjective, incumbent: float) -> float:
    """Grid search plus bounded Brent/golden refinement; never worse than ``incumbent``."""
    width = obj.upper - obj.lower
    grid = obj.lower + width * np.arange(1, GRID_POINTS + 1) / (GRID_POINTS + 1)
    vals = np.concatenate([objective_h(obj, g) for g in np.array_split(grid, 8)])
    k = int(np.argmax(vals))
    best_tau, best_h = float(grid[k]), float(vals[k])
    edge = EDGE_FRAC * width  # the interval is open; search up to just inside it
    a = grid[k - 1] if k > 0 else obj.lower + edge
    b = grid[k + 1] if k < GRID_POINTS - 1 else obj.upper - edge
    try:
        res = minimize_scalar(
            lambda t: -float(objective_h(obj, t)[0]),
            bounds=(a, b),
            method="bounded",
            options={"xatol": 1e-6 * width},
        )
        if np.isfinite(res.fun) and -res.fun > best_h:
            best_tau, best_h = float(res.x), float(-res.fun)
    except (ValueError, FloatingPointError) as exc:  # pragma: no cover - defensive
        log.warning("interval refinement failed (%s); keeping grid optimum", exc)
    inc_ok = obj.lower < incumbent < obj.upper
    if inc_ok:
        h_inc = float(objective_h(obj, incumbent)[0])
        if not np.isfinite(best_h) or best_h <= h_inc:
            return float(incumbent)
    elif not np.isfinite(best_h):
        log.warning("interval search failed; keeping incumbent")
        return float(incumbent)
    return best_tau


def build_objective(
    Xc: np.ndarray,
    tau: np.ndarray,
    dim: int,
    lower: float,
    upper: float,
    spectral: SpectralSpec,
    r_mean: np.ndarray,
    a2: np.ndarray,
    au: np.ndarray,
    cen: np.ndarray,
    carrier: np.ndarray,
    gamma: float,
) -> IntervalObjective:
    """Precompute the cross-dimension factors for dimension ``dim`` of one region."""
    Xc = np.asarray(Xc, dtype=float).reshape(len(carrier), -1)
    tau = np.asarray(tau, dtype=float)
    p = a2.size
    i = np.arange(1, p + 1, dtype=float)
    others = [k for k in range(tau.size) if k != dim]
    phi_rest = np.ones((Xc.shape[0], p))
    lam_rest = np.zeros(p)
    for k in others:
        phi_rest *= np.sin(np.pi * i * (Xc[:, k, None] + tau[k]) / (2.0 * tau[k])) / np.sqrt(tau[k])
        lam_rest += (np.pi * i / (2.0 * tau[k])) ** 2
    return IntervalObjective(
        x=Xc[:, dim],
        phi_rest=phi_rest,
        lam_rest=lam_rest,
        r_mean=r_mean,
        a2=a2,
        au=au,
        cen=cen,
        carrier=carrier,
        gamma=float(gamma),
        spectral=spectral,
        d_x=tau.size,
        lower=float(lower),
        upper=float(upper),
    )


def optimize_region(
    Xc, tau, lower, upper, spectral, r_mean, a2, au, cen, carrier, gamma, passes: int = 2
) -> np.ndarray:
    """Coordinate-wise optimisation of all dimensions of one region's ``tau``."""
    tau = np.array(tau, dtype=float)
    for _ in range(passes):
        for dim in range(tau.size):
            obj = build_objective(
                Xc, tau, dim, lower[dim], upper[dim], spectral, r_mean, a2, au, cen, carrier, gamma
            )
            tau[dim] = optimize_tau(obj, tau[dim])
        if tau.size == 1:
            break
    return tau
