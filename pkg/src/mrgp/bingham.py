"""Bingham distribution on the unit sphere ``S^{d-1}``.

The density is ``C(kappa)^-1 exp(u^T B u)`` with ``B = M diag(kappa) M^T``.
``C`` is taken with respect to the (unnormalised) surface measure, so a
uniform distribution on the circle has ``C = 2 pi``.

The normaliser is evaluated with the saddle-point approximation of Kume and
Wood (2005), third-order variant ``C3 = C1 * exp(T)``. Moments
``rho = d log C / d kappa`` are the exact gradient of that approximation,
which keeps ``sum(rho) == 1`` and makes the posterior entropy consistent with
the normaliser used in the objective.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import integrate
from scipy.special import gammaln, ive

KAPPA_FLOOR = -1e6


def canonicalize(kappa) -> np.ndarray:
    """Shift ``kappa`` so its largest entry is 0 (same distribution)."""
    kappa = np.asarray(kappa, dtype=float)
    return kappa - kappa.max(axis=-1, keepdims=True)


def _solve_saddle(lam: np.ndarray, tol: float = 1e-12, max_iter: int = 200,
                  t0: np.ndarray | None = None) -> np.ndarray:
    """Root ``t < min(lam)`` of ``0.5 * sum(1 / (lam - t)) = 1`` along the last axis.

    The root lies in ``[min(lam) - d/2, min(lam) - 1/2]``. Newton's method
    started at the upper end approaches it monotonically (the function is
    increasing and convex in ``t``); ``t0`` may supply a closer start, and a
    bisection step is taken whenever an iterate leaves the bracket.
    """
    d = lam.shape[-1]
    lmin = lam.min(axis=-1)
    lo = lmin - 0.5 * d
    hi = lmin - 0.5
    t = hi.copy()
    if t0 is not None:
        t0 = np.asarray(t0, dtype=float) + lmin
        t = np.where(np.isfinite(t0), np.clip(t0, lo, hi), hi)
    for _ in range(max_iter):
        e = lam - t[..., None]
        g = 0.5 * np.sum(1.0 / e, axis=-1) - 1.0
        dg = 0.5 * np.sum(e**-2, axis=-1)
        hi = np.where(g > 0, np.minimum(hi, t), hi)
        lo = np.where(g < 0, np.maximum(lo, t), lo)
        step = g / dg
        t_new = t - step
        bad = ~((t_new > lo) & (t_new < hi)) & (g != 0)
        t_new = np.where(bad, 0.5 * (lo + hi), t_new)
        done = np.abs(t_new - t) <= tol * (1.0 + np.abs(t))
        t = t_new
        if np.all(done):
            break
    else:
        raise FloatingPointError("saddle-point equation did not converge")
    return t


def _prepare(kappa) -> tuple[np.ndarray, np.ndarray]:
    kappa = np.asarray(kappa, dtype=float)
    if kappa.shape[-1] < 2:
        raise ValueError("Bingham distribution needs dimension >= 2")
    if not np.all(np.isfinite(kappa)):
        raise ValueError("non-finite Bingham parameters")
    shift = kappa.max(axis=-1)
    lam = -np.maximum(kappa - shift[..., None], KAPPA_FLOOR)
    return lam, shift


def log_norm_const_and_rho(kappa, t0=None, return_root: bool = False):
    """Saddle-point ``log C(kappa)`` and its gradient ``rho`` (batched on the last axis).

    ``t0`` is an optional starting guess for the saddle-point root in the
    canonical parametrisation; ``return_root`` also returns the root found.
    """
    lam, shift = _prepare(kappa)
    d = lam.shape[-1]
    t = _solve_saddle(lam, t0=t0)
    e = lam - t[..., None]
    inv = 1.0 / e
    s1, s2, s3, s4, s5 = (np.sum(inv**k, axis=-1) for k in range(1, 6))
    T = 1.5 * s4 / s2**2 - (5.0 / 3.0) * s3**2 / s2**3
    log_c = (
        0.5 * np.log(2.0)
        + 0.5 * (d - 1) * np.log(np.pi)
        - 0.5 * np.log(0.5 * s2)
        - 0.5 * np.sum(np.log(e), axis=-1)
        - t
        + T
    )

    ex = lambda a: a[..., None]  # noqa: E731
    dt = inv**2 / ex(s2)
    ds2 = -2.0 * (inv**3 - dt * ex(s3))
    ds3 = -3.0 * (inv**4 - dt * ex(s4))
    ds4 = -4.0 * (inv**5 - dt * ex(s5))
    dT2 = -3.0 * s4 / s2**3 + 5.0 * s3**2 / s2**4
    dT3 = -(10.0 / 3.0) * s3 / s2**3
    dT4 = 1.5 / s2**2
    grad_lam = (
        -0.5 * ds2 / ex(s2)
        - 0.5 * (inv - dt * ex(s1))
        - dt
        + ex(dT2) * ds2
        + ex(dT3) * ds3
        + ex(dT4) * ds4
    )
    if return_root:
        return log_c + shift, -grad_lam, t
    return log_c + shift, -grad_lam


def log_norm_const(kappa, d: int | None = None) -> np.ndarray:
    kappa = np.asarray(kappa, dtype=float)
    if d is not None and kappa.shape[-1] != d:
        raise ValueError(f"kappa has dimension {kappa.shape[-1]}, expected {d}")
    return log_norm_const_and_rho(kappa)[0]


def moment_rho(kappa, d: int | None = None) -> np.ndarray:
    """``E[(mu_k^T u)^2]`` along each eigenvector; sums to one."""
    kappa = np.asarray(kappa, dtype=float)
    if d is not None and kappa.shape[-1] != d:
        raise ValueError(f"kappa has dimension {kappa.shape[-1]}, expected {d}")
    return log_norm_const_and_rho(kappa)[1]


@dataclass
class BinghamParams:
    """Parameter matrix ``B`` with its eigendecomposition ``B = M diag(kappa) M^T``.

    Arrays may carry leading batch axes; the last two axes of ``B``/``M`` and
    the last axis of ``kappa`` are the sphere dimension.
    """

    B: np.ndarray
    M: np.ndarray
    kappa: np.ndarray

    @classmethod
    def from_matrix(cls, B) -> "BinghamParams":
        B = np.asarray(B, dtype=float)
        B = 0.5 * (B + np.swapaxes(B, -1, -2))
        if not np.all(np.isfinite(B)):
            raise FloatingPointError("non-finite Bingham parameter matrix")
        kappa, M = np.linalg.eigh(B)
        return cls(B, M, kappa)

    @classmethod
    def uniform(cls, d: int, batch: tuple[int, ...] = ()) -> "BinghamParams":
        B = np.zeros(batch + (d, d))
        M = np.broadcast_to(np.eye(d), batch + (d, d)).copy()
        return cls(B, M, np.zeros(batch + (d,)))

    @property
    def d(self) -> int:
        return self.kappa.shape[-1]

    def log_norm_const(self) -> np.ndarray:
        return log_norm_const(self.kappa)

    def rho(self) -> np.ndarray:
        return moment_rho(self.kappa)

    def second_moment(self) -> np.ndarray:
        return second_moment(self)

    def log_density_unnormalized(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        return np.einsum("...i,...ij,...j->...", u, self.B, u)


def second_moment(params: BinghamParams) -> np.ndarray:
    """``<u u^T> = sum_k rho_k mu_k mu_k^T``."""
    rho = moment_rho(params.kappa)
    return np.einsum("...ik,...k,...jk->...ij", params.M, rho, params.M)


# ---------------------------------------------------------------------------
# independent reference computations


def _sphere_area(d: int) -> float:
    return float(np.exp(np.log(2.0) + 0.5 * d * np.log(np.pi) - gammaln(0.5 * d)))


def _quad(f, a, b):
    val, _ = integrate.quad(f, a, b, epsabs=1e-11, epsrel=1e-11, limit=500)
    return val


def _circle_integrals(k1: float, k2: float):
    """``int exp(k1 cos^2 + k2 sin^2)`` with ``cos^2`` / ``sin^2`` weights, over [0, 2 pi]."""
    f = lambda th, w: w(th) * np.exp(k1 * np.cos(th) ** 2 + k2 * np.sin(th) ** 2)  # noqa: E731
    one = lambda th: 1.0  # noqa: E731
    c = _quad(lambda th: f(th, one), 0.0, 2 * np.pi)
    e1 = _quad(lambda th: f(th, lambda x: np.cos(x) ** 2), 0.0, 2 * np.pi)
    e2 = _quad(lambda th: f(th, lambda x: np.sin(x) ** 2), 0.0, 2 * np.pi)
    return c, e1, e2


def _sphere3_integrals(k1: float, k2: float, k3: float):
    """Same for ``S^2``; the azimuthal integral is done with Bessel functions.

    ``int_0^{2pi} exp(a cos^2 + b sin^2) = 2 pi exp((a+b)/2) I0((a-b)/2)`` and the
    ``cos^2``-weighted version is ``pi exp((a+b)/2) (I0 + I1)((a-b)/2)``.
    """

    def azim(s):
        x = 0.5 * (k1 - k2) * s
        scale = np.exp(max(k1, k2) * s)
        i0, i1 = ive(0, x), ive(1, x)
        return scale * 2 * np.pi * i0, scale * np.pi * (i0 + i1), scale * np.pi * (i0 - i1)

    def parts(th):
        s = np.sin(th) ** 2
        c2 = np.cos(th) ** 2
        w = np.sin(th) * np.exp(k3 * c2)
        a0, a1, a2 = azim(s)
        return w, s, c2, a0, a1, a2

    c = _quad(lambda th: (lambda w, s, c2, a0, a1, a2: w * a0)(*parts(th)), 0.0, np.pi)
    e1 = _quad(lambda th: (lambda w, s, c2, a0, a1, a2: w * s * a1)(*parts(th)), 0.0, np.pi)
    e2 = _quad(lambda th: (lambda w, s, c2, a0, a1, a2: w * s * a2)(*parts(th)), 0.0, np.pi)
    e3 = _quad(lambda th: (lambda w, s, c2, a0, a1, a2: w * c2 * a0)(*parts(th)), 0.0, np.pi)
    return c, e1, e2, e3


def log_norm_const_oracle(kappa, d: int | None = None, method: str = "quad",
                          n_samples: int = 1_000_000, seed: int = 0):
    """Reference ``log C(kappa)`` by quadrature (``d <= 3``) or Monte Carlo (``d <= 10``).

    Quadrature returns a float. Monte Carlo returns ``(log C, standard error of
    log C)`` from ``n_samples`` uniform points on the sphere.
    """
    kappa = np.asarray(kappa, dtype=float).ravel()
    d = kappa.size if d is None else d
    if kappa.size != d:
        raise ValueError("kappa length does not match d")
    shift = kappa.max()
    k = kappa - shift
    if method == "quad":
        if d == 2:
            return float(np.log(_circle_integrals(k[0], k[1])[0]) + shift)
        if d == 3:
            return float(np.log(_sphere3_integrals(k[0], k[1], k[2])[0]) + shift)
        raise ValueError(f"quadrature oracle supports d in (2, 3), got {d}")
    if method == "mc":
        if not 2 <= d <= 10:
            raise ValueError(f"Monte Carlo oracle supports 2 <= d <= 10, got {d}")
        rng = np.random.default_rng(seed)
        u = rng.standard_normal((n_samples, d))
        u /= np.linalg.norm(u, axis=1, keepdims=True)
        w = np.exp(u**2 @ k)
        mean = w.mean()
        se = w.std(ddof=1) / np.sqrt(n_samples) / mean
        return float(np.log(_sphere_area(d) * mean) + shift), float(se)
    raise ValueError(f"unknown oracle method {method!r}")


def moment_rho_oracle(kappa) -> np.ndarray:
    """Reference ``E[u_k^2]`` under ``diag(kappa)`` by quadrature (``d`` in 2, 3)."""
    k = canonicalize(np.asarray(kappa, dtype=float).ravel())
    if k.size == 2:
        c, e1, e2 = _circle_integrals(k[0], k[1])
        return np.array([e1, e2]) / c
    if k.size == 3:
        c, e1, e2, e3 = _sphere3_integrals(k[0], k[1], k[2])
        return np.array([e1, e2, e3]) / c
    raise ValueError("quadrature oracle supports d in (2, 3)")
