"""Structured mean-field updates for one resolution of the multiresolution model.

A :class:`LevelState` holds everything that changes while resolution ``j`` is
trained: the per-region scale posteriors ``q(a | U)``, the bias/noise
posteriors ``q(b, gamma)``, and the shared posteriors ``q(U)``, ``q(r)``,
``q(Gamma)``. Lower resolutions enter only through the residual targets and
the constant uncertainty terms collected in ``extra``.

Shared quantities carry a leading *group* axis. In the conditionally
independent mode there is one group for the whole resolution; in the fully
independent mode every region is its own group, which cuts all sharing
between regions and resolutions.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.special import digamma, gammaln, logsumexp

from .bingham import log_norm_const_and_rho

log = logging.getLogger(__name__)

LOG_2PI = np.log(2.0 * np.pi)


@dataclass(frozen=True)
class Priors:
    """Noninformative hyper-parameters of the Gamma and Normal-Gamma priors."""

    alpha: float = 1e-3
    beta: float = 1e-3
    nu0: float = 0.0
    theta0: float = 1e-3
    c0: float = 1e-3
    d0: float = 1e-3


@dataclass
class SharedPrior:
    """Prior over the shared variables entering a resolution (index ``k``)."""

    B: np.ndarray  # (G, p, d, d)
    log_c: np.ndarray  # (G, p)
    alpha: np.ndarray  # (G, p)
    beta: np.ndarray  # (G, p)

    @classmethod
    def fresh(cls, groups: int, p: int, d: int, priors: Priors) -> "SharedPrior":
        log_c, _ = log_norm_const_and_rho(np.zeros((groups, p, d)))
        return cls(
            np.zeros((groups, p, d, d)),
            log_c,
            np.full((groups, p), priors.alpha),
            np.full((groups, p), priors.beta),
        )


@dataclass
class LevelState:
    """Variational state of one resolution. ``n`` samples, ``R`` regions, ``G`` groups."""

    starts: np.ndarray  # (R,)
    sizes: np.ndarray  # (R,)
    group: np.ndarray  # (R,) group of every region
    Phi: np.ndarray  # (n, p) basis evaluations with each sample's region basis
    S: np.ndarray  # (R, p) prior scale variances S(sqrt(lambda))
    target: np.ndarray  # (n, d) residual targets
    extra: np.ndarray  # (R,) constant uncertainty terms entering the noise update
    prior: SharedPrior
    priors: Priors
    # shared posteriors
    B: np.ndarray  # (G, p, d, d)
    M: np.ndarray
    kappa: np.ndarray  # (G, p, d)
    log_c: np.ndarray  # (G, p)
    UU: np.ndarray  # (G, p, d, d)
    alpha: np.ndarray  # (G, p)
    beta: np.ndarray
    omega: np.ndarray  # (G, p, p)
    log_omega_tilde: np.ndarray
    update_map: bool
    # per-region posteriors
    v: np.ndarray  # (R, p)
    zeta: np.ndarray
    zt: np.ndarray  # (R, p, d)
    au: np.ndarray  # (R, p, d)
    a2: np.ndarray  # (R, p)
    cen: np.ndarray
    nu: np.ndarray  # (R, d)
    theta: np.ndarray  # (R,)
    c: np.ndarray
    dd: np.ndarray
    resid: np.ndarray = field(default=None)  # (n, d) target - <b> - Phi <a u>
    sphi2: np.ndarray = field(default=None)  # (R, p) per-region sums of Phi**2
    saddle_t: np.ndarray = field(default=None)  # (G, p) last saddle-point roots
    history: list = field(default_factory=list)

    @property
    def n(self) -> int:
        return self.Phi.shape[0]

    @property
    def p(self) -> int:
        return self.Phi.shape[1]

    @property
    def d(self) -> int:
        return self.target.shape[1]

    @property
    def n_regions(self) -> int:
        return self.starts.size

    @property
    def n_groups(self) -> int:
        return self.B.shape[0]

    @property
    def labels(self) -> np.ndarray:
        return np.repeat(np.arange(self.n_regions), self.sizes)

    @property
    def gamma(self) -> np.ndarray:
        return self.c / self.dd

    @property
    def r_mean(self) -> np.ndarray:
        return self.alpha / self.beta

    @property
    def log_r_mean(self) -> np.ndarray:
        return digamma(self.alpha) - np.log(self.beta)

    def rsum(self, a: np.ndarray) -> np.ndarray:
        """Sum of per-sample rows over each region."""
        return np.add.reduceat(a, self.starts, axis=0)

    def group_sum(self, a: np.ndarray) -> np.ndarray:
        """Sum of per-region rows over each group."""
        if self.n_groups == 1:
            return a.sum(axis=0, keepdims=True)
        out = np.zeros((self.n_groups,) + a.shape[1:])
        np.add.at(out, self.group, a)
        return out

    def refresh_residual(self) -> None:
        lab = self.labels
        fit = np.einsum("tp,tpd->td", self.Phi, self.au[lab])
        self.resid = self.target - self.nu[lab] - fit


def init_level(
    Phi: np.ndarray,
    S: np.ndarray,
    target: np.ndarray,
    starts: np.ndarray,
    sizes: np.ndarray,
    group: np.ndarray,
    prior: SharedPrior,
    priors: Priors,
    extra: np.ndarray | None = None,
    warm: dict | None = None,
    update_map: bool = True,
) -> LevelState:
    """Prior-mean initialisation of a resolution.

    ``warm`` may carry ``B``, ``alpha`` and ``beta`` of the previous resolution
    to start the shared posteriors there instead of at the prior.
    """
    n, p = Phi.shape
    d = target.shape[1]
    R = starts.size
    G = int(group.max()) + 1
    if d < 2:
        raise ValueError("the output dimension must be at least 2")
    B = np.array(warm["B"], dtype=float) if warm else np.zeros((G, p, d, d))
    kappa, M = np.linalg.eigh(B)
    log_c, rho = log_norm_const_and_rho(kappa)
    UU = np.einsum("gpik,gpk,gpjk->gpij", M, rho, M)
    alpha = np.array(warm["alpha"], dtype=float) if warm else prior.alpha.copy()
    beta = np.array(warm["beta"], dtype=float) if warm else prior.beta.copy()
    omega = np.broadcast_to(np.eye(p), (G, p, p)).copy()
    st = LevelState(
        starts=np.asarray(starts, dtype=np.int64),
        sizes=np.asarray(sizes, dtype=np.int64),
        group=np.asarray(group, dtype=np.int64),
        Phi=Phi,
        S=S,
        target=target,
        extra=np.zeros(R) if extra is None else np.asarray(extra, dtype=float),
        prior=prior,
        priors=priors,
        B=B,
        M=M,
        kappa=kappa,
        log_c=log_c,
        UU=UU,
        alpha=alpha,
        beta=beta,
        omega=omega,
        log_omega_tilde=np.zeros((G, p, p)),
        update_map=update_map,
        v=np.zeros((R, p)),
        zeta=np.zeros((R, p)),
        zt=np.zeros((R, p, d)),
        au=np.zeros((R, p, d)),
        a2=np.zeros((R, p)),
        cen=np.zeros((R, p)),
        nu=np.full((R, d), priors.nu0),
        theta=np.full(R, priors.theta0),
        c=np.full(R, priors.c0),
        dd=np.full(R, priors.d0),
    )
    st.sphi2 = st.rsum(Phi**2)
    st.refresh_residual()
    if update_map:
        update_index_map(st)
    return st


# ---------------------------------------------------------------------------
# descriptive statistics


def joint_moments(zeta, v, zt, UU):
    """``<a u>``, ``<a^2>`` and ``<||a u - <a u>||^2>`` of ``q(a | u) q(u)``.

    Broadcasts over leading axes: ``zeta``/``v`` (...,), ``zt`` (..., d),
    ``UU`` (..., d, d).
    """
    zeta = np.asarray(zeta, dtype=float)
    v = np.asarray(v, dtype=float)
    Uz = np.einsum("...ij,...j->...i", UU, zt)
    au = zeta[..., None] * Uz
    quad = np.einsum("...i,...i->...", zt, Uz)
    a2 = 1.0 / v + zeta**2 * quad
    cen = 1.0 / v + zeta**2 * (quad - np.einsum("...i,...i->...", Uz, Uz))
    return au, a2, cen


def _set_moments(st: LevelState, i: int) -> None:
    UU = st.UU[st.group, i]
    au, a2, cen = joint_moments(st.zeta[:, i], st.v[:, i], st.zt[:, i], UU)
    delta = au - st.au[:, i]
    st.resid -= st.Phi[:, i, None] * delta[st.labels]
    st.au[:, i], st.a2[:, i], st.cen[:, i] = au, a2, cen


# ---------------------------------------------------------------------------
# updates


def _scale_params(st: LevelState, k: int, gam: np.ndarray) -> None:
    r = st.r_mean[st.group, k]
    v = r / st.S[:, k] + gam * st.sphi2[:, k]
    st.v[:, k] = v
    st.zeta[:, k] = gam / v
    st.zt[:, k] = st.rsum(st.Phi[:, k, None] * st.resid) + st.sphi2[:, k, None] * st.au[:, k]


def update_scales(st: LevelState, i: int | None = None) -> None:
    """Conditional scale posteriors ``q(a_i | u_i)`` of every region.

    Coordinate ascent over the basis index; ``i=None`` runs ``i = 0..p-1``.
    """
    idx = range(st.p) if i is None else [i]
    gam = st.gamma
    for k in idx:
        _scale_params(st, k, gam)
        _set_moments(st, k)


def axis_matrix(st: LevelState, i: int) -> np.ndarray:
    """Posterior Bingham parameter ``B_i`` of every group."""
    prior_term = np.einsum("gk,gkab->gab", st.omega[:, i], st.prior.B)
    w = 0.5 * st.gamma * st.zeta[:, i]
    data = w[:, None, None] * st.zt[:, i, :, None] * st.zt[:, i, None, :]
    return prior_term + st.group_sum(data)


def update_axes(st: LevelState, i: int | None = None) -> None:
    """Bingham posteriors ``q(u_i)``; refreshes the joint moments of index ``i``."""
    idx = range(st.p) if i is None else [i]
    for k in idx:
        _axis_params(st, k)
        _set_moments(st, k)


def _axis_params(st: LevelState, k: int) -> None:
    B = axis_matrix(st, k)
    B = 0.5 * (B + np.swapaxes(B, -1, -2))
    if not np.all(np.isfinite(B)):
        raise FloatingPointError(f"non-finite Bingham parameters for axis {k}")
    kappa, M = np.linalg.eigh(B)
    t0 = None if st.saddle_t is None else st.saddle_t[:, k]
    log_c, rho, t = log_norm_const_and_rho(kappa, t0=t0, return_root=True)
    if st.saddle_t is None:
        st.saddle_t = np.full(st.log_c.shape, np.nan)
    st.saddle_t[:, k] = t
    st.B[:, k], st.M[:, k], st.kappa[:, k], st.log_c[:, k] = B, M, kappa, log_c
    st.UU[:, k] = (M * rho[:, None, :]) @ np.swapaxes(M, -1, -2)


def update_block(st: LevelState, i: int) -> None:
    """Scales of index ``i`` in every region followed by the shared axis ``u_i``.

    Same result as ``update_scales(st, i)`` then ``update_axes(st, i)``; the
    intermediate moment refresh is skipped because the axis update only needs
    ``zeta``, ``z~`` and ``<gamma>``.
    """
    _scale_params(st, i, st.gamma)
    _axis_params(st, i)
    _set_moments(st, i)


def update_precisions(st: LevelState) -> None:
    """Gamma posteriors of the scale precisions ``r``."""
    counts = np.bincount(st.group, minlength=st.n_groups).astype(float)
    st.alpha = np.einsum("gik,gk->gi", st.omega, st.prior.alpha) + 0.5 * counts[:, None]
    st.beta = np.einsum("gik,gk->gi", st.omega, st.prior.beta) + 0.5 * st.group_sum(st.a2 / st.S)


def _balance_newton(log_w: np.ndarray, f: np.ndarray, g: np.ndarray, tol: float, max_iter: int = 100):
    """Damped Newton iteration on the scaling equations ``P 1 = 1``, ``P^T 1 = 1``.

    The support of near-permutation weights splits into weakly coupled
    blocks, each adding a null direction to the Jacobian, so the
    minimum-norm least-squares step is taken; the step is halved until the
    residual norm decreases. Returns ``(P, f, g)`` or ``None``.
    """
    p = log_w.shape[0]

    def residual(f, g):
        z = log_w + f[:, None] + g[None, :]
        if z.max() > 700.0:
            return np.inf, None
        P = np.exp(z)
        return np.hypot(np.linalg.norm(P.sum(axis=1) - 1.0), np.linalg.norm(P.sum(axis=0) - 1.0)), P

    r, P = residual(f, g)
    if P is None:
        return None
    for _ in range(max_iter):
        rs, cs = P.sum(axis=1), P.sum(axis=0)
        if max(np.abs(rs - 1.0).max(), np.abs(cs - 1.0).max()) < tol:
            return P, f, g
        H = np.block([[np.diag(rs), P], [P.T, np.diag(cs)]])
        step = np.linalg.lstsq(H, np.concatenate([1.0 - rs, 1.0 - cs]), rcond=1e-13)[0]
        t = 1.0
        while True:
            r_new, P_new = residual(f + t * step[:p], g + t * step[p:])
            if r_new < r:
                break
            t *= 0.5
            if t < 1e-8:
                return None
        f, g, r, P = f + t * step[:p], g + t * step[p:], r_new, P_new
    return None


def _sinkhorn_steps(log_w, f, g, n_steps: int, tol: float):
    err = np.inf
    P = None
    for _ in range(n_steps):
        f = -logsumexp(log_w + g[..., None, :], axis=-1)
        g = -logsumexp(log_w + f[..., :, None], axis=-2)
        P = np.exp(log_w + f[..., :, None] + g[..., None, :])
        err = np.abs(P.sum(axis=-1) - 1.0).max()
        if err < tol:
            break
    return P, f, g, err


def _balance_annealed(log_w: np.ndarray, tol: float):
    """Balance ``exp(s * log_w)`` for ``s`` doubling up to 1, warm-starting each stage.

    Potentials scale roughly linearly with ``s``, so the rescaled potentials
    of one stage are a good Newton start for the next.
    """
    spread = float(log_w.max() - log_w.min())
    s = min(1.0, 20.0 / spread) if spread > 0 else 1.0
    f = np.zeros(log_w.shape[0])
    g = np.zeros(log_w.shape[1])
    while True:
        Ls = s * log_w
        _, f, g, _ = _sinkhorn_steps(Ls, f, g, 20, tol)
        res = _balance_newton(Ls, f, g, tol)
        if res is None:
            return None
        P, f, g = res
        if s == 1.0:
            return P
        s_next = min(1.0, 2.0 * s)
        f, g = f * (s_next / s), g * (s_next / s)
        s = s_next


def sinkhorn(log_w: np.ndarray, tol: float = 1e-8, max_iter: int = 10_000) -> np.ndarray:
    """Doubly stochastic ``diag(eta) exp(log_w) diag(eta')`` by log-domain Sinkhorn.

    Works on a batch ``(..., p, p)``. If plain Sinkhorn has not balanced the
    batch to ``tol`` after ``min(max_iter, 100)`` sweeps, every batch member
    is finished by Newton's method (first from the Sinkhorn iterate, then
    with annealing of ``log_w``), falling back to the remaining Sinkhorn
    sweeps; raises if nothing reaches ``tol``.
    """
    log_w = np.asarray(log_w, dtype=float)
    f = np.zeros(log_w.shape[:-1])
    g = np.zeros(log_w.shape[:-2] + log_w.shape[-1:])
    first = min(max_iter, 100)
    P, f, g, err = _sinkhorn_steps(log_w, f, g, first, tol)
    if err < tol:
        return P
    flat_w = log_w.reshape((-1,) + log_w.shape[-2:])
    flat_f, flat_g = f.reshape(flat_w.shape[:2]), g.reshape(flat_w.shape[::2])
    out = np.empty_like(flat_w)
    for k in range(flat_w.shape[0]):
        res = _balance_newton(flat_w[k], flat_f[k], flat_g[k], tol)
        Pk = res[0] if res is not None else _balance_annealed(flat_w[k], tol)
        if Pk is None:
            break
        out[k] = Pk
    else:
        return out.reshape(log_w.shape)
    P, f, g, err = _sinkhorn_steps(log_w, f, g, max_iter - first, tol)
    if err < tol:
        return P
    raise FloatingPointError(f"Sinkhorn did not converge: row error {err:.3e} after {max_iter} sweeps")


def log_omega_tilde(st: LevelState) -> np.ndarray:
    """Log similarity between posterior axis ``i`` and prior axis ``k``."""
    pr = st.prior
    tr = np.einsum("gkab,giba->gik", pr.B, st.UU)
    a, b = pr.alpha[:, None, :], pr.beta[:, None, :]
    return (
        tr
        - pr.log_c[:, None, :]
        + a * np.log(b)
        - gammaln(a)
        + (a - 1.0) * st.log_r_mean[:, :, None]
        - b * st.r_mean[:, :, None]
    )


def update_index_map(st: LevelState) -> None:
    st.log_omega_tilde = log_omega_tilde(st)
    if st.update_map:
        st.omega = sinkhorn(st.log_omega_tilde)


def update_bias_noise(st: LevelState) -> None:
    """Normal-Gamma posteriors of the bias and noise precision of every region."""
    pr = st.priors
    lab = st.labels
    d = st.d
    r = st.resid + st.nu[lab]
    n_l = st.sizes.astype(float)
    st.theta = pr.theta0 + n_l
    nu0 = np.full(d, pr.nu0)
    st.nu = (pr.theta0 * nu0 + st.rsum(r)) / st.theta[:, None]
    st.c = pr.c0 + 0.5 * d * n_l
    dbar = (
        pr.theta0 * nu0 @ nu0
        - st.theta * np.sum(st.nu**2, axis=1)
        + st.rsum(np.sum(r**2, axis=1))
        + np.sum(st.sphi2 * st.cen, axis=1)
        + st.extra
    )
    st.dd = pr.d0 + 0.5 * dbar
    if np.any(~(st.dd > 0)):
        raise FloatingPointError("noise inverse-scale became non-positive")
    st.resid = r - st.nu[lab]


def update_remainders(st: LevelState, offset: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Posterior means and variance of the latent remainders ``z``.

    ``offset`` is the summed lower-resolution prediction at every sample.
    """
    mean = offset + st.target - st.resid
    var = 1.0 / st.gamma[st.labels]
    return mean, var


# ---------------------------------------------------------------------------
# objective


def gamma_kl(a, b, a0, b0):
    """``KL(Gamma(a, b) || Gamma(a0, b0))`` with inverse-scale ``b``."""
    return (a - a0) * digamma(a) - gammaln(a) + gammaln(a0) + a0 * (np.log(b) - np.log(b0)) + a * (b0 - b) / b


def gaussian_kl(m, v, m0, v0):
    """``KL(N(m, v) || N(m0, v0))`` for scalars or arrays of 1-D Gaussians."""
    return 0.5 * (np.log(v0 / v) + (v + (m - m0) ** 2) / v0 - 1.0)


def gamma_entropy(a, b):
    return a - np.log(b) + gammaln(a) + (1.0 - a) * digamma(a)


def elbo_terms(st: LevelState) -> dict:
    """Tractable lower-bound terms of the current resolution."""
    pr = st.priors
    d = st.d
    n_l = st.sizes.astype(float)
    gam = st.gamma
    log_gam = digamma(st.c) - np.log(st.dd)
    quad = st.rsum(np.sum(st.resid**2, axis=1)) + np.sum(st.sphi2 * st.cen, axis=1) + st.extra
    lik = np.sum(0.5 * d * n_l * (log_gam - LOG_2PI) - 0.5 * gam * quad - 0.5 * d * n_l / st.theta)

    nu0 = np.full(d, pr.nu0)
    kl_bias = np.sum(
        0.5 * d * (pr.theta0 / st.theta - 1.0 - np.log(pr.theta0 / st.theta))
        + 0.5 * pr.theta0 * gam * np.sum((st.nu - nu0) ** 2, axis=1)
        + gamma_kl(st.c, st.dd, pr.c0, pr.d0)
    )

    r = st.r_mean[st.group]
    log_r = st.log_r_mean[st.group]
    scales = np.sum(
        0.5 * log_r
        - 0.5 * np.log(2.0 * np.pi * st.S)
        - 0.5 * r * st.a2 / st.S
        + 0.5 * (LOG_2PI + 1.0 - np.log(st.v))
    )

    om = st.omega
    with np.errstate(divide="ignore", invalid="ignore"):
        ent_map = -np.sum(np.where(om > 0, om * np.log(om), 0.0))
    shared_prior = np.sum(om * st.log_omega_tilde)
    ent_axes = -np.sum(np.einsum("gpab,gpba->gp", st.B, st.UU) - st.log_c)
    ent_r = np.sum(gamma_entropy(st.alpha, st.beta))

    terms = {
        "likelihood": float(lik),
        "kl_bias_noise": float(kl_bias),
        "scales": float(scales),
        "shared_prior": float(shared_prior),
        "entropy_map": float(ent_map),
        "entropy_axes": float(ent_axes),
        "entropy_precision": float(ent_r),
    }
    total = lik - kl_bias + scales + shared_prior + ent_map + ent_axes + ent_r
    if not np.isfinite(total):
        raise FloatingPointError(f"non-finite lower bound: {terms}")
    terms["total"] = float(total)
    return terms


def sweep(st: LevelState) -> float:
    """One round of updates; returns the lower bound afterwards.

    The scales of index ``i`` in every region and the shared axis ``u_i`` are
    updated as a block before moving to ``i + 1``.
    """
    for i in range(st.p):
        update_block(st, i)
    update_precisions(st)
    update_index_map(st)
    update_bias_noise(st)
    terms = elbo_terms(st)
    st.history.append(terms)
    return terms["total"]


def run_to_convergence(st: LevelState, max_sweeps: int, tol: float) -> int:
    """Sweep until the relative change of the bound is below ``tol``."""
    prev = None
    for s in range(max_sweeps):
        cur = sweep(st)
        if prev is not None and abs(cur - prev) <= tol * max(1.0, abs(cur)):
            return s + 1
        prev = cur
    log.info("resolution stopped after %d sweeps without meeting tol=%g", max_sweeps, tol)
    return max_sweeps
