"""Training driver, model configuration and the serialisable trained model."""

from __future__ import annotations

import dataclasses
import io
import logging
import os
import tempfile
from dataclasses import dataclass, field

import numpy as np

from . import interval
from .basis import SpectralSpec, design_matrix, prior_variances
from .inference import (
    LevelState,
    Priors,
    SharedPrior,
    init_level,
    run_to_convergence,
)
from .partition import PartitionTree, RegionBoxes, build_partition, region_boxes

log = logging.getLogger(__name__)

FORMAT_VERSION = 1
MODES = ("ci", "fi")


@dataclass(frozen=True)
class ModelConfig:
    """Settings of one training run.

    ``mode`` is ``"ci"`` (conditionally independent resolutions sharing axes,
    precisions and index maps) or ``"fi"`` (fully independent). ``p = None``
    selects ``min(n, 100)`` basis functions. ``tau_update_period`` is the
    number of interval re-estimations per resolution (0 disables them).
    """

    m: int = 0
    q: int = 2
    p: int | None = None
    mode: str = "ci"
    family: str = "matern"
    nu: float = 1.5
    lengthscale: float = 1.0
    variance: float = 1.0
    sweeps_per_resolution: int = 200
    convergence_tol: float = 1e-6
    tau_update_period: int = 1
    seed: int = 0
    prior_alpha: float = 1e-3
    prior_beta: float = 1e-3
    prior_theta: float = 1e-3
    prior_c: float = 1e-3
    prior_d: float = 1e-3

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.m < 0 or self.q < 2:
            raise ValueError("need m >= 0 and q >= 2")
        if self.p is not None and self.p < 1:
            raise ValueError("p must be positive")
        if self.sweeps_per_resolution < 1 or not self.convergence_tol > 0:
            raise ValueError("need sweeps_per_resolution >= 1 and convergence_tol > 0")
        if self.tau_update_period < 0:
            raise ValueError("tau_update_period must be >= 0")
        self.spectral  # validates the kernel fields

    @property
    def spectral(self) -> SpectralSpec:
        return SpectralSpec(self.family, self.nu, self.lengthscale, self.variance)

    @property
    def priors(self) -> Priors:
        return Priors(self.prior_alpha, self.prior_beta, 0.0, self.prior_theta, self.prior_c, self.prior_d)

    def replace(self, **kw) -> "ModelConfig":
        return dataclasses.replace(self, **kw)

    def to_text(self) -> str:
        lines = []
        for f in dataclasses.fields(self):
            val = getattr(self, f.name)
            lines.append(f"{f.name} = {'auto' if val is None else val}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "ModelConfig":
        """Parse ``key = value`` lines; ``#`` starts a comment, unknown keys are errors."""
        types = {f.name: f.type for f in dataclasses.fields(cls)}
        kw = {}
        for no, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"config line {no}: expected 'key = value', got {raw!r}")
            key, val = (s.strip() for s in line.split("=", 1))
            if key not in types:
                raise ValueError(f"config line {no}: unknown key {key!r}")
            kw[key] = _coerce(key, types[key], val, no)
        return cls(**kw)

    @classmethod
    def from_file(cls, path) -> "ModelConfig":
        with open(path, encoding="utf-8") as fh:
            return cls.from_text(fh.read())


def _coerce(key: str, typ: str, val: str, no: int):
    try:
        if "int | None" in typ:
            return None if val.lower() in ("auto", "none") else int(val)
        if typ == "int":
            return int(val)
        if typ == "float":
            return float(val)
        return val
    except ValueError:
        raise ValueError(f"config line {no}: bad value {val!r} for {key}") from None


@dataclass
class Standardizer:
    """Per-column affine map fitted on training targets."""

    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, Y) -> "Standardizer":
        Y = np.asarray(Y, dtype=float)
        std = Y.std(axis=0)
        if np.any(~(std > 0)):
            raise ValueError("every output column needs a positive standard deviation")
        return cls(Y.mean(axis=0), std)

    @classmethod
    def identity(cls, d: int) -> "Standardizer":
        return cls(np.zeros(d), np.ones(d))

    def transform(self, Y) -> np.ndarray:
        return (np.asarray(Y, dtype=float) - self.mean) / self.std

    def inverse(self, Z) -> np.ndarray:
        return np.asarray(Z, dtype=float) * self.std + self.mean


LEVEL_KEYS = (
    "tau", "center", "half_width", "group",
    "B", "M", "kappa", "UU", "alpha", "beta", "omega",
    "v", "zeta", "zt", "au", "a2", "cen",
    "nu", "theta", "c", "dd", "elbo",
)


@dataclass
class TrainedModel:
    """Posterior state of every resolution plus what prediction needs.

    ``levels[j]`` maps the names in ``LEVEL_KEYS`` to arrays; shared posteriors
    have a leading group axis and ``group[l]`` is the group of region ``l``.
    """

    config: ModelConfig
    d_x: int
    d_y: int
    p: int
    tree: PartitionTree
    boxes: RegionBoxes
    standardizer: Standardizer
    levels: list[dict] = field(default_factory=list)

    @property
    def m(self) -> int:
        return len(self.levels) - 1

    def truncate(self, m: int) -> "TrainedModel":
        """The same model restricted to resolutions ``0..m``.

        Resolution ``j`` only depends on coarser ones, so this equals a fit
        with ``config.m = m`` (same data, settings and seed).
        """
        if not 0 <= m <= self.m:
            raise ValueError(f"cannot truncate a depth-{self.m} model to depth {m}")
        boxes = RegionBoxes(self.boxes.lo[: m + 1], self.boxes.hi[: m + 1], self.boxes.open_hi[: m + 1])
        return TrainedModel(self.config.replace(m=m), self.d_x, self.d_y, self.p, self.tree,
                            boxes, self.standardizer, self.levels[: m + 1])

    def save(self, path) -> None:
        """Write an ``.npz`` container atomically."""
        arrays = {
            "format_version": np.array(FORMAT_VERSION),
            "config": np.array(self.config.to_text()),
            "shape": np.array([self.d_x, self.d_y, self.p, self.tree.n, self.tree.m, self.tree.q]),
            "partition": self.tree.as_array(),
            "y_mean": self.standardizer.mean,
            "y_std": self.standardizer.std,
        }
        for j, lev in enumerate(self.levels):
            for k in LEVEL_KEYS:
                arrays[f"L{j}_{k}"] = lev[k]
            arrays[f"L{j}_lo"] = self.boxes.lo[j]
            arrays[f"L{j}_hi"] = self.boxes.hi[j]
            arrays[f"L{j}_open_hi"] = self.boxes.open_hi[j]
        buf = io.BytesIO()
        np.savez(buf, **arrays)
        atomic_write_bytes(path, buf.getvalue())

    @classmethod
    def load(cls, path) -> "TrainedModel":
        with np.load(path, allow_pickle=False) as z:
            version = int(z["format_version"])
            if version != FORMAT_VERSION:
                raise ValueError(f"unsupported model format version {version}")
            config = ModelConfig.from_text(str(z["config"]))
            d_x, d_y, p, n, m, q = (int(v) for v in z["shape"])
            tree = PartitionTree.from_array(n, m, q, z["partition"])
            levels, lo, hi, op = [], [], [], []
            for j in range(m + 1):
                if f"L{j}_tau" not in z:
                    break
                levels.append({k: z[f"L{j}_{k}"] for k in LEVEL_KEYS})
                lo.append(z[f"L{j}_lo"])
                hi.append(z[f"L{j}_hi"])
                op.append(z[f"L{j}_open_hi"])
            std = Standardizer(z["y_mean"], z["y_std"])
        return cls(config, d_x, d_y, p, tree, RegionBoxes(tuple(lo), tuple(hi), tuple(op)), std, levels)


def atomic_write_bytes(path, data: bytes) -> None:
    """Write to a temporary sibling and rename, so readers never see partial files."""
    path = os.fspath(path)
    folder = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=folder, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# ---------------------------------------------------------------------------
# training


def region_geometry(boxes: RegionBoxes, level: int, X: np.ndarray, floor_frac: float = 1e-3):
    """Centres and half-widths ``L`` of the regions of ``level``.

    ``L`` is floored at ``floor_frac`` times the global half-range so that a
    region holding a single distinct input still gets a proper box.
    """
    global_half = 0.5 * (X.max(axis=0) - X.min(axis=0))
    floor = np.where(global_half > 0, floor_frac * global_half, floor_frac)
    return boxes.center(level), np.maximum(boxes.half_width(level), floor)


def initial_tau(L: np.ndarray, p: int) -> np.ndarray:
    """``2 L``, pulled inside ``(L, L + p / L)`` where that interval is narrower."""
    return np.minimum(2.0 * L, L + 0.5 * p / L)


def _design(X, center, tau, tree: PartitionTree, level: int, p: int):
    starts, stops = tree.starts(level), tree.starts(level) + tree.sizes(level)
    Phi = np.empty((X.shape[0], p))
    for l, (a, b) in enumerate(zip(starts, stops)):
        Phi[a:b] = design_matrix(X[a:b] - center[l], tau[l], p)
    return Phi


def _set_basis(st: LevelState, X, center, tau, tree, level, p, spectral) -> None:
    st.Phi = _design(X, center, tau, tree, level, p)
    st.S = np.stack([prior_variances(spectral, p, t) for t in tau])
    st.sphi2 = st.rsum(st.Phi**2)
    st.refresh_residual()


def _update_intervals(st: LevelState, X, center, tau, L, config: ModelConfig, p) -> np.ndarray:
    tau = tau.copy()
    lab_starts = st.starts
    r_all = st.r_mean
    gam = st.gamma
    for l in range(st.n_regions):
        a, b = lab_starts[l], lab_starts[l] + st.sizes[l]
        carrier = st.nu[l] - st.target[a:b]
        tau[l] = interval.optimize_region(
            X[a:b] - center[l], tau[l], L[l], L[l] + p / L[l], config.spectral,
            r_all[st.group[l]], st.a2[l], st.au[l], st.cen[l], carrier, gam[l],
        )
    return tau


def _freeze(st: LevelState, tau, center, L) -> dict:
    return {
        "tau": tau.copy(), "center": center.copy(), "half_width": L.copy(), "group": st.group.copy(),
        "B": st.B.copy(), "M": st.M.copy(), "kappa": st.kappa.copy(), "UU": st.UU.copy(),
        "alpha": st.alpha.copy(), "beta": st.beta.copy(), "omega": st.omega.copy(),
        "v": st.v.copy(), "zeta": st.zeta.copy(), "zt": st.zt.copy(), "au": st.au.copy(),
        "a2": st.a2.copy(), "cen": st.cen.copy(), "nu": st.nu.copy(), "theta": st.theta.copy(),
        "c": st.c.copy(), "dd": st.dd.copy(),
        "elbo": np.array([h["total"] for h in st.history]),
    }


def fit(X, Y, config: ModelConfig = ModelConfig(), standardize: bool = True,
        return_states: bool = False):
    """Train a multiresolution model on inputs ``X`` (n, d_x) and targets ``Y`` (n, d_y).

    One-dimensional inputs are sorted first so that the contiguous index
    blocks of the partition are input intervals. With ``standardize`` the
    targets are centred and scaled per column and the model works in that
    space. ``return_states`` also returns the final :class:`LevelState` of
    every resolution (useful for diagnostics and tests).
    """
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if Y.ndim != 2 or Y.shape[0] != X.shape[0]:
        raise ValueError("X and Y must have the same number of rows and Y must be 2-D")
    if Y.shape[1] < 2:
        raise ValueError("the axis model needs at least two output dimensions")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(Y))):
        raise ValueError("inputs and targets must be finite")
    n, d_x = X.shape
    d_y = Y.shape[1]
    if d_x == 1:
        order = np.argsort(X[:, 0], kind="stable")
        X, Y = X[order], Y[order]
    std = Standardizer.fit(Y) if standardize else Standardizer.identity(d_y)
    Z = std.transform(Y)

    p = config.p if config.p is not None else min(n, 100)
    spectral = config.spectral
    priors = config.priors
    tree = build_partition(n, config.m, config.q)
    boxes = region_boxes(tree, X)

    offset = np.zeros_like(Z)  # summed lower-resolution predictive means
    tr_cov = np.zeros(n)  # summed lower-resolution predictive variances (traces)
    prev_gamma_t = None
    prev: LevelState | None = None
    levels, states = [], []
    model = TrainedModel(config, d_x, d_y, p, tree, boxes, std, levels)

    for j in range(config.m + 1):
        R = tree.n_regions(j)
        starts, sizes = tree.starts(j), tree.sizes(j)
        center, L = region_geometry(boxes, j, X)
        tau = np.stack([initial_tau(Ll, p) for Ll in L])
        Phi = _design(X, center, tau, tree, j, p)
        S = np.stack([prior_variances(spectral, p, t) for t in tau])
        target = Z - offset

        shared = config.mode == "ci" or j == 0
        if shared:
            group = np.zeros(R, dtype=np.int64)
            if prev is None:
                prior = SharedPrior.fresh(1, p, d_y, priors)
                warm = None
            else:
                prior = SharedPrior(prev.B.copy(), prev.log_c.copy(), prev.alpha.copy(), prev.beta.copy())
                warm = {"B": prev.B, "alpha": prev.alpha, "beta": prev.beta}
        else:
            group = np.arange(R, dtype=np.int64)
            prior = SharedPrior.fresh(R, p, d_y, priors)
            warm = None

        extra = None
        if j > 0:
            per_t = d_y / prev_gamma_t + tr_cov
            extra = np.add.reduceat(per_t, starts)
        st = init_level(Phi, S, target, starts, sizes, group, prior, priors,
                        extra=extra, warm=warm, update_map=shared)
        try:
            sweeps = run_to_convergence(st, config.sweeps_per_resolution, config.convergence_tol)
            for _ in range(config.tau_update_period):
                tau = _update_intervals(st, X, center, tau, L, config, p)
                _set_basis(st, X, center, tau, tree, j, p, spectral)
                sweeps += run_to_convergence(st, config.sweeps_per_resolution, config.convergence_tol)
        except FloatingPointError as exc:
            raise FloatingPointError(f"resolution {j}: {exc}") from exc
        log.info("resolution %d: %d regions, %d sweeps, bound %.6g", j, R, sweeps, st.history[-1]["total"])

        lev = _freeze(st, tau, center, L)
        levels.append(lev)
        states.append(st)

        lab = st.labels
        offset = offset + (st.target - st.resid)
        var_au = st.a2 - np.sum(st.au**2, axis=2)  # a2 * tr(UU) - ||<au>||^2, tr(UU) = 1
        tr_cov = tr_cov + d_y / (st.theta * st.gamma)[lab] + np.einsum("tp,tp->t", st.Phi**2, var_au[lab])
        prev_gamma_t = st.gamma[lab]
        prev = st

    return (model, states) if return_states else model
