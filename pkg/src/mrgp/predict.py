"""Predictive distribution of a trained model and the evaluation metrics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .basis import design_matrix
from .model import TrainedModel
from .partition import locate_regions

LOG_2PI = np.log(2.0 * np.pi)


@dataclass
class PredictiveSummary:
    """Pointwise predictive moments in the model's (standardised) space.

    ``depth[t]`` is the finest resolution that contributed at point ``t``;
    ``regions[t, j]`` is the region used at resolution ``j`` (-1 if unused).
    """

    mean: np.ndarray  # (n, d)
    cov: np.ndarray  # (n, d, d)
    depth: np.ndarray  # (n,)
    regions: np.ndarray  # (n, m + 1)

    @property
    def var(self) -> np.ndarray:
        return np.diagonal(self.cov, axis1=1, axis2=2).copy()


def resolve_regions(model: TrainedModel, X: np.ndarray) -> np.ndarray:
    """Region of each point at every resolution over the resolved prefix.

    Resolution 0 is always used. Finer resolutions are used up to the first
    one at which the point falls in no region box (or in several).
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    n = X.shape[0]
    out = np.full((n, model.m + 1), -1, dtype=np.int64)
    out[:, 0] = 0
    ok = np.ones(n, dtype=bool)
    for j in range(1, model.m + 1):
        ids = locate_regions(model.boxes, j, X)
        ok &= ids >= 0
        out[ok, j] = ids[ok]
    return out


def level_contribution(model: TrainedModel, j: int, l: int, X: np.ndarray):
    """``f_bar`` and ``F_bar`` of region ``l`` of resolution ``j`` at the rows of ``X``."""
    lev = model.levels[j]
    g = int(lev["group"][l])
    Phi = design_matrix(X - lev["center"][l], lev["tau"][l], model.p)
    au = lev["au"][l]
    mean = lev["nu"][l] + Phi @ au
    W = lev["a2"][l][:, None, None] * lev["UU"][g] - au[:, :, None] * au[:, None, :]
    d = model.d_y
    cov = ((Phi**2) @ W.reshape(model.p, d * d)).reshape(-1, d, d)
    bias_var = 1.0 / (lev["theta"][l] * lev["c"][l] / lev["dd"][l])
    cov += bias_var * np.eye(d)
    return mean, cov


def predict(model: TrainedModel, X) -> PredictiveSummary:
    """Sum of the resolution contributions over each point's resolved prefix."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None] if model.d_x == 1 else X[None, :]
    if X.shape[1] != model.d_x:
        raise ValueError(f"expected {model.d_x} input columns, got {X.shape[1]}")
    n, d = X.shape[0], model.d_y
    mean = np.zeros((n, d))
    cov = np.zeros((n, d, d))
    regions = resolve_regions(model, X)
    for j in range(model.m + 1):
        ids = regions[:, j]
        for l in np.unique(ids[ids >= 0]):
            sel = ids == l
            mu, F = level_contribution(model, j, int(l), X[sel])
            mean[sel] += mu
            cov[sel] += F
    depth = np.sum(regions >= 0, axis=1) - 1
    return PredictiveSummary(mean, cov, depth, regions)


def predict_point(model: TrainedModel, x_star) -> PredictiveSummary:
    return predict(model, np.atleast_1d(np.asarray(x_star, dtype=float))[None, :])


def noise_variance(model: TrainedModel) -> float:
    """``1 / <gamma>`` of the root region."""
    lev = model.levels[0]
    return float(lev["dd"][0] / lev["c"][0])


def predictive_y_params(summary: PredictiveSummary, model: TrainedModel):
    """Mean and covariance of a new observation: ``F_bar + <gamma_0>^-1 I``."""
    cov = summary.cov + noise_variance(model) * np.eye(model.d_y)
    return summary.mean, cov


def rmse(pred, target) -> float:
    """Root mean squared error pooled over points and output dimensions."""
    pred = np.asarray(pred, dtype=float)
    target = np.asarray(target, dtype=float)
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch {pred.shape} vs {target.shape}")
    return float(np.sqrt(np.mean((pred - target) ** 2)))


def gaussian_logpdf(mean, cov, target) -> np.ndarray:
    """Per-point multivariate normal log-density (batched over the first axis)."""
    mean = np.atleast_2d(np.asarray(mean, dtype=float))
    target = np.atleast_2d(np.asarray(target, dtype=float))
    cov = np.asarray(cov, dtype=float)
    if cov.ndim == 2:
        cov = np.broadcast_to(cov, (mean.shape[0],) + cov.shape)
    try:
        L = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        raise FloatingPointError("predictive covariance is not positive definite") from None
    diff = (target - mean)[..., None]
    sol = np.linalg.solve(L, diff)[..., 0]
    logdet = 2.0 * np.sum(np.log(np.diagonal(L, axis1=-2, axis2=-1)), axis=-1)
    d = mean.shape[1]
    return -0.5 * (d * LOG_2PI + logdet + np.sum(sol**2, axis=-1))


def mll(mean, cov, target) -> float:
    """Mean log-likelihood of the targets under per-point Gaussians."""
    return float(np.mean(gaussian_logpdf(mean, cov, target)))


@dataclass
class Evaluation:
    rmse: float
    mll: float
    n: int


def evaluate_depths(model: TrainedModel, X, Y, chunk: int = 4096) -> list[Evaluation]:
    """``evaluate`` of every truncation ``model.truncate(m)``, ``m = 0..model.m``, in one pass.

    A truncated model uses the resolved prefix cut at ``m``, so its
    prediction is the running sum of the resolution contributions.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    Zs = model.standardizer.transform(Y)
    noise = noise_variance(model) * np.eye(model.d_y)
    sq = np.zeros(model.m + 1)
    ll = np.zeros(model.m + 1)
    for a in range(0, X.shape[0], chunk):
        Xc, Zc = X[a:a + chunk], Zs[a:a + chunk]
        regions = resolve_regions(model, Xc)
        mean = np.zeros(Zc.shape)
        cov = np.broadcast_to(noise, (Xc.shape[0],) + noise.shape).copy()
        for j in range(model.m + 1):
            ids = regions[:, j]
            for l in np.unique(ids[ids >= 0]):
                sel = ids == l
                mu, F = level_contribution(model, j, int(l), Xc[sel])
                mean[sel] += mu
                cov[sel] += F
            sq[j] += float(np.sum((mean - Zc) ** 2))
            ll[j] += float(np.sum(gaussian_logpdf(mean, cov, Zc)))
    n = X.shape[0]
    return [Evaluation(float(np.sqrt(sq[j] / (n * model.d_y))), ll[j] / n, n) for j in range(model.m + 1)]


def evaluate(model: TrainedModel, X, Y, chunk: int = 4096) -> Evaluation:
    """Test RMSE and MLL in standardised target space, processed in chunks."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    Zs = model.standardizer.transform(Y)
    sq, ll = 0.0, 0.0
    for a in range(0, X.shape[0], chunk):
        s = predict(model, X[a:a + chunk])
        mu, cov = predictive_y_params(s, model)
        sq += float(np.sum((mu - Zs[a:a + chunk]) ** 2))
        ll += float(np.sum(gaussian_logpdf(mu, cov, Zs[a:a + chunk])))
    n = X.shape[0]
    return Evaluation(float(np.sqrt(sq / (n * model.d_y))), ll / n, n)
