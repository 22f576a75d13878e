import numpy as np
import pytest

from mrgp.basis import SpectralSpec, design_matrix, prior_variances
from mrgp.interval import build_objective, objective_h, optimize_region, optimize_tau


def _problem(seed=0, d_x=1, n=15, p=6, d=2):
    rng = np.random.default_rng(seed)
    Xc = rng.uniform(-1, 1, size=(n, d_x))
    tau = np.full(d_x, 1.8)
    return dict(
        Xc=Xc, tau=tau, spectral=SpectralSpec(),
        r_mean=rng.uniform(0.5, 2, p), a2=rng.uniform(0.1, 1, p), au=rng.normal(size=(p, d)) * 0.3,
        cen=rng.uniform(0.01, 0.1, p), carrier=rng.normal(size=(n, d)), gamma=4.0,
    )


def _h_reference(pb, tau):
    """Direct evaluation with the library's basis and spectral density."""
    Phi = design_matrix(pb["Xc"], tau, pb["a2"].size)
    S = prior_variances(pb["spectral"], pb["a2"].size, tau)
    X = Phi @ pb["au"]
    prior = np.sum(-0.5 * np.log(S) - pb["r_mean"] * pb["a2"] / (2 * S))
    lik = np.sum(X**2) + 2 * np.sum(X * pb["carrier"]) + np.sum(Phi**2 * pb["cen"])
    return prior - 0.5 * pb["gamma"] * lik


def _obj(pb, dim=0, lower=1.0, upper=5.0):
    keys = ("spectral", "r_mean", "a2", "au", "cen", "carrier", "gamma")
    return build_objective(pb["Xc"], pb["tau"], dim, lower, upper, *(pb[k] for k in keys))


@pytest.mark.parametrize("d_x", [1, 2])
def test_objective_matches_direct_evaluation(d_x):
    pb = _problem(d_x=d_x)
    obj = _obj(pb)
    for t in (1.2, 2.5, 4.9):
        tau = pb["tau"].copy()
        tau[0] = t
        assert objective_h(obj, t)[0] == pytest.approx(_h_reference(pb, tau), rel=1e-12)


def test_objective_vectorised():
    obj = _obj(_problem())
    ts = np.linspace(1.1, 4.9, 7)
    assert np.allclose(objective_h(obj, ts), [objective_h(obj, t)[0] for t in ts], rtol=1e-13)


def test_objective_rejects_out_of_range():
    obj = _obj(_problem())
    with pytest.raises(ValueError):
        objective_h(obj, 1.0)
    with pytest.raises(ValueError):
        _obj(_problem(), lower=2.0, upper=2.0)


@pytest.mark.parametrize("seed", range(5))
def test_optimum_beats_dense_grid_and_incumbent(seed):
    obj = _obj(_problem(seed))
    best = optimize_tau(obj, incumbent=1.8)
    dense = np.linspace(1.0, 5.0, 20001)[1:-1]
    h_dense = objective_h(obj, dense)
    h_best = objective_h(obj, best)[0]
    assert h_best >= objective_h(obj, 1.8)[0]
    assert h_best >= h_dense.max() - 1e-6 * max(1.0, abs(h_dense.max()))


def test_incumbent_kept_when_optimal():
    obj = _obj(_problem(2))
    dense = np.linspace(1.0, 5.0, 200001)[1:-1]
    t_star = dense[np.argmax(objective_h(obj, dense))]
    refined = optimize_tau(obj, incumbent=t_star)
    assert objective_h(obj, refined)[0] >= objective_h(obj, t_star)[0]


def test_optimize_region_multi_dim_improves():
    pb = _problem(d_x=2)
    keys = ("spectral", "r_mean", "a2", "au", "cen", "carrier", "gamma")
    lower, upper = np.array([1.0, 1.0]), np.array([5.0, 5.0])
    tau = optimize_region(pb["Xc"], pb["tau"], lower, upper, *(pb[k] for k in keys))
    assert np.all((tau > lower) & (tau < upper))
    assert _h_reference(pb, tau) >= _h_reference(pb, pb["tau"])
