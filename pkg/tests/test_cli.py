import json

import numpy as np
import pytest

from mrgp.cli import EXIT_DATA, EXIT_OK, EXIT_USAGE, evaluate_predictions, main
from mrgp.data import read_table
from mrgp.model import TrainedModel
from mrgp.predict import evaluate


@pytest.fixture
def toy(tmp_path):
    train, test = tmp_path / "train.csv", tmp_path / "test.csv"
    assert main(["synth", "toydata", "--out", str(train), "--test-out", str(test), "--n-test", "200"]) == EXIT_OK
    return tmp_path, train, test


def _fit(tmp, train, name, *extra):
    out = tmp / name
    code = main(["fit", "--data", str(train), "--x-cols", "x", "--y-cols", "f1,f2", "--out", str(out),
                 "--p", "10", "--sweeps-per-resolution", "20", *extra])
    assert code == EXIT_OK
    return out


def test_synth_deterministic(tmp_path):
    for k in (1, 2):
        assert main(["synth", "lorenz96", "--out", str(tmp_path / f"l{k}.csv"), "--n", "50", "--K", "6",
                     "--seed", "3", "--test-out", str(tmp_path / f"t{k}.csv"), "--n-test", "20"]) == EXIT_OK
    assert (tmp_path / "l1.csv").read_bytes() == (tmp_path / "l2.csv").read_bytes()
    header, body = read_table(tmp_path / "l1.csv")
    assert header[0] == "t" and body.shape == (50, 7)


def test_fit_modes_agree_at_root(toy):
    tmp, train, test = toy
    preds = []
    for mode in ("ci", "fi"):
        model = _fit(tmp, train, f"{mode}.npz", "--mode", mode, "--m", "0")
        out = tmp / f"{mode}.csv"
        assert main(["predict", "--model", str(model), "--data", str(test), "--x-cols", "x", "--out", str(out)]) == 0
        preds.append(out.read_bytes())
    assert preds[0] == preds[1]


def test_predict_eval_plotdata(toy):
    tmp, train, test = toy
    model = _fit(tmp, train, "m.npz", "--m", "2")
    pred = tmp / "pred.csv"
    assert main(["predict", "--model", str(model), "--data", str(test), "--x-cols", "x",
                 "--y-cols", "f1,f2", "--out", str(pred)]) == EXIT_OK
    header, body = read_table(pred)
    assert header[:3] == ["x", "mean_f1", "mean_f2"] and header[-2:] == ["logpdf", "depth"]
    assert np.all(body[:, header.index("var_f1")] > 0)
    report = tmp / "eval.json"
    assert main(["eval", "--predictions", str(pred), "--model", str(model), "--out", str(report)]) == EXIT_OK
    got = json.loads(report.read_text())
    loaded = TrainedModel.load(model)
    assert got == evaluate_predictions(pred, loaded)
    _, tb = read_table(test)
    direct = evaluate(loaded, tb[:, :1], tb[:, 1:])
    assert got["space"] == "standardized" and got["n"] == 200
    assert got["rmse"] == pytest.approx(direct.rmse, rel=1e-12)
    assert got["mll"] == pytest.approx(direct.mll, rel=1e-12)

    curve = tmp / "curve.csv"
    assert main(["plotdata", "--model", str(model), "--out", str(curve), "--grid", "50"]) == EXIT_OK
    header, body = read_table(curve)
    m, lo, hi = (body[:, header.index(k)] for k in ("mean_y0", "lower_y0", "upper_y0"))
    assert body.shape[0] == 50 and np.all(lo <= m) and np.all(m <= hi)
    assert np.all(body[:, header.index("lower_obs_y0")] <= lo)


def test_exit_codes(toy, tmp_path):
    _, train, test = toy
    assert main(["fit", "--data", str(train)]) == EXIT_USAGE
    assert main(["nonsense"]) == EXIT_USAGE
    out = tmp_path / "never.npz"
    assert main(["fit", "--data", str(train), "--x-cols", "x", "--y-cols", "nope", "--out", str(out)]) == EXIT_DATA
    assert main(["fit", "--data", str(tmp_path / "missing.csv"), "--x-cols", "x", "--y-cols", "f1,f2",
                 "--out", str(out)]) == EXIT_DATA
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("depth = 3\n")
    assert main(["fit", "--data", str(train), "--x-cols", "x", "--y-cols", "f1,f2", "--out", str(out),
                 "--config", str(cfg)]) == EXIT_USAGE
    assert not out.exists()
    pred = tmp_path / "p.csv"
    model = _fit(tmp_path, train, "ok.npz", "--m", "0")
    assert main(["predict", "--model", str(model), "--data", str(test), "--x-cols", "x", "--out", str(pred)]) == 0
    assert main(["eval", "--predictions", str(pred)]) == EXIT_DATA


def test_bench_small(tmp_path, capsys):
    out = tmp_path / "bench.json"
    assert main(["bench", "toydata", "--seeds", "1", "--m-max", "1", "--n-test", "100", "--out", str(out)]) == 0
    rep = json.loads(out.read_text())
    assert set(rep["means"]) == {"ciMRGP0", "ciMRGP1", "fiMRGP0", "fiMRGP1"}
    assert rep["means"]["ciMRGP0"]["rmse"] == rep["means"]["fiMRGP0"]["rmse"]
    assert "ciMRGP1" in capsys.readouterr().out
