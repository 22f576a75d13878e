"""Command-line interface: ``mrgp {synth,fit,predict,eval,bench,plotdata}``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
Set ``MRGP_LOG_LEVEL`` (e.g. ``INFO``, ``DEBUG``) for progress messages.
Every output file is written atomically.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

import numpy as np

from . import bench as bench_mod
from .data import (
    Dataset,
    DataError,
    gen_lorenz96,
    gen_toydata,
    load_csv,
    read_table,
    resolve_cols,
    save_csv,
    toy_test_inputs,
    toy_truth,
    write_table,
)
from .model import ModelConfig, TrainedModel, atomic_write_bytes, fit
from .predict import gaussian_logpdf, predict, predictive_y_params, rmse

log = logging.getLogger("mrgp")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _cols(text: str) -> list[str]:
    return [c.strip() for c in text.split(",") if c.strip()]


# ---------------------------------------------------------------------------
# subcommands


def cmd_synth(args) -> None:
    if args.dataset == "toydata":
        ds = gen_toydata(n=args.n or 32, noise_std=args.noise_std, seed=args.seed)
        save_csv(args.out, ds)
        if args.test_out:
            x = toy_test_inputs(args.n_test or 1000)
            save_csv(args.test_out, Dataset(x[:, None], toy_truth(x), ["x"], list(ds.y_names)))
    else:
        train, test = gen_lorenz96(K=args.K, F=args.F, n_train=args.n or 1000, n_test=args.n_test or 100_000,
                                   noise_std=args.noise_std, seed=args.seed)
        save_csv(args.out, train)
        if args.test_out:
            save_csv(args.test_out, test)


CONFIG_FLAGS = {
    "m": int, "q": int, "p": int, "mode": str, "lengthscale": float, "variance": float,
    "sweeps_per_resolution": int, "convergence_tol": float, "tau_update_period": int,
}


def _config(args) -> ModelConfig:
    cfg = ModelConfig.from_file(args.config) if args.config else ModelConfig()
    over = {k: getattr(args, k) for k in CONFIG_FLAGS if getattr(args, k, None) is not None}
    if args.seed is not None:
        over["seed"] = args.seed
    return cfg.replace(**over)


def cmd_fit(args) -> None:
    ds = load_csv(args.data, _cols(args.x_cols), _cols(args.y_cols))
    if ds.Y.shape[1] < 2:
        raise DataError("fitting needs at least two output columns")
    cfg = _config(args)
    log.info("fitting %d samples, d_x=%d, d_y=%d with %s", ds.n, ds.X.shape[1], ds.Y.shape[1], cfg)
    model = fit(ds.X, ds.Y, cfg)
    model.save(args.out)


def _prediction_table(model: TrainedModel, X, Y=None, x_names=None, y_names=None):
    s = predict(model, X)
    mean_z, cov_z = predictive_y_params(s, model)
    std = model.standardizer.std
    mean = model.standardizer.inverse(mean_z)
    var = np.diagonal(cov_z, axis1=1, axis2=2) * std**2
    x_names = x_names or [f"x{k}" for k in range(model.d_x)]
    y_names = y_names or [f"y{k}" for k in range(model.d_y)]
    header = list(x_names) + [f"mean_{n}" for n in y_names] + [f"var_{n}" for n in y_names]
    cols = [X, mean, var]
    if Y is not None:
        logpdf = gaussian_logpdf(mean_z, cov_z, model.standardizer.transform(Y))
        header += [f"target_{n}" for n in y_names] + ["logpdf"]
        cols += [Y, logpdf[:, None]]
    header += ["depth"]
    cols += [s.depth[:, None]]
    return header, np.hstack(cols)


def cmd_predict(args) -> None:
    model = TrainedModel.load(args.model)
    x_cols = _cols(args.x_cols)
    y_cols = _cols(args.y_cols) if args.y_cols else []
    header, body = read_table(args.data)
    xi = resolve_cols(x_cols, header, "input")
    X = body[:, xi]
    if X.shape[1] != model.d_x:
        raise DataError(f"model expects {model.d_x} input columns, got {X.shape[1]}")
    Y, y_names = None, None
    if y_cols:
        yi = resolve_cols(y_cols, header, "output")
        if len(yi) != model.d_y:
            raise DataError(f"model has {model.d_y} outputs, got {len(yi)} target columns")
        Y, y_names = body[:, yi], [header[k] for k in yi]
    head, table = _prediction_table(model, X, Y, [header[k] for k in xi], y_names)
    write_table(args.out, head, table)


def evaluate_predictions(path, model: TrainedModel | None = None) -> dict:
    """RMSE and MLL from a predictions file that carries targets.

    With ``model`` the RMSE is computed in the model's standardised space;
    MLL always comes from the stored per-point log-densities, which are
    standardised-space multivariate densities.
    """
    header, body = read_table(path)
    means = [k for k, h in enumerate(header) if h.startswith("mean_")]
    targets = [k for k, h in enumerate(header) if h.startswith("target_")]
    if not targets or "logpdf" not in header:
        raise DataError(f"{path}: no target columns; run predict with --y-cols")
    if len(means) != len(targets):
        raise DataError(f"{path}: {len(means)} mean columns but {len(targets)} target columns")
    mean, target = body[:, means], body[:, targets]
    if model is not None:
        if model.d_y != len(means):
            raise DataError("model output dimension does not match the predictions file")
        mean, target = model.standardizer.transform(mean), model.standardizer.transform(target)
    return {
        "n": int(body.shape[0]),
        "rmse": rmse(mean, target),
        "mll": float(np.mean(body[:, header.index("logpdf")])),
        "space": "standardized" if model is not None else "original",
    }


def cmd_eval(args) -> None:
    model = TrainedModel.load(args.model) if args.model else None
    report = evaluate_predictions(args.predictions, model)
    text = json.dumps(report, indent=2) + "\n"
    if args.out:
        atomic_write_bytes(args.out, text.encode())
    sys.stdout.write(text)


def cmd_bench(args) -> None:
    seeds = range(args.seed, args.seed + args.seeds)
    kw = {"seeds": seeds}
    if args.n_test:
        kw["n_test"] = args.n_test
    if args.m_max is not None:
        kw["m_max"] = args.m_max
    if args.config:
        kw["config"] = ModelConfig.from_file(args.config)
    report = bench_mod.BENCHMARKS[args.experiment](**kw)
    if args.out:
        atomic_write_bytes(args.out, (json.dumps(report.to_dict(), indent=2) + "\n").encode())
    sys.stdout.write(report.format() + "\n")


def cmd_plotdata(args) -> None:
    model = TrainedModel.load(args.model)
    if args.data:
        header, body = read_table(args.data)
        xi = resolve_cols(_cols(args.x_cols or "0"), header, "input")
        X, x_names = body[:, xi], [header[k] for k in xi]
    else:
        if model.d_x != 1:
            raise DataError("a grid needs one input dimension; pass --data for multi-dimensional inputs")
        lo = args.lo if args.lo is not None else float(model.boxes.lo[0][0, 0])
        hi = args.hi if args.hi is not None else float(model.boxes.hi[0][0, 0])
        X, x_names = np.linspace(lo, hi, args.grid)[:, None], ["x"]
    s = predict(model, X)
    mean_z, cov_z = predictive_y_params(s, model)
    mean = model.standardizer.inverse(mean_z)
    sd_f = np.sqrt(np.clip(s.var, 0.0, None)) * model.standardizer.std
    sd_y = np.sqrt(np.diagonal(cov_z, axis1=1, axis2=2)) * model.standardizer.std
    names = [f"y{k}" for k in range(model.d_y)]
    head = list(x_names)
    cols = [X]
    for k, n in enumerate(names):
        head += [f"mean_{n}", f"lower_{n}", f"upper_{n}", f"lower_obs_{n}", f"upper_obs_{n}"]
        cols += [np.column_stack([mean[:, k], mean[:, k] - 2 * sd_f[:, k], mean[:, k] + 2 * sd_f[:, k],
                                  mean[:, k] - 2 * sd_y[:, k], mean[:, k] + 2 * sd_y[:, k]])]
    head.append("depth")
    cols.append(s.depth[:, None])
    write_table(args.out, head, np.hstack(cols))


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="mrgp", description="Multiresolution GP regression with shared Bingham basis axes.")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    s = sub.add_parser("synth", help="generate a synthetic dataset as CSV")
    s.add_argument("dataset", choices=["toydata", "lorenz96"])
    s.add_argument("--out", required=True, help="training CSV")
    s.add_argument("--test-out", help="optional noise-free test CSV")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--n", type=int, help="training size (32 for toydata, 1000 for lorenz96)")
    s.add_argument("--n-test", type=int, help="test size (1000 / 100000)")
    s.add_argument("--noise-std", type=float, default=0.05, help="noise relative to each output's std")
    s.add_argument("--K", type=int, default=20, help="lorenz96 state dimension")
    s.add_argument("--F", type=float, default=8.0, help="lorenz96 forcing")
    s.set_defaults(func=cmd_synth)

    f = sub.add_parser("fit", help="train a model on a CSV file")
    f.add_argument("--data", required=True)
    f.add_argument("--x-cols", required=True, help="comma-separated names or indices")
    f.add_argument("--y-cols", required=True)
    f.add_argument("--out", required=True, help="model file (.npz)")
    f.add_argument("--config", help="key = value config file; flags override it")
    f.add_argument("--seed", type=int)
    for name, typ in CONFIG_FLAGS.items():
        f.add_argument("--" + name.replace("_", "-"), dest=name, type=typ)
    f.set_defaults(func=cmd_fit)

    r = sub.add_parser("predict", help="predictive means and variances for a CSV file")
    r.add_argument("--model", required=True)
    r.add_argument("--data", required=True)
    r.add_argument("--x-cols", required=True)
    r.add_argument("--y-cols", help="optional target columns (adds targets and log-densities)")
    r.add_argument("--out", required=True)
    r.set_defaults(func=cmd_predict)

    e = sub.add_parser("eval", help="RMSE / MLL of a predictions file with targets")
    e.add_argument("--predictions", required=True)
    e.add_argument("--model", help="report RMSE in this model's standardised space")
    e.add_argument("--out", help="optional JSON report")
    e.set_defaults(func=cmd_eval)

    b = sub.add_parser("bench", help="end-to-end benchmark on a synthetic dataset")
    b.add_argument("experiment", choices=sorted(bench_mod.BENCHMARKS))
    b.add_argument("--seeds", type=int, default=5, help="number of repetitions")
    b.add_argument("--seed", type=int, default=0, help="first seed")
    b.add_argument("--n-test", type=int)
    b.add_argument("--m-max", type=int)
    b.add_argument("--config")
    b.add_argument("--out", help="optional JSON report")
    b.set_defaults(func=cmd_bench)

    g = sub.add_parser("plotdata", help="prediction curves and 2-sd bands as CSV")
    g.add_argument("--model", required=True)
    g.add_argument("--out", required=True)
    g.add_argument("--grid", type=int, default=1000)
    g.add_argument("--lo", type=float)
    g.add_argument("--hi", type=float)
    g.add_argument("--data", help="evaluate at the inputs of this CSV instead of a grid")
    g.add_argument("--x-cols")
    g.set_defaults(func=cmd_plotdata)
    return p


def main(argv=None) -> int:
    level = os.environ.get("MRGP_LOG_LEVEL", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s")
    try:
        args = build_parser().parse_args(argv)
        args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
