"""End-to-end benchmark runs on the synthetic datasets.

``lorenz96`` fits the conditionally and fully independent models at the
deepest resolution once per seed and evaluates every shallower variant by
truncation, which is exact because resolution ``j`` only depends on the
coarser ones. ``toydata`` does the same for the overfitting contrast.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .data import gen_toydata, lorenz96_datasets, toy_test_inputs, toy_truth
from .model import ModelConfig, fit
from .predict import evaluate_depths, predict, rmse

log = logging.getLogger(__name__)


@dataclass
class BenchReport:
    """Per-variant, per-seed scores of one benchmark.

    ``scores[variant][metric]`` is a list with one entry per seed.
    """

    name: str
    seeds: list[int]
    settings: dict
    scores: dict[str, dict[str, list[float]]] = field(default_factory=dict)
    seconds: float = 0.0

    def add(self, variant: str, **metrics: float) -> None:
        slot = self.scores.setdefault(variant, {})
        for k, v in metrics.items():
            slot.setdefault(k, []).append(float(v))

    def mean(self, variant: str, metric: str) -> float:
        return float(np.mean(self.scores[variant][metric]))

    @property
    def metrics(self) -> list[str]:
        names: list[str] = []
        for slot in self.scores.values():
            names.extend(k for k in slot if k not in names)
        return names

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "seeds": list(self.seeds),
            "settings": dict(self.settings),
            "seconds": self.seconds,
            "scores": self.scores,
            "means": {v: {k: self.mean(v, k) for k in s} for v, s in self.scores.items()},
        }

    def format(self) -> str:
        cols = self.metrics
        head = f"{'variant':<10}" + "".join(f"{c:>16}" for c in cols)
        lines = [f"{self.name}: mean over seeds {self.seeds} ({self.seconds:.0f} s)", head]
        for v, slot in self.scores.items():
            row = f"{v:<10}"
            for c in cols:
                row += f"{np.mean(slot[c]):>16.4f}" if c in slot else f"{'-':>16}"
            lines.append(row)
        lines.append("settings: " + ", ".join(f"{k}={v}" for k, v in self.settings.items()))
        return "\n".join(lines)


def variant_name(mode: str, m: int) -> str:
    return "MRGP0" if m == 0 else f"{mode}MRGP{m}"


def bench_lorenz96(
    seeds=range(5),
    m_max: int = 3,
    n_train: int = 1000,
    n_test: int = 100_000,
    noise_std: float = 0.05,
    config: ModelConfig | None = None,
) -> BenchReport:
    """MRGP0, ciMRGP1..m_max and fiMRGP1..m_max on the Lorenz-96 trajectory.

    Reported per variant: ``rmse`` and ``mll`` in standardised target space
    against the noise-free test states, plus ``rmse_raw`` (original units,
    noise-free targets) and ``rmse_raw_noisy`` (original units, test targets
    carrying the training noise level).
    """
    base = config or ModelConfig()
    seeds = [int(s) for s in seeds]
    report = BenchReport("lorenz96", seeds, {
        "K": 20, "F": 8.0, "n_train": n_train, "n_test": n_test, "noise_std": noise_std, "m_max": m_max,
        "sweeps_per_resolution": base.sweeps_per_resolution, "tau_update_period": base.tau_update_period,
    })
    t0 = time.perf_counter()
    for seed in seeds:
        train, test, noisy = lorenz96_datasets(n_train=n_train, n_test=n_test, noise_std=noise_std, seed=seed)
        for mode in ("ci", "fi"):
            model = fit(train.X, train.Y, base.replace(m=m_max, mode=mode, seed=seed))
            evs = evaluate_depths(model, test.X, test.Y)
            for m in range(m_max + 1):
                if m == 0 and mode == "fi":
                    continue
                sub = model.truncate(m)
                mean = sub.standardizer.inverse(predict(sub, test.X).mean)
                report.add(variant_name(mode, m), rmse=evs[m].rmse, mll=evs[m].mll,
                           rmse_raw=rmse(mean, test.Y), rmse_raw_noisy=rmse(mean, noisy.Y))
            log.info("lorenz96 seed %d mode %s done after %.0f s", seed, mode, time.perf_counter() - t0)
    report.scores = {k: report.scores[k] for k in sorted(report.scores, key=_variant_order)}
    report.seconds = time.perf_counter() - t0
    return report


def bench_toydata(
    seeds=range(5),
    m_max: int = 5,
    n: int = 32,
    noise_std: float = 0.05,
    n_test: int = 10_000,
    config: ModelConfig | None = None,
) -> BenchReport:
    """ciMRGP / fiMRGP at every resolution up to ``m_max`` on ToyData.

    ``rmse`` is measured in standardised space against the noise-free
    functions on a dense grid over [0, 12].
    """
    base = config or ModelConfig()
    seeds = [int(s) for s in seeds]
    report = BenchReport("toydata", seeds, {"n": n, "noise_std": noise_std, "n_test": n_test, "m_max": m_max})
    x_test = toy_test_inputs(n_test)[:, None]
    y_test = toy_truth(x_test[:, 0])
    t0 = time.perf_counter()
    for seed in seeds:
        ds = gen_toydata(n=n, noise_std=noise_std, seed=seed)
        for mode in ("ci", "fi"):
            model = fit(ds.X, ds.Y, base.replace(m=m_max, mode=mode, seed=seed))
            for m, ev in enumerate(evaluate_depths(model, x_test, y_test)):
                report.add(f"{mode}MRGP{m}", rmse=ev.rmse, mll=ev.mll)
    report.seconds = time.perf_counter() - t0
    return report


def _variant_order(name: str):
    if name == "MRGP0":
        return (0, "", 0)
    return (1, name[:2], int(name[6:]))


BENCHMARKS = {"lorenz96": bench_lorenz96, "toydata": bench_toydata}
