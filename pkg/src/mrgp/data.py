"""Datasets: CSV ingestion, synthetic generators and train/test splitting."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicHermiteSpline

from .model import atomic_write_bytes


class DataError(ValueError):
    """Malformed or unusable input data."""


@dataclass
class Dataset:
    X: np.ndarray  # (n, d_x)
    Y: np.ndarray  # (n, d_y)
    x_names: list[str] | None = None
    y_names: list[str] | None = None

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float)
        self.Y = np.asarray(self.Y, dtype=float)
        if self.X.ndim == 1:
            self.X = self.X[:, None]
        if self.Y.ndim == 1:
            self.Y = self.Y[:, None]
        if self.X.shape[0] != self.Y.shape[0]:
            raise DataError("X and Y have different numbers of rows")
        if not (np.all(np.isfinite(self.X)) and np.all(np.isfinite(self.Y))):
            raise DataError("dataset contains non-finite values")
        if self.x_names is None:
            self.x_names = [f"x{k}" for k in range(self.X.shape[1])]
        if self.y_names is None:
            self.y_names = [f"y{k}" for k in range(self.Y.shape[1])]

    @property
    def n(self) -> int:
        return self.X.shape[0]

    def subset(self, idx) -> "Dataset":
        return Dataset(self.X[idx], self.Y[idx], list(self.x_names), list(self.y_names))

    def split(self, test_fraction: float, seed: int = 0) -> tuple["Dataset", "Dataset"]:
        """Random train/test split."""
        rng = np.random.default_rng(seed)
        perm = rng.permutation(self.n)
        k = int(round(self.n * (1.0 - test_fraction)))
        return self.subset(np.sort(perm[:k])), self.subset(np.sort(perm[k:]))


def resolve_cols(spec, header: list[str], what: str) -> list[int]:
    """Column positions for names or (possibly negative) integer indices."""
    out = []
    for c in spec:
        if isinstance(c, (int, np.integer)) or (isinstance(c, str) and c.lstrip("-").isdigit()):
            k = int(c)
            if not -len(header) <= k < len(header):
                raise DataError(f"{what} column index {k} out of range (file has {len(header)} columns)")
            out.append(k % len(header))
        elif c in header:
            out.append(header.index(c))
        else:
            raise DataError(f"{what} column {c!r} not found in header {header}")
    return out


def read_table(path) -> tuple[list[str], np.ndarray]:
    """Header and numeric body of a comma-separated file with one header row."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DataError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    body = np.empty((len(rows) - 1, len(header)))
    for r, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise DataError(f"{path}: row {r} has {len(row)} fields, header has {len(header)}")
        for c, cell in enumerate(row):
            try:
                val = float(cell)
            except ValueError:
                raise DataError(f"{path}: row {r}, column {header[c]!r}: non-numeric value {cell!r}") from None
            if not np.isfinite(val):
                raise DataError(f"{path}: row {r}, column {header[c]!r}: non-finite value {cell!r}")
            body[r - 2, c] = val
    return header, body


def load_csv(path, x_cols, y_cols) -> Dataset:
    """Dataset from a CSV file; columns are given by index or header name."""
    header, body = read_table(path)
    xi = resolve_cols(x_cols, header, "input")
    yi = resolve_cols(y_cols, header, "output")
    if not xi or not yi:
        raise DataError("need at least one input and one output column")
    return Dataset(body[:, xi], body[:, yi], [header[k] for k in xi], [header[k] for k in yi])


def write_table(path, header: list[str], rows: np.ndarray) -> None:
    """Atomically write a numeric table with a header row (17 significant digits)."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in np.asarray(rows, dtype=float):
        w.writerow([repr(float(v)) for v in row])
    atomic_write_bytes(path, buf.getvalue().encode("utf-8"))


def save_csv(path, ds: Dataset) -> None:
    write_table(path, ds.x_names + ds.y_names, np.hstack([ds.X, ds.Y]))


# ---------------------------------------------------------------------------
# ToyData


def toy_f1(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return np.exp(np.sin(np.cos(x)) * np.sin(np.log1p(np.abs(x**2 - 3.0 * x))))


def toy_f2(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore"):
        return np.log(np.abs(np.tan(-2.0 * x) * np.cos(2.0 * x) + 1.0)) * np.sin(x)


def toy_truth(x) -> np.ndarray:
    """Noise-free two-output ToyData function, shape (n, 2)."""
    return np.column_stack([toy_f1(x), toy_f2(x)])


def gen_toydata(n: int = 32, noise_std: float = 0.05, seed: int = 0) -> Dataset:
    """``n`` evenly spaced inputs on [0, 12] with noisy ``(f1, f2)`` targets.

    ``noise_std`` is relative to the standard deviation of each clean output
    over the sampled inputs.
    """
    if n < 2:
        raise ValueError("ToyData needs n >= 2")
    rng = np.random.default_rng(seed)
    x = np.linspace(0.0, 12.0, n)
    F = toy_truth(x)
    Y = F + noise_std * F.std(axis=0) * rng.standard_normal(F.shape)
    return Dataset(x[:, None], Y, ["x"], ["f1", "f2"])


def toy_test_inputs(n_test: int = 1000) -> np.ndarray:
    """Midpoint grid on [0, 12] used for held-out ToyData evaluation."""
    return (np.arange(n_test) + 0.5) * 12.0 / n_test


# ---------------------------------------------------------------------------
# Lorenz-96


def lorenz96_rhs(x: np.ndarray, forcing: float) -> np.ndarray:
    """``dx_k/dt = -x_{k-1} (x_{k-2} - x_{k+1}) - x_k + F`` with cyclic indices."""
    return -np.roll(x, 1, axis=-1) * (np.roll(x, 2, axis=-1) - np.roll(x, -1, axis=-1)) - x + forcing


def integrate_lorenz96(x0, forcing: float, times, dt: float = 1e-3) -> np.ndarray:
    """Classical RK4 states at the increasing ``times`` (starting from ``t = 0``).

    Each interval between consecutive output times is split into equal steps
    no longer than ``dt``.
    """
    times = np.asarray(times, dtype=float)
    if np.any(np.diff(times) < 0) or times[0] < 0:
        raise ValueError("output times must be non-negative and increasing")
    x = np.array(x0, dtype=float)
    out = np.empty((times.size, x.size))
    t = 0.0
    for k, target in enumerate(times):
        span = target - t
        steps = int(np.ceil(span / dt - 1e-9)) if span > 0 else 0
        if steps:
            h = span / steps
            for s in range(steps):
                k1 = lorenz96_rhs(x, forcing)
                k2 = lorenz96_rhs(x + 0.5 * h * k1, forcing)
                k3 = lorenz96_rhs(x + 0.5 * h * k2, forcing)
                k4 = lorenz96_rhs(x + h * k3, forcing)
                x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
                if not np.all(np.isfinite(x)):
                    raise FloatingPointError(f"Lorenz-96 integration diverged near t={t + (s + 1) * h:.6g}")
        out[k] = x
        t = target
    return out


def lorenz96_initial_state(K: int, forcing: float, seed: int, perturbation: float = 0.01) -> np.ndarray:
    rng = np.random.default_rng(seed)
    x0 = np.full(K, float(forcing))
    x0[rng.integers(K)] += perturbation
    return x0


def lorenz96_trajectory(x0, forcing: float, t_max: float, dt: float = 1e-3):
    """RK4 states on a uniform grid of step ``<= dt`` over [0, ``t_max``] as a cubic Hermite spline.

    The spline uses the exact derivatives at the grid nodes, so its error
    is O(dt^4) and far below the integration error.
    """
    steps = max(1, int(np.ceil(t_max / dt - 1e-9)))
    grid = np.linspace(0.0, t_max, steps + 1)
    states = integrate_lorenz96(x0, forcing, grid, dt)
    return CubicHermiteSpline(grid, states, lorenz96_rhs(states, forcing), axis=0)


def gen_lorenz96(
    K: int = 20,
    F: float = 8.0,
    n_train: int = 1000,
    n_test: int = 100_000,
    noise_std: float = 0.05,
    seed: int = 0,
    t_max: float = 8.0,
    dt: float = 1e-3,
    noisy_test: bool = False,
) -> tuple[Dataset, Dataset]:
    """Trajectory of a perturbed Lorenz-96 system sampled on [0, ``t_max``].

    Training targets carry Gaussian noise with ``noise_std`` times the
    standard deviation of each state over the training times. The test set
    holds the states on an evenly spaced grid of ``n_test`` times, noise-free
    unless ``noisy_test`` adds independent noise of the same scale.
    """
    train, test, noisy = lorenz96_datasets(K, F, n_train, n_test, noise_std, seed, t_max, dt)
    return train, (noisy if noisy_test else test)


def lorenz96_datasets(
    K: int = 20,
    F: float = 8.0,
    n_train: int = 1000,
    n_test: int = 100_000,
    noise_std: float = 0.05,
    seed: int = 0,
    t_max: float = 8.0,
    dt: float = 1e-3,
) -> tuple[Dataset, Dataset, Dataset]:
    """Training set, noise-free test set and noisy test set of one trajectory."""
    if K < 4:
        raise ValueError("Lorenz-96 needs K >= 4")
    rng = np.random.default_rng([seed, 1])
    traj = lorenz96_trajectory(lorenz96_initial_state(K, F, seed), F, t_max, dt)
    t_train = np.linspace(0.0, t_max, n_train)
    t_test = np.linspace(0.0, t_max, n_test)
    Y_train = traj(t_train)
    Y_test = traj(t_test)
    scale = noise_std * Y_train.std(axis=0)
    Y_train = Y_train + scale * rng.standard_normal(Y_train.shape)
    Y_noisy = Y_test + scale * np.random.default_rng([seed, 2]).standard_normal(Y_test.shape)
    names = [f"x{k + 1}" for k in range(K)]
    return (
        Dataset(t_train[:, None], Y_train, ["t"], names),
        Dataset(t_test[:, None], Y_test, ["t"], names),
        Dataset(t_test[:, None], Y_noisy, ["t"], names),
    )
