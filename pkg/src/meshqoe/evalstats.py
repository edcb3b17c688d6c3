"""Prediction metrics, the linear baseline and the repeated 80/20 holdout protocol."""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .dataset import Dataset
from .forest import TrainConfig, train_forest


class UndefinedCorrelationError(ValueError):
    """Correlation requested for a constant vector."""


class SingularDesignError(ValueError):
    pass


def _pair(a, b, min_len: int = 1) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if len(a) != len(b):
        raise ValueError(f"length mismatch: {len(a)} vs {len(b)}")
    if len(a) < min_len:
        raise ValueError(f"need at least {min_len} values, got {len(a)}")
    return a, b


def rmse(pred, truth) -> float:
    p, t = _pair(pred, truth)
    d = p - t
    return math.sqrt(float(d @ d) / len(d))


def plcc(a, b) -> float:
    a, b = _pair(a, b, 2)
    da = a - a.mean()
    db = b - b.mean()
    saa, sbb = float(da @ da), float(db @ db)
    if saa == 0 or sbb == 0:
        raise UndefinedCorrelationError("correlation is undefined for a constant vector")
    r = float(da @ db) / math.sqrt(saa * sbb)
    return max(-1.0, min(1.0, r))


def average_ranks(x) -> np.ndarray:
    """1-based ranks, ties sharing the mean of the positions they occupy."""
    x = np.asarray(x, dtype=np.float64)
    order = np.argsort(x, kind="stable")
    xs = x[order]
    # start index of each run of equal values
    starts = np.r_[0, np.nonzero(xs[1:] != xs[:-1])[0] + 1]
    ends = np.r_[starts[1:], len(xs)]
    run_rank = (starts + ends + 1) / 2.0
    ranks = np.empty(len(x))
    ranks[order] = np.repeat(run_rank, ends - starts)
    return ranks


def srocc(a, b) -> float:
    a, b = _pair(a, b, 2)
    return plcc(average_ranks(a), average_ranks(b))


def krocc(a, b) -> float:
    """Kendall tau-b."""
    a, b = _pair(a, b, 2)
    iu = np.triu_indices(len(a), k=1)
    sa = np.sign(a[:, None] - a[None, :])[iu]
    sb = np.sign(b[:, None] - b[None, :])[iu]
    n_a = int(np.count_nonzero(sa))
    n_b = int(np.count_nonzero(sb))
    if n_a == 0 or n_b == 0:
        raise UndefinedCorrelationError("correlation is undefined for a constant vector")
    s = int(np.dot(sa.astype(np.int64), sb.astype(np.int64)))
    return s / math.sqrt(n_a * n_b)


# -- linear baseline ----------------------------------------------------------

@dataclass(frozen=True)
class LinearModel:
    """mos = coef[0] + coef[1:] . [f, d, l, s_geo, s_col]"""

    coef: tuple[float, ...]

    def predict(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        c = np.asarray(self.coef)
        return c[0] + X @ c[1:]


def fit_linear(X, y) -> LinearModel:
    """Ordinary least squares on [1, X] through the normal equations.

    Columns are scaled to unit max-abs before forming X^T X (face counts are
    ~1e5 while fractions are < 1) and the LU solve uses partial pivoting.
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    y = np.asarray(y, dtype=np.float64)
    A = np.column_stack([np.ones(len(X)), X])
    n, p = A.shape
    if n < p:
        raise SingularDesignError(f"need at least {p} samples, got {n}")
    scale = np.abs(A).max(axis=0)
    scale[scale == 0] = 1.0
    As = A / scale
    if np.linalg.matrix_rank(As) < p:
        raise SingularDesignError("design matrix is rank deficient")
    beta = np.linalg.solve(As.T @ As, As.T @ y)
    # one step of iterative refinement against the scaled normal equations
    resid = As.T @ (y - As @ beta)
    beta = beta + np.linalg.solve(As.T @ As, resid)
    return LinearModel(tuple(float(v) for v in beta / scale))


def predict_linear(model: LinearModel, x) -> float | np.ndarray:
    out = model.predict(x)
    return float(out[0]) if np.ndim(x) == 1 else out


# -- repeated holdout ---------------------------------------------------------

@dataclass
class EvalReport:
    model_kind: str
    rmse: float
    plcc: float
    srocc: float
    krocc: float
    per_run: list[dict] = field(default_factory=list)
    n_runs: int = 0

    def to_dict(self) -> dict:
        return asdict(self)

    def table(self) -> str:
        head = f"{'run':>4} {'RMSE':>8} {'PLCC':>8} {'SROCC':>8} {'KROCC':>8}"
        lines = [f"model: {self.model_kind}", head]
        for i, r in enumerate(self.per_run):
            lines.append(f"{i:>4} {r['rmse']:8.4f} {r['plcc']:8.4f} {r['srocc']:8.4f} {r['krocc']:8.4f}")
        lines.append(f"{'mean':>4} {self.rmse:8.4f} {self.plcc:8.4f} {self.srocc:8.4f} {self.krocc:8.4f}")
        return "\n".join(lines)


def split_indices(n: int, seed: int, run: int, split: float = 0.8) -> tuple[np.ndarray, np.ndarray]:
    perm = np.random.default_rng([seed, run]).permutation(n)
    n_train = int(math.floor(split * n))
    return perm[:n_train], perm[n_train:]


def _run_seed(seed: int, run: int) -> int:
    return int(np.random.SeedSequence([seed, run, 1]).generate_state(1)[0])


def _one_run(args) -> dict:
    X, y, model_kind, config, seed, run, split, on = args
    train, test = split_indices(len(y), seed, run, split)
    if on == "train":
        test = train
    if model_kind == "forest":
        model = train_forest(X[train], y[train], replace(config, seed=_run_seed(seed, run)))
        pred = model.predict(X[test])
    elif model_kind == "linear":
        pred = fit_linear(X[train], y[train]).predict(X[test])
    else:
        raise ValueError(f"unknown model kind {model_kind!r}")
    truth = y[test]
    return {"rmse": rmse(pred, truth), "plcc": plcc(pred, truth),
            "srocc": srocc(pred, truth), "krocc": krocc(pred, truth)}


def evaluate(
    dataset: Dataset,
    model_kind: str = "forest",
    config: TrainConfig = TrainConfig(),
    n_runs: int = 10,
    split: float = 0.8,
    seed: int = 0,
    evaluate_on: str = "test",
    n_jobs: int = 1,
) -> EvalReport:
    """Seeded shuffle, floor(split*K)/rest split, fit, score; repeated n_runs times.

    ``evaluate_on="train"`` scores on the training part (a memorisation sanity check).
    """
    if evaluate_on not in ("test", "train"):
        raise ValueError("evaluate_on must be 'test' or 'train'")
    X, y = dataset.arrays()
    n_train = int(math.floor(split * len(y)))
    if n_train < 2 or (evaluate_on == "test" and len(y) - n_train < 2):
        raise ValueError(f"dataset of {len(y)} rows is too small for a {split:.0%} split")
    jobs = [(X, y, model_kind, config, seed, r, split, evaluate_on) for r in range(n_runs)]
    if n_jobs > 1:
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            runs = list(pool.map(_one_run, jobs))
    else:
        runs = [_one_run(j) for j in jobs]
    means = {k: float(np.mean([r[k] for r in runs])) for k in ("rmse", "plcc", "srocc", "krocc")}
    return EvalReport(model_kind, per_run=runs, n_runs=n_runs, **means)
