"""CART regression trees and a bagged random forest, written from scratch on numpy."""

from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

N_FEATURES = 5
LEAF = -1


@dataclass(frozen=True)
class TrainConfig:
    n_trees: int = 100
    m_try: int = 2  # floor(sqrt(5))
    bootstrap: bool = True
    min_samples_leaf: int = 1
    max_depth: int | None = None
    seed: int = 0

    def __post_init__(self):
        if not 1 <= self.m_try <= N_FEATURES:
            raise ValueError(f"m_try must be in 1..{N_FEATURES}, got {self.m_try}")
        if self.n_trees < 1:
            raise ValueError("n_trees must be positive")
        if self.min_samples_leaf < 1:
            raise ValueError("min_samples_leaf must be positive")
        if self.max_depth is not None and self.max_depth < 0:
            raise ValueError("max_depth must be >= 0")


@dataclass
class Tree:
    """Flat node arrays; node 0 is the root.

    ``feature[k] == -1`` marks a leaf.  For internal nodes ``delta_mse[k]`` is
    MSE(parent) minus the size-weighted MSE of the two children and
    ``n_samples[k]`` is the number of (bootstrap) samples reaching the node.
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    n_samples: np.ndarray
    delta_mse: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    @property
    def n_train(self) -> int:
        return int(self.n_samples[0])

    def leaf_values(self) -> np.ndarray:
        return self.value[self.feature == LEAF]

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        node = np.zeros(len(X), dtype=np.int64)
        active = self.feature[node] != LEAF
        while active.any():
            idx = np.nonzero(active)[0]
            cur = node[idx]
            go_left = X[idx, self.feature[cur]] <= self.threshold[cur]
            node[idx] = np.where(go_left, self.left[cur], self.right[cur])
            active[idx] = self.feature[node[idx]] != LEAF
        return self.value[node]

    def split_log(self) -> list[tuple[int, int, float]]:
        """(feature, n_samples, delta_mse) for every internal node."""
        internal = np.nonzero(self.feature != LEAF)[0]
        return [(int(self.feature[k]), int(self.n_samples[k]), float(self.delta_mse[k])) for k in internal]

    def to_dict(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
            "n_samples": self.n_samples.tolist(),
            "delta_mse": self.delta_mse.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> Tree:
        ints = ("feature", "left", "right", "n_samples")
        return cls(**{k: np.asarray(d[k], dtype=np.int64 if k in ints else np.float64)
                      for k in ("feature", "threshold", "left", "right", "value", "n_samples", "delta_mse")})

    def __eq__(self, other):
        if not isinstance(other, Tree):
            return NotImplemented
        return all(np.array_equal(getattr(self, k), getattr(other, k))
                   for k in ("feature", "threshold", "left", "right", "value", "n_samples", "delta_mse"))


def _best_split(X: np.ndarray, y: np.ndarray, features: Sequence[int], min_leaf: int):
    """Lowest weighted child SSE over midpoint thresholds of the given features.

    Candidates are ranked feature-major (ascending index) then by position in
    sorted order, and argmin keeps the first minimum, which gives the tie-break
    lowest feature index, then smallest threshold.
    """
    n = len(y)
    feats = sorted(features)
    Xf = X[:, feats]
    order = np.argsort(Xf, axis=0, kind="stable")
    xs = np.take_along_axis(Xf, order, axis=0)
    ys = (y - y.sum() / n)[order]
    cs = np.cumsum(ys, axis=0)
    cs2 = np.cumsum(ys * ys, axis=0)
    nl = np.arange(1, n, dtype=np.float64)[:, None]
    sl, sl2 = cs[:-1], cs2[:-1]
    sr, sr2 = cs[-1] - sl, cs2[-1] - sl2
    sse = (sl2 - sl * sl / nl) + (sr2 - sr * sr / (n - nl))
    ok = xs[1:] > xs[:-1]
    if min_leaf > 1:
        ok &= (nl >= min_leaf) & (n - nl >= min_leaf)
    if not ok.any():
        return None
    sse = np.where(ok, sse, np.inf).T
    j, i = divmod(int(np.argmin(sse)), n - 1)
    parent = float(cs2[-1, 0])
    children = float(sse[j, i])
    # cumsum rounding must not masquerade as a gain
    if not children < parent * (1.0 - 1e-10):
        return None
    lo, hi = xs[i, j], xs[i + 1, j]
    thr = 0.5 * (lo + hi)
    if not lo <= thr < hi:  # midpoint collapsed onto hi in floating point
        thr = lo
    return feats[j], float(thr), (parent - children) / n


def _candidate_features(X: np.ndarray, m_try: int, rng: np.random.Generator) -> list[int]:
    """Draw features in random order until m_try non-constant ones are found."""
    varying = np.ptp(X, axis=0) > 0
    chosen = [int(f) for f in rng.permutation(X.shape[1]) if varying[f]]
    return chosen[:m_try]


def train_tree(X, y, config: TrainConfig, rng: np.random.Generator) -> Tree:
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if len(y) == 0:
        raise ValueError("cannot train a tree on zero samples")
    if X.shape != (len(y), N_FEATURES) and (X.ndim != 2 or X.shape[0] != len(y)):
        raise ValueError(f"X shape {X.shape} does not match {len(y)} targets")
    feature, threshold, left, right, value, n_samples, delta = [], [], [], [], [], [], []

    def new_node(idx):
        feature.append(LEAF)
        threshold.append(0.0)
        left.append(LEAF)
        right.append(LEAF)
        value.append(float(y[idx].sum() / len(idx)))
        n_samples.append(len(idx))
        delta.append(0.0)
        return len(feature) - 1

    min_leaf = config.min_samples_leaf
    stack = [(new_node(np.arange(len(y))), np.arange(len(y)), 0)]
    while stack:
        k, idx, depth = stack.pop()
        yn = y[idx]
        if (len(idx) < 2 * min_leaf or yn.max() == yn.min()
                or (config.max_depth is not None and depth >= config.max_depth)):
            continue
        Xn = X[idx]
        feats = _candidate_features(Xn, config.m_try, rng)
        if not feats:
            continue
        split = _best_split(Xn, yn, feats, min_leaf)
        if split is None:
            continue
        f, thr, delta[k] = split
        mask = Xn[:, f] <= thr
        li, ri = idx[mask], idx[~mask]
        feature[k], threshold[k] = f, thr
        left[k] = new_node(li)
        right[k] = new_node(ri)
        # depth-first, left subtree first
        stack.append((right[k], ri, depth + 1))
        stack.append((left[k], li, depth + 1))
    return Tree(
        np.array(feature, dtype=np.int64), np.array(threshold), np.array(left, dtype=np.int64),
        np.array(right, dtype=np.int64), np.array(value), np.array(n_samples, dtype=np.int64),
        np.array(delta),
    )


def tree_rng(seed: int, tree_index: int) -> np.random.Generator:
    return np.random.default_rng([seed, tree_index])


def _fit_one(args) -> tuple[Tree, np.ndarray]:
    X, y, config, i = args
    rng = tree_rng(config.seed, i)
    K = len(y)
    if config.bootstrap:
        drawn = rng.integers(0, K, size=K)
        oob = np.setdiff1d(np.arange(K), drawn)
    else:
        drawn = np.arange(K)
        oob = np.empty(0, dtype=np.int64)
    return train_tree(X[drawn], y[drawn], config, rng), oob


@dataclass
class Forest:
    trees: list[Tree]
    config: TrainConfig
    importances: np.ndarray
    oob_indices: list[np.ndarray] = field(default_factory=list)
    importances_degenerate: bool = False

    @property
    def n_trees(self) -> int:
        return len(self.trees)

    @property
    def seed(self) -> int:
        return self.config.seed

    def predict(self, X) -> np.ndarray:
        """Mean of the tree predictions for each row of X."""
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        total = np.zeros(len(X))
        for t in self.trees:
            total += t.predict(X)
        return total / len(self.trees)

    def oob_rmse(self, X, y) -> float:
        """Out-of-bag RMSE over samples left out by at least one tree (NaN if none)."""
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        sums = np.zeros(len(y))
        counts = np.zeros(len(y))
        for t, oob in zip(self.trees, self.oob_indices):
            if len(oob):
                sums[oob] += t.predict(X[oob])
                counts[oob] += 1
        seen = counts > 0
        if not seen.any():
            return math.nan
        err = sums[seen] / counts[seen] - y[seen]
        return float(np.sqrt(np.mean(err * err)))

    def __eq__(self, other):
        if not isinstance(other, Forest):
            return NotImplemented
        return (self.config == other.config and self.trees == other.trees
                and np.array_equal(self.importances, other.importances)
                and len(self.oob_indices) == len(other.oob_indices)
                and all(np.array_equal(a, b) for a, b in zip(self.oob_indices, other.oob_indices)))

    # -- serialization ---------------------------------------------------------
    def to_dict(self) -> dict:
        return {
            "format": "meshqoe-forest",
            "version": 1,
            "config": asdict(self.config),
            "seed": self.config.seed,
            "feature_order": ["faces", "distance", "lod", "si_geo", "si_col"],
            "importances": self.importances.tolist(),
            "importances_degenerate": self.importances_degenerate,
            "trees": [t.to_dict() for t in self.trees],
            "oob_indices": [o.tolist() for o in self.oob_indices],
        }

    @classmethod
    def from_dict(cls, d: dict) -> Forest:
        if d.get("format") != "meshqoe-forest":
            raise ValueError("not a meshqoe forest document")
        trees = [Tree.from_dict(t) for t in d["trees"]]
        cfg = TrainConfig(**d["config"])
        if len(trees) != cfg.n_trees:
            raise ValueError(f"document has {len(trees)} trees, config says {cfg.n_trees}")
        return cls(
            trees=trees,
            config=cfg,
            importances=np.asarray(d["importances"], dtype=np.float64),
            oob_indices=[np.asarray(o, dtype=np.int64) for o in d.get("oob_indices", [])],
            importances_degenerate=bool(d.get("importances_degenerate", False)),
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> Forest:
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def feature_importance(trees: Sequence[Tree], n_features: int = N_FEATURES,
                       normalize: bool = True) -> tuple[np.ndarray, bool]:
    """Mean decrease in MSE per feature, weighted by node share, normalised to sum 1.

    Returns (importances, degenerate); degenerate forests (no split anywhere)
    get a uniform vector.
    """
    raw = np.zeros(n_features)
    for t in trees:
        K = t.n_train
        for f, n_k, d_mse in t.split_log():
            raw[f] += (n_k / K) * d_mse
    raw /= len(trees)
    if not normalize:
        return raw, not raw.any()
    total = raw.sum()
    if total <= 0:
        return np.full(n_features, 1.0 / n_features), True
    return raw / total, False


def train_forest(X, y, config: TrainConfig = TrainConfig(), n_jobs: int = 1) -> Forest:
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if len(y) == 0:
        raise ValueError("cannot train a forest on an empty dataset")
    jobs = [(X, y, config, i) for i in range(config.n_trees)]
    if n_jobs > 1:
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            fitted = list(pool.map(_fit_one, jobs, chunksize=max(1, config.n_trees // (4 * n_jobs))))
    else:
        fitted = [_fit_one(j) for j in jobs]
    trees = [t for t, _ in fitted]
    imp, degenerate = feature_importance(trees, X.shape[1])
    return Forest(trees, config, imp, [o for _, o in fitted], degenerate)


def constant_forest(value: float, n_trees: int = 1) -> Forest:
    """A forest of leaf-only trees, all predicting ``value``."""
    leaf = Tree(np.array([LEAF]), np.array([0.0]), np.array([LEAF]), np.array([LEAF]),
                np.array([float(value)]), np.array([1]), np.array([0.0]))
    imp, degenerate = feature_importance([leaf] * n_trees)
    return Forest([leaf] * n_trees, TrainConfig(n_trees=n_trees), imp,
                  [np.empty(0, dtype=np.int64)] * n_trees, degenerate)
