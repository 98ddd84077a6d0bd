"""Iterative random-forest imputation of missing climate values.

The imputer follows the missForest recipe for continuous variables: start
from column means, then repeatedly revisit columns in order of ascending
missingness, fitting a random forest on the observed rows (all other columns
as features) and predicting the missing rows. Iteration stops as soon as the
normalized squared change of the imputed entries increases, returning the
matrix from the previous sweep, or after ``max_iter`` sweeps.

Trees are plain CART regressors: greedy variance-reduction splits with ties
broken by lowest feature index, then lowest threshold. All randomness
(bootstrap, feature subsampling, column processing) is owned by an explicit
seeded generator, so runs reproduce bit-for-bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core_math import Rng
from .data_model import Dataset, MonthlyRecord
from .errors import ShapeError

__all__ = [
    "ForestConfig",
    "RegressionTree",
    "RandomForest",
    "ImputationResult",
    "fit_tree",
    "forest_fit",
    "forest_predict",
    "missforest_impute",
    "impute_dataset",
]


@dataclass(frozen=True)
class ForestConfig:
    """Hyperparameters shared by single trees and forests.

    ``mtry=None`` resolves to ceil(sqrt(n_features)); ``max_depth=None``
    grows until leaves hold fewer than ``2 * min_samples_leaf`` rows.
    """

    n_trees: int = 100
    mtry: int | None = None
    min_samples_leaf: int = 5
    max_depth: int | None = None

    def validate(self):
        if self.n_trees < 1:
            raise ValueError(f"n_trees must be >= 1, got {self.n_trees}")
        if self.mtry is not None and self.mtry < 1:
            raise ValueError(f"mtry must be >= 1, got {self.mtry}")
        if self.min_samples_leaf < 1:
            raise ValueError(f"min_samples_leaf must be >= 1, got {self.min_samples_leaf}")
        if self.max_depth is not None and self.max_depth < 0:
            raise ValueError(f"max_depth must be >= 0, got {self.max_depth}")

    def resolve_mtry(self, n_features: int) -> int:
        if self.mtry is not None:
            return min(self.mtry, n_features)
        return min(n_features, math.ceil(math.sqrt(n_features)))


@dataclass
class _Node:
    feature: int = -1
    threshold: float = 0.0
    value: float = 0.0
    left: "_Node | None" = None
    right: "_Node | None" = None

    def is_leaf(self) -> bool:
        return self.left is None


@dataclass
class RegressionTree:
    root: _Node
    n_features: int
    config: ForestConfig

    def predict(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise ShapeError(
                f"tree fitted on {self.n_features} features, got input shape {X.shape}"
            )
        out = np.empty(X.shape[0])
        for i, row in enumerate(X):
            node = self.root
            while not node.is_leaf():
                node = node.left if row[node.feature] <= node.threshold else node.right
            out[i] = node.value
        return out


@dataclass
class RandomForest:
    trees: list[RegressionTree]
    n_features: int
    mtry: int
    seed: int
    config: ForestConfig

    @property
    def n_trees(self) -> int:
        return len(self.trees)


def _best_split(X, y, feature_indices, min_leaf):
    """Scan candidate features for the largest SSE reduction.

    Features are visited in ascending index order and thresholds in ascending
    value order with strictly-greater comparisons, which implements the tie
    rule (lowest feature index, then lowest threshold).
    """
    n = y.shape[0]
    total_sum = y.sum()
    parent_sse = float(np.dot(y, y) - total_sum * total_sum / n)
    best = None  # (reduction, feature, threshold)
    for f in feature_indices:
        order = np.argsort(X[:, f], kind="stable")
        xs = X[order, f]
        ys = y[order]
        c1 = np.cumsum(ys)
        c2 = np.cumsum(ys * ys)
        ks = np.arange(min_leaf, n - min_leaf + 1)
        if ks.size == 0:
            continue
        distinct = xs[ks - 1] < xs[ks]
        ks = ks[distinct]
        if ks.size == 0:
            continue
        left_sse = c2[ks - 1] - c1[ks - 1] ** 2 / ks
        right_sum = total_sum - c1[ks - 1]
        right_sse = (c2[-1] - c2[ks - 1]) - right_sum**2 / (n - ks)
        reductions = parent_sse - left_sse - right_sse
        j = int(np.argmax(reductions))
        if reductions[j] > 0 and (best is None or reductions[j] > best[0]):
            k = int(ks[j])
            best = (float(reductions[j]), int(f), float((xs[k - 1] + xs[k]) / 2.0))
    return best


def _grow(X, y, depth, cfg: ForestConfig, mtry: int, rng: Rng) -> _Node:
    node = _Node(value=float(y.mean()))
    n, p = X.shape
    if n < 2 * cfg.min_samples_leaf:
        return node
    if cfg.max_depth is not None and depth >= cfg.max_depth:
        return node
    if np.all(y == y[0]):
        return node
    feats = np.sort(rng.choice(np.arange(p), size=mtry, replace=False))
    best = _best_split(X, y, feats, cfg.min_samples_leaf)
    if best is None:
        return node
    _, node.feature, node.threshold = best
    mask = X[:, node.feature] <= node.threshold
    node.left = _grow(X[mask], y[mask], depth + 1, cfg, mtry, rng)
    node.right = _grow(X[~mask], y[~mask], depth + 1, cfg, mtry, rng)
    return node


def fit_tree(X, y, config: ForestConfig, rng: Rng) -> RegressionTree:
    """Fit one CART regression tree with greedy variance-reduction splits."""
    config.validate()
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2 or y.ndim != 1 or X.shape[0] != y.shape[0]:
        raise ValueError(f"X {X.shape} and y {y.shape} must be (n, p) and (n,)")
    if X.shape[0] < 1:
        raise ValueError("cannot fit a tree on zero rows")
    mtry = config.resolve_mtry(X.shape[1])
    root = _grow(X, y, 0, config, mtry, rng)
    return RegressionTree(root=root, n_features=X.shape[1], config=config)


def forest_fit(X, y, config: ForestConfig, rng: Rng) -> RandomForest:
    """Fit a bootstrap ensemble; per-tree child generators keep results
    identical whether trees are grown sequentially or in parallel."""
    config.validate()
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise ValueError(f"X {X.shape} and y {y.shape} must be (n, p) and (n,)")
    n = X.shape[0]
    trees = []
    for tree_rng in rng.split(config.n_trees):
        idx = tree_rng.integers(0, n, size=n)
        trees.append(fit_tree(X[idx], y[idx], config, tree_rng))
    return RandomForest(
        trees=trees,
        n_features=X.shape[1],
        mtry=config.resolve_mtry(X.shape[1]),
        seed=rng.seed,
        config=config,
    )


def forest_predict(forest: RandomForest, X) -> np.ndarray:
    """Mean of the member trees' predictions."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != forest.n_features:
        raise ShapeError(
            f"forest fitted on {forest.n_features} features, got input shape {X.shape}"
        )
    acc = np.zeros(X.shape[0])
    for tree in forest.trees:
        acc += tree.predict(X)
    return acc / forest.n_trees


@dataclass
class ImputationResult:
    """Completed matrix plus the stopping diagnostics.

    ``iterations_run`` counts full column sweeps; ``delta_history`` holds the
    change statistic after each sweep (the last entry triggered the stop when
    it rose above its predecessor).
    """

    completed: np.ndarray
    iterations_run: int
    final_delta: float
    delta_history: list[float] = field(default_factory=list)


def _delta(new, old, mask) -> float:
    num = float(np.sum((new[mask] - old[mask]) ** 2))
    den = float(np.sum(new[mask] ** 2))
    if den == 0.0:
        return 0.0 if num == 0.0 else math.inf
    return num / den


def missforest_impute(
    X, config: ForestConfig | None = None, rng: Rng | None = None, max_iter: int = 10
) -> ImputationResult:
    """Fill NaN entries of a (rows, features) matrix.

    Observed entries are never modified. Every column needs at least one
    observed value, and at least two columns are required so each imputed
    column has predictors.
    """
    config = config or ForestConfig()
    config.validate()
    rng = rng or Rng(0)
    if max_iter < 1:
        raise ValueError(f"max_iter must be >= 1, got {max_iter}")
    X = np.array(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] < 2:
        raise ValueError(f"need a 2-D matrix with >= 2 columns, got shape {X.shape}")
    mask = np.isnan(X)
    fully_missing = np.where(mask.all(axis=0))[0]
    if fully_missing.size:
        raise ValueError(f"columns {fully_missing.tolist()} have no observed entries")
    if not mask.any():
        return ImputationResult(completed=X, iterations_run=0, final_delta=0.0)

    # Initial guess: column means over observed entries.
    work = X.copy()
    col_means = np.nanmean(X, axis=0)
    work[mask] = np.take(col_means, np.where(mask)[1])

    missing_counts = mask.sum(axis=0)
    columns = [int(c) for c in np.argsort(missing_counts, kind="stable") if missing_counts[c] > 0]
    others = {c: np.delete(np.arange(X.shape[1]), c) for c in columns}

    history: list[float] = []
    delta_prev = math.inf
    for iteration in range(1, max_iter + 1):
        previous = work.copy()
        for c in columns:
            obs = ~mask[:, c]
            forest = forest_fit(work[np.ix_(obs, others[c])], X[obs, c], config, rng)
            work[mask[:, c], c] = forest_predict(forest, work[np.ix_(mask[:, c], others[c])])
        delta = _delta(work, previous, mask)
        history.append(delta)
        if delta > delta_prev:
            return ImputationResult(
                completed=previous,
                iterations_run=iteration,
                final_delta=delta,
                delta_history=history,
            )
        if delta == 0.0:
            break
        delta_prev = delta
    return ImputationResult(
        completed=work,
        iterations_run=min(iteration, max_iter),
        final_delta=history[-1],
        delta_history=history,
    )


CLIMATE_FIELDS = ("temp_mean", "rainfall", "rel_humidity")


def _province_matrix(records) -> np.ndarray:
    """Climate columns plus cyclical month-of-year features (never missing)."""
    rows = []
    for rec in records:
        angle = 2.0 * math.pi * (rec.month.month - 1) / 12.0
        rows.append(
            [
                np.nan if rec.temp_mean is None else rec.temp_mean,
                np.nan if rec.rainfall is None else rec.rainfall,
                np.nan if rec.rel_humidity is None else rec.rel_humidity,
                math.sin(angle),
                math.cos(angle),
            ]
        )
    return np.asarray(rows, dtype=np.float64)


def impute_dataset(
    dataset: Dataset,
    config: ForestConfig | None = None,
    rng: Rng | None = None,
    max_iter: int = 10,
) -> tuple[Dataset, dict[str, ImputationResult]]:
    """Impute climate fields province by province.

    Each province gets its own matrix of (temp, rainfall, humidity, month
    sin/cos) and its own child generator, so provinces are independent and
    the whole pass is deterministic. Population and cases are never touched.
    """
    rng = rng or Rng(0)
    provinces = dataset.provinces
    child_rngs = rng.split(len(provinces))
    series: dict[str, list[MonthlyRecord]] = {}
    results: dict[str, ImputationResult] = {}
    for province, child in zip(provinces, child_rngs):
        records = dataset.series[province]
        matrix = _province_matrix(records)
        result = missforest_impute(matrix, config, child, max_iter)
        results[province] = result
        filled = []
        for i, rec in enumerate(records):
            filled.append(
                MonthlyRecord(
                    province=rec.province,
                    month=rec.month,
                    temp_mean=rec.temp_mean if rec.temp_mean is not None else float(result.completed[i, 0]),
                    rainfall=rec.rainfall if rec.rainfall is not None else float(result.completed[i, 1]),
                    rel_humidity=rec.rel_humidity if rec.rel_humidity is not None else float(result.completed[i, 2]),
                    population=rec.population,
                    cases=rec.cases,
                )
            )
        series[province] = filled
    return Dataset(dataset.scheme, series), results
