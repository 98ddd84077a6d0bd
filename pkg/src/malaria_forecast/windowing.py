"""Sliding-window supervised datasets and the chronological train/test split.

A window of ``lookback`` consecutive months predicts the next month's case
count. The univariate variant uses only lagged cases (feature width 1); the
multivariate variant adds temperature, rainfall, humidity, and population
(width 5, cases last). Scaling parameters are fitted on the training
partition only and applied to both partitions, so no test information leaks
into the transform.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core_math import MinMaxScaler
from .data_model import MonthKey, MonthlyRecord
from .errors import DataError

__all__ = ["WindowSpec", "WindowedDataset", "make_windows", "split_train_test"]

VARIANTS = ("univariate", "multivariate")
# Feature order for the multivariate variant; cases are last in both variants.
MULTIVARIATE_FEATURES = ("temp_mean", "rainfall", "rel_humidity", "population", "cases")


@dataclass(frozen=True)
class WindowSpec:
    lookback: int
    variant: str

    def __post_init__(self):
        if self.lookback < 1:
            raise ValueError(f"lookback must be >= 1, got {self.lookback}")
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")

    @property
    def feature_width(self) -> int:
        return 5 if self.variant == "multivariate" else 1


@dataclass
class WindowedDataset:
    """Supervised samples in chronological order.

    ``inputs`` is (samples, lookback, features) and ``targets`` the
    next-month case count per sample; ``months`` holds each target's month.
    Fresh output of :func:`make_windows` is unscaled with no scalers; the
    partitions returned by :func:`split_train_test` are scaled and carry the
    train-fitted scalers plus the split bookkeeping.
    """

    spec: WindowSpec
    inputs: np.ndarray
    targets: np.ndarray
    months: list[MonthKey]
    input_scaler: MinMaxScaler | None = None
    target_scaler: MinMaxScaler | None = None
    split_index: int | None = None
    train_fraction: float | None = None

    @property
    def samples(self) -> int:
        return self.inputs.shape[0]


def _features(rec: MonthlyRecord, variant: str) -> list[float]:
    if variant == "univariate":
        return [float(rec.cases)]
    return [
        rec.temp_mean,
        rec.rainfall,
        rec.rel_humidity,
        float(rec.population),
        float(rec.cases),
    ]


def make_windows(series: Sequence[MonthlyRecord], spec: WindowSpec) -> WindowedDataset:
    """Slice a complete province series into (window, next-month cases) pairs."""
    n = len(series)
    if n <= spec.lookback:
        raise DataError(
            f"series has {n} months but lookback {spec.lookback} needs at least {spec.lookback + 1}"
        )
    for rec in series:
        if spec.variant == "multivariate" and rec.has_missing_climate():
            raise DataError(
                f"missing climate value at {rec.month}; impute before windowing"
            )
    rows = np.asarray([_features(rec, spec.variant) for rec in series], dtype=np.float64)
    samples = n - spec.lookback
    inputs = np.stack([rows[i : i + spec.lookback] for i in range(samples)])
    targets = np.asarray([float(series[i + spec.lookback].cases) for i in range(samples)])
    months = [series[i + spec.lookback].month for i in range(samples)]
    return WindowedDataset(spec=spec, inputs=inputs, targets=targets, months=months)


def split_train_test(
    windows: WindowedDataset, train_fraction: float
) -> tuple[WindowedDataset, WindowedDataset]:
    """Chronological split at floor(fraction * samples); no shuffling.

    Min-max scalers are fitted on the training inputs and targets only, then
    applied to both partitions. Test values outside the training range land
    outside [0, 1]; that is expected and preserved.
    """
    if not 0.0 < train_fraction < 1.0:
        raise ValueError(f"train_fraction must be in (0, 1), got {train_fraction}")
    n = windows.samples
    split = math.floor(train_fraction * n)
    if split < 1 or split >= n:
        raise ValueError(
            f"split of {n} samples at fraction {train_fraction} leaves an empty partition"
        )
    width = windows.spec.feature_width
    input_scaler = MinMaxScaler.fit(windows.inputs[:split].reshape(-1, width))
    target_scaler = MinMaxScaler.fit(windows.targets[:split].reshape(-1, 1))

    def _partition(lo, hi):
        return WindowedDataset(
            spec=windows.spec,
            inputs=input_scaler.transform(windows.inputs[lo:hi]),
            targets=target_scaler.transform(windows.targets[lo:hi].reshape(-1, 1)).ravel(),
            months=windows.months[lo:hi],
            input_scaler=input_scaler,
            target_scaler=target_scaler,
            split_index=split,
            train_fraction=train_fraction,
        )

    return _partition(0, split), _partition(split, n)
