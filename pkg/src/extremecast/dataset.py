"""Supervised framing of a scalar series: split, min-max scaling, sliding
windows, and the constant-parameter input feature."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np


def split(series: np.ndarray, n_train: int, n_test: int) -> tuple[np.ndarray, np.ndarray]:
    """Contiguous order-preserving split; test starts right after the train prefix."""
    series = np.asarray(series)
    needed = n_train + n_test
    if needed > len(series):
        raise ValueError(
            f"split needs {needed} samples ({n_train} train + {n_test} test), "
            f"only {len(series)} available"
        )
    return series[:n_train], series[n_train:n_train + n_test]


@dataclass(frozen=True)
class MinMaxScaler:
    """Affine map of [x_min, x_max] onto [lo, hi]; exactly invertible and
    deliberately non-clamping so out-of-range values stay out of range."""

    x_min: float
    x_max: float
    lo: float = -1.0
    hi: float = 1.0

    def __post_init__(self):
        if not self.x_max > self.x_min:
            raise ValueError(f"degenerate fit range: x_min={self.x_min}, x_max={self.x_max}")
        if not self.hi > self.lo:
            raise ValueError(f"degenerate target range: lo={self.lo}, hi={self.hi}")

    def transform(self, values):
        values = np.asarray(values, dtype=float)
        return self.lo + (values - self.x_min) * (self.hi - self.lo) / (self.x_max - self.x_min)

    def inverse_transform(self, values):
        values = np.asarray(values, dtype=float)
        return self.x_min + (values - self.lo) * (self.x_max - self.x_min) / (self.hi - self.lo)


def fit_scaler(series: np.ndarray, lo: float = -1.0, hi: float = 1.0) -> MinMaxScaler:
    """Fit on the training series only; the test series must be transformed
    with the train-fitted scaler to avoid leakage."""
    series = np.asarray(series, dtype=float)
    if series.size < 2:
        raise ValueError("fit_scaler needs at least two values")
    x_min, x_max = float(series.min()), float(series.max())
    if x_max == x_min:
        raise ValueError(f"cannot fit scaler on a constant series (all values {x_min})")
    return MinMaxScaler(x_min=x_min, x_max=x_max, lo=lo, hi=hi)


@dataclass
class SupervisedDataset:
    """Sliding-window pairs: inputs (n, window_len, num_features),
    targets (n, horizon).  Targets immediately follow their input window."""

    inputs: np.ndarray
    targets: np.ndarray
    window_len: int
    horizon: int
    num_features: int = 1

    def __post_init__(self):
        if self.inputs.shape != (len(self.inputs), self.window_len, self.num_features):
            raise ValueError(
                f"inputs shape {self.inputs.shape} inconsistent with "
                f"window_len={self.window_len}, num_features={self.num_features}"
            )
        if self.targets.shape != (len(self.inputs), self.horizon):
            raise ValueError(
                f"targets shape {self.targets.shape} inconsistent with "
                f"{len(self.inputs)} pairs, horizon={self.horizon}"
            )

    def __len__(self) -> int:
        return len(self.inputs)


def frame_supervised(series: np.ndarray, window_len: int = 1, horizon: int = 1) -> SupervisedDataset:
    """Stride-1 sliding window: pair i maps series[i : i+window_len] to
    series[i+window_len : i+window_len+horizon]."""
    series = np.asarray(series, dtype=float)
    if series.ndim != 1:
        raise ValueError("frame_supervised expects a 1-D series")
    if window_len < 1 or horizon < 1:
        raise ValueError("window_len and horizon must be >= 1")
    n_pairs = len(series) - window_len - horizon + 1
    if n_pairs < 1:
        raise ValueError(
            f"series of length {len(series)} too short for window_len={window_len}, "
            f"horizon={horizon}"
        )
    win = np.lib.stride_tricks.sliding_window_view(series, window_len)
    inputs = win[:n_pairs].reshape(n_pairs, window_len, 1).copy()
    tgt = np.lib.stride_tricks.sliding_window_view(series[window_len:], horizon)
    targets = tgt[:n_pairs].copy()
    return SupervisedDataset(inputs=inputs, targets=targets,
                             window_len=window_len, horizon=horizon, num_features=1)


def augment_with_parameter(dataset: SupervisedDataset, epsilon: float,
                           eps_scaler: MinMaxScaler | None = None) -> SupervisedDataset:
    """Append the drive strength as a constant second feature at every input
    step.  Single-regime training passes the raw value; concatenated
    multi-regime data should supply a scaler fitted over the training
    epsilon set."""
    if dataset.num_features != 1:
        raise ValueError(f"dataset already has {dataset.num_features} features")
    value = float(epsilon) if eps_scaler is None else float(eps_scaler.transform(epsilon))
    n, w, _ = dataset.inputs.shape
    feat = np.full((n, w, 1), value)
    return SupervisedDataset(
        inputs=np.concatenate([dataset.inputs, feat], axis=2),
        targets=dataset.targets.copy(),
        window_len=dataset.window_len,
        horizon=dataset.horizon,
        num_features=2,
    )


def reconstruct_series(dataset: SupervisedDataset) -> np.ndarray:
    """Invert frame_supervised: recover the original series from the pairs."""
    first = dataset.inputs[0, :, 0]
    rest_inputs = dataset.inputs[1:, -1, 0]  # each later window contributes its newest value
    tail = dataset.targets[-1]               # final horizon block
    n = len(dataset)
    total = n + dataset.window_len + dataset.horizon - 1
    out = np.empty(total)
    out[:dataset.window_len] = first
    out[dataset.window_len:dataset.window_len + n - 1] = rest_inputs
    out[dataset.window_len + n - 1:] = tail
    return out


def save_dataset_csv(dataset: SupervisedDataset, path) -> None:
    """One row per pair, columns in_0..in_{w*f-1},out_0..out_{h-1}."""
    w, f, h = dataset.window_len, dataset.num_features, dataset.horizon
    header = [f"in_{i}" for i in range(w * f)] + [f"out_{i}" for i in range(h)]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for x, y in zip(dataset.inputs, dataset.targets):
            row = [f"{val:.17g}" for val in x.reshape(-1)] + [f"{val:.17g}" for val in y]
            writer.writerow(row)


def load_dataset_csv(path, window_len: int, horizon: int,
                     num_features: int = 1) -> SupervisedDataset:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    n_in = window_len * num_features
    if data.shape[1] != n_in + horizon:
        raise ValueError(
            f"CSV has {data.shape[1]} columns, expected {n_in + horizon} for "
            f"window_len={window_len}, num_features={num_features}, horizon={horizon}"
        )
    return SupervisedDataset(
        inputs=data[:, :n_in].reshape(-1, window_len, num_features).copy(),
        targets=data[:, n_in:].copy(),
        window_len=window_len,
        horizon=horizon,
        num_features=num_features,
    )
