"""Training and test-time forecasting: mini-batch Adam training, free-running
walk-forward prediction, block multi-step prediction, RMSE, and extreme-event
hit/miss accounting."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .dataset import MinMaxScaler, SupervisedDataset
from .dynamics import classify_extremes, local_maxima
from .neuralcore import Adam, Network, TrainingNumericsError


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 250
    batch_size: int = 64
    shuffle: bool = True
    seed: int = 1
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps_stab: float = 1e-8

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")


class TrainingDiverged(RuntimeError):
    def __init__(self, epoch: int, batch: int, detail: str):
        self.epoch = epoch
        self.batch = batch
        super().__init__(f"training diverged at epoch {epoch}, batch {batch}: {detail}")


def train(network: Network, dataset: SupervisedDataset,
          cfg: TrainConfig) -> tuple[Network, list[float]]:
    """Run `cfg.epochs` full passes of shuffled mini-batch Adam; returns the
    trained network and the per-epoch mean training loss."""
    if len(dataset) == 0:
        raise ValueError("cannot train on an empty dataset")
    rng = np.random.default_rng(cfg.seed)
    opt = Adam(lr=cfg.lr, beta1=cfg.beta1, beta2=cfg.beta2, eps_stab=cfg.eps_stab)
    n = len(dataset)
    history: list[float] = []
    for epoch in range(cfg.epochs):
        order = rng.permutation(n) if cfg.shuffle else np.arange(n)
        total = 0.0
        for bi, start in enumerate(range(0, n, cfg.batch_size)):
            idx = order[start:start + cfg.batch_size]
            try:
                loss = network.loss_and_grads(dataset.inputs[idx], dataset.targets[idx])
            except TrainingNumericsError as exc:
                raise TrainingDiverged(epoch, bi, str(exc)) from exc
            if not math.isfinite(loss):
                raise TrainingDiverged(epoch, bi, f"loss={loss}")
            opt.step(network)
            total += loss * len(idx)
        history.append(total / n)
    return network, history


@dataclass
class ForecastReport:
    """One test-window forecast: de-normalized series, error, and events."""

    predicted: np.ndarray
    actual: np.ndarray
    rmse: float
    predicted_event_times: np.ndarray
    actual_event_times: np.ndarray
    feedback_mode: str
    seed: int
    t: np.ndarray = field(default=None)
    horizon: int = 1
    threshold: float | None = None
    wall_time_s: float = 0.0  # informational only; excluded from serialized outputs

    def __post_init__(self):
        if len(self.predicted) != len(self.actual):
            raise ValueError("predicted and actual lengths differ")
        if self.t is None:
            self.t = np.arange(len(self.actual), dtype=float)


def rmse(predicted: np.ndarray, actual: np.ndarray) -> float:
    """Root mean squared error over a test window (de-normalized units)."""
    predicted = np.asarray(predicted, dtype=float)
    actual = np.asarray(actual, dtype=float)
    if predicted.shape != actual.shape or predicted.size == 0:
        raise ValueError(f"rmse needs equal nonempty shapes, got {predicted.shape} "
                         f"vs {actual.shape}")
    diff = predicted - actual
    return float(np.sqrt(np.mean(diff * diff)))


def _series_event_times(times: np.ndarray, values: np.ndarray,
                        threshold: float | None) -> np.ndarray:
    if threshold is None or len(values) < 3:
        return np.empty(0)
    peaks_idx = local_maxima(values)
    peaks = np.column_stack([times[peaks_idx], values[peaks_idx]])
    _, events = classify_extremes(peaks, threshold)
    return events[:, 0]


def _predict_block(network: Network, hist: list[float], window_len: int,
                   horizon: int, extra_feature: float | None,
                   pos: int) -> np.ndarray:
    x = np.array(hist[-window_len:], dtype=float).reshape(1, window_len, 1)
    if extra_feature is not None:
        feat = np.full((1, window_len, 1), extra_feature)
        x = np.concatenate([x, feat], axis=2)
    block = network.forward(x)[0]
    if len(block) != horizon:
        raise ValueError(f"network emits {len(block)} values per step, expected "
                         f"horizon={horizon}")
    if not np.all(np.isfinite(block)):
        raise RuntimeError(f"non-finite prediction at forecast step {pos}")
    return block


def _rolling_forecast(network: Network, history: list[float], actual_norm: np.ndarray,
                      horizon: int, window_len: int, feedback: str,
                      extra_feature: float | None) -> np.ndarray:
    """Block-by-block forecast of len(actual_norm) steps.  feedback='predicted'
    appends each predicted block to the rolling input (free-running);
    'actual' appends the true values instead (diagnostic)."""
    preds: list[float] = []
    hist = list(history)
    n_steps = len(actual_norm)
    pos = 0
    while pos < n_steps:
        block = _predict_block(network, hist, window_len, horizon, extra_feature, pos)
        preds.extend(float(b) for b in block)
        if feedback == "predicted":
            hist.extend(float(b) for b in block)
        else:
            hist.extend(float(a) for a in actual_norm[pos:pos + horizon])
        pos += horizon
    return np.array(preds[:n_steps])


def multi_step_forecast(network: Network, seed_history: np.ndarray,
                        actual_test: np.ndarray, scaler: MinMaxScaler,
                        horizon: int = 1, window_len: int = 1,
                        feedback: str = "predicted",
                        threshold: float | None = None,
                        epsilon_feature: float | None = None,
                        t_start: float = 0.0, t_step: float = 1.0,
                        seed: int = 0) -> ForecastReport:
    """Iteratively predict the test window in blocks of `horizon` values.

    `seed_history` and `actual_test` are raw (de-normalized) series; the
    scaler used to train the model transforms them for the network and the
    predictions are inverse-transformed before RMSE and event detection.
    A final partial block is truncated to the test length.
    """
    if feedback not in ("predicted", "actual"):
        raise ValueError(f"feedback must be 'predicted' or 'actual', got {feedback!r}")
    seed_history = np.asarray(seed_history, dtype=float)
    actual_test = np.asarray(actual_test, dtype=float)
    if len(seed_history) < window_len:
        raise ValueError(
            f"seed history has {len(seed_history)} values, need >= window_len={window_len}"
        )
    t0 = time.perf_counter()
    hist_norm = list(scaler.transform(seed_history[-window_len:]))
    actual_norm = scaler.transform(actual_test)
    n_steps = len(actual_test)
    preds_norm = _rolling_forecast(network, hist_norm, actual_norm, horizon,
                                   window_len, feedback, epsilon_feature)
    predicted = scaler.inverse_transform(preds_norm)
    times = t_start + t_step * np.arange(n_steps)
    return ForecastReport(
        predicted=predicted,
        actual=actual_test.copy(),
        rmse=rmse(predicted, actual_test),
        predicted_event_times=_series_event_times(times, predicted, threshold),
        actual_event_times=_series_event_times(times, actual_test, threshold),
        feedback_mode=feedback,
        seed=seed,
        t=times,
        horizon=horizon,
        threshold=threshold,
        wall_time_s=time.perf_counter() - t0,
    )


def walk_forward(network: Network, seed_history: np.ndarray, actual_test: np.ndarray,
                 scaler: MinMaxScaler, window_len: int = 1,
                 feedback: str = "predicted", threshold: float | None = None,
                 epsilon_feature: float | None = None,
                 t_start: float = 0.0, t_step: float = 1.0,
                 seed: int = 0) -> ForecastReport:
    """One-value-at-a-time forecasting; horizon-1 special case of the block
    engine, so the two are consistent by construction."""
    return multi_step_forecast(
        network, seed_history, actual_test, scaler,
        horizon=1, window_len=window_len, feedback=feedback, threshold=threshold,
        epsilon_feature=epsilon_feature, t_start=t_start, t_step=t_step, seed=seed,
    )


def event_outcomes(report: ForecastReport, match_window: float = 5.0) -> tuple[int, int, int]:
    """(hits, misses, false_alarms) by greedy nearest matching of predicted to
    actual event times; a pair matches when |t_pred - t_actual| <= match_window."""
    pred_times = list(report.predicted_event_times)
    actual_times = list(report.actual_event_times)
    matched_actual = [False] * len(actual_times)
    hits = 0
    for tp in pred_times:
        best = None
        best_dist = None
        for k, ta in enumerate(actual_times):
            if matched_actual[k]:
                continue
            dist = abs(tp - ta)
            if dist <= match_window and (best_dist is None or dist < best_dist):
                best, best_dist = k, dist
        if best is not None:
            matched_actual[best] = True
            hits += 1
    misses = matched_actual.count(False)
    false_alarms = len(pred_times) - hits
    return hits, misses, false_alarms
