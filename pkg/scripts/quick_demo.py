#!/usr/bin/env python3
"""Small end-to-end demo: simulate one quiet and one bursting regime, train
the three forecasters briefly, and print the resulting test RMSE per model.

Uses a reduced series and epoch budget so it finishes in about a minute;
see scripts/reproduce_all.sh for the full-scale protocol.
"""

from extremecast.config import ExperimentConfig
from extremecast.dataset import fit_scaler, frame_supervised, split
from extremecast.dynamics import (
    State,
    classify_extremes,
    detect_peaks,
    integrate,
    peak_statistics,
)
from extremecast.forecast import train, walk_forward
from extremecast.models import build_model

cfg = ExperimentConfig.from_dict({
    "system": {"epsilons": [0.05, 0.081]},
    "integration": {"transient": 200.0, "n_samples": 4000},
    "split": {"n_train": 3200, "n_test": 800},
    "train": {"epochs": 30},
})

for eps in cfg.epsilons:
    traj = integrate(cfg.system_params(eps), State(cfg.x0, cfg.v0),
                     t_end=cfg.t_end, dt=cfg.dt,
                     sample_interval=cfg.sample_interval, transient=cfg.transient)
    stats = peak_statistics(detect_peaks(traj, variable=cfg.event_variable))
    n_events, _ = classify_extremes(stats.peaks, stats.threshold)
    print(f"\neps={eps}: {len(traj)} samples, {stats.n_peaks} velocity peaks, "
          f"threshold {stats.threshold:.3f}, {n_events} extreme events")

    train_raw, test_raw = split(traj.x, cfg.n_train, cfg.n_test)
    scaler = fit_scaler(train_raw, lo=cfg.scale_lo, hi=cfg.scale_hi)
    framed = frame_supervised(scaler.transform(train_raw),
                              cfg.window_len, cfg.horizon)
    for kind in cfg.models:
        net = build_model(cfg.model_spec(kind), seed=1)
        net, history = train(net, framed, cfg.train_config(seed=1))
        for mode in ("predicted", "actual"):
            report = walk_forward(net, train_raw, test_raw, scaler,
                                  window_len=cfg.window_len, feedback=mode,
                                  threshold=stats.threshold)
            print(f"  {kind:<4} feedback={mode:<9} rmse={report.rmse:8.4f} "
                  f"(final train loss {history[-1]:.2e})")
