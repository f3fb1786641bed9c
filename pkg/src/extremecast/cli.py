"""Experiment driver: simulate, run, param-switch, ablate, report.

Every output file embeds the config hash and the seed that produced it, and
all writes are atomic (temp file + rename) so re-running a config reproduces
outputs byte-for-byte.
"""

from __future__ import annotations

import argparse
import io
import json
import os
import statistics
import sys
from pathlib import Path

import numpy as np
import yaml

from . import dataset as ds_mod
from .config import ExperimentConfig
from .dynamics import (
    IntegrationError,
    State,
    Trajectory,
    classify_extremes,
    detect_peaks,
    integrate,
    local_maxima,
    peak_statistics,
    save_trajectory_csv,
)
from .forecast import event_outcomes, multi_step_forecast, train
from .models import build_model
from .neuralcore import save_weights


def _write_atomic(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def _write_json(path: Path, obj) -> None:
    _write_atomic(path, json.dumps(obj, sort_keys=True, indent=1) + "\n")


def _write_csv(path: Path, header: list[str], rows, meta: dict | None = None) -> None:
    buf = io.StringIO()
    if meta:
        buf.write("# " + " ".join(f"{k}={v}" for k, v in meta.items()) + "\n")
    buf.write(",".join(header) + "\n")
    for row in rows:
        buf.write(",".join(_fmt(v) for v in row) + "\n")
    _write_atomic(path, buf.getvalue())


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.17g}"
    return str(v)


def _eps_tag(eps: float) -> str:
    return f"{eps:g}"


class Workspace:
    """Shared state for one CLI invocation: config, output dir, and caches."""

    def __init__(self, cfg: ExperimentConfig, out_dir: Path):
        self.cfg = cfg
        self.out = out_dir
        self.out.mkdir(parents=True, exist_ok=True)
        self._trajectories: dict[float, Trajectory] = {}

    def trajectory(self, eps: float) -> Trajectory:
        if eps not in self._trajectories:
            cfg = self.cfg
            self._trajectories[eps] = integrate(
                cfg.system_params(eps), State(cfg.x0, cfg.v0),
                t_end=cfg.t_end, dt=cfg.dt, sample_interval=cfg.sample_interval,
                transient=cfg.transient,
            )
        return self._trajectories[eps]

    def regime_data(self, eps: float):
        """(train_raw, test_raw, scaler, x_threshold, t_test0) for one regime.

        The forecast-side event threshold is computed on the position series
        (the forecast variable) over the training window only.
        """
        cfg = self.cfg
        traj = self.trajectory(eps)
        train_raw, test_raw = ds_mod.split(traj.x, cfg.n_train, cfg.n_test)
        scaler = ds_mod.fit_scaler(train_raw, lo=cfg.scale_lo, hi=cfg.scale_hi)
        t_train_end = traj.t[cfg.n_train - 1]
        fine_t, fine_x = traj.fine_series("x")
        mask = fine_t <= t_train_end
        idx = local_maxima(fine_x[mask])
        train_peaks = np.column_stack([fine_t[mask][idx], fine_x[mask][idx]])
        threshold = peak_statistics(train_peaks).threshold
        t_test0 = traj.t[cfg.n_train]
        return train_raw, test_raw, scaler, threshold, t_test0


def _report_payload(cfg: ExperimentConfig, kind: str, eps: float, seed: int,
                    report, loss_history) -> dict:
    hits, misses, false_alarms = event_outcomes(report, cfg.event_match_window)
    return {
        "config_hash": cfg.hash(),
        "model": kind,
        "epsilon": eps,
        "seed": seed,
        "feedback_mode": report.feedback_mode,
        "window_len": cfg.window_len,
        "horizon": report.horizon,
        "rmse": report.rmse,
        "event_threshold": report.threshold,
        "predicted_event_times": list(report.predicted_event_times),
        "actual_event_times": list(report.actual_event_times),
        "event_hits": hits,
        "event_misses": misses,
        "event_false_alarms": false_alarms,
        "final_train_loss": loss_history[-1] if loss_history else None,
        "loss_history": list(loss_history),
    }


def _save_report(ws: Workspace, stem: str, payload: dict, report) -> None:
    _write_json(ws.out / f"{stem}.json", payload)
    _write_csv(ws.out / f"{stem}.csv", ["t", "actual", "predicted"],
               zip(report.t, report.actual, report.predicted),
               meta={"config_hash": payload["config_hash"], "seed": payload["seed"]})


def _median_seed(rmses: dict[int, float]) -> int:
    """Seed whose RMSE is the median (lower of the two middles for even n)."""
    ordered = sorted(rmses, key=lambda s: (rmses[s], s))
    return ordered[(len(ordered) - 1) // 2]


# --- subcommands -------------------------------------------------------------


def cmd_simulate(ws: Workspace) -> int:
    cfg = ws.cfg
    summary = {"config_hash": cfg.hash(), "event_variable": cfg.event_variable,
               "regimes": {}}
    failures = 0
    for eps in cfg.epsilons:
        tag = _eps_tag(eps)
        try:
            traj = ws.trajectory(eps)
        except IntegrationError as exc:
            print(f"simulate: regime eps={tag} diverged: {exc}", file=sys.stderr)
            summary["regimes"][tag] = {"error": str(exc)}
            failures += 1
            continue
        save_trajectory_csv(traj, ws.out / f"trajectory_eps{tag}.csv")
        entry = {}
        for variable in ("x", "v"):
            stats = peak_statistics(detect_peaks(traj, variable=variable))
            count, events = classify_extremes(stats.peaks, stats.threshold)
            entry[variable] = {
                "mean_peak": stats.mean_peak,
                "std_peak": stats.std_peak,
                "threshold": stats.threshold,
                "n_peaks": stats.n_peaks,
                "n_extreme_events": count,
                "event_times": list(events[:, 0]),
            }
        entry["n_extreme_events"] = entry[cfg.event_variable]["n_extreme_events"]
        summary["regimes"][tag] = entry
        print(f"simulate: eps={tag}: {len(traj)} samples, "
              f"{entry['n_extreme_events']} extreme events "
              f"(threshold {entry[cfg.event_variable]['threshold']:.4f} on "
              f"{cfg.event_variable})")
    _write_json(ws.out / "simulate_summary.json", summary)
    return 1 if failures else 0


def _run_single(ws: Workspace, kind: str, eps: float, seed: int,
                save_weights_flag: bool = False):
    cfg = ws.cfg
    train_raw, test_raw, scaler, threshold, t_test0 = ws.regime_data(eps)
    framed = ds_mod.frame_supervised(scaler.transform(train_raw),
                                     cfg.window_len, cfg.horizon)
    net = build_model(cfg.model_spec(kind), seed=seed)
    net, history = train(net, framed, cfg.train_config(seed))
    report = multi_step_forecast(
        net, train_raw, test_raw, scaler,
        horizon=cfg.horizon, window_len=cfg.window_len, feedback=cfg.feedback,
        threshold=threshold, t_start=t_test0, t_step=cfg.sample_interval,
        seed=seed,
    )
    stem = f"report_{kind}_eps{_eps_tag(eps)}_seed{seed}"
    _save_report(ws, stem, _report_payload(cfg, kind, eps, seed, report, history), report)
    if save_weights_flag:
        save_weights(net, ws.out / f"weights_{kind}_eps{_eps_tag(eps)}_seed{seed}.json")
    return report


def cmd_run(ws: Workspace, save_weights_flag: bool = False) -> int:
    cfg = ws.cfg
    failures = []
    rmse_by_cell: dict[tuple[str, float], dict[int, float]] = {}
    reports: dict[tuple[str, float, int], object] = {}
    for eps in cfg.epsilons:
        for kind in cfg.models:
            for seed in cfg.seeds:
                label = f"{kind} eps={_eps_tag(eps)} seed={seed}"
                try:
                    report = _run_single(ws, kind, eps, seed, save_weights_flag)
                except Exception as exc:
                    print(f"run: {label} failed: {exc}", file=sys.stderr)
                    failures.append(label)
                    continue
                rmse_by_cell.setdefault((kind, eps), {})[seed] = report.rmse
                reports[(kind, eps, seed)] = report
                print(f"run: {label}: rmse={report.rmse:.6g}")

    # bar-chart data: median RMSE per (model, regime)
    bar_rows = []
    for (kind, eps), rmses in sorted(rmse_by_cell.items(), key=lambda kv: (kv[0][1], kv[0][0])):
        bar_rows.append([kind, eps, statistics.median(rmses.values()), len(rmses)])
    _write_csv(ws.out / "rmse_bars.csv",
               ["model", "epsilon", "rmse_median", "n_seeds"], bar_rows,
               meta={"config_hash": cfg.hash(),
                     "seeds": ";".join(str(s) for s in cfg.seeds)})

    # scatter data per (model, regime), from the median-RMSE seed
    for (kind, eps), rmses in rmse_by_cell.items():
        seed = _median_seed(rmses)
        rep = reports[(kind, eps, seed)]
        _write_csv(ws.out / f"scatter_{kind}_eps{_eps_tag(eps)}.csv",
                   ["actual", "predicted"], zip(rep.actual, rep.predicted),
                   meta={"config_hash": cfg.hash(), "seed": seed})

    return 1 if failures else 0


def cmd_param_switch(ws: Workspace) -> int:
    cfg = ws.cfg
    failures = []
    for train_eps, test_eps in cfg.switch_pairs:
        pair_tag = f"{_eps_tag(train_eps)}to{_eps_tag(test_eps)}"
        rmses: dict[int, float] = {}
        reports = {}
        for seed in cfg.seeds:
            label = f"param-switch {pair_tag} seed={seed}"
            try:
                train_raw_a, _, scaler_a, _, _ = ws.regime_data(train_eps)
                framed = ds_mod.augment_with_parameter(
                    ds_mod.frame_supervised(scaler_a.transform(train_raw_a),
                                            cfg.window_len, cfg.horizon),
                    train_eps,
                )
                net = build_model(cfg.model_spec("lstm", num_features=2), seed=seed)
                net, history = train(net, framed, cfg.train_config(seed))

                train_raw_b, test_raw_b, scaler_b, threshold_b, t_test0 = \
                    ws.regime_data(test_eps)
                report = multi_step_forecast(
                    net, train_raw_b, test_raw_b, scaler_b,
                    horizon=cfg.horizon, window_len=cfg.window_len,
                    feedback=cfg.feedback, threshold=threshold_b,
                    epsilon_feature=test_eps, t_start=t_test0,
                    t_step=cfg.sample_interval, seed=seed,
                )
            except Exception as exc:
                print(f"run: {label} failed: {exc}", file=sys.stderr)
                failures.append(label)
                continue
            payload = _report_payload(cfg, "lstm-param", test_eps, seed, report, history)
            payload["train_epsilon"] = train_eps
            payload["test_epsilon"] = test_eps
            _save_report(ws, f"report_switch_{pair_tag}_seed{seed}", payload, report)
            rmses[seed] = report.rmse
            reports[seed] = report
            r = np.corrcoef(report.actual, report.predicted)[0, 1]
            print(f"run: {label}: rmse={report.rmse:.6g} pearson_r={r:.4f}")
        if rmses:
            seed = _median_seed(rmses)
            rep = reports[seed]
            _write_csv(ws.out / f"scatter_switch_{pair_tag}.csv",
                       ["actual", "predicted"], zip(rep.actual, rep.predicted),
                       meta={"config_hash": cfg.hash(), "seed": seed})
    return 1 if failures else 0


ABLATION_AXES = {
    "mlp_neurons": (1, 2, 4, 8, 16, 32, 64),
    "cnn_filters": (2, 4, 8, 16, 32, 64, 128),
    "lstm_units_1layer": (1, 2, 4, 8, 16, 32, 64),
    "lstm_units_2layer": (1, 2, 4, 8, 16, 32, 64),
    "data_size": (2000, 4000, 6000, 8000, 10000, 12000, 14000, 16000, 18000),
    "multi_step": (2, 3, 4, 5),
}

ABLATION_EPSILONS = (0.05, 0.081)


def _ablate_run(ws: Workspace, axis: str, value: int, kind: str, eps: float,
                seed: int) -> float:
    """One sweep cell; returns the test RMSE."""
    cfg = ws.cfg
    train_raw, test_raw, scaler, threshold, t_test0 = ws.regime_data(eps)
    window_len, horizon = cfg.window_len, cfg.horizon
    spec_over = {}
    if axis == "mlp_neurons":
        spec_over["mlp_hidden"] = (cfg.mlp_hidden[0], value)
    elif axis == "cnn_filters":
        window_len = 5
        spec_over.update(cnn_filters=value, cnn_kernel=2)
    elif axis == "lstm_units_1layer":
        spec_over["lstm_units"] = (value,)
    elif axis == "lstm_units_2layer":
        spec_over["lstm_units"] = (cfg.lstm_units[0], value)
    elif axis == "data_size":
        train_raw = train_raw[-value:]
        scaler = ds_mod.fit_scaler(train_raw, lo=cfg.scale_lo, hi=cfg.scale_hi)
    elif axis == "multi_step":
        horizon = value
    spec = cfg.model_spec(kind, horizon=horizon)
    spec = spec.replace(window_len=window_len, **spec_over)

    framed = ds_mod.frame_supervised(scaler.transform(train_raw), window_len, horizon)
    net = build_model(spec, seed=seed)
    net, _ = train(net, framed, cfg.train_config(seed))
    report = multi_step_forecast(
        net, train_raw, test_raw, scaler, horizon=horizon, window_len=window_len,
        feedback=cfg.feedback, threshold=threshold, t_start=t_test0,
        t_step=cfg.sample_interval, seed=seed,
    )
    return report.rmse


def cmd_ablate(ws: Workspace, axis: str, values=None) -> int:
    cfg = ws.cfg
    if axis not in ABLATION_AXES:
        print(f"ablate: unknown axis {axis!r}; choose from "
              f"{', '.join(sorted(ABLATION_AXES))}", file=sys.stderr)
        return 2
    sweep = tuple(values) if values else ABLATION_AXES[axis]
    kinds = {"mlp_neurons": ("mlp",), "cnn_filters": ("cnn",),
             "lstm_units_1layer": ("lstm",), "lstm_units_2layer": ("lstm",),
             "data_size": tuple(cfg.models), "multi_step": tuple(cfg.models)}[axis]
    failures = []
    rows = []
    for value in sweep:
        for kind in kinds:
            for eps in ABLATION_EPSILONS:
                rmses = {}
                for seed in cfg.seeds:
                    label = f"ablate {axis}={value} {kind} eps={_eps_tag(eps)} seed={seed}"
                    try:
                        rmses[seed] = _ablate_run(ws, axis, value, kind, eps, seed)
                    except Exception as exc:
                        print(f"run: {label} failed: {exc}", file=sys.stderr)
                        failures.append(label)
                if not rmses:
                    continue
                rows.append([axis, value, kind, eps,
                             statistics.median(rmses.values()), len(rmses),
                             ";".join(str(s) for s in sorted(rmses))])
                print(f"ablate: {axis}={value} {kind} eps={_eps_tag(eps)}: "
                      f"median rmse={rows[-1][4]:.6g}")
    _write_csv(ws.out / f"ablate_{axis}.csv",
               ["axis", "value", "model", "epsilon", "rmse_median", "n_seeds", "seeds"],
               rows, meta={"config_hash": cfg.hash()})
    return 1 if failures else 0


EXPECTED_ORDER = ("lstm", "cnn", "mlp")  # expected RMSE ranking, best first


def cmd_report(run_dir: Path, out_path: Path | None = None) -> int:
    run_dir = Path(run_dir)
    report_files = sorted(run_dir.glob("report_*.json"))
    if not report_files:
        print(f"report: no report_*.json files in {run_dir}", file=sys.stderr)
        return 2
    cells: dict[tuple[str, float], dict[int, dict]] = {}
    hashes = set()
    for path in report_files:
        blob = json.loads(path.read_text())
        hashes.add(blob["config_hash"])
        cells.setdefault((blob["model"], blob["epsilon"]), {})[blob["seed"]] = blob

    all_seeds = sorted({s for by_seed in cells.values() for s in by_seed})
    matrix = {}
    events = {}
    missing = []
    for (model, eps), by_seed in sorted(cells.items(), key=lambda kv: (kv[0][1], kv[0][0])):
        rmses = {s: b["rmse"] for s, b in by_seed.items()}
        matrix[f"{model}@eps{_eps_tag(eps)}"] = {
            "rmse_median": statistics.median(rmses.values()),
            "rmse_by_seed": {str(s): r for s, r in sorted(rmses.items())},
        }
        events[f"{model}@eps{_eps_tag(eps)}"] = {
            "hits": sum(b["event_hits"] for b in by_seed.values()),
            "misses": sum(b["event_misses"] for b in by_seed.values()),
            "false_alarms": sum(b["event_false_alarms"] for b in by_seed.values()),
        }
        absent = [s for s in all_seeds if s not in by_seed]
        if absent:
            missing.append({"model": model, "epsilon": eps, "missing_seeds": absent})

    # flag regimes where the expected quality ranking is violated
    violations = []
    by_eps: dict[float, dict[str, float]] = {}
    for (model, eps), by_seed in cells.items():
        by_eps.setdefault(eps, {})[model] = statistics.median(
            b["rmse"] for b in by_seed.values()
        )
    for eps, medians in sorted(by_eps.items()):
        present = [m for m in EXPECTED_ORDER if m in medians]
        for better, worse in zip(present, present[1:]):
            if medians[better] > medians[worse]:
                violations.append({
                    "epsilon": eps,
                    "expected_not_worse": better,
                    "outperformed_by": worse,
                    "rmse": {better: medians[better], worse: medians[worse]},
                })

    summary = {
        "config_hashes": sorted(hashes),
        "n_reports": len(report_files),
        "rmse": matrix,
        "events": events,
        "expected_order_best_first": list(EXPECTED_ORDER),
        "ordering_violations": violations,
        "missing_seeds": missing,
    }
    out_path = out_path or (run_dir / "summary.json")
    _write_json(out_path, summary)

    # human-readable table
    print(f"{'cell':<24} {'rmse_median':>12}  hits/miss/fa")
    for key, entry in matrix.items():
        ev = events[key]
        print(f"{key:<24} {entry['rmse_median']:>12.6g}  "
              f"{ev['hits']}/{ev['misses']}/{ev['false_alarms']}")
    if violations:
        print(f"ordering violations ({len(violations)}):")
        for v in violations:
            print(f"  eps={_eps_tag(v['epsilon'])}: {v['outperformed_by']} beats "
                  f"{v['expected_not_worse']}")
    if missing:
        print(f"missing seeds: {missing}")
    return 0


# --- argument parsing ---------------------------------------------------------


def _parse_seeds(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(s) for s in text.split(",") if s.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad seed list {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="extremecast",
        description="Simulate a parametrically driven oscillator and train "
                    "from-scratch neural forecasters on its time series.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", type=Path, default=None,
                       help="YAML config file (defaults used when omitted)")
        p.add_argument("--out", type=Path, default=Path("runs"),
                       help="output directory (default: runs)")
        p.add_argument("--seeds", type=_parse_seeds, default=None,
                       help="comma-separated seed list override, e.g. 1,2,3")

    p = sub.add_parser("simulate", help="integrate each regime; write "
                                        "trajectories and peak statistics")
    add_common(p)

    p = sub.add_parser("run", help="train every (model, regime, seed) and "
                                   "forecast the test window")
    add_common(p)
    p.add_argument("--save-weights", action="store_true",
                   help="also write a weight checkpoint per run")

    p = sub.add_parser("param-switch", help="train parameter-conditioned LSTM "
                                            "on one regime, test on another")
    add_common(p)

    p = sub.add_parser("ablate", help="sweep one architecture/data axis")
    add_common(p)
    p.add_argument("--axis", required=True, choices=sorted(ABLATION_AXES))
    p.add_argument("--values", type=lambda s: tuple(int(v) for v in s.split(",")),
                   default=None, help="override sweep values, e.g. 1,2,4")

    p = sub.add_parser("report", help="consolidate reports in a run directory")
    p.add_argument("run_dir", type=Path)
    p.add_argument("--out", type=Path, default=None,
                   help="summary path (default: <run_dir>/summary.json)")

    return parser


def _load_config(args) -> ExperimentConfig:
    cfg = (ExperimentConfig.from_yaml(args.config) if args.config
           else ExperimentConfig())
    if getattr(args, "seeds", None):
        data = cfg.to_dict()
        data["experiment"]["seeds"] = list(args.seeds)
        cfg = ExperimentConfig.from_dict(data)
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "report":
        return cmd_report(args.run_dir, args.out)
    cfg = _load_config(args)
    ws = Workspace(cfg, args.out)
    _write_atomic(ws.out / "config_used.yaml",
                  "# hash: " + cfg.hash() + "\n" +
                  yaml.safe_dump(cfg.to_dict(), sort_keys=True))
    if args.command == "simulate":
        return cmd_simulate(ws)
    if args.command == "run":
        return cmd_run(ws, save_weights_flag=args.save_weights)
    if args.command == "param-switch":
        return cmd_param_switch(ws)
    if args.command == "ablate":
        return cmd_ablate(ws, args.axis, args.values)
    raise AssertionError(f"unhandled command {args.command}")


if __name__ == "__main__":
    sys.exit(main())
