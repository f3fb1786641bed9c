import numpy as np
import pytest

from extremecast.dataset import MinMaxScaler, fit_scaler, frame_supervised
from extremecast.forecast import (
    ForecastReport,
    TrainConfig,
    TrainingDiverged,
    event_outcomes,
    multi_step_forecast,
    rmse,
    train,
    walk_forward,
)
from extremecast.models import ModelSpec, build_model
from extremecast.neuralcore import Dense, Flatten, Network


def stub_network(weight=1.0, bias=0.0, horizon=1, window=1):
    """Linear map from the last window value: y_j = weight * x_last + bias."""
    dense = Dense(window, horizon)
    dense.params["W"] = np.zeros((horizon, window))
    dense.params["W"][:, -1] = weight
    dense.params["b"] = np.full(horizon, bias)
    return Network([Flatten(), dense])


IDENTITY_SCALER = MinMaxScaler(x_min=-1.0, x_max=1.0, lo=-1.0, hi=1.0)


class TestRmse:
    def test_perfect_prediction(self):
        assert rmse(np.ones(5), np.ones(5)) == 0.0

    def test_hand_value(self):
        assert rmse(np.zeros(2), np.array([3.0, 4.0])) == pytest.approx(3.5355339059, rel=1e-9)

    def test_squared_rmse_equals_mse(self):
        from extremecast.neuralcore import mse_loss

        rng = np.random.default_rng(0)
        a, b = rng.normal(size=50), rng.normal(size=50)
        assert rmse(a, b) ** 2 == pytest.approx(mse_loss(a, b), rel=1e-12)

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            rmse(np.zeros(3), np.zeros(4))


class TestTrainConfig:
    def test_zero_epochs_rejected(self):
        with pytest.raises(ValueError):
            TrainConfig(epochs=0)

    def test_zero_batch_rejected(self):
        with pytest.raises(ValueError):
            TrainConfig(batch_size=0)


class TestTrain:
    def test_loss_history_length_equals_epochs(self):
        ds = frame_supervised(np.sin(0.3 * np.arange(80)), 2, 1)
        net = build_model(ModelSpec(kind="mlp", window_len=2), seed=1)
        _, history = train(net, ds, TrainConfig(epochs=7, seed=1))
        assert len(history) == 7

    def test_loss_decreases_on_learnable_problem(self):
        ds = frame_supervised(np.sin(0.3 * np.arange(200)), 2, 1)
        net = build_model(ModelSpec(kind="mlp", window_len=2), seed=1)
        _, history = train(net, ds, TrainConfig(epochs=150, seed=1))
        assert history[-1] < history[0] / 10

    def test_seeded_determinism(self):
        ds = frame_supervised(np.sin(0.3 * np.arange(100)), 1, 1)

        def run():
            net = build_model(ModelSpec(kind="mlp"), seed=3)
            _, hist = train(net, ds, TrainConfig(epochs=5, seed=3))
            return np.array(hist), net.forward(np.array([[[0.2]]]))

        h1, p1 = run()
        h2, p2 = run()
        assert h1.tobytes() == h2.tobytes()
        assert p1.tobytes() == p2.tobytes()

    def test_divergence_reports_epoch_and_batch(self):
        ds = frame_supervised(np.sin(0.3 * np.arange(100)), 1, 1)
        net = build_model(ModelSpec(kind="mlp"), seed=1)
        net.layers[1].params["W"][...] = np.nan  # poisoned weights -> NaN loss
        with pytest.raises(TrainingDiverged) as exc_info:
            train(net, ds, TrainConfig(epochs=3, seed=1))
        assert exc_info.value.epoch == 0
        assert exc_info.value.batch == 0


class TestWalkForward:
    def test_identity_stub_holds_last_seed_value(self):
        net = stub_network(weight=1.0)
        seed_hist = np.array([0.1, 0.4])
        actual = np.array([0.5, 0.6, 0.7])
        report = walk_forward(net, seed_hist, actual, IDENTITY_SCALER)
        assert np.allclose(report.predicted, 0.4, rtol=1e-15)
        assert report.feedback_mode == "predicted"

    def test_additive_stub_produces_ramp(self):
        c = 0.125
        net = stub_network(weight=1.0, bias=c)
        seed_hist = np.array([0.0])
        actual = np.zeros(4)
        report = walk_forward(net, seed_hist, actual, IDENTITY_SCALER)
        # independent recursion: x_{k+1} = x_k + c from 0
        assert np.array_equal(report.predicted, np.array([c, 2 * c, 3 * c, 4 * c]))
        assert report.rmse == pytest.approx(
            np.sqrt(np.mean((np.arange(1, 5) * c) ** 2)), rel=1e-12
        )

    def test_ramp_with_nonidentity_scaler_closed_form(self):
        # scaler [0, 10] -> [-1, 1]; stub adds c in normalized space, which is
        # 5*c per step in raw units starting from the transformed seed
        scaler = MinMaxScaler(x_min=0.0, x_max=10.0)
        c = 0.1
        net = stub_network(weight=1.0, bias=c)
        seed_hist = np.array([5.0])  # -> 0.0 normalized
        actual = np.full(3, 5.0)
        report = walk_forward(net, seed_hist, actual, scaler)
        assert np.allclose(report.predicted, [5.5, 6.0, 6.5])

    def test_teacher_forcing_feeds_actual_values(self):
        net = stub_network(weight=1.0)  # predicts "no change"
        seed_hist = np.array([0.0])
        actual = np.array([0.2, 0.4, 0.6])
        report = walk_forward(net, seed_hist, actual, IDENTITY_SCALER, feedback="actual")
        # each prediction equals the previous true value
        assert np.allclose(report.predicted, [0.0, 0.2, 0.4])
        assert report.feedback_mode == "actual"

    def test_seed_shorter_than_window_rejected(self):
        net = stub_network(window=3)
        with pytest.raises(ValueError):
            walk_forward(net, np.array([0.1, 0.2]), np.zeros(3), IDENTITY_SCALER,
                         window_len=3)

    def test_unknown_feedback_mode(self):
        with pytest.raises(ValueError):
            walk_forward(stub_network(), np.array([0.0]), np.zeros(2),
                         IDENTITY_SCALER, feedback="oracle")

    def test_nonfinite_prediction_aborts_with_step_index(self):
        net = stub_network(weight=4.0)  # free-run explodes geometrically
        scaler = MinMaxScaler(x_min=-1e-8, x_max=1e-8)  # huge de-normalized scale
        seed_hist = np.array([1e-8])
        with np.errstate(over="ignore"), pytest.raises(RuntimeError, match="step"):
            walk_forward(net, seed_hist, np.zeros(2000), scaler)

    def test_rmse_recomputable_from_report(self):
        net = stub_network(weight=0.9, bias=0.01)
        seed_hist = np.array([0.3])
        actual = np.linspace(0.0, 0.5, 20)
        report = walk_forward(net, seed_hist, actual, IDENTITY_SCALER)
        assert abs(report.rmse - rmse(report.predicted, report.actual)) < 1e-12


class TestMultiStep:
    def test_horizon1_is_bitwise_walk_forward(self):
        rng = np.random.default_rng(8)
        series = np.sin(0.1 * np.arange(300))
        scaler = fit_scaler(series[:200])
        ds = frame_supervised(scaler.transform(series[:200]), 1, 1)
        net = build_model(ModelSpec(kind="mlp"), seed=2)
        net, _ = train(net, ds, TrainConfig(epochs=3, seed=2))
        wf = walk_forward(net, series[:200], series[200:], scaler)
        ms = multi_step_forecast(net, series[:200], series[200:], scaler, horizon=1)
        assert wf.predicted.tobytes() == ms.predicted.tobytes()
        assert wf.rmse == ms.rmse

    def test_block_stub_constant_forecast(self):
        net = stub_network(weight=1.0, horizon=3)
        report = multi_step_forecast(net, np.array([0.25]), np.zeros(7),
                                     IDENTITY_SCALER, horizon=3)
        assert len(report.predicted) == 7  # final block truncated
        assert np.all(report.predicted == 0.25)

    def test_partial_final_block_truncated(self):
        net = stub_network(weight=1.0, bias=0.1, horizon=4)
        report = multi_step_forecast(net, np.array([0.0]), np.zeros(6),
                                     IDENTITY_SCALER, horizon=4)
        assert len(report.predicted) == 6

    def test_horizon_mismatch_detected(self):
        net = stub_network(horizon=2)
        with pytest.raises(ValueError, match="horizon"):
            multi_step_forecast(net, np.array([0.0]), np.zeros(4),
                                IDENTITY_SCALER, horizon=3)

    def test_teacher_forced_blocks_use_actual_history(self):
        net = stub_network(weight=1.0, horizon=2)  # block repeats last input
        actual = np.array([0.1, 0.2, 0.3, 0.4])
        report = multi_step_forecast(net, np.array([0.0]), actual,
                                     IDENTITY_SCALER, horizon=2, feedback="actual")
        # block 1 from seed 0.0 -> [0, 0]; history becomes [.., 0.1, 0.2]
        # block 2 from 0.2 -> [0.2, 0.2]
        assert np.allclose(report.predicted, [0.0, 0.0, 0.2, 0.2])


class TestEventOutcomes:
    def _report(self, pred_times, actual_times):
        n = 5
        return ForecastReport(
            predicted=np.zeros(n), actual=np.zeros(n), rmse=0.0,
            predicted_event_times=np.array(pred_times, dtype=float),
            actual_event_times=np.array(actual_times, dtype=float),
            feedback_mode="predicted", seed=0,
        )

    def test_identical_events_all_hit(self):
        r = self._report([10.0, 50.0, 90.0], [10.0, 50.0, 90.0])
        assert event_outcomes(r) == (3, 0, 0)

    def test_flat_prediction_misses_everything(self):
        r = self._report([], [10.0, 50.0])
        assert event_outcomes(r) == (0, 2, 0)

    def test_shift_by_window_still_hits(self):
        r = self._report([15.0], [10.0])
        assert event_outcomes(r, match_window=5.0) == (1, 0, 0)

    def test_shift_by_window_plus_one_misses(self):
        r = self._report([16.0], [10.0])
        assert event_outcomes(r, match_window=5.0) == (0, 1, 1)

    def test_each_actual_event_matched_once(self):
        r = self._report([10.0, 11.0], [10.0])
        hits, misses, false_alarms = event_outcomes(r)
        assert (hits, misses, false_alarms) == (1, 0, 1)

    def test_events_detected_from_series(self):
        # forecast that reproduces a spike slightly shifted
        actual = np.zeros(50)
        actual[20] = 10.0
        predicted_src = np.zeros(50)
        predicted_src[23] = 9.0
        net = stub_network(weight=1.0)
        scaler = IDENTITY_SCALER
        report = multi_step_forecast(
            stub_network(weight=1.0), np.array([0.0]), actual, scaler,
            horizon=1, threshold=5.0,
        )
        # stub predicts flat zero: no predicted events, one actual event
        assert list(report.actual_event_times) == [20.0]
        assert len(report.predicted_event_times) == 0
        assert event_outcomes(report) == (0, 1, 0)


class TestReport:
    def test_length_mismatch_rejected(self):
        with pytest.raises(ValueError):
            ForecastReport(
                predicted=np.zeros(3), actual=np.zeros(4), rmse=0.0,
                predicted_event_times=np.empty(0), actual_event_times=np.empty(0),
                feedback_mode="predicted", seed=0,
            )

    def test_default_time_axis(self):
        r = ForecastReport(
            predicted=np.zeros(3), actual=np.zeros(3), rmse=0.0,
            predicted_event_times=np.empty(0), actual_event_times=np.empty(0),
            feedback_mode="predicted", seed=0,
        )
        assert list(r.t) == [0.0, 1.0, 2.0]
