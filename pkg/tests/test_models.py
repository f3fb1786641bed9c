import numpy as np
import pytest

from extremecast.models import ModelSpec, build_model, predict
from extremecast.neuralcore import load_weights, save_weights


class TestModelSpec:
    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            ModelSpec(kind="transformer")

    def test_nonpositive_sizes_rejected(self):
        with pytest.raises(ValueError):
            ModelSpec(kind="mlp", mlp_hidden=(8, 0))
        with pytest.raises(ValueError):
            ModelSpec(kind="lstm", lstm_units=())
        with pytest.raises(ValueError):
            ModelSpec(horizon=0)

    def test_replace(self):
        spec = ModelSpec(kind="cnn").replace(cnn_filters=8)
        assert spec.cnn_filters == 8
        assert spec.kind == "cnn"


class TestParameterCounts:
    def test_default_mlp_has_97(self):
        assert build_model(ModelSpec(kind="mlp")).n_params() == 97

    def test_default_cnn_has_3429(self):
        assert build_model(ModelSpec(kind="cnn")).n_params() == 3429

    def test_default_lstm_layer1_has_4352(self):
        net = build_model(ModelSpec(kind="lstm"))
        assert net.layers[0].n_params() == 4352

    def test_parameter_conditioned_lstm_layer1_has_4480(self):
        net = build_model(ModelSpec(kind="lstm", num_features=2))
        assert net.layers[0].n_params() == 4480

    def test_mlp_sweep_counts_follow_closed_form(self):
        # first hidden layer fixed at 8, second swept
        for width in (1, 2, 4, 16, 64):
            spec = ModelSpec(kind="mlp", mlp_hidden=(8, width))
            expected = (1 * 8 + 8) + (8 * width + width) + (width * 1 + 1)
            assert build_model(spec).n_params() == expected

    def test_single_hidden_layer_variant_constructible(self):
        net = build_model(ModelSpec(kind="mlp", mlp_hidden=(8,)))
        assert net.n_params() == (1 * 8 + 8) + (8 * 1 + 1)

    def test_one_layer_lstm_variant(self):
        for units in (2, 8, 32):
            net = build_model(ModelSpec(kind="lstm", lstm_units=(units,)))
            expected = 4 * (units + units * units + units) + (units + 1)
            assert net.n_params() == expected

    def test_cnn_window5_kernel2_filter_sweep(self):
        for filters in (2, 16, 64):
            spec = ModelSpec(kind="cnn", window_len=5, cnn_kernel=2, cnn_filters=filters)
            net = build_model(spec)
            conv_len = 5 - 2 + 1          # 4
            pooled = -(-conv_len // 2)    # 2
            expected = (filters * 2 * 1 + filters) + (pooled * filters * 50 + 50) + 51
            assert net.n_params() == expected


class TestShapes:
    @pytest.mark.parametrize("kind", ["mlp", "cnn", "lstm"])
    def test_default_networks_emit_scalar_per_pair(self, kind):
        net = build_model(ModelSpec(kind=kind), seed=3)
        out = net.forward(np.random.default_rng(0).normal(size=(7, 1, 1)))
        assert out.shape == (7, 1)

    @pytest.mark.parametrize("kind", ["mlp", "cnn", "lstm"])
    def test_horizon_sets_output_width(self, kind):
        net = build_model(ModelSpec(kind=kind, horizon=5), seed=3)
        out = net.forward(np.zeros((2, 1, 1)))
        assert out.shape == (2, 5)

    def test_kernel_larger_than_window_rejected(self):
        with pytest.raises(ValueError):
            build_model(ModelSpec(kind="cnn", window_len=1, cnn_kernel=2))

    def test_window5_cnn_shapes(self):
        net = build_model(ModelSpec(kind="cnn", window_len=5, cnn_kernel=2), seed=1)
        out = net.forward(np.zeros((3, 5, 1)))
        assert out.shape == (3, 1)


class TestPredict:
    def test_zero_initialized_lstm_predicts_zero(self):
        net = build_model(ModelSpec(kind="lstm"), seed=0)
        for layer in net.layers:
            for p in layer.params.values():
                p[...] = 0.0
        out = predict(net, np.array([[0.73]]))
        assert out.shape == (1,)
        assert out[0] == 0.0

    def test_zero_weight_mlp_emits_output_bias(self):
        net = build_model(ModelSpec(kind="mlp"), seed=0)
        for layer in net.layers:
            for p in layer.params.values():
                p[...] = 0.0
        net.layers[-1].params["b"][0] = 0.37
        out = predict(net, np.full((4, 1, 1), 2.0))
        assert np.all(out == 0.37)

    def test_batch_and_single_instance_agree(self):
        net = build_model(ModelSpec(kind="cnn"), seed=5)
        x = np.random.default_rng(1).normal(size=(3, 1, 1))
        batch = predict(net, x)
        singles = np.stack([predict(net, xi) for xi in x])
        # batched and row-wise BLAS paths may differ in the last ulp
        assert np.allclose(batch, singles, rtol=1e-13, atol=0.0)


class TestCheckpointReproducibility:
    @pytest.mark.parametrize("kind", ["mlp", "cnn", "lstm"])
    def test_rebuild_from_checkpoint_is_bit_exact(self, kind, tmp_path):
        spec = ModelSpec(kind=kind)
        net = build_model(spec, seed=11)
        x = np.random.default_rng(2).normal(size=(5, 1, 1))
        want = net.forward(x)
        path = tmp_path / "ckpt.json"
        save_weights(net, path)
        clone = build_model(spec, seed=99)  # different init, then overwritten
        load_weights(clone, path)
        assert clone.forward(x).tobytes() == want.tobytes()


class TestSeededBuild:
    def test_same_seed_same_weights(self):
        a = build_model(ModelSpec(kind="lstm"), seed=4)
        b = build_model(ModelSpec(kind="lstm"), seed=4)
        for (_, _, pa), (_, _, pb) in zip(a.parameters(), b.parameters()):
            assert np.array_equal(pa, pb)

    def test_different_seed_different_weights(self):
        a = build_model(ModelSpec(kind="mlp"), seed=4)
        b = build_model(ModelSpec(kind="mlp"), seed=5)
        assert any(not np.array_equal(pa, pb)
                   for (_, _, pa), (_, _, pb) in zip(a.parameters(), b.parameters()))

    def test_lstm_forget_gate_bias_is_one(self):
        net = build_model(ModelSpec(kind="lstm"), seed=0)
        b = net.layers[0].params["b"]
        units = 32
        assert np.all(b[units:2 * units] == 1.0)
        assert np.all(b[:units] == 0.0)
        assert np.all(b[2 * units:] == 0.0)
