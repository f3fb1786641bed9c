"""The three forecaster architectures as layer stacks.

All models consume a (batch, window_len, num_features) tensor.  The MLP and
CNN flatten the window into features; the LSTM consumes it as a sequence.
Output layers are linear so targets scaled to [-1, 1] are representable.
"""

from __future__ import annotations

from dataclasses import dataclass, replace as _dc_replace

import numpy as np

from .neuralcore import (
    Activation,
    Conv1D,
    Dense,
    Flatten,
    LSTM,
    MaxPool1D,
    Network,
)


@dataclass(frozen=True)
class ModelSpec:
    """Architecture hyperparameters for one forecaster."""

    kind: str = "mlp"  # mlp | cnn | lstm
    window_len: int = 1
    horizon: int = 1
    num_features: int = 1
    mlp_hidden: tuple[int, ...] = (8, 8)
    cnn_filters: int = 64
    cnn_kernel: int = 1
    cnn_pool: int = 2
    cnn_dense: int = 50
    lstm_units: tuple[int, ...] = (32, 32)

    def __post_init__(self):
        if self.kind not in ("mlp", "cnn", "lstm"):
            raise ValueError(f"unknown model kind {self.kind!r}")
        for name in ("window_len", "horizon", "num_features",
                     "cnn_filters", "cnn_kernel", "cnn_pool", "cnn_dense"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.kind == "mlp" and (not self.mlp_hidden or min(self.mlp_hidden) < 1):
            raise ValueError(f"mlp_hidden must be nonempty positive, got {self.mlp_hidden}")
        if self.kind == "lstm" and (not self.lstm_units or min(self.lstm_units) < 1):
            raise ValueError(f"lstm_units must be nonempty positive, got {self.lstm_units}")

    def replace(self, **kwargs) -> "ModelSpec":
        return _dc_replace(self, **kwargs)


def build_mlp(spec: ModelSpec, rng: np.random.Generator) -> Network:
    """Fully connected stack: flatten -> hidden dense+ReLU layers -> linear out."""
    layers = [Flatten()]
    width = spec.window_len * spec.num_features
    for h in spec.mlp_hidden:
        layers.append(Dense(width, h, rng=rng))
        layers.append(Activation("relu"))
        width = h
    layers.append(Dense(width, spec.horizon, rng=rng))
    return Network(layers)


def build_cnn(spec: ModelSpec, rng: np.random.Generator) -> Network:
    """conv+ReLU -> maxpool -> flatten -> dense+ReLU -> linear out."""
    if spec.cnn_kernel > spec.window_len:
        raise ValueError(
            f"cnn_kernel ({spec.cnn_kernel}) cannot exceed window_len ({spec.window_len})"
        )
    conv_len = spec.window_len - spec.cnn_kernel + 1
    pooled_len = -(-conv_len // spec.cnn_pool)
    layers = [
        Conv1D(spec.num_features, spec.cnn_filters, spec.cnn_kernel, rng=rng),
        Activation("relu"),
        MaxPool1D(spec.cnn_pool),
        Flatten(),
        Dense(pooled_len * spec.cnn_filters, spec.cnn_dense, rng=rng),
        Activation("relu"),
        Dense(spec.cnn_dense, spec.horizon, rng=rng),
    ]
    return Network(layers)


def build_lstm(spec: ModelSpec, rng: np.random.Generator) -> Network:
    """Stacked LSTM layers (all but the last return sequences) -> linear out."""
    layers: list = []
    in_dim = spec.num_features
    n = len(spec.lstm_units)
    for i, units in enumerate(spec.lstm_units):
        layers.append(LSTM(in_dim, units, return_sequences=(i < n - 1), rng=rng))
        in_dim = units
    layers.append(Dense(in_dim, spec.horizon, rng=rng))
    return Network(layers)


_BUILDERS = {"mlp": build_mlp, "cnn": build_cnn, "lstm": build_lstm}


def build_model(spec: ModelSpec, seed: int | np.random.Generator = 0) -> Network:
    """Construct a freshly initialized network for a ModelSpec; seeded and
    deterministic."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    return _BUILDERS[spec.kind](spec, rng)


def predict(network: Network, inputs: np.ndarray) -> np.ndarray:
    """Forward pass on a (batch, window, features) tensor or a single
    (window, features) instance; output stays in normalized space."""
    inputs = np.asarray(inputs, dtype=float)
    single = inputs.ndim == 2
    if single:
        inputs = inputs[None, :, :]
    out = network.forward(inputs)
    return out[0] if single else out
