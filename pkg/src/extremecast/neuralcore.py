"""Minimal differentiable building blocks in double precision numpy.

Layers own their parameters and gradients as dicts of named arrays; a
Network is an ordered layer stack trained by exact reverse-mode gradients
of the mean-squared-error loss.  Shapes follow the (batch, steps, features)
convention for sequence layers and (batch, features) for dense layers.
"""

from __future__ import annotations

import json
import math

import numpy as np


class TrainingNumericsError(RuntimeError):
    """Non-finite value produced during a forward/backward pass."""


# --- activations -----------------------------------------------------------

def relu(z):
    return np.maximum(0.0, z)


def sigmoid(z):
    # split by sign for overflow-free evaluation
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


_ACTIVATIONS = {
    "relu": relu,
    "tanh": np.tanh,
    "sigmoid": sigmoid,
}


def apply_activation(kind: str, z: np.ndarray) -> np.ndarray:
    """Elementwise relu / tanh / sigmoid."""
    try:
        fn = _ACTIVATIONS[kind]
    except KeyError:
        raise ValueError(f"unknown activation {kind!r}") from None
    return fn(np.asarray(z, dtype=float))


def activation_grad(kind: str, z: np.ndarray, out: np.ndarray) -> np.ndarray:
    """Derivative w.r.t. z, reusing the forward output where it helps."""
    if kind == "relu":
        return (z > 0).astype(float)
    if kind == "tanh":
        return 1.0 - out * out
    if kind == "sigmoid":
        return out * (1.0 - out)
    raise ValueError(f"unknown activation {kind!r}")


def glorot_uniform(rng: np.random.Generator, shape, fan_in: int, fan_out: int) -> np.ndarray:
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


# --- layers ----------------------------------------------------------------

class Layer:
    """Base layer: `params` and `grads` are dicts of identically shaped arrays."""

    def __init__(self):
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}

    def forward(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def backward(self, dy: np.ndarray) -> np.ndarray:
        """Accumulate parameter gradients; return gradient w.r.t. the input."""
        raise NotImplementedError

    def zero_grads(self):
        self.grads = {k: np.zeros_like(v) for k, v in self.params.items()}

    def n_params(self) -> int:
        return sum(p.size for p in self.params.values())


class Dense(Layer):
    """Affine map y = x @ W.T + b with W of shape (out, in)."""

    def __init__(self, in_dim: int, out_dim: int, rng: np.random.Generator | None = None):
        super().__init__()
        self.in_dim = in_dim
        self.out_dim = out_dim
        if rng is None:
            W = np.zeros((out_dim, in_dim))
        else:
            W = glorot_uniform(rng, (out_dim, in_dim), in_dim, out_dim)
        self.params = {"W": W, "b": np.zeros(out_dim)}
        self.zero_grads()
        self._x = None

    def forward(self, x):
        if x.ndim != 2 or x.shape[1] != self.in_dim:
            raise ValueError(f"Dense({self.in_dim}->{self.out_dim}) got input shape {x.shape}")
        self._x = x
        return x @ self.params["W"].T + self.params["b"]

    def backward(self, dy):
        self.grads["W"] += dy.T @ self._x
        self.grads["b"] += dy.sum(axis=0)
        return dy @ self.params["W"]


class Activation(Layer):
    """Elementwise activation layer."""

    def __init__(self, kind: str):
        super().__init__()
        if kind not in _ACTIVATIONS:
            raise ValueError(f"unknown activation {kind!r}")
        self.kind = kind
        self._z = None
        self._out = None

    def forward(self, x):
        self._z = x
        self._out = apply_activation(self.kind, x)
        return self._out

    def backward(self, dy):
        return dy * activation_grad(self.kind, self._z, self._out)


class Flatten(Layer):
    """(batch, steps, features) -> (batch, steps*features), row-major."""

    def __init__(self):
        super().__init__()
        self._shape = None

    def forward(self, x):
        self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, dy):
        return dy.reshape(self._shape)


class Conv1D(Layer):
    """Valid (no padding) stride-1 convolution.

    Input (batch, length, in_channels) -> output (batch, length-kernel+1,
    filters); weights W have shape (filters, kernel, in_channels).
    """

    def __init__(self, in_channels: int, filters: int, kernel: int,
                 rng: np.random.Generator | None = None):
        super().__init__()
        self.in_channels = in_channels
        self.filters = filters
        self.kernel = kernel
        fan_in = kernel * in_channels
        fan_out = kernel * filters
        if rng is None:
            W = np.zeros((filters, kernel, in_channels))
        else:
            W = glorot_uniform(rng, (filters, kernel, in_channels), fan_in, fan_out)
        self.params = {"W": W, "b": np.zeros(filters)}
        self.zero_grads()
        self._x = None

    def forward(self, x):
        if x.ndim != 3 or x.shape[2] != self.in_channels:
            raise ValueError(f"Conv1D expects (batch, len, {self.in_channels}), got {x.shape}")
        if x.shape[1] < self.kernel:
            raise ValueError(f"input length {x.shape[1]} shorter than kernel {self.kernel}")
        self._x = x
        out_len = x.shape[1] - self.kernel + 1
        W = self.params["W"]
        out = np.broadcast_to(self.params["b"], (x.shape[0], out_len, self.filters)).copy()
        for k in range(self.kernel):
            out += x[:, k:k + out_len, :] @ W[:, k, :].T
        return out

    def backward(self, dy):
        x = self._x
        out_len = dy.shape[1]
        W = self.params["W"]
        dx = np.zeros_like(x)
        for k in range(self.kernel):
            self.grads["W"][:, k, :] += np.einsum("bpf,bpc->fc", dy, x[:, k:k + out_len, :])
            dx[:, k:k + out_len, :] += dy @ W[:, k, :]
        self.grads["b"] += dy.sum(axis=(0, 1))
        return dx


class MaxPool1D(Layer):
    """Non-overlapping max pooling along the step axis; a final partial
    window is pooled over its actual length (so length-1 input is identity).
    Gradient routes to the argmax, ties to the lowest index."""

    def __init__(self, pool: int = 2):
        super().__init__()
        if pool < 1:
            raise ValueError(f"pool must be >= 1, got {pool}")
        self.pool = pool
        self._x_shape = None
        self._argmax = None

    def forward(self, x):
        if x.ndim != 3:
            raise ValueError(f"MaxPool1D expects (batch, len, channels), got {x.shape}")
        b, length, c = x.shape
        n_win = -(-length // self.pool)
        out = np.empty((b, n_win, c))
        self._x_shape = x.shape
        self._argmax = np.empty((b, n_win, c), dtype=int)
        for w in range(n_win):
            seg = x[:, w * self.pool:min((w + 1) * self.pool, length), :]
            am = seg.argmax(axis=1)
            self._argmax[:, w, :] = w * self.pool + am
            out[:, w, :] = np.take_along_axis(seg, am[:, None, :], axis=1)[:, 0, :]
        return out

    def backward(self, dy):
        dx = np.zeros(self._x_shape)
        b, n_win, c = dy.shape
        bi = np.arange(b)[:, None, None]
        ci = np.arange(c)[None, None, :]
        np.add.at(dx, (bi, self._argmax, ci), dy)
        return dx


class LSTM(Layer):
    """Single LSTM layer run over a full sequence with zero initial state.

    Gate order in the stacked kernels is [input i, forget f, candidate g,
    output o]: W (4*units, in), U (4*units, units), b (4*units).  Sigmoid
    recurrent gates, tanh candidate/output activation.
    """

    def __init__(self, in_dim: int, units: int, return_sequences: bool = False,
                 rng: np.random.Generator | None = None, forget_bias: float = 1.0):
        super().__init__()
        self.in_dim = in_dim
        self.units = units
        self.return_sequences = return_sequences
        if rng is None:
            W = np.zeros((4 * units, in_dim))
            U = np.zeros((4 * units, units))
        else:
            W = glorot_uniform(rng, (4 * units, in_dim), in_dim, 4 * units)
            U = glorot_uniform(rng, (4 * units, units), units, 4 * units)
        b = np.zeros(4 * units)
        b[units:2 * units] = forget_bias
        self.params = {"W": W, "U": U, "b": b}
        self.zero_grads()
        self._cache = None

    def step(self, x_t: np.ndarray, h_prev: np.ndarray, c_prev: np.ndarray):
        """One gated cell update; returns (h, c, gate cache)."""
        u = self.units
        z = x_t @ self.params["W"].T + h_prev @ self.params["U"].T + self.params["b"]
        i = sigmoid(z[:, :u])
        f = sigmoid(z[:, u:2 * u])
        g = np.tanh(z[:, 2 * u:3 * u])
        o = sigmoid(z[:, 3 * u:])
        c = f * c_prev + i * g
        tc = np.tanh(c)
        h = o * tc
        return h, c, (x_t, h_prev, c_prev, i, f, g, o, tc)

    def forward(self, x):
        if x.ndim != 3 or x.shape[2] != self.in_dim:
            raise ValueError(f"LSTM expects (batch, steps, {self.in_dim}), got {x.shape}")
        if x.shape[1] < 1:
            raise ValueError("LSTM needs at least one step")
        b = x.shape[0]
        h = np.zeros((b, self.units))
        c = np.zeros((b, self.units))
        caches = []
        hs = np.empty((b, x.shape[1], self.units))
        for t in range(x.shape[1]):
            h, c, cache = self.step(x[:, t, :], h, c)
            caches.append(cache)
            hs[:, t, :] = h
        self._cache = caches
        return hs if self.return_sequences else h

    def backward(self, dy):
        caches = self._cache
        steps = len(caches)
        b = caches[0][0].shape[0]
        u = self.units
        if self.return_sequences:
            dh_seq = dy
        else:
            dh_seq = np.zeros((b, steps, u))
            dh_seq[:, -1, :] = dy
        dx = np.empty((b, steps, self.in_dim))
        dh_carry = np.zeros((b, u))
        dc_carry = np.zeros((b, u))
        dW, dU, db = self.grads["W"], self.grads["U"], self.grads["b"]
        W, U = self.params["W"], self.params["U"]
        for t in range(steps - 1, -1, -1):
            x_t, h_prev, c_prev, i, f, g, o, tc = caches[t]
            dh = dh_seq[:, t, :] + dh_carry
            do = dh * tc
            dc = dc_carry + dh * o * (1.0 - tc * tc)
            di = dc * g
            dg = dc * i
            df = dc * c_prev
            dc_carry = dc * f
            dz = np.concatenate([
                di * i * (1.0 - i),
                df * f * (1.0 - f),
                dg * (1.0 - g * g),
                do * o * (1.0 - o),
            ], axis=1)
            dW += dz.T @ x_t
            dU += dz.T @ h_prev
            db += dz.sum(axis=0)
            dx[:, t, :] = dz @ W
            dh_carry = dz @ U
        return dx


# --- loss ------------------------------------------------------------------

def mse_loss(pred: np.ndarray, actual: np.ndarray) -> float:
    """Mean over all elements of the squared difference."""
    pred = np.asarray(pred, dtype=float)
    actual = np.asarray(actual, dtype=float)
    if pred.shape != actual.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {actual.shape}")
    if pred.size == 0:
        raise ValueError("mse_loss of empty arrays is undefined")
    diff = pred - actual
    return float(np.mean(diff * diff))


def mse_grad(pred: np.ndarray, actual: np.ndarray) -> np.ndarray:
    return 2.0 * (pred - actual) / pred.size


# --- network ---------------------------------------------------------------

class Network:
    """Ordered stack of layers with shared forward/backward plumbing.

    Mutable while training and confined to one execution context; forward
    passes on a frozen network are read-only.
    """

    def __init__(self, layers: list[Layer]):
        self.layers = layers

    def forward(self, x: np.ndarray) -> np.ndarray:
        for layer in self.layers:
            x = layer.forward(x)
        return x

    def zero_grads(self):
        for layer in self.layers:
            layer.zero_grads()

    def loss_and_grads(self, inputs: np.ndarray, targets: np.ndarray) -> float:
        """Batch MSE loss; leaves exact parameter gradients in layer.grads."""
        self.zero_grads()
        pred = self.forward(inputs)
        loss = mse_loss(pred, targets)
        dy = mse_grad(pred, targets)
        for layer in reversed(self.layers):
            dy = layer.backward(dy)
        for idx, layer in enumerate(self.layers):
            for name, grad in layer.grads.items():
                if not np.all(np.isfinite(grad)):
                    raise TrainingNumericsError(
                        f"non-finite gradient in layer {idx} ({type(layer).__name__}.{name})"
                    )
        return loss

    def parameters(self):
        """Yield (layer_index, name, array) for every trainable parameter."""
        for idx, layer in enumerate(self.layers):
            for name, arr in layer.params.items():
                yield idx, name, arr

    def n_params(self) -> int:
        return sum(layer.n_params() for layer in self.layers)


# --- optimizer -------------------------------------------------------------

class Adam:
    """Adaptive moment estimation over a Network's parameters."""

    def __init__(self, lr: float = 0.001, beta1: float = 0.9, beta2: float = 0.999,
                 eps_stab: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps_stab = eps_stab
        self.t = 0
        self.m: dict[tuple[int, str], np.ndarray] = {}
        self.v: dict[tuple[int, str], np.ndarray] = {}

    def step(self, network: Network):
        """Apply one update from the gradients currently stored in the layers."""
        self.t += 1
        b1t = 1.0 - self.beta1 ** self.t
        b2t = 1.0 - self.beta2 ** self.t
        for idx, layer in enumerate(network.layers):
            for name, p in layer.params.items():
                g = layer.grads[name]
                key = (idx, name)
                if key not in self.m:
                    self.m[key] = np.zeros_like(p)
                    self.v[key] = np.zeros_like(p)
                m = self.m[key]
                v = self.v[key]
                m *= self.beta1
                m += (1.0 - self.beta1) * g
                v *= self.beta2
                v += (1.0 - self.beta2) * g * g
                m_hat = m / b1t
                v_hat = v / b2t
                p -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps_stab)


# --- checkpointing ---------------------------------------------------------

def save_weights(network: Network, path) -> None:
    """JSON manifest of named parameter arrays with shapes.  Float values are
    serialized via repr so reload is bit-exact."""
    manifest = []
    for idx, layer in enumerate(network.layers):
        entry = {"index": idx, "type": type(layer).__name__, "params": {}}
        for name, arr in layer.params.items():
            entry["params"][name] = {"shape": list(arr.shape), "data": arr.reshape(-1).tolist()}
        manifest.append(entry)
    with open(path, "w") as fh:
        json.dump({"format": "extremecast-weights-v1", "layers": manifest}, fh,
                  sort_keys=True, indent=1)


def load_weights(network: Network, path) -> None:
    """Load a manifest into an architecturally identical network."""
    with open(path) as fh:
        blob = json.load(fh)
    if blob.get("format") != "extremecast-weights-v1":
        raise ValueError(f"unrecognized checkpoint format in {path}")
    manifest = blob["layers"]
    if len(manifest) != len(network.layers):
        raise ValueError(
            f"checkpoint has {len(manifest)} layers, network has {len(network.layers)}"
        )
    for entry, layer in zip(manifest, network.layers):
        if entry["type"] != type(layer).__name__:
            raise ValueError(
                f"layer {entry['index']}: checkpoint {entry['type']} vs network "
                f"{type(layer).__name__}"
            )
        for name, spec in entry["params"].items():
            if name not in layer.params:
                raise ValueError(f"layer {entry['index']} has no parameter {name!r}")
            arr = np.array(spec["data"], dtype=float).reshape(spec["shape"])
            if arr.shape != layer.params[name].shape:
                raise ValueError(
                    f"layer {entry['index']} parameter {name}: shape {arr.shape} vs "
                    f"{layer.params[name].shape}"
                )
            layer.params[name][...] = arr
        layer.zero_grads()
