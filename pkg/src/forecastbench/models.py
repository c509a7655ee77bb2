"""Named forecasting architectures and their parameter plumbing.

Every model maps a batch of windows ``(batch, lookback, channels)`` to one
scalar per sample. Fully connected models see the window flattened; the
recurrent and convolutional models see it as a sequence. Each recipe ends in a
``Dense(1, linear)`` head.

``conv1fc`` mirrors ``rnn1fc``: ``Conv1D(4, 3) -> Dense(4) -> Dense(1)``.
"""
import json
import struct
from dataclasses import dataclass

import numpy as np

from .data import LOOKBACK
from .errors import ConfigError, ContractError, DimensionError
from .layers import LSTM, Conv1D, Dense, Flatten, SimpleRNN


@dataclass(frozen=True)
class LayerSpec:
    kind: str               # dense | rnn | lstm | conv1d
    units: int = 0          # units, or filters for conv1d
    activation: str = "relu"
    width: int = 0          # conv1d kernel width


@dataclass(frozen=True)
class ModelSpec:
    name: str
    recipe: tuple
    layout: str = "sequence"    # "flat" feeds a (batch, lookback*channels) matrix
    lookback: int = LOOKBACK
    channels: int = 1


def _head():
    return LayerSpec("dense", 1, "linear")


RECIPES = {
    "fc1": ("flat", (LayerSpec("dense", 14),)),
    "fc2": ("flat", (LayerSpec("dense", 14), LayerSpec("dense", 7))),
    "rnn1": ("sequence", (LayerSpec("rnn", 4),)),
    "rnn1fc": ("sequence", (LayerSpec("rnn", 4), LayerSpec("dense", 4))),
    "rnn2": ("sequence", (LayerSpec("rnn", 6),)),
    "lstm1": ("sequence", (LayerSpec("lstm", 6),)),
    "conv1": ("sequence", (LayerSpec("conv1d", 4, width=3),)),
    "conv1fc": ("sequence", (LayerSpec("conv1d", 4, width=3), LayerSpec("dense", 4))),
}
MODEL_NAMES = tuple(RECIPES)
RECURRENT_MODELS = ("rnn1", "rnn1fc", "rnn2", "lstm1")


def get_spec(name, lstm_activation="relu", channels=1, lookback=LOOKBACK):
    if name not in RECIPES:
        raise ConfigError(f"unknown model {name!r}; valid names: {', '.join(MODEL_NAMES)}")
    layout, body = RECIPES[name]
    if lstm_activation != "relu":
        body = tuple(LayerSpec(l.kind, l.units, lstm_activation) if l.kind == "lstm" else l
                     for l in body)
    return ModelSpec(name, body + (_head(),), layout, lookback, channels)


def _layer_shapes(spec):
    """Yield ``(layer_spec, input_shape)`` with the per-sample input shape of each layer."""
    shape = ((spec.lookback * spec.channels,) if spec.layout == "flat"
             else (spec.lookback, spec.channels))
    for ls in spec.recipe:
        if ls.kind in ("rnn", "lstm", "conv1d") and len(shape) != 2:
            raise ConfigError(f"{ls.kind} layer needs a sequence input")
        if ls.kind == "dense" and len(shape) == 2:
            shape = (shape[0] * shape[1],)
        yield ls, shape
        if ls.kind == "conv1d":
            shape = (shape[0] - ls.width + 1, ls.units)
        else:
            shape = (ls.units,)


def param_count(spec):
    """Analytic parameter count of a recipe."""
    total = 0
    for ls, shape in _layer_shapes(spec):
        n_in = shape[-1] if ls.kind != "dense" else shape[0]
        u = ls.units
        if ls.kind == "dense":
            total += n_in * u + u
        elif ls.kind == "rnn":
            total += n_in * u + u * u + u
        elif ls.kind == "lstm":
            total += 4 * (n_in * u + u * u + u)
        elif ls.kind == "conv1d":
            total += u * ls.width * n_in + u
        else:
            raise ConfigError(f"unknown layer kind {ls.kind!r}")
    return total


class Model:
    def __init__(self, spec, seed=0):
        self.spec = spec
        self.seed = seed
        rng = np.random.default_rng(seed)
        self.layers = []
        for ls, shape in _layer_shapes(spec):
            if ls.kind == "dense":
                if len(shape) == 1 and self.layers and self.layers[-1].kind == "conv1d":
                    self.layers.append(Flatten())
                self.layers.append(Dense(shape[0], ls.units, ls.activation, rng))
            elif ls.kind == "rnn":
                self.layers.append(SimpleRNN(shape[1], ls.units, ls.activation, rng))
            elif ls.kind == "lstm":
                self.layers.append(LSTM(shape[1], ls.units, ls.activation, rng))
            elif ls.kind == "conv1d":
                self.layers.append(Conv1D(shape[1], ls.units, ls.width, ls.activation, rng))
            else:
                raise ConfigError(f"unknown layer kind {ls.kind!r}")

    @property
    def name(self):
        return self.spec.name

    def param_refs(self):
        """``(layer_index, name)`` pairs in flat-view order."""
        return [(i, k) for i, layer in enumerate(self.layers) for k in layer.params]

    def get_params(self):
        return [self.layers[i].params[k] for i, k in self.param_refs()]

    def set_params(self, values):
        refs = self.param_refs()
        if len(values) != len(refs):
            raise DimensionError(f"expected {len(refs)} arrays, got {len(values)}")
        for (i, k), v in zip(refs, values):
            old = self.layers[i].params[k]
            if v.shape != old.shape:
                raise DimensionError(f"{k}: shape {v.shape} != {old.shape}")
            self.layers[i].params[k] = np.array(v, dtype=np.float64)

    def n_params(self):
        return sum(p.size for p in self.get_params())

    def flat_params(self):
        params = self.get_params()
        return np.concatenate([p.ravel() for p in params]) if params else np.zeros(0)

    def set_flat_params(self, flat):
        flat = np.asarray(flat, dtype=np.float64)
        if flat.size != self.n_params():
            raise DimensionError(f"expected {self.n_params()} values, got {flat.size}")
        out, pos = [], 0
        for p in self.get_params():
            out.append(flat[pos:pos + p.size].reshape(p.shape))
            pos += p.size
        self.set_params(out)

    def forward(self, windows):
        x = np.asarray(windows, dtype=np.float64)
        spec = self.spec
        if x.ndim == 2 and spec.channels == 1 and x.shape[1] == spec.lookback:
            x = x[:, :, None]
        if x.ndim != 3 or x.shape[1:] != (spec.lookback, spec.channels):
            raise DimensionError(
                f"{spec.name} expects windows of shape (batch, {spec.lookback}, {spec.channels}), "
                f"got {x.shape}")
        if spec.layout == "flat":
            x = x.reshape(x.shape[0], -1)
        caches = []
        for layer in self.layers:
            x, cache = layer.forward(x)
            caches.append(cache)
        return x, caches

    def predict(self, windows):
        return self.forward(windows)[0]

    def backward(self, caches, dpred):
        """Gradients aligned with :meth:`get_params` for upstream gradient ``dpred``."""
        if len(caches) != len(self.layers):
            raise ContractError("cache list does not match the layer stack")
        grads_per_layer = [None] * len(self.layers)
        d = np.asarray(dpred, dtype=np.float64)
        for i in range(len(self.layers) - 1, -1, -1):
            d, grads_per_layer[i] = self.layers[i].backward(d, caches[i])
        return [grads_per_layer[i][k] for i, k in self.param_refs()]

    def describe(self):
        return [layer.describe() for layer in self.layers]


def build_model(name, seed=0, lstm_activation="relu", channels=1, lookback=LOOKBACK):
    return Model(get_spec(name, lstm_activation, channels, lookback), seed)


def model_forward(model, batch):
    return model.forward(batch)


def model_backward(model, caches, dpred):
    return model.backward(caches, dpred)


WEIGHTS_MAGIC = b"FCBW"
WEIGHTS_VERSION = 1


def save_weights(model, path):
    """Write a JSON header followed by little-endian float64 parameters.

    Layout: 4-byte magic, uint32 header length, UTF-8 JSON header, parameter block.
    """
    header = {
        "version": WEIGHTS_VERSION,
        "model": model.spec.name,
        "seed": model.seed,
        "lstm_activation": next((l.activation for l in model.spec.recipe if l.kind == "lstm"), "relu"),
        "channels": model.spec.channels,
        "lookback": model.spec.lookback,
        "layers": model.describe(),
        "shapes": [list(p.shape) for p in model.get_params()],
        "n_params": model.n_params(),
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(WEIGHTS_MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        fh.write(model.flat_params().astype("<f8").tobytes())


def load_weights(path):
    with open(path, "rb") as fh:
        if fh.read(4) != WEIGHTS_MAGIC:
            raise ConfigError(f"{path}: not a weights file")
        (n,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(n).decode("utf-8"))
        if header.get("version") != WEIGHTS_VERSION:
            raise ConfigError(f"{path}: unsupported weights version {header.get('version')}")
        flat = np.frombuffer(fh.read(), dtype="<f8").astype(np.float64)
    model = build_model(header["model"], header["seed"], header["lstm_activation"],
                        header["channels"], header["lookback"])
    model.set_flat_params(flat)
    return model
