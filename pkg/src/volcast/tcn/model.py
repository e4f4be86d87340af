"""Dilated causal 1-D convolutional network with exact backpropagation.

All parameters of a :class:`TcnModel` live in one float64 vector; the
per-layer weight and bias arrays are views into it, so the optimizer can
work on a single flat array.
"""
from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import kernels

ACTIVATIONS = ("relu", "linear")
FORMAT_VERSION = 1
_MAGIC = b"VOLCTCN\x00"


@dataclass
class ConvLayer:
    weights: np.ndarray  # [out, in, kernel]
    biases: np.ndarray  # [out]
    dilation: int = 1
    activation: str = "relu"

    def __post_init__(self):
        if self.weights.ndim != 3:
            raise ValueError("weights must have shape [out, in, kernel]")
        if self.biases.shape != (self.weights.shape[0],):
            raise ValueError("biases must have shape [out]")
        if self.dilation < 1:
            raise ValueError("dilation must be a positive integer")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"activation must be one of {ACTIVATIONS}")

    @property
    def out_channels(self) -> int:
        return self.weights.shape[0]

    @property
    def in_channels(self) -> int:
        return self.weights.shape[1]

    @property
    def kernel(self) -> int:
        return self.weights.shape[2]

    @property
    def n_params(self) -> int:
        return self.weights.size + self.biases.size


def causal_conv1d(x, layer: ConvLayer) -> np.ndarray:
    """Apply one layer to a single ``[channels_in, T]`` sequence."""
    x = np.ascontiguousarray(x, dtype=float)
    if x.ndim != 2:
        raise ValueError("input must have shape [channels_in, T]")
    if x.shape[1] == 0:
        raise ValueError("input sequence is empty")
    if x.shape[0] != layer.in_channels:
        raise ValueError(f"input has {x.shape[0]} channels, layer expects {layer.in_channels}")
    out = kernels.conv1d_forward(x[None], layer.weights, layer.biases, layer.dilation,
                                 layer.activation == "relu")
    return out[0]


@dataclass
class Tape:
    """Activations cached by a forward pass: ``acts[0]`` is the input,
    ``acts[l + 1]`` the output of layer ``l``."""

    acts: list
    model_id: int
    version: int
    squeeze: bool


class TcnModel:
    def __init__(self, layers: list[ConvLayer], input_length: int = 64):
        if not layers:
            raise ValueError("a model needs at least one layer")
        for prev, nxt in zip(layers, layers[1:]):
            if prev.out_channels != nxt.in_channels:
                raise ValueError("consecutive layers disagree on channel count")
        if layers[-1].out_channels != 1:
            raise ValueError("the last layer must have a single filter")
        self.input_length = int(input_length)
        self._flat = np.concatenate([np.concatenate([l.weights.ravel(), l.biases]) for l in layers])
        self.layers = []
        offset = 0
        for l in layers:
            nw = l.weights.size
            w = self._flat[offset:offset + nw].reshape(l.weights.shape)
            b = self._flat[offset + nw:offset + nw + l.biases.size]
            offset += l.n_params
            self.layers.append(ConvLayer(w, b, int(l.dilation), l.activation))
        self._version = 0

    @classmethod
    def standard(cls, seed=None, filters: int = 8, kernel: int = 2, n_hidden: int = 6,
                 input_length: int = 64, in_channels: int = 1) -> "TcnModel":
        """Hidden layer ``l`` (1-based) has dilation ``2**(l-1)`` and ReLU; a
        final width-1 single-filter linear layer maps to the output.

        Weights are Glorot-uniform, biases zero.
        """
        rng = np.random.default_rng(seed)
        layers = []
        cin = in_channels
        for l in range(1, n_hidden + 1):
            layers.append(ConvLayer(_glorot(rng, filters, cin, kernel), np.zeros(filters), 2 ** (l - 1), "relu"))
            cin = filters
        layers.append(ConvLayer(_glorot(rng, 1, cin, 1), np.zeros(1), 1, "linear"))
        return cls(layers, input_length)

    # -- parameters -------------------------------------------------------

    @property
    def n_params(self) -> int:
        return self._flat.size

    @property
    def receptive_field(self) -> int:
        return 1 + sum((l.kernel - 1) * l.dilation for l in self.layers)

    def get_flat(self) -> np.ndarray:
        return self._flat.copy()

    def set_flat(self, values) -> None:
        values = np.asarray(values, dtype=float)
        if values.shape != self._flat.shape:
            raise ValueError(f"expected {self._flat.size} parameters, got {values.shape}")
        self._flat[:] = values
        self._version += 1

    def params(self) -> list[np.ndarray]:
        """Per-layer ``[weights, biases, ...]`` views in storage order."""
        return [a for l in self.layers for a in (l.weights, l.biases)]

    def copy(self) -> "TcnModel":
        layers = [ConvLayer(l.weights.copy(), l.biases.copy(), l.dilation, l.activation) for l in self.layers]
        return TcnModel(layers, self.input_length)

    def describe(self) -> list[dict]:
        return [dict(kernel=l.kernel, dilation=l.dilation, **{"in": l.in_channels}, out=l.out_channels,
                     activation=l.activation) for l in self.layers]

    # -- passes -----------------------------------------------------------

    def forward(self, x):
        """Run ``x`` of shape ``[T]`` or ``[batch, T]``; returns (output, tape)
        with the output shaped like ``x``."""
        x = np.asarray(x, dtype=float)
        squeeze = x.ndim == 1
        if squeeze:
            x = x[None]
        if x.ndim != 2 or x.shape[1] != self.input_length:
            raise ValueError(f"input must have length {self.input_length}, got shape {x.shape}")
        acts = [np.ascontiguousarray(x[:, None, :])]
        for l in self.layers:
            acts.append(kernels.conv1d_forward(acts[-1], l.weights, l.biases, l.dilation,
                                               l.activation == "relu"))
        out = acts[-1][:, 0, :]
        return (out[0] if squeeze else out), Tape(acts, id(self), self._version, squeeze)

    def backward(self, tape: Tape, grad_output) -> np.ndarray:
        """Flat gradient of the loss given dL/d(output) from :meth:`forward`."""
        if tape.model_id != id(self) or tape.version != self._version:
            raise ValueError("tape is stale or belongs to another model")
        g = np.asarray(grad_output, dtype=float)
        if tape.squeeze:
            g = g[None]
        if g.shape != (tape.acts[0].shape[0], self.input_length):
            raise ValueError(f"loss gradient has shape {g.shape}, expected {tape.acts[-1][:, 0].shape}")
        g = np.ascontiguousarray(g[:, None, :])
        grads = [None] * (2 * len(self.layers))
        for i in range(len(self.layers) - 1, -1, -1):
            l = self.layers[i]
            dw, db, g = kernels.conv1d_backward(tape.acts[i], l.weights, l.dilation, l.activation == "relu",
                                                tape.acts[i + 1], g, i > 0)
            grads[2 * i], grads[2 * i + 1] = dw.ravel(), db
        return np.concatenate(grads)

    # -- prediction -------------------------------------------------------

    def predict_windows(self, windows, mean: float, std: float) -> np.ndarray:
        """Next-step forecasts for raw ``[n, T]`` windows (see :func:`predict_next`)."""
        if not std > 0:
            raise ValueError("std must be positive")
        z = (np.asarray(windows, dtype=float) - mean) / std
        out, _ = self.forward(np.atleast_2d(z))
        return out[:, -1] * std + mean

    # -- persistence ------------------------------------------------------

    def save(self, path) -> None:
        """Write the weight file.

        Layout: 8-byte magic ``VOLCTCN\\0``, little-endian uint32 header
        length, UTF-8 JSON header ``{format_version, input_length, n_layers,
        layers: [{kernel, dilation, in, out, activation}]}``, then float64
        little-endian values: per layer the row-major weights followed by
        the biases.
        """
        header = json.dumps({"format_version": FORMAT_VERSION, "input_length": self.input_length,
                             "n_layers": len(self.layers), "layers": self.describe()},
                            sort_keys=True).encode("utf-8")
        with Path(path).open("wb") as fh:
            fh.write(_MAGIC)
            fh.write(struct.pack("<I", len(header)))
            fh.write(header)
            fh.write(self._flat.astype("<f8").tobytes())

    @classmethod
    def load(cls, path) -> "TcnModel":
        data = Path(path).read_bytes()
        if data[:8] != _MAGIC or len(data) < 12:
            raise ValueError(f"{path}: not a volcast weight file")
        (hlen,) = struct.unpack("<I", data[8:12])
        try:
            header = json.loads(data[12:12 + hlen].decode("utf-8"))
            specs = header["layers"]
            shapes = [(s["out"], s["in"], s["kernel"]) for s in specs]
        except (UnicodeDecodeError, ValueError, KeyError, TypeError) as exc:
            raise ValueError(f"{path}: corrupt header ({exc})") from None
        if header.get("format_version") != FORMAT_VERSION:
            raise ValueError(f"{path}: unsupported format version {header.get('format_version')}")
        payload = data[12 + hlen:]
        expected = sum(math.prod(shape) + shape[0] for shape in shapes)
        if len(payload) != 8 * expected or len(specs) != header.get("n_layers"):
            raise ValueError(f"{path}: payload does not match header")
        flat = np.frombuffer(payload, dtype="<f8").astype(float)
        layers, offset = [], 0
        for spec, shape in zip(specs, shapes):
            nw = math.prod(shape)
            w = flat[offset:offset + nw].reshape(shape)
            b = flat[offset + nw:offset + nw + shape[0]]
            offset += nw + shape[0]
            layers.append(ConvLayer(w.copy(), b.copy(), spec["dilation"], spec["activation"]))
        return cls(layers, header["input_length"])


def _glorot(rng, cout, cin, k):
    limit = math.sqrt(6.0 / (cin * k + cout * k))
    return rng.uniform(-limit, limit, size=(cout, cin, k))


def forward(model: TcnModel, x):
    return model.forward(x)


def backward(model: TcnModel, tape: Tape, grad_output) -> np.ndarray:
    return model.backward(tape, grad_output)


def mse_loss_seq(output, target) -> float:
    output = np.asarray(output, dtype=float)
    target = np.asarray(target, dtype=float)
    if output.shape != target.shape:
        raise ValueError(f"shape mismatch: {output.shape} vs {target.shape}")
    return float(np.mean((output - target) ** 2))


def mse_loss_seq_grad(output, target) -> np.ndarray:
    diff = np.asarray(output, dtype=float) - np.asarray(target, dtype=float)
    return 2.0 * diff / diff.size


def predict_next(model: TcnModel, window, mean: float, std: float) -> float:
    """Forecast the value after a raw window: standardize, run, read the last
    output position, destandardize."""
    window = np.asarray(window, dtype=float)
    if window.shape != (model.input_length,):
        raise ValueError(f"window must have length {model.input_length}")
    return float(model.predict_windows(window[None], mean, std)[0])
