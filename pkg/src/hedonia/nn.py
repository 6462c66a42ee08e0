"""Small fixed-zoo neural network toolkit in float64 numpy.

Layers operate on NHWC image batches and (N, features) matrices. Each layer
returns a cache from ``forward`` that its ``backward`` consumes, and networks
are plain sequences of layers. Parameters and gradients are exchanged as
ordered ``{name: ndarray}`` dictionaries so that the optimiser and the
checkpoint writer do not need to know about layer internals.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

LAYER_KINDS = ("conv3x3", "maxpool2x2", "dense", "relu", "flatten", "concat")


class ShapeError(ValueError):
    """Raised when a tensor does not fit the layer it is fed to."""

    def __init__(self, layer: str, expected, got):
        super().__init__(f"layer {layer}: expected input shape {expected}, got {got}")
        self.layer = layer
        self.expected = expected
        self.got = got


class NonFiniteError(FloatingPointError):
    """Raised when a loss, activation or gradient stops being finite."""


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    fan_in: int = 0
    fan_out: int = 0

    def __post_init__(self):
        if self.kind not in LAYER_KINDS:
            raise ValueError(f"unknown layer kind {self.kind!r}")
        if self.kind in ("dense", "conv3x3") and (self.fan_in <= 0 or self.fan_out <= 0):
            raise ValueError(f"{self.kind} needs positive fan_in/fan_out")


# ---------------------------------------------------------------------------
# layers
# ---------------------------------------------------------------------------


class Layer:
    kind = ""

    def __init__(self):
        self.params: dict[str, np.ndarray] = {}

    @property
    def spec(self) -> LayerSpec:
        return LayerSpec(self.kind)

    def output_shape(self, shape: tuple) -> tuple:
        return shape

    def forward(self, x):
        raise NotImplementedError

    def backward(self, cache, dout, need_dx=True):
        raise NotImplementedError


class Conv3x3(Layer):
    """3x3 convolution, stride 1, same padding, NHWC layout."""

    kind = "conv3x3"

    def __init__(self, c_in: int, c_out: int, rng: np.random.Generator):
        super().__init__()
        self.c_in, self.c_out = c_in, c_out
        fan_in = 9 * c_in
        limit = np.sqrt(6.0 / fan_in)  # He-uniform
        self.params = {
            "W": rng.uniform(-limit, limit, size=(3, 3, c_in, c_out)),
            "b": np.zeros(c_out),
        }

    @property
    def spec(self):
        return LayerSpec(self.kind, self.c_in, self.c_out)

    def output_shape(self, shape):
        if len(shape) != 3 or shape[2] != self.c_in:
            raise ShapeError(self.kind, ("H", "W", self.c_in), shape)
        return (shape[0], shape[1], self.c_out)

    def forward(self, x):
        n, h, w, c = x.shape
        xp = np.zeros((n, h + 2, w + 2, c))
        xp[:, 1:-1, 1:-1, :] = x
        weight = self.params["W"]
        out = np.empty((n * h * w, self.c_out))
        out[:] = self.params["b"]
        # one GEMM per kernel tap beats a materialised im2col for thin channels
        for k in range(9):
            i, j = divmod(k, 3)
            out += xp[:, i:i + h, j:j + w, :].reshape(-1, c) @ weight[i, j]
        return out.reshape(n, h, w, self.c_out), xp

    def backward(self, cache, dout, need_dx=True):
        xp = cache
        n, hp, wp, c = xp.shape
        h, w = hp - 2, wp - 2
        d2 = dout.reshape(-1, self.c_out)
        weight = self.params["W"]
        dw = np.empty_like(weight)
        dxp = np.zeros_like(xp) if need_dx else None
        for k in range(9):
            i, j = divmod(k, 3)
            dw[i, j] = xp[:, i:i + h, j:j + w, :].reshape(-1, c).T @ d2
            if need_dx:
                dxp[:, i:i + h, j:j + w, :] += (d2 @ weight[i, j].T).reshape(n, h, w, c)
        grads = {"W": dw, "b": d2.sum(axis=0)}
        return (dxp[:, 1:-1, 1:-1, :] if need_dx else None), grads


class MaxPool2x2(Layer):
    """Non-overlapping 2x2 max pooling; gradient routed to the first maximum."""

    kind = "maxpool2x2"

    def output_shape(self, shape):
        if len(shape) != 3 or shape[0] % 2 or shape[1] % 2:
            raise ShapeError(self.kind, ("even H", "even W", "C"), shape)
        return (shape[0] // 2, shape[1] // 2, shape[2])

    def forward(self, x):
        n, h, w, c = x.shape
        win = (x.reshape(n, h // 2, 2, w // 2, 2, c)
               .transpose(0, 1, 3, 5, 2, 4)
               .reshape(n, h // 2, w // 2, c, 4))
        idx = win.argmax(axis=-1)
        out = np.take_along_axis(win, idx[..., None], axis=-1)[..., 0]
        return out, (idx, x.shape)

    def backward(self, cache, dout, need_dx=True):
        idx, (n, h, w, c) = cache
        dwin = np.zeros(idx.shape + (4,))
        np.put_along_axis(dwin, idx[..., None], dout[..., None], axis=-1)
        dx = (dwin.reshape(n, h // 2, w // 2, c, 2, 2)
              .transpose(0, 1, 4, 2, 5, 3)
              .reshape(n, h, w, c))
        return dx, {}


class Dense(Layer):
    kind = "dense"

    def __init__(self, fan_in: int, fan_out: int, rng: np.random.Generator):
        super().__init__()
        self.fan_in, self.fan_out = fan_in, fan_out
        limit = np.sqrt(6.0 / (fan_in + fan_out))  # Xavier-uniform
        self.params = {
            "W": rng.uniform(-limit, limit, size=(fan_in, fan_out)),
            "b": np.zeros(fan_out),
        }

    @property
    def spec(self):
        return LayerSpec(self.kind, self.fan_in, self.fan_out)

    def output_shape(self, shape):
        if shape != (self.fan_in,):
            raise ShapeError(self.kind, (self.fan_in,), shape)
        return (self.fan_out,)

    def forward(self, x):
        return x @ self.params["W"] + self.params["b"], x

    def backward(self, cache, dout, need_dx=True):
        x = cache
        grads = {"W": x.T @ dout, "b": dout.sum(axis=0)}
        return dout @ self.params["W"].T, grads


class ReLU(Layer):
    kind = "relu"

    def forward(self, x):
        mask = x > 0
        return x * mask, mask

    def backward(self, cache, dout, need_dx=True):
        return dout * cache, {}


class Flatten(Layer):
    kind = "flatten"

    def output_shape(self, shape):
        return (int(np.prod(shape)),)

    def forward(self, x):
        return x.reshape(x.shape[0], -1), x.shape

    def backward(self, cache, dout, need_dx=True):
        return dout.reshape(cache), {}


def concat(parts: list[np.ndarray]) -> tuple[np.ndarray, list[int]]:
    """Join (N, k_i) feature blocks; returns the widths needed to split gradients."""
    return np.concatenate(parts, axis=1), [p.shape[1] for p in parts]


def split_grad(dout: np.ndarray, widths: list[int]) -> list[np.ndarray]:
    return np.split(dout, np.cumsum(widths)[:-1], axis=1)


# ---------------------------------------------------------------------------
# networks
# ---------------------------------------------------------------------------


@dataclass
class ActivationTrace:
    outputs: list
    caches: list
    net_id: int

    @property
    def output(self):
        return self.outputs[-1]


class Sequential:
    """Ordered layer stack with a declared per-sample input shape."""

    def __init__(self, layers: list[Layer], input_shape: tuple, name: str = "net"):
        self.layers = list(layers)
        self.input_shape = tuple(input_shape)
        self.name = name
        shape = self.input_shape
        for i, layer in enumerate(self.layers):
            try:
                shape = layer.output_shape(shape)
            except ShapeError as err:
                raise ShapeError(f"{name}[{i}] {layer.kind}", err.expected, err.got) from None
        self.output_shape = shape

    def specs(self) -> list[LayerSpec]:
        return [layer.spec for layer in self.layers]

    def parameters(self, prefix: str = "") -> dict[str, np.ndarray]:
        out = {}
        for i, layer in enumerate(self.layers):
            for key, value in layer.params.items():
                out[f"{prefix}{i}.{key}"] = value
        return out

    def layer_kinds(self, prefix: str = "") -> dict[str, str]:
        return {f"{prefix}{i}.{k}": layer.kind
                for i, layer in enumerate(self.layers) for k in layer.params}

    def forward(self, x):
        return forward(self, x)

    def backward(self, trace, output_grad, input_grad=True):
        return backward(self, trace, output_grad, input_grad)


def forward(net: Sequential, x: np.ndarray) -> ActivationTrace:
    """Run ``x`` (batched, leading axis N) through every layer, keeping all outputs."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[1:] != net.input_shape:
        raise ShapeError(f"{net.name}[0] {net.layers[0].kind if net.layers else 'input'}",
                         net.input_shape, x.shape[1:])
    outputs, caches = [], []
    for layer in net.layers:
        x, cache = layer.forward(x)
        outputs.append(x)
        caches.append(cache)
    return ActivationTrace(outputs, caches, id(net))


def backward(net: Sequential, trace: ActivationTrace, output_grad: np.ndarray,
             input_grad: bool = True):
    """Backpropagate ``output_grad``; returns (input gradient, {param name: grad}).

    With ``input_grad=False`` the first layer skips its input gradient and
    ``None`` is returned in its place (images never need one).
    """
    if trace.net_id != id(net) or len(trace.caches) != len(net.layers):
        raise ValueError(f"trace was not produced by network {net.name!r}")
    if output_grad.shape != trace.output.shape:
        raise ShapeError(f"{net.name} output", trace.output.shape, output_grad.shape)
    grads: dict[str, np.ndarray] = {}
    d = output_grad
    for i in range(len(net.layers) - 1, -1, -1):
        d, g = net.layers[i].backward(trace.caches[i], d, need_dx=input_grad or i > 0)
        for key, value in g.items():
            grads[f"{i}.{key}"] = value
    ordered = {k: grads[k] for k in net.parameters()}
    return d, ordered


# ---------------------------------------------------------------------------
# loss and optimiser
# ---------------------------------------------------------------------------


def mse_loss(pred, target) -> tuple[float, np.ndarray]:
    """Mean squared error and its gradient with respect to ``pred``."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.size != target.size:
        raise ValueError(f"length mismatch: pred {pred.size} vs target {target.size}")
    if pred.size == 0:
        raise ValueError("mse_loss of an empty batch")
    diff = pred.reshape(-1) - target.reshape(-1)
    loss = float(np.mean(diff ** 2))
    if not np.isfinite(loss):
        raise NonFiniteError("non-finite loss")
    return loss, (2.0 / diff.size * diff).reshape(pred.shape)


@dataclass
class AdamState:
    learning_rate: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step: int = 0
    first_moment: dict = field(default_factory=dict)
    second_moment: dict = field(default_factory=dict)


def adam_step(weights: dict, grads: dict, state: AdamState):
    """One bias-corrected ADAM update, applied in place.

    All gradients are checked before any weight is touched, so a non-finite
    gradient leaves both weights and state as they were.
    """
    if set(weights) != set(grads):
        raise ValueError("gradient layout does not match weights")
    for name, g in grads.items():
        if g.shape != weights[name].shape:
            raise ShapeError(name, weights[name].shape, g.shape)
        if not np.all(np.isfinite(g)):
            raise NonFiniteError(f"non-finite gradient for {name}")
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.step
    c2 = 1.0 - b2 ** state.step
    for name, w in weights.items():
        g = grads[name]
        m = state.first_moment.get(name)
        v = state.second_moment.get(name)
        if m is None:
            m = np.zeros_like(w)
            v = np.zeros_like(w)
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * g * g
        state.first_moment[name] = m
        state.second_moment[name] = v
        w -= state.learning_rate * (m / c1) / (np.sqrt(v / c2) + state.epsilon)
    return weights, state


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

MAGIC = b"HDNW"
VERSION = 1


def save_checkpoint(path, weights: dict, kinds: dict | None = None) -> None:
    """Write weights to a binary container plus a ``.manifest.txt`` sidecar.

    Layout: magic, u16 version, u32 entry count, then per entry a u16 name
    length, utf-8 name, u8 ndim and u32 dims; afterwards the raw little-endian
    float64 blocks in table order.
    """
    path = Path(path)
    kinds = kinds or {}
    header = [MAGIC, struct.pack("<HI", VERSION, len(weights))]
    for name, arr in weights.items():
        raw = name.encode("utf-8")
        header.append(struct.pack("<H", len(raw)) + raw)
        header.append(struct.pack("<B", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape))
    with open(path, "wb") as fh:
        fh.write(b"".join(header))
        for arr in weights.values():
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    lines = [f"# hedonia checkpoint v{VERSION}"]
    for name, arr in weights.items():
        shape = "x".join(str(d) for d in arr.shape)
        lines.append(f"{name}\t{kinds.get(name, '-')}\t{shape}")
    Path(str(path) + ".manifest.txt").write_text("\n".join(lines) + "\n")


def load_checkpoint(path) -> dict[str, np.ndarray]:
    data = Path(path).read_bytes()
    if data[:4] != MAGIC:
        raise ValueError(f"{path}: not a hedonia checkpoint")
    version, count = struct.unpack_from("<HI", data, 4)
    if version != VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    pos = 10
    table = []
    for _ in range(count):
        (nlen,) = struct.unpack_from("<H", data, pos)
        pos += 2
        name = data[pos:pos + nlen].decode("utf-8")
        pos += nlen
        (ndim,) = struct.unpack_from("<B", data, pos)
        pos += 1
        shape = struct.unpack_from(f"<{ndim}I", data, pos)
        pos += 4 * ndim
        table.append((name, shape))
    out = {}
    for name, shape in table:
        size = int(np.prod(shape))
        out[name] = np.frombuffer(data, dtype="<f8", count=size, offset=pos).reshape(shape).copy()
        pos += 8 * size
    return out


def load_into(weights: dict, loaded: dict) -> None:
    """Copy loaded arrays into an existing weight layout, in place."""
    for name, arr in weights.items():
        if name not in loaded or loaded[name].shape != arr.shape:
            raise ShapeError(name, arr.shape, getattr(loaded.get(name), "shape", None))
        arr[...] = loaded[name]
