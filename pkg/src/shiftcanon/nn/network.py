"""Layer specs, the ``Network`` container, Adam, and text checkpoints."""

from __future__ import annotations

import copy
from dataclasses import asdict, dataclass

import numpy as np

from ..errors import ShapeMismatch
from .layers import BlurPool1d, Conv1d, Dense, GlobalAvgPool, MaxPool1d, ReLU

KINDS = ("conv1d", "maxpool", "blurpool", "dense", "relu", "global_avg_pool")


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    units: int = 0          # dense units / conv filters
    kernel: int = 1         # conv kernel, pool window, blur taps
    stride: int = 1
    padding: str = "zeros"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown layer kind {self.kind!r}")
        if self.stride < 1 or self.kernel < 1:
            raise ValueError("stride and kernel must be >= 1")


def conv(filters, kernel, stride=1, padding="zeros"):
    return LayerSpec("conv1d", filters, kernel, stride, padding)


def dense(units):
    return LayerSpec("dense", units)


def relu():
    return LayerSpec("relu")


def maxpool(size=2, stride=None, padding="valid"):
    return LayerSpec("maxpool", 0, size, size if stride is None else stride, padding)


def blurpool(kernel=5, stride=2):
    return LayerSpec("blurpool", 0, kernel, stride, "circular")


def global_avg_pool():
    return LayerSpec("global_avg_pool")


def _make_layer(spec: LayerSpec, in_shape, rng):
    if spec.kind == "conv1d":
        return Conv1d(in_shape[0], spec.units, spec.kernel, rng, spec.stride, spec.padding)
    if spec.kind == "dense":
        return Dense(in_shape[0], spec.units, rng)
    if spec.kind == "relu":
        return ReLU()
    if spec.kind == "maxpool":
        return MaxPool1d(spec.kernel, spec.stride, spec.padding)
    if spec.kind == "blurpool":
        return BlurPool1d(spec.kernel, spec.stride)
    return GlobalAvgPool()


class Network:
    """Ordered stack of layers with gradient buffers and Adam state."""

    def __init__(self, specs, input_shape, seed: int = 0):
        self.specs = [s if isinstance(s, LayerSpec) else LayerSpec(**s) for s in specs]
        self.input_shape = tuple(int(d) for d in input_shape)
        self.seed = int(seed)
        rng = np.random.default_rng(seed)
        self.layers = []
        shape = self.input_shape
        for spec in self.specs:
            layer = _make_layer(spec, shape, rng)
            shape = layer.output_shape(shape)
            self.layers.append(layer)
        self.output_shape = shape
        self.adam_m = {k: np.zeros_like(v) for k, v in self.named_params()}
        self.adam_v = {k: np.zeros_like(v) for k, v in self.named_params()}
        self.adam_t = 0

    def named_params(self):
        for i, layer in enumerate(self.layers):
            for name, p in layer.params.items():
                yield f"{i}.{name}", p

    def named_grads(self):
        for i, layer in enumerate(self.layers):
            for name, g in layer.grads.items():
                yield f"{i}.{name}", g

    def zero_grad(self):
        for layer in self.layers:
            layer.zero_grad()

    def forward(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape[1:] != self.input_shape:
            raise ShapeMismatch(f"network expects (N, {self.input_shape}), got {x.shape}")
        caches = []
        for layer in self.layers:
            x, c = layer.forward(x)
            caches.append(c)
        return x, caches

    def backward(self, caches, d_out):
        """Accumulate parameter gradients; return the gradient w.r.t. the input."""
        if len(caches) != len(self.layers):
            raise ShapeMismatch("cache does not belong to this network")
        d = np.asarray(d_out, dtype=float)
        for layer, c in zip(reversed(self.layers), reversed(caches)):
            d = layer.backward(c, d)
        return d

    def __call__(self, x):
        return self.forward(x)[0]

    def copy(self) -> "Network":
        return copy.deepcopy(self)

    def load_params(self, other: "Network"):
        for (k, dst), (_, src) in zip(self.named_params(), other.named_params()):
            dst[...] = src

    # text checkpoint ---------------------------------------------------
    def to_dict(self) -> dict:
        return {
            "specs": [asdict(s) for s in self.specs],
            "input_shape": list(self.input_shape),
            "seed": self.seed,
            "params": [
                {"name": k, "shape": list(v.shape), "values": v.ravel().tolist()}
                for k, v in self.named_params()
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Network":
        net = cls(d["specs"], d["input_shape"], d.get("seed", 0))
        params = dict(net.named_params())
        for entry in d["params"]:
            p = params[entry["name"]]
            if list(p.shape) != list(entry["shape"]):
                raise ShapeMismatch(f"{entry['name']}: checkpoint shape {entry['shape']} != {list(p.shape)}")
            p[...] = np.asarray(entry["values"], dtype=float).reshape(p.shape)
        return net


def forward(net: Network, x):
    return net.forward(x)


def backward(net: Network, cache, d_output):
    """Gradients of every parameter (as a name -> array dict) and of the input."""
    net.zero_grad()
    d_input = net.backward(cache, d_output)
    return {k: g.copy() for k, g in net.named_grads()}, d_input


def adam_step(net: Network, grads: dict | None = None, lr: float = 1e-3,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> Network:
    """One in-place Adam update.  ``grads`` defaults to the network's own buffers."""
    if grads is None:
        grads = dict(net.named_grads())
    net.adam_t += 1
    t = net.adam_t
    for name, p in net.named_params():
        g = grads[name]
        if g.shape != p.shape:
            raise ShapeMismatch(f"gradient {name} has shape {g.shape}, expected {p.shape}")
        m = net.adam_m[name]
        v = net.adam_v[name]
        m *= beta1
        m += (1 - beta1) * g
        v *= beta2
        v += (1 - beta2) * g * g
        m_hat = m / (1 - beta1 ** t)
        v_hat = v / (1 - beta2 ** t)
        p -= lr * m_hat / (np.sqrt(v_hat) + eps)
    return net
