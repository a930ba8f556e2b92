"""
Layers with explicit forward/backward passes.

Activations are batched: ``(N, C, L)`` for the temporal layers and ``(N, D)``
after global pooling.  ``forward`` returns ``(output, cache)`` and
``backward(cache, d_out)`` returns ``d_input`` and fills ``self.grads``.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..baselines import binomial_kernel, circular_blur
from ..errors import ShapeMismatch


class Layer:
    kind = "layer"

    def __init__(self):
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}

    def output_shape(self, in_shape):
        return in_shape

    def forward(self, x):
        raise NotImplementedError

    def backward(self, cache, dy):
        raise NotImplementedError

    def zero_grad(self):
        for k, v in self.params.items():
            self.grads[k] = np.zeros_like(v)


def _uniform(rng, fan_in, shape):
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


class Dense(Layer):
    kind = "dense"

    def __init__(self, in_features: int, units: int, rng: np.random.Generator):
        super().__init__()
        self.params["W"] = _uniform(rng, in_features, (units, in_features))
        self.params["b"] = _uniform(rng, in_features, (units,))
        self.zero_grad()

    def output_shape(self, in_shape):
        if len(in_shape) != 1 or in_shape[0] != self.params["W"].shape[1]:
            raise ShapeMismatch(f"dense expects ({self.params['W'].shape[1]},), got {in_shape}")
        return (self.params["W"].shape[0],)

    def forward(self, x):
        if x.ndim != 2 or x.shape[1] != self.params["W"].shape[1]:
            raise ShapeMismatch(f"dense input {x.shape}")
        return x @ self.params["W"].T + self.params["b"], x

    def backward(self, x, dy):
        self.grads["W"] += dy.T @ x
        self.grads["b"] += dy.sum(axis=0)
        return dy @ self.params["W"]


class ReLU(Layer):
    kind = "relu"

    def forward(self, x):
        mask = x > 0
        return x * mask, mask

    def backward(self, mask, dy):
        return dy * mask


class GlobalAvgPool(Layer):
    kind = "global_avg_pool"

    def output_shape(self, in_shape):
        return (in_shape[0],)

    def forward(self, x):
        return x.mean(axis=-1), x.shape

    def backward(self, shape, dy):
        return np.broadcast_to(dy[..., None] / shape[-1], shape).copy()


def _pad(x, left, right, mode):
    if left == 0 and right == 0:
        return x
    if mode == "circular":
        return np.concatenate([x[..., x.shape[-1] - left:], x, x[..., :right]], axis=-1)
    return np.pad(x, [(0, 0)] * (x.ndim - 1) + [(left, right)])


def _unpad_grad(dxp, left, right, L, mode):
    dx = dxp[..., left:left + L].copy()
    if mode == "circular":
        if left:
            dx[..., L - left:] += dxp[..., :left]
        if right:
            dx[..., :right] += dxp[..., left + L:]
    return dx


class Conv1d(Layer):
    """Cross-correlation with ``'same'`` padding (zeros or circular) and optional stride."""

    kind = "conv1d"

    def __init__(self, in_channels: int, filters: int, kernel: int, rng: np.random.Generator,
                 stride: int = 1, padding: str = "zeros"):
        super().__init__()
        if kernel < 1 or stride < 1:
            raise ValueError("kernel and stride must be >= 1")
        if padding not in ("zeros", "circular", "valid"):
            raise ValueError(f"unknown padding {padding!r}")
        fan_in = in_channels * kernel
        self.params["W"] = _uniform(rng, fan_in, (filters, in_channels, kernel))
        self.params["b"] = _uniform(rng, fan_in, (filters,))
        self.kernel, self.stride, self.padding = kernel, stride, padding
        self.zero_grad()

    def _pads(self):
        if self.padding == "valid":
            return 0, 0
        left = (self.kernel - 1) // 2
        return left, self.kernel - 1 - left

    def output_shape(self, in_shape):
        C, L = in_shape
        if C != self.params["W"].shape[1]:
            raise ShapeMismatch(f"conv1d expects {self.params['W'].shape[1]} channels, got {C}")
        left, right = self._pads()
        n = (L + left + right - self.kernel) // self.stride + 1
        if n < 1:
            raise ShapeMismatch("conv1d input shorter than kernel")
        return (self.params["W"].shape[0], n)

    def forward(self, x):
        if x.ndim != 3 or x.shape[1] != self.params["W"].shape[1]:
            raise ShapeMismatch(f"conv1d input {x.shape}")
        left, right = self._pads()
        xp = _pad(x, left, right, self.padding)
        win = sliding_window_view(xp, self.kernel, axis=-1)[:, :, ::self.stride]
        y = np.einsum("nclk,ock->nol", win, self.params["W"], optimize=True)
        y += self.params["b"][None, :, None]
        return y, (win, x.shape[-1], xp.shape[-1])

    def backward(self, cache, dy):
        win, L, Lp = cache
        W = self.params["W"]
        self.grads["W"] += np.einsum("nclk,nol->ock", win, dy, optimize=True)
        self.grads["b"] += dy.sum(axis=(0, 2))
        N, O, n_out = dy.shape
        dxp = np.zeros((N, W.shape[1], Lp))
        stop = self.stride * (n_out - 1) + 1
        for j in range(self.kernel):
            dxp[:, :, j:j + stop:self.stride] += np.einsum("nol,oc->ncl", dy, W[:, :, j])
        left, right = self._pads()
        if self.padding == "valid":
            return dxp
        return _unpad_grad(dxp, left, right, L, self.padding)


class MaxPool1d(Layer):
    """Max over windows of ``size``; ``padding='circular'`` keeps length ``ceil(L / stride)``."""

    kind = "maxpool"

    def __init__(self, size: int = 2, stride: int | None = None, padding: str = "valid"):
        super().__init__()
        self.size = size
        self.stride = size if stride is None else stride
        self.padding = padding

    def output_shape(self, in_shape):
        C, L = in_shape
        if self.padding == "circular":
            return (C, -(-L // self.stride))
        return (C, (L - self.size) // self.stride + 1)

    def forward(self, x):
        L = x.shape[-1]
        xp = _pad(x, 0, self.size - 1, "circular") if self.padding == "circular" else x
        win = sliding_window_view(xp, self.size, axis=-1)[:, :, ::self.stride]
        if self.padding == "circular":
            win = win[:, :, : -(-L // self.stride)]
        idx = win.argmax(axis=-1)
        y = np.take_along_axis(win, idx[..., None], axis=-1)[..., 0]
        return y, (idx, L, xp.shape[-1])

    def backward(self, cache, dy):
        idx, L, Lp = cache
        N, C, n_out = dy.shape
        dxp = np.zeros((N, C, Lp))
        starts = np.arange(n_out) * self.stride
        for j in range(self.size):
            dxp[:, :, starts + j] += dy * (idx == j)
        if self.padding == "circular":
            return _unpad_grad(dxp, 0, self.size - 1, L, "circular")
        return dxp[:, :, :L]


class BlurPool1d(Layer):
    """Depthwise circular binomial blur followed by subsampling."""

    kind = "blurpool"

    def __init__(self, kernel: int = 5, stride: int = 2):
        super().__init__()
        self.kernel, self.stride = kernel, stride
        self.taps = binomial_kernel(kernel).taps

    def output_shape(self, in_shape):
        C, L = in_shape
        return (C, -(-L // self.stride))

    def forward(self, x):
        return circular_blur(x, self.taps)[..., ::self.stride], x.shape

    def backward(self, shape, dy):
        full = np.zeros(shape)
        full[..., ::self.stride] = dy
        # adjoint of the centred circular convolution
        p = (len(self.taps) - 1) // 2
        dx = np.zeros(shape)
        for j, h in enumerate(self.taps):
            dx += h * np.roll(full, j - p, axis=-1)
        return dx
