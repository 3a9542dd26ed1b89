"""Layers with explicit forward/backward passes.

A layer keeps its trainable tensors in ``params`` and the matching
gradients from the last ``backward`` call in ``grads``. Non-trainable
tensors (batch-norm moving statistics) live in ``buffers``.
"""

from __future__ import annotations

import math

import numpy as np

from ..errors import DomainError, ShapeError
from .conv import conv2d, conv2d_backward, conv2d_transpose, conv2d_transpose_backward


def glorot_uniform(rng, shape, fan_in, fan_out, dtype=np.float32):
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


class Layer:
    def __init__(self, name: str = ""):
        self.name = name
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}
        self.buffers: dict[str, np.ndarray] = {}
        self._cache = None

    def forward(self, x, training: bool = False):
        raise NotImplementedError

    def backward(self, dy):
        raise NotImplementedError

    def __call__(self, x, training: bool = False):
        return self.forward(x, training)

    def astype(self, dtype):
        for store in (self.params, self.buffers):
            for k in store:
                store[k] = store[k].astype(dtype)
        return self

    def __repr__(self):
        shapes = ", ".join(f"{k}={v.shape}" for k, v in self.params.items())
        return f"{type(self).__name__}({self.name!r}{', ' + shapes if shapes else ''})"


class Dense(Layer):
    """``y = x @ W + b`` over the last axis."""

    def __init__(self, n_in, n_out, rng, name="dense"):
        super().__init__(name)
        self.params["kernel"] = glorot_uniform(rng, (n_in, n_out), n_in, n_out)
        self.params["bias"] = np.zeros(n_out, dtype=np.float32)

    def forward(self, x, training=False):
        W = self.params["kernel"]
        if x.shape[-1] != W.shape[0]:
            raise ShapeError(f"{self.name}: input width {x.shape[-1]} != kernel rows {W.shape[0]}")
        self._cache = x
        return x @ W + self.params["bias"]

    def backward(self, dy):
        x = self._cache
        W = self.params["kernel"]
        x2 = x.reshape(-1, W.shape[0])
        dy2 = dy.reshape(-1, W.shape[1])
        self.grads["kernel"] = x2.T @ dy2
        self.grads["bias"] = dy2.sum(axis=0)
        return dy @ W.T


class Embedding(Layer):
    """Row lookup: integer ids of shape (B, 1) -> (B, 1, E)."""

    def __init__(self, vocab, dim, rng, name="embedding"):
        super().__init__(name)
        self.params["table"] = glorot_uniform(rng, (vocab, dim), vocab, dim)

    def forward(self, ids, training=False):
        ids = np.asarray(ids)
        V = self.params["table"].shape[0]
        if ids.size and (ids.min() < 0 or ids.max() >= V):
            raise DomainError(f"{self.name}: ids must lie in [0, {V})")
        ids = ids.astype(np.int64)
        self._cache = ids
        return self.params["table"][ids]

    def backward(self, dy):
        ids = self._cache
        grad = np.zeros_like(self.params["table"])
        np.add.at(grad, ids.reshape(-1), dy.reshape(ids.size, -1))
        self.grads["table"] = grad
        return None


class Conv2D(Layer):
    def __init__(self, c_in, c_out, kernel, stride, rng, name="conv2d"):
        super().__init__(name)
        fan_in, fan_out = kernel * kernel * c_in, kernel * kernel * c_out
        self.stride = stride
        self.params["kernel"] = glorot_uniform(rng, (kernel, kernel, c_in, c_out), fan_in, fan_out)
        self.params["bias"] = np.zeros(c_out, dtype=np.float32)

    def forward(self, x, training=False):
        y, self._cache = conv2d(x, self.params["kernel"], self.stride)
        return y + self.params["bias"]

    def backward(self, dy):
        dx, dk = conv2d_backward(dy, self._cache)
        self.grads["kernel"] = dk
        self.grads["bias"] = dy.sum(axis=(0, 1, 2))
        return dx


class Conv2DTranspose(Layer):
    """Kernel stored as (kh, kw, c_out, c_in), initialised Normal(0, stddev)."""

    def __init__(self, c_in, c_out, kernel, stride, rng, stddev=0.02, name="conv2d_transpose"):
        super().__init__(name)
        self.stride = stride
        self.params["kernel"] = (rng.standard_normal((kernel, kernel, c_out, c_in)) * stddev).astype(np.float32)
        self.params["bias"] = np.zeros(c_out, dtype=np.float32)

    def forward(self, x, training=False):
        y, self._cache = conv2d_transpose(x, self.params["kernel"], self.stride)
        return y + self.params["bias"]

    def backward(self, dy):
        dx, dk = conv2d_transpose_backward(dy, self._cache)
        self.grads["kernel"] = dk
        self.grads["bias"] = dy.sum(axis=(0, 1, 2))
        return dx


class BatchNorm(Layer):
    """Per-channel normalisation over every axis but the last.

    ``moving = momentum * moving + (1 - momentum) * batch``; with the default
    momentum of 0 the moving statistics are those of the last training batch.
    """

    def __init__(self, channels, momentum=0.0, eps=1e-3, name="batchnorm"):
        super().__init__(name)
        self.momentum = momentum
        self.eps = eps
        self.params["gamma"] = np.ones(channels, dtype=np.float32)
        self.params["beta"] = np.zeros(channels, dtype=np.float32)
        self.buffers["moving_mean"] = np.zeros(channels, dtype=np.float32)
        self.buffers["moving_var"] = np.ones(channels, dtype=np.float32)

    def forward(self, x, training=False):
        gamma, beta = self.params["gamma"], self.params["beta"]
        axes = tuple(range(x.ndim - 1))
        if training:
            if x.shape[0] < 2:
                raise DomainError(f"{self.name}: training needs a batch of at least 2")
            mean = x.mean(axis=axes)
            var = x.var(axis=axes)
            m = self.momentum
            self.buffers["moving_mean"] = (m * self.buffers["moving_mean"] + (1 - m) * mean).astype(
                self.buffers["moving_mean"].dtype)
            self.buffers["moving_var"] = (m * self.buffers["moving_var"] + (1 - m) * var).astype(
                self.buffers["moving_var"].dtype)
        else:
            mean = self.buffers["moving_mean"].astype(x.dtype)
            var = self.buffers["moving_var"].astype(x.dtype)
        inv_std = 1.0 / np.sqrt(var + x.dtype.type(self.eps))
        xhat = (x - mean) * inv_std
        self._cache = (xhat, inv_std, training)
        return xhat * gamma + beta

    def backward(self, dy):
        xhat, inv_std, training = self._cache
        axes = tuple(range(dy.ndim - 1))
        gamma = self.params["gamma"]
        self.grads["gamma"] = (dy * xhat).sum(axis=axes)
        self.grads["beta"] = dy.sum(axis=axes)
        dxhat = dy * gamma
        if not training:
            return dxhat * inv_std
        n = dy.size // dy.shape[-1]
        return inv_std / n * (n * dxhat - dxhat.sum(axis=axes) - xhat * (dxhat * xhat).sum(axis=axes))


class Dropout(Layer):
    """Inverted dropout; identity at inference."""

    def __init__(self, rate, rng, name="dropout"):
        super().__init__(name)
        if not 0 <= rate < 1:
            raise DomainError(f"dropout rate must lie in [0, 1), got {rate}")
        self.rate = rate
        self.rng = rng

    def forward(self, x, training=False):
        if not training or self.rate == 0:
            self._cache = None
            return x
        keep = self.rng.random(x.shape) >= self.rate
        scale = x.dtype.type(1.0 / (1.0 - self.rate))
        self._cache = keep * scale
        return x * self._cache

    def backward(self, dy):
        return dy if self._cache is None else dy * self._cache


# -------------------------------------------------------------- activations

def relu(x):
    return np.maximum(x, 0)


def leaky_relu(x, alpha=0.2):
    return np.where(x > 0, x, alpha * x)


def sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def softmax(x):
    e = np.exp(x - x.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


class Activation(Layer):
    KINDS = ("relu", "leaky_relu", "sigmoid", "tanh", "softmax", "linear")

    def __init__(self, kind, alpha=0.2, name=None):
        if kind not in self.KINDS:
            raise DomainError(f"unknown activation {kind!r}")
        super().__init__(name or kind)
        self.kind = kind
        self.alpha = alpha

    def forward(self, x, training=False):
        k = self.kind
        if k == "relu":
            y = relu(x)
        elif k == "leaky_relu":
            y = leaky_relu(x, x.dtype.type(self.alpha))
        elif k == "sigmoid":
            y = sigmoid(x)
        elif k == "tanh":
            y = np.tanh(x)
        elif k == "softmax":
            y = softmax(x)
        else:
            y = x
        self._cache = (x, y)
        return y

    def backward(self, dy):
        x, y = self._cache
        k = self.kind
        if k == "relu":
            return dy * (x > 0)
        if k == "leaky_relu":
            return np.where(x > 0, dy, self.alpha * dy)
        if k == "sigmoid":
            return dy * y * (1 - y)
        if k == "tanh":
            return dy * (1 - y * y)
        if k == "softmax":
            return y * (dy - (dy * y).sum(axis=-1, keepdims=True))
        return dy


class Reshape(Layer):
    def __init__(self, shape, name="reshape"):
        super().__init__(name)
        self.shape = tuple(shape)

    def forward(self, x, training=False):
        self._cache = x.shape
        return x.reshape((x.shape[0],) + self.shape)

    def backward(self, dy):
        return dy.reshape(self._cache)


class Flatten(Reshape):
    def __init__(self, name="flatten"):
        super().__init__((-1,), name)


class Sequential(Layer):
    """A chain of layers; ``params``/``grads`` are exposed per child."""

    def __init__(self, layers, name="sequential"):
        super().__init__(name)
        self.layers = list(layers)

    def forward(self, x, training=False):
        for layer in self.layers:
            x = layer.forward(x, training)
        return x

    def backward(self, dy):
        for layer in reversed(self.layers):
            dy = layer.backward(dy)
        return dy

    def astype(self, dtype):
        for layer in self.layers:
            layer.astype(dtype)
        return self
