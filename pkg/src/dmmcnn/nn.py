"""Minimal layer engine: convolution, max-pooling, ReLU, flatten and dense layers.

Every layer works on batched float64 arrays and exposes

    forward(x) -> y
    backward(x, grad_y) -> grad_x

``backward`` receives the same input that was given to ``forward`` and
*adds* parameter gradients into ``Param.grad``; it never overwrites them.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

DTYPE = np.float64


class ShapeError(ValueError):
    """Raised when a tensor does not fit the layer it is fed to."""

    def __init__(self, layer: str, expected, got):
        self.layer = layer
        self.expected = expected
        self.got = got
        super().__init__(f"{layer}: expected shape {expected}, got {got}")


@dataclass
class Param:
    value: np.ndarray
    grad: np.ndarray = field(init=False)

    def __post_init__(self):
        self.value = np.asarray(self.value, dtype=DTYPE)
        self.grad = np.zeros_like(self.value)

    def zero_grad(self):
        self.grad.fill(0.0)


def glorot_uniform(rng: np.random.Generator, shape, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


class Layer:
    name = "layer"

    def params(self) -> list[Param]:
        return []

    def forward(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def backward(self, x: np.ndarray, grad: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def output_shape(self, input_shape: tuple) -> tuple:
        raise NotImplementedError

    def _check_grad(self, x, grad):
        expected = self.output_shape(x.shape)
        if tuple(grad.shape) != tuple(expected):
            raise ShapeError(self.name, expected, tuple(grad.shape))


def _window_extent(size: int, kernel: int, stride: int, padding: int, layer: str) -> int:
    padded = size + 2 * padding
    if kernel > padded:
        raise ShapeError(layer, f"spatial extent >= {kernel} after padding", padded)
    return (padded - kernel) // stride + 1


class Conv2d(Layer):
    """2-D cross-correlation on ``(N, C, H, W)`` input.

    Patches are gathered into an ``(N, k*k*C, Ho*Wo)`` buffer, one shifted
    slice per kernel offset, so the product with the ``(O, k*k*C)`` weight
    matrix lands directly in NCHW order.
    """

    name = "Conv2d"

    def __init__(self, in_ch: int, out_ch: int, kernel: int, stride: int = 1,
                 padding: int = 0, rng: np.random.Generator | None = None):
        if min(in_ch, out_ch, kernel, stride) < 1 or padding < 0:
            raise ValueError("Conv2d dimensions must be positive")
        self.in_ch, self.out_ch = in_ch, out_ch
        self.kernel, self.stride, self.padding = kernel, stride, padding
        rng = rng if rng is not None else np.random.default_rng(0)
        shape = (out_ch, in_ch, kernel, kernel)
        self.weight = Param(glorot_uniform(rng, shape, in_ch * kernel * kernel,
                                           out_ch * kernel * kernel))
        self.bias = Param(np.zeros(out_ch))
        self._cache = None

    def params(self):
        return [self.weight, self.bias]

    def output_shape(self, input_shape):
        if len(input_shape) != 4 or input_shape[1] != self.in_ch:
            raise ShapeError(self.name, f"(N, {self.in_ch}, H, W)", tuple(input_shape))
        n, _, h, w = input_shape
        ho = _window_extent(h, self.kernel, self.stride, self.padding, self.name)
        wo = _window_extent(w, self.kernel, self.stride, self.padding, self.name)
        return (n, self.out_ch, ho, wo)

    def _weight_matrix(self):
        # (O, C, ki, kj) -> (O, ki, kj, C) to match the patch buffer layout
        return self.weight.value.transpose(0, 2, 3, 1).reshape(self.out_ch, -1)

    def _patches(self, x, reuse: bool = True):
        if reuse and self._cache is not None and self._cache[0] is x:
            return self._cache[1]
        n, _, ho, wo = self.output_shape(x.shape)
        p, k, s, c = self.padding, self.kernel, self.stride, self.in_ch
        xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p))) if p else x
        buf = np.empty((n, k, k, c, ho, wo))
        for i in range(k):
            for j in range(k):
                buf[:, i, j] = xp[:, :, i:i + s * ho:s, j:j + s * wo:s]
        buf = buf.reshape(n, k * k * c, ho * wo)
        self._cache = (x, buf)
        return buf

    def forward(self, x):
        n, o, ho, wo = self.output_shape(x.shape)
        buf = self._patches(x, reuse=False)
        out = np.matmul(self._weight_matrix(), buf)
        out += self.bias.value[:, None]
        return out.reshape(n, o, ho, wo)

    def backward(self, x, grad, need_input_grad: bool = True):
        self._check_grad(x, grad)
        n, o, ho, wo = grad.shape
        k, s, p, c = self.kernel, self.stride, self.padding, self.in_ch
        buf = self._patches(x)
        g = grad.reshape(n, o, ho * wo)
        dw = np.matmul(g, buf.transpose(0, 2, 1)).sum(axis=0)      # (O, k*k*C)
        self.weight.grad += dw.reshape(o, k, k, c).transpose(0, 3, 1, 2)
        self.bias.grad += g.sum(axis=(0, 2))
        if not need_input_grad:
            return None
        dbuf = np.matmul(self._weight_matrix().T, g).reshape(n, k, k, c, ho, wo)
        _, _, h, w = x.shape
        dxp = np.zeros((n, c, h + 2 * p, w + 2 * p))
        for i in range(k):
            for j in range(k):
                dxp[:, :, i:i + s * ho:s, j:j + s * wo:s] += dbuf[:, i, j]
        if p:
            dxp = dxp[:, :, p:-p, p:-p]
        return np.ascontiguousarray(dxp)


class MaxPool2d(Layer):
    """Max pooling; ties go to the lowest row-major index inside the window."""

    name = "MaxPool2d"

    def __init__(self, kernel: int, stride: int | None = None):
        self.kernel = kernel
        self.stride = stride or kernel
        self._cache = None

    def output_shape(self, input_shape):
        if len(input_shape) != 4:
            raise ShapeError(self.name, "(N, C, H, W)", tuple(input_shape))
        n, c, h, w = input_shape
        return (n, c, _window_extent(h, self.kernel, self.stride, 0, self.name),
                _window_extent(w, self.kernel, self.stride, 0, self.name))

    def _argmax(self, x, reuse: bool = True):
        if reuse and self._cache is not None and self._cache[0] is x:
            return self._cache[1], self._cache[2]
        _, _, ho, wo = self.output_shape(x.shape)
        k, s = self.kernel, self.stride
        best = x[:, :, 0:s * ho:s, 0:s * wo:s].copy()
        arg = np.zeros(best.shape, dtype=np.int32)
        # scan offsets in row-major order; strict ">" keeps the first maximum
        for i in range(k):
            for j in range(k):
                if i == 0 and j == 0:
                    continue
                cand = x[:, :, i:i + s * ho:s, j:j + s * wo:s]
                better = cand > best
                np.maximum(best, cand, out=best)
                arg += (i * k + j - arg) * better
        self._cache = (x, arg, best)
        return arg, best

    def forward(self, x):
        return self._argmax(x, reuse=False)[1]

    def backward(self, x, grad):
        self._check_grad(x, grad)
        k, s = self.kernel, self.stride
        _, _, ho, wo = grad.shape
        arg, _ = self._argmax(x)
        dx = np.zeros_like(x)
        for i in range(k):
            for j in range(k):
                dx[:, :, i:i + s * ho:s, j:j + s * wo:s] += grad * (arg == i * k + j)
        return dx


class ReLU(Layer):
    name = "ReLU"

    def output_shape(self, input_shape):
        return tuple(input_shape)

    def forward(self, x):
        return np.maximum(x, 0.0)

    def backward(self, x, grad):
        self._check_grad(x, grad)
        return grad * (x > 0)


class Flatten(Layer):
    name = "Flatten"

    def output_shape(self, input_shape):
        return (input_shape[0], int(np.prod(input_shape[1:], dtype=np.int64)))

    def forward(self, x):
        return x.reshape(x.shape[0], -1)

    def backward(self, x, grad):
        self._check_grad(x, grad)
        return grad.reshape(x.shape)


class FullyConnected(Layer):
    """Dense layer ``y = x @ W.T + b`` with ``W`` of shape ``(out_dim, in_dim)``."""

    name = "FullyConnected"

    def __init__(self, in_dim: int, out_dim: int, rng: np.random.Generator | None = None):
        if in_dim < 1 or out_dim < 1:
            raise ValueError("FullyConnected dimensions must be positive")
        self.in_dim, self.out_dim = in_dim, out_dim
        rng = rng if rng is not None else np.random.default_rng(0)
        self.weight = Param(glorot_uniform(rng, (out_dim, in_dim), in_dim, out_dim))
        self.bias = Param(np.zeros(out_dim))

    def params(self):
        return [self.weight, self.bias]

    def output_shape(self, input_shape):
        if len(input_shape) != 2 or input_shape[1] != self.in_dim:
            raise ShapeError(self.name, f"(N, {self.in_dim})", tuple(input_shape))
        return (input_shape[0], self.out_dim)

    def forward(self, x):
        self.output_shape(x.shape)
        return x @ self.weight.value.T + self.bias.value

    def backward(self, x, grad):
        self._check_grad(x, grad)
        self.weight.grad += grad.T @ x
        self.bias.grad += grad.sum(axis=0)
        return grad @ self.weight.value


class Sequential(Layer):
    """Layer stack that keeps the per-layer inputs needed for ``backward``."""

    name = "Sequential"

    def __init__(self, layers: list[Layer]):
        self.layers = list(layers)

    def params(self):
        return [p for layer in self.layers for p in layer.params()]

    def output_shape(self, input_shape):
        shape = tuple(input_shape)
        for layer in self.layers:
            shape = layer.output_shape(shape)
        return shape

    def forward_with_inputs(self, x):
        inputs = []
        for layer in self.layers:
            inputs.append(x)
            x = layer.forward(x)
        return x, inputs

    def forward(self, x):
        return self.forward_with_inputs(x)[0]

    def backward_from_inputs(self, inputs, grad, need_input_grad: bool = True):
        for i in range(len(self.layers) - 1, -1, -1):
            layer, x = self.layers[i], inputs[i]
            if i == 0 and not need_input_grad and isinstance(layer, Conv2d):
                return layer.backward(x, grad, need_input_grad=False)
            grad = layer.backward(x, grad)
        return grad

    def backward(self, x, grad):
        _, inputs = self.forward_with_inputs(x)
        return self.backward_from_inputs(inputs, grad)


def sgd_step(params: list[Param], lr: float, momentum: float = 0.0,
             velocity: list[np.ndarray] | None = None) -> None:
    """In-place ``p -= lr * g`` (optionally with heavy-ball momentum), then zero grads."""
    if lr < 0:
        raise ValueError("learning rate must be non-negative")
    for i, p in enumerate(params):
        step = p.grad
        if momentum:
            velocity[i] *= momentum
            velocity[i] += p.grad
            step = velocity[i]
        if lr:
            p.value -= lr * step
        p.zero_grad()


class SGD:
    """Plain stochastic gradient descent; momentum defaults to 0."""

    def __init__(self, params: list[Param], lr: float, momentum: float = 0.0):
        if lr <= 0:
            raise ValueError("learning rate must be positive")
        self.params = params
        self.lr = lr
        self.momentum = momentum
        self.velocity = [np.zeros_like(p.value) for p in params] if momentum else None

    def step(self):
        sgd_step(self.params, self.lr, self.momentum, self.velocity)

    def zero_grad(self):
        for p in self.params:
            p.zero_grad()
