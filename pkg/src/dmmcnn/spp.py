"""n-level spatial pyramid max pooling.

Level ``k`` (for ``k = 1..n``) splits each ``H x W`` plane into ``k x k``
blocks and keeps the maximum of every block, so each channel contributes
``1 + 4 + ... + n**2`` values whatever the spatial size of the input.

Output layout per sample: level-major, then channel, then block in
row-major order.  Block ``i`` of ``k`` covers rows
``[floor(i*H/k), floor((i+1)*H/k))``.  When ``H < k`` that rule would leave
empty blocks, so the end is taken as ``ceil((i+1)*H/k)`` instead and
neighbouring blocks may overlap.  Columns follow the same rule with ``W``.
"""

from __future__ import annotations

import math

import numpy as np

from .nn import Layer, ShapeError


def pyramid_bins(levels: int) -> int:
    return sum(k * k for k in range(1, levels + 1))


def block_bounds(size: int, k: int) -> list[tuple[int, int]]:
    if size >= k:
        return [((i * size) // k, ((i + 1) * size) // k) for i in range(k)]
    return [((i * size) // k, math.ceil((i + 1) * size / k)) for i in range(k)]


class SpatialPyramidPool(Layer):
    """Pyramid pooling over ``(N, C, H, W)`` input, producing ``(N, C * sum k^2)``."""

    name = "SpatialPyramidPool"

    def __init__(self, levels: int):
        if levels < 1:
            raise ValueError("SPP needs at least one level")
        self.levels = levels

    @property
    def bins(self) -> int:
        return pyramid_bins(self.levels)

    def output_shape(self, input_shape):
        if len(input_shape) != 4:
            raise ShapeError(self.name, "(N, C, H, W)", tuple(input_shape))
        n, c, h, w = input_shape
        if h < 1 or w < 1:
            raise ShapeError(self.name, "H >= 1 and W >= 1", tuple(input_shape))
        return (n, c * self.bins)

    def _blocks(self, h, w):
        for k in range(1, self.levels + 1):
            rows, cols = block_bounds(h, k), block_bounds(w, k)
            yield k, [(r, c) for r in rows for c in cols]

    def forward(self, x):
        self.output_shape(x.shape)
        n, c, h, w = x.shape
        pieces = []
        for k, blocks in self._blocks(h, w):
            level = np.empty((n, c, k * k))
            for b, ((r0, r1), (c0, c1)) in enumerate(blocks):
                level[:, :, b] = x[:, :, r0:r1, c0:c1].max(axis=(2, 3))
            pieces.append(level.reshape(n, c * k * k))
        return np.concatenate(pieces, axis=1)

    def backward(self, x, grad):
        self._check_grad(x, grad)
        n, c, h, w = x.shape
        dx = np.zeros_like(x)
        offset = 0
        rows_n = np.arange(n)[:, None]
        rows_c = np.arange(c)[None, :]
        for k, blocks in self._blocks(h, w):
            g = grad[:, offset:offset + c * k * k].reshape(n, c, k * k)
            offset += c * k * k
            for b, ((r0, r1), (c0, c1)) in enumerate(blocks):
                region = x[:, :, r0:r1, c0:c1].reshape(n, c, -1)
                flat = region.argmax(axis=2)
                rr = r0 + flat // (c1 - c0)
                cc = c0 + flat % (c1 - c0)
                dx[rows_n, rows_c, rr, cc] += g[:, :, b]
        return dx


def spp_forward(x: np.ndarray, levels: int) -> np.ndarray:
    """Pool a single ``(C, H, W)`` map or a batch ``(N, C, H, W)``."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 3
    out = SpatialPyramidPool(levels).forward(x[None] if single else x)
    return out[0] if single else out


def spp_backward(x: np.ndarray, levels: int, grad: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    grad = np.asarray(grad, dtype=np.float64)
    single = x.ndim == 3
    layer = SpatialPyramidPool(levels)
    if single:
        return layer.backward(x[None], grad.reshape(1, -1))[0]
    return layer.backward(x, grad)
