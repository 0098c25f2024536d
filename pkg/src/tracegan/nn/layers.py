"""Small deterministic neural-network engine on NumPy arrays.

Conventions:
  * activations are NCHW (images) or NF (dense), float32 by default;
    a float64 build (dtype=np.float64) exists for gradient verification
  * ``forward(x, keep)`` returns ``(y, cache)``; caches are explicit so one
    network instance can run several forward passes per training step (the
    cycle paths push batches through both generators twice)
  * ``backward(cache, dy)`` returns the input gradient and ACCUMULATES
    parameter gradients on the layer; call ``zero_grads`` between steps
  * convolution is direct im2col + matmul; images are 32x32, so determinism
    matters more than asymptotic speed

Weight init draws conv/linear weights from N(0, WEIGHT_STD^2) using the
caller's Philox generator in layer declaration order; biases start at zero,
instance-norm scale at one, shift at zero.
"""

from __future__ import annotations

import math

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import NumericalError, ShapeError

WEIGHT_STD = 0.02


def sigmoid(x: np.ndarray) -> np.ndarray:
    """Numerically stable logistic function (dtype-preserving)."""
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _normal_init(rng: np.random.Generator, shape: tuple[int, ...], dtype) -> np.ndarray:
    return rng.normal(0.0, WEIGHT_STD, size=shape).astype(dtype)


def _check_image_input(x: np.ndarray, channels: int, layer: "Layer") -> None:
    if x.ndim != 4:
        raise ShapeError(f"{type(layer).__name__}: expected NCHW input, got ndim={x.ndim}")
    if x.shape[1] != channels:
        raise ShapeError(
            f"{type(layer).__name__}: expected {channels} input channels, got {x.shape[1]}"
        )


class Layer:
    def params(self) -> dict[str, np.ndarray]:
        return {}

    def grads(self) -> dict[str, np.ndarray]:
        return {}

    def zero_grads(self) -> None:
        for g in self.grads().values():
            g[...] = 0

    def forward(self, x: np.ndarray, keep: bool = True):
        raise NotImplementedError

    def backward(self, cache, dy: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def kink_margin(self, cache) -> float:
        """Distance of the nearest pre-activation to a non-smooth point
        (inf for smooth layers); used by the finite-difference checker."""
        return math.inf


def _pad(x: np.ndarray, p: int, mode: str) -> np.ndarray:
    if p == 0:
        return x
    spec = ((0, 0), (0, 0), (p, p), (p, p))
    if mode == "zero":
        return np.pad(x, spec)
    if mode == "reflect":
        return np.pad(x, spec, mode="reflect")
    raise ShapeError(f"unknown padding mode {mode!r}")


def _fold_reflect(dxp: np.ndarray, p: int) -> np.ndarray:
    """Adjoint of reflect padding: pad-region gradients are added back onto
    the interior cells they mirror (np.pad reflects without edge repeat)."""
    out = dxp
    for axis in (2, 3):
        a = np.moveaxis(out, axis, 0)
        n = a.shape[0] - 2 * p
        core = a[p : p + n].copy()
        for j in range(p):
            core[p - j] += a[j]
            core[n - 2 - j] += a[p + n + j]
        out = np.moveaxis(core, 0, axis)
    return out


def _im2col(xp: np.ndarray, k: int, stride: int):
    n, c, hp, wp = xp.shape
    oh = (hp - k) // stride + 1
    ow = (wp - k) // stride + 1
    win = sliding_window_view(xp, (k, k), axis=(2, 3))[:, :, ::stride, ::stride]
    cols = np.ascontiguousarray(win.transpose(0, 2, 3, 1, 4, 5)).reshape(n * oh * ow, c * k * k)
    return cols, oh, ow


def _col2im(dcols: np.ndarray, xp_shape, k: int, stride: int, oh: int, ow: int) -> np.ndarray:
    n, c, _, _ = xp_shape
    d6 = dcols.reshape(n, oh, ow, c, k, k).transpose(0, 3, 4, 5, 1, 2)
    dxp = np.zeros(xp_shape, dcols.dtype)
    for a in range(k):
        for b in range(k):
            dxp[:, :, a : a + stride * oh : stride, b : b + stride * ow : stride] += d6[:, :, a, b]
    return dxp


class Conv2d(Layer):
    """Cross-correlation with zero or reflect padding."""

    def __init__(self, in_ch, out_ch, kernel, stride=1, padding=0, pad_mode="zero",
                 rng: np.random.Generator | None = None, dtype=np.float32):
        self.in_ch, self.out_ch = in_ch, out_ch
        self.k, self.stride, self.padding, self.pad_mode = kernel, stride, padding, pad_mode
        if rng is None:
            raise ValueError("Conv2d requires an rng for weight init")
        self.w = _normal_init(rng, (out_ch, in_ch, kernel, kernel), dtype)
        self.b = np.zeros(out_ch, dtype)
        self.gw = np.zeros_like(self.w)
        self.gb = np.zeros_like(self.b)

    def params(self):
        return {"weight": self.w, "bias": self.b}

    def grads(self):
        return {"weight": self.gw, "bias": self.gb}

    def forward(self, x, keep=True):
        _check_image_input(x, self.in_ch, self)
        if x.shape[2] + 2 * self.padding < self.k or x.shape[3] + 2 * self.padding < self.k:
            raise ShapeError(f"Conv2d: spatial input {x.shape[2:]} smaller than kernel {self.k}")
        xp = _pad(x, self.padding, self.pad_mode)
        cols, oh, ow = _im2col(xp, self.k, self.stride)
        y = cols @ self.w.reshape(self.out_ch, -1).T
        y += self.b
        n = x.shape[0]
        y = np.ascontiguousarray(y.reshape(n, oh, ow, self.out_ch).transpose(0, 3, 1, 2))
        cache = (x.shape, xp.shape, cols, oh, ow) if keep else None
        return y, cache

    def backward(self, cache, dy):
        if cache is None:
            raise ShapeError("Conv2d.backward: no cache from forward")
        x_shape, xp_shape, cols, oh, ow = cache
        n = x_shape[0]
        if dy.shape != (n, self.out_ch, oh, ow):
            raise ShapeError(f"Conv2d.backward: expected grad {(n, self.out_ch, oh, ow)}, got {dy.shape}")
        dyr = np.ascontiguousarray(dy.transpose(0, 2, 3, 1)).reshape(n * oh * ow, self.out_ch)
        self.gw += (dyr.T @ cols).reshape(self.w.shape)
        self.gb += dyr.sum(0)
        dcols = dyr @ self.w.reshape(self.out_ch, -1)
        dxp = _col2im(dcols, xp_shape, self.k, self.stride, oh, ow)
        p = self.padding
        if p == 0:
            return dxp
        if self.pad_mode == "zero":
            return np.ascontiguousarray(dxp[:, :, p : p + x_shape[2], p : p + x_shape[3]])
        return _fold_reflect(dxp, p)


class TransposedConv2d(Layer):
    """Fractionally-strided convolution (the adjoint of Conv2d's forward),
    with output_padding resolving the output-size ambiguity at stride > 1."""

    def __init__(self, in_ch, out_ch, kernel, stride=1, padding=0, output_padding=0,
                 rng: np.random.Generator | None = None, dtype=np.float32):
        if output_padding > padding or output_padding >= max(stride, 1):
            raise ShapeError("TransposedConv2d: need output_padding <= padding and < stride")
        self.in_ch, self.out_ch = in_ch, out_ch
        self.k, self.stride, self.padding, self.output_padding = kernel, stride, padding, output_padding
        if rng is None:
            raise ValueError("TransposedConv2d requires an rng for weight init")
        self.w = _normal_init(rng, (in_ch, out_ch, kernel, kernel), dtype)
        self.b = np.zeros(out_ch, dtype)
        self.gw = np.zeros_like(self.w)
        self.gb = np.zeros_like(self.b)

    def params(self):
        return {"weight": self.w, "bias": self.b}

    def grads(self):
        return {"weight": self.gw, "bias": self.gb}

    def _sizes(self, h, w):
        k, s, p, op = self.k, self.stride, self.padding, self.output_padding
        full = ((h - 1) * s + k, (w - 1) * s + k)
        out = ((h - 1) * s - 2 * p + k + op, (w - 1) * s - 2 * p + k + op)
        return full, out

    def forward(self, x, keep=True):
        _check_image_input(x, self.in_ch, self)
        n, c, h, w = x.shape
        k, s, p = self.k, self.stride, self.padding
        (hf, wf), (ho, wo) = self._sizes(h, w)
        if ho <= 0 or wo <= 0:
            raise ShapeError(f"TransposedConv2d: non-positive output size {(ho, wo)}")
        xr = np.ascontiguousarray(x.transpose(0, 2, 3, 1)).reshape(n * h * w, c)
        cols = xr @ self.w.reshape(c, -1)
        d6 = cols.reshape(n, h, w, self.out_ch, k, k).transpose(0, 3, 4, 5, 1, 2)
        canvas = np.zeros((n, self.out_ch, hf, wf), x.dtype)
        for a in range(k):
            for b in range(k):
                canvas[:, :, a : a + s * h : s, b : b + s * w : s] += d6[:, :, a, b]
        y = canvas[:, :, p : p + ho, p : p + wo].copy()
        y += self.b[None, :, None, None]
        cache = (x.shape, xr) if keep else None
        return y, cache

    def backward(self, cache, dy):
        if cache is None:
            raise ShapeError("TransposedConv2d.backward: no cache from forward")
        x_shape, xr = cache
        n, c, h, w = x_shape
        k, s, p = self.k, self.stride, self.padding
        (hf, wf), (ho, wo) = self._sizes(h, w)
        if dy.shape != (n, self.out_ch, ho, wo):
            raise ShapeError(
                f"TransposedConv2d.backward: expected grad {(n, self.out_ch, ho, wo)}, got {dy.shape}"
            )
        dcanvas = np.zeros((n, self.out_ch, hf, wf), dy.dtype)
        dcanvas[:, :, p : p + ho, p : p + wo] = dy
        win = sliding_window_view(dcanvas, (k, k), axis=(2, 3))[:, :, ::s, ::s]
        winr = np.ascontiguousarray(win.transpose(0, 2, 3, 1, 4, 5)).reshape(n * h * w, self.out_ch * k * k)
        self.gw += (xr.T @ winr).reshape(self.w.shape)
        self.gb += dy.sum((0, 2, 3))
        dxr = winr @ self.w.reshape(c, -1).T
        return np.ascontiguousarray(dxr.reshape(n, h, w, c).transpose(0, 3, 1, 2))


class InstanceNorm(Layer):
    """Per-(instance, channel) standardization over the spatial plane with a
    per-channel affine scale/shift."""

    def __init__(self, channels, eps=1e-5, dtype=np.float32):
        if eps <= 0:
            raise ValueError("InstanceNorm eps must be positive")
        self.channels, self.eps = channels, eps
        self.gamma = np.ones(channels, dtype)
        self.beta = np.zeros(channels, dtype)
        self.g_gamma = np.zeros_like(self.gamma)
        self.g_beta = np.zeros_like(self.beta)

    def params(self):
        return {"scale": self.gamma, "shift": self.beta}

    def grads(self):
        return {"scale": self.g_gamma, "shift": self.g_beta}

    def forward(self, x, keep=True):
        _check_image_input(x, self.channels, self)
        mu = x.mean(axis=(2, 3), keepdims=True)
        var = x.var(axis=(2, 3), keepdims=True)
        inv = 1.0 / np.sqrt(var + self.eps)
        xhat = (x - mu) * inv
        y = self.gamma[None, :, None, None] * xhat + self.beta[None, :, None, None]
        cache = (xhat, inv) if keep else None
        return y, cache

    def backward(self, cache, dy):
        if cache is None:
            raise ShapeError("InstanceNorm.backward: no cache from forward")
        xhat, inv = cache
        if dy.shape != xhat.shape:
            raise ShapeError(f"InstanceNorm.backward: expected grad {xhat.shape}, got {dy.shape}")
        self.g_gamma += (dy * xhat).sum((0, 2, 3))
        self.g_beta += dy.sum((0, 2, 3))
        dxh = dy * self.gamma[None, :, None, None]
        m1 = dxh.mean(axis=(2, 3), keepdims=True)
        m2 = (dxh * xhat).mean(axis=(2, 3), keepdims=True)
        return inv * (dxh - m1 - xhat * m2)


class ReLU(Layer):
    def forward(self, x, keep=True):
        return np.maximum(x, 0), (x if keep else None)

    def backward(self, cache, dy):
        if cache is None:
            raise ShapeError("ReLU.backward: no cache from forward")
        return dy * (cache > 0)

    def kink_margin(self, cache):
        return float(np.abs(cache).min()) if cache is not None and cache.size else math.inf


class LeakyReLU(Layer):
    def __init__(self, slope=0.2):
        self.slope = slope

    def forward(self, x, keep=True):
        return np.where(x > 0, x, x * self.slope), (x if keep else None)

    def backward(self, cache, dy):
        if cache is None:
            raise ShapeError("LeakyReLU.backward: no cache from forward")
        g = np.ones_like(cache)
        g[cache <= 0] = self.slope
        return dy * g

    def kink_margin(self, cache):
        return float(np.abs(cache).min()) if cache is not None and cache.size else math.inf


class Tanh(Layer):
    def forward(self, x, keep=True):
        y = np.tanh(x)
        return y, (y if keep else None)

    def backward(self, cache, dy):
        if cache is None:
            raise ShapeError("Tanh.backward: no cache from forward")
        return dy * (1.0 - cache * cache)


class Sigmoid(Layer):
    def forward(self, x, keep=True):
        y = sigmoid(x)
        return y, (y if keep else None)

    def backward(self, cache, dy):
        if cache is None:
            raise ShapeError("Sigmoid.backward: no cache from forward")
        return dy * cache * (1.0 - cache)


class Linear(Layer):
    def __init__(self, in_features, out_features, rng: np.random.Generator | None = None,
                 dtype=np.float32):
        self.in_features, self.out_features = in_features, out_features
        if rng is None:
            raise ValueError("Linear requires an rng for weight init")
        self.w = _normal_init(rng, (out_features, in_features), dtype)
        self.b = np.zeros(out_features, dtype)
        self.gw = np.zeros_like(self.w)
        self.gb = np.zeros_like(self.b)

    def params(self):
        return {"weight": self.w, "bias": self.b}

    def grads(self):
        return {"weight": self.gw, "bias": self.gb}

    def forward(self, x, keep=True):
        if x.ndim != 2 or x.shape[1] != self.in_features:
            raise ShapeError(f"Linear: expected (N, {self.in_features}) input, got {x.shape}")
        y = x @ self.w.T + self.b
        return y, (x if keep else None)

    def backward(self, cache, dy):
        if cache is None:
            raise ShapeError("Linear.backward: no cache from forward")
        if dy.shape != (cache.shape[0], self.out_features):
            raise ShapeError(f"Linear.backward: expected grad (N, {self.out_features}), got {dy.shape}")
        self.gw += dy.T @ cache
        self.gb += dy.sum(0)
        return dy @ self.w


class ResidualBlock(Layer):
    """x + IN(conv3x3(relu(IN(conv3x3(x))))), reflect padded, channel-preserving."""

    def __init__(self, channels, rng: np.random.Generator | None = None, dtype=np.float32):
        self.conv1 = Conv2d(channels, channels, 3, 1, 1, "reflect", rng, dtype)
        self.norm1 = InstanceNorm(channels, dtype=dtype)
        self.relu = ReLU()
        self.conv2 = Conv2d(channels, channels, 3, 1, 1, "reflect", rng, dtype)
        self.norm2 = InstanceNorm(channels, dtype=dtype)

    def _parts(self):
        return (("conv1", self.conv1), ("norm1", self.norm1), ("relu", self.relu),
                ("conv2", self.conv2), ("norm2", self.norm2))

    def params(self):
        return {f"{tag}.{k}": v for tag, part in self._parts() for k, v in part.params().items()}

    def grads(self):
        return {f"{tag}.{k}": v for tag, part in self._parts() for k, v in part.grads().items()}

    def forward(self, x, keep=True):
        h, c1 = self.conv1.forward(x, keep)
        h, c2 = self.norm1.forward(h, keep)
        h, c3 = self.relu.forward(h, keep)
        h, c4 = self.conv2.forward(h, keep)
        h, c5 = self.norm2.forward(h, keep)
        cache = (c1, c2, c3, c4, c5) if keep else None
        return x + h, cache

    def backward(self, cache, dy):
        if cache is None:
            raise ShapeError("ResidualBlock.backward: no cache from forward")
        c1, c2, c3, c4, c5 = cache
        dh = self.norm2.backward(c5, dy)
        dh = self.conv2.backward(c4, dh)
        dh = self.relu.backward(c3, dh)
        dh = self.norm1.backward(c2, dh)
        dh = self.conv1.backward(c1, dh)
        return dy + dh

    def kink_margin(self, cache):
        return self.relu.kink_margin(cache[2]) if cache is not None else math.inf


class Sequential(Layer):
    def __init__(self, layers):
        self.layers = list(layers)

    def params(self):
        return {f"{i}.{k}": v for i, layer in enumerate(self.layers)
                for k, v in layer.params().items()}

    def grads(self):
        return {f"{i}.{k}": v for i, layer in enumerate(self.layers)
                for k, v in layer.grads().items()}

    def forward(self, x, keep=True):
        caches = [] if keep else None
        for i, layer in enumerate(self.layers):
            try:
                x, c = layer.forward(x, keep)
            except ShapeError as exc:
                raise ShapeError(f"layer {i} ({type(layer).__name__}): {exc}") from exc
            if keep:
                caches.append(c)
        if not np.all(np.isfinite(x)):
            raise NumericalError("non-finite values in forward output")
        return x, caches

    def backward(self, caches, dy):
        if caches is None or len(caches) != len(self.layers):
            raise ShapeError("Sequential.backward: stale or missing forward cache")
        for layer, cache in zip(reversed(self.layers), reversed(caches)):
            dy = layer.backward(cache, dy)
        return dy

    def kink_margin(self, caches):
        if caches is None:
            return math.inf
        return min(layer.kink_margin(c) for layer, c in zip(self.layers, caches))

    def num_params(self) -> int:
        return sum(int(p.size) for p in self.params().values())
