"""Layers with explicit forward and backward passes.

Every ``forward(x, train)`` returns ``(out, ctx)``; ``backward(dout, ctx)``
returns ``(dx, grads)`` where ``grads`` maps parameter names to gradients of
the same shape. Activations are float64 numpy arrays laid out as
(batch, channels, height, width). Nothing is accumulated on the layer itself
apart from batchnorm running statistics, which move only in train mode.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import ArgumentError, ShapeError, StateError

INIT_STD = 0.02


class Parameter:
    """A trainable tensor: values, an accumulated gradient, and a frozen flag."""

    def __init__(self, data, frozen: bool = False):
        self.data = np.array(data, dtype=np.float64)
        self.grad = np.zeros_like(self.data)
        self.frozen = frozen

    @property
    def shape(self):
        return self.data.shape

    def zero_grad(self):
        self.grad[...] = 0.0

    def __repr__(self):
        return f"Parameter(shape={self.data.shape}, frozen={self.frozen})"


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    params: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"kind": self.kind, **self.params}

    @classmethod
    def from_dict(cls, d: dict) -> "LayerSpec":
        d = dict(d)
        return cls(d.pop("kind"), d)


@dataclass
class Context:
    layer: "Layer"
    data: tuple


class Layer:
    kind = ""

    def __init__(self):
        self.params: dict[str, Parameter] = {}
        self.buffers: dict[str, np.ndarray] = {}

    def spec(self) -> LayerSpec:
        return LayerSpec(self.kind, self._spec_params())

    def _spec_params(self) -> dict:
        return {}

    def init_params(self, rng: np.random.Generator) -> None:
        pass

    def _ctx(self, *data) -> Context:
        return Context(self, data)

    def _unpack(self, ctx) -> tuple:
        if not isinstance(ctx, Context):
            raise StateError(f"{self.kind}: backward needs the context returned by forward")
        if ctx.layer is not self:
            raise StateError(f"{self.kind}: context belongs to a different layer ({ctx.layer.kind})")
        return ctx.data

    def forward(self, x: np.ndarray, train: bool = True):
        raise NotImplementedError

    def backward(self, dout: np.ndarray, ctx):
        raise NotImplementedError

    def __repr__(self):
        args = ", ".join(f"{k}={v}" for k, v in self._spec_params().items())
        return f"{type(self).__name__}({args})"


def _check_4d(kind, x, channels):
    if x.ndim != 4 or x.shape[1] != channels:
        raise ShapeError(f"{kind}: expected input shape (N, {channels}, H, W), got {x.shape}")


def _col2im(cols: np.ndarray, out_hw: tuple[int, int], k: int, s: int, h: int, w: int) -> np.ndarray:
    """Scatter-add (N, h, w, C, k, k) patches into an (N, C, *out_hw) array."""
    n, c = cols.shape[0], cols.shape[3]
    out = np.zeros((n, c) + out_hw)
    for i in range(k):
        for j in range(k):
            out[:, :, i:i + s * h:s, j:j + s * w:s] += cols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
    return out


def _im2col(xp: np.ndarray, k: int, s: int, h: int, w: int) -> np.ndarray:
    """(N*h*w, C*k*k) patch matrix of a padded input, windows at stride ``s``."""
    n, c = xp.shape[:2]
    win = sliding_window_view(xp, (k, k), axis=(2, 3))[:, :, ::s, ::s][:, :, :h, :w]
    return win.transpose(0, 2, 3, 1, 4, 5).reshape(n * h * w, c * k * k)


def conv_out_size(n: int, k: int, s: int, p: int) -> int:
    return (n + 2 * p - k) // s + 1


def tconv_out_size(n: int, k: int, s: int, p: int) -> int:
    return (n - 1) * s - 2 * p + k


def conv2d_direct(x, w, b, stride, pad):
    """Naive six-loop convolution; the reference the im2col path is checked against."""
    n, c, h, wd = x.shape
    f, _, k, _ = w.shape
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    ho, wo = conv_out_size(h, k, stride, pad), conv_out_size(wd, k, stride, pad)
    out = np.zeros((n, f, ho, wo))
    for ni in range(n):
        for fi in range(f):
            for oy in range(ho):
                for ox in range(wo):
                    acc = b[fi]
                    for ci in range(c):
                        for ky in range(k):
                            for kx in range(k):
                                acc += xp[ni, ci, oy * stride + ky, ox * stride + kx] * w[fi, ci, ky, kx]
                    out[ni, fi, oy, ox] = acc
    return out


def conv_transpose2d_direct(x, w, b, stride, pad):
    """Naive transposed convolution: every input pixel stamps a weighted kernel."""
    n, cin, h, wd = x.shape
    _, cout, k, _ = w.shape
    fh, fw = (h - 1) * stride + k, (wd - 1) * stride + k
    full = np.zeros((n, cout, fh, fw))
    for ni in range(n):
        for ci in range(cin):
            for iy in range(h):
                for ix in range(wd):
                    for co in range(cout):
                        for ky in range(k):
                            for kx in range(k):
                                full[ni, co, iy * stride + ky, ix * stride + kx] += x[ni, ci, iy, ix] * w[ci, co, ky, kx]
    out = full[:, :, pad:fh - pad, pad:fw - pad]
    return out + b[None, :, None, None]


class Conv2d(Layer):
    kind = "conv"

    def __init__(self, in_channels, out_channels, kernel=4, stride=2, pad=1, method="im2col"):
        super().__init__()
        if min(in_channels, out_channels) < 1 or kernel < 1 or stride < 1 or pad < 0:
            raise ArgumentError("conv: channels and kernel must be >= 1, stride >= 1, pad >= 0")
        if method not in ("im2col", "direct"):
            raise ArgumentError(f"conv: unknown method {method!r}")
        self.in_channels, self.out_channels = in_channels, out_channels
        self.kernel, self.stride, self.pad, self.method = kernel, stride, pad, method
        self.params = {
            "weight": Parameter(np.zeros((out_channels, in_channels, kernel, kernel))),
            "bias": Parameter(np.zeros(out_channels)),
        }

    def _spec_params(self):
        return {"in_channels": self.in_channels, "out_channels": self.out_channels,
                "kernel": self.kernel, "stride": self.stride, "pad": self.pad}

    def init_params(self, rng):
        self.params["weight"].data[...] = rng.normal(0.0, INIT_STD, self.params["weight"].shape)
        self.params["bias"].data[...] = 0.0

    def output_hw(self, h, w):
        return conv_out_size(h, self.kernel, self.stride, self.pad), conv_out_size(w, self.kernel, self.stride, self.pad)

    def forward(self, x, train=True):
        _check_4d(self.kind, x, self.in_channels)
        k, s, p = self.kernel, self.stride, self.pad
        ho, wo = self.output_hw(x.shape[2], x.shape[3])
        if ho < 1 or wo < 1:
            raise ShapeError(f"conv: input {x.shape} too small for kernel {k}, stride {s}, pad {p}")
        w, b = self.params["weight"].data, self.params["bias"].data
        if self.method == "direct":
            return conv2d_direct(x, w, b, s, p), self._ctx(x, None)
        xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)))
        cols = _im2col(xp, k, s, ho, wo)
        out = cols @ w.reshape(self.out_channels, -1).T + b
        out = out.reshape(x.shape[0], ho, wo, self.out_channels).transpose(0, 3, 1, 2)
        return out, self._ctx(x, cols)

    def backward(self, dout, ctx):
        x, cols = self._unpack(ctx)
        k, s, p = self.kernel, self.stride, self.pad
        n, _, h, wd = x.shape
        ho, wo = dout.shape[2], dout.shape[3]
        if cols is None:
            cols = _im2col(np.pad(x, ((0, 0), (0, 0), (p, p), (p, p))), k, s, ho, wo)
        w = self.params["weight"].data
        d2 = dout.transpose(0, 2, 3, 1).reshape(-1, self.out_channels)
        dw = (d2.T @ cols).reshape(w.shape)
        db = d2.sum(axis=0)
        dcols = (d2 @ w.reshape(self.out_channels, -1)).reshape(n, ho, wo, self.in_channels, k, k)
        dxp = _col2im(dcols, (h + 2 * p, wd + 2 * p), k, s, ho, wo)
        dx = dxp[:, :, p:p + h, p:p + wd]
        return dx, {"weight": dw, "bias": db}


class ConvTranspose2d(Layer):
    kind = "transposed_conv"

    def __init__(self, in_channels, out_channels, kernel=4, stride=2, pad=1, method="im2col"):
        super().__init__()
        if min(in_channels, out_channels) < 1 or kernel < 1 or stride < 1 or pad < 0:
            raise ArgumentError("transposed_conv: channels and kernel must be >= 1, stride >= 1, pad >= 0")
        if method not in ("im2col", "direct"):
            raise ArgumentError(f"transposed_conv: unknown method {method!r}")
        self.in_channels, self.out_channels = in_channels, out_channels
        self.kernel, self.stride, self.pad, self.method = kernel, stride, pad, method
        self.params = {
            "weight": Parameter(np.zeros((in_channels, out_channels, kernel, kernel))),
            "bias": Parameter(np.zeros(out_channels)),
        }

    def _spec_params(self):
        return {"in_channels": self.in_channels, "out_channels": self.out_channels,
                "kernel": self.kernel, "stride": self.stride, "pad": self.pad}

    def init_params(self, rng):
        self.params["weight"].data[...] = rng.normal(0.0, INIT_STD, self.params["weight"].shape)
        self.params["bias"].data[...] = 0.0

    def output_hw(self, h, w):
        return tconv_out_size(h, self.kernel, self.stride, self.pad), tconv_out_size(w, self.kernel, self.stride, self.pad)

    def forward(self, x, train=True):
        _check_4d(self.kind, x, self.in_channels)
        k, s, p = self.kernel, self.stride, self.pad
        n, _, h, wd = x.shape
        ho, wo = self.output_hw(h, wd)
        if ho < 1 or wo < 1:
            raise ShapeError(f"transposed_conv: input {x.shape} gives empty output")
        w, b = self.params["weight"].data, self.params["bias"].data
        if self.method == "direct":
            return conv_transpose2d_direct(x, w, b, s, p), self._ctx(x)
        x2 = x.transpose(0, 2, 3, 1).reshape(-1, self.in_channels)
        cols = (x2 @ w.reshape(self.in_channels, -1)).reshape(n, h, wd, self.out_channels, k, k)
        full = _col2im(cols, ((h - 1) * s + k, (wd - 1) * s + k), k, s, h, wd)
        out = full[:, :, p:p + ho, p:p + wo] + b[None, :, None, None]
        return out, self._ctx(x)

    def backward(self, dout, ctx):
        (x,) = self._unpack(ctx)
        k, s, p = self.kernel, self.stride, self.pad
        n, _, h, wd = x.shape
        w = self.params["weight"].data
        dfull = np.pad(dout, ((0, 0), (0, 0), (p, p), (p, p)))
        dcols = _im2col(dfull, k, s, h, wd)
        x2 = x.transpose(0, 2, 3, 1).reshape(-1, self.in_channels)
        dw = (x2.T @ dcols).reshape(w.shape)
        db = dout.sum(axis=(0, 2, 3))
        dx = (dcols @ w.reshape(self.in_channels, -1).T).reshape(n, h, wd, self.in_channels).transpose(0, 3, 1, 2)
        return dx, {"weight": dw, "bias": db}


class BatchNorm(Layer):
    """Per-channel normalisation over (batch, H, W), or over batch for 2-D input."""

    kind = "batchnorm"

    def __init__(self, num_features, eps=1e-5, momentum=0.1):
        super().__init__()
        if num_features < 1:
            raise ArgumentError("batchnorm: num_features must be >= 1")
        self.num_features, self.eps, self.momentum = num_features, eps, momentum
        self.params = {"gamma": Parameter(np.ones(num_features)), "beta": Parameter(np.zeros(num_features))}
        self.buffers = {"running_mean": np.zeros(num_features), "running_var": np.ones(num_features)}

    def _spec_params(self):
        return {"num_features": self.num_features, "eps": self.eps, "momentum": self.momentum}

    def init_params(self, rng):
        self.params["gamma"].data[...] = 1.0
        self.params["beta"].data[...] = 0.0
        self.buffers["running_mean"][...] = 0.0
        self.buffers["running_var"][...] = 1.0

    def _axes(self, x):
        if x.ndim == 4 and x.shape[1] == self.num_features:
            return (0, 2, 3), (1, -1, 1, 1)
        if x.ndim == 2 and x.shape[1] == self.num_features:
            return (0,), (1, -1)
        raise ShapeError(f"batchnorm: expected (N, {self.num_features}[, H, W]), got {x.shape}")

    def forward(self, x, train=True):
        axes, bshape = self._axes(x)
        gamma = self.params["gamma"].data.reshape(bshape)
        beta = self.params["beta"].data.reshape(bshape)
        if train:
            m = x.size // self.num_features
            mu = x.mean(axis=axes)
            var = x.var(axis=axes)
            unbiased = var * m / (m - 1) if m > 1 else var
            rm, rv = self.buffers["running_mean"], self.buffers["running_var"]
            rm[...] = (1 - self.momentum) * rm + self.momentum * mu
            rv[...] = (1 - self.momentum) * rv + self.momentum * unbiased
        else:
            mu, var = self.buffers["running_mean"], self.buffers["running_var"]
        inv_std = 1.0 / np.sqrt(var + self.eps)
        xhat = (x - mu.reshape(bshape)) * inv_std.reshape(bshape)
        return gamma * xhat + beta, self._ctx(xhat, inv_std, train, axes, bshape)

    def backward(self, dout, ctx):
        xhat, inv_std, train, axes, bshape = self._unpack(ctx)
        gamma = self.params["gamma"].data.reshape(bshape)
        dgamma = (dout * xhat).sum(axis=axes)
        dbeta = dout.sum(axis=axes)
        dxhat = dout * gamma
        if train:
            m = dout.size // self.num_features
            dx = (inv_std.reshape(bshape) / m) * (
                m * dxhat
                - dxhat.sum(axis=axes).reshape(bshape)
                - xhat * (dxhat * xhat).sum(axis=axes).reshape(bshape))
        else:
            dx = dxhat * inv_std.reshape(bshape)
        return dx, {"gamma": dgamma, "beta": dbeta}


class ReLU(Layer):
    kind = "relu"

    def forward(self, x, train=True):
        mask = x > 0
        return x * mask, self._ctx(mask)

    def backward(self, dout, ctx):
        (mask,) = self._unpack(ctx)
        return dout * mask, {}


class LeakyReLU(Layer):
    kind = "leaky_relu"

    def __init__(self, slope=0.2):
        super().__init__()
        self.slope = slope

    def _spec_params(self):
        return {"slope": self.slope}

    def forward(self, x, train=True):
        mask = x > 0
        return np.where(mask, x, self.slope * x), self._ctx(mask)

    def backward(self, dout, ctx):
        (mask,) = self._unpack(ctx)
        return np.where(mask, dout, self.slope * dout), {}


class Tanh(Layer):
    kind = "tanh"

    def forward(self, x, train=True):
        out = np.tanh(x)
        return out, self._ctx(out)

    def backward(self, dout, ctx):
        (out,) = self._unpack(ctx)
        return dout * (1.0 - out * out), {}


def sigmoid(x):
    ex = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + ex), ex / (1.0 + ex))


class Sigmoid(Layer):
    kind = "sigmoid"

    def forward(self, x, train=True):
        out = sigmoid(x)
        return out, self._ctx(out)

    def backward(self, dout, ctx):
        (out,) = self._unpack(ctx)
        return dout * out * (1.0 - out), {}


class Linear(Layer):
    """Affine map on the flattened trailing dimensions: (N, ...) -> (N, out)."""

    kind = "linear"

    def __init__(self, in_features, out_features):
        super().__init__()
        if min(in_features, out_features) < 1:
            raise ArgumentError("linear: feature counts must be >= 1")
        self.in_features, self.out_features = in_features, out_features
        self.params = {"weight": Parameter(np.zeros((in_features, out_features))),
                       "bias": Parameter(np.zeros(out_features))}

    def _spec_params(self):
        return {"in_features": self.in_features, "out_features": self.out_features}

    def init_params(self, rng):
        self.params["weight"].data[...] = rng.normal(0.0, INIT_STD, self.params["weight"].shape)
        self.params["bias"].data[...] = 0.0

    def forward(self, x, train=True):
        flat = x.reshape(x.shape[0], -1)
        if flat.shape[1] != self.in_features:
            raise ShapeError(f"linear: expected {self.in_features} input features, got shape {x.shape}")
        out = flat @ self.params["weight"].data + self.params["bias"].data
        return out, self._ctx(x.shape, flat)

    def backward(self, dout, ctx):
        shape, flat = self._unpack(ctx)
        w = self.params["weight"].data
        return (dout @ w.T).reshape(shape), {"weight": flat.T @ dout, "bias": dout.sum(axis=0)}


class Reshape(Layer):
    """(N, ...) -> (N, *shape); no parameters."""

    kind = "reshape"

    def __init__(self, shape):
        super().__init__()
        self.shape = tuple(int(s) for s in shape)

    def _spec_params(self):
        return {"shape": list(self.shape)}

    def forward(self, x, train=True):
        if int(np.prod(x.shape[1:])) != int(np.prod(self.shape)):
            raise ShapeError(f"reshape: cannot view {x.shape} as (N, {self.shape})")
        return x.reshape((x.shape[0],) + self.shape), self._ctx(x.shape)

    def backward(self, dout, ctx):
        (shape,) = self._unpack(ctx)
        return dout.reshape(shape), {}


LAYER_KINDS = {cls.kind: cls for cls in
               (Conv2d, ConvTranspose2d, BatchNorm, ReLU, LeakyReLU, Tanh, Sigmoid, Linear, Reshape)}


def make_layer(spec: LayerSpec) -> Layer:
    try:
        cls = LAYER_KINDS[spec.kind]
    except KeyError:
        raise ArgumentError(f"unknown layer kind {spec.kind!r}") from None
    return cls(**spec.params)
