"""Differentiable layers with explicit reverse-mode backward passes.

Every layer is a :class:`Module` with ``forward(x, params) -> (y, cache)``
and ``backward(dy, cache, params, grads) -> dx``. Parameters live in one
global list of arrays (views into a flat vector, see ``model.py``); each
module is bound to its slot indices once at model build time. Backward
passes accumulate into ``grads`` with ``+=`` so shared inputs simply add.

All math runs in the dtype of the incoming arrays: float32 during
training, float64 for finite-difference gradient checks.

Tensors are plain numpy arrays shaped (N, C, D, H, W) for fields and
(N, F) for vectors.
"""

from __future__ import annotations

import math

import numpy as np

from ..errors import ShapeError

__all__ = [
    "Module",
    "ParamSpec",
    "Conv3d",
    "Linear",
    "Flatten",
    "ReLU",
    "SiLU",
    "Tanhshrink",
    "AvgPool3d",
    "GlobalAvgPool",
    "GroupNorm",
    "LayerNorm",
    "ResidualBlock",
    "SelfAttention3d",
    "Sum2",
    "Sequential",
    "bind_modules",
]


class ParamSpec:
    """Shape and initializer of one learnable array."""

    def __init__(self, name: str, shape: tuple[int, ...], init: str, fan_in: int = 0):
        self.name = name
        self.shape = tuple(shape)
        self.init = init
        self.fan_in = fan_in
        self.size = int(np.prod(shape))

    def initial(self, rng: np.random.Generator, dtype=np.float32) -> np.ndarray:
        if self.init == "he_uniform":
            bound = math.sqrt(6.0 / self.fan_in)
            return rng.uniform(-bound, bound, size=self.shape).astype(dtype)
        if self.init == "zeros":
            return np.zeros(self.shape, dtype=dtype)
        if self.init == "ones":
            return np.ones(self.shape, dtype=dtype)
        raise ValueError(f"unknown initializer {self.init!r}")


class Module:
    """Base class; subclasses override the four methods they need."""

    def __init__(self):
        self.slots: list[int] = []

    def param_specs(self) -> list[ParamSpec]:
        return []

    def children(self) -> list["Module"]:
        return []

    def forward(self, x, params):
        raise NotImplementedError

    def backward(self, dy, cache, params, grads):
        raise NotImplementedError

    def out_shape(self, shape):
        """Output shape for one input shape (no batch dimension)."""
        return shape

    def label(self) -> str:
        return type(self).__name__


def bind_modules(root: Module) -> list[ParamSpec]:
    """Assign global slot indices to every module, pre-order; return specs."""
    specs: list[ParamSpec] = []

    def walk(module: Module, path: str):
        own = module.param_specs()
        module.slots = list(range(len(specs), len(specs) + len(own)))
        for spec in own:
            spec.name = f"{path}.{spec.name}" if path else spec.name
        specs.extend(own)
        for i, child in enumerate(module.children()):
            walk(child, f"{path}.{i}:{child.label()}" if path else f"{i}:{child.label()}")

    walk(root, "")
    return specs


def _check5d(x, who: str):
    if x.ndim != 5:
        raise ShapeError(f"{who} expects a (N, C, D, H, W) input, got shape {x.shape}")


class Conv3d(Module):
    """Padded 3x3x3 convolution (stride 1 or 2), computed as 27 shifted GEMMs."""

    def __init__(self, in_ch: int, out_ch: int, stride: int = 1, kernel: int = 3,
                 pad: int = 1):
        super().__init__()
        self.in_ch = in_ch
        self.out_ch = out_ch
        self.k = kernel
        self.stride = stride
        self.pad = pad

    def label(self):
        return f"Conv3d({self.in_ch}->{self.out_ch},s{self.stride})"

    def param_specs(self):
        fan_in = self.in_ch * self.k ** 3
        return [
            ParamSpec("weight", (self.out_ch, self.in_ch, self.k, self.k, self.k),
                      "he_uniform", fan_in),
            ParamSpec("bias", (self.out_ch,), "zeros"),
        ]

    def _out_dims(self, dims):
        return tuple((d + 2 * self.pad - self.k) // self.stride + 1 for d in dims)

    def out_shape(self, shape):
        c, *dims = shape
        if c != self.in_ch:
            raise ShapeError(f"{self.label()} got {c} input channels")
        return (self.out_ch,) + self._out_dims(dims)

    def _windows(self, xp, dims_out):
        """Strided (N, Cin, Do, Ho, Wo, k, k, k) view of the padded input."""
        win = np.lib.stride_tricks.sliding_window_view(
            xp, (self.k, self.k, self.k), axis=(2, 3, 4)
        )
        s = self.stride
        return win[:, :, ::s, ::s, ::s][:, :, :dims_out[0], :dims_out[1], :dims_out[2]]

    def forward(self, x, params):
        _check5d(x, self.label())
        if x.shape[1] != self.in_ch:
            raise ShapeError(f"{self.label()} got {x.shape[1]} input channels")
        w, b = params[self.slots[0]], params[self.slots[1]]
        dims_out = self._out_dims(x.shape[2:])
        p = self.pad

        xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p), (p, p)))
        win = self._windows(xp, dims_out)
        y = np.tensordot(win, w, axes=([1, 5, 6, 7], [1, 2, 3, 4]))  # (N,Do,Ho,Wo,Cout)
        y = np.moveaxis(y, -1, 1)
        y += b[None, :, None, None, None]
        return np.ascontiguousarray(y), (xp, x.shape, dims_out)

    def backward(self, dy, cache, params, grads):
        xp, x_shape, dims_out = cache
        w = params[self.slots[0]]
        n = dy.shape[0]
        v = int(np.prod(dims_out))
        p, s = self.pad, self.stride

        grads[self.slots[1]] += dy.sum(axis=(0, 2, 3, 4))
        win = self._windows(xp, dims_out)
        grads[self.slots[0]] += np.tensordot(dy, win, axes=([0, 2, 3, 4], [0, 2, 3, 4]))

        d, h, ww = x_shape[2:]
        if s == 1:
            # full correlation of dy with the flipped kernel, one GEMM
            e = self.k - 1
            dyp = np.pad(dy, ((0, 0), (0, 0), (e, e), (e, e), (e, e)))
            win_dy = np.lib.stride_tricks.sliding_window_view(
                dyp, (self.k, self.k, self.k), axis=(2, 3, 4)
            )
            w_flip = w[:, :, ::-1, ::-1, ::-1]
            dxp = np.tensordot(win_dy, w_flip, axes=([1, 5, 6, 7], [0, 2, 3, 4]))
            dxp = np.moveaxis(dxp, -1, 1)
            return np.ascontiguousarray(dxp[:, :, p:p + d, p:p + h, p:p + ww])

        # strided conv: scatter each kernel offset back through a slice
        dyf = dy.reshape(n, self.out_ch, v)
        dxp = np.zeros_like(xp)
        for a in range(self.k):
            for bb in range(self.k):
                for c in range(self.k):
                    sl = (
                        slice(None), slice(None),
                        slice(a, a + s * (dims_out[0] - 1) + 1, s),
                        slice(bb, bb + s * (dims_out[1] - 1) + 1, s),
                        slice(c, c + s * (dims_out[2] - 1) + 1, s),
                    )
                    dxp[sl] += np.matmul(w[:, :, a, bb, c].T, dyf).reshape(
                        n, self.in_ch, *dims_out
                    )
        return dxp[:, :, p:p + d, p:p + h, p:p + ww].copy()


class Linear(Module):
    def __init__(self, in_features: int, out_features: int):
        super().__init__()
        self.in_features = in_features
        self.out_features = out_features

    def label(self):
        return f"Linear({self.in_features}->{self.out_features})"

    def param_specs(self):
        return [
            ParamSpec("weight", (self.out_features, self.in_features),
                      "he_uniform", self.in_features),
            ParamSpec("bias", (self.out_features,), "zeros"),
        ]

    def out_shape(self, shape):
        if shape != (self.in_features,):
            raise ShapeError(f"{self.label()} got input shape {shape}")
        return (self.out_features,)

    def forward(self, x, params):
        if x.ndim != 2 or x.shape[1] != self.in_features:
            raise ShapeError(f"{self.label()} got input shape {x.shape}")
        w, b = params[self.slots[0]], params[self.slots[1]]
        return x @ w.T + b, (x,)

    def backward(self, dy, cache, params, grads):
        (x,) = cache
        w = params[self.slots[0]]
        grads[self.slots[0]] += dy.T @ x
        grads[self.slots[1]] += dy.sum(axis=0)
        return dy @ w


class Flatten(Module):
    """(N, C, D, H, W) -> (N, C*D*H*W); shape plumbing before a Linear."""

    def out_shape(self, shape):
        return (int(np.prod(shape)),)

    def forward(self, x, params):
        return x.reshape(x.shape[0], -1), (x.shape,)

    def backward(self, dy, cache, params, grads):
        (shape,) = cache
        return dy.reshape(shape)


class ReLU(Module):
    def forward(self, x, params):
        return np.maximum(x, 0.0), (x > 0,)

    def backward(self, dy, cache, params, grads):
        (mask,) = cache
        return dy * mask


class SiLU(Module):
    def forward(self, x, params):
        sig = 1.0 / (1.0 + np.exp(-x))
        return x * sig, (x, sig)

    def backward(self, dy, cache, params, grads):
        x, sig = cache
        return dy * (sig * (1.0 + x * (1.0 - sig)))


class Tanhshrink(Module):
    def forward(self, x, params):
        t = np.tanh(x)
        return x - t, (t,)

    def backward(self, dy, cache, params, grads):
        (t,) = cache
        return dy * (t * t)


class AvgPool3d(Module):
    """Non-overlapping k^3 mean pooling; dims must divide evenly."""

    def __init__(self, k: int):
        super().__init__()
        self.k = k

    def label(self):
        return f"AvgPool3d({self.k})"

    def out_shape(self, shape):
        c, *dims = shape
        if any(d % self.k for d in dims):
            raise ShapeError(f"{self.label()} needs dims divisible by {self.k}, got {dims}")
        return (c,) + tuple(d // self.k for d in dims)

    def forward(self, x, params):
        _check5d(x, self.label())
        n, c, d, h, w = x.shape
        k = self.k
        if d % k or h % k or w % k:
            raise ShapeError(f"{self.label()} needs dims divisible by {k}, got {x.shape}")
        xr = x.reshape(n, c, d // k, k, h // k, k, w // k, k)
        return xr.mean(axis=(3, 5, 7)), (x.shape,)

    def backward(self, dy, cache, params, grads):
        (shape,) = cache
        k = self.k
        scale = 1.0 / k ** 3
        expanded = np.repeat(np.repeat(np.repeat(dy, k, axis=2), k, axis=3), k, axis=4)
        return (expanded * scale).astype(dy.dtype, copy=False)


class GlobalAvgPool(Module):
    """(N, C, D, H, W) -> (N, C) mean over all voxel positions."""

    def out_shape(self, shape):
        return (shape[0],)

    def forward(self, x, params):
        _check5d(x, self.label())
        return x.mean(axis=(2, 3, 4)), (x.shape,)

    def backward(self, dy, cache, params, grads):
        (shape,) = cache
        v = int(np.prod(shape[2:]))
        return np.broadcast_to(
            (dy / v)[:, :, None, None, None], shape
        ).astype(dy.dtype, copy=False).copy()


def _norm_forward(x2: np.ndarray, eps: float):
    """Normalize rows of (rows, m); returns xhat and backward context."""
    mean = x2.mean(axis=1, keepdims=True)
    centered = x2 - mean
    var = (centered * centered).mean(axis=1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = centered * inv_std
    return xhat, inv_std


def _norm_backward(dxhat: np.ndarray, xhat: np.ndarray, inv_std: np.ndarray):
    """Backward through row normalization given d(xhat)."""
    m = xhat.shape[1]
    s1 = dxhat.sum(axis=1, keepdims=True)
    s2 = (dxhat * xhat).sum(axis=1, keepdims=True)
    return (inv_std / m) * (m * dxhat - s1 - xhat * s2)


class GroupNorm(Module):
    """Normalize over channel groups x positions, then per-channel affine."""

    def __init__(self, groups: int, channels: int, eps: float = 1e-5):
        super().__init__()
        if channels % groups:
            raise ShapeError(f"GroupNorm: {channels} channels not divisible by {groups} groups")
        self.groups = groups
        self.channels = channels
        self.eps = eps

    def label(self):
        return f"GroupNorm({self.groups},{self.channels})"

    def param_specs(self):
        return [
            ParamSpec("gain", (self.channels,), "ones"),
            ParamSpec("bias", (self.channels,), "zeros"),
        ]

    def forward(self, x, params):
        _check5d(x, self.label())
        if x.shape[1] != self.channels:
            raise ShapeError(f"{self.label()} got {x.shape[1]} channels")
        gain, bias = params[self.slots[0]], params[self.slots[1]]
        n = x.shape[0]
        x2 = x.reshape(n * self.groups, -1)
        xhat, inv_std = _norm_forward(x2, self.eps)
        xhat5 = xhat.reshape(x.shape)
        y = xhat5 * gain[None, :, None, None, None] + bias[None, :, None, None, None]
        return y, (xhat, inv_std, x.shape)

    def backward(self, dy, cache, params, grads):
        xhat, inv_std, shape = cache
        gain = params[self.slots[0]]
        xhat5 = xhat.reshape(shape)
        grads[self.slots[0]] += (dy * xhat5).sum(axis=(0, 2, 3, 4))
        grads[self.slots[1]] += dy.sum(axis=(0, 2, 3, 4))
        dxhat = (dy * gain[None, :, None, None, None]).reshape(xhat.shape)
        dx = _norm_backward(dxhat, xhat, inv_std)
        return dx.reshape(shape)


class LayerNorm(Module):
    """Normalize each (N, F) row over features, then per-feature affine."""

    def __init__(self, features: int, eps: float = 1e-5):
        super().__init__()
        self.features = features
        self.eps = eps

    def label(self):
        return f"LayerNorm({self.features})"

    def param_specs(self):
        return [
            ParamSpec("gain", (self.features,), "ones"),
            ParamSpec("bias", (self.features,), "zeros"),
        ]

    def forward(self, x, params):
        if x.ndim != 2 or x.shape[1] != self.features:
            raise ShapeError(f"{self.label()} got input shape {x.shape}")
        gain, bias = params[self.slots[0]], params[self.slots[1]]
        xhat, inv_std = _norm_forward(x, self.eps)
        return xhat * gain + bias, (xhat, inv_std)

    def backward(self, dy, cache, params, grads):
        xhat, inv_std = cache
        gain = params[self.slots[0]]
        grads[self.slots[0]] += (dy * xhat).sum(axis=0)
        grads[self.slots[1]] += dy.sum(axis=0)
        return _norm_backward(dy * gain, xhat, inv_std)


class Sequential(Module):
    def __init__(self, *modules: Module):
        super().__init__()
        self.modules = list(modules)

    def children(self):
        return self.modules

    def out_shape(self, shape):
        for m in self.modules:
            shape = m.out_shape(shape)
        return shape

    def forward(self, x, params):
        caches = []
        for m in self.modules:
            x, cache = m.forward(x, params)
            caches.append(cache)
        return x, caches

    def backward(self, dy, cache, params, grads):
        for m, c in zip(reversed(self.modules), reversed(cache)):
            dy = m.backward(dy, c, params, grads)
        return dy


class ResidualBlock(Module):
    """x + f(x) with f two padded 3x3x3 convolutions.

    With ``groups`` set, f is the pre-norm form GN-SiLU-conv-GN-SiLU-conv;
    without it, f is conv-SiLU-conv-SiLU. Either way, zero-initialized
    convolutions make the block an exact identity.
    """

    def __init__(self, channels: int, groups: int | None = None):
        super().__init__()
        self.channels = channels
        if groups is None:
            body = [Conv3d(channels, channels), SiLU(), Conv3d(channels, channels), SiLU()]
        else:
            body = [
                GroupNorm(groups, channels), SiLU(), Conv3d(channels, channels),
                GroupNorm(groups, channels), SiLU(), Conv3d(channels, channels),
            ]
        self.body = Sequential(*body)

    def label(self):
        return f"ResidualBlock({self.channels})"

    def children(self):
        return [self.body]

    def out_shape(self, shape):
        return self.body.out_shape(shape)

    def forward(self, x, params):
        fx, cache = self.body.forward(x, params)
        return x + fx, cache

    def backward(self, dy, cache, params, grads):
        return dy + self.body.backward(dy, cache, params, grads)


class SelfAttention3d(Module):
    """Residual single-head attention over the voxel positions.

    Pre-normalizes with GroupNorm, projects tokens to queries, keys, and
    values, applies scaled dot-product attention over all D*H*W positions,
    projects the result, and adds it back to the input.
    """

    def __init__(self, channels: int, groups: int):
        super().__init__()
        self.channels = channels
        self.norm = GroupNorm(groups, channels)

    def label(self):
        return f"SelfAttention3d({self.channels})"

    def children(self):
        return [self.norm]

    def param_specs(self):
        c = self.channels
        return [
            ParamSpec("wq", (c, c), "he_uniform", c), ParamSpec("bq", (c,), "zeros"),
            ParamSpec("wk", (c, c), "he_uniform", c), ParamSpec("bk", (c,), "zeros"),
            ParamSpec("wv", (c, c), "he_uniform", c), ParamSpec("bv", (c,), "zeros"),
            ParamSpec("wo", (c, c), "he_uniform", c), ParamSpec("bo", (c,), "zeros"),
        ]

    def forward(self, x, params):
        _check5d(x, self.label())
        n, c = x.shape[:2]
        if c != self.channels:
            raise ShapeError(f"{self.label()} got {c} channels")
        h, norm_cache = self.norm.forward(x, params)
        tokens = h.reshape(n, c, -1).transpose(0, 2, 1)  # (N, V, C)
        wq, bq, wk, bk, wv, bv, wo, bo = (params[s] for s in self.slots)
        q = tokens @ wq.T + bq
        k = tokens @ wk.T + bk
        v = tokens @ wv.T + bv
        scale = 1.0 / math.sqrt(c)
        logits = np.matmul(q, k.transpose(0, 2, 1)) * scale
        logits -= logits.max(axis=2, keepdims=True)
        attn = np.exp(logits)
        attn /= attn.sum(axis=2, keepdims=True)
        ctx = np.matmul(attn, v)                       # (N, V, C)
        out = ctx @ wo.T + bo
        y = x + out.transpose(0, 2, 1).reshape(x.shape)
        return y, (tokens, q, k, v, attn, ctx, norm_cache, x.shape)

    def backward(self, dy, cache, params, grads):
        tokens, q, k, v, attn, ctx, norm_cache, shape = cache
        n, c = shape[:2]
        wq, _, wk, _, wv, _, wo, _ = (params[s] for s in self.slots)
        scale = 1.0 / math.sqrt(c)

        dout = dy.reshape(n, c, -1).transpose(0, 2, 1)  # (N, V, C)
        grads[self.slots[6]] += np.einsum("nvc,nvd->cd", dout, ctx)
        grads[self.slots[7]] += dout.sum(axis=(0, 1))
        dctx = dout @ wo

        dattn = np.matmul(dctx, v.transpose(0, 2, 1))   # (N, V, V)
        dv = np.matmul(attn.transpose(0, 2, 1), dctx)
        # softmax backward per row
        dlogits = attn * (dattn - (dattn * attn).sum(axis=2, keepdims=True))
        dq = np.matmul(dlogits, k) * scale
        dk = np.matmul(dlogits.transpose(0, 2, 1), q) * scale

        dtokens = np.zeros_like(tokens)
        for dz, w, w_slot, b_slot in (
            (dq, wq, 0, 1), (dk, wk, 2, 3), (dv, wv, 4, 5),
        ):
            grads[self.slots[w_slot]] += np.einsum("nvc,nvd->cd", dz, tokens)
            grads[self.slots[b_slot]] += dz.sum(axis=(0, 1))
            dtokens += dz @ w

        dh = dtokens.transpose(0, 2, 1).reshape(shape)
        dx_norm = self.norm.backward(dh, norm_cache, params, grads)
        return dy + dx_norm


class Sum2(Module):
    """Elementwise-sum junction merging two equal-shape branches."""

    def forward(self, xs, params):
        a, b = xs
        if a.shape != b.shape:
            raise ShapeError(f"elementwise sum of shapes {a.shape} and {b.shape}")
        return a + b, ()

    def backward(self, dy, cache, params, grads):
        return dy, dy
