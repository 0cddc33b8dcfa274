"""Layer primitives: convolution, batch norm, ReLU, pooling, linear, losses.

Every forward function runs on plain numpy arrays and registers its backward
rule on the active tape (see ``autograd``).  Convolution is cross-correlation
(no kernel flip), the universal deep-learning convention, implemented as an
im2col patch gather followed by one GEMM per image.  Subgradients at kinks
(ReLU at 0, max-pool ties) are routed deterministically: ReLU passes zero at
0, max-pool sends the gradient to the first maximum in scan order.
"""
from __future__ import annotations

from typing import Optional

import numpy as np
from numpy.lib.stride_tricks import as_strided

from .autograd import Tensor, parameter, record_op
from .errors import DimensionError, GeometryError, LabelError, StatisticsError


def kaiming_normal(rng: np.random.Generator, shape, fan_in: int, dtype=np.float32) -> np.ndarray:
    """Fan-in scaled normal init, std = sqrt(2 / fan_in)."""
    std = np.sqrt(2.0 / fan_in)
    return (rng.standard_normal(shape) * std).astype(dtype)


# ---------------------------------------------------------------------------
# Activation
# ---------------------------------------------------------------------------

def relu(x: Tensor) -> Tensor:
    """Element-wise max(0, x); gradient passes where x > 0, zero elsewhere."""
    x_data = x.data
    out = np.maximum(x_data, 0)

    def backward_fn(g):
        return (g * (x_data > 0),)

    return record_op("relu", (x,), out, backward_fn,
                     saved=() if x.is_parameter else (x_data,))


# ---------------------------------------------------------------------------
# Convolution
# ---------------------------------------------------------------------------

class Conv2dParams:
    """Weight [oc, ic, kh, kw], bias [oc], stride and symmetric zero padding."""

    def __init__(self, weight: Tensor, bias: Tensor, stride: int = 1, padding: int = 0):
        if weight.data.ndim != 4:
            raise DimensionError(f"conv weight must be 4-d, got shape {tuple(weight.shape)}")
        if bias.data.ndim != 1 or bias.shape[0] != weight.shape[0]:
            raise DimensionError(
                f"conv bias shape {tuple(bias.shape)} does not match {weight.shape[0]} filters")
        if stride < 1 or padding < 0:
            raise GeometryError(f"invalid stride={stride} padding={padding}")
        self.weight = weight
        self.bias = bias
        self.stride = int(stride)
        self.padding = int(padding)

    @classmethod
    def create(cls, rng: np.random.Generator, in_ch: int, out_ch: int, kernel: int,
               stride: int = 1, padding: int = 0, dtype=np.float32) -> "Conv2dParams":
        fan_in = in_ch * kernel * kernel
        w = parameter(kaiming_normal(rng, (out_ch, in_ch, kernel, kernel), fan_in, dtype))
        b = parameter(np.zeros(out_ch, dtype=dtype))
        return cls(w, b, stride=stride, padding=padding)

    def out_size(self, in_h: int, in_w: int) -> tuple[int, int]:
        kh, kw = self.weight.shape[2], self.weight.shape[3]
        oh = (in_h + 2 * self.padding - kh) // self.stride + 1
        ow = (in_w + 2 * self.padding - kw) // self.stride + 1
        return oh, ow


def _im2col(xp: np.ndarray, kh: int, kw: int, stride: int, oh: int, ow: int) -> np.ndarray:
    """Gather [n, c*kh*kw, oh*ow] patch columns from a padded input."""
    n, c, _, _ = xp.shape
    sn, sc, sh, sw = xp.strides
    view = as_strided(
        xp,
        shape=(n, c, kh, kw, oh, ow),
        strides=(sn, sc, sh, sw, stride * sh, stride * sw),
        writeable=False,
    )
    return np.ascontiguousarray(view).reshape(n, c * kh * kw, oh * ow)


def conv2d(x: Tensor, p: Conv2dParams) -> Tensor:
    """Cross-correlation of x [n,c,h,w] with p.weight plus per-channel bias."""
    if x.data.ndim != 4:
        raise DimensionError(f"conv2d input must be 4-d, got shape {tuple(x.shape)}")
    n, c, h, w = x.shape
    oc, ic, kh, kw = p.weight.shape
    if c != ic:
        raise DimensionError(f"conv2d channel mismatch: input has {c}, weight expects {ic}")
    oh, ow = p.out_size(h, w)
    if oh < 1 or ow < 1:
        raise GeometryError(
            f"conv2d output would be {oh}x{ow} for input {h}x{w}, kernel {kh}x{kw}, "
            f"stride {p.stride}, padding {p.padding}")

    stride, pad = p.stride, p.padding
    x_data = x.data
    if pad:
        xp = np.pad(x_data, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    else:
        xp = x_data
    cols = _im2col(xp, kh, kw, stride, oh, ow)
    w2 = p.weight.data.reshape(oc, ic * kh * kw)
    out = np.matmul(w2[None, :, :], cols)
    out += p.bias.data.reshape(1, oc, 1)
    out = out.reshape(n, oc, oh, ow)

    w_data, b_shape = p.weight.data, p.bias.shape

    def backward_fn(g):
        g2 = np.ascontiguousarray(g).reshape(n, oc, oh * ow)
        # weight grad: per-image GEMMs summed over the batch (views only)
        cols2 = _im2col(
            np.pad(x_data, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else x_data,
            kh, kw, stride, oh, ow)
        dw = np.matmul(g2, cols2.transpose(0, 2, 1)).sum(axis=0).reshape(oc, ic, kh, kw)
        db = g2.sum(axis=(0, 2)).reshape(b_shape)
        # input grad: scatter the back-projected columns into the padded frame
        dcols = np.matmul(w2.T[None, :, :], g2).reshape(n, ic, kh, kw, oh, ow)
        dxp = np.zeros((n, ic, h + 2 * pad, w + 2 * pad), dtype=x_data.dtype)
        for i in range(kh):
            for j in range(kw):
                dxp[:, :, i:i + stride * oh:stride, j:j + stride * ow:stride] += dcols[:, :, i, j]
        dx = dxp[:, :, pad:pad + h, pad:pad + w] if pad else dxp
        return dx, dw, db

    return record_op("conv2d", (x, p.weight, p.bias), out, backward_fn,
                     saved=() if x.is_parameter else (x_data,))


def conv2d_naive(x: np.ndarray, weight: np.ndarray, bias: np.ndarray,
                 stride: int = 1, padding: int = 0) -> np.ndarray:
    """Reference 7-deep loop implementation of conv2d; oracle for tests."""
    n, c, h, w = x.shape
    oc, ic, kh, kw = weight.shape
    assert c == ic
    oh = (h + 2 * padding - kh) // stride + 1
    ow = (w + 2 * padding - kw) // stride + 1
    xp = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    out = np.zeros((n, oc, oh, ow), dtype=x.dtype)
    for ni in range(n):
        for oi in range(oc):
            for yi in range(oh):
                for xi in range(ow):
                    acc = bias[oi]
                    for ci in range(ic):
                        for ki in range(kh):
                            for kj in range(kw):
                                acc += (weight[oi, ci, ki, kj]
                                        * xp[ni, ci, yi * stride + ki, xi * stride + kj])
                    out[ni, oi, yi, xi] = acc
    return out


# ---------------------------------------------------------------------------
# Batch normalization
# ---------------------------------------------------------------------------

class BatchNormState:
    """Per-channel affine normalization with tracked running statistics.

    Train mode normalizes with the current batch's (biased) statistics and
    folds them into the running buffers as
    ``run = (1 - momentum) * run + momentum * batch``; eval mode uses the
    running buffers only.
    """

    def __init__(self, channels: int, momentum: float = 0.1, eps: float = 1e-5,
                 dtype=np.float32):
        if not (0.0 < momentum < 1.0):
            raise ValueError(f"momentum must be in (0,1), got {momentum}")
        if eps <= 0:
            raise ValueError(f"eps must be > 0, got {eps}")
        self.gamma = parameter(np.ones(channels, dtype=dtype))
        self.beta = parameter(np.zeros(channels, dtype=dtype))
        self.running_mean = np.zeros(channels, dtype=dtype)
        self.running_var = np.ones(channels, dtype=dtype)
        self.momentum = float(momentum)
        self.eps = float(eps)
        self.training = True


def batch_norm(x: Tensor, s: BatchNormState) -> Tensor:
    """Normalize x [n,c,h,w] per channel; affine scale/shift by gamma/beta."""
    if x.data.ndim != 4:
        raise DimensionError(f"batch_norm input must be 4-d, got shape {tuple(x.shape)}")
    n, c, h, w = x.shape
    if c != s.gamma.shape[0]:
        raise DimensionError(f"batch_norm channel mismatch: input {c}, state {s.gamma.shape[0]}")
    x_data = x.data
    m = n * h * w
    gamma, beta = s.gamma.data, s.beta.data

    if s.training:
        if m < 2:
            raise StatisticsError(f"train-mode batch_norm needs n*h*w >= 2, got {m}")
        mean = x_data.mean(axis=(0, 2, 3))
        var = x_data.var(axis=(0, 2, 3))
        s.running_mean = ((1 - s.momentum) * s.running_mean
                          + s.momentum * mean).astype(x_data.dtype)
        s.running_var = ((1 - s.momentum) * s.running_var
                         + s.momentum * var).astype(x_data.dtype)
    else:
        mean = s.running_mean.astype(x_data.dtype)
        var = s.running_var.astype(x_data.dtype)

    inv_std = 1.0 / np.sqrt(var + s.eps)
    x_hat = (x_data - mean.reshape(1, c, 1, 1)) * inv_std.reshape(1, c, 1, 1)
    out = gamma.reshape(1, c, 1, 1) * x_hat + beta.reshape(1, c, 1, 1)
    training = s.training

    def backward_fn(g):
        dgamma = (g * x_hat).sum(axis=(0, 2, 3))
        dbeta = g.sum(axis=(0, 2, 3))
        coef = (gamma * inv_std).reshape(1, c, 1, 1)
        if training:
            # batch statistics depend on x, so their gradients feed back in
            dx = (coef / m) * (m * g
                               - dbeta.reshape(1, c, 1, 1)
                               - x_hat * dgamma.reshape(1, c, 1, 1))
        else:
            dx = coef * g
        return dx, dgamma.astype(gamma.dtype), dbeta.astype(gamma.dtype)

    # inv_std is an O(channels) statistics vector, not an activation buffer,
    # so only x_hat counts toward retained-activation accounting.
    return record_op("batch_norm", (x, s.gamma, s.beta), out, backward_fn,
                     saved=(x_hat,))


# ---------------------------------------------------------------------------
# Pooling
# ---------------------------------------------------------------------------

def max_pool2d(x: Tensor) -> Tensor:
    """2x2 max pooling with stride 2; h and w must be even.

    Ties send the gradient to the first maximum in row-major window order.
    """
    if x.data.ndim != 4:
        raise DimensionError(f"max_pool2d input must be 4-d, got shape {tuple(x.shape)}")
    n, c, h, w = x.shape
    if h % 2 or w % 2 or h < 2 or w < 2:
        raise GeometryError(f"max_pool2d needs even spatial dims >= 2, got {h}x{w}")
    oh, ow = h // 2, w // 2
    windows = x.data.reshape(n, c, oh, 2, ow, 2).transpose(0, 1, 2, 4, 3, 5).reshape(
        n, c, oh, ow, 4)
    idx = windows.argmax(axis=-1)  # argmax picks the first max on ties
    out = np.take_along_axis(windows, idx[..., None], axis=-1)[..., 0]
    dtype = x.data.dtype

    def backward_fn(g):
        dwin = np.zeros((n, c, oh, ow, 4), dtype=dtype)
        np.put_along_axis(dwin, idx[..., None], g[..., None], axis=-1)
        return (dwin.reshape(n, c, oh, ow, 2, 2).transpose(0, 1, 2, 4, 3, 5)
                .reshape(n, c, h, w),)

    return record_op("max_pool2d", (x,), out, backward_fn, saved=(idx,))


def global_avg_pool(x: Tensor) -> Tensor:
    """Mean over the spatial axes: [n,c,h,w] -> [n,c]."""
    if x.data.ndim != 4:
        raise DimensionError(f"global_avg_pool input must be 4-d, got shape {tuple(x.shape)}")
    n, c, h, w = x.shape
    out = x.data.mean(axis=(2, 3))
    area = h * w
    dtype = x.data.dtype

    def backward_fn(g):
        return (np.broadcast_to((g / area)[:, :, None, None], (n, c, h, w)).astype(dtype),)

    return record_op("global_avg_pool", (x,), out, backward_fn)


# ---------------------------------------------------------------------------
# Linear
# ---------------------------------------------------------------------------

class LinearParams:
    """Affine layer: weight [out, in], bias [out]."""

    def __init__(self, weight: Tensor, bias: Tensor):
        if weight.data.ndim != 2 or bias.data.ndim != 1 or bias.shape[0] != weight.shape[0]:
            raise DimensionError(
                f"linear params mismatch: weight {tuple(weight.shape)}, bias {tuple(bias.shape)}")
        self.weight = weight
        self.bias = bias

    @classmethod
    def create(cls, rng: np.random.Generator, in_features: int, out_features: int,
               dtype=np.float32) -> "LinearParams":
        w = parameter(kaiming_normal(rng, (out_features, in_features), in_features, dtype))
        b = parameter(np.zeros(out_features, dtype=dtype))
        return cls(w, b)


def linear(x: Tensor, p: LinearParams) -> Tensor:
    """x [n, in] -> x @ W.T + b, with bias broadcast over the batch axis."""
    if x.data.ndim != 2 or x.shape[1] != p.weight.shape[1]:
        raise DimensionError(
            f"linear dimension mismatch: input {tuple(x.shape)}, weight {tuple(p.weight.shape)}")
    x_data, w_data = x.data, p.weight.data
    out = x_data @ w_data.T + p.bias.data

    def backward_fn(g):
        return g @ w_data, g.T @ x_data, g.sum(axis=0)

    return record_op("linear", (x, p.weight, p.bias), out, backward_fn,
                     saved=() if x.is_parameter else (x_data,))


# ---------------------------------------------------------------------------
# Loss
# ---------------------------------------------------------------------------

def softmax_cross_entropy(logits: Tensor, labels) -> tuple[Tensor, Tensor]:
    """Mean cross entropy over the batch plus the softmax probabilities.

    Computed with max-subtraction for stability. The returned probability
    tensor is detached; gradients flow through the loss only, as
    (probs - onehot) / n.
    """
    if logits.data.ndim != 2:
        raise DimensionError(f"logits must be [n,k], got shape {tuple(logits.shape)}")
    labels = np.asarray(labels, dtype=np.int64)
    n, k = logits.shape
    if labels.shape != (n,):
        raise DimensionError(f"labels must have shape ({n},), got {labels.shape}")
    if labels.size and (labels.min() < 0 or labels.max() >= k):
        raise LabelError(f"labels must lie in [0, {k}), got range "
                         f"[{labels.min()}, {labels.max()}]")

    z = logits.data
    shifted = z - z.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    probs = exp / exp.sum(axis=1, keepdims=True)
    nll = -(shifted[np.arange(n), labels] - np.log(exp.sum(axis=1)))
    loss_value = np.asarray(nll.mean(), dtype=z.dtype).reshape(())

    def backward_fn(g):
        dz = probs.copy()
        dz[np.arange(n), labels] -= 1.0
        dz *= (g / n)
        return (dz.astype(z.dtype),)

    loss = record_op("softmax_cross_entropy", (logits,), loss_value, backward_fn,
                     saved=(probs,))
    return loss, Tensor(probs.astype(z.dtype))


def softmax_probs(logits: np.ndarray) -> np.ndarray:
    """Row-wise stable softmax for inference paths (no tape interaction)."""
    shifted = logits - logits.max(axis=-1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=-1, keepdims=True)


# ---------------------------------------------------------------------------
# Residual block
# ---------------------------------------------------------------------------

class ResidualBlockParams:
    """Two 3x3 conv+BN stages with an identity or projection shortcut.

    The projection (1x1 conv + BN) is used when the channel count or stride
    changes, so the shortcut output always matches the branch output shape.
    """

    def __init__(self, conv1: Conv2dParams, bn1: BatchNormState,
                 conv2: Conv2dParams, bn2: BatchNormState,
                 shortcut_conv: Optional[Conv2dParams] = None,
                 shortcut_bn: Optional[BatchNormState] = None):
        if (shortcut_conv is None) != (shortcut_bn is None):
            raise ValueError("projection shortcut needs both its conv and its BN")
        self.conv1 = conv1
        self.bn1 = bn1
        self.conv2 = conv2
        self.bn2 = bn2
        self.shortcut_conv = shortcut_conv
        self.shortcut_bn = shortcut_bn

    @classmethod
    def create(cls, rng: np.random.Generator, in_ch: int, out_ch: int, stride: int = 1,
               dtype=np.float32) -> "ResidualBlockParams":
        conv1 = Conv2dParams.create(rng, in_ch, out_ch, 3, stride=stride, padding=1, dtype=dtype)
        bn1 = BatchNormState(out_ch, dtype=dtype)
        conv2 = Conv2dParams.create(rng, out_ch, out_ch, 3, stride=1, padding=1, dtype=dtype)
        bn2 = BatchNormState(out_ch, dtype=dtype)
        if stride != 1 or in_ch != out_ch:
            sc = Conv2dParams.create(rng, in_ch, out_ch, 1, stride=stride, padding=0, dtype=dtype)
            sbn = BatchNormState(out_ch, dtype=dtype)
        else:
            sc, sbn = None, None
        return cls(conv1, bn1, conv2, bn2, sc, sbn)

    @property
    def has_projection(self) -> bool:
        return self.shortcut_conv is not None


def residual_block_forward(x: Tensor, p: ResidualBlockParams) -> Tensor:
    """relu( BN2(conv2(relu(BN1(conv1(x))))) + shortcut(x) ).

    The gradient flows through both the residual branch and the shortcut.
    """
    from .autograd import add  # local import keeps module load order simple

    branch = relu(batch_norm(conv2d(x, p.conv1), p.bn1))
    branch = batch_norm(conv2d(branch, p.conv2), p.bn2)
    if p.has_projection:
        shortcut = batch_norm(conv2d(x, p.shortcut_conv), p.shortcut_bn)
    else:
        shortcut = x
    if branch.shape != shortcut.shape:
        raise GeometryError(
            f"residual branch shape {tuple(branch.shape)} does not match "
            f"shortcut shape {tuple(shortcut.shape)}")
    return relu(add(branch, shortcut))
