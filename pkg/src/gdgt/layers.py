"""Small parameterized layers shared by the encoder, decoder, and DGD blocks.

Each layer owns named :class:`~gdgt.tensor.Parameter` objects and exposes
``params()`` so models can collect a flat, uniquely named registry.
"""

from __future__ import annotations

import numpy as np

from .tensor import (
    Parameter,
    ShapeError,
    Tensor,
    conv2d,
    matmul,
    pad_reflect,
    reshape,
    scale,
    sqrt,
    tmean,
)


class Conv2d:
    """Dense or depthwise convolution layer with optional reflect padding."""

    def __init__(self, name: str, in_ch: int, out_ch: int, kernel: int,
                 rng: np.random.Generator, stride: int = 1,
                 padding: int = 0, pad_mode: str = "zeros",
                 groups: int = 1, bias: bool = True, init: str = "he"):
        self.name = name
        self.stride = stride
        self.padding = padding
        self.pad_mode = pad_mode
        self.groups = groups
        wshape = (out_ch, in_ch // groups, kernel, kernel)
        fan_in = (in_ch // groups) * kernel * kernel
        if init == "he":
            w = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=wshape)
        elif init == "zeros":
            w = np.zeros(wshape)
        elif init == "box":
            w = np.full(wshape, 1.0 / (kernel * kernel))
        else:
            raise ValueError(f"unknown init {init!r}")
        self.weight = Parameter(f"{name}.weight", w)
        self.bias = Parameter(f"{name}.bias", np.zeros(out_ch)) if bias else None

    def params(self) -> list[Parameter]:
        out = [self.weight]
        if self.bias is not None:
            out.append(self.bias)
        return out

    def __call__(self, x: Tensor) -> Tensor:
        pad = self.padding
        if pad and self.pad_mode == "reflect":
            x = pad_reflect(x, pad)
            pad = 0
        return conv2d(x, self.weight.tensor,
                      None if self.bias is None else self.bias.tensor,
                      stride=self.stride, padding=pad, groups=self.groups)


class Linear:
    """Affine map over the last axis of a (..., in_dim) tensor."""

    def __init__(self, name: str, in_dim: int, out_dim: int,
                 rng: np.random.Generator, bias: bool = True):
        self.name = name
        self.in_dim = in_dim
        self.out_dim = out_dim
        limit = np.sqrt(6.0 / (in_dim + out_dim))
        w = rng.uniform(-limit, limit, size=(in_dim, out_dim))
        self.weight = Parameter(f"{name}.weight", w)
        self.bias = Parameter(f"{name}.bias", np.zeros(out_dim)) if bias else None

    def params(self) -> list[Parameter]:
        out = [self.weight]
        if self.bias is not None:
            out.append(self.bias)
        return out

    def __call__(self, x: Tensor) -> Tensor:
        if x.shape[-1] != self.in_dim:
            raise ShapeError(
                f"{self.name}: expected last dim {self.in_dim}, got {x.shape}"
            )
        lead = x.shape[:-1]
        flat = reshape(x, (-1, self.in_dim))
        out = matmul(flat, self.weight.tensor)
        if self.bias is not None:
            out = out + self.bias.tensor
        return reshape(out, lead + (self.out_dim,))


class InstanceNorm:
    """Per-sample, per-channel normalization over the spatial axes.

    Batch-free, so single-scene evaluation statistics match training.
    """

    def __init__(self, name: str, channels: int, eps: float = 1e-5):
        self.name = name
        self.eps = eps
        self.gamma = Parameter(f"{name}.gamma", np.ones(channels))
        self.beta = Parameter(f"{name}.beta", np.zeros(channels))

    def params(self) -> list[Parameter]:
        return [self.gamma, self.beta]

    def __call__(self, x: Tensor) -> Tensor:
        if x.ndim != 4:
            raise ShapeError(f"{self.name}: expected B×C×H×W, got {x.shape}")
        mu = tmean(x, axis=(2, 3), keepdims=True)
        centered = x - mu
        var = tmean(centered * centered, axis=(2, 3), keepdims=True)
        normed = centered / sqrt(var + self.eps)
        return normed * self.gamma.tensor + self.beta.tensor


class LayerNorm:
    """Normalization over the last (embedding) axis of token tensors."""

    def __init__(self, name: str, dim: int, eps: float = 1e-5):
        self.name = name
        self.eps = eps
        self.gamma = Parameter(f"{name}.gamma", np.ones(dim))
        self.beta = Parameter(f"{name}.beta", np.zeros(dim))

    def params(self) -> list[Parameter]:
        return [self.gamma, self.beta]

    def __call__(self, x: Tensor) -> Tensor:
        mu = tmean(x, axis=-1, keepdims=True)
        centered = x - mu
        var = tmean(centered * centered, axis=-1, keepdims=True)
        normed = centered / sqrt(var + self.eps)
        return normed * self.gamma.tensor + self.beta.tensor


def softplus_inverse(value: float) -> float:
    """Raw preactivation r with softplus(r) == value, for seeding positives."""
    if value <= 0.0:
        raise ValueError("softplus_inverse needs a positive target")
    if value > 30.0:  # softplus is the identity well past this point
        return value
    return float(np.log(np.expm1(value)))


def mean_pool_all(x: Tensor) -> Tensor:
    return scale(x.sum(), 1.0 / x.size)
