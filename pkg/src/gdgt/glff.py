"""Global-local feature fusion: windowed self-attention beside a conv branch.

Feature maps are cut into non-overlapping window×window groups; scaled
dot-product attention runs inside each group independently, followed by a
feed-forward layer.  A parallel depthwise+pointwise convolution branch
keeps local detail.  The two branches are blended by softmax-normalized
fusion weights (a convex combination), and the whole block is wrapped in a
single residual connection.
"""

from __future__ import annotations

import numpy as np

from .layers import Conv2d, LayerNorm, Linear
from .tensor import (
    Parameter,
    ShapeError,
    Tensor,
    matmul,
    relu,
    reshape,
    scale,
    softmax,
    transpose,
    tsum,
)


class GlffParams:
    """Learnable state of one fusion block.

    ``use_local_fusion=False`` degrades the block to a plain windowed
    transformer (attention + feed-forward only), which is the ablation
    baseline decoder.  ``per_channel_fusion`` widens the two fusion logits
    to one pair per channel.
    """

    def __init__(self, name: str, channels: int, rng: np.random.Generator,
                 window: int = 4, heads: int = 2, ffn_ratio: int = 2,
                 use_local_fusion: bool = True,
                 per_channel_fusion: bool = False):
        if channels % heads:
            raise ShapeError(
                f"embedding dim {channels} not divisible by {heads} heads"
            )
        self.name = name
        self.channels = channels
        self.window = window
        self.heads = heads
        self.use_local_fusion = use_local_fusion
        self.per_channel_fusion = per_channel_fusion

        self.ln_attn = LayerNorm(f"{name}.ln_attn", channels)
        self.q_proj = Linear(f"{name}.q_proj", channels, channels, rng)
        self.k_proj = Linear(f"{name}.k_proj", channels, channels, rng)
        self.v_proj = Linear(f"{name}.v_proj", channels, channels, rng)
        self.out_proj = Linear(f"{name}.out_proj", channels, channels, rng)
        self.ln_ffn = LayerNorm(f"{name}.ln_ffn", channels)
        hidden = ffn_ratio * channels
        self.ffn_in = Linear(f"{name}.ffn_in", channels, hidden, rng)
        self.ffn_out = Linear(f"{name}.ffn_out", hidden, channels, rng)

        if use_local_fusion:
            self.local_dw = Conv2d(f"{name}.local_dw", channels, channels, 3,
                                   rng, padding=1, pad_mode="reflect",
                                   groups=channels)
            self.local_pw = Conv2d(f"{name}.local_pw", channels, channels, 1,
                                   rng)
            logits_shape = (2, channels) if per_channel_fusion else (2,)
            self.fusion_logits = Parameter(f"{name}.fusion_logits",
                                           np.zeros(logits_shape))
        else:
            self.local_dw = None
            self.local_pw = None
            self.fusion_logits = None

    def params(self) -> list[Parameter]:
        out = (self.ln_attn.params() + self.q_proj.params()
               + self.k_proj.params() + self.v_proj.params()
               + self.out_proj.params() + self.ln_ffn.params()
               + self.ffn_in.params() + self.ffn_out.params())
        if self.use_local_fusion:
            out += self.local_dw.params() + self.local_pw.params()
            out.append(self.fusion_logits)
        return out

    def fusion_weights(self) -> Tensor:
        """Softmax of the fusion logits: entries in (0,1) summing to one."""
        if self.fusion_logits is None:
            raise ShapeError("this block was built without a fusion branch")
        return softmax(self.fusion_logits.tensor, axis=0)


def patch_embed(x: Tensor, window: int) -> Tensor:
    """Group a B×C×H×W map into (B·nWin) × window² × C token batches."""
    if x.ndim != 4:
        raise ShapeError(f"patch_embed expects B×C×H×W, got {x.shape}")
    b, c, h, w = x.shape
    if h % window or w % window:
        raise ShapeError(
            f"spatial dims {h}x{w} not divisible by window {window}"
        )
    nh, nw = h // window, w // window
    t = reshape(x, (b, c, nh, window, nw, window))
    t = transpose(t, (0, 2, 4, 3, 5, 1))
    return reshape(t, (b * nh * nw, window * window, c))


def patch_unembed(tokens: Tensor, like_shape: tuple[int, ...],
                  window: int) -> Tensor:
    """Invert :func:`patch_embed` back onto a B×C×H×W canvas."""
    b, c, h, w = like_shape
    nh, nw = h // window, w // window
    t = reshape(tokens, (b, nh, nw, window, window, c))
    t = transpose(t, (0, 5, 1, 3, 2, 4))
    return reshape(t, (b, c, h, w))


def multi_head_attention(tokens: Tensor, params: GlffParams) -> Tensor:
    """Scaled dot-product attention within each token group."""
    g, t, c = tokens.shape
    if c != params.channels:
        raise ShapeError(f"token dim {c} != embedding dim {params.channels}")
    heads = params.heads
    d_head = c // heads

    def split_heads(x: Tensor) -> Tensor:
        x = reshape(x, (g, t, heads, d_head))
        return transpose(x, (0, 2, 1, 3))

    q = split_heads(params.q_proj(tokens))
    k = split_heads(params.k_proj(tokens))
    v = split_heads(params.v_proj(tokens))

    scores = scale(matmul(q, transpose(k, (0, 1, 3, 2))),
                   1.0 / np.sqrt(d_head))
    attn = softmax(scores, axis=-1)
    mixed = matmul(attn, v)
    mixed = reshape(transpose(mixed, (0, 2, 1, 3)), (g, t, c))
    return params.out_proj(mixed)


def local_branch(x: Tensor, params: GlffParams) -> Tensor:
    """Depthwise 3x3 (reflect padding), relu, then pointwise 1x1."""
    if params.local_dw is None:
        raise ShapeError("this block was built without a local branch")
    return params.local_pw(relu(params.local_dw(x)))


def fuse(global_feat: Tensor, local_feat: Tensor,
         params: GlffParams) -> Tensor:
    """Convex combination of the two branches under softmax weights."""
    if global_feat.shape != local_feat.shape:
        raise ShapeError(
            f"fusion operands differ: {global_feat.shape} vs {local_feat.shape}"
        )
    weights = params.fusion_weights()
    if params.per_channel_fusion:
        mask_g = Tensor(np.array([[1.0], [0.0]]))
        mask_l = Tensor(np.array([[0.0], [1.0]]))
        w_g = tsum(weights * mask_g, axis=0)  # (C,), broadcasts per channel
        w_l = tsum(weights * mask_l, axis=0)
    else:
        w_g = tsum(weights * Tensor(np.array([1.0, 0.0])))
        w_l = tsum(weights * Tensor(np.array([0.0, 1.0])))
    return global_feat * w_g + local_feat * w_l


def _global_branch(x: Tensor, params: GlffParams) -> Tensor:
    tokens = patch_embed(x, params.window)
    tokens = multi_head_attention(params.ln_attn(tokens), params)
    tokens = params.ffn_out(relu(params.ffn_in(params.ln_ffn(tokens))))
    return patch_unembed(tokens, x.shape, params.window)


def glff_forward(x: Tensor, params: GlffParams) -> Tensor:
    """One fusion block: residual around attention/conv branches and fusion."""
    global_feat = _global_branch(x, params)
    if not params.use_local_fusion:
        return x + global_feat
    local_feat = local_branch(x, params)
    return x + fuse(global_feat, local_feat, params)
