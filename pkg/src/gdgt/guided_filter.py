"""Detail-guided decoding: learnable guided filtering against a wavelet guide.

The chain, for decoder features X (B×C×H×W) and the encoder skip X_res
(B×C×2H×2W):

    guide   Y     = 1x1 conv over the concatenated Haar bands of X_res
    means   mu_X  = f(X),          mu_Y = f(Y)        (learnable mean filter f)
    stats   s_XY  = f(X*Y) - mu_X*mu_Y
            s_Y   = f(Y*Y) - mu_Y*mu_Y
    coeffs  A     = s_XY / (s_Y + eps)
            b     = mu_Y - A * mu_X
    output  Z     = alpha * up(A) * up(X) + up(b) + beta * X_res

eps is a per-channel learnable kept strictly positive through a softplus
reparameterization; alpha and beta are learnable scalars.  The "no_dwt"
guide variant replaces the wavelet bands with a stride-2 1x1 convolution of
X_res at the same output resolution.
"""

from __future__ import annotations

import numpy as np

from .layers import Conv2d, softplus_inverse
from .tensor import Parameter, ShapeError, Tensor, concat, softplus, upsample
from .wavelet import WaveletBands, haar_dwt


class DgdParams:
    """Learnable state of one detail-guided decoding block.

    ``guide_mode`` selects how the guide is built: ``"dwt"`` concatenates
    the four Haar bands of the skip feature (1x1 conv over 4C channels),
    ``"conv"`` downsamples the skip directly (stride-2 1x1 conv over C
    channels).  ``classical_coefficients`` switches the denominator of A
    from var(Y) (the default) to var(X), which recovers the textbook
    guided-filter pairing where X acts as the guide of the linear model.
    """

    def __init__(self, name: str, channels: int, rng: np.random.Generator,
                 guide_mode: str = "dwt", kernel: int = 3,
                 eps_init: float = 1e-2, classical_coefficients: bool = False,
                 upsample_mode: str = "bilinear"):
        if guide_mode not in ("dwt", "conv"):
            raise ValueError(f"unknown guide mode {guide_mode!r}")
        if kernel % 2 == 0:
            raise ValueError("mean filter kernel must be odd for same-padding")
        self.name = name
        self.channels = channels
        self.guide_mode = guide_mode
        self.kernel = kernel
        self.classical_coefficients = classical_coefficients
        self.upsample_mode = upsample_mode
        guide_in = 4 * channels if guide_mode == "dwt" else channels
        guide_stride = 1 if guide_mode == "dwt" else 2
        self.guide_conv = Conv2d(f"{name}.guide_conv", guide_in, channels, 1,
                                 rng, stride=guide_stride)
        # depthwise, boxcar at init so the block starts as a true mean filter
        self.mean_filter = Conv2d(f"{name}.mean_filter", channels, channels,
                                  kernel, rng, padding=kernel // 2,
                                  pad_mode="reflect", groups=channels,
                                  bias=False, init="box")
        self.raw_epsilon = Parameter(
            f"{name}.raw_epsilon",
            np.full(channels, softplus_inverse(eps_init)),
        )
        self.alpha = Parameter(f"{name}.alpha", np.array(1.0))
        self.beta = Parameter(f"{name}.beta", np.array(1.0))

    def params(self) -> list[Parameter]:
        return (self.guide_conv.params() + self.mean_filter.params()
                + [self.raw_epsilon, self.alpha, self.beta])

    def epsilon(self) -> Tensor:
        """The per-channel regularizer, strictly positive by construction."""
        return softplus(self.raw_epsilon.tensor)

    def set_epsilon(self, value: float) -> None:
        """Point the raw parameter at a specific positive regularizer value."""
        self.raw_epsilon.data = np.full(self.channels, softplus_inverse(value))


def build_guide(bands: WaveletBands, params: DgdParams) -> Tensor:
    """Map the concatenated Haar bands to guide features via 1x1 conv."""
    if params.guide_mode != "dwt":
        raise ShapeError("build_guide needs a DgdParams in 'dwt' guide mode")
    if bands.ll.shape[1] != params.channels:
        raise ShapeError(
            f"guide expects {params.channels} channels per band, "
            f"got {bands.ll.shape[1]}"
        )
    stacked = concat(bands.as_tuple(), axis=1)
    return params.guide_conv(stacked)


def downsampled_guide(x_res: Tensor, params: DgdParams) -> Tensor:
    """The wavelet-free guide: stride-2 1x1 convolution of the skip feature."""
    if params.guide_mode != "conv":
        raise ShapeError("downsampled_guide needs a DgdParams in 'conv' mode")
    if x_res.shape[1] != params.channels:
        raise ShapeError(
            f"guide expects {params.channels} channels, got {x_res.shape[1]}"
        )
    return params.guide_conv(x_res)


def learnable_mean(x: Tensor, params: DgdParams) -> Tensor:
    """Apply the depthwise mean filter (a boxcar at initialization)."""
    return params.mean_filter(x)


def local_statistics(x: Tensor, y: Tensor, params: DgdParams,
                     mu_x: Tensor | None = None,
                     mu_y: Tensor | None = None) -> tuple[Tensor, Tensor]:
    """Windowed covariance of (x, y) and variance of y under the mean filter."""
    if x.shape != y.shape:
        raise ShapeError(f"statistics need equal shapes, got {x.shape} vs {y.shape}")
    if mu_x is None:
        mu_x = learnable_mean(x, params)
    if mu_y is None:
        mu_y = learnable_mean(y, params)
    sigma_xy = learnable_mean(x * y, params) - mu_x * mu_y
    sigma_y = learnable_mean(y * y, params) - mu_y * mu_y
    return sigma_xy, sigma_y


def guided_coefficients(sigma_xy: Tensor, sigma_y: Tensor, mu_x: Tensor,
                        mu_y: Tensor, params: DgdParams) -> tuple[Tensor, Tensor]:
    """A = s_XY / (s_Y + eps) and b = mu_Y - A * mu_X, elementwise.

    The classical variant passes var(X) in the ``sigma_y`` slot; the
    formulas themselves are unchanged.
    """
    a = sigma_xy / (sigma_y + params.epsilon())
    b = mu_y - a * mu_x
    return a, b


def dgd_forward(x_dec: Tensor, x_res: Tensor, params: DgdParams) -> Tensor:
    """Full detail-guided decoding of x_dec against the skip x_res."""
    if x_dec.ndim != 4 or x_res.ndim != 4:
        raise ShapeError("dgd_forward expects 4-d tensors")
    if x_dec.shape[1] != x_res.shape[1]:
        raise ShapeError(
            f"channel counts differ: {x_dec.shape[1]} vs {x_res.shape[1]}"
        )
    if (x_res.shape[2] != 2 * x_dec.shape[2]
            or x_res.shape[3] != 2 * x_dec.shape[3]):
        raise ShapeError(
            f"skip spatial dims {x_res.shape[2:]} must double "
            f"decoder dims {x_dec.shape[2:]}"
        )

    if params.guide_mode == "dwt":
        guide = build_guide(haar_dwt(x_res), params)
    else:
        guide = downsampled_guide(x_res, params)
    if guide.shape != x_dec.shape:
        raise ShapeError(
            f"guide shape {guide.shape} does not match decoder {x_dec.shape}"
        )

    mu_x = learnable_mean(x_dec, params)
    mu_y = learnable_mean(guide, params)
    sigma_xy, sigma_y = local_statistics(x_dec, guide, params,
                                         mu_x=mu_x, mu_y=mu_y)
    if params.classical_coefficients:
        _, sigma_y = local_statistics(x_dec, x_dec, params,
                                      mu_x=mu_x, mu_y=mu_x)
    a, b = guided_coefficients(sigma_xy, sigma_y, mu_x, mu_y, params)

    up = lambda t: upsample(t, 2, params.upsample_mode)
    return (params.alpha.tensor * up(a) * up(x_dec) + up(b)
            + params.beta.tensor * x_res)
