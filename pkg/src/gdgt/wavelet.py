"""Unnormalized 2x2 Haar decomposition of feature maps.

Each disjoint 2x2 block (a=top-left, b=top-right, c=bottom-left,
d=bottom-right) yields

    LL =  a + b + c + d
    LH = -a - b + c + d
    HL = -a + b - c + d
    HH =  a - b - c + d

No 1/2 scaling is applied, so the LL of a constant block of value v is 4v,
and the four-band energy equals four times the input energy.  The inverse
exists for verification only; the network never reconstructs.
"""

from __future__ import annotations

from dataclasses import dataclass

from .tensor import ShapeError, Tensor, assemble2x2, pick2x2, scale


@dataclass
class WaveletBands:
    """The four Haar components of one feature map, each B×C×(H/2)×(W/2)."""

    ll: Tensor
    lh: Tensor
    hl: Tensor
    hh: Tensor

    def __post_init__(self):
        shape = self.ll.shape
        for band in (self.lh, self.hl, self.hh):
            if band.shape != shape:
                raise ShapeError(
                    f"wavelet bands disagree in shape: {shape} vs {band.shape}"
                )

    @property
    def shape(self):
        return self.ll.shape

    def as_tuple(self):
        return (self.ll, self.lh, self.hl, self.hh)


def haar_dwt(x: Tensor) -> WaveletBands:
    """Decompose a B×C×H×W tensor with even H, W into its four Haar bands."""
    if x.ndim != 4:
        raise ShapeError(f"haar_dwt expects a 4-d tensor, got {x.shape}")
    if x.shape[2] % 2 or x.shape[3] % 2:
        raise ShapeError(
            f"haar_dwt needs even spatial dims, got {x.shape[2]}x{x.shape[3]}; "
            "pad before decomposing"
        )
    a = pick2x2(x, 0, 0)
    b = pick2x2(x, 0, 1)
    c = pick2x2(x, 1, 0)
    d = pick2x2(x, 1, 1)
    ll = a + b + c + d
    lh = -a - b + c + d
    hl = -a + b - c + d
    hh = a - b - c + d
    return WaveletBands(ll=ll, lh=lh, hl=hl, hh=hh)


def inverse_haar_dwt(bands: WaveletBands) -> Tensor:
    """Rebuild the original map from its four bands (exact up to rounding)."""
    ll, lh, hl, hh = bands.as_tuple()
    a = scale(ll - lh - hl + hh, 0.25)
    b = scale(ll - lh + hl - hh, 0.25)
    c = scale(ll + lh - hl - hh, 0.25)
    d = scale(ll + lh + hl + hh, 0.25)
    return assemble2x2(a, b, c, d)
