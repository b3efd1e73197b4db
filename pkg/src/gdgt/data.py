"""Scene construction and geometry: synthetic sea-ice imagery, multi-scale
rescaling, overlapping tiling, prediction stitching, and paletted mask I/O.

The synthetic generator stands in for non-public satellite imagery.  It
builds masks by construction (thresholded smooth noise for floes, dilated
halos for thin ice, a jagged land band, pores inside floes), so ground
truth is exact, and forces any missing category with small deterministic
stamps so every scene of size >= 128 (in practice, any generated size)
contains all five labels.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np
from PIL import Image
from scipy import ndimage

from .model import CATEGORY_NAMES, NUM_CATEGORIES

SEA, THIN_ICE, THICK_ICE, LAND, POOL_ICE = range(NUM_CATEGORIES)

# bit-exact mask file palette, category index -> RGB
PALETTE = (
    (0, 0, 128),      # Sea
    (135, 206, 235),  # Thin-Ice
    (255, 255, 255),  # Thick-Ice
    (139, 69, 19),    # Land
    (70, 130, 180),   # Pool-Ice
)

PAPER_SCALE_RATIOS = (0.25, 0.50, 1.00, 1.50)
PAPER_TILE_SIZE = 800
PAPER_TILE_OVERLAP = 200

_BASE_COLORS = np.array([
    [0.06, 0.11, 0.26],  # sea: dark blue
    [0.55, 0.68, 0.76],  # thin ice: pale grey-cyan
    [0.89, 0.92, 0.95],  # thick ice: near white
    [0.42, 0.30, 0.16],  # land: brown
    [0.17, 0.27, 0.44],  # pool ice: muted blue
])


@dataclass
class Scene:
    """One image/mask pair with provenance metadata."""

    image: np.ndarray  # (3, H, W) float64 in [0, 1]
    mask: np.ndarray   # (H, W) int64 labels < NUM_CATEGORIES
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.image = np.asarray(self.image, dtype=np.float64)
        self.mask = np.asarray(self.mask, dtype=np.int64)
        if self.image.ndim != 3 or self.image.shape[0] != 3:
            raise ValueError(f"image must be 3×H×W, got {self.image.shape}")
        if self.mask.shape != self.image.shape[1:]:
            raise ValueError(
                f"mask {self.mask.shape} does not match image "
                f"{self.image.shape[1:]}"
            )

    @property
    def height(self) -> int:
        return self.image.shape[1]

    @property
    def width(self) -> int:
        return self.image.shape[2]


@dataclass
class Tile:
    image: np.ndarray
    mask: np.ndarray
    row: int
    col: int


@dataclass
class TileSet:
    tiles: list
    tile_size: int
    overlap: int
    source_hw: tuple[int, int]


# ---------------------------------------------------------------------------
# resampling (corner-aligned, 64-bit; labels use nearest so values survive)


def _grid(n_in: int, n_out: int) -> np.ndarray:
    if n_out == 1 or n_in == 1:
        return np.zeros(n_out)
    return np.arange(n_out) * ((n_in - 1) / (n_out - 1))


def bilinear_resize(image: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Resize a (C, H, W) float array with corner-aligned interpolation."""
    image = np.asarray(image, dtype=np.float64)
    c, h, w = image.shape
    if (out_h, out_w) == (h, w):
        return image.copy()
    si = _grid(h, out_h)
    sj = _grid(w, out_w)
    i0 = np.minimum(np.floor(si).astype(np.intp), max(h - 2, 0))
    j0 = np.minimum(np.floor(sj).astype(np.intp), max(w - 2, 0))
    i1 = np.minimum(i0 + 1, h - 1)
    j1 = np.minimum(j0 + 1, w - 1)
    fi = (si - i0)[None, :, None]
    fj = (sj - j0)[None, None, :]
    top = image[:, i0[:, None], j0[None, :]] * (1 - fj) + \
        image[:, i0[:, None], j1[None, :]] * fj
    bot = image[:, i1[:, None], j0[None, :]] * (1 - fj) + \
        image[:, i1[:, None], j1[None, :]] * fj
    return top * (1 - fi) + bot * fi


def nearest_resize(mask: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    mask = np.asarray(mask)
    h, w = mask.shape
    if (out_h, out_w) == (h, w):
        return mask.copy()
    ii = np.floor(_grid(h, out_h) + 0.5).astype(np.intp)
    jj = np.floor(_grid(w, out_w) + 0.5).astype(np.intp)
    return mask[np.clip(ii, 0, h - 1)[:, None], np.clip(jj, 0, w - 1)[None, :]]


def multiscale_rescale(scene: Scene, ratios=PAPER_SCALE_RATIOS) -> list[Scene]:
    """Rescale one scene to each ratio (bilinear image, nearest mask)."""
    out = []
    for ratio in ratios:
        if ratio <= 0:
            raise ValueError(f"scale ratio must be positive, got {ratio}")
        oh = int(round(scene.height * ratio))
        ow = int(round(scene.width * ratio))
        if oh < 2 or ow < 2:
            raise ValueError(
                f"ratio {ratio} shrinks {scene.height}x{scene.width} below 2px"
            )
        meta = dict(scene.meta, scale_ratio=ratio)
        if ratio == 1.0:
            out.append(Scene(scene.image.copy(), scene.mask.copy(), meta))
            continue
        out.append(Scene(bilinear_resize(scene.image, oh, ow),
                         nearest_resize(scene.mask, oh, ow), meta))
    return out


def resize_to_input(scene: Scene, side: int = 512) -> Scene:
    """Resize a tile/scene to the square model input size."""
    if (scene.height, scene.width) == (side, side):
        return Scene(scene.image.copy(), scene.mask.copy(), dict(scene.meta))
    return Scene(bilinear_resize(scene.image, side, side),
                 nearest_resize(scene.mask, side, side), dict(scene.meta))


# ---------------------------------------------------------------------------
# tiling


def _tile_offsets(dim: int, tile: int, stride: int) -> list[int]:
    offsets = list(range(0, dim - tile + 1, stride))
    if offsets[-1] + tile < dim:
        offsets.append(dim - tile)  # clamp the last tile to the edge
    return offsets


def tile_scene(scene: Scene, tile_size: int = PAPER_TILE_SIZE,
               overlap: int = PAPER_TILE_OVERLAP) -> TileSet:
    """Cut a scene into overlapping tiles covering every pixel.

    Interior offsets advance by tile_size - overlap; the final offset per
    axis is clamped so the last tile ends exactly at the image edge.
    Images smaller than one tile are reflect-padded up to tile size.
    """
    if overlap >= tile_size:
        raise ValueError(f"overlap {overlap} must be < tile size {tile_size}")
    image, mask = scene.image, scene.mask
    pad_h = max(0, tile_size - scene.height)
    pad_w = max(0, tile_size - scene.width)
    if pad_h or pad_w:
        image = np.pad(image, ((0, 0), (0, pad_h), (0, pad_w)), mode="reflect")
        mask = np.pad(mask, ((0, pad_h), (0, pad_w)), mode="reflect")
    h, w = mask.shape
    stride = tile_size - overlap
    tiles = []
    for r in _tile_offsets(h, tile_size, stride):
        for c in _tile_offsets(w, tile_size, stride):
            tiles.append(Tile(
                image=image[:, r:r + tile_size, c:c + tile_size].copy(),
                mask=mask[r:r + tile_size, c:c + tile_size].copy(),
                row=r, col=c,
            ))
    return TileSet(tiles=tiles, tile_size=tile_size, overlap=overlap,
                   source_hw=(h, w))


def stitch_predictions(tile_logits, offsets, full_size) -> np.ndarray:
    """Average per-tile logits in overlaps, then take the per-pixel argmax.

    ``tile_logits`` holds (K, th, tw) score maps; ``offsets`` their (row,
    col) anchors; ``full_size`` the (H, W) canvas.  Any uncovered pixel is
    a coverage error.
    """
    h, w = full_size
    tile_logits = [np.asarray(t, dtype=np.float64) for t in tile_logits]
    if not tile_logits:
        raise ValueError("no tiles to stitch")
    k = tile_logits[0].shape[0]
    acc = np.zeros((k, h, w))
    count = np.zeros((h, w))
    for logits, (r, c) in zip(tile_logits, offsets):
        th, tw = logits.shape[1:]
        if r < 0 or c < 0 or r + th > h or c + tw > w:
            raise ValueError(f"tile at ({r},{c}) size {th}x{tw} exceeds canvas")
        acc[:, r:r + th, c:c + tw] += logits
        count[r:r + th, c:c + tw] += 1.0
    if (count == 0).any():
        gaps = int((count == 0).sum())
        raise ValueError(f"tiles leave {gaps} pixels uncovered")
    return np.argmax(acc / count, axis=0)


# ---------------------------------------------------------------------------
# synthetic scenes


def _smooth_field(rng: np.random.Generator, size: int,
                  sigma: float) -> np.ndarray:
    f = ndimage.gaussian_filter(rng.standard_normal((size, size)), sigma,
                                mode="reflect")
    f = f - f.mean()
    s = f.std()
    return f / s if s > 0 else f


def _disk(size: int, center: tuple[int, int], radius: int) -> np.ndarray:
    yy, xx = np.ogrid[:size, :size]
    return (yy - center[0]) ** 2 + (xx - center[1]) ** 2 <= radius ** 2


def synth_scene(seed: int, size: int) -> Scene:
    """Deterministic synthetic sea-ice scene with construction-exact labels."""
    if size < 64:
        raise ValueError(f"synthetic scenes need size >= 64, got {size}")
    rng = np.random.default_rng(seed)

    # all draws happen up front in a fixed order so the scene is a pure
    # function of (seed, size)
    floe_coarse = _smooth_field(rng, size, 0.07 * size)
    floe_fine = _smooth_field(rng, size, 0.015 * size)
    thin_field = _smooth_field(rng, size, 0.05 * size)
    pore_field = _smooth_field(rng, size, max(1.0, 0.01 * size))
    land_side = int(rng.integers(4))
    land_profile = ndimage.gaussian_filter(rng.standard_normal(size),
                                           0.06 * size, mode="reflect")
    illum = _smooth_field(rng, size, 0.25 * size)
    grain = rng.normal(0.0, 0.035, size=(3, size, size))

    floes = 0.78 * floe_coarse + 0.22 * floe_fine
    floes /= max(floes.std(), 1e-9)
    thick = floes > 0.35

    halo = max(2, size // 32)
    thin = ndimage.binary_dilation(thick, iterations=halo) & ~thick
    thin |= (thin_field > 1.3) & ~thick

    core = ndimage.binary_erosion(thick, iterations=max(2, size // 32))
    pools = (pore_field > 1.2) & core

    prof = land_profile - land_profile.min()
    span = prof.max() - prof.min()
    prof = prof / span if span > 0 else prof
    depth = (size * (0.08 + 0.08 * prof)).astype(np.intp)
    rows = np.arange(size)
    if land_side == 0:
        land = rows[:, None] < depth[None, :]
    elif land_side == 1:
        land = rows[:, None] >= (size - depth)[None, :]
    elif land_side == 2:
        land = rows[None, :] < depth[:, None]
    else:
        land = rows[None, :] >= (size - depth)[:, None]

    mask = np.zeros((size, size), dtype=np.int64)
    mask[thin] = THIN_ICE
    mask[thick] = THICK_ICE
    mask[pools] = POOL_ICE
    mask[land] = LAND

    _force_all_categories(mask, size)

    image = _BASE_COLORS[mask].transpose(2, 0, 1).copy()
    image += 0.05 * illum[None, :, :]
    image += 0.04 * floes[None, :, :] * (mask == THICK_ICE)[None, :, :]
    image += 0.05 * pore_field[None, :, :] * (mask == LAND)[None, :, :]
    image += grain
    np.clip(image, 0.0, 1.0, out=image)

    return Scene(image, mask,
                 {"source": f"synth-{seed}", "scale_ratio": 1.0,
                  "crop": (0, 0)})


def _force_all_categories(mask: np.ndarray, size: int) -> None:
    """Stamp small deterministic regions for any label the draw missed."""
    if not (mask == THICK_ICE).any():
        mask[_disk(size, (size // 2, size // 2), size // 6)] = THICK_ICE
    if not (mask == LAND).any():
        mask[:size // 10, :] = LAND
    if not (mask == THIN_ICE).any():
        thick = mask == THICK_ICE
        ring = ndimage.binary_dilation(thick, iterations=max(2, size // 32))
        ring &= ~thick & (mask != LAND)
        mask[ring] = THIN_ICE
    if not (mask == POOL_ICE).any():
        thick = mask == THICK_ICE
        centroid = ndimage.center_of_mass(thick)
        cy, cx = (int(round(v)) for v in centroid)
        pore = _disk(size, (cy, cx), max(2, size // 40)) & thick
        mask[pore] = POOL_ICE
    # terminal guarantee: tiny disjoint stamps along the bottom edge
    stamp = max(4, size // 16)
    for cat in range(NUM_CATEGORIES):
        if not (mask == cat).any():
            col = cat * 2 * stamp
            mask[size - stamp:, col:col + stamp] = cat


def synth_dataset(count: int, size: int, seed: int) -> list[Scene]:
    """Scenes with seeds seed, seed+1, ..., seed+count-1."""
    return [synth_scene(seed + i, size) for i in range(count)]


# ---------------------------------------------------------------------------
# file I/O


class MaskFormatError(ValueError):
    """Raised for mask files carrying colors outside the fixed palette."""


def write_image(path, image: np.ndarray) -> None:
    """Store a (3, H, W) float image as 8-bit RGB PNG."""
    arr = np.clip(np.asarray(image) * 255.0 + 0.5, 0, 255).astype(np.uint8)
    Image.fromarray(arr.transpose(1, 2, 0), mode="RGB").save(path)


def read_image(path) -> np.ndarray:
    """Load an 8-bit RGB image as (3, H, W) floats in [0, 1] (v/255)."""
    with Image.open(path) as img:
        arr = np.asarray(img.convert("RGB"), dtype=np.float64)
    return arr.transpose(2, 0, 1) / 255.0


def write_mask(path, mask: np.ndarray) -> None:
    """Store a label mask as a paletted PNG with the fixed 5-color palette."""
    mask = np.asarray(mask)
    if mask.min() < 0 or mask.max() >= NUM_CATEGORIES:
        raise ValueError("mask labels outside the category range")
    img = Image.fromarray(mask.astype(np.uint8), mode="P")
    flat_palette = [v for rgb in PALETTE for v in rgb]
    img.putpalette(flat_palette + [0] * (768 - len(flat_palette)))
    img.save(path)


def read_mask(path) -> np.ndarray:
    """Load a paletted/RGB mask file, validating every color."""
    with Image.open(path) as img:
        rgb = np.asarray(img.convert("RGB"), dtype=np.int64)
    h, w, _ = rgb.shape
    out = np.full((h, w), -1, dtype=np.int64)
    for label, color in enumerate(PALETTE):
        out[(rgb == np.array(color)).all(axis=2)] = label
    bad = out < 0
    if bad.any():
        ys, xs = np.nonzero(bad)
        y, x = int(ys[0]), int(xs[0])
        raise MaskFormatError(
            f"{path}: color {tuple(rgb[y, x])} at pixel (row {y}, col {x}) "
            f"is not in the mask palette"
        )
    return out


def read_scene(image_path, mask_path) -> Scene:
    image = read_image(image_path)
    mask = read_mask(mask_path)
    return Scene(image, mask, {"source": str(image_path), "scale_ratio": 1.0})


def write_manifest(path, records) -> None:
    """Records are (image_path, mask_path, scale_ratio) triples."""
    with open(path, "w", encoding="utf-8") as fh:
        for image_path, mask_path, ratio in records:
            fh.write(f"{image_path}\t{mask_path}\t{ratio:g}\n")


def read_manifest(path) -> list[tuple[str, str, float]]:
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise ValueError(
                    f"{path}:{line_no}: expected 3 tab-separated fields"
                )
            records.append((parts[0], parts[1], float(parts[2])))
    return records


def load_manifest_scenes(path) -> list[Scene]:
    """Read every scene listed in a manifest (paths relative to it)."""
    base = os.path.dirname(os.path.abspath(path))
    scenes = []
    for image_path, mask_path, ratio in read_manifest(path):
        if not os.path.isabs(image_path):
            image_path = os.path.join(base, image_path)
        if not os.path.isabs(mask_path):
            mask_path = os.path.join(base, mask_path)
        scene = read_scene(image_path, mask_path)
        scene.meta["scale_ratio"] = ratio
        scenes.append(scene)
    return scenes
