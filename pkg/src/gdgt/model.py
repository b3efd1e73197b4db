"""The full U-shaped network: residual encoder, fusion decoder, guided skips.

The encoder halves resolution per stage with two residual blocks each; the
decoder walks back up, running a fusion block, a 1x1 channel reduction, and
a detail-guided merge with the matching encoder skip at every level.  A 1x1
head plus a final 2x upsample produces per-pixel category logits.

Ablation switches reproduce the four studied configurations: plain
transformer decoder, +fusion, +guided skips without wavelets, and the full
model with wavelet guides.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field, asdict

import numpy as np

from .glff import GlffParams, glff_forward
from .guided_filter import DgdParams, dgd_forward
from .layers import Conv2d, InstanceNorm
from .tensor import Parameter, ShapeError, Tensor, relu, upsample

CATEGORY_NAMES = ("Sea", "Thin-Ice", "Thick-Ice", "Land", "Pool-Ice")
NUM_CATEGORIES = len(CATEGORY_NAMES)

DGD_MODES = ("off", "no_dwt", "full")


class ConfigError(ValueError):
    """Raised when a model or ablation configuration is inconsistent."""


@dataclass
class AblationConfig:
    """Component switches spanning the four studied configurations."""

    use_glff: bool = True
    dgd_mode: str = "full"

    def validate(self) -> None:
        if self.dgd_mode not in DGD_MODES:
            raise ConfigError(
                f"dgd_mode must be one of {DGD_MODES}, got {self.dgd_mode!r}"
            )

    def tag(self) -> str:
        """Row label used in ablation tables and training logs."""
        if not self.use_glff:
            return "baseline" if self.dgd_mode == "off" else (
                f"DGD-only({self.dgd_mode})")
        if self.dgd_mode == "off":
            return "+GLFF"
        if self.dgd_mode == "no_dwt":
            return "+GLFF+DGD(no-dwt)"
        return "GDGT"


ABLATION_SWEEP = (
    AblationConfig(use_glff=False, dgd_mode="off"),
    AblationConfig(use_glff=True, dgd_mode="off"),
    AblationConfig(use_glff=True, dgd_mode="no_dwt"),
    AblationConfig(use_glff=True, dgd_mode="full"),
)


@dataclass
class GdgtConfig:
    """Network shape.  The default is the desk-scale setup; the full-scale
    512-input variant stays constructible by widening these fields."""

    input_size: int = 64
    stage_channels: tuple[int, ...] = (16, 32, 64, 128)
    num_stages: int = 4
    num_categories: int = NUM_CATEGORIES
    window: int = 4
    heads: int = 2
    ablation: AblationConfig = field(default_factory=AblationConfig)

    def __post_init__(self):
        self.stage_channels = tuple(int(c) for c in self.stage_channels)
        if isinstance(self.ablation, dict):
            self.ablation = AblationConfig(**self.ablation)

    def validate(self) -> None:
        self.ablation.validate()
        n = self.num_stages
        if n < 2:
            raise ConfigError("need at least two stages for a skip connection")
        if len(self.stage_channels) != n:
            raise ConfigError(
                f"stage_channels has {len(self.stage_channels)} entries "
                f"for num_stages={n}"
            )
        if self.input_size % (1 << n):
            raise ConfigError(
                f"input_size {self.input_size} not divisible by 2^{n}"
            )
        deepest = self.input_size >> n
        if deepest < self.window or deepest % self.window:
            raise ConfigError(
                f"deepest feature size {deepest} incompatible with "
                f"window {self.window}"
            )
        for c in self.stage_channels[1:]:
            if c % self.heads:
                raise ConfigError(
                    f"channel count {c} not divisible by heads={self.heads}"
                )
        if self.num_categories < 2:
            raise ConfigError("need at least two categories")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, raw: dict) -> "GdgtConfig":
        raw = dict(raw)
        if "ablation" in raw and isinstance(raw["ablation"], dict):
            raw["ablation"] = AblationConfig(**raw["ablation"])
        cfg = cls(**raw)
        cfg.validate()
        return cfg


class ResidualBlock:
    """conv-norm-relu twice on the residual path; identity or stride-2
    projection shortcut.  Zeroing the final conv collapses the block onto
    its shortcut."""

    def __init__(self, name: str, in_ch: int, out_ch: int, stride: int,
                 rng: np.random.Generator):
        self.conv1 = Conv2d(f"{name}.conv1", in_ch, out_ch, 3, rng,
                            stride=stride, padding=1)
        self.norm1 = InstanceNorm(f"{name}.norm1", out_ch)
        self.conv2 = Conv2d(f"{name}.conv2", out_ch, out_ch, 3, rng, padding=1)
        self.norm2 = InstanceNorm(f"{name}.norm2", out_ch)
        if stride != 1 or in_ch != out_ch:
            self.proj = Conv2d(f"{name}.proj", in_ch, out_ch, 1, rng,
                               stride=stride, bias=False)
        else:
            self.proj = None

    def params(self) -> list[Parameter]:
        out = (self.conv1.params() + self.norm1.params()
               + self.conv2.params() + self.norm2.params())
        if self.proj is not None:
            out += self.proj.params()
        return out

    def __call__(self, x: Tensor) -> Tensor:
        shortcut = x if self.proj is None else self.proj(x)
        h = relu(self.norm1(self.conv1(x)))
        h = relu(self.norm2(self.conv2(h)))
        return shortcut + h


class GdgtNet:
    """Parameter container and forward passes for one configuration."""

    def __init__(self, config: GdgtConfig, seed: int = 0):
        config.validate()
        self.config = config
        self.seed = seed
        rng = np.random.default_rng(seed)
        ab = config.ablation
        chans = config.stage_channels

        self.encoder: list[list[ResidualBlock]] = []
        prev = 3
        for i, c in enumerate(chans):
            stage = [
                ResidualBlock(f"enc.stage{i}.block1", prev, c, 2, rng),
                ResidualBlock(f"enc.stage{i}.block2", c, c, 1, rng),
            ]
            self.encoder.append(stage)
            prev = c

        self.decoder: list[dict] = []
        for j in range(config.num_stages - 2, -1, -1):
            c_in, c_out = chans[j + 1], chans[j]
            stage = {
                "glff": GlffParams(f"dec.stage{j}.glff", c_in, rng,
                                   window=config.window, heads=config.heads,
                                   use_local_fusion=ab.use_glff),
                "reduce": Conv2d(f"dec.stage{j}.reduce", c_in, c_out, 1, rng),
                "dgd": None,
            }
            if ab.dgd_mode != "off":
                mode = "dwt" if ab.dgd_mode == "full" else "conv"
                stage["dgd"] = DgdParams(f"dec.stage{j}.dgd", c_out, rng,
                                         guide_mode=mode)
            self.decoder.append(stage)

        self.head = Conv2d("head", chans[0], config.num_categories, 1, rng)

        self._params: list[Parameter] = []
        names = set()
        for p in self._collect_params():
            if p.name in names:
                raise ConfigError(f"duplicate parameter name {p.name!r}")
            names.add(p.name)
            self._params.append(p)

    def _collect_params(self):
        for stage in self.encoder:
            for block in stage:
                yield from block.params()
        for stage in self.decoder:
            yield from stage["glff"].params()
            yield from stage["reduce"].params()
            if stage["dgd"] is not None:
                yield from stage["dgd"].params()
        yield from self.head.params()

    # -- parameter registry -------------------------------------------

    def parameters(self) -> list[Parameter]:
        return list(self._params)

    def named_parameters(self) -> dict[str, Parameter]:
        return {p.name: p for p in self._params}

    def zero_grad(self) -> None:
        for p in self._params:
            p.zero_grad()

    def param_count(self) -> int:
        return sum(p.size for p in self._params)

    # -- forward passes -------------------------------------------------

    def encoder_forward(self, image: Tensor) -> list[Tensor]:
        s = self.config.input_size
        if image.ndim != 4 or image.shape[1] != 3:
            raise ShapeError(f"expected B×3×{s}×{s} input, got {image.shape}")
        if image.shape[2] != s or image.shape[3] != s:
            raise ShapeError(
                f"input spatial dims {image.shape[2:]} != configured {s}"
            )
        feats = []
        h = image
        for stage in self.encoder:
            for block in stage:
                h = block(h)
            feats.append(h)
        return feats

    def decoder_forward(self, feats: list[Tensor]) -> Tensor:
        d = feats[-1]
        for stage, j in zip(self.decoder,
                            range(self.config.num_stages - 2, -1, -1)):
            d = glff_forward(d, stage["glff"])
            d = stage["reduce"](d)
            skip = feats[j]
            if stage["dgd"] is None:
                d = upsample(d, 2, "bilinear") + skip
            else:
                d = dgd_forward(d, skip, stage["dgd"])
        logits = self.head(d)
        return upsample(logits, 2, "bilinear")

    def forward(self, image: Tensor) -> Tensor:
        return self.decoder_forward(self.encoder_forward(image))

    def predict(self, images: np.ndarray) -> np.ndarray:
        """Per-pixel argmax categories; ties resolve to the lower index."""
        arr = np.asarray(images, dtype=np.float64)
        single = arr.ndim == 3
        if single:
            arr = arr[None]
        logits = self.forward(Tensor(arr))
        masks = np.argmax(logits.data, axis=1)
        return masks[0] if single else masks

    def predict_logits(self, images: np.ndarray) -> np.ndarray:
        arr = np.asarray(images, dtype=np.float64)
        single = arr.ndim == 3
        if single:
            arr = arr[None]
        logits = self.forward(Tensor(arr)).data
        return logits[0] if single else logits


# ---------------------------------------------------------------------------
# checkpoint container
#
# Layout (all integers little-endian):
#   bytes 0..7    magic  b"GDGTCKPT"
#   bytes 8..11   uint32 format version (currently 1)
#   bytes 12..19  uint64 header length N
#   bytes 20..20+N  UTF-8 JSON: {"version", "seed", "meta", "config",
#                   "tensors": [{"name", "shape"}, ...]}
#   remainder     concatenated float64 little-endian tensor payloads in
#                 header order

CHECKPOINT_MAGIC = b"GDGTCKPT"
CHECKPOINT_VERSION = 1


class CheckpointError(RuntimeError):
    """Raised on malformed files or config/parameter mismatches."""


def save_checkpoint(path, net: GdgtNet, meta: dict | None = None) -> None:
    header = {
        "version": CHECKPOINT_VERSION,
        "seed": net.seed,
        "meta": meta or {},
        "config": net.config.to_dict(),
        "tensors": [{"name": p.name, "shape": list(p.shape)}
                    for p in net.parameters()],
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", CHECKPOINT_VERSION))
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for p in net.parameters():
            fh.write(np.ascontiguousarray(p.data, dtype="<f8").tobytes())


def load_checkpoint(path) -> tuple[GdgtNet, dict]:
    """Rebuild a network from a checkpoint; returns (net, meta)."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:8] != CHECKPOINT_MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file")
    (version,) = struct.unpack_from("<I", raw, 8)
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"{path}: unsupported version {version}")
    (hlen,) = struct.unpack_from("<Q", raw, 12)
    header = json.loads(raw[20:20 + hlen].decode("utf-8"))

    config = GdgtConfig.from_dict(header["config"])
    net = GdgtNet(config, seed=header.get("seed", 0))
    registry = net.named_parameters()
    recorded = [t["name"] for t in header["tensors"]]
    if set(recorded) != set(registry) or len(recorded) != len(registry):
        raise CheckpointError(
            f"{path}: parameter names do not match the configured model"
        )

    offset = 20 + hlen
    for entry in header["tensors"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        values = np.frombuffer(raw, dtype="<f8", count=count, offset=offset)
        offset += count * 8
        param = registry[entry["name"]]
        if param.shape != shape:
            raise CheckpointError(
                f"{path}: {entry['name']} has shape {shape}, "
                f"model expects {param.shape}"
            )
        param.data = values.reshape(shape).astype(np.float64)
    if offset != len(raw):
        raise CheckpointError(f"{path}: trailing bytes after tensor payload")
    return net, header.get("meta", {})
