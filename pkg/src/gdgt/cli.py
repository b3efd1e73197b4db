"""Command-line front end: synth / train / eval / predict / verify.

Exit codes: 0 success, 1 usage error (bad flags, malformed config), 2
runtime or verification failure.  Every command is deterministic given its
flags and seeds.

The config file is JSON with two optional sections, "model" and "train",
mirroring GdgtConfig and TrainConfig field for field.  Unknown keys are
rejected; omitted keys take the documented defaults; flags override config
values.  parse -> serialize -> parse is a fixed point.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys

import numpy as np

from . import verify as verify_mod
from .data import (
    Scene,
    read_image,
    read_mask,
    resize_to_input,
    stitch_predictions,
    synth_scene,
    tile_scene,
    write_image,
    write_manifest,
    write_mask,
    PALETTE,
)
from .metrics import HEADER, dump_kv, report
from .model import ConfigError, GdgtConfig, load_checkpoint
from .training import (
    DatasetSpec,
    TrainConfig,
    TrainingDiverged,
    ablation_sweep,
    evaluate,
    train,
)


class UsageError(Exception):
    """Command-line misuse; reported on stderr and exits with code 1."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # route argparse failures to exit code 1
        raise UsageError(message)


# ---------------------------------------------------------------------------
# config files


def _merge_section(defaults: dict, overrides: dict, section: str) -> dict:
    merged = dict(defaults)
    for key, value in overrides.items():
        if key not in defaults:
            raise UsageError(f"unknown key {key!r} in config section {section!r}")
        if isinstance(defaults[key], dict) and isinstance(value, dict):
            merged[key] = _merge_section(defaults[key], value,
                                         f"{section}.{key}")
        else:
            merged[key] = value
    return merged


def load_config(path) -> tuple[GdgtConfig, TrainConfig]:
    """Parse a JSON config file into (model config, train config)."""
    if not os.path.exists(path):
        raise UsageError(f"config file not found: {path}")
    with open(path, "r", encoding="utf-8") as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise UsageError(f"config file {path} is not valid JSON: {exc}")
    if not isinstance(raw, dict):
        raise UsageError(f"config file {path} must hold a JSON object")
    unknown = set(raw) - {"model", "train"}
    if unknown:
        raise UsageError(
            f"unknown config sections {sorted(unknown)} in {path}"
        )
    model_defaults = GdgtConfig().to_dict()
    train_defaults = TrainConfig().to_dict()
    model_raw = _merge_section(model_defaults, raw.get("model", {}), "model")
    train_raw = _merge_section(train_defaults, raw.get("train", {}), "train")
    # a null val_dataset stays absent; a dict merges over the spec defaults
    if raw.get("train", {}).get("val_dataset") is not None:
        train_raw["val_dataset"] = _merge_section(
            dataclasses.asdict(DatasetSpec()),
            raw["train"]["val_dataset"], "train.val_dataset")
    try:
        model_cfg = GdgtConfig.from_dict(model_raw)
        train_cfg = TrainConfig(**train_raw)
        train_cfg.validate()
    except (ConfigError, TypeError) as exc:
        raise UsageError(f"invalid config in {path}: {exc}")
    return model_cfg, train_cfg


def serialize_config(model_cfg: GdgtConfig, train_cfg: TrainConfig) -> str:
    payload = {"model": model_cfg.to_dict(), "train": train_cfg.to_dict()}
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"


# ---------------------------------------------------------------------------
# subcommands


def cmd_synth(args) -> int:
    if args.size < 64:
        raise UsageError(f"--size must be >= 64, got {args.size}")
    if args.count < 1:
        raise UsageError(f"--count must be >= 1, got {args.count}")
    os.makedirs(args.out, exist_ok=True)
    records = []
    for i in range(args.count):
        scene = synth_scene(args.seed + i, args.size)
        image_name = f"scene_{i:04d}.png"
        mask_name = f"scene_{i:04d}_mask.png"
        write_image(os.path.join(args.out, image_name), scene.image)
        write_mask(os.path.join(args.out, mask_name), scene.mask)
        records.append((image_name, mask_name, 1.0))
    write_manifest(os.path.join(args.out, "manifest.txt"), records)
    print(f"wrote {args.count} scenes of size {args.size} to {args.out}")
    return 0


def cmd_train(args) -> int:
    model_cfg, train_cfg = load_config(args.config)
    if args.seed is not None:
        train_cfg.seed = args.seed
    if args.epochs is not None:
        train_cfg.epochs = args.epochs
    result = train(model_cfg, train_cfg,
                   checkpoint_path=args.out_checkpoint,
                   log_path=args.log, verbose=not args.quiet)
    tag = (train_cfg.ablation or model_cfg.ablation).tag()
    for line in result.log_lines():
        print(f"[{tag}] {line}")
    print(f"[{tag}] best epoch {result.best_epoch} "
          f"val mIoU {result.best_miou:.4f}")
    if result.checkpoint_path:
        print(f"checkpoint: {result.checkpoint_path}")
    return 0


def _dataset_from_args(args) -> DatasetSpec:
    if args.data is not None:
        return DatasetSpec(kind="manifest", path=args.data)
    if args.synthetic is not None:
        try:
            count, size, seed = (int(v) for v in args.synthetic.split(","))
        except ValueError:
            raise UsageError(
                "--synthetic expects COUNT,SIZE,SEED (e.g. 40,64,5000)"
            )
        return DatasetSpec(kind="synthetic", count=count, size=size, seed=seed)
    raise UsageError("eval needs --data MANIFEST or --synthetic COUNT,SIZE,SEED")


def cmd_eval(args) -> int:
    rows = []
    if args.ablation_sweep:
        if args.config is None:
            raise UsageError("--ablation-sweep needs --config for training")
        model_cfg, train_cfg = load_config(args.config)
        val_spec = None
        if args.data is not None or args.synthetic is not None:
            val_spec = _dataset_from_args(args)
        val_scenes = val_spec.load() if val_spec is not None else None
        rows = ablation_sweep(model_cfg, train_cfg, val_scenes=val_scenes,
                              verbose=not args.quiet)
    else:
        if args.checkpoint is None:
            raise UsageError("eval needs --checkpoint (or --ablation-sweep)")
        spec = _dataset_from_args(args)
        net, meta = load_checkpoint(args.checkpoint)
        metrics, _ = evaluate(net, spec.load())
        rows = [(net.config.ablation.tag(), metrics)]

    print(HEADER)
    for tag, metrics in rows:
        print(report(metrics, tag))
    if args.dump:
        with open(args.dump, "w", encoding="utf-8") as fh:
            for tag, metrics in rows:
                fh.write(dump_kv(metrics, tag))
                fh.write("\n")
        print(f"metrics dump: {args.dump}")
    return 0


def cmd_predict(args) -> int:
    net, _ = load_checkpoint(args.checkpoint)
    side = net.config.input_size
    image = read_image(args.image)
    h, w = image.shape[1], image.shape[2]

    if (h, w) == (side, side):
        mask = net.predict(image)
    else:
        dummy = np.zeros((h, w), dtype=np.int64)
        tiles = tile_scene(Scene(image, dummy), tile_size=args.tile_size,
                           overlap=args.overlap)
        logits_list, offsets = [], []
        for tile in tiles.tiles:
            small = resize_to_input(Scene(tile.image, tile.mask), side)
            logits = net.predict_logits(small.image)
            logits_list.append(
                np.stack([_resize_plane(p, tiles.tile_size) for p in logits]))
            offsets.append((tile.row, tile.col))
        padded = stitch_predictions(logits_list, offsets, tiles.source_hw)
        mask = padded[:h, :w]  # drop reflect padding of sub-tile inputs

    write_mask(args.out, mask)
    print(f"wrote mask {args.out} ({h}x{w})")
    if args.viz:
        colors = np.array(PALETTE, dtype=np.float64) / 255.0
        overlay = colors[mask].transpose(2, 0, 1)
        side_by_side = np.concatenate([image, overlay], axis=2)
        write_image(args.viz, side_by_side)
        print(f"wrote visualization {args.viz}")
    return 0


def _resize_plane(plane: np.ndarray, side: int) -> np.ndarray:
    from .data import bilinear_resize

    return bilinear_resize(plane[None], side, side)[0]


def cmd_verify(args) -> int:
    failures = verify_mod.run_all(verbose=True)
    return 0 if failures == 0 else 2


# ---------------------------------------------------------------------------
# parser


def build_parser() -> _Parser:
    parser = _Parser(prog="gdgt",
                     description="sea-ice segmentation pipeline")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset",
                       description="Write deterministic synthetic scenes "
                                   "and a manifest.")
    p.add_argument("--seed", type=int, default=0,
                   help="base seed; scene i uses seed+i (default 0)")
    p.add_argument("--count", type=int, default=20,
                   help="number of scenes (default 20)")
    p.add_argument("--size", type=int, default=64,
                   help="square scene size, minimum 64 (default 64)")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train one configuration",
                       description="Train per the JSON config; defaults "
                                   "mirror the reference protocol (lr 6e-4, "
                                   "12 epochs).")
    p.add_argument("--config", required=True, help="JSON config file")
    p.add_argument("--out-checkpoint", default=None,
                   help="where to store the best-mIoU checkpoint (default none)")
    p.add_argument("--log", default=None,
                   help="per-epoch log file (default none)")
    p.add_argument("--seed", type=int, default=None,
                   help="override the config seed (default: use config)")
    p.add_argument("--epochs", type=int, default=None,
                   help="override config epochs (default: use config)")
    p.add_argument("--quiet", action="store_true",
                   help="suppress per-epoch progress (default off)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint or run the sweep",
                       description="Score a checkpoint, or train+score all "
                                   "four ablation rows with --ablation-sweep.")
    p.add_argument("--checkpoint", default=None, help="checkpoint to score")
    p.add_argument("--data", default=None, help="manifest of evaluation scenes")
    p.add_argument("--synthetic", default=None,
                   help="synthetic eval spec COUNT,SIZE,SEED")
    p.add_argument("--ablation-sweep", action="store_true",
                   help="train and report all four ablation configurations")
    p.add_argument("--config", default=None,
                   help="JSON config (required for --ablation-sweep)")
    p.add_argument("--dump", default=None,
                   help="write machine-readable key=value metrics here")
    p.add_argument("--quiet", action="store_true",
                   help="suppress training progress (default off)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("predict", help="segment an image, tiling large inputs",
                       description="Predict a paletted mask; images larger "
                                   "than the model input are tiled with "
                                   "overlap and stitched by logit averaging.")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--image", required=True, help="8-bit RGB input image")
    p.add_argument("--out", required=True, help="output paletted mask PNG")
    p.add_argument("--viz", default=None,
                   help="optional side-by-side visualization PNG (default none)")
    p.add_argument("--tile-size", type=int, default=800,
                   help="tile side for large inputs (default 800)")
    p.add_argument("--overlap", type=int, default=200,
                   help="tile overlap in pixels (default 200)")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("verify", help="run the fast property suites",
                       description="DWT reconstruction, gradient checks, "
                                   "metric oracle, tiling coverage; exits 2 "
                                   "on any failure.")
    p.set_defaults(func=cmd_verify)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help / --version paths
        return 0 if exc.code in (0, None) else 1
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except TrainingDiverged as exc:
        print(f"training diverged: {exc}", file=sys.stderr)
        return 2
    except (ValueError, RuntimeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
