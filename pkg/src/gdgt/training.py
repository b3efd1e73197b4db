"""Loss, optimizers, and the desk-scale training/evaluation loops.

Training is deterministic for a fixed seed: parameter init, shuffling, and
batch assembly all derive from one generator, and evaluation during
training shares the code path of standalone evaluation so logged and
re-computed scores agree bit for bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict

import numpy as np

from .data import Scene, load_manifest_scenes, resize_to_input, synth_dataset
from .metrics import ConfusionMatrix, accumulate, compute_metrics
from .model import (
    ABLATION_SWEEP,
    AblationConfig,
    ConfigError,
    GdgtConfig,
    GdgtNet,
    load_checkpoint,
    save_checkpoint,
)
from .tensor import Parameter, Tensor, backward, log_softmax, scale, tsum


class TrainingDiverged(RuntimeError):
    """Raised when the loss stops being finite."""


@dataclass
class DatasetSpec:
    """Either a synthetic draw (count/size/seed) or a manifest on disk."""

    kind: str = "synthetic"
    count: int = 20
    size: int = 64
    seed: int = 100
    path: str | None = None

    def validate(self) -> None:
        if self.kind not in ("synthetic", "manifest"):
            raise ConfigError(f"unknown dataset kind {self.kind!r}")
        if self.kind == "synthetic" and self.count < 1:
            raise ConfigError("synthetic dataset needs count >= 1")
        if self.kind == "manifest" and not self.path:
            raise ConfigError("manifest dataset needs a path")

    def load(self) -> list[Scene]:
        self.validate()
        if self.kind == "synthetic":
            return synth_dataset(self.count, self.size, self.seed)
        return load_manifest_scenes(self.path)


@dataclass
class TrainConfig:
    lr: float = 6e-4
    epochs: int = 12
    batch_size: int = 8
    seed: int = 0
    optimizer: str = "adam"
    lr_schedule: str = "constant"
    ablation: AblationConfig | None = None
    dataset: DatasetSpec = field(default_factory=DatasetSpec)
    val_dataset: DatasetSpec | None = None

    def __post_init__(self):
        if isinstance(self.ablation, dict):
            self.ablation = AblationConfig(**self.ablation)
        if isinstance(self.dataset, dict):
            self.dataset = DatasetSpec(**self.dataset)
        if isinstance(self.val_dataset, dict):
            self.val_dataset = DatasetSpec(**self.val_dataset)

    def validate(self) -> None:
        if self.lr <= 0:
            raise ConfigError(f"lr must be positive, got {self.lr}")
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.optimizer not in ("adam", "sgd"):
            raise ConfigError(f"unknown optimizer {self.optimizer!r}")
        if self.lr_schedule not in ("constant", "cosine"):
            raise ConfigError(f"unknown lr schedule {self.lr_schedule!r}")
        if self.ablation is not None:
            self.ablation.validate()
        self.dataset.validate()
        if self.val_dataset is not None:
            self.val_dataset.validate()

    def to_dict(self) -> dict:
        return asdict(self)


# ---------------------------------------------------------------------------
# loss


def cross_entropy(logits: Tensor, labels: np.ndarray) -> Tensor:
    """Pixel-wise multi-category cross-entropy with mean reduction."""
    labels = np.asarray(labels)
    b, k, h, w = logits.shape
    if labels.shape != (b, h, w):
        raise ValueError(
            f"labels shaped {labels.shape} do not match logits {logits.shape}"
        )
    if labels.min() < 0 or labels.max() >= k:
        raise ValueError(f"labels outside [0, {k})")
    log_probs = log_softmax(logits, axis=1)
    onehot = (labels[:, None, :, :] == np.arange(k)[None, :, None, None])
    picked = tsum(log_probs * Tensor(onehot.astype(np.float64)))
    return scale(picked, -1.0 / (b * h * w))


# ---------------------------------------------------------------------------
# optimizers


class Sgd:
    """Plain gradient descent; used by the monotone-descent check."""

    def __init__(self, params: list[Parameter], lr: float):
        self.params = list(params)
        self.lr = lr

    def step(self) -> None:
        for p in self.params:
            if p.grad is not None:
                p.tensor.data = p.data - self.lr * p.grad

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()


class Adam:
    """Adaptive per-parameter steps from running first/second moments."""

    def __init__(self, params: list[Parameter], lr: float,
                 betas: tuple[float, float] = (0.9, 0.999),
                 eps: float = 1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.t = 0
        self._m = [np.zeros(p.shape) for p in self.params]
        self._v = [np.zeros(p.shape) for p in self.params]

    def step(self) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        bias1 = 1.0 - b1 ** self.t
        bias2 = 1.0 - b2 ** self.t
        for i, p in enumerate(self.params):
            if p.grad is None:
                continue
            self._m[i] = b1 * self._m[i] + (1.0 - b1) * p.grad
            self._v[i] = b2 * self._v[i] + (1.0 - b2) * p.grad * p.grad
            m_hat = self._m[i] / bias1
            v_hat = self._v[i] / bias2
            p.tensor.data = p.data - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()


def _make_optimizer(name: str, params: list[Parameter], lr: float):
    return Adam(params, lr) if name == "adam" else Sgd(params, lr)


def _lr_at(cfg: TrainConfig, epoch: int) -> float:
    if cfg.lr_schedule == "constant":
        return cfg.lr
    return cfg.lr * 0.5 * (1.0 + math.cos(math.pi * epoch / cfg.epochs))


# ---------------------------------------------------------------------------
# dataset plumbing


def scenes_to_arrays(scenes: list[Scene], input_size: int):
    """Stack scenes into (N,3,S,S) images and (N,S,S) masks, resizing as
    needed so they match the configured model input."""
    images, masks = [], []
    for scene in scenes:
        if (scene.height, scene.width) != (input_size, input_size):
            scene = resize_to_input(scene, input_size)
        images.append(scene.image)
        masks.append(scene.mask)
    return np.stack(images), np.stack(masks)


def evaluate_arrays(net: GdgtNet, images: np.ndarray, masks: np.ndarray,
                    batch_size: int = 8):
    """Predict every item and score against ground truth."""
    cm = ConfusionMatrix(net.config.num_categories)
    for start in range(0, len(images), batch_size):
        pred = net.predict(images[start:start + batch_size])
        accumulate(cm, pred, masks[start:start + batch_size])
    return compute_metrics(cm), cm


def evaluate(net_or_checkpoint, scenes, batch_size: int = 8):
    """Score a model (or checkpoint path) over a list of scenes."""
    if isinstance(net_or_checkpoint, GdgtNet):
        net = net_or_checkpoint
    else:
        net, _ = load_checkpoint(net_or_checkpoint)
    images, masks = scenes_to_arrays(scenes, net.config.input_size)
    return evaluate_arrays(net, images, masks, batch_size=batch_size)


# ---------------------------------------------------------------------------
# the loop


@dataclass
class TrainResult:
    net: GdgtNet
    history: list[dict]
    best_epoch: int
    best_miou: float
    checkpoint_path: str | None = None

    def log_lines(self) -> list[str]:
        """One line per epoch: index, mean loss, val mIoU/F1/OA/FWIoU."""
        return [
            (f"epoch={h['epoch']} loss={h['loss']:.12g} "
             f"miou={h['miou']:.12g} f1={h['f1']:.12g} "
             f"oa={h['oa']:.12g} fwiou={h['fwiou']:.12g}")
            for h in self.history
        ]


def train(model_config: GdgtConfig, train_config: TrainConfig,
          scenes: list[Scene] | None = None,
          val_scenes: list[Scene] | None = None,
          checkpoint_path=None, log_path=None,
          verbose: bool = False) -> TrainResult:
    """Run the full loop and keep the best-validation-mIoU weights.

    Scenes default to the configured dataset spec; validation defaults to
    the training set (the desk-scale overfit protocol).
    """
    train_config.validate()
    cfg = model_config
    if train_config.ablation is not None:
        cfg = GdgtConfig(**{**cfg.to_dict(),
                            "ablation": train_config.ablation})
    cfg.validate()

    if scenes is None:
        scenes = train_config.dataset.load()
    if not scenes:
        raise ValueError("training dataset is empty")
    if val_scenes is None:
        val_scenes = (train_config.val_dataset.load()
                      if train_config.val_dataset is not None else scenes)

    images, masks = scenes_to_arrays(scenes, cfg.input_size)
    val_images, val_masks = scenes_to_arrays(val_scenes, cfg.input_size)

    net = GdgtNet(cfg, seed=train_config.seed)
    optimizer = _make_optimizer(train_config.optimizer, net.parameters(),
                                train_config.lr)
    rng = np.random.default_rng(train_config.seed)

    history: list[dict] = []
    best_miou = -1.0
    best_epoch = -1
    best_state: dict[str, np.ndarray] = {}

    n = len(images)
    for epoch in range(train_config.epochs):
        optimizer.lr = _lr_at(train_config, epoch)
        order = rng.permutation(n)
        losses = []
        for start in range(0, n, train_config.batch_size):
            batch = order[start:start + train_config.batch_size]
            optimizer.zero_grad()
            logits = net.forward(Tensor(images[batch]))
            loss = cross_entropy(logits, masks[batch])
            value = loss.item()
            if not np.isfinite(value):
                raise TrainingDiverged(
                    f"epoch {epoch}: loss became {value} "
                    f"(lr={optimizer.lr:g}, batch of {len(batch)})"
                )
            backward(loss)
            optimizer.step()
            losses.append(value)

        metrics, _ = evaluate_arrays(net, val_images, val_masks,
                                     batch_size=train_config.batch_size)
        entry = {"epoch": epoch, "loss": float(np.mean(losses)),
                 "miou": metrics["miou"], "f1": metrics["f1"],
                 "oa": metrics["oa"], "fwiou": metrics["fwiou"]}
        history.append(entry)
        if verbose:
            print(f"[{cfg.ablation.tag()}] epoch {epoch}: "
                  f"loss {entry['loss']:.4f} val mIoU {entry['miou']:.4f}")
        if metrics["miou"] > best_miou:
            best_miou = metrics["miou"]
            best_epoch = epoch
            best_state = {p.name: p.data.copy() for p in net.parameters()}

    for p in net.parameters():
        p.data = best_state[p.name]

    result = TrainResult(net=net, history=history, best_epoch=best_epoch,
                         best_miou=best_miou)
    if checkpoint_path is not None:
        save_checkpoint(checkpoint_path, net,
                        meta={"best_epoch": best_epoch,
                              "best_miou": best_miou,
                              "train_config": train_config.to_dict()})
        result.checkpoint_path = str(checkpoint_path)
    if log_path is not None:
        with open(log_path, "w", encoding="utf-8") as fh:
            fh.write("\n".join(result.log_lines()) + "\n")
    return result


def ablation_sweep(model_config: GdgtConfig, train_config: TrainConfig,
                   scenes: list[Scene] | None = None,
                   val_scenes: list[Scene] | None = None,
                   verbose: bool = False):
    """Train and score the four studied configurations from one seed.

    Returns (tag, metrics) pairs in table order: baseline, +GLFF,
    +GLFF+DGD(no-dwt), GDGT.
    """
    if scenes is None:
        scenes = train_config.dataset.load()
    if val_scenes is None and train_config.val_dataset is not None:
        val_scenes = train_config.val_dataset.load()
    rows = []
    for ablation in ABLATION_SWEEP:
        cfg = GdgtConfig(**{**model_config.to_dict(), "ablation": ablation})
        run_cfg = TrainConfig(**{**train_config.to_dict(), "ablation": None})
        result = train(cfg, run_cfg, scenes=scenes, val_scenes=val_scenes,
                       verbose=verbose)
        metrics, _ = evaluate(result.net,
                              val_scenes if val_scenes is not None else scenes,
                              batch_size=train_config.batch_size)
        rows.append((ablation.tag(), metrics))
    return rows
