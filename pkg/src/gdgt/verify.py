"""Fast self-check suites behind ``gdgt verify``.

Each suite returns (ok, detail); names are stable strings so CI can grep
them.  The metrics oracle here recounts TP/FP/FN by direct boolean
scanning, independent of the confusion-matrix implementation it checks.
"""

from __future__ import annotations

import numpy as np

from .data import synth_scene, tile_scene
from .glff import GlffParams, glff_forward
from .guided_filter import DgdParams, dgd_forward
from .metrics import ConfusionMatrix, accumulate, compute_metrics
from .tensor import Tensor, conv2d, grad_check
from .wavelet import haar_dwt, inverse_haar_dwt


def metrics_by_scanning(pred: np.ndarray, gt: np.ndarray,
                        num_categories: int) -> dict:
    """Brute-force scores: per-category set counting straight off the masks."""
    pred = np.asarray(pred).ravel()
    gt = np.asarray(gt).ravel()
    total = gt.size
    ious, f1s, fwiou = [], [], 0.0
    per_cat = np.full(num_categories, np.nan)
    correct = int((pred == gt).sum())
    for c in range(num_categories):
        in_pred = pred == c
        in_gt = gt == c
        tp = int((in_pred & in_gt).sum())
        fp = int((in_pred & ~in_gt).sum())
        fn = int((~in_pred & in_gt).sum())
        if tp + fp + fn == 0:
            continue
        iou = tp / (tp + fp + fn)
        per_cat[c] = iou
        ious.append(iou)
        f1s.append(2 * tp / (2 * tp + fp + fn))
        fwiou += (int(in_gt.sum()) / total) * iou
    return {
        "per_category_iou": per_cat,
        "miou": float(np.mean(ious)) if ious else 0.0,
        "f1": float(np.mean(f1s)) if f1s else 0.0,
        "oa": correct / total,
        "fwiou": fwiou,
    }


def check_dwt(cases: int = 200, seed: int = 7) -> tuple[bool, str]:
    rng = np.random.default_rng(seed)
    for _ in range(cases):
        x = rng.integers(-8, 9, size=(1, 2, 8, 8)).astype(np.float64)
        bands = haar_dwt(Tensor(x))
        back = inverse_haar_dwt(bands)
        if not np.array_equal(back.data, x):
            return False, "round trip not bit-exact on integer maps"
        band_energy = sum(float((b.data ** 2).sum()) for b in bands.as_tuple())
        if abs(band_energy - 4.0 * float((x ** 2).sum())) > 1e-9:
            return False, "energy identity violated"
    return True, f"{cases} integer maps round-tripped bit-exactly"


def check_gradients(tol: float = 1e-4) -> tuple[bool, str]:
    rng = np.random.default_rng(11)
    worst = 0.0

    x = Tensor(rng.standard_normal((1, 2, 5, 5)), requires_grad=True)
    w = Tensor(rng.standard_normal((3, 2, 3, 3)), requires_grad=True)

    def conv_loss(a, b):
        out = conv2d(a, b, padding=1)
        return (out * out).sum()

    rep = grad_check(conv_loss, [x, w])
    worst = max(worst, rep["max_rel_err"])

    dgd = DgdParams("v.dgd", 2, np.random.default_rng(3))
    xd = Tensor(rng.standard_normal((1, 2, 4, 4)), requires_grad=True)
    xr = Tensor(rng.standard_normal((1, 2, 8, 8)), requires_grad=True)
    rep = grad_check(lambda a, b: (dgd_forward(a, b, dgd)
                                   * dgd_forward(a, b, dgd)).sum(),
                     [xd, xr], sample=40)
    worst = max(worst, rep["max_rel_err"])

    glff = GlffParams("v.glff", 4, np.random.default_rng(5), window=4, heads=2)
    xg = Tensor(rng.standard_normal((1, 4, 4, 4)), requires_grad=True)
    rep = grad_check(lambda a: (glff_forward(a, glff)
                                * glff_forward(a, glff)).sum(),
                     [xg], sample=40)
    worst = max(worst, rep["max_rel_err"])

    ok = worst < tol
    return ok, f"max relative error {worst:.2e} (tolerance {tol:g})"


def check_metrics_oracle(cases: int = 20, seed: int = 23) -> tuple[bool, str]:
    rng = np.random.default_rng(seed)
    for _ in range(cases):
        pred = rng.integers(0, 5, size=(32, 32))
        gt = rng.integers(0, 5, size=(32, 32))
        cm = ConfusionMatrix(5)
        accumulate(cm, pred, gt)
        fast = compute_metrics(cm)
        slow = metrics_by_scanning(pred, gt, 5)
        for key in ("miou", "f1", "oa", "fwiou"):
            if fast[key] != slow[key]:
                return False, f"{key} disagrees with the scanning oracle"
    cm = ConfusionMatrix(2)
    cm.counts = np.array([[3, 1], [1, 3]], dtype=np.int64)
    m = compute_metrics(cm)
    if not (m["miou"] == 0.6 and m["oa"] == 0.75 and m["f1"] == 0.75
            and m["fwiou"] == 0.6):
        return False, "hand-derived two-category example mismatched"
    return True, f"{cases} random mask pairs matched the scanning oracle exactly"


def check_tiling(cases: int = 10, seed: int = 31) -> tuple[bool, str]:
    rng = np.random.default_rng(seed)
    scene = synth_scene(0, 64)
    for _ in range(cases):
        h = int(rng.integers(800, 1601))
        w = int(rng.integers(800, 1601))
        fake = type(scene)(np.zeros((3, h, w)), np.zeros((h, w), dtype=np.int64))
        tiles = tile_scene(fake, 800, 200)
        covered = np.zeros((h, w), dtype=bool)
        for t in tiles.tiles:
            covered[t.row:t.row + 800, t.col:t.col + 800] = True
        if not covered.all():
            return False, f"coverage gap for {h}x{w}"
    fake = type(scene)(np.zeros((3, 1400, 1400)),
                       np.zeros((1400, 1400), dtype=np.int64))
    tiles = tile_scene(fake, 800, 200)
    offsets = sorted((t.row, t.col) for t in tiles.tiles)
    if offsets != [(0, 0), (0, 600), (600, 0), (600, 600)]:
        return False, f"1400x1400 offsets were {offsets}"
    return True, f"{cases} random extents fully covered; 1400 case exact"


SUITES = (
    ("dwt_reconstruction", check_dwt),
    ("gradient_checks", check_gradients),
    ("metrics_oracle", check_metrics_oracle),
    ("tiling_coverage", check_tiling),
)


def run_all(verbose: bool = True) -> int:
    """Run every suite; returns the number of failures."""
    failures = 0
    for name, fn in SUITES:
        ok, detail = fn()
        if verbose:
            print(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
        failures += 0 if ok else 1
    return failures
