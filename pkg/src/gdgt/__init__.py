"""Sea-ice segmentation with wavelet-guided decoding and global-local fusion.

A self-contained 64-bit numerical stack: a small reverse-mode tensor
engine, the exact 2x2 Haar transform, learnable guided filtering, windowed
attention with convolutional fusion, the full U-shaped network, a
synthetic-scene data pipeline, confusion-matrix metrics, training loops,
and a CLI.  ``GdgtSegmenter`` exposes the whole thing behind a
scikit-learn style fit/predict surface.
"""

from .tensor import (
    Parameter,
    ShapeError,
    Tensor,
    backward,
    conv2d,
    elementwise,
    grad_check,
    matmul,
    softmax,
    upsample,
)
from .wavelet import WaveletBands, haar_dwt, inverse_haar_dwt
from .guided_filter import (
    DgdParams,
    build_guide,
    dgd_forward,
    downsampled_guide,
    guided_coefficients,
    learnable_mean,
    local_statistics,
)
from .glff import GlffParams, glff_forward, multi_head_attention, patch_embed
from .model import (
    ABLATION_SWEEP,
    AblationConfig,
    CATEGORY_NAMES,
    GdgtConfig,
    GdgtNet,
    NUM_CATEGORIES,
    load_checkpoint,
    save_checkpoint,
)
from .data import (
    PALETTE,
    Scene,
    TileSet,
    multiscale_rescale,
    read_scene,
    resize_to_input,
    stitch_predictions,
    synth_dataset,
    synth_scene,
    tile_scene,
    write_mask,
)
from .metrics import ConfusionMatrix, accumulate, compute_metrics, report
from .training import (
    DatasetSpec,
    TrainConfig,
    TrainingDiverged,
    ablation_sweep,
    cross_entropy,
    evaluate,
    train,
)
from .estimator import GdgtSegmenter

__version__ = "0.1.0"

__all__ = [
    "ABLATION_SWEEP",
    "AblationConfig",
    "CATEGORY_NAMES",
    "ConfusionMatrix",
    "DatasetSpec",
    "DgdParams",
    "GdgtConfig",
    "GdgtNet",
    "GdgtSegmenter",
    "GlffParams",
    "NUM_CATEGORIES",
    "PALETTE",
    "Parameter",
    "Scene",
    "ShapeError",
    "Tensor",
    "TileSet",
    "TrainConfig",
    "TrainingDiverged",
    "WaveletBands",
    "accumulate",
    "ablation_sweep",
    "backward",
    "build_guide",
    "compute_metrics",
    "conv2d",
    "cross_entropy",
    "dgd_forward",
    "downsampled_guide",
    "elementwise",
    "evaluate",
    "glff_forward",
    "grad_check",
    "guided_coefficients",
    "haar_dwt",
    "inverse_haar_dwt",
    "learnable_mean",
    "load_checkpoint",
    "local_statistics",
    "matmul",
    "multi_head_attention",
    "multiscale_rescale",
    "patch_embed",
    "read_scene",
    "report",
    "resize_to_input",
    "save_checkpoint",
    "softmax",
    "stitch_predictions",
    "synth_dataset",
    "synth_scene",
    "tile_scene",
    "train",
    "upsample",
    "write_mask",
]
