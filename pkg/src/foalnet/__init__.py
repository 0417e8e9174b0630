"""Audio-video emotion recognition over precomputed embeddings.

Everything runs on a self-contained reverse-mode tensor engine (numpy
float64): cross-modal contrastive alignment, hard-negative pair matching,
cross-attention fusion, and a deterministic training loop with
leave-one-group-out cross-validation.
"""

from .alignment import (
    AlignmentConfig,
    alignment_loss,
    emotion_match_matrix,
    l2_normalize_rows,
    similarity_matrices,
)
from .data import (
    Batch,
    DatasetError,
    DatasetHeader,
    EmbeddingDataset,
    Sample,
    SyntheticSpec,
    generate_synthetic,
    load_dataset,
    make_batches,
    save_dataset,
    split_leave_one_group_out,
)
from .layers import (
    CrossAttentionLayer,
    DropoutLayer,
    LayerNormLayer,
    LinearLayer,
    Module,
    ProjectionMLP,
)
from .matching import (
    HardNegatives,
    gather_negatives,
    mask_positives,
    mem_forward_loss,
    mem_labels,
    mine_hard_negatives,
)
from .model import (
    CheckpointError,
    FoalNet,
    FoalNetConfig,
    LossBreakdown,
    load_checkpoint,
    save_checkpoint,
)
from .tensor import (
    NumericError,
    ShapeError,
    Tensor,
    grad_check,
    no_grad,
)
from .training import (
    AdamW,
    CrossValResult,
    Metrics,
    OptimConfig,
    TrainResult,
    compute_metrics,
    cross_validate,
    evaluate,
    run_ablation,
    train,
)

__all__ = [
    "AdamW",
    "AlignmentConfig",
    "Batch",
    "CheckpointError",
    "CrossAttentionLayer",
    "CrossValResult",
    "DatasetError",
    "DatasetHeader",
    "DropoutLayer",
    "EmbeddingDataset",
    "FoalNet",
    "FoalNetConfig",
    "HardNegatives",
    "LayerNormLayer",
    "LinearLayer",
    "LossBreakdown",
    "Metrics",
    "Module",
    "NumericError",
    "OptimConfig",
    "ProjectionMLP",
    "Sample",
    "ShapeError",
    "SyntheticSpec",
    "Tensor",
    "TrainResult",
    "alignment_loss",
    "compute_metrics",
    "cross_validate",
    "emotion_match_matrix",
    "evaluate",
    "gather_negatives",
    "generate_synthetic",
    "grad_check",
    "l2_normalize_rows",
    "load_checkpoint",
    "load_dataset",
    "make_batches",
    "mask_positives",
    "mem_forward_loss",
    "mem_labels",
    "mine_hard_negatives",
    "no_grad",
    "run_ablation",
    "save_checkpoint",
    "save_dataset",
    "similarity_matrices",
    "split_leave_one_group_out",
    "train",
]

__version__ = "0.1.0"
