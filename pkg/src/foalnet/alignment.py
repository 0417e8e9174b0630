"""Cross-modal alignment: projections into a shared space and the
supervised contrastive objective that pulls same-emotion pairs together.

The loss treats every same-label (audio_i, video_j) pair in the batch as a
positive, including i == j, and normalizes by 2N so the two directions
(audio-to-video and video-to-audio) average instead of add.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import (
    ShapeError,
    Tensor,
    log_softmax,
    matmul,
    power,
    transpose_last2,
    tsum,
)


@dataclass
class AlignmentConfig:
    """Knobs for the similarity computation and its loss.

    temperature scales logits multiplicatively (larger = sharper softmax).
    per_positive_norm divides each anchor's positive mass by its positive
    count, so anchors with many same-label partners don't dominate.
    """

    proj_dim: int = 512
    temperature: float = 10.0
    l2_normalize: bool = True
    per_positive_norm: bool = False

    def validate(self) -> None:
        if self.proj_dim < 1:
            raise ValueError(f"proj_dim must be positive, got {self.proj_dim}")
        if not self.temperature > 0:
            raise ValueError(f"temperature must be positive, got {self.temperature}")


def emotion_match_matrix(labels) -> np.ndarray:
    """N x N float matrix with 1.0 where labels agree, else 0.0.

    Symmetric with a unit diagonal; constant with respect to the graph.
    """
    lab = np.asarray(labels)
    if lab.ndim != 1 or lab.size == 0:
        raise ShapeError("labels must be a non-empty 1-D sequence")
    return (lab[:, None] == lab[None, :]).astype(np.float64)


def l2_normalize_rows(x: Tensor, eps: float = 1e-12) -> Tensor:
    """Scale each row to unit L2 norm (built from differentiable primitives)."""
    if x.ndim != 2:
        raise ShapeError(f"row normalization expects rank-2 input, got rank {x.ndim}")
    sq = tsum(x * x, axis=-1, keepdims=True)
    return x * power(sq + Tensor(np.full(sq.shape, eps)), -0.5)


def similarity_matrices(e_audio: Tensor, e_video: Tensor,
                        cfg: AlignmentConfig) -> tuple[Tensor, Tensor]:
    """Temperature-scaled pairwise similarities between projected batches.

    Returns (audio-to-video, video-to-audio). The second is the exact
    transpose of the first: it is built with transpose_last2 rather than a
    second matmul, so the equality holds bitwise, not just numerically.
    """
    if e_audio.ndim != 2 or e_video.ndim != 2:
        raise ShapeError("similarity expects rank-2 [N, D] projections")
    if e_audio.shape != e_video.shape:
        raise ShapeError(
            f"projected batches disagree: {e_audio.shape} vs {e_video.shape}")
    if cfg.l2_normalize:
        e_audio = l2_normalize_rows(e_audio)
        e_video = l2_normalize_rows(e_video)
    c_a2v = matmul(e_audio, transpose_last2(e_video)) * cfg.temperature
    c_v2a = transpose_last2(c_a2v)
    return c_a2v, c_v2a


def alignment_loss(c_a2v: Tensor, c_v2a: Tensor, match: np.ndarray,
                   cfg: AlignmentConfig) -> Tensor:
    """Negative mean log-likelihood of same-label pairs under row softmax.

    Both direction matrices are log-softmaxed over their rows (each anchor
    normalizes over all N candidates of the other modality), multiplied by
    the 0/1 match matrix, summed, and scaled by -1/(2N).
    """
    n = _square_batch(c_a2v, c_v2a, match)
    weights = np.asarray(match, dtype=np.float64)
    if cfg.per_positive_norm:
        # every row has >= 1 positive (the diagonal), so no zero division
        weights = weights / weights.sum(axis=1, keepdims=True)
    w = Tensor(weights)
    pulled = tsum(log_softmax(c_a2v, axis=1) * w) + tsum(log_softmax(c_v2a, axis=1) * w)
    return pulled * (-1.0 / (2.0 * n))


def _square_batch(c_a2v: Tensor, c_v2a: Tensor, match: np.ndarray) -> int:
    if c_a2v.ndim != 2 or c_a2v.shape[0] != c_a2v.shape[1]:
        raise ShapeError(f"similarity matrix must be square, got {c_a2v.shape}")
    if c_v2a.shape != c_a2v.shape:
        raise ShapeError("direction matrices disagree in shape")
    if np.asarray(match).shape != c_a2v.shape:
        raise ShapeError("match matrix shape does not cover the batch")
    return c_a2v.shape[0]
