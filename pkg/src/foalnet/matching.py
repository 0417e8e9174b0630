"""Hard-negative mining over the similarity matrices and the binary
matched/mismatched objective that sharpens the fused representations.

Mining is deliberately outside the autodiff graph: indices come from raw
numpy views of the similarity logits, and the -inf masking never touches a
Tensor, so the engine's finite checks stay intact. Gradients flow only
through the fusion/classifier weights via the gathered raw sequences.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import (
    ShapeError,
    Tensor,
    concat,
    cross_entropy,
    gather_rows,
    mean_pool_time,
)

MATCHED = 1
MISMATCHED = 0


@dataclass
class HardNegatives:
    """Per-anchor indices of the most confusable different-label candidate.

    id_a2v[i] is the video picked for audio anchor i, id_v2a[i] the audio
    picked for video anchor i. An anchor with no different-label candidate
    in the batch is invalid: its index falls back to the anchor's own row
    and the valid flag excludes it from the loss.
    """

    id_a2v: np.ndarray
    id_v2a: np.ndarray
    valid_a: np.ndarray
    valid_v: np.ndarray


def _raw(matrix) -> np.ndarray:
    return np.asarray(matrix.data if isinstance(matrix, Tensor) else matrix,
                      dtype=np.float64)


def mask_positives(scores: np.ndarray, match: np.ndarray) -> np.ndarray:
    """Copy of the score matrix with same-label entries driven to -inf."""
    raw = _raw(scores)
    m = np.asarray(match)
    if raw.ndim != 2 or raw.shape[0] != raw.shape[1]:
        raise ShapeError(f"score matrix must be square, got {raw.shape}")
    if m.shape != raw.shape:
        raise ShapeError("match matrix shape does not cover the scores")
    masked = raw.copy()
    masked[m != 0] = -np.inf
    return masked


def _pick(masked: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    valid = np.isfinite(masked).any(axis=1)
    ids = np.arange(masked.shape[0], dtype=np.intp)
    if valid.any():
        rows = masked[valid]
        shifted = rows - rows.max(axis=1, keepdims=True)  # masked slots: exp(-inf) = 0
        probs = np.exp(shifted)
        probs /= probs.sum(axis=1, keepdims=True)
        ids[valid] = probs.argmax(axis=1)
    return ids, valid


def mine_hard_negatives(c_a2v, c_v2a, match: np.ndarray) -> HardNegatives:
    """Argmax of the positive-masked row softmax, in each direction.

    The softmax cannot reorder a row, so the pick equals the plain argmax
    of the masked scores; ties resolve to the lowest index.
    """
    id_a2v, valid_a = _pick(mask_positives(c_a2v, match))
    id_v2a, valid_v = _pick(mask_positives(c_v2a, match))
    return HardNegatives(id_a2v=id_a2v, id_v2a=id_v2a,
                         valid_a=valid_a, valid_v=valid_v)


def gather_negatives(z_audio: Tensor, z_video: Tensor,
                     picks: HardNegatives) -> tuple[Tensor, Tensor]:
    """Reorder raw sequences into the mined mismatched pairing.

    Returns (audio rows for the video anchors, video rows for the audio
    anchors); invalid anchors carry their own partner as a placeholder.
    """
    return gather_rows(z_audio, picks.id_v2a), gather_rows(z_video, picks.id_a2v)


def mem_labels(n: int) -> np.ndarray:
    """Targets for a concatenated (positives, negatives) logit stack."""
    return np.concatenate([np.full(n, MATCHED, dtype=np.intp),
                           np.full(n, MISMATCHED, dtype=np.intp)])


def _stream_loss(pooled_pos: Tensor, pooled_neg: Tensor,
                 valid: np.ndarray, logits_fn) -> Tensor | None:
    """Cross-entropy over one modality's stacked pos/neg pooled features.

    Rows belonging to invalid anchors are dropped from both halves: their
    "negative" is a placeholder positive pair and would poison the targets.
    """
    keep = np.nonzero(valid)[0]
    if keep.size == 0:
        return None
    n = valid.shape[0]
    feats = concat([pooled_pos, pooled_neg], axis=0)
    logits = logits_fn(feats)
    if keep.size < n:
        logits = gather_rows(logits, np.concatenate([keep, keep + n]))
    return cross_entropy(logits, mem_labels(keep.size))


def mem_forward_loss(model, z_audio: Tensor, z_video: Tensor,
                     picks: HardNegatives,
                     pooled_pos_a: Tensor | None = None,
                     pooled_pos_v: Tensor | None = None) -> Tensor:
    """Average of the two per-modality matched/mismatched cross-entropies.

    Each stream fuses its modality's matched pair and its hard-negative
    pair, mean-pools over time, maps through the model's shared 2-way
    matching head, stacks matched-then-mismatched rows, and applies
    cross-entropy against mem_labels. The matched fusion is the same one
    the classifier consumes, so callers that already pooled it can pass
    pooled_pos_a / pooled_pos_v and skip recomputation.

    A stream whose anchors are all invalid contributes exactly zero; if
    both streams are empty the result is the constant 0.0.
    """
    terms = []
    if picks.valid_a.any():
        if pooled_pos_a is None:
            pooled_pos_a = mean_pool_time(model.fuse_audio(z_audio, z_video))
        z_video_neg = gather_rows(z_video, picks.id_a2v)
        pooled_neg_a = mean_pool_time(model.fuse_audio(z_audio, z_video_neg))
        loss = _stream_loss(pooled_pos_a, pooled_neg_a, picks.valid_a,
                            lambda f: model.match_logits(f, "audio"))
        terms.append(loss)
    if picks.valid_v.any():
        if pooled_pos_v is None:
            pooled_pos_v = mean_pool_time(model.fuse_video(z_video, z_audio))
        z_audio_neg = gather_rows(z_audio, picks.id_v2a)
        pooled_neg_v = mean_pool_time(model.fuse_video(z_video, z_audio_neg))
        loss = _stream_loss(pooled_pos_v, pooled_neg_v, picks.valid_v,
                            lambda f: model.match_logits(f, "video"))
        terms.append(loss)
    terms = [t for t in terms if t is not None]
    if not terms:
        return Tensor(np.asarray(0.0))
    total = terms[0] if len(terms) == 1 else terms[0] + terms[1]
    return total * Tensor(np.asarray(0.5))
