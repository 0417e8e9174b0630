"""The full two-modality network: shared-space projections, two fusion
branches of stacked cross-attention, an emotion classifier over the pooled
concatenation, and a binary matching head, plus the composite objective
and checkpoint serialization.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .alignment import (
    AlignmentConfig,
    alignment_loss,
    emotion_match_matrix,
    similarity_matrices,
)
from .data import Batch
from .layers import CrossAttentionLayer, LinearLayer, Module, ProjectionMLP
from .matching import mem_forward_loss, mine_hard_negatives
from .tensor import ShapeError, Tensor, concat, cross_entropy, mean_pool_time

CHECKPOINT_MAGIC = b"FOCK"
CHECKPOINT_VERSION = 1


class CheckpointError(ValueError):
    """Raised when a checkpoint file is malformed or mismatches the model."""


@dataclass
class FoalNetConfig:
    d_a: int
    d_v: int
    classes: int = 4
    heads: int = 4
    fusion_layers: int = 2
    attn_dropout: float = 0.1
    proj_hidden: int = 512
    proj_dropout: float = 0.5
    align: AlignmentConfig = field(default_factory=AlignmentConfig)
    lam: float = 0.01
    enable_avel: bool = True
    enable_mem: bool = True
    seed: int = 0

    def validate(self) -> None:
        if self.d_a < 1 or self.d_v < 1:
            raise ValueError("input feature dims must be positive")
        if self.classes < 2:
            raise ValueError(f"need at least 2 classes, got {self.classes}")
        if self.fusion_layers < 1:
            raise ValueError("need at least one fusion layer per branch")
        if self.heads < 1 or self.d_a % self.heads or self.d_v % self.heads:
            raise ShapeError(
                f"head count {self.heads} must divide both feature dims "
                f"({self.d_a}, {self.d_v})")
        if self.lam < 0:
            raise ValueError(f"matching loss weight must be >= 0, got {self.lam}")
        if self.proj_hidden < 1:
            raise ValueError("projection hidden width must be positive")
        self.align.validate()


@dataclass
class LossBreakdown:
    """Scalar components of one forward pass. l_total is computed on the
    same arithmetic path as the Tensor loss, so the identity
    l_total == l_ce + l_a + lam * l_m holds bitwise, not approximately."""

    l_total: float
    l_ce: float
    l_a: float
    l_m: float


class FoalNet(Module):
    """Align-then-fuse network over precomputed embedding sequences.

    Construction is deterministic in config.seed. Weight initialization
    and dropout consume independent random streams, so toggling the
    auxiliary tasks never perturbs the classifier's dropout draws.
    """

    def __init__(self, config: FoalNetConfig):
        config.validate()
        self.config = config
        root = np.random.SeedSequence(config.seed)
        init_ss, drop_ss = root.spawn(2)
        init_rng = np.random.default_rng(init_ss)
        drop_streams = iter(np.random.default_rng(s)
                            for s in drop_ss.spawn(2 + 2 * config.fusion_layers))

        d_a, d_v = config.d_a, config.d_v
        self.proj_a = ProjectionMLP(d_a, config.proj_hidden, config.align.proj_dim,
                                    config.proj_dropout, init_rng, next(drop_streams))
        self.proj_v = ProjectionMLP(d_v, config.proj_hidden, config.align.proj_dim,
                                    config.proj_dropout, init_rng, next(drop_streams))
        self.branch_a = [CrossAttentionLayer(d_a, d_v, config.heads,
                                             config.attn_dropout, init_rng,
                                             next(drop_streams))
                         for _ in range(config.fusion_layers)]
        self.branch_v = [CrossAttentionLayer(d_v, d_a, config.heads,
                                             config.attn_dropout, init_rng,
                                             next(drop_streams))
                         for _ in range(config.fusion_layers)]
        if d_a != d_v:
            width = max(d_a, d_v)
            self.adapter_a = LinearLayer(d_a, width, init_rng)
            self.adapter_v = LinearLayer(d_v, width, init_rng)
            self.match_head = LinearLayer(width, 2, init_rng)
        else:
            self.adapter_a = None
            self.adapter_v = None
            self.match_head = LinearLayer(d_a, 2, init_rng)
        self.emo_head = LinearLayer(d_a + d_v, config.classes, init_rng)

    # -- forward pieces ----------------------------------------------------

    def fuse_audio(self, query_seq: Tensor, kv_seq: Tensor) -> Tensor:
        """Audio branch: audio queries attend over raw video key/values.

        Every layer reuses the raw opposite-modality sequence as keys and
        values; only the query stream threads through the stack.
        """
        out = query_seq
        for layer in self.branch_a:
            out = layer(out, kv_seq)
        return out

    def fuse_video(self, query_seq: Tensor, kv_seq: Tensor) -> Tensor:
        out = query_seq
        for layer in self.branch_v:
            out = layer(out, kv_seq)
        return out

    def fuse(self, z_audio: Tensor, z_video: Tensor) -> tuple[Tensor, Tensor]:
        return self.fuse_audio(z_audio, z_video), self.fuse_video(z_video, z_audio)

    def project(self, z_audio: Tensor, z_video: Tensor) -> tuple[Tensor, Tensor]:
        """Time-pool the raw sequences and map into the shared space."""
        return (self.proj_a(mean_pool_time(z_audio)),
                self.proj_v(mean_pool_time(z_video)))

    def match_logits(self, pooled: Tensor, branch: str) -> Tensor:
        """2-way matched/mismatched logits for pooled fused features."""
        if branch == "audio":
            adapter = self.adapter_a
        elif branch == "video":
            adapter = self.adapter_v
        else:
            raise ValueError(f"branch must be 'audio' or 'video', got {branch!r}")
        if adapter is not None:
            pooled = adapter(pooled)
        return self.match_head(pooled)

    def classify(self, z_audio: Tensor, z_video: Tensor) -> Tensor:
        f_audio, f_video = self.fuse(z_audio, z_video)
        pooled = concat([mean_pool_time(f_audio), mean_pool_time(f_video)], axis=-1)
        return self.emo_head(pooled)

    # -- objective ---------------------------------------------------------

    def total_loss(self, batch: Batch) -> tuple[Tensor, LossBreakdown]:
        """Composite objective l_ce + l_a + lam * l_m over one batch.

        Disabled components contribute an exact 0.0 and leave no trace in
        the graph. The similarity matrices are computed whenever either
        auxiliary task needs them; mining reads their raw values only.
        """
        cfg = self.config
        n = batch.audio.shape[0]
        aux = cfg.enable_avel or cfg.enable_mem
        if aux and n < 2:
            raise ValueError(
                "alignment/matching need a batch of at least 2 samples, got "
                f"{n}")
        z_audio = Tensor(batch.audio)
        z_video = Tensor(batch.video)
        zero = Tensor(np.asarray(0.0))

        l_a = zero
        picks = None
        if aux:
            match = emotion_match_matrix(batch.labels)
            e_audio, e_video = self.project(z_audio, z_video)
            c_a2v, c_v2a = similarity_matrices(e_audio, e_video, cfg.align)
            if cfg.enable_avel:
                l_a = alignment_loss(c_a2v, c_v2a, match, cfg.align)
            if cfg.enable_mem:
                picks = mine_hard_negatives(c_a2v.data, c_v2a.data, match)

        f_audio = self.fuse_audio(z_audio, z_video)
        f_video = self.fuse_video(z_video, z_audio)
        pooled_a = mean_pool_time(f_audio)
        pooled_v = mean_pool_time(f_video)

        l_m = zero
        if picks is not None:
            l_m = mem_forward_loss(self, z_audio, z_video, picks,
                                   pooled_pos_a=pooled_a, pooled_pos_v=pooled_v)

        logits = self.emo_head(concat([pooled_a, pooled_v], axis=-1))
        l_ce = cross_entropy(logits, batch.labels)
        total = l_ce + l_a + cfg.lam * l_m
        breakdown = LossBreakdown(l_total=float(total.data),
                                  l_ce=float(l_ce.data),
                                  l_a=float(l_a.data),
                                  l_m=float(l_m.data))
        return total, breakdown

    def param_count(self) -> int:
        return sum(p.size for p in self.parameters())


# -- checkpoint serialization ----------------------------------------------


def save_checkpoint(model: FoalNet, path) -> None:
    """Write every named parameter, little-endian, in traversal order."""
    entries = list(model.named_parameters())
    blob = [CHECKPOINT_MAGIC, struct.pack("<II", CHECKPOINT_VERSION, len(entries))]
    for name, p in entries:
        raw = name.encode("utf-8")
        blob.append(struct.pack("<H", len(raw)))
        blob.append(raw)
        blob.append(struct.pack("<I", p.ndim))
        blob.append(struct.pack(f"<{p.ndim}I", *p.shape))
        blob.append(np.ascontiguousarray(p.data, dtype="<f8").tobytes())
    with open(path, "wb") as fh:
        fh.write(b"".join(blob))


def load_checkpoint(model: FoalNet, path) -> None:
    """Load parameters in place, validating names and shapes.

    The file must carry exactly the parameters the model (built from its
    config) expects; extras, omissions, renames, and shape drift all fail.
    """
    with open(path, "rb") as fh:
        buf = fh.read()
    offset = 0

    def take(count: int) -> bytes:
        nonlocal offset
        if offset + count > len(buf):
            raise CheckpointError(
                f"checkpoint truncated at byte {offset} (wanted {count} more)")
        piece = buf[offset:offset + count]
        offset += count
        return piece

    if take(4) != CHECKPOINT_MAGIC:
        raise CheckpointError("not a checkpoint file (bad magic)")
    version, count = struct.unpack("<II", take(8))
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")

    loaded: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = struct.unpack("<H", take(2))
        name = take(name_len).decode("utf-8")
        (rank,) = struct.unpack("<I", take(4))
        dims = struct.unpack(f"<{rank}I", take(4 * rank))
        n_values = int(np.prod(dims, dtype=np.int64)) if rank else 1
        data = np.frombuffer(take(8 * n_values), dtype="<f8").reshape(dims)
        if name in loaded:
            raise CheckpointError(f"duplicate parameter {name!r} in checkpoint")
        if not np.isfinite(data).all():
            raise CheckpointError(f"non-finite values in parameter {name!r}")
        loaded[name] = data
    if offset != len(buf):
        raise CheckpointError(f"{len(buf) - offset} trailing bytes after parameters")

    params = dict(model.named_parameters())
    missing = sorted(set(params) - set(loaded))
    extra = sorted(set(loaded) - set(params))
    if missing or extra:
        raise CheckpointError(
            f"parameter names mismatch: missing {missing}, unexpected {extra}")
    for name, p in params.items():
        if loaded[name].shape != p.shape:
            raise CheckpointError(
                f"shape mismatch for {name!r}: checkpoint {loaded[name].shape}, "
                f"model {p.shape}")
    for name, p in params.items():
        p.data = loaded[name].astype(np.float64, copy=True)
        p.grad = None
