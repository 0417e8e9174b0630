"""Parameterized differentiable layers: linear, projection MLP, layer norm,
dropout, and multi-head cross-attention."""

from __future__ import annotations

import numpy as np

from .tensor import (
    ShapeError,
    Tensor,
    concat,
    matmul,
    softmax,
    transpose_last2,
)


class Module:
    """Minimal parameter container with named-parameter traversal.

    Child modules and lists of modules are discovered from instance
    attributes in insertion order, which keeps parameter naming (and
    therefore checkpoints and optimizer state) deterministic.
    """

    def named_parameters(self, prefix: str = ""):
        for key, value in vars(self).items():
            name = f"{prefix}{key}"
            if isinstance(value, Tensor) and value.requires_grad:
                yield name, value
            elif isinstance(value, Module):
                yield from value.named_parameters(f"{name}.")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{name}.{i}.")

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def modules(self):
        yield self
        for value in vars(self).values():
            if isinstance(value, Module):
                yield from value.modules()
            elif isinstance(value, (list, tuple)):
                for item in value:
                    if isinstance(item, Module):
                        yield from item.modules()

    def train(self):
        for m in self.modules():
            if isinstance(m, DropoutLayer):
                m.mode = "train"
        return self

    def eval(self):
        for m in self.modules():
            if isinstance(m, DropoutLayer):
                m.mode = "eval"
        return self

    def zero_grad(self):
        for p in self.parameters():
            p.grad = None


def _init_weight(rng: np.random.Generator, fan_in: int, fan_out: int) -> Tensor:
    bound = np.sqrt(1.0 / fan_in)
    return Tensor(rng.uniform(-bound, bound, size=(fan_in, fan_out)), requires_grad=True)


class LinearLayer(Module):
    """Affine map x @ W + b over the last axis."""

    def __init__(self, in_dim: int, out_dim: int, rng: np.random.Generator):
        self.W = _init_weight(rng, in_dim, out_dim)
        self.b = Tensor(np.zeros(out_dim), requires_grad=True)

    @property
    def in_dim(self) -> int:
        return self.W.shape[0]

    @property
    def out_dim(self) -> int:
        return self.W.shape[1]

    def __call__(self, x: Tensor) -> Tensor:
        if x.shape[-1] != self.in_dim:
            raise ShapeError(f"linear expects last axis {self.in_dim}, got input shape {x.shape}")
        return matmul(x, self.W) + self.b


class DropoutLayer(Module):
    """Inverted dropout with its own seeded generator.

    Train mode keeps each element with probability 1 - rate and rescales by
    1/(1 - rate) so the expectation matches the input; eval mode is the
    identity.
    """

    def __init__(self, rate: float, rng: np.random.Generator):
        if not 0.0 <= rate < 1.0:
            raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
        self.rate = rate
        self.mode = "train"
        self.rng = rng

    def __call__(self, x: Tensor) -> Tensor:
        if self.mode == "eval" or self.rate == 0.0:
            return x
        keep = 1.0 - self.rate
        mask = (self.rng.random(x.shape) < keep) / keep
        return x * Tensor(mask)


class ProjectionMLP(Module):
    """Two linear layers with a rectifier and dropout in between.

    Maps time-pooled [N, D_in] embeddings to [N, out_dim] feature vectors.
    """

    def __init__(self, in_dim: int, hidden_dim: int, out_dim: int,
                 dropout: float, rng: np.random.Generator,
                 drop_rng: np.random.Generator | None = None):
        self.lin1 = LinearLayer(in_dim, hidden_dim, rng)
        self.drop = DropoutLayer(dropout, drop_rng if drop_rng is not None else rng)
        self.lin2 = LinearLayer(hidden_dim, out_dim, rng)

    def __call__(self, pooled: Tensor) -> Tensor:
        if pooled.ndim != 2:
            raise ShapeError(f"projection expects rank-2 pooled input, got shape {pooled.shape}")
        return self.lin2(self.drop(self.lin1(pooled).relu()))


class LayerNormLayer(Module):
    """Per-feature-vector normalization with learnable gain and bias."""

    def __init__(self, dim: int, eps: float = 1e-5):
        if dim < 2:
            raise ShapeError(f"layer norm needs a feature dim >= 2, got {dim}")
        self.dim = dim
        self.eps = eps
        self.gain = Tensor(np.ones(dim), requires_grad=True)
        self.bias = Tensor(np.zeros(dim), requires_grad=True)

    def __call__(self, x: Tensor) -> Tensor:
        if x.shape[-1] != self.dim:
            raise ShapeError(f"layer norm dim {self.dim} does not match input shape {x.shape}")
        centered = x - x.mean(axis=-1, keepdims=True)
        var = (centered * centered).mean(axis=-1, keepdims=True)
        normed = centered * (var + self.eps) ** -0.5
        return normed * self.gain + self.bias


class _AttentionHead(Module):
    def __init__(self, query_dim: int, kv_dim: int, head_dim: int, rng: np.random.Generator):
        self.wq = LinearLayer(query_dim, head_dim, rng)
        self.wk = LinearLayer(kv_dim, head_dim, rng)
        self.wv = LinearLayer(kv_dim, head_dim, rng)


class CrossAttentionLayer(Module):
    """Multi-head cross-attention with residual add and layer norm.

    Queries come from one modality's sequence, keys/values from the other.
    Each head owns its projection weights; head outputs are concatenated to
    the query model dim (no output projection), added to the query sequence,
    and layer-normalized. The output sequence shape equals the query shape.
    """

    def __init__(self, model_dim: int, kv_dim: int, heads: int,
                 attn_dropout: float, rng: np.random.Generator,
                 drop_rng: np.random.Generator | None = None):
        if heads < 1 or model_dim % heads != 0:
            raise ShapeError(f"head count {heads} must divide query model dim {model_dim}")
        self.model_dim = model_dim
        self.kv_dim = kv_dim
        self.head_dim = model_dim // heads
        self.heads = [_AttentionHead(model_dim, kv_dim, self.head_dim, rng) for _ in range(heads)]
        self.norm = LayerNormLayer(model_dim)
        self.attn_drop = DropoutLayer(attn_dropout, drop_rng if drop_rng is not None else rng)
        self.scale = 1.0 / np.sqrt(self.head_dim)

    def __call__(self, query_seq: Tensor, kv_seq: Tensor) -> Tensor:
        if query_seq.ndim != 3 or kv_seq.ndim != 3:
            raise ShapeError("cross-attention expects rank-3 [N, T, D] sequences")
        if query_seq.shape[-1] != self.model_dim:
            raise ShapeError(f"query feature dim {query_seq.shape[-1]} != model dim {self.model_dim}")
        if kv_seq.shape[-1] != self.kv_dim:
            raise ShapeError(f"key/value feature dim {kv_seq.shape[-1]} != kv dim {self.kv_dim}")
        if query_seq.shape[0] != kv_seq.shape[0]:
            raise ShapeError("query and key/value batches disagree")

        outputs = []
        for head in self.heads:
            q = head.wq(query_seq)                      # [N, Tq, d_k]
            k = head.wk(kv_seq)                         # [N, Tk, d_k]
            v = head.wv(kv_seq)
            scores = matmul(q, transpose_last2(k)) * self.scale
            attn = softmax(scores, axis=-1)             # rows sum to 1 pre-dropout
            attn = self.attn_drop(attn)
            outputs.append(matmul(attn, v))
        merged = concat(outputs, axis=-1)
        return self.norm(merged + query_seq)

    def attention_weights(self, query_seq: Tensor, kv_seq: Tensor) -> list[np.ndarray]:
        """Pre-dropout attention matrices per head (diagnostics only)."""
        weights = []
        for head in self.heads:
            q = head.wq(query_seq)
            k = head.wk(kv_seq)
            scores = matmul(q, transpose_last2(k)) * self.scale
            weights.append(softmax(scores, axis=-1).data)
        return weights
