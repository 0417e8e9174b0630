import numpy as np
import pytest

from foalnet import AlignmentConfig, FoalNet, FoalNetConfig
from foalnet.data import Batch


def make_toy_config(**overrides) -> FoalNetConfig:
    """Small dims, dropout off, deterministic: the workhorse test config."""
    base = dict(d_a=8, d_v=6, classes=4, heads=2, fusion_layers=2,
                attn_dropout=0.0, proj_hidden=16, proj_dropout=0.0,
                align=AlignmentConfig(proj_dim=6), seed=11)
    base.update(overrides)
    return FoalNetConfig(**base)


def make_toy_batch(seed: int = 7, n: int = 4, t: int = 3, f: int = 2,
                   d_a: int = 8, d_v: int = 6, labels=None) -> Batch:
    rng = np.random.default_rng(seed)
    if labels is None:
        labels = rng.integers(0, 4, size=n)
    return Batch(audio=rng.standard_normal((n, t, d_a)),
                 video=rng.standard_normal((n, f, d_v)),
                 labels=np.asarray(labels, dtype=np.intp),
                 groups=np.zeros(n, dtype=np.intp))


@pytest.fixture
def toy_model() -> FoalNet:
    return FoalNet(make_toy_config()).eval()


@pytest.fixture
def toy_batch() -> Batch:
    return make_toy_batch(labels=[0, 1, 0, 2])


def param_arrays(model: FoalNet) -> dict[str, np.ndarray]:
    """Raw parameter values keyed by traversal name, for the oracles."""
    return {name: p.data for name, p in model.named_parameters()}
