"""Committed golden files pin the on-disk formats.

The byte strings in tests/golden/ were produced once and must never drift:
any platform that regenerates them from the pinned configs has to produce
identical bytes, and any platform that loads them has to see identical
values. Together those two directions enforce the little-endian contract.
"""

import hashlib
import struct
from pathlib import Path

import numpy as np

from foalnet.data import SyntheticSpec, generate_synthetic, load_dataset, save_dataset
from foalnet.model import FoalNet, load_checkpoint, save_checkpoint

from conftest import make_toy_config

GOLDEN = Path(__file__).parent / "golden"

DATASET_SHA256 = "d801149856c00d1e6425d6ba12d48f9fa1b9720e95cde55e801dcdc95460e709"
DATASET_BYTES = 2748
CHECKPOINT_SHA256 = "5054c098dafa1886ac3e0659dffa6dc9aaced83ce8e9e89f6e99b80471d44eba"
CHECKPOINT_BYTES = 13436

GOLDEN_SPEC = SyntheticSpec(classes=4, groups=2, per_class=3, d_a=6, d_v=4,
                            t_frames=3, f_frames=2, separation=3.0, noise=1.0,
                            scheme="complementary", seed=123)


def sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


class TestGoldenDataset:
    def test_committed_bytes_unchanged(self):
        path = GOLDEN / "dataset.bin"
        assert path.stat().st_size == DATASET_BYTES
        assert sha256(path) == DATASET_SHA256

    def test_regeneration_is_byte_identical(self, tmp_path):
        ds = generate_synthetic(GOLDEN_SPEC)
        fresh = tmp_path / "dataset.bin"
        save_dataset(fresh, ds.header, ds.samples)
        assert fresh.read_bytes() == (GOLDEN / "dataset.bin").read_bytes()

    def test_loaded_values_match_pinned(self):
        ds = load_dataset(GOLDEN / "dataset.bin")
        h = ds.header
        assert (h.classes, h.t_frames, h.f_frames, h.d_a, h.d_v,
                h.sample_count) == (4, 3, 2, 6, 4, 24)
        assert h.label_names == ["happy", "angry", "sad", "neutral"]
        assert [s.label for s in ds.samples[:6]] == [0, 0, 0, 1, 1, 1]
        np.testing.assert_array_equal(
            ds.samples[0].audio[0, :3],
            np.array([-5.174835205078125, -0.275438517332077,
                      5.4054059982299805], dtype=np.float32))
        assert ds.samples[23].video[-1, -1] == np.float32(-0.3723527789115906)

    def test_header_is_little_endian_on_disk(self):
        raw = (GOLDEN / "dataset.bin").read_bytes()
        assert raw[:4] == b"FOAL"
        version, classes, t, f, d_a, d_v, count = struct.unpack("<7I", raw[4:32])
        assert (version, classes, t, f, d_a, d_v, count) == (1, 4, 3, 2, 6, 4, 24)


class TestGoldenCheckpoint:
    def test_committed_bytes_unchanged(self):
        path = GOLDEN / "model.ckpt"
        assert path.stat().st_size == CHECKPOINT_BYTES
        assert sha256(path) == CHECKPOINT_SHA256

    def test_regeneration_is_byte_identical(self, tmp_path):
        model = FoalNet(make_toy_config())
        fresh = tmp_path / "model.ckpt"
        save_checkpoint(model, fresh)
        assert fresh.read_bytes() == (GOLDEN / "model.ckpt").read_bytes()

    def test_loaded_values_match_pinned(self):
        # load into a differently seeded model so every value must come
        # from the file, not from construction
        model = FoalNet(make_toy_config(seed=404))
        load_checkpoint(model, GOLDEN / "model.ckpt")
        params = dict(model.named_parameters())
        np.testing.assert_array_equal(
            params["proj_a.lin1.W"].data[0, :3],
            [0.2761006635879943, 0.240319949030722, 0.11795073668442735])
        assert float(params["emo_head.b"].data.sum()) == 0.0
        assert model.param_count() == 1390

    def test_header_is_little_endian_on_disk(self):
        raw = (GOLDEN / "model.ckpt").read_bytes()
        assert raw[:4] == b"FOCK"
        version, count = struct.unpack("<II", raw[4:12])
        assert version == 1
        assert count == len(list(FoalNet(make_toy_config()).named_parameters()))
