"""Embedding dataset format, batching, leave-one-group-out splits, and a
synthetic complementary-modality generator.

On-disk layout (little-endian, 32-bit float storage):

    bytes 0-3   magic "FOAL"
    u32 x 7     version, classes, T, F, D_a, D_v, sample_count
    classes x   u16 length + UTF-8 label name
    per sample  u32 label, u32 group,
                T*D_a f32 audio (row-major), F*D_v f32 video (row-major)
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

FORMAT_MAGIC = b"FOAL"
FORMAT_VERSION = 1

DEFAULT_LABEL_NAMES = ["happy", "angry", "sad", "neutral"]


class DatasetError(Exception):
    """Base for dataset file and content errors."""


class BadMagicError(DatasetError):
    """File does not start with the expected magic bytes."""


class VersionMismatchError(DatasetError):
    """File format version is not supported."""


class TruncatedFileError(DatasetError):
    """File is shorter (or longer) than its header declares."""


class LabelRangeError(DatasetError):
    """A sample label falls outside [0, classes)."""


@dataclass
class DatasetHeader:
    classes: int
    t_frames: int
    f_frames: int
    d_a: int
    d_v: int
    sample_count: int
    label_names: list[str]

    def validate(self) -> None:
        if self.sample_count <= 0:
            raise DatasetError(f"sample_count must be positive, got {self.sample_count}")
        if len(self.label_names) != self.classes:
            raise DatasetError(
                f"expected {self.classes} label names, got {len(self.label_names)}")
        for dim, name in ((self.classes, "classes"), (self.t_frames, "T"),
                          (self.f_frames, "F"), (self.d_a, "D_a"), (self.d_v, "D_v")):
            if dim <= 0:
                raise DatasetError(f"header field {name} must be positive, got {dim}")


@dataclass
class Sample:
    """One (audio sequence, video sequence, label, group) record.

    Arrays are stored at file precision (float32); batching promotes to
    float64 for training math.
    """
    label: int
    group: int
    audio: np.ndarray  # [T, D_a] float32
    video: np.ndarray  # [F, D_v] float32


@dataclass
class EmbeddingDataset:
    header: DatasetHeader
    samples: list[Sample]

    def __len__(self) -> int:
        return len(self.samples)

    def __iter__(self):
        return iter(self.samples)

    def __getitem__(self, i):
        return self.samples[i]


def save_dataset(path, header: DatasetHeader, samples: list[Sample]) -> None:
    header.validate()
    if len(samples) != header.sample_count:
        raise DatasetError(
            f"header declares {header.sample_count} samples, got {len(samples)}")
    chunks = [FORMAT_MAGIC,
              struct.pack("<7I", FORMAT_VERSION, header.classes, header.t_frames,
                          header.f_frames, header.d_a, header.d_v, header.sample_count)]
    for name in header.label_names:
        raw = name.encode("utf-8")
        chunks.append(struct.pack("<H", len(raw)))
        chunks.append(raw)
    for i, s in enumerate(samples):
        if not 0 <= s.label < header.classes:
            raise LabelRangeError(
                f"sample {i} label {s.label} outside [0, {header.classes})")
        if s.audio.shape != (header.t_frames, header.d_a):
            raise DatasetError(f"sample {i} audio shape {s.audio.shape} does not match header")
        if s.video.shape != (header.f_frames, header.d_v):
            raise DatasetError(f"sample {i} video shape {s.video.shape} does not match header")
        chunks.append(struct.pack("<II", s.label, s.group))
        chunks.append(np.ascontiguousarray(s.audio, dtype="<f4").tobytes())
        chunks.append(np.ascontiguousarray(s.video, dtype="<f4").tobytes())
    with open(path, "wb") as fh:
        fh.write(b"".join(chunks))


def load_dataset(path) -> EmbeddingDataset:
    with open(path, "rb") as fh:
        buf = fh.read()
    if len(buf) < 4 or buf[:4] != FORMAT_MAGIC:
        raise BadMagicError(f"bad magic {buf[:4]!r}, expected {FORMAT_MAGIC!r}")
    pos = 4

    def take(n: int) -> bytes:
        nonlocal pos
        if pos + n > len(buf):
            raise TruncatedFileError(
                f"needed {n} bytes at offset {pos}, file has {len(buf)}")
        out = buf[pos:pos + n]
        pos += n
        return out

    version, classes, t_frames, f_frames, d_a, d_v, count = struct.unpack("<7I", take(28))
    if version != FORMAT_VERSION:
        raise VersionMismatchError(f"unsupported format version {version}")
    names = []
    for _ in range(classes):
        (length,) = struct.unpack("<H", take(2))
        names.append(take(length).decode("utf-8"))
    header = DatasetHeader(classes, t_frames, f_frames, d_a, d_v, count, names)
    header.validate()

    audio_bytes = t_frames * d_a * 4
    video_bytes = f_frames * d_v * 4
    samples = []
    for i in range(count):
        label, group = struct.unpack("<II", take(8))
        if label >= classes:
            raise LabelRangeError(f"sample {i} label {label} outside [0, {classes})")
        audio = np.frombuffer(take(audio_bytes), dtype="<f4").reshape(t_frames, d_a)
        video = np.frombuffer(take(video_bytes), dtype="<f4").reshape(f_frames, d_v)
        if not (np.isfinite(audio).all() and np.isfinite(video).all()):
            raise DatasetError(f"sample {i} contains non-finite values")
        samples.append(Sample(int(label), int(group), audio, video))
    if pos != len(buf):
        raise TruncatedFileError(
            f"{len(buf) - pos} unexpected trailing bytes after {count} samples")
    return EmbeddingDataset(header, samples)


# -- batching ------------------------------------------------------------------


@dataclass
class Batch:
    audio: np.ndarray   # [N, T, D_a] float64
    video: np.ndarray   # [N, F, D_v] float64
    labels: np.ndarray  # [N] intp
    groups: np.ndarray  # [N] intp

    def __len__(self) -> int:
        return len(self.labels)


def make_batches(samples, batch_size: int, shuffle: bool = False,
                 seed: int = 0, train: bool = False) -> list[Batch]:
    """Stack samples into fixed-size batches.

    In training mode a short final batch is dropped (the contrastive and
    matching losses assume full batch statistics); eval mode keeps every
    sample. Shuffling is deterministic in the seed.
    """
    samples = list(samples)
    if batch_size < 1:
        raise ValueError(f"batch size must be >= 1, got {batch_size}")
    order = np.arange(len(samples))
    if shuffle:
        np.random.default_rng(seed).shuffle(order)
    batches = []
    for start in range(0, len(samples), batch_size):
        idx = order[start:start + batch_size]
        if train and len(idx) < batch_size:
            break
        chunk = [samples[i] for i in idx]
        batches.append(Batch(
            audio=np.stack([s.audio for s in chunk]).astype(np.float64),
            video=np.stack([s.video for s in chunk]).astype(np.float64),
            labels=np.array([s.label for s in chunk], dtype=np.intp),
            groups=np.array([s.group for s in chunk], dtype=np.intp),
        ))
    return batches


def split_leave_one_group_out(samples) -> list[tuple[int, list[Sample], list[Sample]]]:
    """One (group, train, test) fold per distinct group, ascending by group;
    fold g trains on every other group and tests on group g."""
    samples = list(samples)
    groups = sorted({s.group for s in samples})
    if len(groups) < 2:
        raise ValueError(f"leave-one-group-out needs >= 2 groups, got {len(groups)}")
    folds = []
    for g in groups:
        test = [s for s in samples if s.group == g]
        train = [s for s in samples if s.group != g]
        folds.append((g, train, test))
    return folds


# -- synthetic generation -------------------------------------------------------


@dataclass
class SyntheticSpec:
    """Desk-scale stand-in for precomputed audio/video embedding features.

    In the complementary scheme the audio class mean encodes only the coarse
    half of the label (k // 2) and the video mean only the fine half (k % 2),
    so either modality alone resolves at most half the classes while the
    pair determines the label exactly. The redundant scheme encodes the full
    label in both modalities.
    """
    classes: int = 4
    groups: int = 4
    per_class: int = 50
    d_a: int = 32
    d_v: int = 24
    t_frames: int = 8
    f_frames: int = 4
    separation: float = 3.0
    noise: float = 1.0
    scheme: str = "complementary"
    seed: int = 1
    label_names: list[str] = field(default_factory=list)

    def validate(self) -> None:
        if self.scheme not in ("complementary", "redundant"):
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if self.scheme == "complementary" and self.classes != 4:
            raise ValueError("complementary scheme is defined for exactly 4 classes")
        if self.per_class < 1:
            raise ValueError("per_class must be >= 1")
        if self.noise < 0:
            raise ValueError("noise must be >= 0")
        if self.separation <= 0:
            raise ValueError("separation must be > 0")
        if self.groups < 1:
            raise ValueError("groups must be >= 1")


def generate_synthetic(spec: SyntheticSpec) -> EmbeddingDataset:
    """Deterministically generate a class-conditional Gaussian embedding set.

    Class means are separation-scaled unit-Gaussian direction vectors; each
    frame is its class mean plus i.i.d. Gaussian jitter.
    """
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    if spec.scheme == "complementary":
        audio_dirs = rng.standard_normal((2, spec.d_a))
        video_dirs = rng.standard_normal((2, spec.d_v))
        audio_mean = {k: spec.separation * audio_dirs[k // 2] for k in range(spec.classes)}
        video_mean = {k: spec.separation * video_dirs[k % 2] for k in range(spec.classes)}
    else:
        audio_dirs = rng.standard_normal((spec.classes, spec.d_a))
        video_dirs = rng.standard_normal((spec.classes, spec.d_v))
        audio_mean = {k: spec.separation * audio_dirs[k] for k in range(spec.classes)}
        video_mean = {k: spec.separation * video_dirs[k] for k in range(spec.classes)}

    samples = []
    for group in range(spec.groups):
        for k in range(spec.classes):
            for _ in range(spec.per_class):
                audio = audio_mean[k] + spec.noise * rng.standard_normal((spec.t_frames, spec.d_a))
                video = video_mean[k] + spec.noise * rng.standard_normal((spec.f_frames, spec.d_v))
                samples.append(Sample(k, group, audio.astype(np.float32),
                                      video.astype(np.float32)))

    if spec.label_names:
        names = list(spec.label_names)
    elif spec.classes == 4:
        names = list(DEFAULT_LABEL_NAMES)
    else:
        names = [f"class{k}" for k in range(spec.classes)]
    header = DatasetHeader(spec.classes, spec.t_frames, spec.f_frames,
                           spec.d_a, spec.d_v, len(samples), names)
    header.validate()
    return EmbeddingDataset(header, samples)
