"""Dataset construction: IDX image files, synthetic Gaussians, splits.

IDX is the big-endian binary container used by MNIST-style datasets:
images carry magic 0x00000803 followed by count/rows/cols and a u8 payload,
labels carry magic 0x00000801 followed by count and a u8 payload.  Pixels
are scaled by 1/255 into [0,1] and flattened row-major; no mean centering
is applied (recorded in the dataset provenance).  Labels are stored
1-based: raw IDX byte b becomes label b+1, so labels always lie in {1..k}.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .gaussians import RESERVED_STREAM_BASE, standard_normal, stream_rng

IMAGES_MAGIC = 0x00000803
LABELS_MAGIC = 0x00000801

_SYNTH_STREAM = RESERVED_STREAM_BASE + 0x51


class IdxFormatError(ValueError):
    """Base class for malformed IDX input."""


class IdxBadMagicError(IdxFormatError):
    pass


class IdxTruncatedError(IdxFormatError):
    pass


class IdxCountMismatchError(IdxFormatError):
    pass


@dataclass(frozen=True, eq=False)
class LabeledDataset:
    """m inputs in R^d with 1-based integer labels in {1..k}."""

    inputs: np.ndarray
    labels: np.ndarray
    class_count: int
    provenance: str = "synthetic"
    source: dict = field(default_factory=dict)

    def __post_init__(self):
        inputs = np.asarray(self.inputs, dtype=np.float64)
        labels = np.asarray(self.labels, dtype=np.int64).ravel()
        object.__setattr__(self, "inputs", inputs)
        object.__setattr__(self, "labels", labels)
        if inputs.ndim != 2 or inputs.shape[0] < 1:
            raise ValueError("inputs must be a nonempty (m, d) matrix")
        if labels.shape != (inputs.shape[0],):
            raise ValueError("labels length does not match inputs")
        if not np.all(np.isfinite(inputs)):
            raise ValueError("inputs contain non-finite values")
        if labels.min(initial=1) < 1 or labels.max(initial=1) > self.class_count:
            raise ValueError(f"labels must lie in 1..{self.class_count}")

    @property
    def m(self) -> int:
        return self.inputs.shape[0]

    @property
    def dim(self) -> int:
        return self.inputs.shape[1]


def _read_header(raw: bytes, path, n_fields: int) -> tuple[int, ...]:
    size = 4 * n_fields
    if len(raw) < size:
        raise IdxTruncatedError(f"{path}: header truncated ({len(raw)} bytes)")
    return struct.unpack(f">{n_fields}I", raw[:size])


def load_idx(images_path, labels_path) -> LabeledDataset:
    """Parse an IDX image/label file pair into a dataset."""
    with open(images_path, "rb") as f:
        raw_images = f.read()
    with open(labels_path, "rb") as f:
        raw_labels = f.read()

    magic, count, rows, cols = _read_header(raw_images, images_path, 4)
    if magic != IMAGES_MAGIC:
        raise IdxBadMagicError(
            f"{images_path}: wrong magic 0x{magic:08x}, expected 0x{IMAGES_MAGIC:08x}")
    payload = raw_images[16:]
    if len(payload) != count * rows * cols:
        raise IdxTruncatedError(
            f"{images_path}: expected {count * rows * cols} pixel bytes, got {len(payload)}")

    lmagic, lcount = _read_header(raw_labels, labels_path, 2)
    if lmagic != LABELS_MAGIC:
        raise IdxBadMagicError(
            f"{labels_path}: wrong magic 0x{lmagic:08x}, expected 0x{LABELS_MAGIC:08x}")
    lpayload = raw_labels[8:]
    if len(lpayload) != lcount:
        raise IdxTruncatedError(
            f"{labels_path}: expected {lcount} label bytes, got {len(lpayload)}")

    if count != lcount:
        raise IdxCountMismatchError(
            f"image count {count} != label count {lcount}")
    if count < 1:
        raise IdxFormatError("dataset is empty")

    pixels = np.frombuffer(payload, dtype=np.uint8).astype(np.float64) / 255.0
    inputs = pixels.reshape(count, rows * cols)
    raw = np.frombuffer(lpayload, dtype=np.uint8).astype(np.int64)
    labels = raw + 1
    return LabeledDataset(
        inputs, labels, class_count=int(raw.max()) + 1, provenance="idx",
        source={"images": str(images_path), "labels": str(labels_path),
                "rows": int(rows), "cols": int(cols), "normalization": "1/255"})


def write_idx(images_path, labels_path, images: np.ndarray, raw_labels: np.ndarray) -> None:
    """Write (n, rows, cols) u8 images and raw u8 labels as an IDX pair."""
    images = np.ascontiguousarray(images, dtype=np.uint8)
    raw_labels = np.ascontiguousarray(raw_labels, dtype=np.uint8)
    n, rows, cols = images.shape
    if raw_labels.shape != (n,):
        raise ValueError("label count does not match image count")
    with open(images_path, "wb") as f:
        f.write(struct.pack(">IIII", IMAGES_MAGIC, n, rows, cols))
        f.write(images.tobytes())
    with open(labels_path, "wb") as f:
        f.write(struct.pack(">II", LABELS_MAGIC, n))
        f.write(raw_labels.tobytes())


def synth_gaussian(k: int, d: int, class_means: np.ndarray, sigma: float,
                   n_per_class: int, seed: int) -> LabeledDataset:
    """Class-conditional Gaussian data: x | y ~ N(mean_y, sigma^2 I).

    Rows are grouped by class (labels 1..k each repeated n_per_class
    times); class y draws from stream (_SYNTH_STREAM + y) so the dataset is
    a pure function of its arguments.
    """
    class_means = np.asarray(class_means, dtype=np.float64)
    if class_means.shape != (k, d):
        raise ValueError(f"class_means must have shape ({k}, {d})")
    if sigma <= 0 or n_per_class < 1:
        raise ValueError("sigma must be positive and n_per_class >= 1")
    blocks = []
    for y in range(1, k + 1):
        z = standard_normal(seed, _SYNTH_STREAM + y, n_per_class * d).reshape(n_per_class, d)
        blocks.append(class_means[y - 1] + sigma * z)
    inputs = np.vstack(blocks)
    labels = np.repeat(np.arange(1, k + 1), n_per_class)
    return LabeledDataset(
        inputs, labels, class_count=k, provenance="synthetic",
        source={"sigma": float(sigma), "n_per_class": int(n_per_class), "seed": int(seed)})


def _largest_remainder(targets: np.ndarray, total: int) -> np.ndarray:
    """Integer allocation summing to ``total`` with per-entry error < 1."""
    base = np.floor(targets).astype(np.int64)
    short = total - int(base.sum())
    order = np.argsort(-(targets - base), kind="stable")
    base[order[:short]] += 1
    return base


def split(data: LabeledDataset, train_fraction: float, seed: int
          ) -> tuple[LabeledDataset, LabeledDataset]:
    """Stratified, seed-deterministic partition into (train, heldout).

    Class counts on the train side stay within +-1 of the exact fraction.
    """
    if not 0.0 < train_fraction < 1.0:
        raise ValueError("train_fraction must lie strictly between 0 and 1")
    rng = stream_rng(seed, RESERVED_STREAM_BASE + 0x5F)
    classes = np.arange(1, data.class_count + 1)
    counts = np.array([(data.labels == y).sum() for y in classes], dtype=np.float64)
    n_train_total = int(round(train_fraction * data.m))
    present = counts > 0
    alloc = np.zeros(len(classes), dtype=np.int64)
    alloc[present] = _largest_remainder(train_fraction * counts[present], n_train_total)

    train_idx, held_idx = [], []
    for y, n_train in zip(classes, alloc):
        idx = np.flatnonzero(data.labels == y)
        if idx.size == 0:
            continue
        idx = idx[rng.permutation(idx.size)]
        train_idx.append(idx[:n_train])
        held_idx.append(idx[n_train:])
    train_idx = np.sort(np.concatenate(train_idx))
    held_idx = np.sort(np.concatenate(held_idx))
    if train_idx.size == 0 or held_idx.size == 0:
        raise ValueError("split would leave one side empty")

    def take(idx, tag):
        return LabeledDataset(
            data.inputs[idx], data.labels[idx], data.class_count, data.provenance,
            {**data.source, "split": tag, "split_seed": int(seed)})

    return take(train_idx, "train"), take(held_idx, "heldout")


def stratified_sample(data: LabeledDataset, n: int, seed: int) -> LabeledDataset:
    """Seed-deterministic stratified subset of size n (proportional classes)."""
    if not 1 <= n <= data.m:
        raise ValueError(f"subset size must lie in 1..{data.m}")
    if n == data.m:
        return data
    rng = stream_rng(seed, RESERVED_STREAM_BASE + 0x5E)
    classes = np.arange(1, data.class_count + 1)
    counts = np.array([(data.labels == y).sum() for y in classes], dtype=np.float64)
    present = counts > 0
    alloc = np.zeros(len(classes), dtype=np.int64)
    alloc[present] = _largest_remainder(n * counts[present] / data.m, n)
    keep = []
    for y, n_y in zip(classes, alloc):
        idx = np.flatnonzero(data.labels == y)
        if idx.size == 0:
            continue
        idx = idx[rng.permutation(idx.size)]
        keep.append(idx[:n_y])
    keep = np.sort(np.concatenate(keep))
    return LabeledDataset(
        data.inputs[keep], data.labels[keep], data.class_count, data.provenance,
        {**data.source, "subset": int(n), "subset_seed": int(seed)})
