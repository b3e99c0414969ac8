"""Desk-scale stand-in for MNIST, written as real IDX files.

Full MNIST is not bundled; experiments at desk scale run on a surrogate
built from scikit-learn's offline handwritten-digit images (8x8, 10
classes): each image is upsampled to 28x28, and the pool is extended to a
balanced target size by cycling through the base images with small seeded
pixel noise.  The result goes through the ordinary IDX writer/parser, so
the whole pipeline is exercised exactly as it would be on the real files.

Anything that accepts IDX paths also accepts real MNIST; this module only
covers the no-download case.
"""

from __future__ import annotations

import os

import numpy as np

from .datasets import LabeledDataset, load_idx, write_idx
from .gaussians import RESERVED_STREAM_BASE, standard_normal

DESK_TOTAL = 5120  # 4096 train + 1024 held out after an 0.8 split
_NOISE_STREAM = RESERVED_STREAM_BASE + 0xD0
_ORDER_STREAM = RESERVED_STREAM_BASE + 0xD1
NOISE_SCALE = 10.0  # u8 units


def _upsample(images_8x8: np.ndarray) -> np.ndarray:
    """8x8 -> 28x28 u8 by 4x replication and a center crop of the 32x32."""
    scaled = np.rint(images_8x8 * (255.0 / 16.0)).clip(0, 255)
    big = np.kron(scaled, np.ones((4, 4)))
    return big[:, 2:30, 2:30].astype(np.uint8)


def build_desk_idx(out_dir, n_total: int = DESK_TOTAL, seed: int = 20260809):
    """Write the surrogate IDX pair under ``out_dir``; returns the two paths."""
    try:
        from sklearn.datasets import load_digits
    except ImportError as exc:  # pragma: no cover
        raise ImportError(
            "building the desk dataset needs scikit-learn (pip install "
            "gradbound[dev]); alternatively point the CLI at real MNIST IDX files"
        ) from exc

    digits = load_digits()
    base = _upsample(digits.images)
    labels = digits.target.astype(np.uint8)

    k = 10
    per_class = n_total // k
    if per_class * k != n_total:
        raise ValueError("n_total must be a multiple of 10")

    from .gaussians import stream_rng

    images_out = np.empty((n_total, 28, 28), dtype=np.uint8)
    labels_out = np.empty(n_total, dtype=np.uint8)
    row = 0
    for y in range(k):
        idx = np.flatnonzero(labels == y)
        order = idx[stream_rng(seed, _ORDER_STREAM + y).permutation(idx.size)]
        picks = order[np.arange(per_class) % order.size]
        block = base[picks].astype(np.float64)
        n_fresh = min(per_class, order.size)
        if per_class > n_fresh:
            # Replicated images get seeded pixel noise so they are distinct.
            z = standard_normal(seed, _NOISE_STREAM + y,
                                (per_class - n_fresh) * 28 * 28)
            block[n_fresh:] += NOISE_SCALE * z.reshape(-1, 28, 28)
        images_out[row : row + per_class] = np.rint(block).clip(0, 255)
        labels_out[row : row + per_class] = y
        row += per_class

    os.makedirs(out_dir, exist_ok=True)
    images_path = os.path.join(out_dir, "desk-images-idx3-ubyte")
    labels_path = os.path.join(out_dir, "desk-labels-idx1-ubyte")
    write_idx(images_path, labels_path, images_out, labels_out)
    return images_path, labels_path


def load_desk_dataset(cache_dir, n_total: int = DESK_TOTAL,
                      seed: int = 20260809) -> LabeledDataset:
    """Build the surrogate files if absent under ``cache_dir`` and load them."""
    images_path = os.path.join(cache_dir, "desk-images-idx3-ubyte")
    labels_path = os.path.join(cache_dir, "desk-labels-idx1-ubyte")
    if not (os.path.exists(images_path) and os.path.exists(labels_path)):
        build_desk_idx(cache_dir, n_total=n_total, seed=seed)
    return load_idx(images_path, labels_path)
