"""Digit image ingestion: IDX files, the bundled scikit-learn digits, synthetic.

The IDX reader handles the standard big-endian format (magic 0x00000803 for
images, 0x00000801 for labels, 28x28 pixels scaled into [0, 1]).  Because
full MNIST files are often absent at desk scale, two offline sources are
provided: the scikit-learn handwritten digits upscaled to 28x28, and a
synthetic template-plus-noise generator.
"""

from __future__ import annotations

import struct

import numpy as np
from scipy import ndimage

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801
IMAGE_SIDE = 28


class DataError(Exception):
    """Raised for missing, malformed, or inconsistent data files."""


def _read_be32(data: bytes, offset: int, path: str) -> int:
    if offset + 4 > len(data):
        raise DataError(f"{path}: truncated header at offset {offset}")
    return struct.unpack_from(">I", data, offset)[0]


def _read_file(path) -> bytes:
    try:
        with open(path, "rb") as fh:
            return fh.read()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc


def ingest_mnist(images_path, labels_path) -> list[tuple[np.ndarray, int]]:
    """Parse an IDX image/label file pair into (flat [0,1] pixels, digit) records."""
    img = _read_file(images_path)
    magic = _read_be32(img, 0, str(images_path))
    if magic != IMAGE_MAGIC:
        raise DataError(
            f"{images_path}: bad image magic 0x{magic:08x} at offset 0 "
            f"(expected 0x{IMAGE_MAGIC:08x})"
        )
    count = _read_be32(img, 4, str(images_path))
    rows = _read_be32(img, 8, str(images_path))
    cols = _read_be32(img, 12, str(images_path))
    if (rows, cols) != (IMAGE_SIDE, IMAGE_SIDE):
        raise DataError(f"{images_path}: expected 28x28 images, got {rows}x{cols}")
    need = 16 + count * rows * cols
    if len(img) < need:
        raise DataError(f"{images_path}: truncated pixel data ({len(img)} < {need} bytes)")

    lab = _read_file(labels_path)
    magic = _read_be32(lab, 0, str(labels_path))
    if magic != LABEL_MAGIC:
        raise DataError(
            f"{labels_path}: bad label magic 0x{magic:08x} at offset 0 "
            f"(expected 0x{LABEL_MAGIC:08x})"
        )
    lab_count = _read_be32(lab, 4, str(labels_path))
    if lab_count != count:
        raise DataError(
            f"label count {lab_count} does not match image count {count} "
            f"({labels_path} vs {images_path})"
        )
    if len(lab) < 8 + count:
        raise DataError(f"{labels_path}: truncated label data")

    pixels = np.frombuffer(img, dtype=np.uint8, count=count * rows * cols, offset=16)
    pixels = pixels.reshape(count, rows * cols).astype(np.float64) / 255.0
    labels = np.frombuffer(lab, dtype=np.uint8, count=count, offset=8)
    return [(pixels[i], int(labels[i])) for i in range(count)]


def write_idx_pair(images: np.ndarray, labels: np.ndarray, images_path, labels_path) -> None:
    """Write an IDX file pair (images in [0,1], shape (n, 784))."""
    n = images.shape[0]
    raw = np.clip(np.round(images * 255.0), 0, 255).astype(np.uint8)
    with open(images_path, "wb") as fh:
        fh.write(struct.pack(">IIII", IMAGE_MAGIC, n, IMAGE_SIDE, IMAGE_SIDE))
        fh.write(raw.tobytes())
    with open(labels_path, "wb") as fh:
        fh.write(struct.pack(">II", LABEL_MAGIC, n))
        fh.write(np.asarray(labels, dtype=np.uint8).tobytes())


def load_sklearn_digits() -> tuple[np.ndarray, np.ndarray]:
    """Bundled 8x8 handwritten digits upscaled to flat 28x28 vectors in [0, 1]."""
    from sklearn.datasets import load_digits

    data = load_digits()
    images = data.images / 16.0
    out = np.empty((images.shape[0], IMAGE_SIDE * IMAGE_SIDE))
    for i, img in enumerate(images):
        big = ndimage.zoom(img, IMAGE_SIDE / img.shape[0], order=1)
        out[i] = np.clip(big, 0.0, 1.0).ravel()
    return out, data.target.astype(np.int64)


def synthetic_digits(count: int, seed: int, n_classes: int = 10) -> tuple[np.ndarray, np.ndarray]:
    """Template-plus-noise images: one smoothed random template per class."""
    rng = np.random.default_rng(seed)
    templates = []
    for _ in range(n_classes):
        t = rng.uniform(0.0, 1.0, (IMAGE_SIDE, IMAGE_SIDE))
        t = ndimage.gaussian_filter(t, sigma=2.5)
        t = (t - t.min()) / (t.max() - t.min() + 1e-12)
        templates.append(t)
    images = np.empty((count, IMAGE_SIDE * IMAGE_SIDE))
    labels = rng.integers(0, n_classes, count)
    for i in range(count):
        base = templates[labels[i]] * rng.uniform(0.6, 1.0)
        noisy = base + rng.normal(0.0, 0.15, base.shape)
        images[i] = np.clip(noisy, 0.0, 1.0).ravel()
    return images, labels.astype(np.int64)
