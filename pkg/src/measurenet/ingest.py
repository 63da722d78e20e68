"""IDX (MNIST) parsing and image to point-cloud conversion."""

import gzip
import struct
from dataclasses import dataclass

import numpy as np

from .data import SetBatch
from .exceptions import IdxDimensionError, IdxMagicError, IdxTruncatedError, UsageError
from .numerics import derive_seed, make_rng

IMAGES_MAGIC = 2051
LABELS_MAGIC = 2049


def _read_bytes(path):
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:2] == b"\x1f\x8b":
        raw = gzip.decompress(raw)
    return raw


def parse_idx(path, kind=None):
    """Parse an MNIST IDX file (optionally gzip-compressed).

    Returns a ``uint8`` array: ``(count, rows, cols)`` for image files
    (magic 2051) or ``(count,)`` for label files (magic 2049). ``kind``
    ("images" / "labels") additionally enforces the expected file type.
    """
    raw = _read_bytes(path)
    if len(raw) < 8:
        raise IdxTruncatedError(f"{path}: header truncated at byte offset {len(raw)}")
    magic, count = struct.unpack(">II", raw[:8])
    expected = {"images": IMAGES_MAGIC, "labels": LABELS_MAGIC}.get(kind)
    if magic not in (IMAGES_MAGIC, LABELS_MAGIC) or (expected is not None and magic != expected):
        raise IdxMagicError(f"{path}: bad magic number {magic}")
    if magic == LABELS_MAGIC:
        shape, offset = (count,), 8
    else:
        if len(raw) < 16:
            raise IdxTruncatedError(f"{path}: header truncated at byte offset {len(raw)}")
        rows, cols = struct.unpack(">II", raw[8:16])
        if rows == 0 or cols == 0:
            raise IdxDimensionError(f"{path}: zero image dimension {rows}x{cols}")
        shape, offset = (count, rows, cols), 16
    need = offset + int(np.prod(shape))
    if len(raw) < need:
        raise IdxTruncatedError(f"{path}: truncated at byte offset {len(raw)}, expected {need} bytes")
    if len(raw) > need:
        raise IdxDimensionError(f"{path}: {len(raw) - need} trailing bytes beyond declared dimensions")
    return np.frombuffer(raw, dtype=np.uint8, count=need - offset, offset=offset).reshape(shape)


def write_idx(path, array):
    """Write a uint8 image stack (3-D) or label vector (1-D) in IDX format."""
    array = np.ascontiguousarray(array, dtype=np.uint8)
    if array.ndim == 3:
        header = struct.pack(">IIII", IMAGES_MAGIC, *array.shape)
    elif array.ndim == 1:
        header = struct.pack(">II", LABELS_MAGIC, array.shape[0])
    else:
        raise UsageError("IDX writer handles image stacks or label vectors only")
    data = header + array.tobytes()
    opener = gzip.open if str(path).endswith(".gz") else open
    with opener(path, "wb") as fh:
        fh.write(data)


@dataclass
class PointCloud:
    points: np.ndarray  # (max_points, 3): row, col, intensity
    label: int = -1


def image_to_pointcloud(image, threshold=0.5, max_points=200, rng=0, normalize="standardize",
                        label=-1):
    """Convert a grayscale image with values in [0, 1] to a fixed-size point cloud.

    Pixels brighter than ``threshold`` survive; the ``max_points`` brightest
    are kept (ties in raster order). If fewer survive, the cloud is padded
    with survivors drawn uniformly with replacement. Row and column are
    standardized over the cloud (``normalize="minmax"`` rescales them to
    [0, 1] instead).
    """
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 2:
        raise UsageError("expected a 2-D image")
    flat = img.ravel()
    idx = np.flatnonzero(flat > threshold)
    if idx.size == 0:
        raise UsageError("blank image: no pixel above the threshold")
    order = np.argsort(-flat[idx], kind="stable")
    idx = idx[order[:max_points]]
    if idx.size < max_points:
        extra = make_rng(rng).choice(idx, size=max_points - idx.size, replace=True)
        idx = np.concatenate([idx, extra])
    rows, cols = np.divmod(idx, img.shape[1])
    rc = np.stack([rows, cols], axis=1).astype(np.float64)
    if normalize == "standardize":
        std = rc.std(axis=0)
        rc = (rc - rc.mean(axis=0)) / np.where(std > 0, std, 1.0)
    elif normalize == "minmax":
        lo, hi = rc.min(axis=0), rc.max(axis=0)
        rc = (rc - lo) / np.where(hi > lo, hi - lo, 1.0)
    else:
        raise UsageError(f"unknown normalization {normalize!r}")
    return PointCloud(np.column_stack([rc, flat[idx]]), int(label))


def images_to_batch(images, labels, max_points=200, threshold=0.5, seed=0, normalize="standardize"):
    """Point clouds for a stack of uint8 images as a labelled SetBatch.

    Blank images (nothing above the threshold) are skipped.
    """
    clouds, kept = [], []
    for i, img in enumerate(images):
        try:
            pc = image_to_pointcloud(img / 255.0, threshold, max_points, rng=derive_seed(seed, i),
                                     normalize=normalize)
        except UsageError:
            continue
        clouds.append(pc.points)
        kept.append(labels[i])
    return SetBatch.from_sets(clouds, np.asarray(kept, dtype=np.int64))
