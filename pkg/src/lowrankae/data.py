"""Dataset ingestion and synthesis.

Handles the big-endian IDX container used by the classic digit
benchmarks (gzip or raw), maps pixel bytes to [-1, 1] floats, resizes
28x28 images to the package's 32x32 convention, and provides two
synthetic generators: a low-rank Gaussian factor model for fast
numerical tests, and a rendered-digit image set that stands in for the
real benchmark when its files are not available locally (this package
never downloads anything).
"""

from __future__ import annotations

import functools
import gzip
import struct
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataFormatError

__all__ = [
    "Dataset",
    "IMAGES_MAGIC",
    "LABELS_MAGIC",
    "default_dataset",
    "digit_dataset",
    "load_idx_files",
    "load_split",
    "parse_idx",
    "render_digits",
    "resize_to_32",
    "serialize_idx_images",
    "serialize_idx_labels",
    "subset",
    "synth_lowrank",
    "write_digit_files",
]

IMAGES_MAGIC = 0x00000803
LABELS_MAGIC = 0x00000801

#: Filenames of the standard train/test splits inside a data directory.
SPLIT_FILES = {
    "train": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    "test": ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
}

DATA_DIR_ENV = "LOWRANKAE_DATA"


@dataclass(frozen=True)
class Dataset:
    """Flattened images in [-1, 1] plus optional integer labels."""

    images: np.ndarray
    height: int
    width: int
    labels: np.ndarray | None = None

    def __post_init__(self):
        if self.images.ndim != 2:
            raise ValueError(f"images must be 2-d, got shape {self.images.shape}")
        if self.images.shape[0] == 0:
            raise ValueError("dataset must contain at least one image")
        if self.images.shape[1] != self.height * self.width:
            raise ValueError(
                f"row length {self.images.shape[1]} != height*width "
                f"{self.height}*{self.width}"
            )
        if self.labels is not None and self.labels.shape != (self.images.shape[0],):
            raise ValueError("labels must be one integer per image")

    def __len__(self) -> int:
        return self.images.shape[0]


def _bytes_to_unit(pixels: np.ndarray) -> np.ndarray:
    return pixels.astype(np.float64) / 127.5 - 1.0


def _unit_to_bytes(values: np.ndarray) -> np.ndarray:
    scaled = np.rint((np.clip(values, -1.0, 1.0) + 1.0) * 127.5)
    return scaled.astype(np.uint8)


def _read_u32(data: bytes, offset: int, what: str) -> int:
    if offset + 4 > len(data):
        raise DataFormatError(f"truncated header reading {what} at byte {offset}")
    return struct.unpack_from(">I", data, offset)[0]


def parse_idx(images_bytes: bytes, labels_bytes: bytes | None = None) -> Dataset:
    """Decode IDX image (and optionally label) payloads into a Dataset."""
    magic = _read_u32(images_bytes, 0, "image magic")
    if magic != IMAGES_MAGIC:
        raise DataFormatError(
            f"bad image magic 0x{magic:08x} at byte 0 (expected 0x{IMAGES_MAGIC:08x})"
        )
    count = _read_u32(images_bytes, 4, "image count")
    height = _read_u32(images_bytes, 8, "image height")
    width = _read_u32(images_bytes, 12, "image width")
    expected = 16 + count * height * width
    if len(images_bytes) != expected:
        raise DataFormatError(
            f"image payload length {len(images_bytes)} != expected {expected} "
            f"(from header at byte 4)"
        )
    pixels = np.frombuffer(images_bytes, dtype=np.uint8, offset=16)
    images = _bytes_to_unit(pixels.reshape(count, height * width))

    labels = None
    if labels_bytes is not None:
        magic = _read_u32(labels_bytes, 0, "label magic")
        if magic != LABELS_MAGIC:
            raise DataFormatError(
                f"bad label magic 0x{magic:08x} at byte 0 (expected 0x{LABELS_MAGIC:08x})"
            )
        n_labels = _read_u32(labels_bytes, 4, "label count")
        expected = 8 + n_labels
        if len(labels_bytes) != expected:
            raise DataFormatError(
                f"label payload length {len(labels_bytes)} != expected {expected} "
                f"(from header at byte 4)"
            )
        if n_labels != count:
            raise DataFormatError(
                f"label count {n_labels} != image count {count} (headers at byte 4)"
            )
        labels = np.frombuffer(labels_bytes, dtype=np.uint8, offset=8).astype(np.int64)
    return Dataset(images=images, height=height, width=width, labels=labels)


def serialize_idx_images(pixels: np.ndarray) -> bytes:
    """Encode a (n, h, w) uint8 array as an IDX image payload."""
    pixels = np.ascontiguousarray(pixels, dtype=np.uint8)
    if pixels.ndim != 3:
        raise ValueError(f"expected (n, h, w) pixel array, got shape {pixels.shape}")
    n, h, w = pixels.shape
    return struct.pack(">IIII", IMAGES_MAGIC, n, h, w) + pixels.tobytes()


def serialize_idx_labels(labels: np.ndarray) -> bytes:
    labels = np.asarray(labels)
    if labels.ndim != 1 or labels.min() < 0 or labels.max() > 255:
        raise ValueError("labels must be a 1-d array of bytes")
    return struct.pack(">II", LABELS_MAGIC, labels.shape[0]) + labels.astype(np.uint8).tobytes()


def _read_maybe_gzip(path: Path) -> bytes:
    raw = path.read_bytes()
    if raw[:2] == b"\x1f\x8b":
        return gzip.decompress(raw)
    return raw


def load_idx_files(images_path, labels_path=None) -> Dataset:
    """Read IDX files (gzip or raw) from disk."""
    images_bytes = _read_maybe_gzip(Path(images_path))
    labels_bytes = _read_maybe_gzip(Path(labels_path)) if labels_path else None
    return parse_idx(images_bytes, labels_bytes)


def _find_split_file(directory: Path, stem: str) -> Path | None:
    for suffix in ("", ".gz"):
        candidate = directory / f"{stem}{suffix}"
        if candidate.is_file():
            return candidate
    return None


def load_split(directory, split: str) -> Dataset:
    """Load the named split ("train" or "test") from a data directory."""
    directory = Path(directory)
    try:
        image_stem, label_stem = SPLIT_FILES[split]
    except KeyError:
        raise ValueError(f"unknown split {split!r}") from None
    images_path = _find_split_file(directory, image_stem)
    if images_path is None:
        raise FileNotFoundError(f"no {image_stem}[.gz] under {directory}")
    labels_path = _find_split_file(directory, label_stem)
    return load_idx_files(images_path, labels_path)


def _bilinear_resize(images: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Corner-aligned bilinear resampling of (n, h, w) image stacks."""
    n, h, w = images.shape
    src_y = np.linspace(0.0, h - 1.0, out_h)
    src_x = np.linspace(0.0, w - 1.0, out_w)
    y0 = np.clip(np.floor(src_y).astype(np.intp), 0, h - 2) if h > 1 else np.zeros(out_h, np.intp)
    x0 = np.clip(np.floor(src_x).astype(np.intp), 0, w - 2) if w > 1 else np.zeros(out_w, np.intp)
    wy = (src_y - y0) if h > 1 else np.zeros(out_h)
    wx = (src_x - x0) if w > 1 else np.zeros(out_w)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)

    # The v0 + t*(v1 - v0) form keeps constant images exactly constant.
    top = images[:, y0][:, :, x0]
    top = top + wx[None, None, :] * (images[:, y0][:, :, x1] - top)
    bottom = images[:, y1][:, :, x0]
    bottom = bottom + wx[None, None, :] * (images[:, y1][:, :, x1] - bottom)
    return top + wy[None, :, None] * (bottom - top)


def resize_to_32(ds: Dataset) -> Dataset:
    """Bilinear upsampling of a 28x28 dataset to the 32x32 convention."""
    if (ds.height, ds.width) != (28, 28):
        raise ValueError(f"resize_to_32 expects 28x28 input, got {ds.height}x{ds.width}")
    stacked = ds.images.reshape(len(ds), 28, 28)
    resized = _bilinear_resize(stacked, 32, 32)
    return Dataset(
        images=np.clip(resized.reshape(len(ds), 32 * 32), -1.0, 1.0),
        height=32,
        width=32,
        labels=ds.labels,
    )


def synth_lowrank(n: int, d: int, r: int, noise_sigma: float, seed: int) -> Dataset:
    """Rows of a rank-r Gaussian factor model: x = A c + eps, clipped to [-1, 1].

    The factor matrix is scaled so row entries stay inside the clip range
    with overwhelming probability, keeping the factor rank exact when
    ``noise_sigma`` is zero.
    """
    if n <= 0:
        raise ValueError("n must be positive")
    if r <= 0:
        raise ValueError("rank r must be positive")
    if r > d:
        raise ValueError(f"rank r={r} exceeds dimension d={d}")
    rng = np.random.default_rng(seed)
    factors = rng.standard_normal((d, r)) / (6.0 * np.sqrt(r))
    coeffs = rng.standard_normal((n, r))
    rows = coeffs @ factors.T
    if noise_sigma > 0:
        rows = rows + rng.normal(0.0, noise_sigma, size=rows.shape)
    return Dataset(images=np.clip(rows, -1.0, 1.0), height=1, width=d)


@functools.lru_cache(maxsize=16)
def _default_font(size: int):
    from PIL import ImageFont

    return ImageFont.load_default(size=size)


def render_digits(n: int, seed: int, size: int = 28) -> tuple[np.ndarray, np.ndarray]:
    """Deterministically render n jittered digit glyphs as (n, size, size) uint8.

    Each sample draws a digit 0-9 with randomized font size, offset,
    stroke width, and rotation, plus additive pixel noise, giving a
    10-class image set with genuine intra-class variation.
    """
    from PIL import Image, ImageDraw

    rng = np.random.default_rng(seed)
    labels = rng.integers(0, 10, size=n).astype(np.int64)
    big = size * 2
    pixels = np.empty((n, size, size), dtype=np.uint8)
    for i in range(n):
        font = _default_font(int(rng.integers(16, 25)))
        canvas = Image.new("L", (big, big), 0)
        draw = ImageDraw.Draw(canvas)
        dx, dy = (int(v) for v in rng.integers(-3, 4, size=2))
        draw.text(
            (big // 2 + dx, big // 2 + dy),
            str(labels[i]),
            fill=255,
            font=font,
            anchor="mm",
            stroke_width=int(rng.integers(0, 2)),
            stroke_fill=255,
        )
        canvas = canvas.rotate(
            float(rng.uniform(-12.0, 12.0)),
            resample=Image.BILINEAR,
            center=(big // 2, big // 2),
        )
        margin = (big - size) // 2
        glyph = np.asarray(canvas.crop((margin, margin, margin + size, margin + size)))
        noisy = glyph.astype(np.float64) + rng.normal(0.0, 10.0, size=glyph.shape)
        pixels[i] = np.clip(np.rint(noisy), 0, 255).astype(np.uint8)
    return pixels, labels


def digit_dataset(n: int, seed: int) -> Dataset:
    """Rendered-digit dataset, routed through the IDX codec it ships in."""
    pixels, labels = render_digits(n, seed)
    return parse_idx(serialize_idx_images(pixels), serialize_idx_labels(labels))


def write_digit_files(directory, n_train: int, n_test: int, seed: int) -> list[Path]:
    """Write a rendered-digit train/test pair in standard IDX filenames (gzipped)."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    written = []
    for split, count, split_seed in (("train", n_train, seed), ("test", n_test, seed + 1)):
        pixels, labels = render_digits(count, split_seed)
        image_stem, label_stem = SPLIT_FILES[split]
        for stem, payload in (
            (image_stem, serialize_idx_images(pixels)),
            (label_stem, serialize_idx_labels(labels)),
        ):
            path = directory / f"{stem}.gz"
            # mtime=0 keeps the gzip container byte-stable across reruns.
            path.write_bytes(gzip.compress(payload, mtime=0))
            written.append(path)
    return written


def subset(ds: Dataset, size: int, seed: int, stratified: bool = False) -> Dataset:
    """Seeded subset of a dataset; stratified selection balances label counts."""
    if size <= 0 or size > len(ds):
        raise ValueError(f"subset size {size} out of range 1..{len(ds)}")
    if stratified and ds.labels is not None:
        n_classes = len(np.unique(ds.labels))
        indices = _stratified_indices(ds.labels, size, np.random.default_rng(seed))
        if len(np.unique(ds.labels[indices])) < n_classes:
            indices = _stratified_indices(ds.labels, size, np.random.default_rng(seed + 1))
            if len(np.unique(ds.labels[indices])) < n_classes:
                warnings.warn("stratified subset is missing a class after resampling")
    else:
        indices = np.random.default_rng(seed).permutation(len(ds))[:size]
    indices = np.sort(indices)
    labels = ds.labels[indices] if ds.labels is not None else None
    return Dataset(images=ds.images[indices], height=ds.height, width=ds.width, labels=labels)


def _stratified_indices(labels: np.ndarray, size: int, rng: np.random.Generator) -> np.ndarray:
    classes = np.unique(labels)
    picked: list[np.ndarray] = []
    remaining = size
    for i, cls in enumerate(classes):
        pool = np.flatnonzero(labels == cls)
        share = remaining // (len(classes) - i)
        take = min(share, len(pool))
        picked.append(rng.permutation(pool)[:take])
        remaining -= take
    indices = np.concatenate(picked)
    if remaining > 0:
        leftovers = np.setdiff1d(np.arange(len(labels)), indices)
        indices = np.concatenate([indices, rng.permutation(leftovers)[:remaining]])
    return indices


def default_dataset(
    n_train: int,
    n_test: int,
    seed: int = 0,
    data_dir=None,
) -> tuple[Dataset, Dataset, str]:
    """Resolve a 32x32 train/test pair.

    Prefers IDX files under ``data_dir`` (or $LOWRANKAE_DATA); otherwise
    falls back to the deterministic rendered-digit set. Returns the two
    datasets plus a tag naming the source ("idx-files" or
    "rendered-digits").
    """
    import os

    candidates = []
    if data_dir is not None:
        candidates.append(Path(data_dir))
    env_dir = os.environ.get(DATA_DIR_ENV)
    if env_dir:
        candidates.append(Path(env_dir))
    for directory in candidates:
        if _find_split_file(directory, SPLIT_FILES["train"][0]) is not None:
            train = load_split(directory, "train")
            test = load_split(directory, "test")
            train = subset(train, min(n_train, len(train)), seed)
            test = subset(test, min(n_test, len(test)), seed + 1)
            if (train.height, train.width) == (28, 28):
                train = resize_to_32(train)
                test = resize_to_32(test)
            return train, test, "idx-files"
    train = resize_to_32(digit_dataset(n_train, seed))
    test = resize_to_32(digit_dataset(n_test, seed + 1))
    return train, test, "rendered-digits"
