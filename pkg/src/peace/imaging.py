"""Image carriers and small raster I/O helpers.

A :class:`Frame` is the unit handed to inference backends. Real backends only
look at ``rgb``; the deterministic mock additionally reads the synthetic
``labels`` grid and ``tags`` planted by the simulator or by tests.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np
from PIL import Image

from .errors import ValidationError

# Label id used to fill camera views that extend past the world border.
OUTSIDE_ID = 255


@dataclass(frozen=True)
class Frame:
    """An RGB view plus the synthetic side-channels the mock backend uses."""

    rgb: np.ndarray                              # (H, W, 3) uint8
    labels: np.ndarray | None = None             # (H, W) class ids, OUTSIDE_ID = off-world
    tags: dict[str, str] = field(default_factory=dict)
    class_words: dict[int, str] = field(default_factory=dict)
    key: str = ""                                # stable identity for seeded backends
    oob_fraction: float = 0.0

    @property
    def partial(self) -> bool:
        return self.oob_fraction > 0.0

    @property
    def size(self) -> tuple[int, int]:
        return self.rgb.shape[1], self.rgb.shape[0]


def as_frame(image) -> Frame:
    if isinstance(image, Frame):
        return image
    arr = np.asarray(image)
    if arr.ndim == 2:
        arr = np.stack([arr] * 3, axis=-1)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ValidationError(f"expected an RGB array, got shape {arr.shape}")
    return Frame(rgb=arr.astype(np.uint8, copy=False))


def nearest_resize(arr: np.ndarray, height: int, width: int) -> np.ndarray:
    """Nearest-neighbour resample; exact and dependency-free so results are
    bit-stable across platforms."""
    src_h, src_w = arr.shape[:2]
    rows = np.minimum((np.arange(height) + 0.5) * src_h / height, src_h - 1).astype(np.intp)
    cols = np.minimum((np.arange(width) + 0.5) * src_w / width, src_w - 1).astype(np.intp)
    return arr[rows][:, cols]


def load_image(path) -> np.ndarray:
    img = Image.open(path).convert("RGB")
    return np.asarray(img, dtype=np.uint8)


def save_png(path, rgb: np.ndarray) -> None:
    Image.fromarray(rgb.astype(np.uint8), mode="RGB").save(path, format="PNG")


def save_label_png(path, labels: np.ndarray, palette: dict[int, tuple[int, int, int]]) -> None:
    """Write a palette-indexed label image; pixel values are the class ids."""
    img = Image.fromarray(labels.astype(np.uint8), mode="P")
    flat = [0] * 768
    for cid, (r, g, b) in palette.items():
        flat[3 * cid: 3 * cid + 3] = [r, g, b]
    img.putpalette(flat)
    img.save(path, format="PNG")


def load_label_png(path) -> np.ndarray:
    img = Image.open(path)
    if img.mode not in ("P", "L"):
        raise ValidationError(f"label image {path} must be palette or grayscale, got {img.mode}")
    return np.asarray(img, dtype=np.uint8)


def write_pgm16(path, values: np.ndarray) -> None:
    """Dump a [0, 1] float grid as a 16-bit binary PGM (big-endian samples)."""
    vals = np.clip(np.asarray(values, dtype=np.float64), 0.0, 1.0)
    raster = np.round(vals * 65535.0).astype(">u2")
    h, w = raster.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n65535\n".encode("ascii"))
        fh.write(raster.tobytes())


def read_pgm16(path) -> np.ndarray:
    with open(path, "rb") as fh:
        magic = fh.readline().strip()
        if magic != b"P5":
            raise ValidationError(f"{path}: not a binary PGM")
        dims = fh.readline().split()
        maxval = int(fh.readline())
        w, h = int(dims[0]), int(dims[1])
        if maxval != 65535:
            raise ValidationError(f"{path}: expected 16-bit PGM, maxval={maxval}")
        raw = fh.read(w * h * 2)
    grid = np.frombuffer(raw, dtype=">u2").reshape(h, w)
    return grid.astype(np.float64) / 65535.0


def unpack_u32(buf: bytes, offset: int) -> int:
    return struct.unpack_from("<I", buf, offset)[0]
