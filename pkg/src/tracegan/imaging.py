"""Codec between traces and 32x32 byte images, plus scaling to the generator's
[-1, 1] numeric range.

A trace shorter than 1024 values is padded with 255 and written row-wise into
a 32x32 grid. The inverse strips the maximal trailing run of 255s, so traces
whose genuine data ends in 255 are not round-trippable (accepted limitation,
the padding byte is fixed).
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import Label, PAD_VALUE, TraceSequence
from .errors import DataError, ShapeError

IMAGE_SIDE = 32
IMAGE_PIXELS = IMAGE_SIDE * IMAGE_SIDE


@dataclass(frozen=True)
class TraceImage:
    pixels: np.ndarray  # (32, 32) uint8
    label: Label
    source_id: str

    def __post_init__(self):
        arr = np.asarray(self.pixels)
        if arr.shape != (IMAGE_SIDE, IMAGE_SIDE):
            raise ShapeError(f"{self.source_id}: image must be {IMAGE_SIDE}x{IMAGE_SIDE}, got {arr.shape}")
        if arr.dtype != np.uint8:
            if int(arr.min()) < 0 or int(arr.max()) > 255:
                raise DataError(f"{self.source_id}: pixel values outside [0, 255]")
            arr = arr.astype(np.uint8)
        else:
            arr = arr.copy()
        arr.setflags(write=False)
        object.__setattr__(self, "pixels", arr)


def sequence_to_image(t: TraceSequence) -> TraceImage:
    n = len(t)
    if n > IMAGE_PIXELS:
        raise DataError(f"{t.source_id}: length {n} exceeds {IMAGE_PIXELS}")
    flat = np.full(IMAGE_PIXELS, PAD_VALUE, np.uint8)
    flat[:n] = t.values
    return TraceImage(flat.reshape(IMAGE_SIDE, IMAGE_SIDE), t.label, t.source_id)


def image_to_sequence(img: TraceImage) -> TraceSequence:
    flat = img.pixels.ravel()
    non_pad = np.flatnonzero(flat != PAD_VALUE)
    # an all-pad image decodes to the single pad byte
    end = int(non_pad[-1]) + 1 if non_pad.size else 1
    return TraceSequence(flat[:end].copy(), img.label, img.source_id)


def normalize(img: TraceImage) -> np.ndarray:
    """Map bytes to float32 in [-1, 1]: p -> 2*p/255 - 1, shaped (1, 32, 32)."""
    px = img.pixels.astype(np.float32)
    return (px * 2.0 / 255.0 - 1.0).reshape(1, IMAGE_SIDE, IMAGE_SIDE)


def denormalize(t: np.ndarray, label: Label, source_id: str) -> TraceImage:
    """Inverse of normalize: p = round(255*(v+1)/2) clamped to [0, 255].

    Rounding is half-up on the byte scale (floor(x + 0.5), computed in
    float64), which makes generated images bit-reproducible."""
    if t.shape != (1, IMAGE_SIDE, IMAGE_SIDE):
        raise ShapeError(f"expected (1, {IMAGE_SIDE}, {IMAGE_SIDE}) tensor, got {t.shape}")
    x = t.astype(np.float64).reshape(IMAGE_SIDE, IMAGE_SIDE)
    p = np.floor(255.0 * (x + 1.0) / 2.0 + 0.5)
    return TraceImage(np.clip(p, 0, 255).astype(np.uint8), label, source_id)


def write_pgm(img: TraceImage, path: str | Path) -> None:
    """8-bit binary PGM (P5) export for visual inspection."""
    with open(path, "wb") as fh:
        fh.write(f"P5\n{IMAGE_SIDE} {IMAGE_SIDE}\n255\n".encode())
        fh.write(img.pixels.tobytes())


def read_pgm(path: str | Path, label: Label, source_id: str | None = None) -> TraceImage:
    raw = Path(path).read_bytes()
    parts = raw.split(b"\n", 3)
    if len(parts) != 4 or parts[0] != b"P5" or parts[2] != b"255":
        raise DataError(f"{path}: not an 8-bit 32x32 PGM written by this package")
    if parts[1].split() != [str(IMAGE_SIDE).encode()] * 2:
        raise DataError(f"{path}: unexpected PGM dimensions {parts[1]!r}")
    pixels = np.frombuffer(parts[3][:IMAGE_PIXELS], np.uint8)
    if pixels.size != IMAGE_PIXELS:
        raise DataError(f"{path}: truncated PGM payload")
    return TraceImage(pixels.reshape(IMAGE_SIDE, IMAGE_SIDE).copy(), label, source_id or str(path))
