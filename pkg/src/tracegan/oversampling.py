"""Balancing the minority class: SMOTE interpolation or appending generated
anomalies. Originals are never deleted, reordered, or mutated; every image in
a balanced set carries its provenance.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .data import Label
from .errors import DataError
from .imaging import IMAGE_SIDE, TraceImage
from .seeding import make_rng

log = logging.getLogger(__name__)


class Provenance(Enum):
    ORIGINAL = "original"
    SMOTE = "smote"
    GAN_GENERATED = "gan_generated"


@dataclass
class BalancedSet:
    images: list[TraceImage]
    provenance: list[Provenance]
    warnings: list[str] = field(default_factory=list)

    def class_counts(self) -> tuple[int, int]:
        normal = sum(1 for im in self.images if im.label is Label.NORMAL)
        return normal, len(self.images) - normal


def needed_for_balance(images: list[TraceImage]) -> int:
    normal = sum(1 for im in images if im.label is Label.NORMAL)
    return max(0, normal - (len(images) - normal))


def nearest_neighbors(points: np.ndarray, k: int) -> np.ndarray:
    """Indices of the k nearest rows (Euclidean) per row, self excluded.
    Distances are exact (integer-valued in float64 for byte data) and ties
    break toward the lowest index, so results are implementation-stable."""
    pts = np.asarray(points, np.float64)
    n = len(pts)
    if k < 1 or k > n - 1:
        raise DataError(f"k={k} invalid for {n} points")
    out = np.empty((n, k), np.int64)
    for i in range(n):
        d2 = ((pts - pts[i]) ** 2).sum(axis=1)
        d2[i] = np.inf
        order = np.argsort(d2, kind="stable")
        out[i] = order[:k]
    return out


def smote(minority: np.ndarray, k: int, n_needed: int, seed: int) -> np.ndarray:
    """Interpolation oversampling: repeat n_needed times, pick a seeded random
    minority row x and one of its k nearest neighbors nn, draw a gap in
    [0, 1), emit x + gap * (nn - x). Returns float64 vectors (pre-rounding);
    callers round to bytes when reassembling images."""
    pts = np.asarray(minority, np.float64)
    n = len(pts)
    if n < 2:
        raise DataError(f"SMOTE needs at least 2 minority samples, got {n}")
    if k < 1:
        raise DataError("SMOTE needs k >= 1")
    k_eff = min(k, n - 1)
    neighbors = nearest_neighbors(pts, k_eff)
    rng = make_rng(seed)
    out = np.empty((n_needed, pts.shape[1]), np.float64)
    for row in range(n_needed):
        i = int(rng.integers(n))
        j = int(neighbors[i, int(rng.integers(k_eff))])
        gap = float(rng.random())
        out[row] = pts[i] + gap * (pts[j] - pts[i])
    return out


def _vectors_to_images(vectors: np.ndarray, prefix: str) -> list[TraceImage]:
    as_bytes = np.clip(np.floor(vectors + 0.5), 0, 255).astype(np.uint8)
    return [
        TraceImage(vec.reshape(IMAGE_SIDE, IMAGE_SIDE), Label.ANOMALY, f"{prefix}/{i:05d}")
        for i, vec in enumerate(as_bytes)
    ]


def balance_with_smote(train: list[TraceImage], k: int, seed: int) -> BalancedSet:
    """Append SMOTE synthetics (anomaly as minority) until the classes match.
    Already-balanced input is returned unchanged."""
    needed = needed_for_balance(train)
    images = list(train)
    provenance = [Provenance.ORIGINAL] * len(images)
    if needed == 0:
        return BalancedSet(images, provenance)
    minority = [im for im in train if im.label is Label.ANOMALY]
    if len(minority) < 2:
        raise DataError(f"SMOTE needs at least 2 anomalies, got {len(minority)}")
    vectors = np.stack([im.pixels.ravel() for im in minority])
    synthetic = smote(vectors, k, needed, seed)
    extra = _vectors_to_images(synthetic, "smote")
    return BalancedSet(images + extra, provenance + [Provenance.SMOTE] * len(extra))


def balance_with_gan(train: list[TraceImage], generated: list[TraceImage]) -> BalancedSet:
    """Concatenate generated anomalies onto the training images. A count
    mismatch against the required number is a recorded warning, not an error."""
    for im in generated:
        if im.label is not Label.ANOMALY:
            raise DataError(f"generated image {im.source_id} is not anomaly-labeled")
    needed = needed_for_balance(train)
    warnings = []
    if len(generated) != needed:
        message = f"generated count {len(generated)} != required {needed}"
        warnings.append(message)
        log.warning(message)
    images = list(train) + list(generated)
    provenance = [Provenance.ORIGINAL] * len(train) + [Provenance.GAN_GENERATED] * len(generated)
    return BalancedSet(images, provenance, warnings)
