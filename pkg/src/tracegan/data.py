"""Trace ingestion, length filtering, stratified splitting, template selection,
and synthetic desk-scale datasets.

Input traces are plain-text files of whitespace-separated non-negative decimal
integers, one trace per file, with the class given by the directory the file
lives under (anomaly trees may nest per-attack subdirectories).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from .errors import DataError
from .seeding import derive_seed, make_rng

log = logging.getLogger(__name__)

MAX_TRACE_LENGTH = 1024
PAD_VALUE = 255


class Label(Enum):
    NORMAL = "normal"
    ANOMALY = "anomaly"


class ClampPolicy(Enum):
    CLAMP = "clamp"
    REJECT = "reject"


@dataclass(frozen=True)
class TraceSequence:
    """One abstracted system-call trace: byte values plus a class label."""

    values: np.ndarray
    label: Label
    source_id: str

    def __post_init__(self):
        arr = np.asarray(self.values)
        if arr.ndim != 1 or arr.size == 0:
            raise DataError(f"{self.source_id}: trace must be a non-empty 1-d sequence")
        if arr.dtype != np.uint8:
            if int(arr.min()) < 0 or int(arr.max()) > 255:
                raise DataError(f"{self.source_id}: values outside [0, 255]")
            arr = arr.astype(np.uint8)
        else:
            arr = arr.copy()
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    def __len__(self) -> int:
        return int(self.values.size)


@dataclass
class Dataset:
    traces: list[TraceSequence]
    discarded_count: int = 0
    clamped_count: int = 0
    warnings: list[str] = field(default_factory=list)

    def normal_count(self) -> int:
        return sum(1 for t in self.traces if t.label is Label.NORMAL)

    def anomaly_count(self) -> int:
        return sum(1 for t in self.traces if t.label is Label.ANOMALY)

    def by_label(self, label: Label) -> list[TraceSequence]:
        return [t for t in self.traces if t.label is label]

    def __len__(self) -> int:
        return len(self.traces)


@dataclass(frozen=True)
class SplitSpec:
    """Stratified split request: either a test fraction or explicit per-class
    test counts (normal, anomaly). Exactly one of the two must be given."""

    seed: int
    test_fraction: float | None = None
    test_counts: tuple[int, int] | None = None

    def __post_init__(self):
        if (self.test_fraction is None) == (self.test_counts is None):
            raise DataError("SplitSpec needs exactly one of test_fraction or test_counts")
        if self.test_fraction is not None and not 0.0 <= self.test_fraction <= 1.0:
            raise DataError(f"test_fraction {self.test_fraction} outside [0, 1]")
        if self.test_counts is not None:
            tn, ta = self.test_counts
            if tn < 0 or ta < 0:
                raise DataError("test counts must be non-negative")


def _iter_trace_files(root: Path) -> list[Path]:
    # sorted for reproducible ordering regardless of filesystem iteration order
    return sorted(p for p in root.rglob("*") if p.is_file())


def load_traces(
    normal_dir: str | Path,
    anomaly_dir: str | Path,
    max_length: int = MAX_TRACE_LENGTH,
    clamp_policy: ClampPolicy = ClampPolicy.CLAMP,
) -> Dataset:
    """Walk both directory trees and build a Dataset.

    Traces longer than ``max_length`` are dropped (counted in discarded_count).
    Values above 255 are clamped (counted per value) under CLAMP, or cause the
    whole file to be skipped with a warning under REJECT. Files with
    non-integer or negative tokens, and empty files, are skipped with a warning.
    """
    ds = Dataset(traces=[])
    for root, label in ((Path(normal_dir), Label.NORMAL), (Path(anomaly_dir), Label.ANOMALY)):
        if not root.is_dir():
            raise DataError(f"trace directory not readable: {root}")
        for path in _iter_trace_files(root):
            try:
                tokens = path.read_text().split()
            except OSError as exc:
                _warn(ds, f"{path}: unreadable file skipped ({exc})")
                continue
            if not tokens:
                _warn(ds, f"{path}: empty file skipped")
                continue
            try:
                values = [int(tok) for tok in tokens]
            except ValueError:
                _warn(ds, f"{path}: non-integer token, file skipped")
                continue
            if any(v < 0 for v in values):
                _warn(ds, f"{path}: negative value, file skipped")
                continue
            if len(values) > max_length:
                ds.discarded_count += 1
                continue
            over = sum(1 for v in values if v > 255)
            if over:
                if clamp_policy is ClampPolicy.REJECT:
                    _warn(ds, f"{path}: {over} values above 255, file skipped")
                    continue
                values = [min(v, 255) for v in values]
                ds.clamped_count += over
            ds.traces.append(TraceSequence(np.array(values, np.uint8), label, str(path)))
    return ds


def _warn(ds: Dataset, message: str) -> None:
    ds.warnings.append(message)
    log.warning(message)


def split_dataset(ds: Dataset, spec: SplitSpec) -> tuple[Dataset, Dataset]:
    """Seeded stratified split. Membership per class is drawn by a seeded
    shuffle of class positions; both outputs keep the original trace order."""
    per_class = {
        Label.NORMAL: [i for i, t in enumerate(ds.traces) if t.label is Label.NORMAL],
        Label.ANOMALY: [i for i, t in enumerate(ds.traces) if t.label is Label.ANOMALY],
    }
    if spec.test_counts is not None:
        wanted = {Label.NORMAL: spec.test_counts[0], Label.ANOMALY: spec.test_counts[1]}
        for label, count in wanted.items():
            if count > len(per_class[label]):
                raise DataError(
                    f"requested {count} {label.value} test traces, only "
                    f"{len(per_class[label])} available"
                )
    else:
        wanted = {
            label: int(round(spec.test_fraction * len(pos)))
            for label, pos in per_class.items()
        }

    test_members: set[int] = set()
    for label, pos in per_class.items():
        rng = make_rng(derive_seed(spec.seed, f"split:{label.value}"))
        order = rng.permutation(len(pos))
        test_members.update(pos[int(j)] for j in order[: wanted[label]])

    train = Dataset([t for i, t in enumerate(ds.traces) if i not in test_members])
    test = Dataset([t for i, t in enumerate(ds.traces) if i in test_members])
    return train, test


def select_template(train: Dataset, count: int, seed: int) -> list[TraceSequence]:
    """Sample ``count`` distinct normal traces (without replacement, seeded).
    The training set is left untouched; templates stay part of it."""
    normals = train.by_label(Label.NORMAL)
    if count > len(normals):
        raise DataError(f"template count {count} exceeds {len(normals)} available normals")
    if count == 0:
        return []
    rng = make_rng(seed)
    idx = np.sort(rng.choice(len(normals), size=count, replace=False))
    return [normals[int(i)] for i in idx]


def required_generation_count(ds: Dataset) -> int:
    """Synthetic anomalies needed to balance the classes (0 if anomalies
    already match or outnumber normals)."""
    return max(0, ds.normal_count() - ds.anomaly_count())


@dataclass(frozen=True)
class ChainParams:
    """First-order Markov kernel over byte values: two mean-reverting bands
    with seeded jumps between them. The band is determined solely by the
    current value, so the chain stays first-order."""

    low_target: float
    high_target: float
    threshold: float
    pull: float
    noise: float
    enter_prob: float
    exit_prob: float


# The two classes share band geometry but differ in how often they enter the
# high band and how long they stay: normal traces produce brief blips, anomaly
# traces produce sustained high plateaus. Short traces may show no plateau at
# all, which keeps the classes overlapping rather than trivially separable.
NORMAL_CHAIN = ChainParams(
    low_target=90.0, high_target=210.0, threshold=160.0,
    pull=0.3, noise=18.0, enter_prob=0.006, exit_prob=0.5,
)
ANOMALY_CHAIN = ChainParams(
    low_target=90.0, high_target=210.0, threshold=160.0,
    pull=0.3, noise=18.0, enter_prob=0.006, exit_prob=0.04,
)


def _markov_trace(length: int, p: ChainParams, rng: np.random.Generator) -> np.ndarray:
    u = rng.random(length)
    z = rng.standard_normal(length)
    out = np.empty(length, np.int64)
    s = min(max(int(round(p.low_target + p.noise * float(z[0]))), 0), 255)
    out[0] = s
    for i in range(1, length):
        if s < p.threshold:
            if u[i] < p.enter_prob:
                nxt = p.high_target + p.noise * float(z[i])
            else:
                nxt = s + p.pull * (p.low_target - s) + p.noise * float(z[i])
        else:
            if u[i] < p.exit_prob:
                nxt = p.low_target + p.noise * float(z[i])
            else:
                nxt = s + p.pull * (p.high_target - s) + p.noise * float(z[i])
        s = min(max(int(round(nxt)), 0), 255)
        out[i] = s
    return out.astype(np.uint8)


def synth_dataset(
    n_normal: int,
    n_anomaly: int,
    length_range: tuple[int, int] = (75, MAX_TRACE_LENGTH),
    seed: int = 0,
) -> Dataset:
    """Generate a two-class dataset from the seeded Markov chains above.
    Lengths are uniform in ``length_range``; deterministic per seed."""
    lo, hi = length_range
    if not (1 <= lo <= hi <= MAX_TRACE_LENGTH):
        raise DataError(f"length_range {length_range} outside [1, {MAX_TRACE_LENGTH}]")
    traces: list[TraceSequence] = []
    specs = (
        (Label.NORMAL, n_normal, NORMAL_CHAIN),
        (Label.ANOMALY, n_anomaly, ANOMALY_CHAIN),
    )
    for label, n, params in specs:
        rng = make_rng(derive_seed(seed, f"synth:{label.value}"))
        for i in range(n):
            length = int(rng.integers(lo, hi + 1))
            values = _markov_trace(length, params, rng)
            traces.append(TraceSequence(values, label, f"synth/{label.value}/{i:05d}"))
    return Dataset(traces=traces)
