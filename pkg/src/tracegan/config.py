"""JSON experiment configuration: every field has a default, user files
override selectively, and the merged result is echoed into the output
directory for provenance. Exactly one data source (directories or a synth
spec) must be set.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

from .cyclegan import GanConfig
from .classifier import MlpConfig
from .data import ClampPolicy, MAX_TRACE_LENGTH
from .errors import DataError


@dataclass(frozen=True)
class SynthSpec:
    n_normal: int = 2000
    n_anomaly: int = 200
    length_range: tuple[int, int] = (75, MAX_TRACE_LENGTH)


@dataclass(frozen=True)
class DataConfig:
    normal_dir: str | None = None
    anomaly_dir: str | None = None
    synth: SynthSpec | None = None
    max_length: int = MAX_TRACE_LENGTH
    clamp_policy: str = "clamp"


@dataclass(frozen=True)
class SplitConfig:
    mode: str = "fraction"  # "fraction" or "counts"
    test_fraction: float = 0.3
    test_normal: int = 446
    test_anomaly: int = 82


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int = 1
    data: DataConfig = field(default_factory=DataConfig)
    split: SplitConfig = field(default_factory=SplitConfig)
    gan: GanConfig = field(default_factory=GanConfig)
    mlp: MlpConfig = field(default_factory=MlpConfig)
    smote_k: int = 5
    output_dir: str = "out"

    def validate(self) -> "ExperimentConfig":
        dirs_set = self.data.normal_dir is not None or self.data.anomaly_dir is not None
        if dirs_set and self.data.synth is not None:
            raise DataError("config sets both trace directories and a synth spec")
        if not dirs_set and self.data.synth is None:
            raise DataError("config needs either trace directories or a synth spec")
        if dirs_set and (self.data.normal_dir is None or self.data.anomaly_dir is None):
            raise DataError("config needs both normal_dir and anomaly_dir")
        if self.split.mode not in ("fraction", "counts"):
            raise DataError(f"unknown split mode {self.split.mode!r}")
        if self.data.clamp_policy not in tuple(p.value for p in ClampPolicy):
            raise DataError(f"unknown clamp policy {self.data.clamp_policy!r}")
        if self.smote_k < 1:
            raise DataError("smote_k must be >= 1")
        return self

    def to_dict(self) -> dict:
        return asdict(self)


_SECTION_TYPES = {"data": DataConfig, "split": SplitConfig, "gan": GanConfig, "mlp": MlpConfig}


def _build_section(cls, raw: dict, context: str):
    allowed = {f.name for f in cls.__dataclass_fields__.values()}  # type: ignore[attr-defined]
    unknown = set(raw) - allowed
    if unknown:
        raise DataError(f"unknown config key(s) under {context}: {', '.join(sorted(unknown))}")
    kwargs = dict(raw)
    if cls is DataConfig and isinstance(kwargs.get("synth"), dict):
        kwargs["synth"] = _build_section(SynthSpec, kwargs["synth"], f"{context}.synth")
    if cls is SynthSpec and "length_range" in kwargs:
        kwargs["length_range"] = tuple(kwargs["length_range"])
    if cls is MlpConfig and "hidden_sizes" in kwargs:
        kwargs["hidden_sizes"] = tuple(kwargs["hidden_sizes"])
    return cls(**kwargs)


def config_from_dict(raw: dict) -> ExperimentConfig:
    allowed = {f.name for f in ExperimentConfig.__dataclass_fields__.values()}
    unknown = set(raw) - allowed
    if unknown:
        raise DataError(f"unknown top-level config key(s): {', '.join(sorted(unknown))}")
    kwargs = dict(raw)
    for name, cls in _SECTION_TYPES.items():
        if name in kwargs:
            if not isinstance(kwargs[name], dict):
                raise DataError(f"config section {name!r} must be an object")
            kwargs[name] = _build_section(cls, kwargs[name], name)
    return ExperimentConfig(**kwargs).validate()


def load_config(path: str | Path, seed: int | None = None,
                output_dir: str | None = None) -> ExperimentConfig:
    try:
        raw = json.loads(Path(path).read_text())
    except OSError as exc:
        raise DataError(f"cannot read config file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"config file {path} is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise DataError(f"config file {path} must hold a JSON object")
    cfg = config_from_dict(raw)
    if seed is not None:
        cfg = replace(cfg, seed=seed)
    if output_dir is not None:
        cfg = replace(cfg, output_dir=output_dir)
    return cfg.validate()


def write_effective_config(cfg: ExperimentConfig, out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "effective_config.json").write_text(
        json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n"
    )
