"""Experiment configuration.

Configs are INI files (``configparser``; ``#`` and ``;`` comments) with
the sections ``[dataset]``, ``[model]``, ``[training]``, ``[probe]`` and
``[output]``; a JSON object with the same sections is accepted too. One
file drives both host variants, so the baseline and DDF runs are
guaranteed to share hyperparameters. Every seed is explicit.
"""

from __future__ import annotations

import configparser
import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

from .ddf import DEFAULT_BIAS_RANGE
from .errors import ContractError
from .probe import DEFAULT_DELTAS, DEFAULT_EPSILON, DEFAULT_JUMP_FRACTION, DEFAULT_PROBE_BATCH
from .probe import DeltaSchedule
from .scenes import IMAGE_SIZE


@dataclass
class DatasetConfig:
    image_size: int = IMAGE_SIZE
    num_scenes: int = 2048
    seed: int = 0


@dataclass
class ModelConfig:
    d: int = 32
    with_ddf: bool = True
    n: int = 32
    hidden: int = 256
    bias_low: float = DEFAULT_BIAS_RANGE[0]
    bias_high: float = DEFAULT_BIAS_RANGE[1]
    seed: int = 0


@dataclass
class TrainingConfig:
    steps: int = 5000
    batch: int = 16
    optimizer: str = "adam"
    lr: float = 1e-3
    momentum: float = 0.9  # sgd only
    warmup: int = 1000
    checkpoint_every: int = 0


@dataclass
class ProbeConfig:
    deltas: tuple = DEFAULT_DELTAS
    epsilon: float = DEFAULT_EPSILON
    jump_fraction: float = DEFAULT_JUMP_FRACTION
    batch: int = DEFAULT_PROBE_BATCH
    seed: int = 0
    image_format: str = "ppm"


@dataclass
class OutputConfig:
    dir: str = "runs"


@dataclass
class ExperimentConfig:
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    training: TrainingConfig = field(default_factory=TrainingConfig)
    probe: ProbeConfig = field(default_factory=ProbeConfig)
    output: OutputConfig = field(default_factory=OutputConfig)

    def to_dict(self):
        doc = dataclasses.asdict(self)
        doc["probe"]["deltas"] = list(self.probe.deltas)
        return doc

    def config_hash(self):
        canonical = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode()).hexdigest()

    def with_seed(self, seed):
        """Copy with every seed replaced by ``seed``."""
        cfg = from_mapping(self.to_dict())
        cfg.dataset.seed = cfg.model.seed = cfg.probe.seed = int(seed)
        return cfg

    def with_ddf(self, flag):
        cfg = from_mapping(self.to_dict())
        cfg.model.with_ddf = bool(flag)
        return cfg

    def dataset_identity(self):
        """What two runs must share for their probe reports to be comparable."""
        return dataclasses.asdict(self.dataset)


SECTIONS = {
    "dataset": DatasetConfig,
    "model": ModelConfig,
    "training": TrainingConfig,
    "probe": ProbeConfig,
    "output": OutputConfig,
}


def _coerce(section, name, kind, raw):
    where = f"[{section}] {name}"
    try:
        if kind is bool or kind == "bool":
            if isinstance(raw, bool):
                return raw
            text = str(raw).strip().lower()
            if text in ("1", "true", "yes", "on"):
                return True
            if text in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if kind is int or kind == "int":
            if isinstance(raw, bool) or (isinstance(raw, float) and not raw.is_integer()):
                raise ValueError(raw)
            return int(str(raw).strip()) if isinstance(raw, str) else int(raw)
        if kind is float or kind == "float":
            if isinstance(raw, bool):
                raise ValueError(raw)
            return float(raw)
        if kind is tuple or kind == "tuple":
            items = raw if isinstance(raw, (list, tuple)) else str(raw).split(",")
            return tuple(float(v) for v in items if str(v).strip())
        return str(raw)
    except (TypeError, ValueError):
        raise ContractError(f"{where}: cannot interpret {raw!r} as {getattr(kind, '__name__', kind)}")


def _validate(cfg):
    def need(cond, where, msg):
        if not cond:
            raise ContractError(f"{where}: {msg}")

    need(cfg.dataset.image_size >= 8, "[dataset] image_size", "must be >= 8")
    need(cfg.dataset.num_scenes >= 1, "[dataset] num_scenes", "must be >= 1")
    need(cfg.model.d >= 1, "[model] d", "must be >= 1")
    need(cfg.model.n >= 1, "[model] n", "must be >= 1")
    need(cfg.model.hidden >= 1, "[model] hidden", "must be >= 1")
    need(cfg.model.bias_low < cfg.model.bias_high < 0, "[model] bias_low/bias_high",
         "must satisfy bias_low < bias_high < 0")
    need(cfg.training.steps >= 1, "[training] steps", "must be >= 1")
    need(cfg.training.batch >= 1, "[training] batch", "must be >= 1")
    need(cfg.training.lr >= 0, "[training] lr", "must be >= 0")
    need(cfg.training.optimizer in ("adam", "sgd"), "[training] optimizer", "must be adam or sgd")
    need(0 <= cfg.training.momentum < 1, "[training] momentum", "must lie in [0, 1)")
    need(cfg.training.warmup >= 0, "[training] warmup", "must be >= 0")
    need(cfg.training.checkpoint_every >= 0, "[training] checkpoint_every", "must be >= 0")
    try:
        DeltaSchedule(cfg.probe.deltas)
    except ContractError as exc:
        raise ContractError(f"[probe] deltas: {exc}") from None
    need(cfg.probe.epsilon > 0, "[probe] epsilon", "must be > 0")
    need(0.5 < cfg.probe.jump_fraction <= 1, "[probe] jump_fraction", "must lie in (0.5, 1]")
    need(cfg.probe.batch >= 1, "[probe] batch", "must be >= 1")
    need(cfg.probe.image_format in ("ppm", "png"), "[probe] image_format", "must be ppm or png")
    return cfg


def from_mapping(doc):
    """Build and validate a config from nested ``{section: {key: value}}``."""
    if not isinstance(doc, dict):
        raise ContractError("config must be a mapping of sections")
    unknown = set(doc) - set(SECTIONS)
    if unknown:
        raise ContractError(f"unknown config section(s): {', '.join(sorted(unknown))}")
    parts = {}
    for section, cls in SECTIONS.items():
        values = doc.get(section, {}) or {}
        if not isinstance(values, dict):
            raise ContractError(f"[{section}] must be a mapping")
        fields = {f.name: f for f in dataclasses.fields(cls)}
        extra = set(values) - set(fields)
        if extra:
            raise ContractError(f"[{section}] unknown key(s): {', '.join(sorted(extra))}")
        kwargs = {
            name: _coerce(section, name, fields[name].type, raw) for name, raw in values.items()
        }
        parts[section] = cls(**kwargs)
    return _validate(ExperimentConfig(**parts))


def load_config(path):
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ContractError(f"cannot read config {path}: {exc}") from exc
    if path.suffix.lower() == ".json" or text.lstrip().startswith("{"):
        try:
            return from_mapping(json.loads(text))
        except json.JSONDecodeError as exc:
            raise ContractError(f"{path}: invalid JSON: {exc}") from exc
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        parser.read_string(text, source=str(path))
    except configparser.Error as exc:
        raise ContractError(f"{path}: {exc}") from exc
    return from_mapping({s: dict(parser.items(s)) for s in parser.sections()})


def dump_ini(cfg):
    """Render a config as INI text that ``load_config`` reads back unchanged."""
    lines = []
    for section, values in cfg.to_dict().items():
        lines.append(f"[{section}]")
        for key, value in values.items():
            if isinstance(value, list):
                value = ", ".join(repr(v) for v in value)
            elif isinstance(value, bool):
                value = "true" if value else "false"
            lines.append(f"{key} = {value}")
        lines.append("")
    return "\n".join(lines)
