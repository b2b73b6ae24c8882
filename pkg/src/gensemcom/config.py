"""Experiment configuration.

Configs are line-oriented ``key = value`` text files with dotted section keys::

    # comments start with '#'
    training.task = RECONSTRUCT
    channel.snr_db = 10
    encoder.strides = 2, 2

Any key can be overridden from the environment with the ``SEMCOM_`` prefix,
dots replaced by double underscores (``SEMCOM_TRAINING__EPOCHS=3``).
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

ENV_PREFIX = "SEMCOM_"
NOISELESS = "noiseless"
TASKS = ("RECONSTRUCT", "SEGMENT")


class ConfigError(ValueError):
    """Invalid configuration. Carries the offending line number when known."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


@dataclass
class ImageConfig:
    height: int = 224
    width: int = 224


@dataclass
class ChannelConfig:
    """Channel settings. ``snr_db`` is a float or the ``NOISELESS`` sentinel."""

    snr_db: Any = 10.0
    mode: str = "awgn"
    seed: int = 0
    equalize: bool = True


@dataclass
class ExtractorConfig:
    patch_size: int = 4
    window_size: int = 7
    attention_heads: int = 3
    embed_dim: int = 96
    depths: tuple = (1, 1, 1)
    mlp_ratio: float = 2.0
    shifted: bool = False


@dataclass
class EncoderConfig:
    hidden_dim: int = 128
    kernel: int = 3
    strides: tuple = (2, 2, 2, 2)
    out_channels: int = 16
    bits_per_symbol: float = 8.0


@dataclass
class RxKBConfig:
    channels: int = 128
    kernel: int = 3


@dataclass
class ReconDecoderConfig:
    embed_dim: int = 1152
    depth: int = 28
    patch_size: int = 2
    attention_heads: int = 16
    refinement_steps: int = 4
    time_embed_dim: int = 256
    mlp_ratio: float = 2.0
    channels: int = 64


@dataclass
class SegDecoderConfig:
    channels: int = 128
    kernel: int = 3
    dropout: float = 0.1
    num_classes: int = 21


@dataclass
class TrainingConfig:
    task: str = ""
    learning_rate: float = 1e-4
    beta1: float = 0.5
    beta2: float = 0.999
    weight_decay: float = 0.01
    epochs: int = 1
    batch_size: int = 16
    snr_policy: str = "uniform"
    snr_range: tuple = (0.0, 20.0)
    snr_db: float = 10.0
    seed: int = 0
    joint: bool = False
    log_every: int = 0
    lr_schedule: str = "constant"  # or "cosine": per-step decay to 0 over the run


@dataclass
class DataConfig:
    kind: str = "synthetic"
    root: str = ""
    n_train: int = 512
    n_val: int = 64
    max_shapes: int = 3
    num_classes: int = 3
    seed: int = 7
    flip: bool = False


@dataclass
class TaskKBConfig:
    memory: str = ""
    embedder: str = "hashing"
    embedder_url: str = ""
    dim: int = 256


@dataclass
class EvalConfig:
    snr_list: tuple = (0.0, 6.0, 12.0, 18.0)
    batch_size: int = 64
    seed: int = 1234
    max_value: float = 1.0
    bound_bits: float = 20 * 1024


SECTIONS = {
    "image": ImageConfig,
    "channel": ChannelConfig,
    "extractor": ExtractorConfig,
    "encoder": EncoderConfig,
    "rx_kb": RxKBConfig,
    "recon_decoder": ReconDecoderConfig,
    "seg_decoder": SegDecoderConfig,
    "training": TrainingConfig,
    "data": DataConfig,
    "task_kb": TaskKBConfig,
    "eval": EvalConfig,
}

# Sections that determine parameter shapes; a checkpoint is bound to these.
MODEL_SECTIONS = ("image", "extractor", "encoder", "rx_kb", "recon_decoder", "seg_decoder")

REQUIRED_KEYS = ("training.task",)


@dataclass
class ExperimentConfig:
    image: ImageConfig = field(default_factory=ImageConfig)
    channel: ChannelConfig = field(default_factory=ChannelConfig)
    extractor: ExtractorConfig = field(default_factory=ExtractorConfig)
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    rx_kb: RxKBConfig = field(default_factory=RxKBConfig)
    recon_decoder: ReconDecoderConfig = field(default_factory=ReconDecoderConfig)
    seg_decoder: SegDecoderConfig = field(default_factory=SegDecoderConfig)
    training: TrainingConfig = field(default_factory=TrainingConfig)
    data: DataConfig = field(default_factory=DataConfig)
    task_kb: TaskKBConfig = field(default_factory=TaskKBConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)

    @property
    def tasks(self) -> tuple:
        """Tasks whose decoders this experiment builds."""
        if self.training.joint:
            return TASKS
        return (self.training.task,)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def model_hash(self) -> str:
        """Hash of everything that fixes the parameter layout."""
        d = self.to_dict()
        payload = {k: d[k] for k in MODEL_SECTIONS}
        payload["tasks"] = list(self.tasks)
        blob = json.dumps(payload, sort_keys=True, default=list).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def replace(self, **overrides: Any) -> "ExperimentConfig":
        """Copy with dotted-key overrides, e.g. ``replace(**{"training.epochs": 2})``."""
        cfg = from_dict(self.to_dict())
        for key, value in overrides.items():
            _assign(cfg, key, value, line=None)
        validate(cfg)
        return cfg

    def to_text(self) -> str:
        lines = []
        for section, values in self.to_dict().items():
            for key, value in values.items():
                lines.append(f"{section}.{key} = {_format(value)}")
        return "\n".join(lines) + "\n"


def _format(value: Any) -> str:
    if isinstance(value, (list, tuple)):
        return ", ".join(_format(v) for v in value)
    if isinstance(value, bool):
        return "true" if value else "false"
    return str(value)


def _coerce_scalar(raw: str, kind: type, key: str, line: int | None):
    raw = raw.strip()
    try:
        if kind is bool:
            low = raw.lower()
            if low in ("true", "yes", "1", "on"):
                return True
            if low in ("false", "no", "0", "off"):
                return False
            raise ValueError(raw)
        if kind is int:
            return int(raw)
        if kind is float:
            return float(raw)
    except ValueError:
        raise ConfigError(f"bad value {raw!r} for {key} (expected {kind.__name__})", line) from None
    return raw


def _coerce(raw: Any, default: Any, key: str, line: int | None):
    if key == "channel.snr_db":
        if isinstance(raw, str) and raw.strip().lower() == NOISELESS:
            return NOISELESS
        return _coerce_scalar(str(raw), float, key, line)
    if not isinstance(raw, str):
        if isinstance(default, tuple) and isinstance(raw, (list, tuple)):
            return tuple(raw)
        return raw
    if isinstance(default, tuple):
        parts = [p for p in raw.split(",") if p.strip()]
        kind = type(default[0]) if default else float
        return tuple(_coerce_scalar(p, kind, key, line) for p in parts)
    return _coerce_scalar(raw, type(default), key, line)


def _assign(cfg: ExperimentConfig, key: str, raw: Any, line: int | None) -> None:
    if "." not in key:
        raise ConfigError(f"key {key!r} must be of the form section.name", line)
    section, name = key.split(".", 1)
    if section not in SECTIONS:
        raise ConfigError(f"unknown section {section!r} in key {key!r}", line)
    obj = getattr(cfg, section)
    if name not in {f.name for f in dataclasses.fields(obj)}:
        raise ConfigError(f"unknown key {key!r}", line)
    setattr(obj, name, _coerce(raw, getattr(obj, name), key, line))


def from_dict(d: Mapping[str, Mapping[str, Any]]) -> ExperimentConfig:
    cfg = ExperimentConfig()
    for section, values in d.items():
        for name, value in values.items():
            _assign(cfg, f"{section}.{name}", value, line=None)
    return cfg


def parse_text(text: str, env: Mapping[str, str] | None = None) -> ExperimentConfig:
    """Parse config text, apply environment overrides, and validate."""
    cfg = ExperimentConfig()
    seen: set[str] = set()
    for lineno, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {raw_line.strip()!r}", lineno)
        key, value = (s.strip() for s in line.split("=", 1))
        if key in seen:
            raise ConfigError(f"duplicate key {key!r}", lineno)
        seen.add(key)
        _assign(cfg, key, value, lineno)

    env = os.environ if env is None else env
    for var, value in env.items():
        if not var.startswith(ENV_PREFIX):
            continue
        key = var[len(ENV_PREFIX):].lower().replace("__", ".")
        try:
            _assign(cfg, key, value, None)
        except ConfigError as exc:
            raise ConfigError(f"environment override {var}: {exc}") from None
        seen.add(key)

    for key in REQUIRED_KEYS:
        if key not in seen:
            raise ConfigError(f"missing required key {key!r}")
    validate(cfg)
    return cfg


def load_config(path: str | os.PathLike, env: Mapping[str, str] | None = None) -> ExperimentConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror or exc}") from None
    return parse_text(text, env=env)


def validate(cfg: ExperimentConfig) -> None:
    """Check cross-field constraints. Raises ConfigError on the first violation."""
    t = cfg.training
    if t.task not in TASKS:
        raise ConfigError(f"training.task must be one of {TASKS}, got {t.task!r}")
    if t.learning_rate < 0:
        raise ConfigError("training.learning_rate must be >= 0")
    if t.lr_schedule not in ("constant", "cosine"):
        raise ConfigError("training.lr_schedule must be 'constant' or 'cosine'")
    if t.snr_policy not in ("uniform", "fixed"):
        raise ConfigError("training.snr_policy must be 'uniform' or 'fixed'")
    if len(t.snr_range) != 2 or t.snr_range[0] > t.snr_range[1]:
        raise ConfigError("training.snr_range must be 'low, high' with low <= high")
    if t.batch_size < 1 or t.epochs < 0:
        raise ConfigError("training.batch_size must be >= 1 and training.epochs >= 0")
    if cfg.channel.mode not in ("awgn", "rayleigh_block"):
        raise ConfigError("channel.mode must be 'awgn' or 'rayleigh_block'")
    if cfg.data.kind not in ("synthetic", "folder"):
        raise ConfigError("data.kind must be 'synthetic' or 'folder'")
    if cfg.task_kb.embedder not in ("hashing", "http"):
        raise ConfigError("task_kb.embedder must be 'hashing' or 'http'")
    sd = cfg.seg_decoder
    if sd.num_classes < 2:
        raise ConfigError("seg_decoder.num_classes must be >= 2")
    if not 0.0 <= sd.dropout < 1.0:
        raise ConfigError("seg_decoder.dropout must lie in [0, 1)")
    if cfg.recon_decoder.refinement_steps < 1:
        raise ConfigError("recon_decoder.refinement_steps must be >= 1")
    # architecture checks live with the modules; import lazily to avoid a cycle
    from .geometry import check_geometry

    check_geometry(cfg)


def desk_config(task: str = "RECONSTRUCT") -> ExperimentConfig:
    """Small configuration that trains in minutes on one CPU core."""
    cfg = ExperimentConfig()
    cfg.image = ImageConfig(32, 32)
    cfg.extractor = ExtractorConfig(patch_size=2, window_size=4, attention_heads=2, embed_dim=16)
    # reconstruction gets a narrow channel (32 symbols) so the SNR actually limits it;
    # segmentation carries less information and gets 256 symbols to stay SNR-stable
    narrow = task == "RECONSTRUCT"
    cfg.encoder = EncoderConfig(hidden_dim=32, strides=(2, 2), out_channels=1 if narrow else 8)
    cfg.rx_kb = RxKBConfig(channels=32)
    cfg.recon_decoder = ReconDecoderConfig(
        embed_dim=64, depth=4, attention_heads=4, refinement_steps=4, time_embed_dim=32, channels=32
    )
    cfg.seg_decoder = SegDecoderConfig(channels=32, num_classes=3)
    cfg.training = TrainingConfig(task=task, learning_rate=1e-3, epochs=60 if narrow else 40, batch_size=32)
    cfg.data = DataConfig()
    cfg.eval = EvalConfig()
    validate(cfg)
    return cfg


def full_config(task: str = "RECONSTRUCT") -> ExperimentConfig:
    """Full-size configuration: 224x224 inputs, large modules, 21 VOC-style classes."""
    cfg = ExperimentConfig()
    cfg.training.task = task
    cfg.data = DataConfig(kind="folder", num_classes=21)
    validate(cfg)
    return cfg
