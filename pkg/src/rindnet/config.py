"""Model and training configuration, plus the flat ``key = value`` file format.

A config file holds one assignment per line; ``#`` starts a comment. Keys are
the field names of :class:`ModelConfig` and :class:`TrainConfig` (``lambda`` is
accepted for ``TrainConfig.lam``). Spatial-cue sets are written ``1,2,3``.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Any, Iterable, Mapping

from rindnet.errors import ConfigError

EDGE_TYPES = ("reflectance", "illumination", "normal", "depth")
SHORT_NAMES = ("r", "i", "n", "d")
ATTENTION_CHANNELS = ("background",) + EDGE_TYPES


@dataclass(frozen=True)
class ModelConfig:
    use_wl: bool = True
    use_am: bool = True
    re_ie_feed: str = "low"
    ne_de_feed: str = "high"
    re_ie_spatial: tuple[int, ...] = (1, 2, 3)
    ne_de_spatial: tuple[int, ...] = (1, 2, 3, 4, 5)
    decoder_streams: str = "two"
    ne_de_share_second_stream: bool = True
    generic_mode: bool = False
    # widths; the defaults are desk-scale choices
    wl_channels: int = 64
    dec_channels: int = 32
    head_channels: int = 32
    att_channels: int = 64
    freeze_backbone_bn: bool = True

    def __post_init__(self):
        for name in ("re_ie_feed", "ne_de_feed"):
            if getattr(self, name) not in ("low", "high"):
                raise ConfigError(f"{name} must be 'low' or 'high', got {getattr(self, name)!r}")
        if self.decoder_streams not in ("one", "two"):
            raise ConfigError(f"decoder_streams must be 'one' or 'two', got {self.decoder_streams!r}")
        for name in ("re_ie_spatial", "ne_de_spatial"):
            levels = tuple(sorted(set(getattr(self, name))))
            if any(k not in (1, 2, 3, 4, 5) for k in levels):
                raise ConfigError(f"{name} entries must lie in 1..5, got {levels}")
            object.__setattr__(self, name, levels)
        if self.dec_channels % 2:
            raise ConfigError("dec_channels must be even (two streams of dec_channels/2)")
        for name in ("wl_channels", "dec_channels", "head_channels", "att_channels"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")

    @property
    def n_streams(self) -> int:
        return 2 if self.decoder_streams == "two" else 1


@dataclass(frozen=True)
class TrainConfig:
    lr0: float = 1e-5
    momentum: float = 0.9
    epochs: int = 70
    batch_size: int = 4
    poly_power: float = 0.9
    weight_decay: float = 0.0
    seed: int = 0
    crop: int = 320
    lam: float = 0.1
    beta: float = 4.0
    gamma1: float = 0.5
    alpha2: float = 0.5
    gamma2: float = 2.0
    ckpt_every: int = 10
    deterministic: bool = True
    num_workers: int = 0

    def __post_init__(self):
        if self.lr0 < 0 or self.momentum < 0 or self.weight_decay < 0:
            raise ConfigError("lr0, momentum and weight_decay must be non-negative")
        if self.epochs < 0:
            raise ConfigError("epochs must be non-negative")
        if self.batch_size <= 0 or self.crop <= 0 or self.ckpt_every <= 0:
            raise ConfigError("batch_size, crop and ckpt_every must be positive")
        if self.crop % 16:
            raise ConfigError(f"crop must be a multiple of 16, got {self.crop}")
        if not 0.0 <= self.lam <= 1.0:
            raise ConfigError(f"lambda must lie in [0, 1], got {self.lam}")
        if self.beta <= 0 or self.gamma1 <= 0:
            raise ConfigError("beta and gamma1 must be positive")
        if not 0.0 < self.alpha2 < 1.0 or self.gamma2 < 0:
            raise ConfigError("alpha2 must lie in (0, 1) and gamma2 must be >= 0")
        if self.poly_power < 0:
            raise ConfigError("poly_power must be non-negative")


_KEY_ALIASES = {"lambda": "lam"}
_MODEL_FIELDS = {f.name: f for f in fields(ModelConfig)}
_TRAIN_FIELDS = {f.name: f for f in fields(TrainConfig)}


def _parse_bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _parse_levels(text: str) -> tuple[int, ...]:
    text = text.strip().strip("{}()[]")
    if not text or text.lower() == "none":
        return ()
    return tuple(int(tok) for tok in text.replace(" ", "").split(",") if tok)


def _coerce(default: Any, text: str) -> Any:
    if isinstance(default, bool):
        return _parse_bool(text)
    if isinstance(default, int):
        return int(text)
    if isinstance(default, float):
        return float(text)
    if isinstance(default, tuple):
        return _parse_levels(text)
    return text.strip()


def parse_assignments(lines: Iterable[str], source: str = "<config>") -> dict[str, str]:
    out: dict[str, str] = {}
    for lineno, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw.rstrip()!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigError(f"{source}:{lineno}: empty key")
        out[key] = value
    return out


def build_configs(values: Mapping[str, str]) -> tuple[ModelConfig, TrainConfig]:
    """Turn raw string assignments into validated configs. Unknown keys are errors."""
    model_kw: dict[str, Any] = {}
    train_kw: dict[str, Any] = {}
    for key, text in values.items():
        name = _KEY_ALIASES.get(key, key)
        if name in _MODEL_FIELDS:
            target, fdef = model_kw, _MODEL_FIELDS[name]
        elif name in _TRAIN_FIELDS:
            target, fdef = train_kw, _TRAIN_FIELDS[name]
        else:
            raise ConfigError(f"unknown config key {key!r}")
        try:
            target[name] = _coerce(fdef.default, text)
        except ValueError as exc:
            raise ConfigError(f"bad value for {key!r}: {exc}") from None
    return ModelConfig(**model_kw), TrainConfig(**train_kw)


def load_config(path: str | Path | None = None, overrides: Iterable[str] = ()) -> tuple[ModelConfig, TrainConfig]:
    """Read a config file (optional) and apply ``key=value`` overrides on top."""
    values: dict[str, str] = {}
    if path is not None:
        path = Path(path)
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        values.update(parse_assignments(text.splitlines(), str(path)))
    values.update(parse_assignments(overrides, "--set"))
    return build_configs(values)


def _fmt(value: Any) -> str:
    if isinstance(value, tuple):
        return ",".join(str(v) for v in value)
    if isinstance(value, bool):
        return "true" if value else "false"
    return str(value)


def dump_config(model_cfg: ModelConfig, train_cfg: TrainConfig | None = None) -> str:
    """Render configs in the file format; the output round-trips through :func:`load_config`."""
    lines = []
    for obj in (model_cfg, train_cfg):
        if obj is None:
            continue
        for f in fields(obj):
            key = "lambda" if f.name == "lam" else f.name
            lines.append(f"{key} = {_fmt(getattr(obj, f.name))}")
    return "\n".join(lines) + "\n"


def config_to_dict(cfg) -> dict[str, Any]:
    d = dataclasses.asdict(cfg)
    return {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}


def model_config_from_dict(d: Mapping[str, Any]) -> ModelConfig:
    kw = {k: tuple(v) if isinstance(v, list) else v for k, v in d.items() if k in _MODEL_FIELDS}
    return ModelConfig(**kw)


def config_hash(*cfgs) -> str:
    payload = json.dumps([config_to_dict(c) for c in cfgs], sort_keys=True)
    return hashlib.sha256(payload.encode()).hexdigest()[:16]


__all__ = [
    "EDGE_TYPES",
    "SHORT_NAMES",
    "ATTENTION_CHANNELS",
    "ModelConfig",
    "TrainConfig",
    "build_configs",
    "config_hash",
    "config_to_dict",
    "dump_config",
    "load_config",
    "model_config_from_dict",
    "parse_assignments",
]
