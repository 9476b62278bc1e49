"""Flat dotted-key run configuration.

One text file aggregates every knob of the pipeline::

    # comment
    loss.tau = 0.5
    arch.mean_channels = 16,32,64,128
    train.learning_rate = 1e-4

Overrides use identical dotted paths. Unknown keys are rejected rather than
silently defaulted, and every command persists its fully resolved snapshot so
a run is reproducible from the run directory alone.
"""

from __future__ import annotations

import typing
from dataclasses import dataclass, fields
from pathlib import Path

from .corpus import StftConfig
from .errors import ConfigError
from .evaluation import INFERENCE_MODES, MEAN_ONLY
from .model import ArchConfig
from .objective import LossConfig
from .synthbench import SynthSpec
from .training import TrainConfig

SPLIT_CHOICES = ("train", "val", "test", "all")

_SECTION_CLASSES: dict[str, type] = {
    "stft": StftConfig,
    "arch": ArchConfig,
    "loss": LossConfig,
    "synth": SynthSpec,
}

# TrainConfig leaves; its nested loss/arch come from their own sections.
_TRAIN_FIELDS = (
    "batch_size", "learning_rate", "epochs", "seed",
    "disable_biasnet", "disable_meannet", "disable_clipping", "zero_padding",
)

_EXTRA_KEYS: dict[str, tuple[object, object]] = {
    # key: (type, default)
    "train.seeds": (tuple[int, ...], (0, 1, 2)),
    "split.train": (int, 240),
    "split.val": (int, 60),
    "split.test": (int, 60),
    "split.seed": (int, 0),
    "eval.modes": (tuple[str, ...], (MEAN_ONLY,)),
    "eval.seed": (int, 0),
    "eval.split": (str, "test"),
    "paths.manifest": (str, ""),
    "paths.audio_root": (str, ""),
    "paths.cache_dir": (str, ""),
    "paths.checkpoint": (str, ""),
}


def _build_schema() -> dict[str, tuple[object, object]]:
    schema: dict[str, tuple[object, object]] = {}
    for section, cls in _SECTION_CLASSES.items():
        hints = typing.get_type_hints(cls)
        defaults = cls()
        for item in fields(cls):
            schema[f"{section}.{item.name}"] = (hints[item.name], getattr(defaults, item.name))
    train_hints = typing.get_type_hints(TrainConfig)
    train_defaults = TrainConfig()
    for name in _TRAIN_FIELDS:
        schema[f"train.{name}"] = (train_hints[name], getattr(train_defaults, name))
    schema.update(_EXTRA_KEYS)
    return schema


_SCHEMA = _build_schema()


def _parse_value(key: str, kind, raw: str):
    raw = raw.strip()
    origin = typing.get_origin(kind)
    try:
        if origin is tuple:
            item_types = [t for t in typing.get_args(kind) if t is not Ellipsis]
            item_type = item_types[0]
            parts = [p.strip() for p in raw.split(",")] if raw else []
            if len(item_types) > 1 and len(parts) != len(item_types):
                raise ValueError(f"expected {len(item_types)} comma-separated values")
            return tuple(item_type(p) for p in parts)
        if kind is bool:
            lowered = raw.lower()
            if lowered in ("true", "1", "yes"):
                return True
            if lowered in ("false", "0", "no"):
                return False
            raise ValueError("expected true/false")
        if kind is int:
            return int(raw)
        if kind is float:
            return float(raw)
        if kind is str:
            return raw
    except ValueError as exc:
        raise ConfigError(f"invalid value for {key!r}: {raw!r} ({exc})") from None
    raise ConfigError(f"unsupported type for {key!r}")


def _format_value(value) -> str:
    if isinstance(value, tuple):
        return ",".join(str(v) for v in value)
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


@dataclass(eq=False)
class RunConfig:
    """A fully resolved mapping of every known configuration key."""

    values: dict[str, object]

    @classmethod
    def default(cls) -> "RunConfig":
        return cls(values={key: default for key, (_, default) in _SCHEMA.items()})

    def set(self, key: str, raw: str) -> None:
        if key not in _SCHEMA:
            raise ConfigError(f"unknown config key {key!r}")
        self.values[key] = _parse_value(key, _SCHEMA[key][0], raw)

    @classmethod
    def load(cls, path: Path | str | None = None,
             overrides: list[str] | None = None) -> "RunConfig":
        """Resolve defaults, then the config file, then ``key=value`` overrides."""
        cfg = cls.default()
        if path is not None:
            path = Path(path)
            if not path.exists():
                raise ConfigError(f"config file not found: {path}")
            for line_no, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
                stripped = line.strip()
                if not stripped or stripped.startswith("#"):
                    continue
                if "=" not in stripped:
                    raise ConfigError(f"{path}:{line_no}: expected 'key = value'")
                key, _, raw = stripped.partition("=")
                cfg.set(key.strip(), raw)
        for item in overrides or []:
            if "=" not in item:
                raise ConfigError(f"override {item!r} must be key=value")
            key, _, raw = item.partition("=")
            cfg.set(key.strip(), raw)
        cfg.validate()
        return cfg

    def validate(self) -> None:
        for mode in self.values["eval.modes"]:
            if mode not in INFERENCE_MODES:
                raise ConfigError(
                    f"invalid value for 'eval.modes': {mode!r} "
                    f"(choose from {', '.join(INFERENCE_MODES)})"
                )
        if self.values["eval.split"] not in SPLIT_CHOICES:
            raise ConfigError(
                f"invalid value for 'eval.split': {self.values['eval.split']!r} "
                f"(choose from {', '.join(SPLIT_CHOICES)})"
            )

    def _section_kwargs(self, section: str) -> dict[str, object]:
        prefix = f"{section}."
        return {key[len(prefix):]: value for key, value in self.values.items()
                if key.startswith(prefix)}

    def stft_config(self) -> StftConfig:
        return StftConfig(**self._section_kwargs("stft"))

    def arch_config(self) -> ArchConfig:
        return ArchConfig(**self._section_kwargs("arch"))

    def loss_config(self) -> LossConfig:
        return LossConfig(**self._section_kwargs("loss"))

    def synth_spec(self) -> SynthSpec:
        return SynthSpec(**self._section_kwargs("synth"))

    def train_config(self) -> TrainConfig:
        leaves = {name: self.values[f"train.{name}"] for name in _TRAIN_FIELDS}
        return TrainConfig(loss=self.loss_config(), arch=self.arch_config(), **leaves)

    @property
    def seeds(self) -> tuple[int, ...]:
        return tuple(self.values["train.seeds"])

    @property
    def split_sizes(self) -> tuple[int, int, int]:
        return (self.values["split.train"], self.values["split.val"], self.values["split.test"])

    @property
    def split_seed(self) -> int:
        return self.values["split.seed"]

    @property
    def eval_modes(self) -> tuple[str, ...]:
        return tuple(self.values["eval.modes"])

    @property
    def eval_seed(self) -> int:
        return self.values["eval.seed"]

    @property
    def eval_split(self) -> str:
        return self.values["eval.split"]

    def path(self, name: str) -> Path | None:
        value = self.values[f"paths.{name}"]
        return Path(value) if value else None

    def snapshot_lines(self) -> list[str]:
        return [f"{key} = {_format_value(self.values[key])}" for key in sorted(self.values)]

    def write_snapshot(self, path: Path | str) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text("\n".join(self.snapshot_lines()) + "\n", encoding="utf-8")
        return path
