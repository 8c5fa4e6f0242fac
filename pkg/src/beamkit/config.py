"""Run configuration: one validated object per command-line invocation.

A run is configured by a JSON file (any subset of the schema below),
dotted-path overrides (``section.field=value``), and a run-level seed.
Everything is validated at construction — bad values fail before any
work starts — and the effective configuration is echoed into the output
directory for reproducibility.

Schema (all keys optional, defaults shown by ``default_config()``)::

    {
      "seed": 0,
      "model":    { ... ModelConfig fields ... },
      "stft":     { "frame_length": 320, "frame_shift": 160,
                    "fft_size": 320, "window": "hann" },
      "train":    { ... TrainConfig fields ...,
                    "manifest": "path", "val_manifest": "path" },
      "simulate": { "count": 40, "duration_seconds": 6.0,
                    "sample_rate": 16000, "max_order": null,
                    "sampling": { ... SceneSampling fields ... } },
      "enhance":  { "checkpoint": "path", "input_wav": "path" },
      "evaluate": { "manifest": "path", "system": "model",
                    "checkpoint": "path", "max_scenes": null,
                    "dump_audio": false },
      "rir":      { "room_dimensions": [6,5,3], "rt60": 0.3,
                    "source_position": [2,3,1.5],
                    "array_center": [3,2.5,1.5], "num_mics": 9,
                    "mic_spacing": 0.04, "max_order": null,
                    "sample_rate": 16000, "fractional_delay": "round" }
    }
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field, fields

from .errors import ConfigError, ConfigMismatchError
from .model import ModelConfig
from .rooms import SceneSampling
from .stft import StftConfig
from .training import TrainConfig

__all__ = [
    "RunConfig",
    "SimulateSection",
    "EnhanceSection",
    "EvaluateSection",
    "RirSection",
    "load_run_config",
    "apply_overrides",
    "default_config",
]

MAX_SEED = 2**64 - 1

EVALUATE_SYSTEMS = ("model", "identity", "oracle-mvdr")
FRACTIONAL_DELAY_MODES = ("round", "sinc8")


def _from_dict(cls, raw: dict, label: str):
    """Build a dataclass from a dict, rejecting unknown keys."""
    if not isinstance(raw, dict):
        raise ConfigError(f"{label} section must be an object, got {type(raw).__name__}")
    known = {f.name for f in fields(cls)}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown {label} fields: {sorted(unknown)}")
    coerced = {
        key: tuple(value) if isinstance(value, list) else value
        for key, value in raw.items()
    }
    return cls(**coerced)


@dataclass(frozen=True)
class SimulateSection:
    """Corpus synthesis settings (scene count, audio length, sampler)."""

    count: int = 40
    duration_seconds: float = 6.0
    sample_rate: int = 16000
    max_order: int | None = None
    sampling: SceneSampling = field(default_factory=SceneSampling)

    def __post_init__(self):
        if self.count < 0:
            raise ConfigError(f"simulate.count must be >= 0, got {self.count}")
        if self.duration_seconds <= 0:
            raise ConfigError(
                f"simulate.duration_seconds must be > 0, got {self.duration_seconds}"
            )
        if self.sample_rate < 1:
            raise ConfigError(
                f"simulate.sample_rate must be >= 1, got {self.sample_rate}"
            )
        if self.max_order is not None and self.max_order < 0:
            raise ConfigError(
                f"simulate.max_order must be >= 0 or null, got {self.max_order}"
            )

    @classmethod
    def from_dict(cls, raw: dict) -> "SimulateSection":
        raw = dict(raw)
        sampling_raw = raw.pop("sampling", None)
        section = _from_dict(cls, raw, "simulate")
        if sampling_raw is not None:
            sampling = _from_dict(SceneSampling, sampling_raw, "simulate.sampling")
            object.__setattr__(section, "sampling", sampling)
        return section


@dataclass(frozen=True)
class EnhanceSection:
    """Single-file enhancement: which checkpoint, which input mixture."""

    checkpoint: str | None = None
    input_wav: str | None = None


@dataclass(frozen=True)
class EvaluateSection:
    """Which system to score on which manifest."""

    manifest: str | None = None
    system: str = "model"
    checkpoint: str | None = None
    max_scenes: int | None = None
    dump_audio: bool = False

    def __post_init__(self):
        if not isinstance(self.dump_audio, bool):
            raise ConfigError(
                f"evaluate.dump_audio must be true or false, got {self.dump_audio!r}"
            )
        if self.system not in EVALUATE_SYSTEMS:
            raise ConfigError(
                f"evaluate.system must be one of {EVALUATE_SYSTEMS}, "
                f"got {self.system!r}"
            )
        if self.max_scenes is not None and self.max_scenes < 1:
            raise ConfigError(
                f"evaluate.max_scenes must be >= 1 or null, got {self.max_scenes}"
            )


@dataclass(frozen=True)
class RirSection:
    """One-shot impulse-response dump geometry."""

    room_dimensions: tuple = (6.0, 5.0, 3.0)
    rt60: float = 0.3
    source_position: tuple = (2.0, 3.0, 1.5)
    array_center: tuple = (3.0, 2.5, 1.5)
    num_mics: int = 9
    mic_spacing: float = 0.04
    max_order: int | None = None
    sample_rate: int = 16000
    fractional_delay: str = "round"

    def __post_init__(self):
        for name in ("room_dimensions", "source_position", "array_center"):
            value = tuple(float(v) for v in getattr(self, name))
            if len(value) != 3:
                raise ConfigError(f"rir.{name} must have three entries, got {value}")
            object.__setattr__(self, name, value)
        if self.rt60 <= 0:
            raise ConfigError(f"rir.rt60 must be > 0, got {self.rt60}")
        if self.num_mics < 1:
            raise ConfigError(f"rir.num_mics must be >= 1, got {self.num_mics}")
        if self.mic_spacing <= 0:
            raise ConfigError(f"rir.mic_spacing must be > 0, got {self.mic_spacing}")
        if self.max_order is not None and self.max_order < 0:
            raise ConfigError(
                f"rir.max_order must be >= 0 or null, got {self.max_order}"
            )
        if self.sample_rate < 1:
            raise ConfigError(f"rir.sample_rate must be >= 1, got {self.sample_rate}")
        if self.fractional_delay not in FRACTIONAL_DELAY_MODES:
            raise ConfigError(
                f"rir.fractional_delay must be one of {FRACTIONAL_DELAY_MODES}, "
                f"got {self.fractional_delay!r}"
            )


@dataclass(frozen=True)
class RunConfig:
    """Everything one command invocation needs, validated up front.

    The transform geometry and the model's frequency-bin count are
    cross-checked here so a run can never get partway on inconsistent
    settings.
    """

    seed: int = 0
    model: ModelConfig = field(default_factory=ModelConfig)
    stft: StftConfig = field(default_factory=StftConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    train_manifest: str | None = None
    val_manifest: str | None = None
    simulate: SimulateSection = field(default_factory=SimulateSection)
    enhance: EnhanceSection = field(default_factory=EnhanceSection)
    evaluate: EvaluateSection = field(default_factory=EvaluateSection)
    rir: RirSection = field(default_factory=RirSection)

    def __post_init__(self):
        if not isinstance(self.seed, int) or isinstance(self.seed, bool):
            raise ConfigError(f"seed must be an integer, got {self.seed!r}")
        if not 0 <= self.seed <= MAX_SEED:
            raise ConfigError(f"seed must fit in 64 bits, got {self.seed}")
        if self.stft.freq_bins != self.model.freq_bins:
            raise ConfigMismatchError(
                f"stft yields {self.stft.freq_bins} frequency bins "
                f"(fft_size {self.stft.fft_size}) but the model expects "
                f"{self.model.freq_bins}"
            )

    @classmethod
    def from_dict(cls, raw: dict) -> "RunConfig":
        if not isinstance(raw, dict):
            raise ConfigError(f"config root must be an object, got {type(raw).__name__}")
        known = {
            "seed", "model", "stft", "train", "simulate", "enhance",
            "evaluate", "rir",
        }
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown config sections: {sorted(unknown)}")

        kwargs = {}
        if "seed" in raw:
            kwargs["seed"] = raw["seed"]
        if "model" in raw:
            kwargs["model"] = ModelConfig.from_dict(raw["model"])
        if "stft" in raw:
            kwargs["stft"] = _from_dict(StftConfig, raw["stft"], "stft")
        if "train" in raw:
            section = dict(raw["train"])
            kwargs["train_manifest"] = section.pop("manifest", None)
            kwargs["val_manifest"] = section.pop("val_manifest", None)
            kwargs["train"] = TrainConfig.from_dict(section)
        if "simulate" in raw:
            kwargs["simulate"] = SimulateSection.from_dict(raw["simulate"])
        if "enhance" in raw:
            kwargs["enhance"] = _from_dict(EnhanceSection, raw["enhance"], "enhance")
        if "evaluate" in raw:
            kwargs["evaluate"] = _from_dict(EvaluateSection, raw["evaluate"], "evaluate")
        if "rir" in raw:
            kwargs["rir"] = _from_dict(RirSection, raw["rir"], "rir")
        return cls(**kwargs)

    def to_dict(self) -> dict:
        train = self.train.to_dict()
        train["manifest"] = self.train_manifest
        train["val_manifest"] = self.val_manifest
        return {
            "seed": self.seed,
            "model": self.model.to_dict(),
            "stft": asdict(self.stft),
            "train": train,
            "simulate": asdict(self.simulate),
            "enhance": asdict(self.enhance),
            "evaluate": asdict(self.evaluate),
            "rir": asdict(self.rir),
        }


def default_config() -> dict:
    """The full schema with every default filled in (JSON-serializable)."""
    return RunConfig().to_dict()


def apply_overrides(raw: dict, assignments: list[str]) -> dict:
    """Apply ``dotted.path=value`` assignments onto a raw config dict.

    Values parse as JSON when possible (numbers, booleans, null, lists)
    and fall back to plain strings, so ``model.bf_type=conv`` and
    ``train.learning_rate=1e-3`` both do what they look like.  Returns a
    new dict; the input is not modified.
    """
    result = json.loads(json.dumps(raw))  # deep copy via JSON (config is JSON data)
    for assignment in assignments:
        if "=" not in assignment:
            raise ConfigError(
                f"override {assignment!r} must look like section.field=value"
            )
        dotted, text = assignment.split("=", 1)
        parts = [p for p in dotted.strip().split(".") if p]
        if not parts:
            raise ConfigError(f"override {assignment!r} names no field")
        try:
            value = json.loads(text)
        except json.JSONDecodeError:
            value = text
        target = result
        for part in parts[:-1]:
            node = target.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigError(
                    f"override {assignment!r} descends into non-object "
                    f"field {part!r}"
                )
            target = node
        target[parts[-1]] = value
    return result


def load_run_config(
    config_path: str | os.PathLike | None,
    overrides: list[str] = (),
    seed: int | None = None,
) -> RunConfig:
    """File → overrides → seed flag, then full validation."""
    if config_path is None:
        raw = {}
    else:
        try:
            with open(os.fspath(config_path), "r", encoding="utf-8") as fh:
                raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{config_path} is not valid JSON: {exc}") from exc
    raw = apply_overrides(raw, list(overrides))
    if seed is not None:
        raw["seed"] = seed
    return RunConfig.from_dict(raw)
