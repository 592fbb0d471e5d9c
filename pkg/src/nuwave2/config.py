"""Run configuration read from a flat ``section.key = value`` text file.

Example::

    # comments start with '#'
    model.channels = 64
    train.lr = 2e-4
    data.corpus_root = /data/vctk
    data.holdout = p360, p361
    metric.rates = 8000, 12000, 16000, 24000
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

from .diffusion import DEFAULT_INFERENCE_LAMBDAS, InferenceSchedule
from .dsp import StftConfig
from .metrics import EVAL_RATES, METRIC_STFT
from .network import ModelConfig
from .training import TrainConfig


class ConfigError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        super().__init__(f"line {line}: {message}" if line is not None else message)
        self.line = line


@dataclass(frozen=True)
class DataConfig:
    corpus_root: str = ""
    holdout: tuple[str, ...] | None = None


@dataclass(frozen=True)
class SampleConfig:
    n_steps: int = len(DEFAULT_INFERENCE_LAMBDAS)
    lambdas: tuple[float, ...] = DEFAULT_INFERENCE_LAMBDAS

    def schedule(self) -> InferenceSchedule:
        if self.n_steps != len(self.lambdas):
            raise ConfigError(f"sample.n_steps={self.n_steps} but {len(self.lambdas)} lambdas given")
        return InferenceSchedule(tuple(self.lambdas))


@dataclass(frozen=True)
class MetricConfig:
    fft: int = METRIC_STFT.fft_size
    hop: int = METRIC_STFT.hop
    rates: tuple[int, ...] = EVAL_RATES

    def stft(self) -> StftConfig:
        return StftConfig(self.fft, self.hop)


@dataclass(frozen=True)
class RunConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    data: DataConfig = field(default_factory=DataConfig)
    sample: SampleConfig = field(default_factory=SampleConfig)
    metric: MetricConfig = field(default_factory=MetricConfig)


_SECTIONS = {f.name: f.default_factory for f in dataclasses.fields(RunConfig)}

# Field types that are not plain scalars.
_LISTS = {
    ("data", "holdout"): str,
    ("sample", "lambdas"): float,
    ("metric", "rates"): int,
}


def _convert(section: str, key: str, raw: str, proto, line: int):
    try:
        if (section, key) in _LISTS:
            kind = _LISTS[section, key]
            return tuple(kind(v.strip()) for v in raw.split(",") if v.strip())
        current = getattr(proto, key)
        if isinstance(current, bool):
            if raw.lower() not in ("true", "false"):
                raise ValueError(raw)
            return raw.lower() == "true"
        if isinstance(current, int):
            return int(raw)
        if isinstance(current, float):
            return float(raw)
        return raw
    except ValueError:
        raise ConfigError(f"bad value {raw!r} for {section}.{key}", line) from None


def parse_config(text: str) -> RunConfig:
    values: dict[str, dict] = {name: {} for name in _SECTIONS}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'section.key = value', got {line!r}", lineno)
        name, raw = (s.strip() for s in line.split("=", 1))
        if name.count(".") != 1:
            raise ConfigError(f"key {name!r} must be 'section.key'", lineno)
        section, key = name.split(".")
        if section not in _SECTIONS:
            raise ConfigError(f"unknown section {section!r}", lineno)
        proto = _SECTIONS[section]()
        if key not in {f.name for f in dataclasses.fields(proto)}:
            raise ConfigError(f"unknown key {name!r}", lineno)
        if key in values[section]:
            raise ConfigError(f"duplicate key {name!r}", lineno)
        values[section][key] = _convert(section, key, raw, proto, lineno)
    try:
        built = {name: _SECTIONS[name]().__class__(**vals) for name, vals in values.items()}
        cfg = RunConfig(**built)
        cfg.sample.schedule()
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    return cfg


def load_config(path) -> RunConfig:
    return parse_config(Path(path).read_text())
