"""Run configuration stored as ``section.key=value`` lines.

Every key has a default, so an empty file is a valid config. Lists are
comma-separated. Unknown keys, malformed lines and unparsable values raise
:class:`ConfigurationError` naming the offending line.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from fractions import Fraction
from pathlib import Path
from typing import Callable

from faultwave import sigmodel
from faultwave.dcnn.network import parse_scale
from faultwave.errors import ConfigurationError, FaultwaveError
from faultwave.pipeline import MODALITIES, PipelineConfig
from faultwave.sigmodel import SParamKind
from faultwave.spectro import Window

CONFIG_FILENAME = "run_config.txt"


@dataclass(frozen=True)
class RunConfig:
    pipeline: PipelineConfig = field(default_factory=lambda: PipelineConfig(channels=default_channels()))
    carriers_hz: tuple[float, ...] = tuple(a.carrier_hz for a in sigmodel.DEFAULT_ANTENNAS)
    distances_m: tuple[float, ...] = sigmodel.DEFAULT_DISTANCES_M
    spectrogram_dtype: str = "float64"
    seeds: tuple[int, ...] = (0, 1, 2)
    durations_s: tuple[float, ...] = (1.0, 2.0, 3.0, 4.0, 5.0)
    modalities: tuple[str, ...] = MODALITIES
    modality: str = "both"
    seed: int = 0
    threads: int = 1

    def __post_init__(self):
        if self.modality not in MODALITIES:
            raise ConfigurationError(f"run.modality must be one of {MODALITIES}, got {self.modality!r}")
        bad = [m for m in self.modalities if m not in MODALITIES]
        if bad or not self.modalities:
            raise ConfigurationError(f"eval.modalities must be drawn from {MODALITIES}, got {self.modalities}")
        if self.spectrogram_dtype not in ("float64", "float32"):
            raise ConfigurationError("datastore.spectrogram_dtype must be float64 or float32")
        if self.seed < 0 or self.threads < 1:
            raise ConfigurationError("run.seed must be >= 0 and run.threads >= 1")
        if not self.carriers_hz or not self.distances_m or not self.seeds:
            raise ConfigurationError("carrier, distance and seed lists must be non-empty")
        for c in self.carriers_hz:
            sigmodel.antenna_for_carrier(c)

    @property
    def antennas(self) -> tuple[sigmodel.AntennaConfig, ...]:
        return tuple(sigmodel.antenna_for_carrier(c) for c in self.carriers_hz)

    def dataset_plan(self) -> sigmodel.DatasetPlan:
        p = self.pipeline
        return sigmodel.DatasetPlan(
            antennas=self.antennas,
            distances_m=self.distances_m,
            trials=p.trials,
            duration_s=p.duration_s,
            sample_rate_hz=p.sample_rate_hz,
            base_seed=self.seed,
            motor=p.motor,
            vibration=p.vibration,
            channels=p.channels,
            speed_jitter=p.speed_jitter,
        )


def default_channels() -> dict:
    return {k: sigmodel.default_channel(k) for k in SParamKind}


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in text.split(",") if v.strip())


def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(v) for v in text.split(",") if v.strip())


def _words(text: str) -> tuple[str, ...]:
    return tuple(v.strip() for v in text.split(",") if v.strip())


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _join(values) -> str:
    return ",".join(_fmt(v) for v in values)


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, Fraction):
        return str(v)
    return str(v)


# key -> (object path, parser). Paths name a nested dataclass field; the
# channel entries are handled separately because they live in a dict.
_SIMPLE: dict[str, tuple[tuple[str, ...], Callable]] = {
    "sigmodel.trials": (("pipeline", "trials"), int),
    "sigmodel.duration_s": (("pipeline", "duration_s"), float),
    "sigmodel.sample_rate_hz": (("pipeline", "sample_rate_hz"), float),
    "sigmodel.speed_jitter": (("pipeline", "speed_jitter"), float),
    "sigmodel.carriers_hz": (("carriers_hz",), _floats),
    "sigmodel.distances_m": (("distances_m",), _floats),
    "sigmodel.shaft_speed_hz": (("pipeline", "motor", "shaft_speed_hz"), float),
    "sigmodel.n_elements": (("pipeline", "motor", "n_elements"), int),
    "sigmodel.ball_diameter_m": (("pipeline", "motor", "ball_diameter_m"), float),
    "sigmodel.pitch_diameter_m": (("pipeline", "motor", "pitch_diameter_m"), float),
    "sigmodel.contact_angle_rad": (("pipeline", "motor", "contact_angle_rad"), float),
    "sigmodel.resonance_hz": (("pipeline", "vibration", "resonance_hz"), float),
    "sigmodel.decay_per_s": (("pipeline", "vibration", "decay_per_s"), float),
    "sigmodel.inner_race_modulation": (("pipeline", "vibration", "inner_race_modulation"), float),
    "sigmodel.normal_tone_level": (("pipeline", "vibration", "normal_tone_level"), float),
    "sigmodel.background_noise": (("pipeline", "vibration", "background_noise"), float),
    "spectro.window_len": (("pipeline", "stft", "window_len"), int),
    "spectro.hop": (("pipeline", "stft", "hop"), lambda t: None if t.strip() == "auto" else int(t)),
    "spectro.window": (("pipeline", "stft", "window"), lambda t: Window(t.strip().lower())),
    "spectro.db_floor": (("pipeline", "stft", "db_floor"), float),
    "spectro.detrend": (("pipeline", "stft", "detrend"), _bool),
    "dcnn.channel_scale": (("pipeline", "channel_scale"), parse_scale),
    "dcnn.dtype": (("pipeline", "dtype"), str),
    "train.learning_rate": (("pipeline", "train", "learning_rate"), float),
    "train.batch_size": (("pipeline", "train", "batch_size"), int),
    "train.epochs": (("pipeline", "train", "epochs"), int),
    "train.beta1": (("pipeline", "train", "beta1"), float),
    "train.beta2": (("pipeline", "train", "beta2"), float),
    "train.adam_eps": (("pipeline", "train", "adam_eps"), float),
    "train.shuffle": (("pipeline", "train", "shuffle"), _bool),
    "datastore.train_fraction": (("pipeline", "train_fraction"), float),
    "datastore.spectrogram_dtype": (("spectrogram_dtype",), str),
    "eval.seeds": (("seeds",), _ints),
    "eval.durations_s": (("durations_s",), _floats),
    "eval.duration_offset_s": (("pipeline", "duration_offset_s"), float),
    "eval.modalities": (("modalities",), _words),
    "run.modality": (("modality",), str),
    "run.seed": (("seed",), int),
    "run.threads": (("threads",), int),
}
_CHANNEL_FIELDS = {
    "baseline_db": float,
    "modulation_depth_db": float,
    "noise_std_db": float,
    "nearfield_rolloff_m": float,
}
KNOWN_KEYS = tuple(_SIMPLE) + tuple(
    f"sigmodel.{k.name.lower()}.{f}" for k in SParamKind for f in _CHANNEL_FIELDS
)


def _get(obj, path):
    for name in path:
        obj = getattr(obj, name)
    return obj


def _rebuild(obj, tree: dict):
    # one replace() per dataclass so cross-field checks see the final values
    changes = {
        name: _rebuild(getattr(obj, name), sub) if isinstance(sub, dict) else sub
        for name, sub in tree.items()
    }
    return replace(obj, **changes)


def to_pairs(cfg: RunConfig) -> list[tuple[str, str]]:
    pairs = []
    for key, (path, _) in _SIMPLE.items():
        value = _get(cfg, path)
        if isinstance(value, tuple):
            text = _join(value)
        elif isinstance(value, Window):
            text = value.value
        elif value is None:
            text = "auto"
        else:
            text = _fmt(value)
        pairs.append((key, text))
    channels = cfg.pipeline.channels or default_channels()
    for kind in SParamKind:
        ch = channels[kind]
        for f in _CHANNEL_FIELDS:
            pairs.append((f"sigmodel.{kind.name.lower()}.{f}", _fmt(getattr(ch, f))))
    return sorted(pairs)


def dumps(cfg: RunConfig) -> str:
    return "".join(f"{k}={v}\n" for k, v in to_pairs(cfg))


def apply(cfg: RunConfig, assignments: dict[str, str], source: str = "<overrides>") -> RunConfig:
    """Return ``cfg`` with ``key -> text`` assignments parsed and applied."""
    channels = dict(cfg.pipeline.channels or default_channels())
    tree: dict = {}
    for key, text in assignments.items():
        try:
            if key in _SIMPLE:
                path, parse = _SIMPLE[key]
                node = tree
                for name in path[:-1]:
                    node = node.setdefault(name, {})
                node[path[-1]] = parse(text)
                continue
            parts = key.split(".")
            if len(parts) == 3 and parts[0] == "sigmodel" and parts[2] in _CHANNEL_FIELDS:
                kind = SParamKind.parse(parts[1])
                channels[kind] = replace(channels[kind], **{parts[2]: _CHANNEL_FIELDS[parts[2]](text)})
                continue
        except (ValueError, TypeError, FaultwaveError) as exc:
            raise ConfigurationError(f"{source}: bad value for {key}: {exc}") from None
        raise ConfigurationError(f"{source}: unknown key {key!r}")
    try:
        cfg = _rebuild(cfg, tree)
        return replace(cfg, pipeline=replace(cfg.pipeline, channels=channels))
    except (ValueError, TypeError) as exc:
        raise ConfigurationError(f"{source}: {exc}") from None


def loads(text: str, source: str = "<config>", base: RunConfig | None = None) -> RunConfig:
    assignments = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep or not key:
            raise ConfigurationError(f"{source}:{lineno}: expected key=value, got {raw!r}")
        if key in assignments:
            raise ConfigurationError(f"{source}:{lineno}: duplicate key {key!r}")
        assignments[key] = value.strip()
    return apply(base or RunConfig(), assignments, source)


def load(path) -> RunConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except UnicodeDecodeError as exc:
        raise ConfigurationError(f"{path}: not UTF-8 text ({exc})") from None
    return loads(text, str(path))

