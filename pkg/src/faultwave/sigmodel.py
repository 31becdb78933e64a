"""Synthetic S11/S21 traces for a motor test rig.

A fault-specific vibration waveform is generated from bearing kinematics and
then mapped onto an S-parameter magnitude trace (in dB) through a simple
channel model: S11 couples to the vibration only inside the antenna's
reactive near field, S21 decays smoothly with the antenna offset.
"""

from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

from faultwave.errors import ConfigurationError, DomainError

SPEED_OF_LIGHT = 299_792_458.0
S21_REFERENCE_DISTANCE_M = 0.05
MASK64 = (1 << 64) - 1


class FaultCondition(enum.IntEnum):
    NORMAL = 0
    IMBALANCE = 1
    INNER_RACE = 2
    OUTER_RACE = 3

    @property
    def label(self) -> str:
        return _FAULT_LABELS[self]

    @classmethod
    def parse(cls, text: str) -> "FaultCondition":
        key = text.strip().lower().replace("_", "").replace("-", "").replace(" ", "")
        for member, label in _FAULT_LABELS.items():
            if key in (label.lower(), member.name.lower().replace("_", ""), str(int(member))):
                return member
        raise ConfigurationError(f"unknown fault condition {text!r}")


_FAULT_LABELS = {
    FaultCondition.NORMAL: "Normal",
    FaultCondition.IMBALANCE: "Imbalance",
    FaultCondition.INNER_RACE: "InnerRace",
    FaultCondition.OUTER_RACE: "OuterRace",
}


class SParamKind(enum.IntEnum):
    S11 = 0
    S21 = 1

    @classmethod
    def parse(cls, text: str) -> "SParamKind":
        try:
            return cls[text.strip().upper()]
        except KeyError:
            raise ConfigurationError(f"unknown S-parameter kind {text!r}") from None


@dataclass(frozen=True)
class MotorConfig:
    """Shaft speed and rolling-element bearing geometry."""

    shaft_speed_hz: float = 24.67
    n_elements: int = 8
    ball_diameter_m: float = 0.0079
    pitch_diameter_m: float = 0.0395
    contact_angle_rad: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.shaft_speed_hz) and self.shaft_speed_hz >= 0):
            raise ConfigurationError(f"shaft_speed_hz must be >= 0, got {self.shaft_speed_hz}")
        if int(self.n_elements) != self.n_elements or self.n_elements < 1:
            raise ConfigurationError(f"n_elements must be a positive integer, got {self.n_elements}")
        if not 0 < self.ball_diameter_m < self.pitch_diameter_m:
            raise ConfigurationError("need 0 < ball_diameter_m < pitch_diameter_m")
        if not 0 <= self.contact_angle_rad < math.pi / 2:
            raise ConfigurationError("contact_angle_rad must lie in [0, pi/2)")


@dataclass(frozen=True)
class AntennaConfig:
    carrier_hz: float
    length_m: float

    def __post_init__(self):
        for name in ("carrier_hz", "length_m"):
            value = getattr(self, name)
            if not (isinstance(value, (int, float)) and math.isfinite(value) and value > 0):
                raise DomainError(f"{name} must be finite and > 0, got {value!r}")

    @property
    def wavelength_m(self) -> float:
        return SPEED_OF_LIGHT / self.carrier_hz


# The three omni-directional antennas of the rig: carrier -> largest dimension.
ANTENNA_433MHZ = AntennaConfig(433e6, 0.115)
ANTENNA_2G4 = AntennaConfig(2.4e9, 0.106)
ANTENNA_5G8 = AntennaConfig(5.8e9, 0.172)
DEFAULT_ANTENNAS = (ANTENNA_433MHZ, ANTENNA_2G4, ANTENNA_5G8)
DEFAULT_DISTANCES_M = (0.0, 0.05, 0.10)


def antenna_for_carrier(carrier_hz: float) -> AntennaConfig:
    for antenna in DEFAULT_ANTENNAS:
        if math.isclose(antenna.carrier_hz, carrier_hz, rel_tol=1e-9):
            return antenna
    known = ", ".join(f"{a.carrier_hz:g}" for a in DEFAULT_ANTENNAS)
    raise ConfigurationError(f"no antenna defined for carrier {carrier_hz:g} Hz (known: {known})")


@dataclass(frozen=True)
class VibrationConfig:
    """Shape parameters of the synthetic vibration signatures.

    ``background_noise`` is additive mechanical noise relative to a unit
    signature; the Normal condition's broadband component is part of its
    signature and is not affected by it.
    """

    resonance_hz: float = 180.0
    decay_per_s: float = 250.0
    inner_race_modulation: float = 0.8
    normal_tone_level: float = 0.3
    background_noise: float = 0.05

    def __post_init__(self):
        if self.resonance_hz <= 0 or self.decay_per_s <= 0:
            raise ConfigurationError("resonance_hz and decay_per_s must be > 0")
        if not 0 <= self.inner_race_modulation <= 1:
            raise ConfigurationError("inner_race_modulation must lie in [0, 1]")
        if self.normal_tone_level < 0 or self.background_noise < 0:
            raise ConfigurationError("noise and tone levels must be >= 0")


@dataclass(frozen=True)
class ChannelConfig:
    sparam_kind: SParamKind = SParamKind.S11
    distance_m: float = 0.0
    baseline_db: float = -12.0
    modulation_depth_db: float = 2.0
    noise_std_db: float = 1.2
    nearfield_rolloff_m: float = 0.005

    def __post_init__(self):
        if self.distance_m < 0:
            raise ConfigurationError(f"distance_m must be >= 0, got {self.distance_m}")
        if self.modulation_depth_db < 0 or self.noise_std_db < 0:
            raise ConfigurationError("modulation_depth_db and noise_std_db must be >= 0")
        if self.nearfield_rolloff_m <= 0:
            raise ConfigurationError("nearfield_rolloff_m must be > 0")


def default_channel(kind: SParamKind, distance_m: float = 0.0) -> ChannelConfig:
    """Default channel for each S-parameter; S11 is the noisier measurement."""
    kind = SParamKind(kind)
    if kind is SParamKind.S11:
        return ChannelConfig(SParamKind.S11, distance_m, baseline_db=-12.0, noise_std_db=1.2)
    return ChannelConfig(SParamKind.S21, distance_m, baseline_db=-35.0, noise_std_db=0.3)


@dataclass(frozen=True)
class TraceMetadata:
    fault: FaultCondition
    sparam_kind: SParamKind
    carrier_hz: float
    distance_m: float
    seed: int
    trial_index: int


@dataclass(frozen=True, eq=False)
class SParamTrace:
    samples: np.ndarray
    sample_rate_hz: float
    metadata: TraceMetadata

    def __post_init__(self):
        samples = np.ascontiguousarray(self.samples, dtype=np.float64)
        if samples.ndim != 1 or samples.size == 0:
            raise DomainError("trace samples must be a non-empty vector")
        if not np.all(np.isfinite(samples)):
            raise DomainError("trace samples must be finite")
        if not self.sample_rate_hz > 0:
            raise DomainError("sample_rate_hz must be > 0")
        object.__setattr__(self, "samples", samples)

    @property
    def duration_s(self) -> float:
        return self.samples.size / self.sample_rate_hz

    def truncated(self, duration_s: float, offset_s: float = 0.0) -> "SParamTrace":
        """Window of ``duration_s`` seconds starting ``offset_s`` into the trace."""
        start = int(round(offset_s * self.sample_rate_hz))
        n = int(round(duration_s * self.sample_rate_hz))
        if start < 0 or n < 1 or start + n > self.samples.size:
            raise DomainError(
                f"cannot take {duration_s} s at offset {offset_s} s from a {self.duration_s} s trace"
            )
        return SParamTrace(self.samples[start : start + n].copy(), self.sample_rate_hz, self.metadata)

    def __eq__(self, other):
        if not isinstance(other, SParamTrace):
            return NotImplemented
        return (
            self.sample_rate_hz == other.sample_rate_hz
            and self.metadata == other.metadata
            and self.samples.shape == other.samples.shape
            and self.samples.tobytes() == other.samples.tobytes()
        )


def reactive_near_field_radius(antenna: AntennaConfig) -> float:
    """Radius (m) of the reactive near-field region, 0.62 * sqrt(L^3 / wavelength)."""
    if not isinstance(antenna, AntennaConfig):
        raise DomainError("expected an AntennaConfig")
    return 0.62 * math.sqrt(antenna.length_m**3 / antenna.wavelength_m)


def fault_frequencies(motor: MotorConfig) -> dict[str, float]:
    ratio = motor.ball_diameter_m / motor.pitch_diameter_m * math.cos(motor.contact_angle_rad)
    half_n_fr = motor.n_elements / 2.0 * motor.shaft_speed_hz
    return {
        "shaft_hz": motor.shaft_speed_hz,
        "bpfo_hz": half_n_fr * (1.0 - ratio),
        "bpfi_hz": half_n_fr * (1.0 + ratio),
    }


def _check_nyquist(fault, motor, vib, sample_rate_hz):
    freqs = fault_frequencies(motor)
    wanted = {"shaft_hz": freqs["shaft_hz"]}
    if fault is FaultCondition.OUTER_RACE:
        wanted.update(bpfo_hz=freqs["bpfo_hz"], resonance_hz=vib.resonance_hz)
    elif fault is FaultCondition.INNER_RACE:
        wanted.update(bpfi_hz=freqs["bpfi_hz"], resonance_hz=vib.resonance_hz)
    # the bearing tones are checked for every fault so a plan fails up front
    wanted.setdefault("bpfi_hz", freqs["bpfi_hz"])
    for name, hz in wanted.items():
        if not sample_rate_hz > 2.0 * hz:
            raise ConfigurationError(
                f"sample rate {sample_rate_hz:g} Hz violates Nyquist for {name} = {hz:g} Hz"
            )


def _impulse_response(vib: VibrationConfig, sample_rate_hz: float) -> np.ndarray:
    n = max(2, int(math.ceil(6.0 / vib.decay_per_s * sample_rate_hz)))
    t = np.arange(n) / sample_rate_hz
    return np.exp(-vib.decay_per_s * t) * np.sin(2 * np.pi * vib.resonance_hz * t + np.pi / 2)


def _impulse_train(rate_hz, n, sample_rate_hz, phase, amplitude_fn=None):
    train = np.zeros(n)
    if rate_hz <= 0:
        return train
    period = 1.0 / rate_hz
    times = np.arange(phase * period, n / sample_rate_hz, period)
    idx = np.round(times * sample_rate_hz).astype(np.int64)
    keep = idx < n
    idx, times = idx[keep], times[keep]
    amps = np.ones(idx.size) if amplitude_fn is None else amplitude_fn(times)
    np.add.at(train, idx, amps)
    return train


def vibration_waveform(
    fault: FaultCondition,
    motor: MotorConfig,
    duration_s: float,
    sample_rate_hz: float,
    seed: int,
    vib: VibrationConfig | None = None,
    noise: bool = True,
) -> np.ndarray:
    """Unit-peak vibration signature of one operating condition.

    Normal is broadband noise with a weak 1x tone, Imbalance a 1x sinusoid,
    OuterRace a constant-amplitude impulse train at BPFO and InnerRace an
    impulse train at BPFI amplitude-modulated at the shaft rate; each impulse
    rings a damped structural resonance. ``noise=False`` drops the additive
    background noise so the pure signature can be inspected.
    """
    fault = FaultCondition(fault)
    vib = vib or VibrationConfig()
    if not duration_s > 0:
        raise DomainError(f"duration_s must be > 0, got {duration_s}")
    _check_nyquist(fault, motor, vib, sample_rate_hz)
    n = int(round(duration_s * sample_rate_hz))
    if n < 1:
        raise DomainError("duration too short for a single sample")

    rng = np.random.default_rng(seed)
    t = np.arange(n) / sample_rate_hz
    freqs = fault_frequencies(motor)
    shaft_phase = rng.uniform(0, 2 * np.pi)
    start_phase = rng.uniform()
    tone = np.sin(2 * np.pi * freqs["shaft_hz"] * t + shaft_phase)

    if fault is FaultCondition.NORMAL:
        x = rng.standard_normal(n) + vib.normal_tone_level * tone
    elif fault is FaultCondition.IMBALANCE:
        x = tone
    else:
        if fault is FaultCondition.OUTER_RACE:
            train = _impulse_train(freqs["bpfo_hz"], n, sample_rate_hz, start_phase)
        else:
            depth = vib.inner_race_modulation

            def amplitude(times):
                return 1.0 + depth * np.cos(2 * np.pi * freqs["shaft_hz"] * times + shaft_phase)

            train = _impulse_train(freqs["bpfi_hz"], n, sample_rate_hz, start_phase, amplitude)
        x = np.convolve(train, _impulse_response(vib, sample_rate_hz))[:n]

    if noise and vib.background_noise > 0:
        x = x + vib.background_noise * rng.standard_normal(n)
    peak = np.max(np.abs(x))
    return x / peak if peak > 0 else x


def coupling_depth(antenna: AntennaConfig, channel: ChannelConfig) -> float:
    """Fraction of the full modulation depth seen at ``channel.distance_m``."""
    d = channel.distance_m
    if channel.sparam_kind is SParamKind.S11:
        z = (reactive_near_field_radius(antenna) - d) / channel.nearfield_rolloff_m
        # numerically safe logistic
        if z >= 0:
            return 1.0 / (1.0 + math.exp(-z))
        ez = math.exp(z)
        return ez / (1.0 + ez)
    return 1.0 / (1.0 + d / S21_REFERENCE_DISTANCE_M) ** 2


def modulate_sparam(
    vib: np.ndarray,
    antenna: AntennaConfig,
    channel: ChannelConfig,
    seed: int,
    sample_rate_hz: float = 1000.0,
    fault: FaultCondition = FaultCondition.NORMAL,
    trial_index: int = 0,
) -> SParamTrace:
    vib = np.asarray(vib, dtype=np.float64)
    if vib.ndim != 1 or vib.size == 0:
        raise DomainError("vibration must be a non-empty vector")
    depth = coupling_depth(antenna, channel)
    samples = channel.baseline_db + depth * channel.modulation_depth_db * vib
    if channel.noise_std_db > 0:
        rng = np.random.default_rng(seed)
        samples = samples + rng.normal(0.0, channel.noise_std_db, vib.size)
    meta = TraceMetadata(
        fault=FaultCondition(fault),
        sparam_kind=channel.sparam_kind,
        carrier_hz=float(antenna.carrier_hz),
        distance_m=float(channel.distance_m),
        seed=int(seed) & MASK64,
        trial_index=int(trial_index),
    )
    return SParamTrace(samples, float(sample_rate_hz), meta)


def splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & MASK64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def derive_seed(base_seed: int, *indices: int) -> int:
    """Fold integer indices into ``base_seed`` with chained splitmix64 rounds."""
    h = splitmix64(int(base_seed) & MASK64)
    for i in indices:
        h = splitmix64(h ^ (int(i) & MASK64))
    return h


@dataclass(frozen=True)
class DatasetPlan:
    """Cartesian product of acquisition settings to synthesize.

    ``speed_jitter`` spreads the shaft speed of each trial uniformly by that
    relative amount, so trials of one condition are not spectrally identical.
    """

    conditions: tuple[FaultCondition, ...] = tuple(FaultCondition)
    antennas: tuple[AntennaConfig, ...] = DEFAULT_ANTENNAS
    distances_m: tuple[float, ...] = DEFAULT_DISTANCES_M
    trials: int = 40
    kinds: tuple[SParamKind, ...] = (SParamKind.S11, SParamKind.S21)
    duration_s: float = 5.0
    sample_rate_hz: float = 1000.0
    base_seed: int = 0
    motor: MotorConfig = field(default_factory=MotorConfig)
    vibration: VibrationConfig = field(default_factory=VibrationConfig)
    channels: dict[SParamKind, ChannelConfig] | None = None
    speed_jitter: float = 0.02

    def __post_init__(self):
        for name in ("conditions", "antennas", "distances_m", "kinds"):
            if len(getattr(self, name)) == 0:
                raise ConfigurationError(f"plan dimension {name!r} is empty")
        if self.trials < 1:
            raise ConfigurationError("plan needs at least one trial")
        if not 0 <= self.speed_jitter < 1:
            raise ConfigurationError("speed_jitter must lie in [0, 1)")

    @property
    def n_traces(self) -> int:
        return (
            len(self.conditions) * len(self.antennas) * len(self.distances_m)
            * self.trials * len(self.kinds)
        )

    def channel_for(self, kind: SParamKind, distance_m: float) -> ChannelConfig:
        if self.channels and kind in self.channels:
            base = self.channels[kind]
            return ChannelConfig(
                kind, distance_m, base.baseline_db, base.modulation_depth_db,
                base.noise_std_db, base.nearfield_rolloff_m,
            )
        return default_channel(kind, distance_m)

    def cells(self) -> Iterator[tuple[int, int, int, int, int]]:
        """Index tuples (condition, antenna, distance, trial, kind) in plan order."""
        return itertools.product(
            range(len(self.conditions)), range(len(self.antennas)),
            range(len(self.distances_m)), range(self.trials), range(len(self.kinds)),
        )

    def trace_seed(self, cond: int, carrier: int, dist: int, trial: int, kind: int) -> int:
        """Seed of one trace, a function of setting values rather than plan indices.

        Distance is deliberately left out: one trial is the same mechanical
        recording seen from every antenna position, so distance cells differ
        only through the channel coupling (common random numbers).
        """
        del dist
        return derive_seed(
            self.base_seed,
            int(self.conditions[cond]),
            int(round(self.antennas[carrier].carrier_hz)),
            trial,
            int(self.kinds[kind]),
        )


def check_plan(plan: DatasetPlan) -> None:
    """Raise ConfigurationError if any plan cell would violate Nyquist."""
    top_speed = plan.motor.shaft_speed_hz * (1 + plan.speed_jitter)
    motor = _with_speed(plan.motor, top_speed)
    for fault in plan.conditions:
        _check_nyquist(FaultCondition(fault), motor, plan.vibration, plan.sample_rate_hz)


def _with_speed(motor: MotorConfig, speed_hz: float) -> MotorConfig:
    return MotorConfig(
        speed_hz, motor.n_elements, motor.ball_diameter_m,
        motor.pitch_diameter_m, motor.contact_angle_rad,
    )


def synthesize_cell(plan: DatasetPlan, cell: Sequence[int]) -> SParamTrace:
    ci, ai, di, trial, ki = cell
    seed = plan.trace_seed(ci, ai, di, trial, ki)
    fault = FaultCondition(plan.conditions[ci])
    kind = SParamKind(plan.kinds[ki])
    rng = np.random.default_rng(derive_seed(seed, 1))
    speed = plan.motor.shaft_speed_hz * (1 + plan.speed_jitter * rng.uniform(-1, 1))
    vib = vibration_waveform(
        fault, _with_speed(plan.motor, speed), plan.duration_s, plan.sample_rate_hz,
        derive_seed(seed, 2), plan.vibration,
    )
    channel = plan.channel_for(kind, float(plan.distances_m[di]))
    trace = modulate_sparam(
        vib, plan.antennas[ai], channel, derive_seed(seed, 3),
        plan.sample_rate_hz, fault, trial,
    )
    # record the cell seed, not the derived channel-noise seed
    meta = TraceMetadata(fault, kind, trace.metadata.carrier_hz, trace.metadata.distance_m, seed, trial)
    return SParamTrace(trace.samples, trace.sample_rate_hz, meta)


def generate_dataset(plan: DatasetPlan) -> list[SParamTrace]:
    """Synthesize every trace of ``plan`` (full Cartesian product)."""
    check_plan(plan)
    return [synthesize_cell(plan, cell) for cell in plan.cells()]
