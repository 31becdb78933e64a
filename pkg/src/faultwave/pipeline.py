"""Glue between the signal model, spectrograms and the classifier.

One *cell* is a fixed (carrier, distance) acquisition setting with every
condition and trial of both S-parameters; a cell plus a modality and a seed
is one train/evaluate run.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from fractions import Fraction

import numpy as np

from faultwave import sigmodel
from faultwave.datastore import SplitSpec, stratified_split
from faultwave.dcnn import Network, NetworkConfig, TrainConfig, fit, predict_labels
from faultwave.errors import ConfigurationError
from faultwave.sigmodel import AntennaConfig, SParamKind
from faultwave.spectro import StftConfig, merge, trace_to_spectrogram

log = logging.getLogger(__name__)

MODALITIES = ("s11", "s21", "both")

# independent sub-streams of one run seed
_SPLIT_STREAM, _INIT_STREAM, _SHUFFLE_STREAM = 101, 102, 103


@dataclass(frozen=True)
class PipelineConfig:
    trials: int = 40
    duration_s: float = 5.0
    sample_rate_hz: float = 1000.0
    motor: sigmodel.MotorConfig = field(default_factory=sigmodel.MotorConfig)
    vibration: sigmodel.VibrationConfig = field(default_factory=sigmodel.VibrationConfig)
    channels: dict | None = None
    speed_jitter: float = 0.02
    stft: StftConfig = field(default_factory=StftConfig)
    channel_scale: Fraction = Fraction(1, 8)
    train: TrainConfig = field(default_factory=TrainConfig)
    train_fraction: float = 0.70
    dtype: str = "float32"
    duration_offset_s: float = 0.0

    def __post_init__(self):
        SplitSpec(self.train_fraction)
        if self.trials < 1 or not self.duration_s > 0 or not self.sample_rate_hz > 0:
            raise ConfigurationError("trials, duration_s and sample_rate_hz must be positive")
        if self.duration_offset_s < 0:
            raise ConfigurationError("duration_offset_s must be >= 0")

    def plan(self, antenna: AntennaConfig, distance_m: float, seed: int) -> sigmodel.DatasetPlan:
        return sigmodel.DatasetPlan(
            antennas=(antenna,),
            distances_m=(distance_m,),
            trials=self.trials,
            duration_s=self.duration_s,
            sample_rate_hz=self.sample_rate_hz,
            base_seed=seed,
            motor=self.motor,
            vibration=self.vibration,
            channels=self.channels,
            speed_jitter=self.speed_jitter,
        )


def run_seeds(seed: int) -> dict[str, int]:
    return {
        "split": sigmodel.derive_seed(seed, _SPLIT_STREAM),
        "init": sigmodel.derive_seed(seed, _INIT_STREAM),
        "shuffle": sigmodel.derive_seed(seed, _SHUFFLE_STREAM),
    }


def cell_traces(cfg: PipelineConfig, antenna: AntennaConfig, distance_m: float, seed: int):
    """All traces of one acquisition cell keyed by (fault, trial, kind)."""
    traces = sigmodel.generate_dataset(cfg.plan(antenna, distance_m, seed))
    return {(int(t.metadata.fault), t.metadata.trial_index, int(t.metadata.sparam_kind)): t for t in traces}


def single_images(traces: dict, stft: StftConfig, duration_s=None, offset_s: float = 0.0):
    """80x80 images keyed like ``traces``, optionally from a leading window."""
    out = {}
    for key, tr in traces.items():
        if duration_s is not None and duration_s < tr.duration_s - 1e-12:
            tr = tr.truncated(duration_s, offset_s)
        out[key] = trace_to_spectrogram(tr, stft)
    return out


def modality_images(images: dict, modality: str) -> dict:
    """Classifier inputs keyed by (fault, trial) for one modality."""
    if modality not in MODALITIES:
        raise ConfigurationError(f"modality must be one of {MODALITIES}, got {modality!r}")
    s11 = {(f, t): s for (f, t, k), s in images.items() if k == SParamKind.S11}
    s21 = {(f, t): s for (f, t, k), s in images.items() if k == SParamKind.S21}
    if modality == "s11":
        return {k: v.values for k, v in s11.items()}
    if modality == "s21":
        return {k: v.values for k, v in s21.items()}
    missing = sorted(set(s11) ^ set(s21))
    if missing:
        raise ConfigurationError(f"cannot merge: trials without an S11/S21 partner: {missing}")
    return {k: merge(s11[k], s21[k]).values for k in sorted(s11)}


@dataclass
class RunResult:
    accuracy: float
    predictions: np.ndarray
    truth: np.ndarray
    network: Network
    history: object
    train_keys: list = field(default_factory=list)
    val_keys: list = field(default_factory=list)


def train_and_evaluate(
    images: dict, cfg: PipelineConfig, seed: int, threads: int = 1
) -> RunResult:
    """Stratified 70/30 split by fault, train a fresh network, score held-out images.

    Keys of ``images`` must start with the fault code; their sorted order fixes
    the split, so the same images and seed always give the same partition.
    """
    seeds = run_seeds(seed)
    keys = sorted(images)
    train_keys, val_keys = stratified_split(
        keys, SplitSpec(cfg.train_fraction, seeds["split"]), label=lambda k: k[0]
    )
    x_tr = np.stack([images[k] for k in train_keys])
    y_tr = np.array([k[0] for k in train_keys])
    x_va = np.stack([images[k] for k in val_keys])
    y_va = np.array([k[0] for k in val_keys])
    h, w = x_tr.shape[1:]
    net = Network.initialize(
        NetworkConfig(input_h=h, input_w=w, channel_scale=cfg.channel_scale, dtype=cfg.dtype),
        seeds["init"],
    )
    history = fit(net, x_tr, y_tr, replace(cfg.train, seed=seeds["shuffle"]), threads=threads)
    preds = predict_labels(net, x_va)
    acc = float(np.mean(preds == y_va))
    log.info("run seed=%d input=%dx%d held-out accuracy %.4f", seed, h, w, acc)
    return RunResult(acc, preds, y_va, net, history, train_keys, val_keys)
