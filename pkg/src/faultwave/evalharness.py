"""Confusion matrices, classification metrics and the duration/distance sweeps."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from faultwave import pipeline, sigmodel
from faultwave.errors import DomainError
from faultwave.sigmodel import FaultCondition
from faultwave.spectro import render_pgm

log = logging.getLogger(__name__)

N_CLASSES = len(FaultCondition)
CLASS_NAMES = [c.label for c in FaultCondition]


@dataclass(frozen=True, eq=False)
class ConfusionMatrix:
    """Counts with rows = true class, columns = predicted class."""

    counts: np.ndarray

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def __eq__(self, other):
        return isinstance(other, ConfusionMatrix) and np.array_equal(self.counts, other.counts)

    def row_normalized(self) -> np.ndarray:
        rows = self.counts.sum(axis=1, keepdims=True).astype(np.float64)
        return np.divide(self.counts, rows, out=np.zeros(self.counts.shape), where=rows > 0)

    def to_tsv(self) -> str:
        lines = ["true\\pred\t" + "\t".join(CLASS_NAMES[: len(self.counts)])]
        for i, row in enumerate(self.counts):
            lines.append(CLASS_NAMES[i] + "\t" + "\t".join(str(int(v)) for v in row))
        return "\n".join(lines) + "\n"

    def to_pgm(self) -> bytes:
        return render_pgm(self.row_normalized())


def confusion(preds: Sequence[int], truth: Sequence[int], n_classes: int = N_CLASSES) -> ConfusionMatrix:
    preds = np.asarray(preds, dtype=np.int64)
    truth = np.asarray(truth, dtype=np.int64)
    if preds.shape != truth.shape or preds.ndim != 1:
        raise DomainError(f"predictions ({preds.size}) and truth ({truth.size}) differ in length")
    for name, arr in (("prediction", preds), ("truth", truth)):
        if arr.size and (arr.min() < 0 or arr.max() >= n_classes):
            raise DomainError(f"{name} label out of range 0..{n_classes - 1}")
    counts = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(counts, (truth, preds), 1)
    return ConfusionMatrix(counts)


@dataclass
class MetricsReport:
    accuracy: float
    precision: float
    recall: float
    f1: float
    per_class: list[dict] = field(default_factory=list)
    # classes whose precision or recall had an empty denominator (scored 0)
    flagged: list[int] = field(default_factory=list)

    def to_tsv(self, label: str = "model") -> str:
        head = "case\taccuracy\tprecision\trecall\tf1\n"
        row = f"{label}\t{self.accuracy:.6f}\t{self.precision:.6f}\t{self.recall:.6f}\t{self.f1:.6f}\n"
        return head + row

    def per_class_tsv(self) -> str:
        lines = ["class\tprecision\trecall\tf1\tsupport"]
        for c in self.per_class:
            lines.append(f"{c['name']}\t{c['precision']:.6f}\t{c['recall']:.6f}\t{c['f1']:.6f}\t{c['support']}")
        return "\n".join(lines) + "\n"


def metrics(cm: ConfusionMatrix) -> MetricsReport:
    """Accuracy plus unweighted (macro) means of per-class precision, recall and F1."""
    counts = np.asarray(cm.counts)
    total = counts.sum()
    if total <= 0:
        raise DomainError("confusion matrix is empty")
    tp = np.diag(counts).astype(np.float64)
    predicted = counts.sum(axis=0)
    actual = counts.sum(axis=1)
    per_class, flagged = [], []
    for i in range(len(counts)):
        p = tp[i] / predicted[i] if predicted[i] else 0.0
        r = tp[i] / actual[i] if actual[i] else 0.0
        f1 = 2 * p * r / (p + r) if p + r > 0 else 0.0
        if not predicted[i] or not actual[i]:
            flagged.append(i)
        name = CLASS_NAMES[i] if i < len(CLASS_NAMES) else str(i)
        per_class.append({"name": name, "precision": p, "recall": r, "f1": f1, "support": int(actual[i])})
    return MetricsReport(
        accuracy=float(tp.sum() / total),
        precision=float(np.mean([c["precision"] for c in per_class])),
        recall=float(np.mean([c["recall"] for c in per_class])),
        f1=float(np.mean([c["f1"] for c in per_class])),
        per_class=per_class,
        flagged=flagged,
    )


@dataclass(frozen=True)
class SweepRow:
    setting: float
    modality: str
    carrier_hz: float
    accuracy: float
    seed_accuracies: tuple[float, ...]


@dataclass
class SweepResult:
    axis: str  # "duration_s" or "distance_m"
    rows: list[SweepRow] = field(default_factory=list)

    def to_tsv(self) -> str:
        lines = [f"{self.axis}\tmodality\tcarrier_hz\taccuracy\tn_seeds\tseed_accuracies"]
        for r in self.rows:
            per_seed = ",".join(f"{a:.6f}" for a in r.seed_accuracies)
            lines.append(
                f"{r.setting:g}\t{r.modality}\t{r.carrier_hz:g}\t{r.accuracy:.6f}\t{len(r.seed_accuracies)}\t{per_seed}"
            )
        return "\n".join(lines) + "\n"

    @classmethod
    def from_tsv(cls, text: str) -> "SweepResult":
        lines = [ln for ln in text.splitlines() if ln]
        axis = lines[0].split("\t")[0]
        rows = []
        for ln in lines[1:]:
            setting, modality, carrier, acc, _, per_seed = ln.split("\t")
            seeds = tuple(float(a) for a in per_seed.split(",") if a)
            rows.append(SweepRow(float(setting), modality, float(carrier), float(acc), seeds))
        return cls(axis, rows)

    def lookup(self, setting: float, modality: str, carrier_hz: float) -> SweepRow:
        for r in self.rows:
            if np.isclose(r.setting, setting) and r.modality == modality and np.isclose(r.carrier_hz, carrier_hz):
                return r
        raise KeyError((setting, modality, carrier_hz))


class RunCache:
    """Memoizes traces, images and run accuracies shared between sweeps.

    Keys include everything a result depends on besides the pipeline config,
    so one cache must only be used with one config.
    """

    def __init__(self):
        self.traces: dict = {}
        self.images: dict = {}
        self.runs: dict = {}

    def get_traces(self, cfg, antenna, distance_m, seed):
        key = (antenna.carrier_hz, distance_m, seed)
        if key not in self.traces:
            self.traces[key] = pipeline.cell_traces(cfg, antenna, distance_m, seed)
        return self.traces[key]

    def get_images(self, cfg, antenna, distance_m, duration_s, seed):
        key = (antenna.carrier_hz, distance_m, duration_s, seed)
        if key not in self.images:
            traces = self.get_traces(cfg, antenna, distance_m, seed)
            self.images[key] = pipeline.single_images(traces, cfg.stft, duration_s, cfg.duration_offset_s)
        return self.images[key]

    def accuracy(self, cfg, antenna, distance_m, duration_s, modality, seed, threads=1) -> float:
        key = (antenna.carrier_hz, distance_m, duration_s, modality, seed)
        if key not in self.runs:
            images = self.get_images(cfg, antenna, distance_m, duration_s, seed)
            result = pipeline.train_and_evaluate(
                pipeline.modality_images(images, modality), cfg, seed, threads
            )
            self.runs[key] = result.accuracy
            log.info(
                "carrier=%g distance=%g duration=%g modality=%s seed=%d accuracy=%.4f",
                antenna.carrier_hz, distance_m, duration_s, modality, seed, result.accuracy,
            )
        return self.runs[key]


def sweep_duration(
    cfg: pipeline.PipelineConfig,
    durations: Sequence[float] = (1, 2, 3, 4, 5),
    modalities: Sequence[str] = ("both",),
    seeds: Sequence[int] = (0, 1, 2),
    antenna: sigmodel.AntennaConfig = sigmodel.ANTENNA_2G4,
    distance_m: float = 0.0,
    cache: RunCache | None = None,
    threads: int = 1,
) -> SweepResult:
    """Held-out accuracy vs. trace duration; traces are cut to their leading window."""
    cache = cache or RunCache()
    window_s = cfg.stft.window_len / cfg.sample_rate_hz
    result = SweepResult("duration_s")
    for d in durations:
        if d < window_s or d + cfg.duration_offset_s > cfg.duration_s + 1e-12:
            raise DomainError(
                f"duration {d} s must cover one STFT window ({window_s} s) and fit in the {cfg.duration_s} s trace"
            )
        for modality in modalities:
            accs = tuple(
                cache.accuracy(cfg, antenna, distance_m, float(d), modality, s, threads) for s in seeds
            )
            result.rows.append(SweepRow(float(d), modality, antenna.carrier_hz, float(np.mean(accs)), accs))
    return result


def sweep_distance(
    cfg: pipeline.PipelineConfig,
    distances: Sequence[float] = sigmodel.DEFAULT_DISTANCES_M,
    antennas: Sequence[sigmodel.AntennaConfig] = sigmodel.DEFAULT_ANTENNAS,
    modalities: Sequence[str] = pipeline.MODALITIES,
    seeds: Sequence[int] = (0, 1, 2),
    cache: RunCache | None = None,
    threads: int = 1,
) -> SweepResult:
    """Held-out accuracy for every (distance, carrier, modality) cell at full duration."""
    cache = cache or RunCache()
    result = SweepResult("distance_m")
    for dist in distances:
        if dist < 0:
            raise DomainError(f"distance must be >= 0, got {dist}")
        for antenna in antennas:
            for modality in modalities:
                accs = tuple(
                    cache.accuracy(cfg, antenna, float(dist), float(cfg.duration_s), modality, s, threads)
                    for s in seeds
                )
                result.rows.append(SweepRow(float(dist), modality, antenna.carrier_hz, float(np.mean(accs)), accs))
    return result
