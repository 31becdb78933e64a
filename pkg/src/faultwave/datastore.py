"""On-disk formats: SPTR traces, SPGM spectrogram caches, TSV manifests, splits.

SPTR layout (little-endian, 52-byte header then payload)::

    offset  size  field
    0       4     magic b"SPTR"
    4       2     version (u16)
    6       1     fault code (u8, 0..3)
    7       1     S-parameter kind (u8, 0 = S11, 1 = S21)
    8       8     carrier_hz (f64)
    16      8     distance_m (f64)
    24      8     sample_rate_hz (f64)
    32      8     seed (u64)
    40      4     trial (u32)
    44      8     n_samples (u64)
    52      8*n   samples (f64)

SPGM caches hold one normalized spectrogram with its labels; the payload is
f64 or f32 according to the dtype flag.
"""

from __future__ import annotations

import math
import os
import struct
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from faultwave.errors import ConfigurationError, FormatError
from faultwave.sigmodel import FaultCondition, SParamKind, SParamTrace, TraceMetadata, derive_seed
from faultwave.spectro import Spectrogram

TRACE_MAGIC = b"SPTR"
TRACE_VERSION = 1
_TRACE_HEADER = struct.Struct("<4sHBBdddQIQ")

SPEC_MAGIC = b"SPGM"
SPEC_VERSION = 1
# magic, version, dtype flag, fault, modality, reserved, carrier, distance, trial, height, width
_SPEC_HEADER = struct.Struct("<4sHBBBBddIII")
SPEC_DTYPES = {0: np.dtype("<f8"), 1: np.dtype("<f4")}
MODALITIES = ("s11", "s21", "both")


def atomic_write(path, data: bytes) -> None:
    """Write ``data`` to a temp file in the target directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def encode_trace(trace: SParamTrace) -> bytes:
    m = trace.metadata
    header = _TRACE_HEADER.pack(
        TRACE_MAGIC, TRACE_VERSION, int(m.fault), int(m.sparam_kind),
        m.carrier_hz, m.distance_m, trace.sample_rate_hz, m.seed, m.trial_index,
        trace.samples.size,
    )
    return header + trace.samples.astype("<f8").tobytes()


def decode_trace(data: bytes) -> SParamTrace:
    if len(data) < _TRACE_HEADER.size:
        raise FormatError(
            f"trace header needs {_TRACE_HEADER.size} bytes, file has {len(data)}", len(data)
        )
    magic, version, fault, kind, carrier, distance, rate, seed, trial, n = _TRACE_HEADER.unpack_from(data)
    if magic != TRACE_MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {TRACE_MAGIC!r}", 0)
    if version != TRACE_VERSION:
        raise FormatError(f"unsupported trace version {version}", 4)
    if fault > 3:
        raise FormatError(f"invalid fault code {fault}", 6)
    if kind > 1:
        raise FormatError(f"invalid S-parameter kind {kind}", 7)
    if n == 0:
        raise FormatError("trace declares zero samples", 44)
    if not (math.isfinite(rate) and rate > 0):
        raise FormatError(f"invalid sample rate {rate}", 24)
    expected = n * 8
    actual = len(data) - _TRACE_HEADER.size
    if actual != expected:
        raise FormatError(
            f"payload length mismatch: expected {expected} bytes ({n} samples), got {actual}",
            _TRACE_HEADER.size + min(actual, expected),
        )
    samples = np.frombuffer(data, dtype="<f8", offset=_TRACE_HEADER.size).astype(np.float64)
    bad = np.flatnonzero(~np.isfinite(samples))
    if bad.size:
        raise FormatError(f"non-finite sample at index {bad[0]}", _TRACE_HEADER.size + 8 * int(bad[0]))
    meta = TraceMetadata(FaultCondition(fault), SParamKind(kind), carrier, distance, seed, trial)
    return SParamTrace(samples, rate, meta)


def write_trace(trace: SParamTrace, path) -> None:
    atomic_write(path, encode_trace(trace))


def read_trace(path) -> SParamTrace:
    return decode_trace(Path(path).read_bytes())


@dataclass(frozen=True)
class SpectrogramRecord:
    """A cached classifier image with the labels needed to train on it."""

    spectrogram: Spectrogram
    fault: FaultCondition
    modality: str
    carrier_hz: float
    distance_m: float
    trial: int


def encode_spectrogram(rec: SpectrogramRecord, dtype: str = "float64") -> bytes:
    flag = {"float64": 0, "float32": 1}[dtype]
    v = rec.spectrogram.values
    header = _SPEC_HEADER.pack(
        SPEC_MAGIC, SPEC_VERSION, flag, int(rec.fault), MODALITIES.index(rec.modality), 0,
        rec.carrier_hz, rec.distance_m, rec.trial, v.shape[0], v.shape[1],
    )
    return header + v.astype(SPEC_DTYPES[flag]).tobytes()


def decode_spectrogram(data: bytes) -> SpectrogramRecord:
    if len(data) < _SPEC_HEADER.size:
        raise FormatError("spectrogram header truncated", len(data))
    magic, version, flag, fault, modality, _, carrier, distance, trial, h, w = _SPEC_HEADER.unpack_from(data)
    if magic != SPEC_MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {SPEC_MAGIC!r}", 0)
    if version != SPEC_VERSION:
        raise FormatError(f"unsupported spectrogram version {version}", 4)
    if flag not in SPEC_DTYPES or fault > 3 or modality >= len(MODALITIES):
        raise FormatError("invalid spectrogram header flags", 6)
    dt = SPEC_DTYPES[flag]
    expected = h * w * dt.itemsize
    actual = len(data) - _SPEC_HEADER.size
    if actual != expected:
        raise FormatError(f"payload length mismatch: expected {expected} bytes, got {actual}", _SPEC_HEADER.size)
    values = np.frombuffer(data, dtype=dt, offset=_SPEC_HEADER.size).astype(np.float64).reshape(h, w)
    return SpectrogramRecord(
        Spectrogram(values), FaultCondition(fault), MODALITIES[modality], carrier, distance, trial
    )


def write_spectrogram(rec: SpectrogramRecord, path, dtype: str = "float64") -> None:
    atomic_write(path, encode_spectrogram(rec, dtype))


def read_spectrogram(path) -> SpectrogramRecord:
    return decode_spectrogram(Path(path).read_bytes())


@dataclass(frozen=True, order=True)
class ManifestRecord:
    """One manifest line. ``kind`` is ``S11``/``S21`` for traces, ``both`` for merged caches."""

    path: str
    fault: FaultCondition
    kind: str
    carrier_hz: float
    distance_m: float
    trial: int

    def to_line(self) -> str:
        return "\t".join(
            [self.path, str(int(self.fault)), self.kind, repr(float(self.carrier_hz)),
             repr(float(self.distance_m)), str(self.trial)]
        )

    @classmethod
    def from_line(cls, line: str, lineno: int = 0) -> "ManifestRecord":
        parts = line.rstrip("\n").split("\t")
        if len(parts) != 6:
            raise FormatError(f"manifest line {lineno}: expected 6 tab-separated fields, got {len(parts)}")
        path, fault, kind, carrier, distance, trial = parts
        try:
            return cls(path, FaultCondition(int(fault)), kind, float(carrier), float(distance), int(trial))
        except ValueError as exc:
            raise FormatError(f"manifest line {lineno}: {exc}") from None

    @property
    def pair_key(self) -> tuple:
        return (int(self.fault), self.carrier_hz, self.distance_m, self.trial)


class Manifest:
    """Sorted, duplicate-free list of records stored as UTF-8 TSV."""

    def __init__(self, records: Iterable[ManifestRecord] = ()):
        recs = sorted(records, key=lambda r: r.path)
        seen = set()
        for r in recs:
            if r.path in seen:
                raise ConfigurationError(f"duplicate manifest path {r.path!r}")
            seen.add(r.path)
        self.records: list[ManifestRecord] = recs

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def dumps(self) -> str:
        return "".join(r.to_line() + "\n" for r in self.records)

    @classmethod
    def loads(cls, text: str) -> "Manifest":
        lines = [ln for ln in text.split("\n") if ln]
        return cls(ManifestRecord.from_line(ln, i + 1) for i, ln in enumerate(lines))

    def save(self, path) -> None:
        atomic_write(path, self.dumps().encode("utf-8"))

    @classmethod
    def load(cls, path) -> "Manifest":
        return cls.loads(Path(path).read_text(encoding="utf-8"))

    def verify(self, root) -> None:
        """Check every referenced file exists and parses."""
        root = Path(root)
        for r in self.records:
            p = root / r.path
            if not p.is_file():
                raise FormatError(f"manifest references missing file {r.path!r}")
            data = p.read_bytes()
            if data[:4] == SPEC_MAGIC:
                decode_spectrogram(data)
            else:
                decode_trace(data)


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 0.70
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.train_fraction < 1:
            raise ConfigurationError(f"train_fraction must lie in (0, 1), got {self.train_fraction}")


def _default_label(item):
    return int(item.fault) if hasattr(item, "fault") else int(item[0])


def stratified_split(
    items: Sequence,
    spec: SplitSpec = SplitSpec(),
    label: Callable = _default_label,
) -> tuple[list, list]:
    """Per-class shuffled partition with ``round(train_fraction * n)`` training items.

    Items keep their class-wise shuffled order; classes are visited in
    ascending label order, so the result depends only on ``spec.seed``.
    """
    groups: dict = {}
    for item in items:
        groups.setdefault(label(item), []).append(item)
    train, val = [], []
    for cls in sorted(groups):
        members = groups[cls]
        if len(members) < 2:
            raise ConfigurationError(f"class {cls} has {len(members)} item(s); a split needs at least 2")
        rng = np.random.default_rng(derive_seed(spec.seed, int(cls)))
        order = rng.permutation(len(members))
        n_train = int(math.floor(spec.train_fraction * len(members) + 0.5))
        n_train = min(max(n_train, 1), len(members) - 1)
        train.extend(members[i] for i in order[:n_train])
        val.extend(members[i] for i in order[n_train:])
    return train, val
