"""Radix-2 FFT, STFT magnitude spectrograms and fixed-size classifier images."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from faultwave.errors import DomainError

EPS = 1e-12
# classifier inputs: a single 80x80 image or a merged S11-over-S21 pair
CLASSIFIER_SHAPES = ((80, 80), (160, 80))


def _is_pow2(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


def _bit_reverse_permutation(n: int) -> np.ndarray:
    bits = n.bit_length() - 1
    idx = np.arange(n)
    rev = np.zeros(n, dtype=np.int64)
    for b in range(bits):
        rev |= ((idx >> b) & 1) << (bits - 1 - b)
    return rev


def fft(x, inverse: bool = False) -> np.ndarray:
    """Iterative radix-2 decimation-in-time FFT along the last axis.

    The inverse includes the 1/N scaling, so ``fft(fft(x), inverse=True)``
    returns ``x``. Leading axes are transformed independently.
    """
    a = np.array(x, dtype=np.complex128)
    if a.ndim == 0:
        raise DomainError("fft needs at least one dimension")
    n = a.shape[-1]
    if not _is_pow2(n):
        raise DomainError(f"fft length must be a power of two, got {n}")
    a = a[..., _bit_reverse_permutation(n)]
    sign = 1.0 if inverse else -1.0
    lead = a.shape[:-1]
    size = 2
    while size <= n:
        half = size // 2
        twiddle = np.exp(sign * 2j * np.pi * np.arange(half) / size)
        blocks = a.reshape(*lead, n // size, size)
        even = blocks[..., :half].copy()
        odd = blocks[..., half:] * twiddle
        blocks[..., :half] = even + odd
        blocks[..., half:] = even - odd
        a = blocks.reshape(*lead, n)
        size *= 2
    if inverse:
        a /= n
    return a


def naive_dft(x, inverse: bool = False) -> np.ndarray:
    """O(N^2) reference transform with the same conventions as :func:`fft`."""
    x = np.asarray(x, dtype=np.complex128)
    n = x.shape[-1]
    k = np.arange(n)
    sign = 1.0 if inverse else -1.0
    out = x @ np.exp(sign * 2j * np.pi * np.outer(k, k) / n).T
    return out / n if inverse else out


class Window(enum.Enum):
    HANN = "hann"
    RECTANGULAR = "rectangular"

    def coefficients(self, n: int) -> np.ndarray:
        if self is Window.RECTANGULAR:
            return np.ones(n)
        # periodic Hann, the usual STFT choice
        return 0.5 - 0.5 * np.cos(2 * np.pi * np.arange(n) / n)


@dataclass(frozen=True)
class StftConfig:
    """STFT parameters. ``hop=None`` selects the default hop for the trace length.

    ``detrend`` subtracts each frame's mean before windowing, so the static
    S-parameter baseline does not end up as the brightest row of every image.
    """

    window_len: int = 256
    hop: int | None = None
    window: Window = Window.HANN
    db_floor: float = -80.0
    detrend: bool = True

    def __post_init__(self):
        if not _is_pow2(self.window_len):
            raise DomainError(f"window_len must be a power of two, got {self.window_len}")
        if self.hop is not None and not 0 < self.hop <= self.window_len:
            raise DomainError(f"hop must satisfy 0 < hop <= window_len, got {self.hop}")
        if not self.db_floor < 0:
            raise DomainError("db_floor must be negative")
        object.__setattr__(self, "window", Window(self.window))

    def hop_for(self, n_samples: int, target_frames: int = 80) -> int:
        if self.hop is not None:
            return self.hop
        return max(1, (n_samples - self.window_len) // (target_frames - 1))


def frame_count(n_samples: int, window_len: int, hop: int) -> int:
    return (n_samples - window_len) // hop + 1


def stft(trace, cfg: StftConfig | None = None) -> np.ndarray:
    """Magnitude STFT in dB, shape (frames, window_len // 2 + 1).

    Accepts an SParamTrace or a bare sample vector.
    """
    cfg = cfg or StftConfig()
    x = np.asarray(getattr(trace, "samples", trace), dtype=np.float64)
    n = x.size
    if n < cfg.window_len:
        raise DomainError(
            f"trace has {n} samples but one STFT window needs at least {cfg.window_len}"
        )
    hop = cfg.hop_for(n)
    frames = np.lib.stride_tricks.sliding_window_view(x, cfg.window_len)[::hop]
    if cfg.detrend:
        frames = frames - frames.mean(axis=1, keepdims=True)
    spectrum = fft(frames * cfg.window.coefficients(cfg.window_len))
    mag = np.abs(spectrum[:, : cfg.window_len // 2 + 1])
    return np.maximum(20.0 * np.log10(mag + EPS), cfg.db_floor)


@dataclass(frozen=True, eq=False)
class Spectrogram:
    """Normalized time-frequency image: rows are frequency bins, columns frames."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2:
            raise DomainError("spectrogram values must be a 2-D matrix")
        if v.size and (v.min() < 0 or v.max() > 1 or not np.all(np.isfinite(v))):
            raise DomainError("spectrogram values must lie in [0, 1]")
        object.__setattr__(self, "values", v)

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    def __eq__(self, other):
        if not isinstance(other, Spectrogram):
            return NotImplemented
        return self.values.shape == other.values.shape and np.array_equal(self.values, other.values)


def bilinear_resize(mag, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resample with corners aligned to corners."""
    if out_h < 1 or out_w < 1:
        raise DomainError(f"output dimensions must be >= 1, got {out_h}x{out_w}")
    m = np.asarray(mag, dtype=np.float64)
    if m.ndim != 2 or m.size == 0:
        raise DomainError("resize input must be a non-empty matrix")
    h, w = m.shape

    def axis(n_in, n_out):
        if n_out == 1 or n_in == 1:
            pos = np.zeros(n_out)
        else:
            pos = np.arange(n_out) * (n_in - 1) / (n_out - 1)
        lo = np.minimum(np.floor(pos).astype(np.int64), n_in - 1)
        hi = np.minimum(lo + 1, n_in - 1)
        return lo, hi, pos - lo

    r0, r1, fr = axis(h, out_h)
    c0, c1, fc = axis(w, out_w)
    top = m[r0][:, c0] * (1 - fc) + m[r0][:, c1] * fc
    bottom = m[r1][:, c0] * (1 - fc) + m[r1][:, c1] * fc
    return top * (1 - fr)[:, None] + bottom * fr[:, None]


def minmax_normalize(m: np.ndarray) -> np.ndarray:
    lo, hi = m.min(), m.max()
    if hi == lo:
        return np.zeros_like(m)
    out = (m - lo) / (hi - lo)
    return np.clip(out, 0.0, 1.0)


def to_spectrogram(mag, out_h: int = 80, out_w: int = 80) -> Spectrogram:
    """Resize a (frames x bins) STFT magnitude to ``out_h`` bins by ``out_w`` frames.

    The frequency axis becomes the image rows; values are min-max scaled to
    [0, 1] after resizing, so a constant input maps to all zeros.
    """
    m = np.asarray(mag, dtype=np.float64)
    if m.ndim != 2 or m.size == 0:
        raise DomainError("magnitude matrix must be non-empty and 2-D")
    return Spectrogram(minmax_normalize(bilinear_resize(m.T, out_h, out_w)))


def merge(s11: Spectrogram, s21: Spectrogram) -> Spectrogram:
    """Stack an S11 image on top of an S21 image (80x80 + 80x80 -> 160x80)."""
    for name, s in (("s11", s11), ("s21", s21)):
        if s.values.shape != (80, 80):
            raise DomainError(f"merge needs 80x80 inputs, {name} is {s.height}x{s.width}")
    return Spectrogram(np.vstack([s11.values, s21.values]))


def trace_to_spectrogram(trace, cfg: StftConfig | None = None, size=(80, 80)) -> Spectrogram:
    return to_spectrogram(stft(trace, cfg), *size)


def render_pgm(spec) -> bytes:
    """Binary PGM (P5, maxval 255) of a spectrogram or any [0, 1] matrix."""
    v = np.asarray(getattr(spec, "values", spec), dtype=np.float64)
    if v.ndim != 2:
        raise DomainError("PGM rendering needs a 2-D matrix")
    # round half up, independent of numpy's banker's rounding
    pixels = np.floor(255.0 * np.clip(v, 0.0, 1.0) + 0.5).astype(np.uint8)
    header = f"P5 {v.shape[1]} {v.shape[0]} 255\n".encode("ascii")
    return header + pixels.tobytes()
