"""The four-block conv/pool classifier and its parameter container."""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from faultwave.dcnn import layers
from faultwave.errors import ConfigurationError, DomainError

FULL_CHANNELS = (96, 96, 256, 256)
DTYPES = {"float32": np.float32, "float64": np.float64}
# fixed, non-trained parameter holding the training-set mean image
INPUT_MEAN = "input.mean"


def parse_scale(value) -> Fraction:
    try:
        scale = Fraction(str(value)) if isinstance(value, str) else Fraction(value).limit_denominator(1 << 16)
    except (ValueError, ZeroDivisionError, TypeError):
        raise ConfigurationError(f"invalid channel_scale {value!r}") from None
    if scale <= 0:
        raise ConfigurationError(f"channel_scale must be positive, got {value!r}")
    return scale


@dataclass(frozen=True)
class NetworkConfig:
    input_h: int = 80
    input_w: int = 80
    in_channels: int = 1
    conv_channels: tuple[int, ...] = FULL_CHANNELS
    kernel: int = 3
    pool: int = 2
    n_classes: int = 4
    channel_scale: Fraction = Fraction(1, 8)
    dtype: str = "float32"
    # subtract a fixed per-pixel training mean before the first conv
    zero_center: bool = True

    def __post_init__(self):
        object.__setattr__(self, "channel_scale", parse_scale(self.channel_scale))
        object.__setattr__(self, "conv_channels", tuple(int(c) for c in self.conv_channels))
        if self.kernel != 3 or self.pool != 2:
            raise ConfigurationError("only 3x3 kernels with 2:1 pooling are implemented")
        if self.in_channels != 1:
            raise ConfigurationError("in_channels must be 1 (magnitude spectrograms)")
        if not self.conv_channels or min(self.conv_channels) < 1:
            raise ConfigurationError("conv_channels must be a non-empty list of positive counts")
        if self.n_classes < 2:
            raise ConfigurationError("n_classes must be >= 2")
        div = self.pool ** len(self.conv_channels)
        if self.input_h % div or self.input_w % div or self.input_h < div or self.input_w < div:
            raise ConfigurationError(
                f"input {self.input_h}x{self.input_w} is not divisible by pool^blocks = {div}"
            )
        if self.dtype not in DTYPES:
            raise ConfigurationError(f"dtype must be one of {sorted(DTYPES)}")

    @property
    def scaled_channels(self) -> tuple[int, ...]:
        return tuple(max(1, round(c * self.channel_scale)) for c in self.conv_channels)

    def block_shapes(self) -> list[tuple[int, int, int]]:
        """(H, W, C) after each conv/ReLU/pool block."""
        h, w = self.input_h, self.input_w
        shapes = []
        for c in self.scaled_channels:
            h, w = h // self.pool, w // self.pool
            shapes.append((h, w, c))
        return shapes

    @property
    def flat_features(self) -> int:
        h, w, c = self.block_shapes()[-1]
        return h * w * c

    def param_shapes(self) -> dict[str, tuple[int, ...]]:
        """Parameter shapes in declaration order (the model-file blob order)."""
        shapes = {}
        if self.zero_center:
            shapes[INPUT_MEAN] = (self.input_h, self.input_w)
        c_in = self.in_channels
        for k, c in enumerate(self.scaled_channels):
            shapes[f"conv{k}.w"] = (c, c_in, self.kernel, self.kernel)
            shapes[f"conv{k}.b"] = (c,)
            c_in = c
        shapes["dense.w"] = (self.flat_features, self.n_classes)
        shapes["dense.b"] = (self.n_classes,)
        return shapes


@dataclass(eq=False)
class Network:
    config: NetworkConfig
    params: dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def initialize(cls, config: NetworkConfig, seed: int = 0) -> "Network":
        """He-normal weights, zero biases."""
        rng = np.random.default_rng(seed)
        dtype = DTYPES[config.dtype]
        params = {}
        for name, shape in config.param_shapes().items():
            if name.endswith(".b") or name == INPUT_MEAN:
                params[name] = np.zeros(shape, dtype=dtype)
                continue
            fan_in = int(np.prod(shape[1:])) if name.startswith("conv") else shape[0]
            params[name] = (rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)).astype(dtype)
        return cls(config, params)

    @property
    def trainable(self) -> list[str]:
        return [k for k in self.config.param_shapes() if k != INPUT_MEAN]

    def set_input_mean(self, images) -> None:
        """Freeze the zero-centering image to the mean of ``images``."""
        if self.config.zero_center:
            x = self._as_batch(images)[..., 0]
            self.params[INPUT_MEAN] = x.mean(axis=0, dtype=np.float64).astype(x.dtype)

    @property
    def n_blocks(self) -> int:
        return len(self.config.conv_channels)

    def _as_batch(self, batch) -> np.ndarray:
        x = np.asarray(batch, dtype=DTYPES[self.config.dtype])
        if x.ndim == 2:
            x = x[None]
        if x.ndim == 4:
            if x.shape[1] != self.config.in_channels:
                raise DomainError(f"expected (N, 1, H, W) input, got shape {x.shape}")
            x = x[:, 0]
        if x.ndim != 3:
            raise DomainError(f"expected (N, 1, H, W) input, got shape {x.shape}")
        if x.shape[1:] != (self.config.input_h, self.config.input_w):
            raise DomainError(
                f"input size {x.shape[1]}x{x.shape[2]} does not match network "
                f"{self.config.input_h}x{self.config.input_w}"
            )
        return x[..., None]

    def features(self, batch, keep_trace: bool = False):
        """Run the conv blocks; returns the pre-dense map (N, H', W', C')."""
        x = self._as_batch(batch)
        if self.config.zero_center:
            x = x - self.params[INPUT_MEAN][None, :, :, None]
        caches, trace = [], []
        for k in range(self.n_blocks):
            x, conv_cache = layers.conv2d_forward(x, self.params[f"conv{k}.w"], self.params[f"conv{k}.b"])
            # max pooling commutes with ReLU, so pooling first gives the same
            # block output and gradients while rectifying 4x fewer values
            x, pool_cache = layers.maxpool2x2_forward(x)
            x, mask = layers.relu_forward(x)
            caches.append((conv_cache, mask, pool_cache))
            if keep_trace:
                trace.append(x.shape[1:])
        return (x, caches, trace) if keep_trace else (x, caches)

    def forward(self, batch) -> np.ndarray:
        feats, _ = self.features(batch)
        flat = feats.reshape(feats.shape[0], -1)
        return flat @ self.params["dense.w"] + self.params["dense.b"]

    def shape_trace(self, batch) -> list[tuple[int, int, int]]:
        return self.features(batch, keep_trace=True)[2]

    def loss_and_grads(self, batch, labels):
        feats, caches = self.features(batch)
        logits, loss, g = layers.dense_softmax_xent(
            feats, self.params["dense.w"], self.params["dense.b"], labels
        )
        grads = {"dense.w": g["weights"], "dense.b": g["biases"]}
        d = g["features"]
        for k in reversed(range(self.n_blocks)):
            conv_cache, mask, pool_cache = caches[k]
            d = layers.relu_backward(d, mask)
            d = layers.maxpool2x2_backward(d, pool_cache)
            d, dw, db = layers.conv2d_backward(d, conv_cache, need_dx=k > 0)
            grads[f"conv{k}.w"], grads[f"conv{k}.b"] = dw, db
        return logits, loss, grads

    def predict_proba(self, batch) -> np.ndarray:
        return layers.softmax(self.forward(batch).astype(np.float64))

    def copy(self) -> "Network":
        return Network(self.config, {k: v.copy() for k, v in self.params.items()})


def predict(net: Network, spectrogram):
    """Class label (argmax, lowest index on ties) and probability vector."""
    values = getattr(spectrogram, "values", spectrogram)
    probs = net.predict_proba(np.asarray(values)[None])[0]
    return int(np.argmax(probs)), probs
