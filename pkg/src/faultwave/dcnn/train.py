"""Mini-batch Adam training loop."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from faultwave.dcnn.network import Network
from faultwave.errors import ConfigurationError, NumericError

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    batch_size: int = 16
    epochs: int = 30
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    shuffle: bool = True

    def __post_init__(self):
        if not self.learning_rate >= 0:
            raise ConfigurationError("learning_rate must be >= 0")
        if self.batch_size < 1 or self.epochs < 1:
            raise ConfigurationError("batch_size and epochs must be >= 1")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ConfigurationError("Adam moment parameters must lie in [0, 1)")


class Adam:
    def __init__(self, params: dict[str, np.ndarray], cfg: TrainConfig, names=None):
        self.cfg = cfg
        names = list(params) if names is None else list(names)
        self.m = {k: np.zeros_like(params[k]) for k in names}
        self.v = {k: np.zeros_like(params[k]) for k in names}
        self.t = 0

    def step(self, params, grads):
        cfg = self.cfg
        if cfg.learning_rate == 0:
            return
        self.t += 1
        bc1 = 1 - cfg.beta1**self.t
        bc2 = 1 - cfg.beta2**self.t
        for k in self.m:
            p = params[k]
            g = grads[k].astype(p.dtype, copy=False)
            m, v = self.m[k], self.v[k]
            m *= cfg.beta1
            m += (1 - cfg.beta1) * g
            v *= cfg.beta2
            v += (1 - cfg.beta2) * g * g
            p -= (cfg.learning_rate * (m / bc1) / (np.sqrt(v / bc2) + cfg.adam_eps)).astype(p.dtype)


@dataclass
class EpochRecord:
    epoch: int
    loss: float
    train_accuracy: float
    val_accuracy: float | None


@dataclass
class History:
    records: list[EpochRecord] = field(default_factory=list)
    deterministic: bool = True

    def __len__(self):
        return len(self.records)

    @property
    def losses(self) -> list[float]:
        return [r.loss for r in self.records]

    def to_tsv(self) -> str:
        lines = ["epoch\tloss\ttrain_accuracy\tval_accuracy\tdeterministic"]
        for r in self.records:
            val = "" if r.val_accuracy is None else f"{r.val_accuracy:.6f}"
            lines.append(f"{r.epoch}\t{r.loss:.8f}\t{r.train_accuracy:.6f}\t{val}\t{int(self.deterministic)}")
        return "\n".join(lines) + "\n"


def accuracy(net: Network, x, y, batch_size: int = 64) -> float:
    preds = predict_labels(net, x, batch_size)
    return float(np.mean(preds == np.asarray(y)))


def predict_labels(net: Network, x, batch_size: int = 64) -> np.ndarray:
    x = np.asarray(x)
    out = [np.argmax(net.forward(x[i : i + batch_size]), axis=1) for i in range(0, len(x), batch_size)]
    return np.concatenate(out) if out else np.zeros(0, dtype=np.int64)


def _check_finite(name, arr):
    if not np.all(np.isfinite(arr)):
        raise NumericError(f"non-finite values in {name}")


def fit(
    net: Network,
    x_train,
    y_train,
    cfg: TrainConfig,
    x_val=None,
    y_val=None,
    threads: int = 1,
) -> History:
    """Train ``net`` in place; returns one history record per epoch.

    Parameters are updated with Adam on shuffled mini-batches whose order
    depends only on ``cfg.seed``. Runs with ``threads > 1`` let BLAS pick its
    reduction order, so their history is flagged non-deterministic.
    """
    x_train = np.asarray(x_train)
    y_train = np.asarray(y_train, dtype=np.int64)
    if len(x_train) == 0:
        raise ConfigurationError("training split is empty")
    if len(x_train) != len(y_train):
        raise ConfigurationError("training images and labels differ in length")
    if x_val is not None and len(x_val) == 0:
        raise ConfigurationError("validation split is empty")

    net.set_input_mean(x_train)
    rng = np.random.default_rng(cfg.seed)
    opt = Adam(net.params, cfg, net.trainable)
    history = History(deterministic=threads == 1)
    n = len(x_train)
    for epoch in range(cfg.epochs):
        order = rng.permutation(n) if cfg.shuffle else np.arange(n)
        total, correct = 0.0, 0
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            logits, loss, grads = net.loss_and_grads(x_train[idx], y_train[idx])
            if not np.isfinite(loss):
                raise NumericError(f"non-finite loss at epoch {epoch + 1}")
            for name, g in grads.items():
                _check_finite(f"gradient of {name}", g)
            # overflow shows up as non-finite parameters, checked after the epoch
            with np.errstate(over="ignore", invalid="ignore"):
                opt.step(net.params, grads)
            total += loss * len(idx)
            correct += int(np.sum(np.argmax(logits, axis=1) == y_train[idx]))
        for name, p in net.params.items():
            _check_finite(name, p)
        val_acc = accuracy(net, x_val, y_val) if x_val is not None else None
        rec = EpochRecord(epoch + 1, total / n, correct / n, val_acc)
        history.records.append(rec)
        log.debug("epoch %d loss %.5f train_acc %.3f val_acc %s", rec.epoch, rec.loss, rec.train_accuracy, val_acc)
    return history
