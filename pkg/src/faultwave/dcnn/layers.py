"""Forward/backward kernels for the convolutional classifier.

Activations are channels-last, shape (N, H, W, C). Convolution weights are
stored (C_out, C_in, 3, 3). Every ``*_forward`` returns ``(out, cache)`` and
the matching ``*_backward`` consumes the cache.
"""

from __future__ import annotations

import numpy as np

from faultwave.errors import DomainError

KERNEL = 3


def _im2col(xp: np.ndarray, h: int, w: int) -> np.ndarray:
    # (N, H+2, W+2, C) -> (N*H*W, 9*C), columns ordered (ki, kj, c)
    windows = np.lib.stride_tricks.sliding_window_view(xp, (KERNEL, KERNEL), axis=(1, 2))
    n, c = xp.shape[0], xp.shape[3]
    return windows.transpose(0, 1, 2, 4, 5, 3).reshape(n * h * w, KERNEL * KERNEL * c)


def _weight_matrix(weights: np.ndarray) -> np.ndarray:
    # (C_out, C_in, 3, 3) -> (C_out, 9*C_in) matching the im2col column order
    return weights.transpose(0, 2, 3, 1).reshape(weights.shape[0], -1)


def conv2d_forward(x, weights, biases):
    """3x3 convolution, stride 1, zero padding 1 ("same" output size)."""
    if x.ndim != 4:
        raise DomainError(f"conv2d input must be (N, H, W, C), got shape {x.shape}")
    n, h, w, c = x.shape
    c_out = weights.shape[0]
    if weights.shape[1:] != (c, KERNEL, KERNEL):
        raise DomainError(
            f"conv2d weights {weights.shape} do not match input channels C_in={c} with 3x3 kernel"
        )
    if biases.shape != (c_out,):
        raise DomainError(f"conv2d biases shape {biases.shape} does not match C_out={c_out}")
    xp = np.pad(x, ((0, 0), (1, 1), (1, 1), (0, 0)))
    cols = _im2col(xp, h, w)
    out = cols @ _weight_matrix(weights).T
    out += biases
    return out.reshape(n, h, w, c_out), (x.shape, cols, weights)


def conv2d_backward(dout, cache, need_dx: bool = True):
    x_shape, cols, weights = cache
    n, h, w, c = x_shape
    c_out = weights.shape[0]
    d2 = dout.reshape(-1, c_out)
    dw = (d2.T @ cols).reshape(c_out, KERNEL, KERNEL, c).transpose(0, 3, 1, 2)
    db = d2.sum(axis=0)
    if not need_dx:
        return None, dw, db
    # input gradient = same-padded convolution of dout with the kernels
    # flipped spatially and with in/out channels swapped
    flipped = weights[:, :, ::-1, ::-1].transpose(1, 0, 2, 3)
    dp = np.pad(dout, ((0, 0), (1, 1), (1, 1), (0, 0)))
    dx = (_im2col(dp, h, w) @ _weight_matrix(flipped).T).reshape(n, h, w, c)
    return dx, dw, db


def relu_forward(x):
    mask = x > 0
    return np.where(mask, x, 0).astype(x.dtype, copy=False), mask


def relu_backward(dout, mask):
    return np.where(mask, dout, 0).astype(dout.dtype, copy=False)


def _pool_quadrants(x):
    # window elements in row-major order: (0,0), (0,1), (1,0), (1,1)
    return x[:, 0::2, 0::2], x[:, 0::2, 1::2], x[:, 1::2, 0::2], x[:, 1::2, 1::2]


def maxpool2x2_forward(x):
    """2:1 max pooling; ties go to the first window element in row-major order.

    The cache holds, per output cell, the index 0..3 of the winning element.
    """
    n, h, w, c = x.shape
    if h % 2 or w % 2:
        raise DomainError(f"maxpool2x2 needs even spatial dims, got {h}x{w}")
    q = _pool_quadrants(x)
    out = np.maximum(np.maximum(q[0], q[1]), np.maximum(q[2], q[3]))
    first = q[0] == out
    taken = first.copy()
    masks = [first]
    for k in (1, 2):
        m = (q[k] == out) & ~taken
        taken |= m
        masks.append(m)
    masks.append(~taken)
    return out, (x.shape, masks)


def maxpool2x2_backward(dout, cache):
    shape, masks = cache
    dx = np.empty(shape, dtype=dout.dtype)
    for mask, view in zip(masks, _pool_quadrants(dx)):
        np.multiply(dout, mask, out=view)
    return dx


def pool_argmax(cache) -> np.ndarray:
    """Winning window index (0..3, row-major) of each pooled cell."""
    _, masks = cache
    idx = np.zeros(masks[0].shape, dtype=np.int8)
    for k, m in enumerate(masks):
        idx[m] = k
    return idx


def softmax(logits):
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def dense_softmax_xent(features, weights, biases, labels):
    """Fully connected layer followed by mean softmax cross-entropy.

    Returns ``(logits, loss, grads)`` where ``grads`` holds the gradients
    with respect to ``features``, ``weights`` and ``biases``.
    """
    n = features.shape[0]
    flat = features.reshape(n, -1)
    n_classes = weights.shape[1]
    labels = np.asarray(labels)
    if labels.shape != (n,):
        raise DomainError(f"expected {n} labels, got shape {labels.shape}")
    if labels.size and (labels.min() < 0 or labels.max() >= n_classes):
        bad = labels[(labels < 0) | (labels >= n_classes)][0]
        raise DomainError(f"label {bad} out of range 0..{n_classes - 1}")
    if flat.shape[1] != weights.shape[0]:
        raise DomainError(f"dense layer expects {weights.shape[0]} features, got {flat.shape[1]}")
    logits = flat @ weights + biases
    z = logits - logits.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(z).sum(axis=1, keepdims=True))
    log_probs = z - log_norm
    loss = float(-log_probs[np.arange(n), labels].mean())
    dlogits = np.exp(log_probs)
    dlogits[np.arange(n), labels] -= 1
    dlogits /= n
    grads = {
        "features": (dlogits @ weights.T).reshape(features.shape),
        "weights": flat.T @ dlogits,
        "biases": dlogits.sum(axis=0),
    }
    return logits, loss, grads
