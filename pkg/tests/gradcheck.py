"""Central finite differences shared by the layer and acceptance tests."""

import numpy as np

H = 1e-5


def rel_error(analytic, numeric):
    a, n = np.asarray(analytic, float).ravel(), np.asarray(numeric, float).ravel()
    return float(np.max(np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), 1e-7)))


def numeric_grad(f, x, h=H, idx=None):
    """Central differences of scalar f() w.r.t. x (modified in place)."""
    flat = x.reshape(-1)
    idx = range(flat.size) if idx is None else idx
    out = []
    for i in idx:
        old = flat[i]
        flat[i] = old + h
        fp = f()
        flat[i] = old - h
        fm = f()
        flat[i] = old
        out.append((fp - fm) / (2 * h))
    return np.array(out)
