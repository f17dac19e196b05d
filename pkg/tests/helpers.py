"""Shared test utilities: central finite differences and error measures."""

import numpy as np


def numerical_grad(f, arrays, eps=1e-6):
    """Central-difference gradient of scalar f() w.r.t. each array.

    `arrays` maps name -> np.ndarray; entries are perturbed in place and
    restored, so f must read them afresh on every call.
    """
    grads = {}
    for name, arr in arrays.items():
        g = np.zeros_like(arr, dtype=np.float64)
        flat = arr.reshape(-1)
        gf = g.reshape(-1)
        for i in range(flat.size):
            keep = flat[i]
            flat[i] = keep + eps
            hi = float(f())
            flat[i] = keep - eps
            lo = float(f())
            flat[i] = keep
            gf[i] = (hi - lo) / (2.0 * eps)
        grads[name] = g
    return grads


def rel_err(a, b):
    """Max elementwise difference over the max magnitude of either side."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    scale = max(1e-8, float(np.abs(a).max(initial=0.0)),
                float(np.abs(b).max(initial=0.0)))
    if a.size == 0:
        return 0.0
    return float(np.abs(a - b).max() / scale)
