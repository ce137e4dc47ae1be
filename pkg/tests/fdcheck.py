"""Central finite-difference oracle used by the gradient suites."""

import numpy as np


def numeric_grad(forward, arr, eps=1e-5):
    """d(forward)/d(arr) by central differences, mutating arr in place."""
    grad = np.zeros_like(arr)
    flat = arr.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        up = forward()
        flat[i] = orig - eps
        dn = forward()
        flat[i] = orig
        gflat[i] = (up - dn) / (2.0 * eps)
    return grad


def rel_error(analytic, numeric):
    diff = np.abs(analytic - numeric).max()
    denom = max(np.abs(numeric).max(), 1e-6)
    return diff / denom
