"""Central finite differences for checking hand-written gradients."""

import numpy as np


def numerical_gradient(fn, params, step=1e-6):
    """Central-difference gradient of scalar ``fn(params)`` for every array in ``params``.

    ``params`` is perturbed in place and restored afterwards.
    """
    grads = {}
    for name, arr in params.items():
        g = np.zeros_like(arr)
        flat, gflat = arr.reshape(-1), g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            up = fn(params)
            flat[i] = orig - step
            down = fn(params)
            flat[i] = orig
            gflat[i] = (up - down) / (2 * step)
        grads[name] = g
    return grads


def relative_error(analytic, numeric):
    """max-normalised error ||a - n|| / max(||a||, ||n||) over all arrays jointly."""
    keys = sorted(set(analytic) | set(numeric))
    a = np.concatenate([np.ravel(analytic.get(k, np.zeros_like(numeric.get(k)))) for k in keys])
    n = np.concatenate([np.ravel(numeric.get(k, np.zeros_like(analytic.get(k)))) for k in keys])
    scale = max(np.linalg.norm(a), np.linalg.norm(n))
    if scale == 0.0:
        return 0.0
    return float(np.linalg.norm(a - n) / scale)
