"""
Central finite-difference helpers for gradient tests.
"""

from typing import Callable

import numpy as np


def numerical_gradient(loss: Callable[[], float], tensor: np.ndarray, step: float = 1e-4) -> np.ndarray:
    """d loss / d tensor by central differences, perturbing ``tensor`` in place."""
    grad = np.zeros_like(tensor)
    flat = tensor.reshape(-1)
    flat_grad = grad.reshape(-1)
    for index in range(flat.size):
        original = flat[index]
        flat[index] = original + step
        plus = loss()
        flat[index] = original - step
        minus = loss()
        flat[index] = original
        flat_grad[index] = (plus - minus) / (2.0 * step)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """|analytic - numeric| / max(|analytic|, 1e-8), measured in the 2-norm over the tensor."""
    return float(np.linalg.norm(analytic - numeric) / max(np.linalg.norm(analytic), 1e-8))
