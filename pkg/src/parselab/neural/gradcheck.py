"""Central finite-difference checks."""

from __future__ import annotations

from typing import Callable, Dict

import numpy as np


def numeric_grad(f: Callable[[], float], x: np.ndarray, eps: float = 1e-5) -> np.ndarray:
    """d f / d x by central differences, perturbing ``x`` in place."""
    g = np.zeros_like(x, dtype=np.float64)
    flat, gf = x.reshape(-1), g.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + eps
        up = f()
        flat[i] = old - eps
        down = f()
        flat[i] = old
        gf[i] = (up - down) / (2 * eps)
    return g


def relative_error(a: np.ndarray, b: np.ndarray, floor: float = 1e-8) -> float:
    """Norm-wise |a - b| / max(|a| + |b|, floor); the floor absorbs exactly-zero gradients."""
    diff = float(np.linalg.norm(np.ravel(a) - np.ravel(b)))
    return diff / max(float(np.linalg.norm(a) + np.linalg.norm(b)), floor)


def check(f: Callable[[], float], params: Dict[str, np.ndarray], grads: Dict[str, np.ndarray],
          eps: float = 1e-5) -> Dict[str, float]:
    """Relative error per parameter between ``grads`` and finite differences of ``f``."""
    return {k: relative_error(numeric_grad(f, params[k], eps), grads[k]) for k in params}
