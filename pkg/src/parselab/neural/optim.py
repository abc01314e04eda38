from __future__ import annotations

from typing import Dict, Iterable, Optional

import numpy as np


class Adam:
    """Adam with the low second-moment decay used by biaffine parsers."""

    def __init__(self, lr: float = 2e-3, beta1: float = 0.9, beta2: float = 0.9, eps: float = 1e-12,
                 clip: Optional[float] = 5.0):
        self.lr, self.beta1, self.beta2, self.eps, self.clip = lr, beta1, beta2, eps, clip
        self.m: Dict[str, np.ndarray] = {}
        self.v: Dict[str, np.ndarray] = {}
        self.t = 0

    def step(self, params: Dict[str, np.ndarray], grads: Dict[str, np.ndarray],
             frozen: Iterable[str] = ()) -> None:
        frozen = set(frozen)
        keys = [k for k in sorted(grads) if k not in frozen]
        if self.clip is not None:
            norm = np.sqrt(sum(float(np.sum(grads[k] * grads[k])) for k in keys))
            scale = self.clip / norm if norm > self.clip else 1.0
        else:
            scale = 1.0
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for k in keys:
            g = grads[k] * scale
            if k not in self.m:
                self.m[k] = np.zeros_like(params[k])
                self.v[k] = np.zeros_like(params[k])
            m, v = self.m[k], self.v[k]
            m *= self.beta1
            m += (1 - self.beta1) * g
            v *= self.beta2
            v += (1 - self.beta2) * g * g
            params[k] -= (self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)).astype(params[k].dtype)
