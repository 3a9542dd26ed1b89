from __future__ import annotations

import numpy as np

from ..errors import TrainingError


class Adam:
    """Adam with bias correction; state is keyed by parameter name.

    Each parameter carries its own step counter, so parameters shared by two
    optimizers (or updated only sometimes) stay consistent.
    """

    def __init__(self, lr=2e-4, beta1=0.5, beta2=0.999, eps=1e-7):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        self.t: dict[str, int] = {}

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        """Update ``params`` in place from ``grads`` (same keys, same shapes)."""
        for key, g in grads.items():
            if not np.all(np.isfinite(g)):
                raise TrainingError(f"non-finite gradient for {key}")
        for key, g in grads.items():
            p = params[key]
            if g.shape != p.shape:
                raise TrainingError(f"gradient shape {g.shape} != parameter shape {p.shape} for {key}")
            if key not in self.m:
                self.m[key] = np.zeros_like(p)
                self.v[key] = np.zeros_like(p)
                self.t[key] = 0
            self.t[key] += 1
            t = self.t[key]
            m = self.m[key]
            v = self.v[key]
            m *= self.beta1
            m += (1 - self.beta1) * g
            v *= self.beta2
            v += (1 - self.beta2) * (g * g)
            m_hat = m / (1 - self.beta1 ** t)
            v_hat = v / (1 - self.beta2 ** t)
            p -= (self.lr * m_hat / (np.sqrt(v_hat) + self.eps)).astype(p.dtype)

    def state(self) -> dict[str, np.ndarray]:
        out = {}
        for key in self.m:
            out[f"{key}/m"] = self.m[key]
            out[f"{key}/v"] = self.v[key]
            out[f"{key}/t"] = np.array([self.t[key]], dtype=np.int64)
        return out

    def load_state(self, state: dict[str, np.ndarray]) -> None:
        self.m, self.v, self.t = {}, {}, {}
        for name, arr in state.items():
            key, _, part = name.rpartition("/")
            if part == "m":
                self.m[key] = arr.copy()
            elif part == "v":
                self.v[key] = arr.copy()
            elif part == "t":
                self.t[key] = int(arr.reshape(-1)[0])
