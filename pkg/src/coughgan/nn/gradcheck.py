"""Finite-difference verification of layer backward passes."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class GradCheckReport:
    max_rel_error: dict = field(default_factory=dict)
    tolerance: float = 1e-4

    @property
    def passed(self) -> bool:
        return all(e <= self.tolerance for e in self.max_rel_error.values())


def _rel(a, n, floor):
    return float(np.max(np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)))


def grad_check(layer, x, tolerance: float = 1e-4, h: float = 1e-4, training: bool = True,
               max_elements: int = 200, seed: int = 0, floor: float = 1e-6) -> GradCheckReport:
    """Compare ``layer.backward`` against central differences in float64.

    The scalar probed is ``sum(forward(x) * R)`` for a fixed random ``R``.
    Tensors larger than ``max_elements`` are checked on a random subsample of
    that many entries. Integer inputs (embedding ids) are not differentiated.
    """
    rng = np.random.default_rng(seed)
    layer.astype(np.float64)
    x = np.asarray(x)
    if x.dtype.kind == "f":
        x = x.astype(np.float64)
    y = layer.forward(x, training)
    R = rng.standard_normal(y.shape)
    dx = layer.backward(R)
    analytic = {f"param:{k}": v.copy() for k, v in layer.grads.items()}

    def objective():
        return float(np.sum(layer.forward(x, training) * R))

    targets = [(f"param:{k}", layer.params[k]) for k in layer.params]
    if dx is not None and x.dtype.kind == "f":
        analytic["input"] = dx
        targets.append(("input", x))

    report = GradCheckReport(tolerance=tolerance)
    for name, arr in targets:
        flat = arr.reshape(-1)
        idx = np.arange(flat.size)
        if flat.size > max_elements:
            idx = rng.choice(flat.size, size=max_elements, replace=False)
        numeric = np.empty(idx.size)
        for j, i in enumerate(idx):
            old = flat[i]
            flat[i] = old + h
            fp = objective()
            flat[i] = old - h
            fm = objective()
            flat[i] = old
            numeric[j] = (fp - fm) / (2 * h)
        report.max_rel_error[name] = _rel(analytic[name].reshape(-1)[idx], numeric, floor)
    return report
