"""Central finite-difference gradient checking."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping

import numpy as np

from .tensor import Tensor, backward

# gradients smaller than this are compared absolutely
REL_FLOOR = 1e-6


@dataclass
class GradCheckResult:
    max_rel_error: float
    worst: tuple[str, int]
    n_coords: int
    per_param: dict[str, float]

    def ok(self, tol: float = 1e-4) -> bool:
        return self.max_rel_error < tol


def relative_error(a, n, floor: float = REL_FLOOR) -> np.ndarray:
    a, n = np.asarray(a), np.asarray(n)
    return np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)


def numeric_grad(loss_fn: Callable[[], Tensor], leaf: Tensor, step: float = 1e-5) -> np.ndarray:
    """d(loss)/d(leaf) by central differences, perturbing the leaf in place."""
    base = leaf.values
    out = np.zeros(base.size)
    flat = base.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        work = base.copy()
        work.reshape(-1)[i] = orig + step
        _swap(leaf, work)
        up = loss_fn().item()
        work.reshape(-1)[i] = orig - step
        _swap(leaf, work)
        down = loss_fn().item()
        out[i] = (up - down) / (2.0 * step)
    _swap(leaf, base)
    return out.reshape(base.shape)


def _swap(leaf: Tensor, arr: np.ndarray) -> None:
    leaf._assign(arr)


def check_gradients(
    loss_fn: Callable[[], Tensor], params: Mapping[str, Tensor], step: float = 1e-5
) -> GradCheckResult:
    for p in params.values():
        p.grad = None
    backward(loss_fn())
    per: dict[str, float] = {}
    worst, worst_at, n = 0.0, ("", -1), 0
    for name, p in params.items():
        analytic = p.grad if p.grad is not None else np.zeros(p.shape)
        numeric = numeric_grad(loss_fn, p, step)
        err = relative_error(analytic, numeric).reshape(-1)
        n += err.size
        per[name] = float(err.max()) if err.size else 0.0
        if err.size and err.max() > worst:
            worst = float(err.max())
            worst_at = (name, int(err.argmax()))
    return GradCheckResult(worst, worst_at, n, per)
