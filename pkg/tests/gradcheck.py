"""Central finite differences, kept independent of the autodiff code path."""
from __future__ import annotations

from typing import Callable, Sequence

import numpy as np


def numeric_grad(f: Callable[[], float], arr: np.ndarray, step: float = 1e-5) -> np.ndarray:
    """d f / d arr by central differences, perturbing ``arr`` in place."""
    g = np.zeros_like(arr)
    flat = arr.reshape(-1)
    gflat = g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        hi = f()
        flat[i] = orig - step
        lo = f()
        flat[i] = orig
        gflat[i] = (hi - lo) / (2 * step)
    return g


def rel_error(a: np.ndarray, b: np.ndarray, floor: float = 1e-10) -> float:
    """``|a - b| / max(|a| + |b|, floor)`` over whole tensors."""
    num = np.linalg.norm(a - b)
    den = max(np.linalg.norm(a) + np.linalg.norm(b), floor)
    return float(num / den)


def check_all(loss_fn: Callable[[], object], params: Sequence, step: float = 1e-5) -> dict[str, float]:
    """Run autodiff once, then compare each parameter against finite differences.

    ``loss_fn`` must build a fresh graph each call and return a scalar Tensor.
    """
    from page import numerics as nx

    for p in params:
        p.zero_grad()
    nx.backward(loss_fn())
    analytic = {id(p): p.grad.copy() for p in params}
    errors = {}
    for i, p in enumerate(params):
        num = numeric_grad(lambda: loss_fn().item(), p.data, step)
        errors[p.name or f"param{i}"] = rel_error(analytic[id(p)], num)
    return errors
