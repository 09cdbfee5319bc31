"""Central finite-difference checks against the autodiff engine."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from . import tensor as T
from .tensor import Tensor

# gradients smaller than this are compared absolutely: central differences at
# h=1e-5 carry ~1e-11 roundoff on O(1) losses
DENOM_FLOOR = 1e-6


def relative_error(analytic: float, numeric: float) -> float:
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), DENOM_FLOOR)


def numeric_partial(fn: Callable[[], Tensor], param: Tensor, index, h: float = 1e-5) -> float:
    """``(f(p + h) - f(p - h)) / 2h`` at one coordinate, evaluated without tracking."""
    old = param.data[index]
    try:
        with T.no_grad():
            param.data[index] = old + h
            up = fn().item()
            param.data[index] = old - h
            down = fn().item()
    finally:
        param.data[index] = old
    return (up - down) / (2.0 * h)


def check_gradients(
    fn: Callable[[], Tensor],
    params: Sequence[Tensor],
    n_coords: int | None = None,
    seed: int = 0,
    h: float = 1e-5,
) -> list[tuple[int, tuple, float, float, float]]:
    """Compare autodiff and finite differences for a scalar ``fn()``.

    Checks every coordinate when ``n_coords`` is None, otherwise a random
    sample of that many coordinates drawn across all ``params``.  Returns
    ``(param index, coordinate, analytic, numeric, rel err)`` rows.
    """
    for p in params:
        p.grad = None
    T.backward(fn())
    coords = [(i, idx) for i, p in enumerate(params) for idx in np.ndindex(p.shape)]
    if n_coords is not None and n_coords < len(coords):
        rng = np.random.default_rng(seed)
        coords = [coords[j] for j in rng.choice(len(coords), size=n_coords, replace=False)]
    rows = []
    for i, idx in coords:
        p = params[i]
        analytic = 0.0 if p.grad is None else float(p.grad[idx])
        numeric = numeric_partial(fn, p, idx, h)
        rows.append((i, idx, analytic, numeric, relative_error(analytic, numeric)))
    return rows


def max_relative_error(rows) -> float:
    return max((r[-1] for r in rows), default=0.0)
