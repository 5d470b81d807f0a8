"""Central finite-difference verification of analytic gradients."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .tensor import Tensor, no_grad


def analytic_grads(f: Callable[[], Tensor], params: Sequence[Tensor]) -> list[np.ndarray]:
    for p in params:
        p.requires_grad = True
        p.zero_grad()
    f().backward()
    return [p.grad.copy() for p in params]


def numeric_grads(f: Callable[[], Tensor], params: Sequence[Tensor], eps: float = 1e-4,
                  coords: Sequence[np.ndarray] | None = None) -> list[np.ndarray]:
    """(f(p + eps) - f(p - eps)) / (2 eps), one coordinate at a time.

    ``coords`` optionally restricts each parameter to a subset of flat indices;
    unvisited entries are returned as NaN.
    """
    out = []
    with no_grad():
        for i, p in enumerate(params):
            flat = p.values.reshape(-1)
            num = np.full(flat.shape, np.nan, dtype=np.float64)
            idx = range(flat.size) if coords is None else coords[i]
            for j in idx:
                orig = flat[j]
                flat[j] = orig + eps
                fp = f().item()
                flat[j] = orig - eps
                fm = f().item()
                flat[j] = orig
                num[j] = (fp - fm) / (2 * eps)
            out.append(num.reshape(p.shape))
    return out


def relative_errors(analytic: Sequence[np.ndarray], numeric: Sequence[np.ndarray]) -> list[float]:
    errs = []
    for a, n in zip(analytic, numeric):
        mask = ~np.isnan(n)
        if not mask.any():
            errs.append(0.0)
            continue
        a64 = a.astype(np.float64)[mask]
        errs.append(float(np.max(np.abs(a64 - n[mask]) / np.maximum(1.0, np.abs(a64)))))
    return errs


def finite_difference_check(f: Callable[[], Tensor], params: Sequence[Tensor], eps: float = 1e-4,
                            max_coords: int | None = None, seed: int = 0) -> float:
    """Max over coordinates of |analytic - numeric| / max(1, |analytic|).

    ``f`` must rebuild the loss from the current parameter values on every
    call. With ``max_coords`` set, at most that many coordinates per parameter
    are probed, chosen by ``seed``.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    params = list(params)
    coords = None
    if max_coords is not None:
        rng = np.random.default_rng(seed)
        coords = [
            np.arange(p.size) if p.size <= max_coords else rng.choice(p.size, max_coords, replace=False)
            for p in params
        ]
    analytic = analytic_grads(f, params)
    numeric = numeric_grads(f, params, eps=eps, coords=coords)
    return max(relative_errors(analytic, numeric), default=0.0)
