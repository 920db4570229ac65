"""Finite-difference oracles for validating analytic gradients."""

from __future__ import annotations

from typing import Callable, Iterable

import numpy as np

from .tensor import Tensor, backward, no_grad

DEFAULT_EPS = 1e-4


def _relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    denom = np.maximum(1e-8, np.abs(analytic) + np.abs(numeric))
    return float((np.abs(analytic - numeric) / denom).max())


def finite_diff_check(f: Callable[[Tensor], Tensor], x: Tensor,
                      eps: float = DEFAULT_EPS) -> float:
    """Max relative error between backward() and central differences on x.

    `f` maps a tensor to a scalar tensor. x should be float64 for
    meaningful tolerances.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    x.requires_grad = True
    x.zero_grad()
    backward(f(x))
    analytic = x.grad.copy()

    flat = x.data.reshape(-1)
    numeric = np.empty_like(flat)
    with no_grad():
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            fp = float(f(x).data)
            flat[i] = orig - eps
            fm = float(f(x).data)
            flat[i] = orig
            numeric[i] = (fp - fm) / (2.0 * eps)
    return _relative_error(analytic.reshape(-1), numeric)


def finite_diff_check_params(loss_fn: Callable[[], Tensor],
                             named_params: Iterable[tuple[str, Tensor]],
                             eps: float = DEFAULT_EPS) -> dict[str, float]:
    """Check every parameter of a model against central differences.

    `loss_fn` re-runs the model forward and returns the scalar loss; it is
    called fresh for each perturbation, so parameters may be mutated in
    place between calls.
    """
    params = list(named_params)
    for _, p in params:
        p.zero_grad()
    backward(loss_fn())
    analytic = {name: p.grad.copy() for name, p in params}

    errors: dict[str, float] = {}
    with no_grad():
        for name, p in params:
            flat = p.data.reshape(-1)
            numeric = np.empty_like(flat)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + eps
                fp = float(loss_fn().data)
                flat[i] = orig - eps
                fm = float(loss_fn().data)
                flat[i] = orig
                numeric[i] = (fp - fm) / (2.0 * eps)
            errors[name] = _relative_error(analytic[name].reshape(-1), numeric)
    return errors
