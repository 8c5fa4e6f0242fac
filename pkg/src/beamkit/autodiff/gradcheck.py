"""Finite-difference gradient verification.

The convention used throughout the test suite: central differences with
``h = 1e-5`` in double precision, compared per element as

    |analytic - numeric| / (max(|analytic|, |numeric|) + 1e-8) <= 1e-4
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .tensor import Tensor, no_grad

__all__ = ["finite_difference_check"]


def finite_difference_check(
    fn: Callable[[], Tensor],
    tensors: Sequence[Tensor],
    h: float = 1e-5,
    rng: np.random.Generator | None = None,
    max_elements_per_tensor: int | None = None,
) -> float:
    """Compare reverse-mode gradients of ``fn`` against central differences.

    Parameters
    ----------
    fn : callable
        Rebuilds the computation from scratch and returns a scalar Tensor.
        It must read the current ``.data`` of ``tensors`` each call.
    tensors : sequence of Tensor
        Leaves (``requires_grad=True``) whose gradients are checked.
    h : float
        Central-difference step.
    rng : numpy.random.Generator, optional
        Needed when subsampling elements.
    max_elements_per_tensor : int, optional
        Check at most this many randomly chosen elements per tensor
        (all elements when None).

    Returns
    -------
    float
        The largest damped relative error over all checked elements.
    """
    for t in tensors:
        t.zero_grad()
    loss = fn()
    loss.backward()
    analytic = [
        t.grad.copy() if t.grad is not None else np.zeros(t.shape) for t in tensors
    ]
    for t in tensors:
        t.zero_grad()

    worst = 0.0
    for t, grad in zip(tensors, analytic):
        flat = t.data.reshape(-1)
        grad_flat = grad.reshape(-1)
        if max_elements_per_tensor is None or flat.size <= max_elements_per_tensor:
            indices = np.arange(flat.size)
        else:
            if rng is None:
                raise ValueError("rng is required when subsampling elements")
            indices = rng.choice(flat.size, size=max_elements_per_tensor, replace=False)
        for i in indices:
            original = flat[i]
            flat[i] = original + h
            with no_grad():
                plus = fn().item()
            flat[i] = original - h
            with no_grad():
                minus = fn().item()
            flat[i] = original
            numeric = (plus - minus) / (2.0 * h)
            err = abs(grad_flat[i] - numeric) / (
                max(abs(grad_flat[i]), abs(numeric)) + 1e-8
            )
            worst = max(worst, err)
    return worst
