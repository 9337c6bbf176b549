"""Finite-difference verification of analytic gradients."""

from __future__ import annotations

from typing import Callable

import numpy as np

from .errors import ContractError
from .tensor import ParameterSet, Tape, Tensor


def grad_check(
    model_fn: Callable[[], Tensor],
    params: ParameterSet,
    eps: float,
    samples_per_param: int = 64,
    rng: np.random.Generator | None = None,
) -> float:
    """Compare tape gradients of ``model_fn()`` against central differences.

    ``model_fn`` must build a scalar loss from ``params`` and be
    deterministic; every parameter must be float64. For each parameter,
    up to ``samples_per_param`` coordinates are perturbed by +/- eps and
    the relative error |fd - analytic| / max(|fd|, |analytic|, 1e-8) is
    taken; the maximum over all sampled coordinates is returned.
    """
    if not 1e-6 <= eps <= 1e-3:
        raise ContractError(f"eps must be in [1e-6, 1e-3], got {eps}")
    for name, p in params.items():
        if p.data.dtype != np.float64:
            raise ContractError(f"grad_check requires float64 parameters, {name} is {p.data.dtype}")
    if rng is None:
        rng = np.random.default_rng(0)

    f0 = float(model_fn().data.reshape(()))
    f1 = float(model_fn().data.reshape(()))
    if f0 != f1:
        raise ContractError("model_fn is not deterministic: two evaluations differ")

    params.zero_grads()
    with Tape() as tape:
        loss = model_fn()
        tape.backward(loss, params)

    max_rel = 0.0
    for _, p in params.items():
        size = p.data.size
        if size <= samples_per_param:
            coords = np.arange(size)
        else:
            coords = rng.choice(size, size=samples_per_param, replace=False)
        flat = p.data.reshape(-1)
        gflat = p.grad.reshape(-1)
        for c in coords:
            orig = flat[c]
            flat[c] = orig + eps
            f_plus = float(model_fn().data.reshape(()))
            flat[c] = orig - eps
            f_minus = float(model_fn().data.reshape(()))
            flat[c] = orig
            fd = (f_plus - f_minus) / (2.0 * eps)
            a = gflat[c]
            rel = abs(fd - a) / max(abs(fd), abs(a), 1e-8)
            if rel > max_rel:
                max_rel = rel
    return max_rel
