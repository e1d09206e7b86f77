"""Central finite-difference gradient verification.

The independent oracle for the autodiff engine: perturb each checked
coordinate by +-h, difference the loss, and compare against the analytic
gradient from backward(). Relative error uses a floor so near-zero
gradients do not blow the ratio up.
"""

from __future__ import annotations

import numpy as np

from ..errors import UsageError
from .tensor import Tensor

DEFAULT_H = 1e-5
DEFAULT_TOL = 1e-4
_REL_FLOOR = 1e-3


def relative_error(analytic: float, numeric: float) -> float:
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), _REL_FLOOR)


def check_gradients(
    loss_fn,
    tensors: dict[str, Tensor],
    h: float = DEFAULT_H,
    rng: np.random.Generator | None = None,
    max_coords: int = 64,
    tamper: float = 0.0,
) -> tuple[float, dict[str, float]]:
    """Compare analytic and finite-difference gradients.

    ``loss_fn`` must rebuild the scalar loss from the current tensor data
    on every call (it is invoked repeatedly under coordinate
    perturbations) and must be deterministic. Tensors larger than
    ``max_coords`` are subsampled. ``tamper`` shifts the analytic gradient
    and exists only as a failure-injection hook for the oracle runner.

    Returns (max relative error, per-tensor max relative error).
    """
    if rng is None:
        rng = np.random.default_rng(0)
    for t in tensors.values():
        t.zero_grad()
    loss = loss_fn()
    if loss.size != 1:
        raise UsageError("gradient check needs a scalar loss")
    loss.backward()
    analytic = {}
    for name, t in tensors.items():
        if t.grad is None:
            raise UsageError(f"tensor {name!r} received no gradient")
        analytic[name] = t.grad.copy() + tamper

    per_tensor: dict[str, float] = {}
    for name, t in tensors.items():
        flat = t.data.reshape(-1)
        count = flat.size
        if count > max_coords:
            coords = rng.choice(count, size=max_coords, replace=False)
        else:
            coords = np.arange(count)
        worst = 0.0
        for i in coords:
            original = flat[i]
            flat[i] = original + h
            f_plus = loss_fn().item()
            flat[i] = original - h
            f_minus = loss_fn().item()
            flat[i] = original
            numeric = (f_plus - f_minus) / (2.0 * h)
            err = relative_error(float(analytic[name].reshape(-1)[i]), numeric)
            worst = max(worst, err)
        per_tensor[name] = worst
    return max(per_tensor.values()), per_tensor
