"""Finite-difference verification of the hand-written backward passes.

Central differences with a fixed step compare against the analytic
gradients; errors are reported relative to the gradient's own scale so a
single threshold works across tensors of very different magnitudes.
Checks run in 64-bit and the fixtures keep values away from the
activation kinks, where a two-sided difference would straddle the
non-smooth point.
"""

from __future__ import annotations

import numpy as np

FD_STEP = 1e-5

#: Absolute gradient differences below this are treated as exactly zero
#: (heads a variant never emits, dead relu regions, FD rounding noise).
ABS_FLOOR = 1e-8


def numeric_gradient(loss_fn, array: np.ndarray, h: float = FD_STEP) -> np.ndarray:
    """Central-difference gradient of ``loss_fn()`` w.r.t. ``array``.

    The array is perturbed in place element by element, so ``loss_fn``
    must read it afresh on every call.
    """
    grad = np.zeros_like(array, dtype=np.float64)
    flat = array.reshape(-1)
    out = grad.reshape(-1)
    for i in range(flat.size):
        original = flat[i]
        flat[i] = original + h
        plus = loss_fn()
        flat[i] = original - h
        minus = loss_fn()
        flat[i] = original
        out[i] = (plus - minus) / (2.0 * h)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """Max elementwise difference, scaled by the larger gradient magnitude."""
    diff = float(np.max(np.abs(analytic - numeric))) if analytic.size else 0.0
    if diff < ABS_FLOOR:
        return 0.0
    scale = max(float(np.max(np.abs(analytic))), float(np.max(np.abs(numeric))))
    return diff / scale


def check_parameter_gradients(loss_fn, backward_fn, params: dict[str, np.ndarray],
                              grads: dict[str, np.ndarray], h: float = FD_STEP) -> float:
    """Max relative error over all parameter tensors.

    ``backward_fn()`` must populate ``grads`` for the current parameter
    values; ``loss_fn()`` must evaluate the same objective without side
    effects on the gradients.
    """
    backward_fn()
    analytic = {name: g.copy() for name, g in grads.items()}
    worst = 0.0
    for name, param in params.items():
        numeric = numeric_gradient(loss_fn, param, h)
        worst = max(worst, relative_error(analytic[name], numeric))
    return worst


def grad_check_model(model, loss_and_backward, loss_only, h: float = FD_STEP,
                     max_params: int = 5000) -> float:
    """Finite-difference check of every parameter of a tiny model.

    Args:
        model: module whose ``named_parameters``/``named_gradients`` are
            checked; must hold <= ``max_params`` parameters in 64-bit.
        loss_and_backward: callable returning the loss after a full
            forward + backward (gradients land in the model).
        loss_only: callable returning the loss from a forward pass alone.
        h: central-difference step.

    Returns:
        The worst relative error across all parameter tensors.
    """
    n_params = model.parameter_count()
    if n_params > max_params:
        raise ValueError(f"model has {n_params} parameters; gradient checks cap at {max_params}")
    for _, p in model.named_parameters():
        if p.dtype != np.float64:
            raise ValueError("gradient checks require a float64 model")
    model.zero_grad()
    loss_and_backward()
    analytic = {name: g.copy() for name, g in model.named_gradients()}
    worst = 0.0
    for name, param in model.named_parameters():
        numeric = numeric_gradient(loss_only, param, h)
        worst = max(worst, relative_error(analytic[name], numeric))
    return worst
