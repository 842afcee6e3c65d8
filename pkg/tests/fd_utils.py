"""Central finite-difference gradient checking against the analytic backprop."""

import numpy as np

from consultnav.policy import PolicyParameters, init_policy, trainable_names


def float64_params(cfg, seed_offset: int = 0) -> PolicyParameters:
    """A policy whose tensors are float64, so FD perturbations are exact."""
    params = init_policy(cfg)
    return PolicyParameters(cfg, {k: v.astype(np.float64) for k, v in params.tensors.items()})


def fd_gradients(loss_fn, params: PolicyParameters, h: float = 1e-5) -> dict:
    """Numeric gradient of loss_fn(params) by central differences, in place."""
    grads = {}
    for name in trainable_names(params.config):
        array = params.tensors[name]
        grad = np.zeros_like(array)
        it = np.nditer(array, flags=["multi_index"])
        for _ in it:
            ix = it.multi_index
            original = array[ix]
            array[ix] = original + h
            up = loss_fn(params)
            array[ix] = original - h
            down = loss_fn(params)
            array[ix] = original
            grad[ix] = (up - down) / (2 * h)
        grads[name] = grad
    return grads


def max_relative_error(analytic: dict, numeric: dict, floor: float = 1e-4) -> float:
    """Worst per-coordinate relative error, floored by an absolute scale.

    Coordinates whose gradient magnitude is below ``floor`` are judged on
    absolute error against the floor: central differences carry ~1e-11 of
    roundoff noise regardless of the true gradient size, so a pure relative
    criterion would flag correct gradients near zero.
    """
    worst = 0.0
    for name, num in numeric.items():
        ana = analytic[name]
        denom = np.maximum(np.maximum(np.abs(ana), np.abs(num)), floor)
        rel = np.abs(ana - num) / denom
        worst = max(worst, float(rel.max()))
    return worst
