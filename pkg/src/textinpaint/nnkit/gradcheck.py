"""Central finite-difference verification of hand-written backward passes."""

from __future__ import annotations

from .params import ParamStore


def relative_error(analytic: float, numeric: float) -> float:
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-8)


def finite_diff_gradcheck(loss_fn, params: ParamStore, eps: float = 1e-4) -> float:
    """Worst relative error between analytic and numeric parameter gradients.

    ``loss_fn(want_grads)`` returns the scalar loss; when ``want_grads``
    it must also accumulate gradients into `params`. Inputs whose
    gradient should be checked are registered in the store like any
    parameter. Run in float64: float32 round-off swamps the 1e-4 bar.
    """
    params.zero_grads()
    loss_fn(True)
    analytic = {p.name: p.grad.copy() for p in params if p.trainable}
    worst = 0.0
    for p in params:
        if not p.trainable:
            continue
        flat = p.value.reshape(-1)
        ga = analytic[p.name].reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            lp = loss_fn(False)
            flat[i] = orig - eps
            lm = loss_fn(False)
            flat[i] = orig
            numeric = (lp - lm) / (2.0 * eps)
            err = relative_error(float(ga[i]), float(numeric))
            if err > worst:
                worst = err
    params.zero_grads()
    return worst
