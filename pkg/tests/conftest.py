import numpy as np
import pytest


def relative_deviation(analytic, numeric, floor=1e-6):
    """Symmetric relative difference used by every gradient check."""
    return abs(analytic - numeric) / max(floor, abs(analytic) + abs(numeric))


def finite_difference_check(loss_fn, params, grads, eps=1e-5, floor=1e-6):
    """Max relative deviation between analytic grads and central differences.

    `params` is a dict of arrays perturbed in place; `loss_fn` re-evaluates the
    loss at the current parameters.
    """
    worst = 0.0
    for key, grad in grads.items():
        arr = params[key]
        it = np.nditer(arr, flags=["multi_index"])
        while not it.finished:
            ix = it.multi_index
            orig = arr[ix]
            arr[ix] = orig + eps
            up = loss_fn()
            arr[ix] = orig - eps
            down = loss_fn()
            arr[ix] = orig
            numeric = (up - down) / (2.0 * eps)
            worst = max(worst, relative_deviation(float(grad[ix]), numeric, floor))
            it.iternext()
    return worst


@pytest.fixture
def np_rng():
    return np.random.default_rng(12345)
