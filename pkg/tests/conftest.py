import numpy as np
import pytest

from loren.tensor import Parameter, Tape, backward


def numerical_grad(f, arr: np.ndarray, step: float = 1e-5) -> np.ndarray:
    """Central finite differences of scalar ``f()`` w.r.t. ``arr`` (perturbed in place)."""
    g = np.zeros_like(arr)
    it = np.nditer(arr, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        old = arr[i]
        arr[i] = old + step
        hi = f()
        arr[i] = old - step
        lo = f()
        arr[i] = old
        g[i] = (hi - lo) / (2 * step)
    return g


def max_rel_error(a: np.ndarray, b: np.ndarray) -> float:
    scale = max(np.max(np.abs(a)), np.max(np.abs(b)), 1e-8)
    return float(np.max(np.abs(a - b)) / scale)


def check_gradients(build_loss, params: list[Parameter], step: float = 1e-5) -> float:
    """Worst relative error between reverse-mode and finite-difference gradients."""
    for p in params:
        p.zero_grad()
    with Tape():
        loss = build_loss()
    backward(loss)
    worst = 0.0
    for p in params:
        num = numerical_grad(lambda: float(build_loss().data), p.data, step)
        worst = max(worst, max_rel_error(p.grad, num))
    return worst


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
