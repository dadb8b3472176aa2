import numpy as np
import pytest

from shotvae.autodiff import Tensor, backward, zero_grad


def central_difference(f, tensors, step=1e-5):
    """Numerical gradient of scalar-valued ``f()`` w.r.t. each tensor's entries.

    ``f`` must re-run the full forward pass reading the tensors' current
    ``data``; entries are perturbed in place and restored.
    """
    grads = []
    for t in tensors:
        g = np.zeros_like(t.data)
        flat = t.data.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            hi = f()
            flat[i] = orig - step
            lo = f()
            flat[i] = orig
            g.reshape(-1)[i] = (hi - lo) / (2.0 * step)
        grads.append(g)
    return grads


def max_rel_err(analytic, numeric, floor=1e-6):
    """Worst-case relative error with a small absolute floor on the scale."""
    scale = np.maximum(np.abs(numeric), floor)
    return float(np.max(np.abs(analytic - numeric) / scale))


def check_gradients(build_loss, tensors, step=1e-5, tol=1e-4):
    """Backward pass vs central differences for every tensor."""
    zero_grad(tensors)
    backward(build_loss())
    numeric = central_difference(lambda: build_loss().item(), tensors, step)
    for t, num in zip(tensors, numeric):
        assert t.grad is not None, "missing gradient"
        err = max_rel_err(t.grad, num)
        assert err < tol, f"gradient mismatch: rel err {err:.3e}"


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
