"""Shared test helpers: finite-difference oracles and tiny-model builders."""

from __future__ import annotations

import numpy as np

from samplefield import tensor as T
from samplefield.tensor import Tensor


def autodiff_grads(build, arrs, dtype: str):
    """Gradients of build(*tensors) w.r.t. each array, via the tape."""
    with T.using_dtype(dtype):
        ts = [Tensor(np.asarray(a), requires_grad=True) for a in arrs]
        loss = build(*ts)
        T.backward(loss)
        return [np.asarray(t.grad, dtype=np.float64).copy() for t in ts]


def fd_grads(build, arrs, h: float = 1e-5):
    """Central-difference gradients, evaluated in 64-bit with no taping."""
    work = [np.asarray(a, dtype=np.float64).copy() for a in arrs]

    def value() -> float:
        with T.using_dtype("float64"), T.no_grad():
            return float(build(*[Tensor(w) for w in work]).item())

    grads = []
    for k in range(len(work)):
        g = np.zeros(work[k].shape)
        flat, gf = work[k].ravel(), g.ravel()
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            fp = value()
            flat[i] = orig - h
            fm = value()
            flat[i] = orig
            gf[i] = (fp - fm) / (2.0 * h)
        grads.append(g)
    return grads


def max_rel_error(got, ref) -> float:
    """max |g - g_fd| scaled by the largest finite-difference magnitude."""
    num = max(float(np.max(np.abs(g - r))) for g, r in zip(got, ref))
    den = max(float(np.max(np.abs(r))) for r in ref)
    return num / (den + 1e-12)


def check_grad(build, arrs, h: float = 1e-5, tol64: float = 1e-6) -> None:
    """Assert the 64-bit tape gradient matches central differences."""
    ref = fd_grads(build, arrs, h=h)
    got = autodiff_grads(build, arrs, "float64")
    err = max_rel_error(got, ref)
    assert err < tol64, f"64-bit gradient off by {err:.3e}"
