"""Hot numeric kernels for risk-model training.

Both the negative log-likelihood and its gradient are evaluated thousands
of times per training run, so they carry numba ``@njit`` implementations
with pure-numpy twins. The numpy path is selected when numba is not
importable or when the ``TELECARE_NO_NUMBA`` environment variable is set
to a non-empty value other than ``0``. ``BACKEND`` names the active path;
``benchmarks/bench_kernels.py`` compares the two.

Formulas (sums over examples, bias weight w[0] unpenalized):

    nll(w)  = sum_i softplus(z_i) - y_i * z_i  +  (l2/2) * sum_{j>=1} w_j^2
    grad(w) = X^T (sigmoid(z) - y)             +  l2 * w   (zeroed at j=0)

with z = X w, computed in overflow-safe form for |z| up to 500.
"""

from __future__ import annotations

import math
import os

import numpy as np

DISABLE_ENV = "TELECARE_NO_NUMBA"


def nll_numpy(w: np.ndarray, X: np.ndarray, y: np.ndarray, l2: float) -> float:
    z = X @ w
    # softplus(z) = max(z, 0) + log1p(exp(-|z|))
    softplus = np.maximum(z, 0.0) + np.log1p(np.exp(-np.abs(z)))
    penalty = 0.5 * l2 * float(np.dot(w[1:], w[1:]))
    return float(np.sum(softplus - y * z) + penalty)


def grad_numpy(w: np.ndarray, X: np.ndarray, y: np.ndarray, l2: float) -> np.ndarray:
    z = X @ w
    p = np.empty_like(z)
    pos = z >= 0
    p[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    p[~pos] = ez / (1.0 + ez)
    g = X.T @ (p - y)
    g[1:] += l2 * w[1:]
    return g


def _numba_disabled() -> bool:
    value = os.environ.get(DISABLE_ENV, "")
    return value not in ("", "0")


nll_numba = None
grad_numba = None

if not _numba_disabled():
    try:
        from numba import njit
    except ImportError:
        njit = None
    if njit is not None:

        @njit(cache=True)
        def _nll_jit(w, X, y, l2):  # pragma: no cover - exercised via logistic_nll
            n, d = X.shape
            total = 0.0
            for i in range(n):
                z = 0.0
                for j in range(d):
                    z += w[j] * X[i, j]
                total += max(z, 0.0) + math.log1p(math.exp(-abs(z))) - y[i] * z
            penalty = 0.0
            for j in range(1, d):
                penalty += w[j] * w[j]
            return total + 0.5 * l2 * penalty

        @njit(cache=True)
        def _grad_jit(w, X, y, l2):  # pragma: no cover - exercised via logistic_grad
            n, d = X.shape
            g = np.zeros(d)
            for i in range(n):
                z = 0.0
                for j in range(d):
                    z += w[j] * X[i, j]
                if z >= 0.0:
                    p = 1.0 / (1.0 + math.exp(-z))
                else:
                    ez = math.exp(z)
                    p = ez / (1.0 + ez)
                diff = p - y[i]
                for j in range(d):
                    g[j] += diff * X[i, j]
            for j in range(1, d):
                g[j] += l2 * w[j]
            return g

        nll_numba = _nll_jit
        grad_numba = _grad_jit

if nll_numba is not None:
    BACKEND = "numba"
    logistic_nll = nll_numba
    logistic_grad = grad_numba
else:
    BACKEND = "numpy"
    logistic_nll = nll_numpy
    logistic_grad = grad_numpy
