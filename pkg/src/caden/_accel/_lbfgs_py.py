"""Pure-numpy implementation of the limited-memory two-loop recursion.

Import-time fallback for the compiled kernel; both implementations follow the
same operation order so results agree to the last few ulps.
"""

from __future__ import annotations

import numpy as np


def two_loop_direction(
    s: np.ndarray,
    y: np.ndarray,
    rho: np.ndarray,
    gamma: float,
    grad: np.ndarray,
) -> np.ndarray:
    """Apply the limited-memory inverse-Hessian approximation to ``grad``.

    Args:
        s: (k, d) step differences, oldest first.
        y: (k, d) gradient differences, oldest first.
        rho: (k,) precomputed 1 / (s_i . y_i).
        gamma: initial inverse-Hessian scaling.
        grad: (d,) gradient to precondition.

    Returns:
        H @ grad; the descent direction is its negative.
    """
    k = s.shape[0]
    q = grad.copy()
    alpha = np.empty(k)
    for i in range(k - 1, -1, -1):
        alpha[i] = rho[i] * float(s[i] @ q)
        q -= alpha[i] * y[i]
    r = gamma * q
    for i in range(k):
        beta = rho[i] * float(y[i] @ r)
        r += (alpha[i] - beta) * s[i]
    return r
