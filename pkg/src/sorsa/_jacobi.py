"""Compiled kernel for the one-sided Jacobi sweep.

Kept separate from the public linalg API so the numba dependency stays in
one place.  The kernel mutates its arguments in place and uses a fixed
cyclic pair order, so identical inputs always take the identical sequence
of floating-point operations.
"""

from __future__ import annotations

import numba
import numpy as np

SWEEP_TOL = 1e-14
MAX_SWEEPS = 60


@numba.njit(cache=True)
def jacobi_sweeps(a, v, tol, max_sweeps):  # pragma: no cover - exercised via linalg.svd
    """Orthogonalize the columns of a (m x n, m >= n), accumulating rotations in v.

    Returns the number of sweeps used, or -1 if the off-diagonal measure
    never fell below tol.
    """
    m, n = a.shape
    for sweep in range(max_sweeps):
        off = 0.0
        for i in range(n - 1):
            for j in range(i + 1, n):
                alpha = 0.0
                beta = 0.0
                gamma = 0.0
                for k in range(m):
                    alpha += a[k, i] * a[k, i]
                    beta += a[k, j] * a[k, j]
                    gamma += a[k, i] * a[k, j]
                if alpha == 0.0 or beta == 0.0 or gamma == 0.0:
                    continue
                rel = abs(gamma) / np.sqrt(alpha * beta)
                if rel > off:
                    off = rel
                if rel <= tol:
                    continue
                zeta = (beta - alpha) / (2.0 * gamma)
                if zeta >= 0.0:
                    t = 1.0 / (zeta + np.sqrt(1.0 + zeta * zeta))
                else:
                    t = -1.0 / (-zeta + np.sqrt(1.0 + zeta * zeta))
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = c * t
                for k in range(m):
                    ai = a[k, i]
                    aj = a[k, j]
                    a[k, i] = c * ai - s * aj
                    a[k, j] = s * ai + c * aj
                for k in range(n):
                    vi = v[k, i]
                    vj = v[k, j]
                    v[k, i] = c * vi - s * vj
                    v[k, j] = s * vi + c * vj
        if off <= tol:
            return sweep + 1
    return -1
