"""Pure-Python one-sided Jacobi SVD kernel.

Used when the compiled ``_jacobi_ext`` module is unavailable or disabled.
The arithmetic mirrors the Cython kernel rotation for rotation, so both
backends agree to rounding.
"""
import math

import numpy as np


def jacobi_sweeps(work, vt, tol, floor, max_sweeps):
    """Orthogonalize the rows of ``work`` in place by plane rotations.

    ``work`` is the transposed input (n x m, n <= m); ``vt`` starts as the
    n x n identity and accumulates the same rotations.  Pairs where either
    squared row norm is at or below ``floor`` are roundoff and left alone.
    Returns the number
    of sweeps used, or -1 when ``max_sweeps`` ran out before convergence.
    """
    n = work.shape[0]
    for sweep in range(1, max_sweeps + 1):
        rotated = False
        for p in range(n - 1):
            for q in range(p + 1, n):
                rp = work[p]
                rq = work[q]
                alpha = float(rp @ rp)
                beta = float(rq @ rq)
                gamma = float(rp @ rq)
                if (gamma == 0.0 or alpha <= floor or beta <= floor
                        or abs(gamma) <= tol * math.sqrt(alpha * beta)):
                    continue
                rotated = True
                zeta = (beta - alpha) / (2.0 * gamma)
                t = math.copysign(1.0, zeta) / (abs(zeta) + math.sqrt(1.0 + zeta * zeta))
                c = 1.0 / math.sqrt(1.0 + t * t)
                s = c * t
                new_p = c * rp - s * rq
                work[q] = s * rp + c * rq
                work[p] = new_p
                vp = vt[p]
                vq = vt[q]
                new_vp = c * vp - s * vq
                vt[q] = s * vp + c * vq
                vt[p] = new_vp
        if not rotated:
            return sweep
    return -1

