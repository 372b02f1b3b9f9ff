"""Implicit QL iteration for complex symmetric tridiagonal matrices.

The classical tridiagonal QL algorithm with Wilkinson-type shifts carries
over verbatim to complex symmetric (not Hermitian) matrices when the plane
rotations are taken complex orthogonal (c^2 + s^2 = 1).  Cost is O(n^2) for
all eigenvalues, against O(n^3) for a dense Hessenberg reduction.
"""

import numba
import numpy as np


@numba.njit(cache=True, nogil=True)
def csym_tridiag_eigvals(diag, off, tol, max_iter):
    """Eigenvalues of the complex symmetric tridiagonal matrix (diag, off).

    Returns ``(eigenvalues, status)`` with status 0 on success and -1 when
    some eigenvalue needed more than ``max_iter`` sweeps.
    """
    n = diag.shape[0]
    d = diag.astype(np.complex128)
    e = np.zeros(n, dtype=np.complex128)
    e[: n - 1] = off
    for l in range(n):
        it = 0
        while True:
            m = l
            while m < n - 1:
                dd = abs(d[m]) + abs(d[m + 1])
                if abs(e[m]) <= tol * dd:
                    break
                m += 1
            if m == l:
                break
            it += 1
            if it > max_iter:
                return d, -1
            g = (d[l + 1] - d[l]) / (2.0 * e[l])
            r = np.sqrt(g * g + 1.0)
            if abs(g - r) > abs(g + r):
                r = -r
            g = d[m] - d[l] + e[l] / (g + r)
            s = 1.0 + 0j
            c = 1.0 + 0j
            p = 0.0 + 0j
            i = m - 1
            deflated = False
            while i >= l:
                f = s * e[i]
                b = c * e[i]
                r = np.sqrt(f * f + g * g)
                e[i + 1] = r
                if abs(r) == 0.0:
                    d[i + 1] -= p
                    e[m] = 0.0
                    deflated = True
                    break
                s = f / r
                c = g / r
                g = d[i + 1] - p
                r = (d[i] - g) * s + 2.0 * c * b
                p = s * r
                d[i + 1] = g + p
                g = c * r - b
                i -= 1
            if deflated:
                continue
            d[l] -= p
            e[l] = g
            e[m] = 0.0
    return d, 0
