"""Numba kernels for the graphical lasso block coordinate descent.

The hot loops live here so they compile once (on-disk cache) and release the
GIL.  Everything operates on preallocated arrays owned by the caller.
"""

from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True, nogil=True)
def lasso_cd(W11, s12, rho, beta, tol, max_iter):
    """Cyclic coordinate descent for min 0.5 b'W11 b - s12'b + rho |b|_1.

    Mutates beta in place; returns the number of passes used.  W11 must be
    symmetric positive definite.  Zero coefficients are stored exactly.
    """
    m = s12.shape[0]
    grad = W11 @ beta
    for it in range(max_iter):
        delta_max = 0.0
        for j in range(m):
            old = beta[j]
            g = s12[j] - grad[j] + W11[j, j] * old
            if g > rho:
                new = (g - rho) / W11[j, j]
            elif g < -rho:
                new = (g + rho) / W11[j, j]
            else:
                new = 0.0
            d = new - old
            if d != 0.0:
                for i in range(m):
                    grad[i] += W11[i, j] * d
                beta[j] = new
                ad = abs(d)
                if ad > delta_max:
                    delta_max = ad
        if delta_max <= tol:
            return it + 1
    return max_iter


@njit(cache=True, nogil=True)
def glasso_sweeps(S, rho, W, B, max_sweeps, w_tol, inner_tol, inner_max):
    """Column sweeps of the graphical lasso W-update.

    W is the working covariance estimate (diagonal pinned to diag(S)); column
    j of B holds the lasso coefficients for variable j against the rest.
    Both are updated in place.  Returns the number of sweeps performed; the
    caller decides convergence from the exact KKT residual.
    """
    q = S.shape[0]
    m = q - 1
    W11 = np.empty((m, m))
    s12 = np.empty(m)
    beta = np.empty(m)
    w12 = np.empty(m)
    for sweep in range(max_sweeps):
        shift = 0.0
        for j in range(q):
            # gather the block that excludes row/col j
            r = 0
            for a in range(q):
                if a == j:
                    continue
                s12[r] = S[a, j]
                beta[r] = B[a, j]
                c = 0
                for b in range(q):
                    if b == j:
                        continue
                    W11[r, c] = W[a, b]
                    c += 1
                r += 1
            lasso_cd(W11, s12, rho, beta, inner_tol, inner_max)
            w12 = W11 @ beta
            r = 0
            for a in range(q):
                if a == j:
                    continue
                d = w12[r] - W[a, j]
                ad = abs(d)
                if ad > shift:
                    shift = ad
                W[a, j] = w12[r]
                W[j, a] = w12[r]
                B[a, j] = beta[r]
                r += 1
        if shift <= w_tol:
            return sweep + 1
    return max_sweeps
