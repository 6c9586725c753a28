"""Pure-numpy versions of the hot loops (fallback for _ckernels)."""
import numpy as np
from scipy.linalg import cho_solve

SIMPLEX_OPTIMAL = 0
SIMPLEX_UNBOUNDED = 1
SIMPLEX_MAXITER = 2


def pivot(T, row, col):
    T[row] /= T[row, col]
    factor = T[:, col].copy()
    factor[row] = 0.0
    T -= np.outer(factor, T[row])
    T[:, col] = 0.0
    T[row, col] = 1.0


def simplex_iterate(T, basis, n_allowed, max_iter, tol, bland_after):
    """Run primal simplex pivots on tableau ``T`` in place.

    ``T`` is (m+1, n+1): constraint rows, then the reduced-cost row; the last
    column is the right-hand side.  Only the first ``n_allowed`` columns may
    enter.  Dantzig pricing switches to Bland's rule after ``bland_after``
    consecutive degenerate pivots.
    """
    m = T.shape[0] - 1
    degenerate = 0
    bland = False
    it = 0
    while it < max_iter:
        rc = T[m, :n_allowed]
        if bland:
            neg = np.flatnonzero(rc < -tol)
            if neg.size == 0:
                return SIMPLEX_OPTIMAL, it
            col = int(neg[0])
        else:
            col = int(np.argmin(rc))
            if rc[col] >= -tol:
                return SIMPLEX_OPTIMAL, it
        colv = T[:m, col]
        pos = colv > tol
        if not pos.any():
            return SIMPLEX_UNBOUNDED, it
        ratios = np.full(m, np.inf)
        ratios[pos] = T[:m, -1][pos] / colv[pos]
        rmin = ratios.min()
        ties = np.flatnonzero(ratios <= rmin + tol)
        # largest pivot among ties; Bland: lowest basis index among the
        # well-conditioned ties
        piv = colv[ties]
        if bland:
            ties = ties[piv >= 1e-6 * piv.max()]
            row = int(ties[np.argmin(basis[ties])])
        else:
            row = int(ties[np.argmax(piv)])
        if rmin <= tol:
            degenerate += 1
            if degenerate > bland_after:
                bland = True
        else:
            degenerate = 0
        pivot(T, row, col)
        basis[row] = col
        # round-off can push a degenerate basic variable slightly negative
        b = T[:m, -1]
        b[(b < 0.0) & (b > -tol)] = 0.0
        it += 1
    return SIMPLEX_MAXITER, it


def admm_iterate(P, q, A, l, u, rho, sigma, alpha, L, x, z, y, x_prev, y_prev, n_iter):
    """``n_iter`` ADMM steps on ``min 1/2 x'Px + q'x, l <= Ax <= u``.

    ``L`` is the lower Cholesky factor of ``P + sigma I + A' diag(rho) A``.
    Updates ``x, z, y`` in place; ``x_prev, y_prev`` receive the iterates
    from before the last step (for infeasibility certificates).
    """
    factor = (L, True)
    for _ in range(n_iter):
        x_prev[:] = x
        y_prev[:] = y
        rhs = sigma * x - q + A.T @ (rho * z - y)
        xt = cho_solve(factor, rhs, check_finite=False)
        zt = A @ xt
        x[:] = alpha * xt + (1.0 - alpha) * x
        zr = alpha * zt + (1.0 - alpha) * z
        znew = np.clip(zr + y / rho, l, u)
        y += rho * (zr - znew)
        z[:] = znew
