"""Independent reference implementations used only to check the package.

Each oracle deliberately avoids the code path it validates: matrix inversion
is Gauss-Jordan with partial pivoting (no Cholesky), singular values come
from one-sided Jacobi rotations (no QR composition), and the QP reference
solves the KKT system of a known active set by nullspace elimination.
"""

import itertools

import numpy as np


def gauss_jordan_inverse(M):
    """Explicit inverse by Gauss-Jordan elimination with partial pivoting."""
    M = np.asarray(M, dtype=float)
    n = M.shape[0]
    A = np.hstack([M.copy(), np.eye(n)])
    for col in range(n):
        pivot_row = col + int(np.argmax(np.abs(A[col:, col])))
        if abs(A[pivot_row, col]) < 1e-300:
            raise ZeroDivisionError("singular matrix in Gauss-Jordan")
        if pivot_row != col:
            A[[col, pivot_row]] = A[[pivot_row, col]]
        A[col] /= A[col, col]
        for row in range(n):
            if row != col:
                A[row] -= A[row, col] * A[col]
    return A[:, n:]


def jacobi_singular_values(A, sweeps=60, tol=1e-14):
    """Singular values via one-sided Jacobi rotations on the columns."""
    B = np.asarray(A, dtype=float).copy()
    n = B.shape[1]
    for _ in range(sweeps):
        off = 0.0
        for i in range(n - 1):
            for j in range(i + 1, n):
                aii = B[:, i] @ B[:, i]
                ajj = B[:, j] @ B[:, j]
                aij = B[:, i] @ B[:, j]
                if abs(aij) <= tol * np.sqrt(aii * ajj):
                    continue
                off = max(off, abs(aij))
                tau = (ajj - aii) / (2.0 * aij)
                t = np.sign(tau) / (abs(tau) + np.sqrt(1.0 + tau * tau))
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = c * t
                bi = B[:, i].copy()
                B[:, i] = c * bi - s * B[:, j]
                B[:, j] = s * bi + c * B[:, j]
        if off == 0.0:
            break
    return np.sort(np.linalg.norm(B, axis=0))[::-1]


def kkt_solve_active_set(H, g, eq, lower, upper, active_lower, active_upper):
    """Solve a box-and-one-equality QP restricted to a given active set.

    Fixes the active variables at their bounds and solves the remaining
    equality-constrained problem by nullspace elimination: one free variable
    is expressed through the equality and substituted out. Returns
    (x, eq_multiplier, bound_multipliers); gives the global optimum when the
    supplied active set is the optimal one.
    """
    H = np.asarray(H, dtype=float)
    g = np.asarray(g, dtype=float)
    n = g.size
    x = np.zeros(n)
    fixed = np.zeros(n, dtype=bool)
    for i in active_lower:
        x[i] = lower[i]
        fixed[i] = True
    for i in active_upper:
        x[i] = upper[i]
        fixed[i] = True
    free = np.flatnonzero(~fixed)
    lam = 0.0
    if free.size:
        Hff = H[np.ix_(free, free)]
        rhs = -(g[free] + H[np.ix_(free, fixed)] @ x[fixed]) if fixed.any() else -g[free]
        if eq is None:
            x[free] = np.linalg.solve(Hff, rhs)
        else:
            a, b = eq
            a = np.asarray(a, dtype=float)
            af = a[free]
            if not np.any(af):
                x[free] = np.linalg.solve(Hff, rhs)
            else:
                # eliminate the free variable with the largest |a| entry
                p = int(np.argmax(np.abs(af)))
                keep = np.delete(np.arange(free.size), p)
                beta = (b - a[fixed] @ x[fixed]) / af[p]
                Z = np.zeros((free.size, free.size - 1))
                Z[keep, np.arange(free.size - 1)] = 1.0
                Z[p, :] = -af[keep] / af[p]
                x_part = np.zeros(free.size)
                x_part[p] = beta
                reduced_H = Z.T @ Hff @ Z
                reduced_rhs = Z.T @ (rhs - Hff @ x_part)
                y = np.linalg.solve(reduced_H, reduced_rhs)
                x[free] = x_part + Z @ y
                residual = H[free] @ x + g[free]
                lam = residual[p] / af[p]
    elif eq is not None:
        a = np.asarray(eq[0], dtype=float)
        lam = float(a @ (H @ x + g)) / float(a @ a) if np.any(a) else 0.0
    q = H @ x + g
    a_vec = np.asarray(eq[0], dtype=float) if eq is not None else np.zeros(n)
    mu = np.zeros(n)
    mu[fixed] = q[fixed] - lam * a_vec[fixed]
    return x, lam, mu


def brute_force_box_eq_qp(H, g, eq, lower, upper):
    """Global minimum of a small box+equality QP by enumerating active sets."""
    n = len(g)
    best = None
    for assignment in itertools.product((0, 1, 2), repeat=n):
        alo = [i for i, s in enumerate(assignment) if s == 1]
        aup = [i for i, s in enumerate(assignment) if s == 2]
        try:
            x, lam, mu = kkt_solve_active_set(H, g, eq, lower, upper, alo, aup)
        except np.linalg.LinAlgError:
            continue
        if np.any(x < lower - 1e-9) or np.any(x > upper + 1e-9):
            continue
        if eq is not None and abs(np.dot(eq[0], x) - eq[1]) > 1e-8:
            continue
        if any(mu[i] < -1e-9 for i in alo) or any(mu[i] > 1e-9 for i in aup):
            continue
        free = [i for i, s in enumerate(assignment) if s == 0]
        q = H @ x + g
        a_vec = np.asarray(eq[0], dtype=float) if eq is not None else np.zeros(n)
        if free and np.abs(q[free] - lam * a_vec[free]).max() > 1e-7 * (1 + np.abs(q).max()):
            continue
        value = 0.5 * x @ H @ x + g @ x
        if best is None or value < best[0] - 1e-12:
            best = (value, x)
    if best is None:
        raise AssertionError("enumeration found no KKT point")
    return best[1]
