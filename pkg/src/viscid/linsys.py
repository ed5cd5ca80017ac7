"""Jacobi-preconditioned conjugate gradients for sparse SPD systems."""

from __future__ import annotations

import numpy as np

from .errors import SolverError


def pcg(
    A,
    b: np.ndarray,
    x0: np.ndarray | None = None,
    tol: float = 1e-8,
    max_iter: int | None = None,
) -> tuple[np.ndarray, float, int]:
    """Solve ``A x = b`` to a relative 2-norm residual of ``tol``.

    ``A`` is any object supporting ``@`` with a vector (scipy sparse matrix
    or ndarray) with a strictly positive diagonal. The convergence test runs
    before the first update, so a consistent initial guess returns
    unchanged. Deterministic for fixed inputs.

    Returns ``(x, relative_residual, iterations)``; raises
    :class:`SolverError` when the budget is exhausted.
    """
    if not 0.0 < tol < 1.0:
        raise ValueError(f"tol must be in (0, 1), got {tol}")
    n = b.shape[0]
    if max_iter is None:
        max_iter = 10 * n
    diag = A.diagonal() if hasattr(A, "diagonal") else np.diag(A)
    if np.any(diag <= 0):
        raise SolverError("system diagonal is not strictly positive", float("nan"), 0)
    inv_diag = 1.0 / diag

    x = np.zeros(n) if x0 is None else x0.astype(float, copy=True)
    b_norm = float(np.linalg.norm(b))
    if b_norm == 0.0:
        b_norm = 1.0
    r = b - A @ x
    res = float(np.linalg.norm(r)) / b_norm
    if res <= tol:
        return x, res, 0

    z = inv_diag * r
    p = z.copy()
    rz = float(r @ z)
    for it in range(1, max_iter + 1):
        Ap = A @ p
        pAp = float(p @ Ap)
        if pAp <= 0.0:
            raise SolverError("search direction lost positive-definiteness", res, it)
        alpha = rz / pAp
        x += alpha * p
        r -= alpha * Ap
        res = float(np.linalg.norm(r)) / b_norm
        if res <= tol:
            return x, res, it
        z = inv_diag * r
        rz_new = float(r @ z)
        p = z + (rz_new / rz) * p
        rz = rz_new
    raise SolverError("conjugate gradients did not converge", res, max_iter)
