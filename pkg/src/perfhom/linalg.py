"""Jacobi-preconditioned conjugate gradients and sparse-matrix debug I/O."""
from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .errors import IncompatibleRHS, NotConverged

DEFAULT_TOL = 1e-10


def is_symmetric(A, tol: float = 1e-12) -> bool:
    A = sp.csr_matrix(A)
    if A.nnz == 0:
        return True
    amax = abs(A).max()
    diff = A - A.T
    return diff.nnz == 0 or abs(diff).max() <= tol * amax


def solve_cg(A, b, tol: float = DEFAULT_TOL, max_iter: int | None = None,
             constraint: str = "none", x0=None) -> np.ndarray:
    """Solve ``A x = b`` for symmetric positive (semi)definite ``A``.

    Stops once ``||A x - b|| <= tol * ||b||``. With ``constraint="zero_mean"``
    the system is treated as singular with the constants as kernel: ``b``
    must be orthogonal to the constants and the iterates are kept mean-zero.
    On failure raises :class:`NotConverged` carrying the best iterate.
    """
    b = np.asarray(b, dtype=float)
    n = b.size
    if max_iter is None:
        max_iter = 10 * n
    zero_mean = constraint == "zero_mean"
    if constraint not in ("none", "zero_mean"):
        raise ValueError(f"unknown constraint {constraint!r}")

    bnorm = np.linalg.norm(b)
    if zero_mean:
        drift = abs(b.sum()) / np.sqrt(n)
        if drift > max(tol * bnorm, 1e-300) and drift > 1e-12 * np.abs(b).max():
            raise IncompatibleRHS(
                f"right-hand side has a component {drift:.3e} along the constants")
        b = b - b.mean()
        bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros(n)

    diag = np.asarray(A.diagonal(), dtype=float)
    inv_diag = np.where(diag > 0, 1.0 / np.where(diag > 0, diag, 1.0), 1.0)

    def precond(r):
        z = inv_diag * r
        if zero_mean:
            z -= z.mean()
        return z

    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    if zero_mean:
        x -= x.mean()
    r = b - A @ x
    rnorm = np.linalg.norm(r)
    best_x, best_res = x.copy(), rnorm
    if rnorm <= tol * bnorm:
        return x
    z = precond(r)
    p = z.copy()
    rz = r @ z
    for it in range(1, max_iter + 1):
        Ap = A @ p
        pAp = p @ Ap
        if pAp <= 0:
            break
        alpha = rz / pAp
        x += alpha * p
        r -= alpha * Ap
        if zero_mean:
            r -= r.mean()
        rnorm = np.linalg.norm(r)
        if rnorm < best_res:
            best_x, best_res = x.copy(), rnorm
        if rnorm <= tol * bnorm:
            # guard against drift of the recursive residual
            true_r = np.linalg.norm(b - A @ x)
            if true_r <= 10 * tol * bnorm:
                if zero_mean:
                    x -= x.mean()
                return x
            r = b - A @ x
        z = precond(r)
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    raise NotConverged(
        f"CG stopped after {it} iterations with relative residual {best_res / bnorm:.3e}",
        x=best_x, residual=best_res / bnorm, iterations=it)


def write_triplets(path, A) -> None:
    """Write a sparse matrix as ``row col value`` lines (17 significant digits)."""
    A = sp.coo_matrix(A)
    order = np.lexsort((A.col, A.row))
    with open(path, "w") as fh:
        fh.write(f"# {A.shape[0]} {A.shape[1]}\n")
        for i, j, v in zip(A.row[order], A.col[order], A.data[order]):
            fh.write(f"{i} {j} {v:.17g}\n")


def read_triplets(path) -> sp.csr_matrix:
    with open(path) as fh:
        header = fh.readline().split()
        shape = (int(header[1]), int(header[2]))
        data = np.loadtxt(fh, ndmin=2)
    if data.size == 0:
        return sp.csr_matrix(shape)
    return sp.csr_matrix((data[:, 2], (data[:, 0].astype(int), data[:, 1].astype(int))), shape=shape)
