"""Dense complex linear algebra: direct solve, GMRES, spectra and conditioning."""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np
import scipy.linalg as sla

__all__ = [
    "SolveDiagnostics",
    "SingularMatrixError",
    "direct_solve",
    "gmres",
    "eigenvalues",
    "condition_number_2",
    "relative_residual",
]


class SingularMatrixError(np.linalg.LinAlgError):
    """LU factorization met a pivot that is zero to working precision."""

    def __init__(self, index, pivot, scale):
        self.index = int(index)
        self.pivot = complex(pivot)
        super().__init__(f"singular to working precision: pivot {self.index} has |u_ii| = {abs(pivot):.3e} "
                         f"(max |u_jj| = {scale:.3e})")


@dataclass(frozen=True)
class SolveDiagnostics:
    method: str
    iterations: int
    residual: float
    converged: bool = True
    condition_number_2: Optional[float] = None
    residual_history: tuple = ()


def relative_residual(A, x, b) -> float:
    """True relative residual ``||A x - b|| / ||b||``."""
    apply = A if callable(A) else (lambda v: A @ v)
    nb = np.linalg.norm(b)
    r = np.linalg.norm(apply(x) - b)
    return float(r / nb) if nb > 0 else float(r)


def direct_solve(A, b, pivot_tol=None, with_condition=False):
    """Solve ``A x = b`` by LU with partial pivoting on the row-equilibrated system.

    Rows are scaled to unit max-norm first so that the pivot test does not
    depend on row scaling. Raises :class:`SingularMatrixError` when a pivot
    falls below ``pivot_tol * max|u_jj|`` (default ``N * eps``).
    """
    A = np.asarray(A)
    b = np.asarray(b)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("A must be square")
    if b.shape[0] != A.shape[0]:
        raise ValueError("shape mismatch between A and b")
    n = A.shape[0]
    rows = np.max(np.abs(A), axis=1) if n else np.zeros(0)
    if n and np.any(rows == 0):
        i = int(np.flatnonzero(rows == 0)[0])
        raise SingularMatrixError(i, 0.0, float(rows.max()))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", sla.LinAlgWarning)
        lu, piv = sla.lu_factor(A / rows[:, None], check_finite=True)
    d = np.abs(np.diag(lu))
    scale = float(d.max()) if n else 0.0
    tol = (n * np.finfo(float).eps if pivot_tol is None else pivot_tol) * scale
    bad = np.flatnonzero(d <= tol)
    if scale == 0.0 or bad.size:
        i = int(bad[0]) if bad.size else 0
        raise SingularMatrixError(i, lu[i, i], scale)
    x = sla.lu_solve((lu, piv), (b.T / rows).T)
    kappa = condition_number_2(A) if with_condition else None
    return x, SolveDiagnostics("direct", 1, relative_residual(A, x, b), True, kappa)


def gmres(A: Union[np.ndarray, Callable], b, tol=1e-5, max_iter=None, restart=None, x0=None):
    """Restarted GMRES (full GMRES when ``restart >= max_iter``).

    Arnoldi uses modified Gram-Schmidt with one reorthogonalization pass and
    the least-squares problem is updated with Givens rotations. Convergence
    is confirmed on the true relative residual. If ``max_iter`` is reached
    the best iterate is returned with ``converged=False``.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    apply = A if callable(A) else (lambda v, _A=np.asarray(A): _A @ v)
    b = np.asarray(b, dtype=complex)
    n = b.shape[0]
    max_iter = n if max_iter is None else int(max_iter)
    restart = max_iter if restart is None else int(restart)
    if max_iter < 1 or restart < 1:
        raise ValueError("max_iter and restart must be positive")
    nb = np.linalg.norm(b)
    if nb == 0:
        return np.zeros(n, dtype=complex), SolveDiagnostics("gmres", 0, 0.0, True)
    x = np.zeros(n, dtype=complex) if x0 is None else np.array(x0, dtype=complex)
    r = b - apply(x)
    res = np.linalg.norm(r) / nb
    history = [float(res)]
    it = 0
    while res > tol and it < max_iter:
        m = min(restart, max_iter - it)
        V = np.zeros((m + 1, n), dtype=complex)
        H = np.zeros((m + 1, m), dtype=complex)
        cs = np.zeros(m, dtype=complex)
        sn = np.zeros(m, dtype=complex)
        g = np.zeros(m + 1, dtype=complex)
        beta = np.linalg.norm(r)
        V[0] = r / beta
        g[0] = beta
        j = 0
        for j in range(m):
            w = apply(V[j])
            for _ in range(2):
                for i in range(j + 1):
                    h = np.vdot(V[i], w)
                    H[i, j] += h
                    w = w - h * V[i]
            hn = np.linalg.norm(w)
            it += 1
            if hn > 0:
                V[j + 1] = w / hn
            for i in range(j):
                t = cs[i] * H[i, j] + sn[i] * H[i + 1, j]
                H[i + 1, j] = -np.conj(sn[i]) * H[i, j] + cs[i] * H[i + 1, j]
                H[i, j] = t
            den = np.hypot(abs(H[j, j]), hn)
            cs[j] = abs(H[j, j]) / den
            sn[j] = (H[j, j] / abs(H[j, j]) if H[j, j] != 0 else 1.0) * hn / den
            H[j, j] = cs[j] * H[j, j] + sn[j] * hn
            g[j + 1] = -np.conj(sn[j]) * g[j]
            g[j] = cs[j] * g[j]
            history.append(float(abs(g[j + 1]) / nb))
            if abs(g[j + 1]) / nb <= tol or hn <= 1e-14 * beta:
                break
        k = j + 1
        y = sla.solve_triangular(H[:k, :k], g[:k])
        xt = x + y @ V[:k]
        rt = b - apply(xt)
        rest = np.linalg.norm(rt) / nb
        if rest < res:
            x, r, res = xt, rt, rest
        elif hn <= 1e-14 * beta:
            break
        history[-1] = float(rest)
    return x, SolveDiagnostics("gmres", it, float(res), bool(res <= tol), None, tuple(history))


def eigenvalues(A) -> np.ndarray:
    """All eigenvalues of a dense matrix (Hessenberg QR via LAPACK)."""
    A = np.asarray(A)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("A must be square")
    return sla.eigvals(A, check_finite=True)


def condition_number_2(A) -> float:
    """``sigma_max / sigma_min`` from the singular values."""
    A = np.asarray(A)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("A must be square")
    s = sla.svdvals(A)
    return float(np.inf) if s[-1] == 0 else float(s[0] / s[-1])
