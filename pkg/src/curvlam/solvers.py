"""Sparse kernels, preconditioned conjugate gradients and direct solves."""

import logging
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import DimensionMismatchError, IndefiniteMatrixError, PreconditionerFaultError

log = logging.getLogger(__name__)


def as_csr(A):
    A = sp.csr_matrix(A)
    A.sum_duplicates()
    A.sort_indices()
    return A


def spmv(A, x):
    """y = A x for a CSR matrix; raises on a shape mismatch."""
    x = np.asarray(x, dtype=float)
    if A.shape[1] != x.shape[0]:
        raise DimensionMismatchError(f"matrix has {A.shape[1]} columns, vector {x.shape[0]} entries")
    return A @ x


def is_symmetric(A, rtol=1e-10):
    A = sp.csr_matrix(A)
    scale = abs(A).max() if A.nnz else 1.0
    diff = A - A.T
    return (abs(diff).max() if diff.nnz else 0.0) <= rtol * scale


@dataclass
class SolveReport:
    iterations: int
    history: list
    converged: bool
    preconditioner: str
    true_residual: float
    wall_time: float = 0.0
    criterion: str = "preconditioned"
    extra: dict = field(default_factory=dict)

    def as_row(self):
        """Deterministic fields only; wall time is reported separately."""
        return {
            "preconditioner": self.preconditioner,
            "criterion": self.criterion,
            "iterations": self.iterations,
            "converged": int(self.converged),
            "final_residual": repr(float(self.history[-1])) if self.history else "",
            "true_residual": repr(float(self.true_residual)),
            **self.extra,
        }


try:  # CHOLMOD when available; SuperLU otherwise
    from sksparse.cholmod import CholmodNotPositiveDefiniteError, cholesky as _cholmod
except ImportError:  # pragma: no cover - depends on the environment
    _cholmod = None


class DirectFactor:
    """Sparse Cholesky factorization of an SPD matrix.

    Uses CHOLMOD (supernodal, nested-dissection/METIS ordering) when
    scikit-sparse is installed. The fallback runs SuperLU with a symmetric
    minimum-degree ordering and diagonal pivoting only, so the U diagonal
    carries the LDL^T pivots. Either way a non-positive pivot raises
    IndefiniteMatrixError naming the row in the original numbering.
    """

    def __init__(self, A, backend=None):
        A = sp.csc_matrix(A, dtype=float)
        self.n = A.shape[0]
        if A.shape[0] != A.shape[1]:
            raise DimensionMismatchError("matrix must be square")
        self.backend = backend or ("cholmod" if _cholmod is not None else "superlu")
        self._solve = None
        if self.n == 0:
            return
        if self.backend == "cholmod":
            self._factor_cholmod(A)
        elif self.backend == "superlu":
            self._factor_superlu(A)
        else:
            raise ValueError(f"unknown backend {self.backend!r}")

    def _factor_cholmod(self, A):
        try:
            f = _cholmod(A, mode="supernodal")
        except CholmodNotPositiveDefiniteError:
            # locate the failing pivot with an LDL^T pass in the same ordering
            ldl = _cholmod(A, mode="simplicial")
            d = ldl.D()
            k = int(np.flatnonzero(~(d > 0))[0])
            raise IndefiniteMatrixError(int(ldl.P()[k]), float(d[k])) from None
        self._solve = f

    def _factor_superlu(self, A):
        try:
            lu = spla.splu(A, permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0,
                           options=dict(SymmetricMode=True))
        except RuntimeError as exc:
            raise IndefiniteMatrixError(-1, 0.0) from exc
        if not np.array_equal(lu.perm_r, lu.perm_c):
            raise IndefiniteMatrixError(-1, 0.0)
        piv = lu.U.diagonal()
        bad = np.flatnonzero(~(piv > 0))
        if len(bad):
            original = int(np.argsort(lu.perm_c)[bad[0]])
            raise IndefiniteMatrixError(original, float(piv[bad[0]]))
        self._solve = lu.solve

    def solve(self, b):
        b = np.asarray(b, dtype=float)
        if b.shape[0] != self.n:
            raise DimensionMismatchError(f"factor of size {self.n}, rhs of length {b.shape[0]}")
        if self._solve is None:
            return np.zeros_like(b)
        return self._solve(b)

    __call__ = solve


def direct_factor(A):
    return DirectFactor(A)


def direct_solve(factor, b):
    return factor.solve(b)


def cg(A, b, precond=None, tol=1e-4, maxit=1000, x0=None, criterion="preconditioned", name=None):
    """Preconditioned conjugate gradients.

    ``criterion`` selects the stopping norm: "preconditioned" uses
    sqrt(r^T P r) / sqrt(b^T P b), "residual" uses ||r|| / ||b||. The history
    holds that ratio after every iteration (index 0 = start). Hitting
    ``maxit`` returns an unconverged report rather than raising.
    """
    t0 = time.perf_counter()
    b = np.asarray(b, dtype=float)
    n = b.shape[0]
    if A.shape != (n, n):
        raise DimensionMismatchError(f"matrix {A.shape} incompatible with rhs of length {n}")
    P = (lambda r: r.copy()) if precond is None else precond
    pname = name or ("none" if precond is None else getattr(precond, "name", "custom"))
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    bnorm2 = float(b @ b)
    if bnorm2 == 0.0:
        return np.zeros(n), SolveReport(0, [0.0], True, pname, 0.0, time.perf_counter() - t0, criterion)

    r = b - A @ x
    z = P(r)
    rz = float(r @ z)
    if criterion == "preconditioned":
        zb = z if x0 is None else P(b)
        ref = float(b @ zb)
        if ref <= 0:
            raise PreconditionerFaultError("preconditioner is not positive on the right-hand side")

        def measure(rr, rzv):
            return np.sqrt(max(rzv, 0.0) / ref)
    elif criterion == "residual":
        def measure(rr, rzv):
            return np.sqrt(float(rr @ rr) / bnorm2)
    else:
        raise ValueError(f"unknown criterion {criterion!r}")

    if rz < 0:
        raise PreconditionerFaultError(f"negative r.Pr = {rz:.3e}")
    history = [measure(r, rz)]
    it = 0
    p = z.copy()
    while history[-1] > tol and it < maxit:
        Ap = A @ p
        pAp = float(p @ Ap)
        if pAp <= 0:
            raise PreconditionerFaultError(f"non-positive curvature p.Ap = {pAp:.3e}")
        alpha = rz / pAp
        x += alpha * p
        r -= alpha * Ap
        z = P(r)
        rz_new = float(r @ z)
        if rz_new < 0:
            raise PreconditionerFaultError(f"negative r.Pr = {rz_new:.3e} at iteration {it + 1}")
        p = z + (rz_new / rz) * p
        rz = rz_new
        it += 1
        history.append(measure(r, rz))
    true_res = float(np.linalg.norm(b - A @ x) / np.sqrt(bnorm2))
    report = SolveReport(it, history, history[-1] <= tol, pname, true_res,
                         time.perf_counter() - t0, criterion)
    log.info("cg[%s]: %d iterations, residual %.3e, converged=%s", pname, it, history[-1], report.converged)
    return x, report
