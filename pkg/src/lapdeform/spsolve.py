"""Sparse SPD solves (Cholesky-style via SuperLU, CG fallback) and a dense oracle."""

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla


class SolverError(ValueError):
    pass


class NotPositiveDefiniteError(SolverError):
    pass


class SingularMatrixError(SolverError):
    pass


PIVOT_REL_TOL = 1e-14


class SpdMatrix:
    """Symmetric sparse matrix destined for an SPD factorization."""

    def __init__(self, matrix):
        if sp.issparse(matrix):
            m = matrix.tocsc().astype(np.float64)
        else:
            m = sp.csc_matrix(np.asarray(matrix, dtype=np.float64))
        if m.shape[0] != m.shape[1]:
            raise SolverError("matrix must be square")
        asym = abs(m - m.T)
        scale = max(1.0, abs(m).max() if m.nnz else 0.0)
        if asym.nnz and asym.max() > 1e-12 * scale:
            raise SolverError("matrix is not symmetric")
        m.sort_indices()
        self.matrix = m

    @property
    def dimension(self):
        return self.matrix.shape[0]

    def triplets(self):
        coo = self.matrix.tocoo()
        order = np.lexsort((coo.col, coo.row))
        return list(zip(coo.row[order].tolist(), coo.col[order].tolist(), coo.data[order].tolist()))


class SpdFactorization:
    """Reusable factorization of one SpdMatrix; solves many right-hand sides."""

    def __init__(self, spd, method="cholesky", cg_tol=1e-10):
        self.spd = spd
        self.method = method
        n = spd.dimension
        max_diag = float(spd.matrix.diagonal().max(initial=0.0))
        if max_diag <= 0:
            raise NotPositiveDefiniteError("nonpositive diagonal")
        if method == "cholesky":
            # symmetric-mode SuperLU with no row pivoting acts as an LDL^T
            # factorization with fill-reducing ordering; its U diagonal holds
            # the pivots, whose positivity certifies positive definiteness.
            try:
                self._lu = spla.splu(
                    spd.matrix,
                    permc_spec="MMD_AT_PLUS_A",
                    diag_pivot_thresh=0.0,
                    options={"SymmetricMode": True},
                )
            except RuntimeError as exc:
                raise NotPositiveDefiniteError(str(exc)) from None
            pivots = self._lu.U.diagonal()
            if pivots.min() <= PIVOT_REL_TOL * max_diag:
                raise NotPositiveDefiniteError(
                    f"pivot {pivots.min():.3e} below {PIVOT_REL_TOL:.0e} * max diagonal"
                )
        elif method == "cg":
            diag = spd.matrix.diagonal()
            if diag.min() <= PIVOT_REL_TOL * max_diag:
                raise NotPositiveDefiniteError("Jacobi preconditioner pivot too small")
            self._precond = spla.LinearOperator((n, n), matvec=lambda x: x / diag)
            self._cg_tol = cg_tol
            self._maxiter = 10 * n
        else:
            raise SolverError(f"unknown method {method!r}")

    def solve(self, rhs):
        """Solve W x = rhs for a vector or (n,k) matrix right-hand side."""
        rhs = np.asarray(rhs, dtype=np.float64)
        single = rhs.ndim == 1
        b = rhs[:, None] if single else rhs
        if b.shape[0] != self.spd.dimension:
            raise SolverError("right-hand side dimension mismatch")
        if self.method == "cholesky":
            x = self._lu.solve(np.ascontiguousarray(b))
        else:
            cols = []
            for j in range(b.shape[1]):
                xj, info = spla.cg(
                    self.spd.matrix, b[:, j], rtol=self._cg_tol, atol=0.0,
                    maxiter=self._maxiter, M=self._precond,
                )
                if info != 0:
                    raise SolverError(f"CG failed to converge (info={info})")
                cols.append(xj)
            x = np.column_stack(cols)
        return x[:, 0] if single else x


def factorize(m, method="cholesky"):
    if not isinstance(m, SpdMatrix):
        m = SpdMatrix(m)
    return SpdFactorization(m, method=method)


def solve_multi(factorization, rhs):
    rhs = np.asarray(rhs, dtype=np.float64)
    if rhs.ndim != 2:
        raise SolverError("solve_multi expects an (n,k) right-hand side")
    return factorization.solve(rhs)


def dense_oracle_solve(m, rhs):
    """Gaussian elimination with partial pivoting; independent test oracle."""
    a = np.array(m, dtype=np.float64)
    b = np.array(rhs, dtype=np.float64)
    single = b.ndim == 1
    if single:
        b = b[:, None]
    n = a.shape[0]
    if a.shape != (n, n) or b.shape[0] != n:
        raise SolverError("dimension mismatch")
    if n > 2000:
        raise SolverError("dense oracle limited to n <= 2000")
    scale = max(1.0, np.abs(a).max())
    for k in range(n):
        p = k + int(np.argmax(np.abs(a[k:, k])))
        if np.abs(a[p, k]) <= 1e-300 * scale:
            raise SingularMatrixError("zero pivot")
        if p != k:
            a[[k, p]] = a[[p, k]]
            b[[k, p]] = b[[p, k]]
        factors = a[k + 1:, k] / a[k, k]
        a[k + 1:, k:] -= factors[:, None] * a[k, k:]
        b[k + 1:] -= factors[:, None] * b[k]
    x = np.empty_like(b)
    for k in range(n - 1, -1, -1):
        x[k] = (b[k] - a[k, k + 1:] @ x[k + 1:]) / a[k, k]
    return x[:, 0] if single else x
