"""Compressed sparse row storage and Krylov solvers for the CRF normal equations."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _backend
from .errors import SingularSystemError, ValidationError

BREAKDOWN = 1e-300


@dataclass(frozen=True)
class SparseMatrix:
    n_rows: int
    n_cols: int
    row_offsets: np.ndarray
    col_indices: np.ndarray
    values: np.ndarray

    @property
    def nnz(self) -> int:
        return len(self.values)

    @property
    def shape(self) -> tuple[int, int]:
        return self.n_rows, self.n_cols

    def to_dense(self) -> np.ndarray:
        out = np.zeros(self.shape)
        rows = np.repeat(np.arange(self.n_rows), np.diff(self.row_offsets))
        out[rows, self.col_indices] = self.values
        return out

    def diagonal(self) -> np.ndarray:
        rows = np.repeat(np.arange(self.n_rows), np.diff(self.row_offsets))
        on_diag = rows == self.col_indices
        diag = np.zeros(min(self.shape))
        diag[rows[on_diag]] = self.values[on_diag]
        return diag

    def triplets(self):
        rows = np.repeat(np.arange(self.n_rows), np.diff(self.row_offsets))
        return rows, self.col_indices, self.values

    def __matmul__(self, x):
        return spmv(self, x)


def from_triplets(n_rows: int, n_cols: int, rows, cols, values) -> SparseMatrix:
    """Build CSR from (row, col, value) triplets; duplicates summed, zeros dropped."""
    rows = np.asarray(rows, dtype=np.int64).ravel()
    cols = np.asarray(cols, dtype=np.int64).ravel()
    values = np.asarray(values, dtype=np.float64).ravel()
    if not (len(rows) == len(cols) == len(values)):
        raise ValidationError("triplet arrays must have equal length")
    if len(rows) and (rows.min() < 0 or rows.max() >= n_rows or cols.min() < 0 or cols.max() >= n_cols):
        raise ValidationError("triplet index out of range")

    # sort by (row, col, value): summation order is then independent of input order
    order = np.lexsort((values, cols, rows))
    rows, cols, values = rows[order], cols[order], values[order]
    key = rows * n_cols + cols
    start = np.ones(len(key), dtype=bool)
    start[1:] = key[1:] != key[:-1]
    group = np.cumsum(start) - 1
    summed = np.zeros(int(start.sum()))
    np.add.at(summed, group, values)
    urows, ucols = rows[start], cols[start]
    keep = summed != 0.0
    urows, ucols, summed = urows[keep], ucols[keep], summed[keep]
    offsets = np.zeros(n_rows + 1, dtype=np.int64)
    np.cumsum(np.bincount(urows, minlength=n_rows), out=offsets[1:])
    return SparseMatrix(n_rows, n_cols, offsets, np.ascontiguousarray(ucols), np.ascontiguousarray(summed))


def from_dense(a: np.ndarray) -> SparseMatrix:
    a = np.asarray(a, dtype=np.float64)
    r, c = np.nonzero(a)
    return from_triplets(a.shape[0], a.shape[1], r, c, a[r, c])


def spmv(m: SparseMatrix, x) -> np.ndarray:
    x = np.ascontiguousarray(x, dtype=np.float64)
    if x.shape != (m.n_cols,):
        raise ValidationError(f"dimension mismatch: matrix has {m.n_cols} columns, vector has shape {x.shape}")
    return _backend.csr_matvec(m.row_offsets, m.col_indices, m.values, x)


def transpose(m: SparseMatrix) -> SparseMatrix:
    r, c, v = m.triplets()
    return from_triplets(m.n_cols, m.n_rows, c, r, v)


def write_triplets(m: SparseMatrix) -> str:
    r, c, v = m.triplets()
    lines = [f"# {m.n_rows} {m.n_cols}"]
    lines += [f"{i} {j} {x!r}" for i, j, x in zip(r.tolist(), c.tolist(), v.tolist())]
    return "\n".join(lines) + "\n"


def read_triplets(text: str, shape: tuple[int, int] | None = None) -> SparseMatrix:
    rows, cols, vals = [], [], []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if line.startswith("#"):
            parts = line[1:].split()
            if shape is None and len(parts) == 2 and all(p.isdigit() for p in parts):
                shape = (int(parts[0]), int(parts[1]))
            continue
        if not line:
            continue
        try:
            i, j, x = line.split()
            rows.append(int(i))
            cols.append(int(j))
            vals.append(float(x))
        except ValueError:
            raise ValidationError(f"line {lineno}: expected 'row col value'") from None
    if shape is None:
        shape = (max(rows, default=-1) + 1, max(cols, default=-1) + 1)
    return from_triplets(shape[0], shape[1], rows, cols, vals)


@dataclass
class SolveReport:
    x: np.ndarray
    iterations: int
    final_residual_norm: float
    converged: bool
    status: str = "converged"


def _true_residual(a, b, x):
    return b - spmv(a, x)


def cgs_solve(a: SparseMatrix, b, x0=None, tol: float = 1e-8, max_iter: int = 10000,
              method: str = "cgs", preconditioner: str = "none") -> SolveReport:
    """Solve ``A x = b`` by Conjugate Gradient Squared (or plain CG).

    Stops when ``||b - A x|| <= tol * ||b||``, checked on the true residual.
    A breakdown (|rho| or |sigma| under 1e-300) restarts once from the
    current iterate; a second one ends the solve unconverged.
    """
    if a.n_rows != a.n_cols:
        raise ValidationError("matrix must be square")
    if tol <= 0:
        raise ValidationError("tol must be positive")
    b = np.asarray(b, dtype=np.float64)
    n = a.n_rows
    if b.shape != (n,):
        raise ValidationError("right-hand side has the wrong length")
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=np.float64)

    if preconditioner == "jacobi":
        d = a.diagonal()
        if np.any(d == 0):
            raise ValidationError("Jacobi preconditioner needs a zero-free diagonal")
        inv_diag = 1.0 / d
    elif preconditioner == "none":
        inv_diag = None
    else:
        raise ValidationError(f"unknown preconditioner {preconditioner!r}")

    step = {"cgs": _cgs_iterations, "cg": _cg_iterations}.get(method)
    if step is None:
        raise ValidationError(f"unknown method {method!r}")

    bnorm = float(np.linalg.norm(b))
    if bnorm == 0.0:
        return SolveReport(np.zeros(n), 0, 0.0, True)
    target = tol * bnorm

    total = 0
    restarts_left = 1
    while True:
        r = _true_residual(a, b, x)
        rnorm = float(np.linalg.norm(r))
        if not np.isfinite(rnorm):
            return SolveReport(x, total, rnorm, False, "numerical error: non-finite residual")
        if rnorm <= target:
            return SolveReport(x, total, rnorm, True)
        if total >= max_iter:
            return SolveReport(x, total, rnorm, False, "max_iter reached")
        x, used, outcome = step(a, x, r, target, max_iter - total, inv_diag)
        total += used
        if outcome == "nan":
            return SolveReport(x, total, float("nan"), False, "numerical error: NaN encountered")
        if outcome == "breakdown":
            if restarts_left == 0:
                rnorm = float(np.linalg.norm(_true_residual(a, b, x)))
                return SolveReport(x, total, rnorm, rnorm <= target, "breakdown")
            restarts_left -= 1
        # "small" (recursive residual below target) and "budget" fall through to the true-residual check


def _precond(inv_diag, v):
    return v if inv_diag is None else inv_diag * v


def _cgs_iterations(a, x, r, target, budget, inv_diag):
    r_shadow = r.copy()
    rho_prev = 1.0
    u = np.zeros_like(r)
    p = np.zeros_like(r)
    q = np.zeros_like(r)
    for it in range(1, budget + 1):
        rho = float(r_shadow @ r)
        if abs(rho) < BREAKDOWN:
            return x, it - 1, "breakdown"
        if it == 1:
            u = r.copy()
            p = u.copy()
        else:
            beta = rho / rho_prev
            u = r + beta * q
            p = u + beta * (q + beta * p)
        v = spmv(a, _precond(inv_diag, p))
        sigma = float(r_shadow @ v)
        if abs(sigma) < BREAKDOWN:
            return x, it - 1, "breakdown"
        alpha = rho / sigma
        q = u - alpha * v
        w = _precond(inv_diag, u + q)
        x = x + alpha * w
        r = r - alpha * spmv(a, w)
        rho_prev = rho
        rnorm = float(np.linalg.norm(r))
        if not np.isfinite(rnorm):
            return x, it, "nan"
        if rnorm <= target:
            return x, it, "small"
    return x, budget, "budget"


def _cg_iterations(a, x, r, target, budget, inv_diag):
    z = _precond(inv_diag, r)
    p = z.copy()
    rz = float(r @ z)
    for it in range(1, budget + 1):
        ap = spmv(a, p)
        sigma = float(p @ ap)
        if abs(sigma) < BREAKDOWN or abs(rz) < BREAKDOWN:
            return x, it - 1, "breakdown"
        alpha = rz / sigma
        x = x + alpha * p
        r = r - alpha * ap
        rnorm = float(np.linalg.norm(r))
        if not np.isfinite(rnorm):
            return x, it, "nan"
        if rnorm <= target:
            return x, it, "small"
        z = _precond(inv_diag, r)
        rz_new = float(r @ z)
        p = z + (rz_new / rz) * p
        rz = rz_new
    return x, budget, "budget"


def dense_solve(a, b) -> np.ndarray:
    """Gaussian elimination with partial pivoting. Test oracle only."""
    m = np.array(a, dtype=np.float64)
    rhs = np.array(b, dtype=np.float64)
    n = m.shape[0]
    if m.shape != (n, n) or rhs.shape != (n,):
        raise ValidationError("dense_solve needs a square matrix and matching vector")
    if n > 2000:
        raise ValidationError("dense_solve is limited to n <= 2000")
    for col in range(n):
        piv = col + int(np.argmax(np.abs(m[col:, col])))
        if abs(m[piv, col]) < 1e-12:
            raise SingularSystemError(f"pivot {m[piv, col]:.3e} in column {col} below 1e-12", node=col)
        if piv != col:
            m[[col, piv]] = m[[piv, col]]
            rhs[[col, piv]] = rhs[[piv, col]]
        factors = m[col + 1:, col] / m[col, col]
        m[col + 1:, col:] -= factors[:, None] * m[col, col:]
        rhs[col + 1:] -= factors * rhs[col]
    x = np.zeros(n)
    for row in range(n - 1, -1, -1):
        x[row] = (rhs[row] - m[row, row + 1:] @ x[row + 1:]) / m[row, row]
    return x
