"""Dense triangular-factor kernel: rank-one Cholesky updates, triangular solves,
and orthogonal-complement projections, all O(p^2) per call.

Precision matrices are represented by upper-triangular factors R with positive
diagonal, so that R^T R is the SPD matrix itself. Rank-one updates are done with
Givens rotations (the classic LINPACK-style update), which keeps the factor
upper-triangular without ever forming the dense matrix.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

ORTHO_TOL = 1e-10
DEGENERATE_NORM = 1e-12


class InvalidInputError(ValueError):
    """Input violates an operation's preconditions (non-finite, wrong shape, ...)."""


class DegenerateDirectionError(ValueError):
    """A direction vector is too close to zero to normalize."""


@dataclass(frozen=True)
class TriangularFactor:
    """Upper-triangular matrix R with positive diagonal; represents R^T R (SPD).

    Instances are treated as immutable values: operations return new factors
    and never modify their arguments.
    """

    entries: np.ndarray

    def __post_init__(self):
        entries = np.asarray(self.entries, dtype=float)
        object.__setattr__(self, "entries", entries)
        if entries.ndim != 2 or entries.shape[0] != entries.shape[1]:
            raise InvalidInputError(f"factor must be square, got shape {entries.shape}")
        if not np.isfinite(entries).all():
            raise InvalidInputError("factor entries must be finite")
        if entries.shape[0] > 1 and np.any(np.tril(entries, -1) != 0.0):
            raise InvalidInputError("factor must be upper-triangular")
        if np.any(np.diag(entries) <= 0.0):
            raise InvalidInputError("factor diagonal must be positive")

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    @classmethod
    def scaled_identity(cls, dim: int, scale: float) -> "TriangularFactor":
        """Factor of (scale^2 * I), i.e. scale * I."""
        if dim < 1:
            raise InvalidInputError(f"dim must be >= 1, got {dim}")
        if not (np.isfinite(scale) and scale > 0):
            raise InvalidInputError(f"scale must be positive and finite, got {scale}")
        return _wrap_valid(np.eye(dim) * scale)

    def scaled(self, factor: float) -> "TriangularFactor":
        """Factor of (factor^2 * R^T R); factor must be positive and finite."""
        if not (np.isfinite(factor) and factor > 0):
            raise InvalidInputError(f"scale factor must be positive and finite, got {factor}")
        return _wrap_valid(self.entries * factor)

    def matrix(self) -> np.ndarray:
        """The represented SPD matrix R^T R (O(p^3); for diagnostics and tests)."""
        return self.entries.T @ self.entries


@dataclass(frozen=True)
class OrthonormalColumns:
    """A p x ncols matrix J of pairwise-orthonormal columns, ncols <= p - 1."""

    columns: np.ndarray

    def __post_init__(self):
        columns = np.asarray(self.columns, dtype=float)
        object.__setattr__(self, "columns", columns)
        if columns.ndim != 2:
            raise InvalidInputError(f"columns must be 2-D, got shape {columns.shape}")
        p, ncols = columns.shape
        if ncols > p - 1:
            raise InvalidInputError(f"at most p-1={p - 1} columns allowed, got {ncols}")
        if ncols > 0:
            gram = columns.T @ columns
            if np.max(np.abs(gram - np.eye(ncols))) > ORTHO_TOL:
                raise InvalidInputError("columns are not orthonormal")

    @property
    def dim(self) -> int:
        return self.columns.shape[0]

    @property
    def ncols(self) -> int:
        return self.columns.shape[1]

    @classmethod
    def empty(cls, dim: int) -> "OrthonormalColumns":
        return cls(np.empty((dim, 0)))


def _wrap_valid(entries: np.ndarray) -> TriangularFactor:
    """Wrap entries that are valid by construction, skipping the invariant checks.

    Internal fast path for factors produced by operations that preserve the
    invariants (rotation updates, positive scalings); user-supplied matrices
    go through the validating constructor.
    """
    factor = object.__new__(TriangularFactor)
    object.__setattr__(factor, "entries", entries)
    return factor


@njit(cache=True)
def _givens_update_kernel(r_new: np.ndarray, work: np.ndarray) -> None:
    """In-place core of the rank-one factor update (hot path)."""
    p = r_new.shape[0]
    for k in range(p):
        vk = work[k]
        if vk == 0.0:
            continue
        rkk = r_new[k, k]
        rot = math.hypot(rkk, vk)
        c = rkk / rot
        s = vk / rot
        r_new[k, k] = rot
        for j in range(k + 1, p):
            rkj = r_new[k, j]
            r_new[k, j] = c * rkj + s * work[j]
            work[j] = c * work[j] - s * rkj


def _givens_update(entries: np.ndarray, v: np.ndarray, op_counter=None) -> np.ndarray:
    """Copy of `entries` updated to the factor of entries^T entries + v v^T.

    One Givens rotation per row zeroes v[k] against the diagonal; each rotation
    touches only the trailing row slice, so total work is sum_k O(p - k) = O(p^2).
    `op_counter`, when given, is a one-element list accumulating the touched
    slice lengths (an instruction-count proxy for complexity tests); counted
    calls run a plain-Python twin of the compiled kernel.
    """
    r_new = entries.copy()
    work = v.copy()
    if op_counter is None:
        _givens_update_kernel(r_new, work)
        return r_new
    p = r_new.shape[0]
    for k in range(p):
        vk = work[k]
        if vk == 0.0:
            op_counter[0] += 1
            continue
        rkk = r_new[k, k]
        rot = math.hypot(rkk, vk)
        c = rkk / rot
        s = vk / rot
        r_new[k, k] = rot
        if k + 1 < p:
            row = r_new[k, k + 1 :].copy()
            r_new[k, k + 1 :] = c * row + s * work[k + 1 :]
            work[k + 1 :] = c * work[k + 1 :] - s * row
        op_counter[0] += p - k
    return r_new


def chud(R: TriangularFactor, v: np.ndarray) -> TriangularFactor:
    """Cholesky factor of R^T R + v v^T, via Givens rotations in O(p^2)."""
    v = np.asarray(v, dtype=float)
    if v.shape != (R.dim,):
        raise InvalidInputError(f"v must have shape ({R.dim},), got {v.shape}")
    if not np.isfinite(v).all():
        raise InvalidInputError("v must be finite")
    return _wrap_valid(_givens_update(R.entries, v))


def solve_upper(R: TriangularFactor, b: np.ndarray) -> np.ndarray:
    """Solve R x = b by backward substitution."""
    return _backward_substitute(R.entries, np.asarray(b, dtype=float))


def solve_upper_transpose(R: TriangularFactor, b: np.ndarray) -> np.ndarray:
    """Solve R^T x = b by forward substitution."""
    return _forward_substitute(R.entries, np.asarray(b, dtype=float))


@njit(cache=True)
def _back_subst_kernel(entries: np.ndarray, b: np.ndarray) -> np.ndarray:
    p = entries.shape[0]
    x = np.empty(p)
    for i in range(p - 1, -1, -1):
        acc = b[i]
        for j in range(i + 1, p):
            acc -= entries[i, j] * x[j]
        x[i] = acc / entries[i, i]
    return x


@njit(cache=True)
def _fwd_subst_kernel(entries: np.ndarray, b: np.ndarray) -> np.ndarray:
    p = entries.shape[0]
    x = np.empty(p)
    for i in range(p):
        acc = b[i]
        for j in range(i):
            acc -= entries[j, i] * x[j]  # row i of R^T is column i of R
        x[i] = acc / entries[i, i]
    return x


def _backward_substitute(entries: np.ndarray, b: np.ndarray, op_counter=None) -> np.ndarray:
    p = entries.shape[0]
    if b.shape != (p,):
        raise InvalidInputError(f"b must have shape ({p},), got {b.shape}")
    if not np.isfinite(b).all():
        raise InvalidInputError("b must be finite")
    if op_counter is None:
        return _back_subst_kernel(entries, b)
    x = np.empty(p)
    for i in range(p - 1, -1, -1):
        acc = b[i]
        for j in range(i + 1, p):
            acc -= entries[i, j] * x[j]
        x[i] = acc / entries[i, i]
        op_counter[0] += p - i
    return x


def _forward_substitute(entries: np.ndarray, b: np.ndarray, op_counter=None) -> np.ndarray:
    p = entries.shape[0]
    if b.shape != (p,):
        raise InvalidInputError(f"b must have shape ({p},), got {b.shape}")
    if not np.isfinite(b).all():
        raise InvalidInputError("b must be finite")
    if op_counter is None:
        return _fwd_subst_kernel(entries, b)
    x = np.empty(p)
    for i in range(p):
        acc = b[i]
        for j in range(i):
            acc -= entries[j, i] * x[j]
        x[i] = acc / entries[i, i]
        op_counter[0] += i + 1
    return x


def project_orthogonal(J: OrthonormalColumns, v: np.ndarray) -> np.ndarray:
    """Component of v orthogonal to the columns of J; v itself if J is empty."""
    v = np.asarray(v, dtype=float)
    if J.ncols == 0:
        return v.copy()
    return v - J.columns @ (J.columns.T @ v)


def append_orthonormal_column(J: OrthonormalColumns, g_star: np.ndarray) -> OrthonormalColumns:
    """Extend J with g_star / ||g_star||.

    The caller must pass g_star already orthogonal to the columns of J
    (project first); a norm below 1e-12 raises DegenerateDirectionError.
    """
    if J.ncols >= J.dim - 1:
        raise InvalidInputError(f"cannot exceed p-1={J.dim - 1} columns")
    g_star = np.asarray(g_star, dtype=float)
    nrm = float(np.linalg.norm(g_star))
    if not np.isfinite(nrm) or nrm < DEGENERATE_NORM:
        raise DegenerateDirectionError(f"direction norm {nrm} too small to normalize")
    return OrthonormalColumns(np.column_stack([J.columns, g_star / nrm]))
