"""Deterministic dense linear algebra on 64-bit real matrices.

Matrices are plain C-ordered float64 numpy arrays of shape (rows, cols);
the constructors here are the only sanctioned way to admit external data,
and they reject NaN/Inf outright.  The SVD is a one-sided Jacobi with a
fixed cyclic sweep order and a fixed sign convention (largest-magnitude
entry of each left singular vector made non-negative, ties broken by the
lowest row index), so identical inputs always produce bit-identical
factors.  Inputs with more columns than rows are transposed internally and
the roles of u and v swapped.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._jacobi import MAX_SWEEPS, SWEEP_TOL, jacobi_sweeps

ZERO_SINGULAR_CUTOFF = 1e-12


class NonFiniteError(ValueError):
    """Raised when a matrix or gradient contains NaN or Inf entries."""


class ShapeError(ValueError):
    """Raised on dimension mismatches or malformed matrix data."""


class RankRangeError(ValueError):
    """Raised when a requested rank falls outside 1 <= r < k."""


class UndefinedConditionNumberError(ValueError):
    """Raised when the condition number of a zero matrix is requested."""


class SvdConvergenceError(RuntimeError):
    """Raised if the Jacobi sweeps fail to converge (should not happen
    for finite input at sane sizes)."""


def matrix(rows: int, cols: int, data) -> np.ndarray:
    """Build a rows x cols float64 matrix from row-major data."""
    if rows < 1 or cols < 1:
        raise ShapeError(f"matrix dimensions must be positive, got {rows}x{cols}")
    flat = np.asarray(data, dtype=np.float64).reshape(-1)
    if flat.size != rows * cols:
        raise ShapeError(
            f"data length {flat.size} does not match {rows}x{cols}={rows * cols}"
        )
    w = flat.reshape(rows, cols).copy()
    return check_matrix(w)


def check_matrix(w: np.ndarray, what: str = "matrix") -> np.ndarray:
    """Validate an existing array as a finite 2-D float64 matrix."""
    w = np.ascontiguousarray(w, dtype=np.float64)
    if w.ndim != 2 or w.shape[0] < 1 or w.shape[1] < 1:
        raise ShapeError(f"{what} must be 2-D with positive dimensions, got shape {w.shape}")
    if not np.isfinite(w).all():
        raise NonFiniteError(f"{what} contains non-finite entries")
    return w


def frobenius_norm(w: np.ndarray) -> float:
    """sqrt of the sum of squared entries."""
    w = check_matrix(w)
    return float(np.sqrt(np.sum(w * w)))


def spectral_norm(w: np.ndarray) -> float:
    """Largest singular value."""
    return float(svd(w).s[0])


@dataclass(frozen=True)
class SvdResult:
    """Compact SVD: u (m x k) and v (n x k) with orthonormal columns, and
    the singular values s in non-increasing order, k = min(m, n).

    Truncated slices produced by `truncate` reuse this container with
    k replaced by the slice width.
    """

    u: np.ndarray
    s: np.ndarray
    v: np.ndarray

    @property
    def rank_width(self) -> int:
        return self.s.shape[0]

    def reconstruct(self) -> np.ndarray:
        return (self.u * self.s) @ self.v.T


def _complete_basis(u: np.ndarray, norms: np.ndarray) -> None:
    """Fill columns whose singular value is exactly zero with an orthonormal
    completion, scanning standard basis vectors in index order."""
    m = u.shape[0]
    for i in np.flatnonzero(norms == 0.0):
        for e in range(m):
            cand = np.zeros(m)
            cand[e] = 1.0
            cand -= u @ (u.T @ cand)
            nrm = np.sqrt(np.sum(cand * cand))
            if nrm > 0.5:
                cand /= nrm
                cand -= u @ (u.T @ cand)
                u[:, i] = cand / np.sqrt(np.sum(cand * cand))
                break
        else:
            raise SvdConvergenceError("failed to complete orthonormal basis")


def svd(w: np.ndarray) -> SvdResult:
    """One-sided Jacobi SVD with deterministic ordering and signs.

    Reconstruction satisfies ||u diag(s) v^T - w||_F <= 1e-10 max(1, ||w||_F)
    and both factors are orthonormal to 1e-10 in Frobenius norm.
    """
    w = check_matrix(w)
    m, n = w.shape
    transposed = m < n
    a = (w.T if transposed else w).copy()
    v = np.eye(a.shape[1])
    sweeps = jacobi_sweeps(a, v, SWEEP_TOL, MAX_SWEEPS)
    if sweeps < 0:
        raise SvdConvergenceError(
            f"Jacobi sweeps did not converge within {MAX_SWEEPS} iterations"
        )
    norms = np.sqrt(np.sum(a * a, axis=0))
    order = np.argsort(-norms, kind="stable")
    norms = norms[order]
    a = a[:, order]
    v = v[:, order]
    u = np.zeros_like(a)
    nonzero = norms > 0.0
    u[:, nonzero] = a[:, nonzero] / norms[nonzero]
    if not nonzero.all():
        _complete_basis(u, norms)
    if transposed:
        u, v = v, u
    for i in range(u.shape[1]):
        peak = int(np.argmax(np.abs(u[:, i])))
        if u[peak, i] < 0.0:
            u[:, i] = -u[:, i]
            v[:, i] = -v[:, i]
    return SvdResult(u=u, s=norms, v=v)


def truncate(decomposition: SvdResult, r: int) -> tuple[SvdResult, SvdResult]:
    """Split a decomposition into its top-r principal part and the residual.

    The two parts carry disjoint slices of the parent's singular triplets,
    so principal.reconstruct() + residual.reconstruct() reproduces the
    original matrix.
    """
    k = decomposition.rank_width
    if not 1 <= r < k:
        raise RankRangeError(f"rank must satisfy 1 <= r < {k}, got {r}")
    principal = SvdResult(
        u=decomposition.u[:, :r].copy(),
        s=decomposition.s[:r].copy(),
        v=decomposition.v[:, :r].copy(),
    )
    residual = SvdResult(
        u=decomposition.u[:, r:].copy(),
        s=decomposition.s[r:].copy(),
        v=decomposition.v[:, r:].copy(),
    )
    return principal, residual


def condition_number(w: np.ndarray, rank_hint: int | None = None) -> float:
    """Ratio of the largest to the smallest nonzero singular value.

    Values below 1e-12 * sigma_max are treated as zero.  With rank_hint=r
    (for a matrix known to have rank r by construction) the ratio
    s[0] / s[r-1] is returned instead of applying the cutoff.
    """
    result = svd(w)
    smax = float(result.s[0])
    if smax == 0.0:
        raise UndefinedConditionNumberError("condition number of the zero matrix is undefined")
    if rank_hint is not None:
        if not 1 <= rank_hint <= result.rank_width:
            raise RankRangeError(
                f"rank_hint must satisfy 1 <= r <= {result.rank_width}, got {rank_hint}"
            )
        smin = float(result.s[rank_hint - 1])
        if smin == 0.0:
            raise UndefinedConditionNumberError(
                f"singular value {rank_hint} is exactly zero; rank_hint too large"
            )
        return smax / smin
    above = result.s[result.s > ZERO_SINGULAR_CUTOFF * smax]
    return smax / float(above[-1])


def format_value(x: float) -> str:
    """Decimal text with 17 significant digits (round-trips float64 exactly)."""
    return f"{float(x):.17g}"


def save_matrix_csv(path, w: np.ndarray) -> None:
    w = check_matrix(w)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(matrix_to_csv(w))


def matrix_to_csv(w: np.ndarray) -> str:
    return "\n".join(",".join(format_value(x) for x in row) for row in w) + "\n"


def load_matrix_csv(path) -> np.ndarray:
    with open(path, "r", encoding="utf-8") as fh:
        return matrix_from_csv(fh.read())


def matrix_from_csv(text: str) -> np.ndarray:
    rows = []
    for line in text.strip().splitlines():
        rows.append([float(cell) for cell in line.split(",")])
    if not rows:
        raise ShapeError("empty matrix text")
    width = len(rows[0])
    if any(len(row) != width for row in rows):
        raise ShapeError("ragged rows in matrix text")
    return check_matrix(np.array(rows, dtype=np.float64))
