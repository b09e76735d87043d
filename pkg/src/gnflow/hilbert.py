"""Finite-dimensional real Hilbert space primitives.

Vectors are 1-D float64 arrays, operators are dense square float64
matrices, and the inner product is the Euclidean one (so the adjoint is
the transpose). Quadrature weights of discretized integral operators are
folded into the operator entries by the problem definitions, never into
the inner product.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg


class FactorizationError(RuntimeError):
    """Raised when a matrix is not positive definite within tolerance.

    Attributes:
        smallest_pivot: smallest eigenvalue of the symmetrized matrix,
            evaluated after the failed factorization attempt.
    """

    def __init__(self, message: str, smallest_pivot: float):
        super().__init__(message)
        self.smallest_pivot = smallest_pivot


class PowerIterationError(RuntimeError):
    """Raised when the spectral-norm iteration fails to settle.

    Attributes:
        estimate: best estimate available at abort time.
    """

    def __init__(self, message: str, estimate: float):
        super().__init__(message)
        self.estimate = estimate


def as_vector(v, dim: int | None = None) -> np.ndarray:
    """Validate and return ``v`` as a 1-D float64 array.

    Raises ValueError on wrong dimensionality, dimension mismatch with
    ``dim``, or non-finite entries.
    """
    arr = np.asarray(v, dtype=float)
    if arr.ndim != 1:
        raise ValueError(f"expected a 1-D vector, got shape {arr.shape}")
    if arr.size < 1:
        raise ValueError("vector must have length >= 1")
    if dim is not None and arr.size != dim:
        raise ValueError(f"vector has length {arr.size}, expected {dim}")
    if not np.all(np.isfinite(arr)):
        bad = int(np.flatnonzero(~np.isfinite(arr))[0])
        raise ValueError(f"vector has non-finite entry at index {bad}")
    return arr


def as_operator(A, dim: int | None = None) -> np.ndarray:
    """Validate and return ``A`` as a dense square float64 matrix."""
    arr = np.asarray(A, dtype=float)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {arr.shape}")
    if dim is not None and arr.shape[0] != dim:
        raise ValueError(f"operator is {arr.shape[0]}x{arr.shape[0]}, expected {dim}x{dim}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("operator has non-finite entries")
    return arr


def identity(n: int) -> np.ndarray:
    return np.eye(n)


def inner(u, v) -> float:
    """Euclidean inner product of two vectors of equal length."""
    u = as_vector(u)
    v = as_vector(v, dim=u.size)
    return float(np.dot(u, v))


def norm(v) -> float:
    """Norm induced by :func:`inner`."""
    return float(np.linalg.norm(as_vector(v)))


def apply_operator(A, v) -> np.ndarray:
    """Matrix-vector product A v."""
    A = as_operator(A)
    v = as_vector(v, dim=A.shape[0])
    return A @ v


def adjoint(A) -> np.ndarray:
    """Adjoint of a dense operator; the transpose in Euclidean coordinates."""
    return as_operator(A).T.copy()


def solve_regularized(A, eps: float, rhs) -> np.ndarray:
    """Solve (A + eps*I) y = rhs by Cholesky factorization.

    ``A`` must be such that A + eps*I is symmetric positive definite (the
    Gram form F'*F' always is). One step of iterative refinement keeps the
    residual near 1e-16 * ||rhs|| / relative conditioning.

    Args:
        A: square matrix, Gram form or otherwise SPD-compatible.
        eps: positive shift.
        rhs: right-hand side vector.

    Raises:
        FactorizationError: A + eps*I is not positive definite; the
            message reports the smallest pivot found.
    """
    A = as_operator(A)
    rhs = as_vector(rhs, dim=A.shape[0])
    if not eps > 0:
        raise ValueError(f"eps must be positive, got {eps}")
    M = A + eps * np.eye(A.shape[0])
    M = 0.5 * (M + M.T)
    try:
        chol = scipy.linalg.cho_factor(M, lower=True, check_finite=False)
    except scipy.linalg.LinAlgError as exc:
        pivot = float(np.min(np.linalg.eigvalsh(M)))
        raise FactorizationError(
            f"operator plus {eps}*I is not positive definite "
            f"(smallest pivot {pivot:.6e})",
            smallest_pivot=pivot,
        ) from exc
    y = scipy.linalg.cho_solve(chol, rhs, check_finite=False)
    # One refinement pass; cheap and tightens the residual for
    # ill-conditioned shifts.
    r = rhs - M @ y
    y = y + scipy.linalg.cho_solve(chol, r, check_finite=False)
    return y


_TINY = float(np.finfo(float).tiny)


def op_norm(A, seed: int = 0, rtol: float = 1e-9, max_iter: int = 20000) -> float:
    """Spectral norm of ``A`` by power iteration on A^T A.

    The iteration runs on (A^T A / m)^64 with m the largest entry
    magnitude: six squarings sharpen the spectral gap 128-fold, so even
    tightly clustered spectra settle in a few dozen iterations. For the
    PSD Gram matrix the largest entry sits on the diagonal, which keeps
    lambda_max(M/m) in [1, n] and the powers inside float range.
    Deterministic for a fixed ``seed`` (start vector); the internal
    stopping tolerance is tighter than the advertised 1e-6 relative
    accuracy.

    Raises:
        PowerIterationError: the Rayleigh quotient did not settle within
            ``max_iter`` iterations; carries the best estimate.
    """
    A = as_operator(A)
    n = A.shape[0]
    M = A.T @ A
    M = 0.5 * (M + M.T)
    m = float(np.max(np.abs(M)))
    if m == 0.0:
        return 0.0
    M8 = M / m
    for _ in range(6):
        M8 = M8 @ M8

    def to_norm(ray: float) -> float:
        # ray approximates lambda_max(M/m)^64; undo the powers and scale.
        return float(np.sqrt(m * max(ray, 0.0) ** (1.0 / 64.0)))

    rng = np.random.default_rng(seed)
    v = rng.standard_normal(n)
    nv = float(np.sqrt(v @ v))
    if nv == 0.0:
        v = np.ones(n)
        nv = float(np.sqrt(n))
    v = v / nv
    w = M8 @ v
    ray = float(v @ w)
    stable = 0
    for _ in range(max_iter):
        nw = float(np.sqrt(w @ w))
        if nw == 0.0:
            return 0.0
        v = w / nw
        w = M8 @ v
        new = float(v @ w)
        if abs(new - ray) <= rtol * max(new, _TINY):
            stable += 1
            if stable >= 2:
                return to_norm(new)
        else:
            stable = 0
        ray = new
    raise PowerIterationError(
        f"power iteration did not settle after {max_iter} iterations "
        f"(best estimate {to_norm(ray):.6e})",
        estimate=to_norm(ray),
    )
