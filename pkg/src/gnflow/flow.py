"""Right-hand sides of the two continuous Gauss-Newton methods.

The direct flow inverts the regularized normal operator at every
evaluation:

    x' = -[F'(x)* F'(x) + eps(t) I]^{-1} [F'(x)* F(x) + eps(t)(x - x0)]

The coupled flow carries an evolving approximation B(t) of that inverse
instead of factorizing:

    x' = -B [F'(x)* F(x) + eps(t)(x - x0)]
    B' = -[(F'(x)* F'(x) + eps(t) I) B - I]

When B equals the exact regularized inverse the two x-flows coincide and
B' vanishes, which the tests use as an equivalence oracle.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import hilbert
from .problem import NonlinearProblem, eval_F, jacobian


@dataclass
class SolverState:
    """Flow time, iterate, and (for the coupled method) the inverse track."""

    t: float
    x: np.ndarray
    B: Optional[np.ndarray] = None

    def __post_init__(self):
        self.x = hilbert.as_vector(self.x)
        if self.B is not None:
            self.B = hilbert.as_operator(self.B, dim=self.x.size)
        if self.t < 0:
            raise ValueError(f"t must be nonnegative, got {self.t}")


@dataclass
class FlowDiagnostics:
    """Norms recorded along a trajectory.

    Fields requiring the known solution (err_norm, lambda_norm, D_norm)
    or the inverse track (B_norm, lambda_norm, inverse_residual, D_norm)
    are None when unavailable.
    """

    eps: float
    residual_norm: float
    err_norm: Optional[float] = None
    B_norm: Optional[float] = None
    lambda_norm: Optional[float] = None
    inverse_residual: Optional[float] = None
    D_norm: Optional[float] = None


def gauss_newton_operator(p: NonlinearProblem, x, eps: float) -> np.ndarray:
    """F'(x)* F'(x) + eps*I, symmetrized; smallest eigenvalue >= eps."""
    if not eps > 0:
        raise ValueError(f"eps must be positive, got {eps}")
    J = jacobian(p, x)
    M = J.T @ J
    M = 0.5 * (M + M.T) + eps * np.eye(p.dim)
    return M


def direct_rhs(p: NonlinearProblem, s, x0, x, t: float) -> np.ndarray:
    """x-velocity of the inversion-based flow at time t."""
    x0 = hilbert.as_vector(x0, dim=p.dim)
    x = hilbert.as_vector(x, dim=p.dim)
    eps = s.eps(t)
    J = jacobian(p, x)
    grad = J.T @ eval_F(p, x) + eps * (x - x0)
    return -hilbert.solve_regularized(J.T @ J, eps, grad)


def coupled_rhs(
    p: NonlinearProblem, s, x0, st: SolverState, gain: float = 1.0
) -> tuple[np.ndarray, np.ndarray]:
    """(x', B') of the inverse-tracking flow at state ``st``.

    ``gain`` scales the B-update for experiments; the convergence
    certificate assumes the default 1.0.
    """
    if st.B is None:
        raise ValueError("coupled flow needs a state with the inverse track B")
    x0 = hilbert.as_vector(x0, dim=p.dim)
    eps = s.eps(st.t)
    J = jacobian(p, st.x)
    grad = J.T @ eval_F(p, st.x) + eps * (st.x - x0)
    x_dot = -st.B @ grad
    M = J.T @ J + eps * np.eye(p.dim)
    B_dot = -gain * (M @ st.B - np.eye(p.dim))
    return x_dot, B_dot


def mismatch_operator(p: NonlinearProblem, xhat, B, eps: float) -> np.ndarray:
    """I - B [F'(xhat)* F'(xhat) + eps*I], the inverse-tracking defect at
    the solution point."""
    xhat = hilbert.as_vector(xhat, dim=p.dim)
    B = hilbert.as_operator(B, dim=p.dim)
    Jh = jacobian(p, xhat)
    return np.eye(p.dim) - B @ (Jh.T @ Jh + eps * np.eye(p.dim))


def initial_inverse(p: NonlinearProblem, x0, eps0: float) -> np.ndarray:
    """Exact regularized inverse at the initial iterate.

    Built column-by-column with the SPD solver; the standard start for
    the coupled flow.
    """
    x0 = hilbert.as_vector(x0, dim=p.dim)
    J = jacobian(p, x0)
    G = J.T @ J
    cols = [hilbert.solve_regularized(G, eps0, e) for e in np.eye(p.dim)]
    return np.column_stack(cols)


def scaled_identity_inverse(p: NonlinearProblem, x0, eps0: float) -> np.ndarray:
    """I / (||F'(x0)||^2 + eps0), the no-initial-inversion start."""
    x0 = hilbert.as_vector(x0, dim=p.dim)
    n1 = hilbert.op_norm(jacobian(p, x0))
    return np.eye(p.dim) / (n1**2 + eps0)


def diagnostics(
    p: NonlinearProblem, s, st: SolverState, xhat=None
) -> FlowDiagnostics:
    """Fill every norm available for the state ``st``.

    lambda_norm is evaluated at the fixed solution point, not at the
    current iterate; inverse_residual uses the current iterate (it equals
    ||B'|| for unit gain).
    """
    eps = s.eps(st.t)
    residual = float(np.linalg.norm(eval_F(p, st.x)))
    out = FlowDiagnostics(eps=eps, residual_norm=residual)
    if xhat is not None:
        xhat = hilbert.as_vector(xhat, dim=p.dim)
        out.err_norm = float(np.linalg.norm(st.x - xhat))
    if st.B is not None:
        out.B_norm = hilbert.op_norm(st.B)
        M = gauss_newton_operator(p, st.x, eps)
        out.inverse_residual = hilbert.op_norm(M @ st.B - np.eye(p.dim))
        if xhat is not None:
            Jh = jacobian(p, xhat)
            Gh = Jh.T @ Jh
            out.lambda_norm = hilbert.op_norm(
                np.eye(p.dim) - st.B @ (Gh + eps * np.eye(p.dim))
            )
            out.D_norm = hilbert.op_norm(st.B @ Gh)
    return out
