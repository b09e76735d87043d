"""Convergence certificates and the integral-inequality checks behind them.

``certify`` evaluates, for a concrete problem instance, every hypothesis
that guarantees the coupled flow stays inside the shrinking ball
||x(t) - xhat|| < R*eps(t): derivative bounds on a ball, the schedule
decay constant, the initial inverse quality, the contraction constant k,
the rate constant lambda, and the source-type condition. The two
``*_check`` functions numerically verify the estimates that argument
rests on: a Riccati-type envelope and an operator Gronwall bound.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import hilbert
from .flow import mismatch_operator
from .problem import BallBounds, NonlinearProblem, estimate_bounds, jacobian

#: Relative spectral cutoff for the source-condition pseudo-inverse. The
#: range of F'(xhat)*F'(xhat) is generally not closed, so membership is
#: reported as a thresholded residual rather than decided exactly.
SOURCE_TOL = 1e-8

#: Safety factor applied on top of the canonical ball radius; the radius
#: inequality holds with equality at the canonical choice, so a bare
#: float comparison there would be a coin flip.
R_INFLATION = 1e-6

CHECK_NAMES = (
    "contraction",       # k + b*eps0 < 1
    "radius",            # 1/R <= lambda
    "source_norm",       # lambda < (1-k-b*eps0) / (2*(k+2+eps0*||B0||)*||w||)
    "initial_offset",    # lambda < eps0 / ||x0 - xhat||
    "source_residual",   # ||F'*F' w - (xhat-x0)|| <= tol * ||xhat-x0||
)


@dataclass
class Certificate:
    """Computed constants and hypothesis checks for one problem instance."""

    N1: float
    N2: float
    b: float
    eps0: float
    B0_norm: float
    Lambda0_norm: float
    k: float
    R: float
    lam: float
    w: np.ndarray
    w_norm: float
    source_residual: float
    checks: dict
    overall: bool
    notes: str = ""


def compute_k(N1, N2, R, b, eps0, B0, p: NonlinearProblem, xhat):
    """Contraction constant k and the initial mismatch norm.

    k = 2*N1*N2*R + b + eps0*||B0|| + ||I - B0 (F'(xhat)*F'(xhat) + eps0 I)||
    """
    for name, val in (("N1", N1), ("N2", N2), ("R", R), ("b", b), ("eps0", eps0)):
        if not val > 0:
            raise ValueError(f"{name} must be positive, got {val}")
    B0 = hilbert.as_operator(B0, dim=p.dim)
    lambda0_norm = hilbert.op_norm(mismatch_operator(p, xhat, B0, eps0))
    b0_norm = hilbert.op_norm(B0)
    k = 2.0 * N1 * N2 * R + b + eps0 * b0_norm + lambda0_norm
    return k, lambda0_norm


def canonical_R(N1, N2, b, eps0, B0_norm, Lambda0_norm) -> float:
    """The ball radius that makes the radius inequality sharp.

    R = (1 - b - eps0*||B0|| - ||Lambda0|| - b*eps0)
        / ((5 + 3*eps0*||B0||) * N1 * N2)

    With this R the contraction check is equivalent to the numerator
    being positive, and the lower bound 1/R <= lambda holds with
    equality.
    """
    if N1 * N2 <= 0:
        raise ValueError("derivative bounds N1, N2 must be positive")
    numerator = 1.0 - b - eps0 * B0_norm - Lambda0_norm - b * eps0
    if numerator <= 0:
        raise ValueError(
            "constants too large for a convergence certificate "
            f"(radius numerator {numerator:.6e} <= 0)"
        )
    return numerator / ((5.0 + 3.0 * eps0 * B0_norm) * N1 * N2)


def solve_source(
    p: NonlinearProblem, xhat, x0, tol: float = SOURCE_TOL
) -> tuple[np.ndarray, float]:
    """Minimum-norm w with F'(xhat)*F'(xhat) w ~= xhat - x0.

    Spectral pseudo-inverse with relative cutoff ``tol``; returns the
    candidate w and the residual ||F'*F' w - (xhat - x0)||. The source
    condition is taken to hold when the residual is below
    tol * ||xhat - x0||.
    """
    xhat = hilbert.as_vector(xhat, dim=p.dim)
    x0 = hilbert.as_vector(x0, dim=p.dim)
    rhs = xhat - x0
    if np.linalg.norm(rhs) == 0.0:
        return np.zeros(p.dim), 0.0
    Jh = jacobian(p, xhat)
    M = Jh.T @ Jh
    M = 0.5 * (M + M.T)
    evals, evecs = np.linalg.eigh(M)
    cutoff = tol * max(float(evals[-1]), 0.0)
    coeff = evecs.T @ rhs
    inv = np.where(evals > cutoff, coeff / np.where(evals > cutoff, evals, 1.0), 0.0)
    w = evecs @ inv
    residual = float(np.linalg.norm(M @ w - rhs))
    return w, residual


def certify(
    p: NonlinearProblem,
    xhat,
    x0,
    s,
    B0,
    bounds: BallBounds,
    R: float,
) -> Certificate:
    """Evaluate every certificate inequality; failures are recorded, not raised.

    The checks, in order: contraction (k + b*eps0 < 1), the radius lower
    bound (1/R <= lambda), the source-norm bound, the initial-offset
    bound, and the source residual. ``overall`` is their conjunction.
    When ||w|| = 0 the source-norm bound is vacuous and counts as a pass;
    when the contraction margin 1 - k - b*eps0 is nonpositive, lambda is
    undefined (recorded as inf) and the lambda-based checks fail.
    """
    xhat = hilbert.as_vector(xhat, dim=p.dim)
    x0 = hilbert.as_vector(x0, dim=p.dim)
    B0 = hilbert.as_operator(B0, dim=p.dim)
    if not R > 0:
        raise ValueError(f"R must be positive, got {R}")

    eps0 = s.eps(0.0)
    b = s.b_constant()
    b0_norm = hilbert.op_norm(B0)
    k, lambda0_norm = compute_k(bounds.N1, bounds.N2, R, b, eps0, B0, p, xhat)
    w, source_residual = solve_source(p, xhat, x0)
    w_norm = float(np.linalg.norm(w))
    offset = float(np.linalg.norm(x0 - xhat))

    margin = 1.0 - k - b * eps0
    lam = math.inf
    if margin > 0:
        lam = 3.0 * bounds.N1 * bounds.N2 * (1.0 + eps0 * b0_norm) / margin

    checks = {}
    checks["contraction"] = k + b * eps0 < 1.0
    if margin > 0:
        checks["radius"] = 1.0 / R <= lam
        if w_norm == 0.0:
            checks["source_norm"] = True
        else:
            checks["source_norm"] = lam < margin / (
                2.0 * (k + 2.0 + eps0 * b0_norm) * w_norm
            )
        checks["initial_offset"] = True if offset == 0.0 else lam < eps0 / offset
    else:
        checks["radius"] = False
        checks["source_norm"] = False
        checks["initial_offset"] = False
    if offset == 0.0:
        checks["source_residual"] = True
    else:
        checks["source_residual"] = source_residual <= SOURCE_TOL * offset

    notes = ""
    if w_norm > 0.0 and source_residual > 0.0:
        notes = "w is the minimum-norm candidate from a spectral cutoff pseudo-inverse"

    return Certificate(
        N1=bounds.N1,
        N2=bounds.N2,
        b=b,
        eps0=eps0,
        B0_norm=b0_norm,
        Lambda0_norm=lambda0_norm,
        k=k,
        R=R,
        lam=lam,
        w=w,
        w_norm=w_norm,
        source_residual=source_residual,
        checks=checks,
        overall=all(checks.values()),
        notes=notes,
    )


def certify_with_canonical_R(
    p: NonlinearProblem,
    xhat,
    x0,
    s,
    B0,
    samples: int = 64,
    seed: int = 0,
) -> tuple[Certificate, BallBounds]:
    """Certify with R chosen canonically, self-consistently with the ball.

    The derivative bounds must cover U(xhat, R*eps(0)) while R itself
    depends on them, so the sampling radius is grown until it contains
    the certified ball. R is inflated by ``R_INFLATION`` relative so the
    sharp radius inequality holds strictly in floating point (a larger R
    keeps the certificate valid).

    Raises ValueError when no positive canonical radius exists or the
    radius iteration does not close.
    """
    xhat = hilbert.as_vector(xhat, dim=p.dim)
    x0 = hilbert.as_vector(x0, dim=p.dim)
    B0 = hilbert.as_operator(B0, dim=p.dim)

    eps0 = s.eps(0.0)
    b = s.b_constant()
    b0_norm = hilbert.op_norm(B0)
    lambda0_norm = hilbert.op_norm(mismatch_operator(p, xhat, B0, eps0))

    radius = max(1.0, 2.0 * float(np.linalg.norm(x0 - xhat)))
    for _ in range(8):
        bounds = estimate_bounds(p, xhat, radius, samples=samples, seed=seed)
        R = canonical_R(bounds.N1, bounds.N2, b, eps0, b0_norm, lambda0_norm)
        R_used = R * (1.0 + R_INFLATION)
        if R_used * eps0 <= radius:
            return certify(p, xhat, x0, s, B0, bounds, R_used), bounds
        radius = 1.1 * R_used * eps0
    raise ValueError("ball radius iteration did not close after 8 passes")


def riccati_envelope_check(v_samples, mu: Callable[[float], float]) -> bool:
    """True iff v(t) < 1/mu(t) at every sample.

    ``v_samples`` is a sequence of (t, v) pairs from an integrated
    trajectory, ``mu`` the positive envelope function; the certificate
    argument instantiates mu(t) = lambda/eps(t) against v = ||x - xhat||.
    """
    samples = list(v_samples)
    if not samples:
        raise ValueError("v_samples must be nonempty")
    for t, v in samples:
        if v < 0:
            raise ValueError(f"v must be nonnegative, got {v} at t={t}")
        m = mu(t)
        if not m > 0:
            raise ValueError(f"mu(t) must be positive, got {m} at t={t}")
        if not v < 1.0 / m:
            return False
    return True


def gronwall_check(
    A_path: Callable[[float], np.ndarray],
    G_path: Callable[[float], np.ndarray],
    V0,
    gamma: Callable[[float], float],
    T: float,
    h: float = 0.01,
) -> float:
    """Max violation of the operator Gronwall bound along dV/dt = G - A V.

    The bound checked at every step time t is

        ||V(t)|| <= exp(-int_0^t gamma) * [int_0^t ||G(s)|| exp(int_0^s gamma) ds + ||V0||].

    V and both accumulated integrals are advanced together with RK4 so
    the quadrature matches the integration order; the constant
    coefficient case A = gamma*I, G = 0 then meets the bound with
    equality to integrator precision. ``gamma`` must lower-bound the
    symmetric part of A at every step time, verified by eigenvalue and
    reported as an error naming the first failing time.

    Returns max over step times of ||V(t)|| - bound(t); the lemma holds
    when this is at most a small positive tolerance.
    """
    V0 = hilbert.as_operator(V0)
    n = V0.shape[0]
    if not T > 0 or not h > 0:
        raise ValueError("T and h must be positive")
    n_steps = int(math.floor(T / h + 1e-9))

    def check_coercive(t: float) -> None:
        A = hilbert.as_operator(A_path(t), dim=n)
        g = gamma(t)
        if not g > 0:
            raise ValueError(f"gamma(t) must be positive, got {g} at t={t}")
        smallest = float(np.min(np.linalg.eigvalsh(0.5 * (A + A.T))))
        if smallest < g - 1e-10 * (1.0 + abs(g)):
            raise ValueError(
                f"coercivity fails at t={t}: smallest symmetric eigenvalue "
                f"{smallest:.6e} < gamma {g:.6e}"
            )

    def rhs(t, V, q, r):
        A = A_path(t)
        G = G_path(t)
        dV = G - A @ V
        dq = gamma(t)
        dr = hilbert.op_norm(np.asarray(G, dtype=float)) * math.exp(q)
        return dV, dq, dr

    V, q, r = V0.copy(), 0.0, 0.0
    v0_norm = hilbert.op_norm(V0)
    check_coercive(0.0)
    max_violation = hilbert.op_norm(V) - v0_norm  # zero at t = 0
    for k in range(1, n_steps + 1):
        t = (k - 1) * h
        dV1, dq1, dr1 = rhs(t, V, q, r)
        dV2, dq2, dr2 = rhs(t + h / 2, V + h / 2 * dV1, q + h / 2 * dq1, r + h / 2 * dr1)
        dV3, dq3, dr3 = rhs(t + h / 2, V + h / 2 * dV2, q + h / 2 * dq2, r + h / 2 * dr2)
        dV4, dq4, dr4 = rhs(t + h, V + h * dV3, q + h * dq3, r + h * dr3)
        V = V + (h / 6.0) * (dV1 + 2 * dV2 + 2 * dV3 + dV4)
        q = q + (h / 6.0) * (dq1 + 2 * dq2 + 2 * dq3 + dq4)
        r = r + (h / 6.0) * (dr1 + 2 * dr2 + 2 * dr3 + dr4)
        tk = k * h
        check_coercive(tk)
        bound = math.exp(-q) * (r + v0_norm)
        max_violation = max(max_violation, hilbert.op_norm(V) - bound)
    return float(max_violation)
