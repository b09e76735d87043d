"""Nonlinear operators F: R^n -> R^n with derivative oracles and ball bounds.

A problem bundles the forward map, an optional analytic Jacobian (with a
finite-difference fallback), and an optional known solution used by the
error monitors and the convergence certificate.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import hilbert

#: Default step for the finite-difference Jacobian fallback.
FD_DEFAULT_STEP = 1e-6

#: Conservative inflation applied to sampled derivative bounds.
BOUND_INFLATION = 1.1

# Sampled second-derivative bounds of affine problems come out exactly
# zero, which would send the canonical ball radius to infinity; keep a
# tiny positive floor (far below the 1e-6 scale tests treat as "zero").
N2_FLOOR = 1e-8


@dataclass
class NonlinearProblem:
    """F: R^n -> R^n with optional Jacobian and known solution.

    Args:
        dim: ambient dimension n.
        f: forward map, vector -> vector.
        jac: analytic Jacobian, vector -> matrix; finite differences are
            used when absent.
        known_solution: a root of F, when one is known. Enables the error
            monitors and certificate features.
        label: identifier used by the gallery registry and the CLI.
        validate_solution: check ||F(known_solution)|| at construction.
            Noisy data variants keep the clean solution for error
            reporting and disable the check.
    """

    dim: int
    f: Callable[[np.ndarray], np.ndarray]
    jac: Optional[Callable[[np.ndarray], np.ndarray]] = None
    known_solution: Optional[np.ndarray] = None
    label: str = ""
    validate_solution: bool = field(default=True, repr=False)

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError(f"dim must be >= 1, got {self.dim}")
        if self.known_solution is not None:
            self.known_solution = hilbert.as_vector(self.known_solution, dim=self.dim)
            if self.validate_solution:
                res = np.linalg.norm(self.f(self.known_solution))
                bound = 1e-8 * (1.0 + np.linalg.norm(self.known_solution))
                if res > bound:
                    raise ValueError(
                        f"known_solution is not a root: ||F(xhat)|| = {res:.3e} "
                        f"> {bound:.3e}"
                    )


@dataclass(frozen=True)
class BallBounds:
    """Sampled derivative bounds on a closed ball around ``center``.

    N1 bounds ||F'(x)|| and N2 bounds the second-derivative norm over the
    ball, both inflated by :data:`BOUND_INFLATION`. Sampling certifies the
    bounds only statistically; ``samples`` records how hard we looked.
    """

    center: np.ndarray
    radius: float
    N1: float
    N2: float
    samples: int


def eval_F(p: NonlinearProblem, x) -> np.ndarray:
    """Evaluate F(x), rejecting non-finite inputs and outputs."""
    x = hilbert.as_vector(x, dim=p.dim)
    y = np.asarray(p.f(x), dtype=float)
    if y.shape != (p.dim,):
        raise ValueError(f"F returned shape {y.shape}, expected ({p.dim},)")
    if not np.all(np.isfinite(y)):
        bad = int(np.flatnonzero(~np.isfinite(y))[0])
        raise ValueError(f"F(x) has non-finite component at index {bad}")
    return y


def fd_jacobian(p: NonlinearProblem, x, h: float = FD_DEFAULT_STEP) -> np.ndarray:
    """Central-difference Jacobian, column by column.

    Column j is (F(x + h e_j) - F(x - h e_j)) / (2h); exact for affine F.
    """
    if not h > 0:
        raise ValueError(f"h must be positive, got {h}")
    x = hilbert.as_vector(x, dim=p.dim)
    J = np.empty((p.dim, p.dim))
    for j in range(p.dim):
        step = np.zeros(p.dim)
        step[j] = h
        J[:, j] = (eval_F(p, x + step) - eval_F(p, x - step)) / (2.0 * h)
    return J


def jacobian(p: NonlinearProblem, x) -> np.ndarray:
    """F'(x), analytic when provided, else central differences."""
    x = hilbert.as_vector(x, dim=p.dim)
    if p.jac is None:
        return fd_jacobian(p, x)
    J = np.asarray(p.jac(x), dtype=float)
    if J.shape != (p.dim, p.dim):
        raise ValueError(f"jacobian returned shape {J.shape}, expected square of dim {p.dim}")
    if not np.all(np.isfinite(J)):
        raise ValueError("jacobian has non-finite entries")
    return J


def _ball_points(center: np.ndarray, radius: float, samples: int, rng) -> np.ndarray:
    """Uniform samples in the closed ball, rows are points."""
    n = center.size
    dirs = rng.standard_normal((samples, n))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    radii = radius * rng.uniform(size=samples) ** (1.0 / n)
    return center[None, :] + radii[:, None] * dirs


def estimate_bounds(
    p: NonlinearProblem,
    center,
    radius: float,
    samples: int = 64,
    seed: int = 0,
    inflation: float = BOUND_INFLATION,
) -> BallBounds:
    """Sample derivative norms over the ball U(center, radius).

    N1 is the largest sampled ||F'(x)||; N2 differences the Jacobian
    along sampled unit directions with step 1e-4 * radius. Both are
    inflated by ``inflation`` (default 10%) against sampling optimism.
    Deterministic per seed.
    """
    center = hilbert.as_vector(center, dim=p.dim)
    if not radius > 0:
        raise ValueError(f"radius must be positive, got {radius}")
    if samples < 1:
        raise ValueError(f"samples must be >= 1, got {samples}")
    if inflation < 1.0:
        raise ValueError(f"inflation must be >= 1, got {inflation}")
    rng = np.random.default_rng(seed)
    points = _ball_points(center, radius, samples, rng)
    dirs = rng.standard_normal((samples, p.dim))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    delta = 1e-4 * radius

    n1 = 0.0
    n2 = 0.0
    for x, d in zip(points, dirs):
        J = jacobian(p, x)
        n1 = max(n1, hilbert.op_norm(J))
        Jd = jacobian(p, x + delta * d)
        n2 = max(n2, hilbert.op_norm((Jd - J) / delta))
    return BallBounds(
        center=center,
        radius=float(radius),
        N1=inflation * n1,
        N2=max(inflation * n2, N2_FLOOR),
        samples=samples,
    )
