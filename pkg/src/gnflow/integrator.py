"""Fixed-step explicit integration of the flows, with event monitors.

The pair (x, B) is advanced jointly in a single stage loop; B is just a
flat block of extra state. Monitors watch for the ball-exit event
||x - xhat|| >= R * eps(t) and for divergence.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from . import hilbert
from .flow import FlowDiagnostics, SolverState, coupled_rhs, diagnostics, direct_rhs
from .problem import NonlinearProblem

DIVERGENCE_LIMIT = 1e12

TERMINATION_TAGS = ("horizon_reached", "ball_exit", "divergence", "numerical_error")

#: rhs callback signature: (t, x, B) -> (x_dot, B_dot); B and B_dot are
#: None for the direct flow.
RhsFn = Callable[[float, np.ndarray, Optional[np.ndarray]], tuple]


@dataclass(frozen=True)
class IntegratorConfig:
    method: str = "rk4"  # "euler" or "rk4"
    step_h: float = 0.01
    horizon_T: float = 10.0
    record_every: int = 1
    monitors: frozenset = frozenset({"divergence"})

    def __post_init__(self):
        if self.method not in ("euler", "rk4"):
            raise ValueError(f"unknown method {self.method!r}")
        if not self.step_h > 0:
            raise ValueError(f"step_h must be positive, got {self.step_h}")
        if self.horizon_T < self.step_h:
            raise ValueError("horizon_T must be at least one step")
        if self.record_every < 1:
            raise ValueError(f"record_every must be >= 1, got {self.record_every}")
        unknown = set(self.monitors) - {"ball", "divergence"}
        if unknown:
            raise ValueError(f"unknown monitor flags: {sorted(unknown)}")


@dataclass
class Trajectory:
    records: list  # of (SolverState, FlowDiagnostics)
    termination: str
    config: IntegratorConfig

    @property
    def final_state(self) -> SolverState:
        return self.records[-1][0]

    @property
    def final_diagnostics(self) -> FlowDiagnostics:
        return self.records[-1][1]


def _stage(x, B, xd, Bd, h):
    xs = x + h * xd
    Bs = None if B is None else B + h * Bd
    return xs, Bs


def step(rhs: RhsFn, st: SolverState, t: float, h: float, method: str) -> SolverState:
    """One explicit Euler or classical RK4 step over the product state.

    The schedule inside ``rhs`` is evaluated at the stage times t, t+h/2
    and t+h.
    """
    if not h > 0:
        raise ValueError(f"h must be positive, got {h}")
    x, B = st.x, st.B
    if method == "euler":
        k1x, k1B = rhs(t, x, B)
        xn = x + h * k1x
        Bn = None if B is None else B + h * k1B
    elif method == "rk4":
        k1x, k1B = rhs(t, x, B)
        x2, B2 = _stage(x, B, k1x, k1B, h / 2.0)
        k2x, k2B = rhs(t + h / 2.0, x2, B2)
        x3, B3 = _stage(x, B, k2x, k2B, h / 2.0)
        k3x, k3B = rhs(t + h / 2.0, x3, B3)
        x4, B4 = _stage(x, B, k3x, k3B, h)
        k4x, k4B = rhs(t + h, x4, B4)
        xn = x + (h / 6.0) * (k1x + 2.0 * k2x + 2.0 * k3x + k4x)
        Bn = None
        if B is not None:
            Bn = B + (h / 6.0) * (k1B + 2.0 * k2B + 2.0 * k3B + k4B)
    else:
        raise ValueError(f"unknown method {method!r}")
    if not np.all(np.isfinite(xn)) or (Bn is not None and not np.all(np.isfinite(Bn))):
        raise FloatingPointError("non-finite state after step")
    return SolverState(t=t + h, x=xn, B=Bn)


def _flow_rhs(p: NonlinearProblem, s, x0) -> RhsFn:
    def rhs(t, x, B):
        if B is None:
            return direct_rhs(p, s, x0, x, t), None
        return coupled_rhs(p, s, x0, SolverState(t=t, x=x, B=B))

    return rhs


def integrate(
    p: NonlinearProblem,
    s,
    st0: SolverState,
    cfg: IntegratorConfig,
    xhat=None,
    R: Optional[float] = None,
) -> Trajectory:
    """Advance the flow from st0 over [0, horizon_T] and record diagnostics.

    The horizon is truncated to a whole number of steps. Monitors are
    checked after every step; a trigger appends a final record at the
    triggering time and returns with the matching termination tag. The
    initial state must be measurable (diagnostics at t=0 may raise);
    mid-run states whose diagnostics overflow terminate the trajectory
    as a numerical error instead.
    """
    if st0.x.size != p.dim:
        raise ValueError(f"state dimension {st0.x.size} != problem dimension {p.dim}")
    if st0.t != 0.0:
        raise ValueError(f"integration starts at t=0, got initial state at t={st0.t}")
    if "ball" in cfg.monitors and (xhat is None or R is None):
        raise ValueError("ball monitor needs both xhat and R")
    if xhat is not None:
        xhat = hilbert.as_vector(xhat, dim=p.dim)

    rhs = _flow_rhs(p, s, st0.x)
    n_steps = int(math.floor(cfg.horizon_T / cfg.step_h + 1e-9))

    def ball_exit(st: SolverState) -> bool:
        return ("ball" in cfg.monitors
                and np.linalg.norm(st.x - xhat) >= R * s.eps(st.t))

    def diverged(st: SolverState) -> bool:
        if "divergence" not in cfg.monitors:
            return False
        if np.linalg.norm(st.x) > DIVERGENCE_LIMIT:
            return True
        return st.B is not None and np.linalg.norm(st.B) > DIVERGENCE_LIMIT

    records = [(st0, diagnostics(p, s, st0, xhat))]
    if ball_exit(st0):
        return Trajectory(records, "ball_exit", cfg)
    if diverged(st0):
        return Trajectory(records, "divergence", cfg)

    def try_record(st: SolverState) -> bool:
        # avoid duplicating a just-recorded time; a state too extreme to
        # measure is left unrecorded (the last finite record stands)
        if records[-1][0].t >= st.t:
            return True
        try:
            records.append((st, diagnostics(p, s, st, xhat)))
            return True
        except (FloatingPointError, ValueError, hilbert.PowerIterationError):
            return False

    st = st0
    for k in range(1, n_steps + 1):
        t = (k - 1) * cfg.step_h
        try:
            st = step(rhs, st, t, cfg.step_h, cfg.method)
        except (FloatingPointError, ValueError):
            try_record(st)
            return Trajectory(records, "numerical_error", cfg)
        # Keep record times exactly on the k*h grid.
        st = SolverState(t=k * cfg.step_h, x=st.x, B=st.B)
        if ball_exit(st):
            try_record(st)
            return Trajectory(records, "ball_exit", cfg)
        if diverged(st):
            try_record(st)
            return Trajectory(records, "divergence", cfg)
        if k % cfg.record_every == 0 or k == n_steps:
            if not try_record(st):
                return Trajectory(records, "numerical_error", cfg)
    return Trajectory(records, "horizon_reached", cfg)


def convergence_order(
    p: NonlinearProblem,
    s,
    st0: SolverState,
    cfg: IntegratorConfig,
    steps: list,
) -> list:
    """Endpoint errors against a reference run at steps[-1] / 4.

    ``steps`` must be sorted descending. The reference is integrated with
    the fourth-order method regardless of ``cfg.method`` so that its own
    error is negligible against every tested step. Errors combine the x
    block and, when present, the B block, matching the product state the
    integrator advances. Used by the discretization-order tests.
    """
    if sorted(steps, reverse=True) != list(steps):
        raise ValueError("steps must be sorted descending")

    def endpoint(h: float, method: str) -> tuple:
        c = IntegratorConfig(
            method=method,
            step_h=h,
            horizon_T=cfg.horizon_T,
            record_every=10**9,
            monitors=frozenset(),
        )
        traj = integrate(p, s, st0, c)
        st = traj.final_state
        return st.x, st.B

    ref_x, ref_B = endpoint(steps[-1] / 4.0, "rk4")
    out = []
    for h in steps:
        x, B = endpoint(h, cfg.method)
        err = float(np.linalg.norm(x - ref_x))
        if B is not None:
            err = float(np.hypot(err, np.linalg.norm(B - ref_B)))
        out.append((float(h), err))
    return out
