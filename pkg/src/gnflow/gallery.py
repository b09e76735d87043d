"""Curated test problems with known solutions.

Spans trivially well-posed (identity) through classically ill-conditioned
(Hilbert matrix) to genuinely nonlinear instances: a discretized
autoconvolution equation and a renormalization-type fixed-point
collocation. The nonlinear entries are standard benchmark reconstructions
with stored reference solutions produced offline by a damped Newton
bootstrap; they are labeled as analogues in their notes, not as
reproductions of any particular published experiment.
"""

from __future__ import annotations

import importlib.resources
from dataclasses import dataclass
import numpy as np
import scipy.linalg

from . import hilbert, theory
from .flow import initial_inverse
from .problem import NonlinearProblem
from .schedule import PowerSchedule

#: Decay constant used for certificate-compliant schedules. The popular
#: eps(t) = eps(0)/(1+t) has b*eps(0) = 1 exactly and can never satisfy
#: the contraction hypothesis, so compliant instances use large c1.
COMPLIANT_B = 0.05

#: Initial offset-to-eps ratio for compliant instances. Joint halving of
#: the offset and eps(0) preserves this ratio, which must stay below
#: 1/lambda for the initial-offset check.
OFFSET_RATIO = 0.01

MAX_HALVINGS = 60


@dataclass
class GalleryEntry:
    problem: NonlinearProblem
    xhat: np.ndarray
    default_x0: np.ndarray
    notes: str = ""


def _default_xhat(n: int) -> np.ndarray:
    """Smooth O(1) reference solution: 1 + s on the grid s_i = (i+1)/n."""
    return 1.0 + (np.arange(1, n + 1)) / n


def make_affine(
    n: int,
    kind: str,
    xhat=None,
    noise: float = 0.0,
    noise_seed: int = 0,
) -> GalleryEntry:
    """F(x) = A (x - xhat) with constant Jacobian A.

    Kinds: "identity"; "hilbert_matrix" (A_ij = 1/(i+j-1), the classic
    ill-conditioned test matrix); "rank_deficient" (diag(1,...,1,0)).
    ``noise`` shifts the anchor by a fixed Gaussian perturbation while
    keeping the clean solution for error reporting.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    xhat = _default_xhat(n) if xhat is None else hilbert.as_vector(xhat, dim=n)
    if kind == "identity":
        A = np.eye(n)
        offset = 0.1 * np.ones(n) / np.sqrt(n)
        notes = "well-posed affine sanity instance"
    elif kind == "hilbert_matrix":
        A = scipy.linalg.hilbert(n)
        M = A @ A
        evals, evecs = np.linalg.eigh(M)
        w = 0.1 * evecs[:, -1]  # leading eigenvector: in-range offset
        offset = -M @ w
        notes = f"Hilbert matrix, condition ~{np.linalg.cond(A):.2e}; default x0 satisfies the source condition"
    elif kind == "rank_deficient":
        A = np.diag(np.r_[np.ones(n - 1), 0.0])
        offset = 0.1 * np.eye(n)[-1]  # null-space direction: source fails
        notes = "rank-deficient diagonal; default offset is outside range(A*A)"
    else:
        raise ValueError(f"unknown affine kind {kind!r}")

    anchor = xhat.copy()
    if noise > 0.0:
        rng = np.random.default_rng(noise_seed)
        anchor = anchor + noise * rng.standard_normal(n)
        notes += f"; anchor noise {noise:g} (seed {noise_seed})"

    A_ = A.copy()

    problem = NonlinearProblem(
        dim=n,
        f=lambda x, A=A_, c=anchor.copy(): A @ (x - c),
        jac=lambda x, A=A_: A.copy(),
        known_solution=xhat,
        label=f"affine-{kind}-{n}",
        validate_solution=(noise == 0.0),
    )
    return GalleryEntry(problem=problem, xhat=xhat, default_x0=xhat + offset, notes=notes)


def make_autoconvolution(n: int, noise: float = 0.0, noise_seed: int = 0) -> GalleryEntry:
    """Discrete autoconvolution F(x)_i = ds * sum_{j<=i} x_j x_{i-j+1} - y_i.

    Uniform grid s_i = i/n on [0, 1], ds = 1/n; the data y is generated
    from the smooth solution xhat(s) = 1 + s, so F(xhat) = 0 exactly.
    The Jacobian is lower-triangular Toeplitz, 2*ds*x_{i-k+1}.
    """
    if n < 2:
        raise ValueError(f"n must be >= 2, got {n}")
    ds = 1.0 / n
    s = np.arange(1, n + 1) * ds
    xhat = 1.0 + s
    y = ds * np.convolve(xhat, xhat)[:n]
    if noise > 0.0:
        rng = np.random.default_rng(noise_seed)
        y = y + noise * rng.standard_normal(n)

    def f(x, y=y.copy(), ds=ds, n=n):
        return ds * np.convolve(x, x)[:n] - y

    def jac(x, ds=ds, n=n):
        first_row = np.zeros(n)
        first_row[0] = 2.0 * ds * x[0]
        return scipy.linalg.toeplitz(2.0 * ds * x, first_row)

    problem = NonlinearProblem(
        dim=n,
        f=f,
        jac=jac,
        known_solution=xhat,
        label=f"autoconv-{n}",
        validate_solution=(noise == 0.0),
    )
    notes = "first-kind autoconvolution benchmark; bilinear F, constant second derivative"
    if noise > 0.0:
        notes += f"; data noise {noise:g} (seed {noise_seed})"
    return GalleryEntry(
        problem=problem,
        xhat=xhat,
        default_x0=np.ones(n),
        notes=notes,
    )


# --- renormalization fixed-point collocation -------------------------------

_FEIGENBAUM_SIZES = (4, 6, 8)


def _chebyshev_nodes(n: int) -> np.ndarray:
    """n Chebyshev points in (0, 1), descending."""
    k = np.arange(1, n + 1)
    return 0.5 * (1.0 + np.cos((2 * k - 1) * np.pi / (2 * n)))


def _poly_eval(coeffs: np.ndarray, s):
    """g(s) = 1 + sum_j coeffs[j] * s^(2(j+1)) for even trial functions."""
    z = np.asarray(s) ** 2
    acc = np.zeros_like(np.asarray(s, dtype=float))
    for c in coeffs[::-1]:
        acc = z * (acc + c)
    return 1.0 + acc


def _poly_deriv(coeffs: np.ndarray, s):
    """g'(s) = sum_j 2(j+1) coeffs[j] s^(2(j+1)-1)."""
    s = np.asarray(s, dtype=float)
    z = s**2
    acc = np.zeros_like(s)
    for j in range(len(coeffs) - 1, -1, -1):
        acc = z * acc + 2.0 * (j + 1) * coeffs[j]
    return s * acc


def _renorm_residual(c: np.ndarray, nodes: np.ndarray) -> np.ndarray:
    """Collocation residual of lam*g(s) + g(g(lam*s)) = 0 with lam = -g(1)."""
    lam = -(1.0 + np.sum(c))
    v = lam * nodes
    u = _poly_eval(c, v)
    return lam * _poly_eval(c, nodes) + _poly_eval(c, u)


def _renorm_jacobian(c: np.ndarray, nodes: np.ndarray) -> np.ndarray:
    n = len(c)
    lam = -(1.0 + np.sum(c))
    g_s = _poly_eval(c, nodes)
    v = lam * nodes
    u = _poly_eval(c, v)
    gp_v = _poly_deriv(c, v)
    gp_u = _poly_deriv(c, u)
    J = np.empty((n, n))
    for j in range(n):
        p = 2 * (j + 1)
        J[:, j] = (
            -g_s
            + lam * nodes**p
            + u**p
            + gp_u * (v**p - gp_v * nodes)
        )
    return J


def _bootstrap_renorm(n: int, tol: float = 1e-13, max_iter: int = 200) -> np.ndarray:
    """Damped Newton for the collocation coefficients, from c1 = -1.5."""
    nodes = _chebyshev_nodes(n)
    c = np.zeros(n)
    c[0] = -1.5
    for _ in range(max_iter):
        r = _renorm_residual(c, nodes)
        if np.linalg.norm(r) <= tol:
            return c
        delta = np.linalg.solve(_renorm_jacobian(c, nodes), -r)
        alpha = 1.0
        base = np.linalg.norm(r)
        while alpha > 1e-10:
            trial = c + alpha * delta
            if np.linalg.norm(_renorm_residual(trial, nodes)) < base:
                c = trial
                break
            alpha *= 0.5
        else:
            raise RuntimeError("renormalization bootstrap stalled")
    raise RuntimeError(f"renormalization bootstrap did not converge for n={n}")


def _load_reference(name: str) -> np.ndarray:
    text = (
        importlib.resources.files("gnflow")
        .joinpath(f"data/{name}")
        .read_text(encoding="ascii")
    )
    vals = [float(line) for line in text.splitlines() if line.strip() and not line.startswith("#")]
    return np.array(vals)


def make_feigenbaum_like(n: int) -> GalleryEntry:
    """Collocation of the renormalization fixed point lam*g + g(g(lam*s)) = 0.

    The trial function g(s) = 1 + sum_j c_j s^(2j) is an even polynomial
    (g(0) = 1 built in), collocated at n Chebyshev points in (0, 1), with
    lam = -g(1) treated through the coefficients. Reference coefficient
    vectors were computed by the damped Newton bootstrap and are shipped
    as data files (one value per line, 17 significant digits, accurate to
    well below 1e-12 in residual).
    """
    if n < 4:
        raise ValueError(f"n must be >= 4, got {n}")
    if n not in _FEIGENBAUM_SIZES:
        raise ValueError(
            f"no stored reference solution for n={n}; available: {_FEIGENBAUM_SIZES}"
        )
    xhat = _load_reference(f"feigenbaum_n{n}.txt")
    nodes = _chebyshev_nodes(n)

    problem = NonlinearProblem(
        dim=n,
        f=lambda c, nodes=nodes: _renorm_residual(np.asarray(c, dtype=float), nodes),
        jac=lambda c, nodes=nodes: _renorm_jacobian(np.asarray(c, dtype=float), nodes),
        known_solution=xhat,
        label=f"feigenbaum-{n}",
    )
    sign = np.where(np.arange(n) % 2 == 0, 1.0, -1.0)
    return GalleryEntry(
        problem=problem,
        xhat=xhat,
        default_x0=xhat + 0.01 * sign / np.sqrt(n),
        notes=(
            "renormalization-type functional equation, collocation analogue; "
            "reference coefficients from an offline Newton bootstrap"
        ),
    )


# --- certificate-compliant instances ---------------------------------------


def _base_instance(n: int, kind: str, rng) -> tuple[GalleryEntry, np.ndarray]:
    """Base problem for the compliant constructor plus the w direction."""
    xhat = _default_xhat(n)
    if kind == "identity":
        entry = make_affine(n, "identity", xhat=xhat)
        w_dir = rng.standard_normal(n)
    elif kind == "spd":
        Q, _ = np.linalg.qr(rng.standard_normal((n, n)))
        A = Q @ np.diag(rng.uniform(0.5, 2.0, size=n)) @ Q.T
        problem = NonlinearProblem(
            dim=n,
            f=lambda x, A=A, c=xhat.copy(): A @ (x - c),
            jac=lambda x, A=A: A.copy(),
            known_solution=xhat,
            label=f"affine-spd-{n}",
        )
        entry = GalleryEntry(problem, xhat, xhat.copy(), "random well-conditioned SPD affine")
        w_dir = rng.standard_normal(n)
    elif kind == "quadratic":
        Q, _ = np.linalg.qr(rng.standard_normal((n, n)))
        A = Q @ np.diag(rng.uniform(0.5, 2.0, size=n)) @ Q.T
        nu = 0.05
        problem = NonlinearProblem(
            dim=n,
            f=lambda x, A=A, c=xhat.copy(), nu=nu: A @ (x - c) + nu * (x - c) ** 2,
            jac=lambda x, A=A, c=xhat.copy(), nu=nu: A + 2.0 * nu * np.diag(x - c),
            known_solution=xhat,
            label=f"quadratic-{n}",
        )
        entry = GalleryEntry(problem, xhat, xhat.copy(), "mildly nonlinear diagonal-quadratic perturbation")
        w_dir = rng.standard_normal(n)
    elif kind == "hilbert_matrix":
        entry = make_affine(n, "hilbert_matrix", xhat=xhat)
        A = scipy.linalg.hilbert(n)
        _, evecs = np.linalg.eigh(A @ A)
        w_dir = evecs[:, -1]  # keep the offset in the well-resolved range
    elif kind == "rank_deficient":
        entry = make_affine(n, "rank_deficient", xhat=xhat)
        w_dir = rng.standard_normal(n)
    else:
        raise ValueError(f"unknown compliant kind {kind!r}")
    return entry, w_dir / np.linalg.norm(w_dir)


def compliant_instance(
    n: int,
    seed: int,
    kind: str = "spd",
    samples: int = 64,
) -> tuple[GalleryEntry, PowerSchedule, np.ndarray, float]:
    """Build an instance whose certificate passes, by geometric shrinking.

    Starts from eps(0) = 0.1 and an offset x0 = xhat - M w with
    ||M w|| = OFFSET_RATIO * eps(0). Each failed certification halves the
    quantity the failure implicates: eps(0) (through the schedule's c1)
    when the contraction or radius check fails, the offset w when an
    offset- or source-type check fails. Lockstep halving would drive the
    offset below float cancellation noise on ill-conditioned instances
    long before their contraction constant comes down; targeting keeps
    the source condition numerically meaningful. At most MAX_HALVINGS
    rounds. For the rank-deficient kind a null-space component is mixed
    into the offset, so the source check keeps failing and the
    constructor reports exhaustion, as intended for that instance.

    Returns (entry, schedule, B0, R) with B0 the exact initial inverse
    and R the certified (canonically chosen, slightly inflated) radius.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if n > 16:
        raise ValueError(f"compliant construction is desk-scale only (n <= 16), got {n}")
    rng = np.random.default_rng(seed)
    entry, w_dir = _base_instance(n, kind, rng)
    p = entry.problem
    xhat = entry.xhat

    from .problem import jacobian  # local import to avoid cycle at module load

    Jh = jacobian(p, xhat)
    M = Jh.T @ Jh
    Mw_dir = M @ w_dir
    null_mix = np.zeros(n)
    if kind == "rank_deficient":
        null_mix = np.eye(n)[-1]  # outside range(M): unsatisfiable source

    c0 = 1.0 / COMPLIANT_B
    eps0 = 0.1
    scale = OFFSET_RATIO * eps0 / max(np.linalg.norm(Mw_dir), np.finfo(float).tiny)
    w = scale * w_dir

    for _ in range(MAX_HALVINGS + 1):
        sched = PowerSchedule(c0=c0, c1=c0 / eps0, a=1.0)
        x0 = xhat - (M @ w + np.linalg.norm(M @ w) * null_mix)
        try:
            B0 = initial_inverse(p, x0, eps0)
            cert, _ = theory.certify_with_canonical_R(
                p, xhat, x0, sched, B0, samples=samples, seed=seed
            )
        except (hilbert.FactorizationError, ValueError):
            eps0 *= 0.5  # constants too large or factorization lost: eps-side
            continue
        if cert.overall:
            out = GalleryEntry(
                problem=p,
                xhat=xhat,
                default_x0=x0,
                notes=entry.notes + f"; certified with eps0={eps0:g}, b={COMPLIANT_B:g}",
            )
            return out, sched, B0, cert.R
        contraction_side = not (cert.checks["contraction"] and cert.checks["radius"])
        offset_side = not (cert.checks["source_norm"]
                           and cert.checks["initial_offset"]
                           and cert.checks["source_residual"])
        if contraction_side:
            eps0 *= 0.5
        if offset_side:
            w = 0.5 * w
        if not contraction_side and not offset_side:
            eps0 *= 0.5
            w = 0.5 * w
    raise ValueError(f"no compliant configuration at this dimension/seed (n={n}, seed={seed})")


# --- registry ---------------------------------------------------------------

_COMPLIANT_SPECS = {
    "compliant-affine-2": (2, 2, "identity"),
    "compliant-affine-4": (4, 4, "spd"),
    "compliant-affine-8": (8, 8, "spd"),
    "compliant-quadratic-4": (4, 7, "quadratic"),
}

_cache: dict = {}


def compliant_suite() -> list:
    """The certified instances used by the verification batteries.

    Returns a list of (label, GalleryEntry, PowerSchedule, B0, R).
    """
    out = []
    for label, (n, seed, kind) in _COMPLIANT_SPECS.items():
        key = ("compliant", label)
        if key not in _cache:
            _cache[key] = compliant_instance(n, seed, kind)
        entry, sched, B0, R = _cache[key]
        out.append((label, entry, sched, B0, R))
    return out


def available_labels() -> list:
    return [
        "identity-8",
        "hilbert-8",
        "rank-deficient-8",
        "autoconv-16",
        "feigenbaum-6",
        *_COMPLIANT_SPECS.keys(),
    ]


def get_entry(label: str, noise: float = 0.0, noise_seed: int = 0) -> GalleryEntry:
    """Look up a gallery entry by label, optionally with data noise."""
    if label == "identity-8":
        return make_affine(8, "identity", noise=noise, noise_seed=noise_seed)
    if label == "hilbert-8":
        return make_affine(8, "hilbert_matrix", noise=noise, noise_seed=noise_seed)
    if label == "rank-deficient-8":
        return make_affine(8, "rank_deficient", noise=noise, noise_seed=noise_seed)
    if label == "autoconv-16":
        return make_autoconvolution(16, noise=noise, noise_seed=noise_seed)
    if label == "feigenbaum-6":
        if noise > 0.0:
            raise ValueError("feigenbaum-6 does not support noise injection")
        return make_feigenbaum_like(6)
    if label in _COMPLIANT_SPECS:
        n, seed, kind = _COMPLIANT_SPECS[label]
        key = ("compliant", label)
        if key not in _cache:
            _cache[key] = compliant_instance(n, seed, kind)
        entry = _cache[key][0]
        if noise == 0.0:
            return entry
        rng = np.random.default_rng(noise_seed)
        shift = noise * rng.standard_normal(entry.problem.dim)
        base_f = entry.problem.f
        noisy = NonlinearProblem(
            dim=entry.problem.dim,
            f=lambda x, f=base_f, c=shift: f(x) - c,
            jac=entry.problem.jac,
            known_solution=entry.problem.known_solution,
            label=entry.problem.label + "-noisy",
            validate_solution=False,
        )
        return GalleryEntry(
            problem=noisy,
            xhat=entry.xhat,
            default_x0=entry.default_x0,
            notes=entry.notes + f"; data noise {noise:g} (seed {noise_seed})",
        )
    raise KeyError(
        f"unknown problem label {label!r}; available: {', '.join(available_labels())}"
    )
