"""Boundary-value geodesic shooting and closed-form Grushin costs.

``connect`` finds the minimal-cost normal extremal joining two points by a
multistart damped Gauss-Newton on the initial covector, with all starts
integrated in lockstep batches.  For the Grushin plane the geodesics from a
point on the singular line, the inversion that recovers the initial covector
from the unit-time endpoint, and the resulting distance are available in
closed form and serve as oracles for the solver.  An independent upper-bound
oracle searches piecewise-constant controls on a lattice.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.stats import qmc

from .flow import PhasePoint, Trajectory, flow_endpoints, ham_flow
from .systems import ControlSystemSpec

__all__ = [
    "GeodesicSolution",
    "ConnectOptions",
    "ConnectError",
    "connect",
    "grushin_geodesic",
    "grushin_distance_origin",
    "grushin_origin_covector",
    "brute_force_cost",
    "BruteForceResult",
]

_SMALL_B = 1e-4  # straight-branch switch for the oscillatory geodesic formulas


# ---------------------------------------------------------------------------
# Grushin closed forms
# ---------------------------------------------------------------------------


def grushin_geodesic(a: float, b: float, delta: float = 0.0, t: float = 1.0) -> np.ndarray:
    """Point at time t of the Grushin geodesic leaving (0, delta) with
    initial covector (a, b).

    For |b| >= 1e-4 the trigonometric form is used,
    ``x1 = (a/b) sin(bt)``, ``x2 = delta + a^2/(4 b^2) (2bt - sin 2bt)``;
    below the switch a fifth-order series keeps the seam continuous to
    better than 1e-10.
    """
    if abs(b) < _SMALL_B:
        bt = b * t
        x1 = a * t * (1.0 - bt * bt / 6.0 + bt**4 / 120.0)
        x2 = delta + a * a * (
            b * t**3 / 3.0 - b**3 * t**5 / 15.0 + 2.0 * b**5 * t**7 / 315.0
        )
    else:
        x1 = (a / b) * math.sin(b * t)
        x2 = delta + (a * a / (4.0 * b * b)) * (2.0 * b * t - math.sin(2.0 * b * t))
    return np.array([x1, x2])


def _u_minus_sin(u):
    """u - sin(u), series-stabilized near zero (vectorized)."""
    u = np.asarray(u, dtype=float)
    u2 = u * u
    series = (u * u2 / 6.0) * (
        1.0 - u2 / 20.0 + u2 * u2 / 840.0 - u2 * u2 * u2 / 60480.0
    )
    return np.where(np.abs(u) < 0.25, series, u - np.sin(u))


def _grushin_f(b):
    """The odd, strictly increasing ratio (2b - sin 2b) / (4 sin^2 b) on
    (-pi, pi); behaves like b/3 near zero and blows up at the ends."""
    b = np.asarray(b, dtype=float)
    s = np.sin(b)
    denom = 4.0 * s * s
    small = np.abs(b) < 1e-9
    safe = np.where(small, 1.0, denom)
    return np.where(small, b / 3.0, _u_minus_sin(2.0 * b) / safe)


def _grushin_f_inverse(r):
    """Vectorized bisection solve of the endpoint ratio equation on (-pi, pi)."""
    r = np.asarray(r, dtype=float)
    lo = np.full(r.shape, -math.pi + 1e-12)
    hi = np.full(r.shape, math.pi - 1e-12)
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        below = _grushin_f(mid) < r
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    return 0.5 * (lo + hi)


def _b_over_sin(b):
    """b / sin(b), series-stabilized near zero (scalar or array)."""
    b = np.asarray(b, dtype=float)
    b2 = b * b
    series = 1.0 + b2 / 6.0 + 7.0 * b2 * b2 / 360.0
    s = np.sin(b)
    safe = np.where(np.abs(b) < 1e-6, 1.0, s)
    return np.where(np.abs(b) < 1e-6, series, b / safe)


def grushin_origin_covector(target, delta: float = 0.0):
    """Initial covector (a, b) of the minimizing geodesic from (0, delta)
    to ``target``, reached at time 1.

    Targets on the singular line x1 = 0 use the limiting |b| = pi branch
    (pointing toward the target, ties broken toward +pi); ``a`` is then the
    nonnegative root, a deterministic pick between the two mirror geodesics.
    """
    x1, x2 = float(target[0]), float(target[1])
    dx2 = x2 - delta
    if x1 == 0.0:
        if dx2 == 0.0:
            return 0.0, 0.0
        b = math.copysign(math.pi, dx2)
        return math.sqrt(2.0 * math.pi * abs(dx2)), b
    r = dx2 / (x1 * x1)
    if not np.isfinite(r) or abs(r) > 1e12:
        b = math.copysign(math.pi, dx2)
        return math.sqrt(2.0 * math.pi * abs(dx2)), b
    b = float(_grushin_f_inverse(r))
    a = float(_b_over_sin(b)) * x1
    return a, b


def grushin_distance_origin(target, delta: float = 0.0) -> float:
    """Sub-Riemannian Grushin distance from (0, delta) to ``target``.

    The initial-covector magnitude |a| is the distance of the unit-time
    minimizer; the endpoint ratio equation is inverted by bisection to
    1e-12, and targets on the singular line fall back to the closed
    |b| = pi limit d = sqrt(2 pi |x2 - delta|).
    """
    a, _ = grushin_origin_covector(target, delta)
    return abs(a)


def _grushin_d2_from_axis(targets: np.ndarray, delta: float) -> np.ndarray:
    """Vectorized squared distance from (0, delta) to many targets."""
    t = np.atleast_2d(np.asarray(targets, dtype=float))
    x1 = t[:, 0]
    dx2 = t[:, 1] - delta
    with np.errstate(divide="ignore", invalid="ignore"):
        r = dx2 / (x1 * x1)
    on_axis = (x1 == 0.0) | ~np.isfinite(r) | (np.abs(r) > 1e12)
    r = np.where(on_axis, 0.0, r)
    b = _grushin_f_inverse(r)
    a = _b_over_sin(b) * x1
    d2 = a * a
    return np.where(on_axis, 2.0 * math.pi * np.abs(dx2), d2)


# ---------------------------------------------------------------------------
# Boundary-value shooting
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ConnectOptions:
    """Multistart and termination parameters for :func:`connect`."""

    tol: float = 1e-8
    starts: int = 16
    max_iter: int = 60
    steps: int = 250
    seed_radius: Optional[float] = None


@dataclass(frozen=True)
class GeodesicSolution:
    """Result of a boundary-value connection.

    ``cost`` is the squared distance 2 H(x0, p0) of the unit-time normal
    extremal; ``minimal`` records whether the solution survived comparison
    against every converged start (and, when available, the closed form).
    """

    p0: np.ndarray
    endpoint: np.ndarray
    cost: float
    boundary_error: float
    minimal: bool
    trajectory: Trajectory

    @property
    def distance(self) -> float:
        return math.sqrt(max(self.cost, 0.0))


class ConnectError(RuntimeError):
    def __init__(self, best_boundary_error: float):
        super().__init__(
            "no shooting start converged; best boundary error "
            f"{best_boundary_error:.3e}"
        )
        self.best_boundary_error = best_boundary_error


def _seed_covectors(x: np.ndarray, y: np.ndarray, opts: ConnectOptions) -> np.ndarray:
    n = x.size
    radius = opts.seed_radius
    if radius is None:
        radius = 2.0 * (1.0 + float(np.linalg.norm(y - x))) * math.pi
    seeds = [y - x, 0.3 * (y - x)]
    sampler = qmc.Halton(d=n, scramble=False)
    raw = sampler.random(8 * max(opts.starts, 1))
    pts = 2.0 * raw - 1.0
    keep = np.linalg.norm(pts, axis=1) <= 1.0
    ball = pts[keep][: max(opts.starts - len(seeds), 0)] * radius
    P = np.vstack([np.asarray(seeds, dtype=float), ball]) if len(ball) else np.asarray(seeds, dtype=float)
    norms = np.linalg.norm(P, axis=1)
    return P[norms > 1e-9][: max(opts.starts, 1)]


def connect(
    sys: ControlSystemSpec,
    x,
    y,
    opts: Optional[ConnectOptions] = None,
) -> GeodesicSolution:
    """Join x to y by a unit-time normal extremal of minimal cost.

    A deterministic low-discrepancy family of initial covectors (plus the
    straight-line guess) is refined by a damped Gauss-Newton iteration on
    the endpoint residual; all starts march in vectorized lockstep and
    converged ones retire from the batch.  The cheapest converged solution
    wins.  Raises :class:`ConnectError` with the best boundary error if
    nothing converges.
    """
    opts = opts or ConnectOptions()
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    n = sys.n
    if x.shape != (n,) or y.shape != (n,):
        raise ValueError(f"points must have dimension {n}")

    if np.array_equal(x, y):
        p0 = np.zeros(n)
        traj = ham_flow(sys, PhasePoint(x, p0), 1.0, step=1.0 / opts.steps)
        return GeodesicSolution(
            p0=p0, endpoint=traj.endpoint, cost=0.0, boundary_error=0.0,
            minimal=True, trajectory=traj,
        )

    P = _seed_covectors(x, y, opts)
    m = P.shape[0]

    def residual(pp):
        return flow_endpoints(sys, x, pp, 1.0, opts.steps) - y

    R = residual(P)
    err = np.linalg.norm(R, axis=1)
    lam = np.full(m, 1e-3)
    active = err > opts.tol

    for _ in range(opts.max_iter):
        if not np.any(active):
            break
        idx = np.where(active)[0]
        Pa, Ra = P[idx], R[idx]
        # forward-difference Jacobian of the endpoint map, batched per column
        J = np.empty((len(idx), n, n))
        for d in range(n):
            deltas = 1e-7 * (1.0 + np.abs(Pa[:, d]))
            Pd = Pa.copy()
            Pd[:, d] += deltas
            J[:, :, d] = (residual(Pd) - Ra) / deltas[:, None]
        JT = np.transpose(J, (0, 2, 1))
        g = np.einsum("mij,mj->mi", JT, Ra)
        A = np.einsum("mij,mjk->mik", JT, J)
        A += lam[idx][:, None, None] * np.eye(n)
        try:
            step = -np.linalg.solve(A, g)
        except np.linalg.LinAlgError:
            step = -np.einsum("mij,mj->mi", np.linalg.pinv(A), g)
        P_trial = Pa + step
        R_trial = residual(P_trial)
        err_trial = np.linalg.norm(R_trial, axis=1)
        better = err_trial < err[idx]
        acc = idx[better]
        P[acc] = P_trial[better]
        R[acc] = R_trial[better]
        err[acc] = err_trial[better]
        lam[acc] = np.maximum(lam[acc] * 0.35, 1e-14)
        rej = idx[~better]
        lam[rej] *= 6.0
        active &= err > opts.tol
        active &= lam < 1e12  # stalled starts retire as failures

    converged = err <= opts.tol
    if not np.any(converged):
        raise ConnectError(float(np.min(err)))

    costs = 2.0 * np.asarray(
        [sys.hamiltonian(x, p) for p in P[converged]], dtype=float
    )
    order = np.argsort(costs, kind="stable")
    best = np.where(converged)[0][order[0]]
    cost = float(costs[order[0]])
    p0 = P[best]

    minimal = True
    if sys.name == "grushin" and abs(x[0]) < 1e-14:
        d2 = grushin_distance_origin(y, delta=x[1]) ** 2
        minimal = abs(cost - d2) <= 1e-6 * (1.0 + d2)

    traj = ham_flow(sys, PhasePoint(x, p0), 1.0, step=1.0 / opts.steps)
    return GeodesicSolution(
        p0=p0,
        endpoint=traj.endpoint,
        cost=cost,
        boundary_error=float(err[best]),
        minimal=minimal,
        trajectory=traj,
    )


# ---------------------------------------------------------------------------
# Piecewise-constant control oracle
# ---------------------------------------------------------------------------

_PENALTY_WEIGHT = 1e4


@dataclass(frozen=True)
class BruteForceResult:
    """Upper bound on the squared-distance cost from a lattice control search.

    ``value`` = control energy + terminal penalty; the penalty part is kept
    separate so callers can assert it is negligible.
    """

    value: float
    energy: float
    penalty: float
    endpoint_error: float
    controls: np.ndarray

    def __float__(self) -> float:
        return self.value


def _rollout_batch(sys, x0, schedules, substeps):
    """Endpoints for a batch of piecewise-constant control schedules.

    ``schedules`` has shape (batch, pieces, k); each piece runs for
    1/pieces time units with ``substeps`` RK4 steps.
    """
    batch, pieces, _ = schedules.shape
    X = np.broadcast_to(x0, (batch, x0.size)).astype(float).copy()
    h = 1.0 / (pieces * substeps)
    rhs = sys.control_rhs
    if sys.vectorized:
        for piece in range(pieces):
            U = schedules[:, piece, :]
            for _ in range(substeps):
                k1 = rhs(X, U)
                k2 = rhs(X + 0.5 * h * k1, U)
                k3 = rhs(X + 0.5 * h * k2, U)
                k4 = rhs(X + h * k3, U)
                X += (h / 6.0) * (k1 + 2.0 * (k2 + k3) + k4)
        return X
    for r in range(batch):
        xr = X[r]
        for piece in range(pieces):
            u = schedules[r, piece, :]
            for _ in range(substeps):
                k1 = rhs(xr, u)
                k2 = rhs(xr + 0.5 * h * k1, u)
                k3 = rhs(xr + 0.5 * h * k2, u)
                k4 = rhs(xr + h * k3, u)
                xr = xr + (h / 6.0) * (k1 + 2.0 * (k2 + k3) + k4)
        X[r] = xr
    return X


def brute_force_cost(
    sys: ControlSystemSpec,
    x,
    y,
    pieces: int = 2,
    grid: int = 9,
    radius: float = 2.0,
    substeps: Optional[int] = None,
) -> BruteForceResult:
    """Search piecewise-constant controls on a lattice for an upper cost bound.

    A coarse pass enumerates constant controls on the ``grid``^k lattice of
    [-radius, radius]^k, then coordinate descent re-optimizes one piece at a
    time over the same lattice.  The objective is the control energy
    (sum of u_i^2 integrated in time, i.e. squared-distance scale) plus a
    quadratic terminal penalty; the bound decreases as pieces or grid grow.
    """
    if sys.control_rhs is None:
        raise ValueError(f"system {sys.name!r} has no controlled dynamics")
    if pieces < 1 or grid < 2:
        raise ValueError("need pieces >= 1 and grid >= 2")
    if pieces * grid**sys.k > 20_000:
        raise ValueError(
            f"control search budget exceeded: pieces*grid^k = {pieces * grid**sys.k}"
        )
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    substeps = substeps or max(8, int(np.ceil(48 / pieces)))

    axis = np.linspace(-radius, radius, grid)
    grids = np.meshgrid(*([axis] * sys.k), indexing="ij")
    lattice = np.stack([g.ravel() for g in grids], axis=-1)  # (G, k)
    G = lattice.shape[0]

    def objective(schedules):
        ends = _rollout_batch(sys, x, schedules, substeps)
        energy = np.sum(schedules**2, axis=(1, 2)) / pieces
        pen = _PENALTY_WEIGHT * np.sum((ends - y) ** 2, axis=1)
        return energy + pen, energy, pen, ends

    # coarse pass: constant schedules
    const = np.repeat(lattice[:, None, :], pieces, axis=1)
    total, _, _, _ = objective(const)
    starts = np.argsort(total, kind="stable")[:3]

    best_sched = None
    best_total = np.inf
    for s in starts:
        sched = const[s].copy()
        current, _, _, _ = objective(sched[None])
        current = float(current[0])
        for _ in range(8):  # descent sweeps
            improved = False
            for piece in range(pieces):
                cand = np.repeat(sched[None], G, axis=0)
                cand[:, piece, :] = lattice
                tot, _, _, _ = objective(cand)
                j = int(np.argmin(tot))
                if tot[j] < current - 1e-15:
                    current = float(tot[j])
                    sched = cand[j]
                    improved = True
            if not improved:
                break
        if current < best_total:
            best_total = current
            best_sched = sched

    tot, energy, pen, ends = objective(best_sched[None])
    return BruteForceResult(
        value=float(tot[0]),
        energy=float(energy[0]),
        penalty=float(pen[0]),
        endpoint_error=float(np.linalg.norm(ends[0] - y)),
        controls=best_sched,
    )
