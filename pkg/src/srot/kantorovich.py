"""Discrete Kantorovich problems: cost matrices, exact plans, dual potentials.

The primal coupling is solved as the finite transportation linear program
(HiGHS simplex, deterministic); the reported potentials are re-derived from
the transform pair g = c1(f), f = c2(g), which makes them exactly feasible
and closes the duality gap to machine precision.  The transform operations
and the complementary-slackness certificate are exposed directly.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Tuple

import numpy as np
from scipy.optimize import linprog

from .shooting import connect, grushin_distance_origin, ConnectOptions
from .systems import ControlSystemSpec

__all__ = [
    "DiscreteMeasure",
    "TransportPlan",
    "DualPotentials",
    "cost_matrix",
    "solve_kantorovich",
    "c1_transform",
    "c2_transform",
    "is_c_concave",
    "support_slackness",
]


@dataclass(frozen=True)
class DiscreteMeasure:
    """Weighted point cloud representing a probability measure."""

    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        w = np.atleast_1d(np.asarray(self.weights, dtype=float))
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w)
        if len(pts) != len(w):
            raise ValueError("points and weights must have equal length")
        if not np.all(np.isfinite(pts)):
            raise ValueError("support points must be finite")
        if np.any(w < 0):
            raise ValueError("weights must be nonnegative")
        if abs(float(w.sum()) - 1.0) > 1e-12:
            raise ValueError("weights must sum to 1 (within 1e-12)")

    def __len__(self) -> int:
        return len(self.weights)

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @classmethod
    def uniform(cls, points) -> "DiscreteMeasure":
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return cls(pts, np.full(len(pts), 1.0 / len(pts)))


@dataclass(frozen=True)
class TransportPlan:
    """A coupling matrix with its transport cost."""

    matrix: np.ndarray
    value: float


@dataclass(frozen=True)
class DualPotentials:
    """Dual pair (f on the source support, g on the target support)."""

    f: np.ndarray
    g: np.ndarray


# ---------------------------------------------------------------------------
# Cost matrices
# ---------------------------------------------------------------------------


def _closed_form_cost(sys: ControlSystemSpec, x: np.ndarray, y: np.ndarray) -> float:
    if sys.name.startswith("euclidean"):
        d = x - y
        return float(d @ d)
    if sys.name == "grushin":
        if x[0] == 0.0:
            return grushin_distance_origin(y, delta=x[1]) ** 2
        if y[0] == 0.0:
            # the cost is symmetric: reverse the minimizing path
            return grushin_distance_origin(x, delta=y[1]) ** 2
        raise ValueError(
            "closed-form Grushin cost needs one endpoint on the x2-axis; "
            f"got {x.tolist()} -> {y.tolist()}"
        )
    raise ValueError(f"no closed-form cost for system {sys.name!r}")


def cost_matrix(
    backend: str,
    sys: ControlSystemSpec,
    mu: DiscreteMeasure,
    nu: DiscreteMeasure,
    opts: ConnectOptions | None = None,
) -> np.ndarray:
    """Pairwise squared distances c_ij = d(x_i, y_j)^2.

    ``backend`` is ``"closed-form"`` (Euclidean everywhere; Grushin when one
    endpoint of each pair lies on the x2-axis) or ``"shooting"`` (any built-in
    system, via :func:`srot.shooting.connect`).  Coinciding points
    short-circuit to zero.  Shooting failures propagate with the offending
    pair attached.
    """
    if backend not in ("closed-form", "shooting"):
        raise ValueError("backend must be 'closed-form' or 'shooting'")
    if mu.dim != sys.n or nu.dim != sys.n:
        raise ValueError("measure dimension does not match the system")
    c = np.empty((len(mu), len(nu)))
    for i, x in enumerate(mu.points):
        for j, y in enumerate(nu.points):
            if np.array_equal(x, y):
                c[i, j] = 0.0
            elif backend == "closed-form":
                c[i, j] = _closed_form_cost(sys, x, y)
            else:
                try:
                    c[i, j] = connect(sys, x, y, opts).cost
                except Exception as exc:
                    raise RuntimeError(
                        f"shooting failed for pair ({x.tolist()}, {y.tolist()}): {exc}"
                    ) from exc
    return c


# ---------------------------------------------------------------------------
# Transforms
# ---------------------------------------------------------------------------


def c1_transform(f, c: np.ndarray) -> np.ndarray:
    """g(y_j) = min_i [c_ij - f_i]."""
    f = np.asarray(f, dtype=float)
    c = np.asarray(c, dtype=float)
    return np.min(c - f[:, None], axis=0)


def c2_transform(g, c: np.ndarray) -> np.ndarray:
    """f(x_i) = min_j [c_ij - g_j]."""
    g = np.asarray(g, dtype=float)
    c = np.asarray(c, dtype=float)
    return np.min(c - g[None, :], axis=1)


def is_c_concave(f, c: np.ndarray, tol: float = 1e-9) -> bool:
    """True iff the double transform returns f (sup-norm within tol)."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    f = np.asarray(f, dtype=float)
    return float(np.max(np.abs(c2_transform(c1_transform(f, c), c) - f))) <= tol


# ---------------------------------------------------------------------------
# Exact solver
# ---------------------------------------------------------------------------


def solve_kantorovich(
    c: np.ndarray,
    mu: DiscreteMeasure,
    nu: DiscreteMeasure,
) -> Tuple[TransportPlan, DualPotentials]:
    """Exact primal-dual solution of the discrete transport problem.

    The coupling comes from the HiGHS simplex on the transportation LP
    (deterministic pivoting, so degenerate optima resolve reproducibly); the
    potentials are the simplex duals polished through one c1/c2 transform
    pass, which enforces exact feasibility without losing optimality.
    Entries of ``c`` may be +inf; instances with no finite-cost feasible
    plan are rejected.
    """
    c = np.asarray(c, dtype=float)
    m, n = c.shape
    if len(mu) != m or len(nu) != n:
        raise ValueError("cost matrix shape does not match the measures")
    if np.any(np.isnan(c)):
        raise ValueError("cost matrix contains NaN")
    if abs(float(mu.weights.sum()) - float(nu.weights.sum())) > 1e-9:
        raise ValueError("marginals are infeasible: total masses differ")

    finite = np.isfinite(c.ravel())
    if not np.all(finite):
        # exclude infinite-cost cells; feasibility may then fail outright
        cols = np.where(finite)[0]
        if cols.size == 0:
            raise ValueError("no finite-cost feasible plan exists")
    else:
        cols = np.arange(m * n)

    A_eq = np.zeros((m + n, len(cols)))
    for idx, col in enumerate(cols):
        A_eq[col // n, idx] = 1.0
        A_eq[m + col % n, idx] = 1.0
    b_eq = np.concatenate([mu.weights, nu.weights])
    res = linprog(
        c.ravel()[cols],
        A_eq=A_eq,
        b_eq=b_eq,
        bounds=(0, None),
        method="highs",
    )
    if res.status == 2:
        raise ValueError("no finite-cost feasible plan exists")
    if res.status != 0:
        raise RuntimeError(f"transport LP failed: {res.message}")

    plan = np.zeros(m * n)
    plan[cols] = np.maximum(res.x, 0.0)
    plan = plan.reshape(m, n)

    f0 = np.asarray(res.eqlin.marginals[:m], dtype=float)
    cfin = np.where(np.isfinite(c), c, np.inf)
    g = c1_transform(f0, cfin)
    f = c2_transform(g, cfin)
    # a dirac-like marginal can leave a potential at +/-inf; pin it to the
    # feasible finite value instead
    g = np.where(np.isfinite(g), g, c1_transform(f, cfin))

    value = float(np.sum(plan[np.isfinite(c)] * c[np.isfinite(c)]))
    return TransportPlan(matrix=plan, value=value), DualPotentials(f=f, g=g)


def support_slackness(
    plan: TransportPlan,
    duals: DualPotentials,
    c: np.ndarray,
    tol: float = 1e-8,
) -> List[Tuple[int, int]]:
    """Cells carrying mass where the duals are not tight.

    Returns the list of (i, j) with plan mass above ``tol`` but
    |f_i + g_j - c_ij| > tol; an empty list certifies optimality of the
    plan/duals pair.
    """
    c = np.asarray(c, dtype=float)
    gap = np.abs(duals.f[:, None] + duals.g[None, :] - c)
    bad = (plan.matrix > tol) & (gap > tol)
    return [(int(i), int(j)) for i, j in np.argwhere(bad)]
