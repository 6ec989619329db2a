"""Control systems with named frames, Lagrangians and max-Hamiltonians.

A control system here is a frame of vector fields X_1..X_k on R^n driving
``xdot = sum_i u_i X_i(x)`` with running cost L(x,u) = 1/2 sum u_i^2.  The
max-Hamiltonian H(x,p) = max_u [p.F(x,u) - L(x,u)] = 1/2 sum (p.X_i(x))^2
generates normal extremals; its flow lives in :mod:`srot.flow`.

Conventions used throughout the package:

* the squared distance is c = d^2 = 2H for unit-time minimizers (so the
  internal energy integral is d^2 / 2);
* field indices i, j are 1-based everywhere (X_1..X_k), matching the usual
  frame notation.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

__all__ = [
    "ControlSystemSpec",
    "make_system",
    "grushin",
    "heisenberg",
    "euclidean",
    "frame_system",
    "lie_bracket",
    "is_two_generating",
    "goh_residual",
    "validate_lagrangian",
    "LagrangianConditionReport",
    "LagrangianReport",
]


@dataclass(frozen=True)
class ControlSystemSpec:
    """Immutable description of a control system.

    ``fields_eval(x)`` returns the frame as a (k, n) array; ``jacobian_eval(x, i)``
    the n-by-n Jacobian dX_i/dx of the 1-based field i.  Systems produced by
    :func:`srot.flow.bolza_to_mayer` carry no frame (``fields_eval is None``);
    frame-based operations reject them.

    ``hamiltonian`` / ``hamiltonian_grad`` / ``maximizer`` of the built-in
    systems broadcast over leading batch axes (``vectorized=True``), which the
    integrator and the shooting solver exploit.
    """

    name: str
    n: int
    k: int
    fields_eval: Optional[Callable[[np.ndarray], np.ndarray]]
    jacobian_eval: Optional[Callable[[np.ndarray, int], np.ndarray]]
    lagrangian: Callable[[np.ndarray, np.ndarray], float]
    hamiltonian: Callable[[np.ndarray, np.ndarray], np.ndarray]
    hamiltonian_grad: Callable[[np.ndarray, np.ndarray], tuple]
    maximizer: Callable[[np.ndarray, np.ndarray], np.ndarray]
    control_rhs: Optional[Callable[[np.ndarray, np.ndarray], np.ndarray]] = None
    drift_eval: Optional[Callable[[np.ndarray], np.ndarray]] = None
    vectorized: bool = False

    def require_frame(self) -> None:
        if self.fields_eval is None:
            raise ValueError(
                f"system {self.name!r} carries no control frame; "
                "frame-based operations are unavailable for it"
            )


# ---------------------------------------------------------------------------
# Built-in systems
# ---------------------------------------------------------------------------


def _quadratic_lagrangian(x, u) -> float:
    u = np.asarray(u, dtype=float)
    return 0.5 * float(np.sum(u * u))


def grushin() -> ControlSystemSpec:
    """The Grushin plane: frame {d/dx1, x1 d/dx2} on R^2.

    The frame drops rank on the line x1 = 0; H(x,p) = (p1^2 + x1^2 p2^2)/2.
    """

    def fields(x):
        x = np.asarray(x, dtype=float)
        return np.array([[1.0, 0.0], [0.0, x[0]]])

    def jac(x, i):
        _check_index(i, 2)
        if i == 1:
            return np.zeros((2, 2))
        return np.array([[0.0, 0.0], [1.0, 0.0]])

    def ham(x, p):
        x = np.asarray(x, dtype=float)
        p = np.asarray(p, dtype=float)
        return 0.5 * (p[..., 0] ** 2 + (x[..., 0] * p[..., 1]) ** 2)

    def ham_grad(x, p):
        x = np.asarray(x, dtype=float)
        p = np.asarray(p, dtype=float)
        x1 = x[..., 0]
        p1, p2 = p[..., 0], p[..., 1]
        z = np.zeros_like(x1)
        dHdx = np.stack([x1 * p2 * p2, z], axis=-1)
        dHdp = np.stack([p1, x1 * x1 * p2], axis=-1)
        return dHdx, dHdp

    def maximizer(x, p):
        x = np.asarray(x, dtype=float)
        p = np.asarray(p, dtype=float)
        return np.stack([p[..., 0], x[..., 0] * p[..., 1]], axis=-1)

    def control_rhs(x, u):
        x = np.asarray(x, dtype=float)
        u = np.asarray(u, dtype=float)
        return np.stack([u[..., 0], x[..., 0] * u[..., 1]], axis=-1)

    return ControlSystemSpec(
        name="grushin",
        n=2,
        k=2,
        fields_eval=fields,
        jacobian_eval=jac,
        lagrangian=_quadratic_lagrangian,
        hamiltonian=ham,
        hamiltonian_grad=ham_grad,
        maximizer=maximizer,
        control_rhs=control_rhs,
        vectorized=True,
    )


def heisenberg() -> ControlSystemSpec:
    """The Heisenberg group with the left-invariant frame
    X1 = d/dx - (y/2) d/dz, X2 = d/dy + (x/2) d/dz."""

    def fields(x):
        x = np.asarray(x, dtype=float)
        return np.array(
            [[1.0, 0.0, -0.5 * x[1]], [0.0, 1.0, 0.5 * x[0]]]
        )

    def jac(x, i):
        _check_index(i, 2)
        J = np.zeros((3, 3))
        if i == 1:
            J[2, 1] = -0.5
        else:
            J[2, 0] = 0.5
        return J

    def _controls(x, p):
        x = np.asarray(x, dtype=float)
        p = np.asarray(p, dtype=float)
        u1 = p[..., 0] - 0.5 * x[..., 1] * p[..., 2]
        u2 = p[..., 1] + 0.5 * x[..., 0] * p[..., 2]
        return u1, u2

    def ham(x, p):
        u1, u2 = _controls(x, p)
        return 0.5 * (u1 * u1 + u2 * u2)

    def ham_grad(x, p):
        x = np.asarray(x, dtype=float)
        p = np.asarray(p, dtype=float)
        u1, u2 = _controls(x, p)
        p3 = p[..., 2]
        z = np.zeros_like(u1)
        dHdx = np.stack([0.5 * u2 * p3, -0.5 * u1 * p3, z], axis=-1)
        dHdp = np.stack(
            [u1, u2, -0.5 * x[..., 1] * u1 + 0.5 * x[..., 0] * u2], axis=-1
        )
        return dHdx, dHdp

    def maximizer(x, p):
        u1, u2 = _controls(x, p)
        return np.stack([u1, u2], axis=-1)

    def control_rhs(x, u):
        x = np.asarray(x, dtype=float)
        u = np.asarray(u, dtype=float)
        u1, u2 = u[..., 0], u[..., 1]
        return np.stack(
            [u1, u2, 0.5 * (x[..., 0] * u2 - x[..., 1] * u1)], axis=-1
        )

    return ControlSystemSpec(
        name="heisenberg",
        n=3,
        k=2,
        fields_eval=fields,
        jacobian_eval=jac,
        lagrangian=_quadratic_lagrangian,
        hamiltonian=ham,
        hamiltonian_grad=ham_grad,
        maximizer=maximizer,
        control_rhs=control_rhs,
        vectorized=True,
    )


def euclidean(n: int) -> ControlSystemSpec:
    """R^n with the coordinate frame; H = |p|^2 / 2."""
    if n < 1:
        raise ValueError("euclidean dimension must be >= 1")

    def fields(x):
        return np.eye(n)

    def jac(x, i):
        _check_index(i, n)
        return np.zeros((n, n))

    def ham(x, p):
        p = np.asarray(p, dtype=float)
        return 0.5 * np.sum(p * p, axis=-1)

    def ham_grad(x, p):
        p = np.asarray(p, dtype=float)
        return np.zeros_like(p), p.copy()

    def maximizer(x, p):
        return np.asarray(p, dtype=float).copy()

    def control_rhs(x, u):
        return np.asarray(u, dtype=float).copy()

    return ControlSystemSpec(
        name=f"euclidean{n}",
        n=n,
        k=n,
        fields_eval=fields,
        jacobian_eval=jac,
        lagrangian=_quadratic_lagrangian,
        hamiltonian=ham,
        hamiltonian_grad=ham_grad,
        maximizer=maximizer,
        control_rhs=control_rhs,
        vectorized=True,
    )


def frame_system(
    name: str,
    n: int,
    k: int,
    fields_eval: Callable[[np.ndarray], np.ndarray],
    jacobian_eval: Optional[Callable[[np.ndarray, int], np.ndarray]] = None,
    fd_step: float = 1e-6,
) -> ControlSystemSpec:
    """Build a system from a user-supplied frame.

    The Lagrangian, max-Hamiltonian and its gradient are derived generically
    from the frame.  When no analytic Jacobian is given, a central
    finite-difference fallback of step ``fd_step`` is used.
    """

    def fd_jacobian(x, i):
        _check_index(i, k)
        x = np.asarray(x, dtype=float)
        J = np.empty((n, n))
        for c in range(n):
            dx = np.zeros(n)
            dx[c] = fd_step
            fp = np.asarray(fields_eval(x + dx))[i - 1]
            fm = np.asarray(fields_eval(x - dx))[i - 1]
            J[:, c] = (fp - fm) / (2.0 * fd_step)
        return J

    jac = jacobian_eval if jacobian_eval is not None else fd_jacobian

    def ham(x, p):
        X = np.asarray(fields_eval(x), dtype=float)
        alpha = X @ np.asarray(p, dtype=float)
        return 0.5 * float(alpha @ alpha)

    def ham_grad(x, p):
        x = np.asarray(x, dtype=float)
        p = np.asarray(p, dtype=float)
        X = np.asarray(fields_eval(x), dtype=float)
        alpha = X @ p
        dHdp = alpha @ X
        dHdx = np.zeros(n)
        for i in range(1, k + 1):
            dHdx += alpha[i - 1] * (jac(x, i).T @ p)
        return dHdx, dHdp

    def maximizer(x, p):
        X = np.asarray(fields_eval(x), dtype=float)
        return X @ np.asarray(p, dtype=float)

    def control_rhs(x, u):
        X = np.asarray(fields_eval(x), dtype=float)
        return np.asarray(u, dtype=float) @ X

    return ControlSystemSpec(
        name=name,
        n=n,
        k=k,
        fields_eval=lambda x: np.asarray(fields_eval(x), dtype=float),
        jacobian_eval=jac,
        lagrangian=_quadratic_lagrangian,
        hamiltonian=ham,
        hamiltonian_grad=ham_grad,
        maximizer=maximizer,
        control_rhs=control_rhs,
        vectorized=False,
    )


_BUILTINS = {"grushin": grushin, "heisenberg": heisenberg}


def make_system(name: str) -> ControlSystemSpec:
    """Resolve a system by name: ``grushin``, ``heisenberg`` or ``euclidean<n>``."""
    key = name.strip().lower()
    if key in _BUILTINS:
        return _BUILTINS[key]()
    if key.startswith("euclidean"):
        suffix = key[len("euclidean"):]
        if suffix.isdigit() and int(suffix) >= 1:
            return euclidean(int(suffix))
    raise ValueError(
        f"unknown system {name!r}; expected grushin, heisenberg or euclidean<n>"
    )


# ---------------------------------------------------------------------------
# Frame operations
# ---------------------------------------------------------------------------


def _check_index(i: int, k: int) -> None:
    if not 1 <= i <= k:
        raise IndexError(f"field index {i} out of range 1..{k}")


def lie_bracket(sys: ControlSystemSpec, i: int, j: int, x) -> np.ndarray:
    """[X_i, X_j](x) = DX_j(x) X_i(x) - DX_i(x) X_j(x); i, j are 1-based."""
    sys.require_frame()
    _check_index(i, sys.k)
    _check_index(j, sys.k)
    x = np.asarray(x, dtype=float)
    X = sys.fields_eval(x)
    Ji = sys.jacobian_eval(x, i)
    Jj = sys.jacobian_eval(x, j)
    return Jj @ X[i - 1] - Ji @ X[j - 1]


def is_two_generating(sys: ControlSystemSpec, x, tol: float = 1e-9) -> bool:
    """True iff the frame together with its pairwise brackets spans R^n at x.

    Rank is decided by singular values above ``tol`` relative to the largest;
    degenerate input (all fields zero) simply yields False.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    sys.require_frame()
    x = np.asarray(x, dtype=float)
    rows = [sys.fields_eval(x)]
    for i in range(1, sys.k + 1):
        for j in range(i + 1, sys.k + 1):
            rows.append(lie_bracket(sys, i, j, x)[None, :])
    M = np.vstack(rows)
    s = np.linalg.svd(M, compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return False
    return int(np.sum(s > tol * s[0])) == sys.n


def goh_residual(sys: ControlSystemSpec, traj) -> float:
    """Largest violation of p(t)(X_i) = p(t)([X_i, X_j]) = 0 along a trajectory.

    A residual well above zero certifies the trajectory is not a candidate
    annihilating the frame and its brackets; zero covectors give zero.
    """
    sys.require_frame()
    if traj.covectors is None:
        raise ValueError("trajectory carries no covectors")
    worst = 0.0
    for x, p in zip(traj.states, traj.covectors):
        X = sys.fields_eval(x)
        worst = max(worst, float(np.max(np.abs(X @ p))))
        for i in range(1, sys.k + 1):
            for j in range(i + 1, sys.k + 1):
                worst = max(worst, abs(float(lie_bracket(sys, i, j, x) @ p)))
    return worst


# ---------------------------------------------------------------------------
# Lagrangian validation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LagrangianConditionReport:
    name: str
    passed: bool
    worst_value: float
    witness_x: np.ndarray
    witness_u: np.ndarray
    detail: str


@dataclass(frozen=True)
class LagrangianReport:
    conditions: tuple

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.conditions)

    def __getitem__(self, name: str) -> LagrangianConditionReport:
        for c in self.conditions:
            if c.name == name:
                return c
        raise KeyError(name)


def _sample_box(box: np.ndarray, per_dim: int) -> np.ndarray:
    axes = [np.linspace(lo, hi, per_dim) for lo, hi in box]
    grids = np.meshgrid(*axes, indexing="ij")
    return np.stack([g.ravel() for g in grids], axis=-1)


def _unit_directions(k: int, count: int = 8) -> np.ndarray:
    if k == 1:
        return np.array([[1.0], [-1.0]])
    rng = np.random.default_rng(20240915)
    d = rng.standard_normal((count, k))
    return d / np.linalg.norm(d, axis=1, keepdims=True)


def validate_lagrangian(
    sys: ControlSystemSpec,
    box,
    lagrangian: Optional[Callable[[np.ndarray, np.ndarray], float]] = None,
) -> LagrangianReport:
    """Sampled check of the regularity conditions a running cost must satisfy.

    Three conditions are probed on the compact box (an (n, 2) array of
    per-coordinate bounds):

    1. superlinear growth: |u| / (L + K) has to die out along a ladder of
       control magnitudes;
    2. bounded state sensitivity: |dL/dx| <= a (L + |u|) + b on the box;
    3. strong convexity of u -> L(x, u), via finite-difference Hessian
       eigenvalues.

    An alternative ``lagrangian`` may be supplied to probe; by default the
    system's own is used.  Each condition reports its worst sampled witness.
    """
    L = lagrangian if lagrangian is not None else sys.lagrangian
    box = np.asarray(box, dtype=float).reshape(sys.n, 2)
    xs = _sample_box(box, per_dim=5 if sys.n <= 2 else 3)
    dirs = _unit_directions(sys.k)
    ladder = 2.0 ** np.arange(0, 11)  # |u| = 1 .. 1024

    # (1) superlinearity: ratios must decrease and end near zero.
    K = 1.0
    ratios = []
    worst_pt = (xs[0], dirs[0] * ladder[0])
    for r in ladder:
        worst = 0.0
        for x in xs:
            for d in dirs:
                u = r * d
                val = r / (L(x, u) + K)
                if val > worst:
                    worst = val
                    if r == ladder[-1]:
                        worst_pt = (x, u)
        ratios.append(worst)
    decreasing = all(ratios[m + 1] <= ratios[m] * (1 + 1e-9) for m in range(len(ratios) - 1))
    super_ok = decreasing and ratios[-1] <= 0.05 * ratios[0]
    cond1 = LagrangianConditionReport(
        name="superlinearity",
        passed=bool(super_ok),
        worst_value=float(ratios[-1]),
        witness_x=np.asarray(worst_pt[0]),
        witness_u=np.asarray(worst_pt[1]),
        detail=f"ratio ladder {ratios[0]:.3g} -> {ratios[-1]:.3g}",
    )

    # (2) |dL/dx| <= a (L + |u|) + b: the normalized ratio must not keep
    # growing with |u|.
    h = 1e-5
    rung_worst = []
    witness = (xs[0], dirs[0], 0.0)
    for r in ladder[:7]:  # |u| up to 64 is plenty to reveal growth
        worst = 0.0
        for x in xs:
            for d in dirs:
                u = r * d
                g = np.zeros(sys.n)
                for c in range(sys.n):
                    dx = np.zeros(sys.n)
                    dx[c] = h
                    g[c] = (L(x + dx, u) - L(x - dx, u)) / (2 * h)
                val = float(np.linalg.norm(g)) / (1.0 + L(x, u) + float(np.linalg.norm(u)))
                if val > worst:
                    worst = val
                    witness = (x, u, val)
        rung_worst.append(worst)
    base = max(max(rung_worst[:-1]), 1e-12)
    grad_ok = rung_worst[-1] <= 2.0 * base + 1e-9
    cond2 = LagrangianConditionReport(
        name="state-gradient-bound",
        passed=bool(grad_ok),
        worst_value=float(witness[2]),
        witness_x=np.asarray(witness[0]),
        witness_u=np.asarray(witness[1]),
        detail=f"normalized |dL/dx| per rung {np.round(rung_worst, 6).tolist()}",
    )

    # (3) strong convexity in u: smallest FD-Hessian eigenvalue stays positive.
    h = 1e-4
    min_eig = np.inf
    witness3 = (xs[0], np.zeros(sys.k))
    probes = np.vstack([np.zeros(sys.k), dirs * 0.7, dirs * 2.3])
    for x in xs:
        for u0 in probes:
            H = np.empty((sys.k, sys.k))
            for a in range(sys.k):
                for b in range(sys.k):
                    da = np.zeros(sys.k)
                    db = np.zeros(sys.k)
                    da[a] = h
                    db[b] = h
                    H[a, b] = (
                        L(x, u0 + da + db)
                        - L(x, u0 + da - db)
                        - L(x, u0 - da + db)
                        + L(x, u0 - da - db)
                    ) / (4 * h * h)
            lam = float(np.min(np.linalg.eigvalsh(0.5 * (H + H.T))))
            if lam < min_eig:
                min_eig = lam
                witness3 = (x, u0)
    conv_ok = min_eig > 1e-6
    cond3 = LagrangianConditionReport(
        name="strong-convexity",
        passed=bool(conv_ok),
        worst_value=float(min_eig),
        witness_x=np.asarray(witness3[0]),
        witness_u=np.asarray(witness3[1]),
        detail=f"min Hessian eigenvalue {min_eig:.3g}",
    )

    return LagrangianReport(conditions=(cond1, cond2, cond3))
