"""Hamiltonian flow on the cotangent bundle and extremal diagnostics.

The flow of the max-Hamiltonian is integrated with a fixed-step classical
RK4 scheme (reproducible, order 4; energy drift is monitored rather than
enforced).  On top of the integrator sit an energy-drift diagnostic, a
maximum-principle checker for candidate extremals and the running-cost state
extension that turns an energy-minimization problem into endpoint form.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .systems import ControlSystemSpec

__all__ = [
    "PhasePoint",
    "Trajectory",
    "FlowBlowupError",
    "ham_flow",
    "flow_endpoints",
    "energy_drift",
    "pmp_check",
    "PmpReport",
    "uniform_control_grid",
    "bolza_to_mayer",
]


class FlowBlowupError(RuntimeError):
    """Raised when the integrated state leaves the finite range."""

    def __init__(self, time: float):
        super().__init__(f"flow produced non-finite values at t = {time:.6g}")
        self.time = time


@dataclass(frozen=True)
class PhasePoint:
    """A cotangent-bundle point (x, p)."""

    x: np.ndarray
    p: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "x", np.atleast_1d(np.asarray(self.x, dtype=float)))
        object.__setattr__(self, "p", np.atleast_1d(np.asarray(self.p, dtype=float)))
        if self.x.shape != self.p.shape:
            raise ValueError("x and p must have the same shape")
        if not (np.all(np.isfinite(self.x)) and np.all(np.isfinite(self.p))):
            raise ValueError("phase point entries must be finite")


@dataclass(frozen=True)
class Trajectory:
    """Time-sampled extremal: states, covectors, maximizing controls, energy.

    All arrays share the leading length of ``times``; controls are recovered
    from the Hamiltonian maximizer at each sample (u_i = p.X_i for the
    built-in quadratic running cost).
    """

    times: np.ndarray
    states: np.ndarray
    covectors: np.ndarray
    controls: np.ndarray
    energy: np.ndarray

    def __post_init__(self):
        m = len(self.times)
        if not (
            len(self.states) == len(self.covectors) == len(self.controls) == len(self.energy) == m
        ):
            raise ValueError("trajectory arrays must share one length")
        if m and self.times[0] != 0.0:
            raise ValueError("trajectories start at time 0")
        if m > 1 and not np.all(np.diff(self.times) > 0):
            raise ValueError("times must be strictly increasing")

    def __len__(self) -> int:
        return len(self.times)

    @property
    def endpoint(self) -> np.ndarray:
        return self.states[-1]

    @property
    def final_covector(self) -> np.ndarray:
        return self.covectors[-1]


def _phase_rhs(sys: ControlSystemSpec, z: np.ndarray, n: int) -> np.ndarray:
    x, p = z[..., :n], z[..., n:]
    dHdx, dHdp = sys.hamiltonian_grad(x, p)
    return np.concatenate([dHdp, -dHdx], axis=-1)


def _rk4_final(sys, z0, t_final, steps):
    """Endpoint of the RK4 flow; z0 may carry leading batch axes."""
    n = z0.shape[-1] // 2
    h = t_final / steps
    z = z0.astype(float, copy=True)
    if sys.vectorized or z.ndim == 1:
        for m in range(steps):
            k1 = _phase_rhs(sys, z, n)
            k2 = _phase_rhs(sys, z + (0.5 * h) * k1, n)
            k3 = _phase_rhs(sys, z + (0.5 * h) * k2, n)
            k4 = _phase_rhs(sys, z + h * k3, n)
            z += (h / 6.0) * (k1 + 2.0 * (k2 + k3) + k4)
            if not np.all(np.isfinite(z)):
                raise FlowBlowupError((m + 1) * h)
        return z
    out = np.empty_like(z)
    for r in range(z.shape[0]):
        out[r] = _rk4_final(sys, z[r], t_final, steps)
    return out


def _step_count(t_final: float, step: float) -> int:
    return max(1, int(np.ceil(t_final / step - 1e-12)))


def ham_flow(
    sys: ControlSystemSpec,
    start: PhasePoint,
    t_final: float = 1.0,
    step: float = 1e-3,
) -> Trajectory:
    """Integrate the Hamiltonian flow from ``start`` over [0, t_final].

    Fixed-step classical RK4 sampled at every step; the step is shrunk
    slightly if needed so the horizon is hit exactly.  Raises
    :class:`FlowBlowupError` (with the failure time) if the state leaves the
    finite range.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    if t_final <= 0:
        raise ValueError("t_final must be positive")
    n = sys.n
    steps = _step_count(t_final, step)
    h = t_final / steps
    z = np.concatenate([start.x, start.p])
    if z.shape != (2 * n,):
        raise ValueError(f"phase point has dimension {z.size // 2}, system expects {n}")
    traj = np.empty((steps + 1, 2 * n))
    traj[0] = z
    for m in range(steps):
        k1 = _phase_rhs(sys, z, n)
        k2 = _phase_rhs(sys, z + (0.5 * h) * k1, n)
        k3 = _phase_rhs(sys, z + (0.5 * h) * k2, n)
        k4 = _phase_rhs(sys, z + h * k3, n)
        z = z + (h / 6.0) * (k1 + 2.0 * (k2 + k3) + k4)
        if not np.all(np.isfinite(z)):
            raise FlowBlowupError((m + 1) * h)
        traj[m + 1] = z
    times = np.linspace(0.0, t_final, steps + 1)
    states = traj[:, :n]
    covectors = traj[:, n:]
    if sys.vectorized:
        controls = sys.maximizer(states, covectors)
        energy = np.asarray(sys.hamiltonian(states, covectors), dtype=float)
    else:
        controls = np.stack([sys.maximizer(x, p) for x, p in zip(states, covectors)])
        energy = np.array([sys.hamiltonian(x, p) for x, p in zip(states, covectors)], dtype=float)
    controls = controls.reshape(steps + 1, -1)
    return Trajectory(times=times, states=states, covectors=covectors,
                      controls=controls, energy=energy)


def flow_endpoints(
    sys: ControlSystemSpec,
    x0: np.ndarray,
    p0: np.ndarray,
    t_final: float = 1.0,
    steps: int = 250,
) -> np.ndarray:
    """Time-``t_final`` states of the flow for a batch of initial covectors.

    ``p0`` has shape (m, n); ``x0`` is shared or per-row.  Only the endpoint
    is returned, which keeps multistart shooting cheap.
    """
    p0 = np.atleast_2d(np.asarray(p0, dtype=float))
    x0 = np.asarray(x0, dtype=float)
    if x0.ndim == 1:
        x0 = np.broadcast_to(x0, p0.shape)
    z0 = np.concatenate([x0, p0], axis=-1)
    z = _rk4_final(sys, z0, t_final, steps)
    return z[..., : sys.n]


def energy_drift(traj: Trajectory) -> float:
    """max_m |H(t_m) - H(0)| along the trajectory."""
    if len(traj.energy) == 0:
        raise ValueError("trajectory has no energy samples")
    return float(np.max(np.abs(traj.energy - traj.energy[0])))


# ---------------------------------------------------------------------------
# Maximum-principle checking
# ---------------------------------------------------------------------------


def uniform_control_grid(bound: float, count: int, k: int) -> np.ndarray:
    """Uniform lattice of ``count``^k controls on [-bound, bound]^k."""
    axis = np.linspace(-bound, bound, count)
    grids = np.meshgrid(*([axis] * k), indexing="ij")
    return np.stack([g.ravel() for g in grids], axis=-1)


@dataclass(frozen=True)
class PmpReport:
    """Residuals of the maximum-principle conditions along a trajectory.

    ``adjoint_residual`` measures how far the finite-differenced (xdot, pdot)
    deviates from the Hamiltonian vector field of the frozen-control
    Hamiltonian; ``adjoint_slack`` is the finite-difference truncation
    allowance estimated from the data.  ``max_condition_residual`` is the gap
    between the best control on the grid and the recorded control;
    ``grid_slack`` bounds what a grid of that resolution can miss.
    """

    adjoint_residual: float
    adjoint_slack: float
    max_condition_residual: float
    grid_slack: float
    grid_resolution: float
    form: str

    @property
    def passed(self) -> bool:
        return (
            self.adjoint_residual <= 1e-6 + self.adjoint_slack
            and self.max_condition_residual <= self.grid_slack + 1e-9
        )


def _grid_resolution(grid: np.ndarray) -> float:
    res = 0.0
    for c in range(grid.shape[1]):
        vals = np.unique(grid[:, c])
        if len(vals) > 1:
            res = max(res, float(np.max(np.diff(vals))))
    return res


def pmp_check(
    sys: ControlSystemSpec,
    traj: Trajectory,
    control_grid: np.ndarray,
    form: str = "max",
) -> PmpReport:
    """Verify the maximum-principle conditions along a candidate extremal.

    ``form='max'`` checks the maximized Hamiltonian convention (adjoint flow
    of p.F - L with the recorded control, plus the pointwise maximum
    condition over the grid).  ``form='bolza_min'`` checks the equivalent
    minimum convention after negating the covectors: min over u of
    (-p).F + L is attained at the recorded control.
    """
    sys.require_frame()
    grid = np.atleast_2d(np.asarray(control_grid, dtype=float))
    if grid.size == 0:
        raise ValueError("control grid is empty")
    if grid.shape[1] != sys.k:
        raise ValueError(f"control grid must have {sys.k} columns")
    if len(traj) < 3:
        raise ValueError("trajectory too coarse to finite-difference (need >= 3 samples)")
    if form not in ("max", "bolza_min"):
        raise ValueError("form must be 'max' or 'bolza_min'")

    res = _grid_resolution(grid)
    lo = grid.min(axis=0) - res
    hi = grid.max(axis=0) + res
    if np.any(traj.controls < lo) or np.any(traj.controls > hi):
        raise ValueError("recorded controls fall outside the control grid coverage")

    times = traj.times
    states = traj.states
    covectors = traj.covectors

    # (a) adjoint residual: centered differences of (x, p) against the
    # Hamiltonian vector field with the control frozen at its recorded value.
    z = np.concatenate([states, covectors], axis=1)
    h = float(times[1] - times[0])
    zdot_fd = (z[2:] - z[:-2]) / (times[2:, None] - times[:-2, None])
    adjoint = 0.0
    for m in range(1, len(times) - 1):
        x, p, u = states[m], covectors[m], traj.controls[m]
        X = sys.fields_eval(x)
        xdot = u @ X
        pdot = np.zeros(sys.n)
        for i in range(1, sys.k + 1):
            pdot -= u[i - 1] * (sys.jacobian_eval(x, i).T @ p)
        model = np.concatenate([xdot, pdot])
        adjoint = max(adjoint, float(np.max(np.abs(zdot_fd[m - 1] - model))))

    # FD truncation allowance h^2 |z'''| / 6, with |z'''| estimated from
    # third differences of the samples themselves.
    if len(times) >= 4:
        third = np.diff(z, n=3, axis=0) / h**3
        m3 = float(np.max(np.abs(third))) if third.size else 0.0
    else:
        m3 = 0.0
    adjoint_slack = 2.0 * (h * h / 6.0) * m3

    # (b) maximum-condition residual over the finite grid.
    sign = 1.0 if form == "max" else -1.0
    worst = -np.inf
    for m in range(len(times)):
        x, p, u = states[m], sign * covectors[m], traj.controls[m]
        X = sys.fields_eval(x)
        alpha = X @ p  # p.X_i for each field
        if form == "max":
            grid_vals = grid @ alpha - 0.5 * np.sum(grid * grid, axis=1)
            rec_val = float(u @ alpha - 0.5 * u @ u)
            gap = float(np.max(grid_vals)) - rec_val
        else:
            # min over u of (-p).F + L must be attained at the recorded u
            grid_vals = grid @ (-alpha) + 0.5 * np.sum(grid * grid, axis=1)
            rec_val = float(u @ (-alpha) + 0.5 * u @ u)
            gap = rec_val - float(np.min(grid_vals))
        worst = max(worst, gap)

    grid_slack = sys.k * res * res / 8.0 if res > 0 else 0.0
    return PmpReport(
        adjoint_residual=adjoint,
        adjoint_slack=adjoint_slack,
        max_condition_residual=float(worst),
        grid_slack=grid_slack,
        grid_resolution=res,
        form=form,
    )


# ---------------------------------------------------------------------------
# Running-cost state extension
# ---------------------------------------------------------------------------


def bolza_to_mayer(sys: ControlSystemSpec) -> ControlSystemSpec:
    """Append a running-cost coordinate z with zdot = L(x, u).

    The returned (n+1)-state system is in endpoint (Mayer) form: its
    Hamiltonian is the maximized p.(F, L) over controls, finite on the
    half-space where the appended costate l is negative.  Flowing from
    (x, z=0, p, l=-1) reproduces the base flow and accumulates
    z(t) = integral of L.  The extended dynamics are no longer affine in the
    controls, so the result carries no frame.
    """
    n = sys.n

    def _split(x, p):
        x = np.asarray(x, dtype=float)
        p = np.asarray(p, dtype=float)
        return x[..., :n], p[..., :n], p[..., n]

    def ham(x, p):
        xb, pb, l = _split(x, p)
        if np.any(l >= 0):
            raise ValueError("extended Hamiltonian requires a negative cost costate")
        return sys.hamiltonian(xb, pb) * (-1.0 / l)

    def ham_grad(x, p):
        xb, pb, l = _split(x, p)
        if np.any(l >= 0):
            raise ValueError("extended Hamiltonian requires a negative cost costate")
        Hb = np.asarray(sys.hamiltonian(xb, pb), dtype=float)
        dHdx_b, dHdp_b = sys.hamiltonian_grad(xb, pb)
        scale = (-1.0 / l)[..., None] if np.ndim(l) else -1.0 / l
        zero = np.zeros(np.shape(l) + (1,)) if np.ndim(l) else np.zeros(1)
        dHdx = np.concatenate([dHdx_b * scale, zero], axis=-1)
        dHdl = (Hb / (l * l))[..., None] if np.ndim(l) else np.array([Hb / (l * l)])
        dHdp = np.concatenate([dHdp_b * scale, dHdl], axis=-1)
        return dHdx, dHdp

    def maximizer(x, p):
        xb, pb, l = _split(x, p)
        scale = (-1.0 / l)[..., None] if np.ndim(l) else -1.0 / l
        return sys.maximizer(xb, pb) * scale

    return ControlSystemSpec(
        name=f"{sys.name}+cost",
        n=n + 1,
        k=sys.k,
        fields_eval=None,
        jacobian_eval=None,
        lagrangian=lambda x, u: 0.0,
        hamiltonian=ham,
        hamiltonian_grad=ham_grad,
        maximizer=maximizer,
        vectorized=sys.vectorized,
    )
