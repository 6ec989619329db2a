"""Monge map synthesis and displacement interpolation.

The optimal map is realized as the time-1 projection of the Hamiltonian flow
seeded with the negated differential of a potential; intermediate times give
the displacement interpolation.  The potential is tabulated on a rectangular
grid (built from discrete dual potentials or from any callable) and
differentiated with a second-order stencil.

Scale convention: Kantorovich problems in this package use squared-distance
costs c = d^2, while the flow Hamiltonian is the half-energy one whose
unit-time extremal cost is d^2 / 2.  Potentials derived from d^2-duals are
therefore halved, after which -df seeds the flow directly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .flow import PhasePoint, flow_endpoints, ham_flow
from .kantorovich import DiscreteMeasure, solve_kantorovich
from .shooting import (
    _grushin_d2_from_axis,
    connect,
    grushin_geodesic,
    grushin_origin_covector,
)
from .systems import ControlSystemSpec

__all__ = [
    "PotentialField",
    "InterpolationFrames",
    "potential_gradient",
    "potential_from_duals",
    "delta_potential",
    "monge_map",
    "displacement_interpolation",
    "grushin_interpolation_to_delta",
    "pushforward_check",
]


@dataclass(frozen=True)
class PotentialField:
    """A potential sampled on a rectangular lattice.

    ``axes`` are the per-coordinate node positions (uniform spacing);
    ``values`` the potential on the product grid.  Gradients are computed
    once with a central stencil (second-order one-sided at the boundary) and
    interpolated multilinearly inside each cell.
    """

    axes: tuple
    values: np.ndarray

    def __post_init__(self):
        axes = tuple(np.asarray(a, dtype=float) for a in self.axes)
        object.__setattr__(self, "axes", axes)
        vals = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", vals)
        if vals.shape != tuple(len(a) for a in axes):
            raise ValueError("values shape must match the grid axes")
        for a in axes:
            if len(a) < 3 or np.any(np.diff(a) <= 0):
                raise ValueError("axes must be increasing with at least 3 nodes")
        if not np.all(np.isfinite(vals)):
            raise ValueError("potential values must be finite")

    @property
    def dim(self) -> int:
        return len(self.axes)

    @property
    def spacings(self) -> tuple:
        return tuple(float(a[1] - a[0]) for a in self.axes)

    def contains(self, x: np.ndarray) -> bool:
        x = np.asarray(x, dtype=float)
        return all(a[0] < xi < a[-1] for a, xi in zip(self.axes, x))

    def _gradient_interpolators(self):
        cached = getattr(self, "_grad_cache", None)
        if cached is None:
            grads = np.gradient(self.values, *self.axes, edge_order=2)
            if self.dim == 1:
                grads = [grads]
            cached = tuple(
                RegularGridInterpolator(self.axes, g, method="linear")
                for g in grads
            )
            object.__setattr__(self, "_grad_cache", cached)
        return cached

    @classmethod
    def from_function(cls, fn: Callable[[np.ndarray], np.ndarray], box, h: float) -> "PotentialField":
        """Sample ``fn`` (vectorized over an (M, n) array of points) on a grid
        of spacing ``h`` covering ``box`` (an (n, 2) array of bounds)."""
        box = np.asarray(box, dtype=float).reshape(-1, 2)
        axes = []
        for lo, hi in box:
            count = int(np.ceil((hi - lo) / h - 1e-9))
            axes.append(lo + h * np.arange(count + 1))
        mesh = np.meshgrid(*axes, indexing="ij")
        pts = np.stack([m.ravel() for m in mesh], axis=-1)
        vals = np.asarray(fn(pts), dtype=float).reshape(mesh[0].shape)
        return cls(axes=tuple(axes), values=vals)


def potential_gradient(field: PotentialField, x) -> np.ndarray:
    """df at a point strictly inside the grid box."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.shape != (field.dim,):
        raise ValueError(f"point must have dimension {field.dim}")
    if not field.contains(x):
        raise ValueError(f"point {x.tolist()} lies outside the potential grid box")
    interps = field._gradient_interpolators()
    return np.array([float(itp(x)) for itp in interps])


# ---------------------------------------------------------------------------
# Potentials from discrete duals
# ---------------------------------------------------------------------------


def _pairwise_d2(sys: ControlSystemSpec, pts: np.ndarray, targets: np.ndarray, backend: str) -> np.ndarray:
    """Squared distances from every grid point to every target, (M, J)."""
    if backend == "auto":
        if sys.name.startswith("euclidean"):
            backend = "closed-form"
        elif sys.name == "grushin" and np.all(targets[:, 0] == 0.0):
            backend = "closed-form"
        else:
            backend = "shooting"
    if backend == "closed-form":
        if sys.name.startswith("euclidean"):
            diff = pts[:, None, :] - targets[None, :, :]
            return np.sum(diff * diff, axis=-1)
        if sys.name == "grushin" and np.all(targets[:, 0] == 0.0):
            return np.stack(
                [_grushin_d2_from_axis(pts, delta=t[1]) for t in targets], axis=-1
            )
        raise ValueError("closed-form potential unavailable for this setup")
    cols = []
    for t in targets:
        cols.append([connect(sys, p, t).cost for p in pts])
    return np.asarray(cols, dtype=float).T


def potential_from_duals(
    sys: ControlSystemSpec,
    nu: DiscreteMeasure,
    g,
    box,
    h: float,
    backend: str = "auto",
) -> PotentialField:
    """Grid potential f(x) = (1/2) min_j [d^2(x, y_j) - g_j].

    This is the continuum transform of the target-side dual potential g,
    halved to convert from the squared-distance cost of the discrete problem
    to the half-energy scale of the flow Hamiltonian.  Seeding the flow with
    -df then sends each source point to its assigned target at time 1.
    """
    g = np.asarray(g, dtype=float)
    if g.shape != (len(nu),):
        raise ValueError("g must assign one value per target support point")

    def fn(pts):
        d2 = _pairwise_d2(sys, pts, nu.points, backend)
        return 0.5 * np.min(d2 - g[None, :], axis=1)

    return PotentialField.from_function(fn, box, h)


def delta_potential(
    sys: ControlSystemSpec,
    target,
    box,
    h: float,
    backend: str = "auto",
) -> PotentialField:
    """Potential transporting everything to a single target point."""
    target = np.atleast_1d(np.asarray(target, dtype=float))
    nu = DiscreteMeasure(target[None, :], np.array([1.0]))
    return potential_from_duals(sys, nu, np.zeros(1), box, h, backend)


# ---------------------------------------------------------------------------
# Map synthesis and interpolation
# ---------------------------------------------------------------------------


def monge_map(
    sys: ControlSystemSpec,
    field: PotentialField,
    x,
    t: float = 1.0,
    step: float = 1e-3,
) -> np.ndarray:
    """Time-t image of x under the flow seeded with -df at x; identity at t=0."""
    if not 0.0 <= t <= 1.0:
        raise ValueError("t must lie in [0, 1]")
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if t == 0.0:
        return x.copy()
    p0 = -potential_gradient(field, x)
    return ham_flow(sys, PhasePoint(x, p0), t_final=t, step=step).endpoint


@dataclass(frozen=True)
class InterpolationFrames:
    """Point clouds realizing the displacement interpolation at given times."""

    times: np.ndarray
    clouds: np.ndarray  # (T, m, n)
    covectors: np.ndarray  # (m, n) initial covectors -df per source point

    def __post_init__(self):
        object.__setattr__(self, "times", np.asarray(self.times, dtype=float))
        object.__setattr__(self, "clouds", np.asarray(self.clouds, dtype=float))
        object.__setattr__(self, "covectors", np.asarray(self.covectors, dtype=float))
        if self.clouds.shape[0] != len(self.times):
            raise ValueError("one cloud per time is required")
        if np.any(self.times < 0) or np.any(self.times > 1):
            raise ValueError("interpolation times must lie in [0, 1]")


def displacement_interpolation(
    sys: ControlSystemSpec,
    field: PotentialField,
    mu: DiscreteMeasure,
    times: Sequence[float],
    step: float = 1e-3,
) -> InterpolationFrames:
    """Flow the source support to each requested time with one shared potential.

    The frame at t = 0 is the source support itself; per-point evaluation is
    independent, so each time slice is integrated as one batch.
    """
    times = np.asarray(list(times), dtype=float)
    if np.any(times < 0) or np.any(times > 1):
        raise ValueError("times must lie in [0, 1]")
    pts = mu.points
    P0 = np.stack([-potential_gradient(field, x) for x in pts])
    clouds = np.empty((len(times), len(pts), sys.n))
    for m, t in enumerate(times):
        if t == 0.0:
            clouds[m] = pts
        else:
            steps = max(1, int(np.ceil(t / step - 1e-12)))
            clouds[m] = flow_endpoints(sys, pts, P0, t_final=float(t), steps=steps)
    return InterpolationFrames(times=times, clouds=clouds, covectors=P0)


def grushin_interpolation_to_delta(
    x1: float,
    x2: float,
    delta: float = 0.0,
    t: float = 0.0,
) -> np.ndarray:
    """Closed-form interpolation point for Grushin transport to (0, delta).

    The source point rides its minimizing geodesic backward: the covector
    (a, b) reaching (x1, x2) from (0, delta) at time 1 is recovered by
    inversion, and the interpolant at time t is that geodesic evaluated at
    1 - t.  At t = 0 this returns the source, at t = 1 the target exactly.
    """
    a, b = grushin_origin_covector((x1, x2), delta)
    return grushin_geodesic(a, b, delta, 1.0 - t)


def pushforward_check(
    sys: ControlSystemSpec,
    field: PotentialField,
    mu: DiscreteMeasure,
    nu: DiscreteMeasure,
    t: float = 1.0,
    step: float = 1e-3,
) -> float:
    """Euclidean matching cost between the mapped source cloud and the target.

    Small values certify that the synthesized map approximately pushes the
    source measure onto the target.
    """
    frames = displacement_interpolation(sys, field, mu, [t], step=step)
    mapped = frames.clouds[0]
    diff = mapped[:, None, :] - nu.points[None, :, :]
    c = np.sum(diff * diff, axis=-1)
    plan, _ = solve_kantorovich(c, DiscreteMeasure(mapped, mu.weights), nu)
    return plan.value
