"""Explicit Euler solver for ``d_t u = F(D^2 u) - f`` on a normal-coordinate lattice.

``F`` is the Laplacian or a Pucci operator applied to the lattice's
positive-coefficient effective Hessian, so every admissible coefficient
matrix gives a stencil with nonnegative neighbour weights.  The scheme is
therefore monotone whenever the split of the ellipticity class is
nonnegative (``Lam <= 3 lam`` on surfaces) and ``dt`` stays below the
centre-coefficient limit; :meth:`ProblemSpec.monotonicity` reports both.
Dirichlet data are imposed on nodes without a full stencil.  The step is
``dt = cfl * h^2 / (n * Lam)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import pucci
from .grid import GridFunction, Lattice
from .pucci import OperatorSpec

SpaceTimeFn = Callable[[np.ndarray, float], np.ndarray]


class SolverError(RuntimeError):
    pass


@dataclass
class ProblemSpec:
    lattice: Lattice
    operator: OperatorSpec
    initial: SpaceTimeFn | np.ndarray
    t_start: float = 0.0
    horizon: float = 1.0
    boundary: SpaceTimeFn | None = None
    source: SpaceTimeFn | None = None
    cfl: float = 0.4
    store_every: int = 1

    def __post_init__(self):
        if not 0 < self.cfl <= 0.5:
            raise ValueError("cfl must lie in (0, 0.5]")
        if not self.horizon > self.t_start:
            raise ValueError("horizon must exceed the start time")
        if self.store_every < 1:
            raise ValueError("store_every must be >= 1")

    @property
    def dt_max(self) -> float:
        n = self.lattice.M.dim
        return self.cfl * self.lattice.h**2 / (n * self.operator.ell.Lam)

    @property
    def steps(self) -> int:
        raw = int(math.ceil((self.horizon - self.t_start) / self.dt_max - 1e-9))
        k = self.store_every
        return -(-raw // k) * k  # stored frames stay uniformly spaced

    @property
    def dt(self) -> float:
        return (self.horizon - self.t_start) / self.steps

    def monotonicity(self) -> dict:
        """Smallest neighbour weight over the ellipticity class and the step limit it implies."""
        _, _, _, split, wts = self.lattice.monotone_stencil
        per_nbr = np.einsum("ikm,ikab->imab", wts, split)  # weight of neighbour m is tr(A per_nbr_m)
        W = per_nbr.sum(axis=1)  # centre coefficient is -tr(A W)
        if self.operator.kind == "laplacian":
            weights = np.trace(per_nbr, axis1=-2, axis2=-1)
            load = np.trace(W, axis1=-2, axis2=-1)
        else:
            weights = pucci.pucci_minus(self.operator.ell, per_nbr)
            load = pucci.pucci_plus(self.operator.ell, W)
        limit = 1.0 / float(np.max(load)) if load.size else math.inf
        min_weight = float(np.min(weights)) if weights.size else 0.0
        return {
            "min_neighbor_weight": min_weight,
            "dt_limit": limit,
            "monotone": bool(min_weight >= 0 and self.dt <= limit * (1 + 1e-12)),
        }

    def initial_values(self) -> np.ndarray:
        if callable(self.initial):
            vals = np.broadcast_to(self.initial(self.lattice.points, self.t_start), (self.lattice.size,))
        else:
            vals = np.asarray(self.initial, dtype=float)
        vals = np.array(vals, dtype=float)
        if vals.shape != (self.lattice.size,) or not np.all(np.isfinite(vals)):
            raise ValueError("initial data must be finite with one value per node")
        return vals

    def to_dict(self) -> dict:
        return {
            "lattice": self.lattice.to_dict(),
            "operator": self.operator.to_dict(),
            "t_start": self.t_start,
            "horizon": self.horizon,
            "cfl": self.cfl,
            "dt": self.dt,
            "steps": self.steps,
            "store_every": self.store_every,
        }


def discrete_hessian(u: GridFunction, node: int, time_index: int = -1) -> np.ndarray:
    """Fitted Hessian at one interior node, in the frame at that node."""
    L = u.lattice
    if not L.interior[node]:
        raise ValueError("boundary node has no full stencil")
    return L.hessian(u.values[time_index])[node]


def effective_hessian(lattice: Lattice, values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Interior nodes and the effective Hessian ``T`` there (leading batch axes kept)."""
    nodes, nbr, op, _, _ = lattice.monotone_stencil
    diff = values[..., nbr] - values[..., nodes][..., None]
    coef = np.einsum("ipk,...ik->...ip", op, diff)
    n = lattice.M.dim
    H = np.empty(coef.shape[:-1] + (n, n))
    k = 0
    for a in range(n):
        for b in range(a, n):
            H[..., a, b] = H[..., b, a] = coef[..., k]
            k += 1
    return nodes, H


def operator_values(spec: ProblemSpec, values: np.ndarray) -> np.ndarray:
    """``F(D^2 u)`` at interior nodes; NaN elsewhere."""
    nodes, H = effective_hessian(spec.lattice, values)
    out = np.full(values.shape, np.nan)
    out[..., nodes] = pucci.apply(spec.operator, H)
    return out


def step(spec: ProblemSpec, u_now: np.ndarray, t: float, dt: float | None = None) -> np.ndarray:
    dt = spec.dt if dt is None else dt
    if dt > spec.dt_max * (1 + 1e-12):
        raise ValueError(f"time step {dt} violates the CFL limit {spec.dt_max}")
    L = spec.lattice
    Fu = operator_values(spec, u_now)
    out = u_now.copy()
    inner = L.interior
    rhs = Fu[inner]
    if spec.source is not None:
        rhs = rhs - np.broadcast_to(spec.source(L.points[inner], t), rhs.shape)
    out[inner] = u_now[inner] + dt * rhs
    if spec.boundary is not None:
        edge = ~inner
        out[edge] = np.broadcast_to(spec.boundary(L.points[edge], t + dt), (int(edge.sum()),))
    return out


@dataclass
class SolveResult:
    u: GridFunction
    residual: float
    steps: int
    dt: float
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"residual": self.residual, "steps": self.steps, "dt": self.dt, "diagnostics": self.diagnostics, "grid": self.u.metadata()}


def residual(spec: ProblemSpec, u: GridFunction, chunk: int = 64) -> float:
    """``max |F(D^2 u) - d_t u - f|`` over interior nodes and interior stored times (centred in time)."""
    if u.times.size < 3:
        return math.nan
    dudt = u.time_derivative("centered")
    inner = spec.lattice.interior
    worst = 0.0
    for k0 in range(1, u.times.size - 1, chunk):
        ks = np.arange(k0, min(k0 + chunk, u.times.size - 1))
        r = operator_values(spec, u.values[ks]) - dudt[ks]
        if spec.source is not None:
            r -= np.stack([np.broadcast_to(spec.source(u.lattice.points, u.times[k]), (u.lattice.size,)) for k in ks])
        worst = max(worst, float(np.max(np.abs(r[:, inner]))))
    return worst


def solve(spec: ProblemSpec) -> SolveResult:
    vals = spec.initial_values()
    dt = spec.dt
    frames = [vals]
    times = [spec.t_start]
    t = spec.t_start
    for k in range(1, spec.steps + 1):
        vals = step(spec, vals, t, dt)
        t = spec.t_start + k * dt
        if not np.all(np.isfinite(vals)):
            raise SolverError(f"non-finite values at step {k} (t = {t:.6g})")
        if k % spec.store_every == 0:
            frames.append(vals)
            times.append(t)
    u = GridFunction(spec.lattice, np.array(times), np.stack(frames))
    res = residual(spec, u)
    return SolveResult(u, res, spec.steps, dt, {"operator": spec.operator.kind, "cfl": spec.cfl, "stencil": "positive-coefficient pair differences", **spec.monotonicity()})
