"""Lattices in normal coordinates, sampled space-time functions and discrete jets.

A :class:`Lattice` is the image under ``exp_{z0}`` of the Cartesian grid
``h * Z^n`` clipped to the ball of radius ``r``.  Each node carries a cell
volume (the Riemannian volume element at the node times ``h^n``) and the
``3^n - 1`` index neighbours.  Discrete first and second derivatives come from
a weighted least-squares quadratic fit in normal coordinates centred at the
node, which is exact for functions quadratic in those coordinates.

The solver uses a second, positive-coefficient stencil
(:attr:`Lattice.monotone_stencil`): one three-point second difference per
pair of opposite neighbours, with a centred correction (zero first and
second moments beyond the drift it cancels) for the curvature of the
coordinate lines.  A fixed linear split of a coefficient
matrix over those directions turns ``tr(A D^2 u)`` into ``tr(A T)`` for one
effective matrix ``T`` per node.
"""

from __future__ import annotations

import csv
import itertools
import json
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import geometry as geo

AXIS_WEIGHT = 1.0
DIAGONAL_WEIGHT = 0.01


def _offsets(n: int) -> np.ndarray:
    offs = [o for o in itertools.product((-1, 0, 1), repeat=n) if any(o)]
    # axis neighbours first, then diagonals
    offs.sort(key=lambda o: (sum(abs(c) for c in o), o))
    return np.array(offs, dtype=int)


def _quad_terms(xi: np.ndarray) -> np.ndarray:
    """Columns of the quadratic fit: ``xi_a`` then ``xi_a xi_b`` (``a <= b``, halved on the diagonal)."""
    n = xi.shape[-1]
    cols = [xi[..., a] for a in range(n)]
    for a in range(n):
        for b in range(a, n):
            cols.append((0.5 if a == b else 1.0) * xi[..., a] * xi[..., b])
    return np.stack(cols, axis=-1)


class Lattice:
    """Normal-coordinate Cartesian lattice on ``B_r(z0)``."""

    def __init__(self, M: geo.ModelManifold, center, radius: float, h: float):
        if not (h > 0 and radius > 0):
            raise ValueError("mesh h and radius must be positive")
        self.M = M
        self.center = geo.check_point(M, center if center is not None else M.origin()).copy()
        self.radius = float(radius)
        self.h = float(h)
        n = M.dim
        m = int(np.ceil(self.radius / self.h))
        self.half_width = m
        grid = np.stack(np.meshgrid(*([np.arange(-m, m + 1)] * n), indexing="ij"), -1).reshape(-1, n)
        keep = np.linalg.norm(grid * self.h, axis=-1) < self.radius * (1 - 1e-12)
        self.index = grid[keep]
        self.normal = self.index * self.h
        self.points = geo.exp_map(M, self.center, self.normal) if not M.flat else self.center + self.normal
        self.size = len(self.index)
        lookup = -np.ones((2 * m + 1,) * n, dtype=np.int64)
        lookup[tuple((self.index + m).T)] = np.arange(self.size)
        self._lookup = lookup
        self.offsets = _offsets(n)
        nb = self.index[:, None, :] + self.offsets[None, :, :] + m
        ok = np.all((nb >= 0) & (nb <= 2 * m), axis=-1)
        nb = np.clip(nb, 0, 2 * m)
        self.neighbors = np.where(ok, lookup[tuple(np.moveaxis(nb, -1, 0))], -1)
        self.interior = np.all(self.neighbors >= 0, axis=-1)
        rho = np.linalg.norm(self.normal, axis=-1)
        self.cell_volume = self.h**n * geo.sinhc(M.sqrt_kappa * rho) ** (n - 1)
        self.dist_center = rho

    # -- lookup -----------------------------------------------------------
    def node_of(self, idx) -> int:
        idx = np.asarray(idx, dtype=int) + self.half_width
        if np.any(idx < 0) or np.any(idx > 2 * self.half_width):
            return -1
        return int(self._lookup[tuple(idx)])

    def distance_to(self, y) -> np.ndarray:
        return geo.distance(self.M, self.points, y)

    def in_ball(self, c, r: float) -> np.ndarray:
        """Nodes with ``d(node, c) < r``."""
        return self.distance_to(c) < r

    def nearest(self, y) -> int:
        return int(np.argmin(self.distance_to(y)))

    def total_volume(self, mask=None) -> float:
        w = self.cell_volume if mask is None else self.cell_volume[mask]
        return float(np.sum(w))

    # -- jets ----------------------------------------------------------------
    @cached_property
    def _stencil(self):
        """Per interior node: neighbour normal coordinates and the fit operator."""
        nodes = np.flatnonzero(self.interior)
        nbr = self.neighbors[nodes]
        M = self.M
        if M.flat:
            xi = self.points[nbr] - self.points[nodes][:, None, :]
        else:
            xi = geo.log_map(M, self.points[nodes][:, None, :], self.points[nbr])
        X = _quad_terms(xi)  # (N, K, p)
        diag = np.sum(np.abs(self.offsets), axis=-1) > 1
        w = np.where(diag, DIAGONAL_WEIGHT, AXIS_WEIGHT)
        XtW = np.swapaxes(X, -1, -2) * w
        op = np.linalg.solve(XtW @ X, XtW)  # (N, p, K)
        return nodes, nbr, xi, op

    @cached_property
    def monotone_stencil(self):
        """Positive-coefficient effective-Hessian stencil.

        Returns ``(nodes, nbr, op, split, wts)``: ``op`` is ``(N, p, K)`` and
        maps neighbour differences ``u_j - u`` to the upper triangle of ``T``;
        ``split`` is ``(N, P, n, n)`` with ``c_k(A) = tr(A split_k)`` the weight
        of pair ``k``; ``wts`` is ``(N, P, K)``, the neighbour weights of each
        corrected pair difference.
        """
        nodes, nbr, xi, _ = self._stencil
        n = self.M.dim
        offs = [tuple(o) for o in self.offsets]
        plus = [i for i, o in enumerate(offs) if next(c for c in o if c) > 0]
        minus = [offs.index(tuple(-c for c in offs[i])) for i in plus]
        xp, xm = xi[:, plus], xi[:, minus]
        rp = np.linalg.norm(xp, axis=-1)
        rm = np.linalg.norm(xm, axis=-1)
        up, um = xp / rp[..., None], xm / rm[..., None]
        N, P, K = len(nodes), len(plus), len(offs)
        ap = 2.0 / (rp * (rp + rm))
        am = 2.0 / (rm * (rm + rp))
        # pair difference k as weights on the K neighbours (centre weight implied)
        wts = np.zeros((N, P, K))
        rows = np.arange(N)[:, None]
        wts[rows, np.arange(P), np.array(plus)] += ap
        wts[rows, np.arange(P), np.array(minus)] += am
        drift = 2.0 * (up + um) / (rp + rm)[..., None]  # (N, P, n)
        if np.any(np.abs(drift) > 1e-12 / self.h):
            quad = _quad_terms(xi)[..., n:]  # second moments
            X = np.concatenate([xi, quad], axis=-1)  # (N, K, n + p)
            rhs = np.concatenate([-drift, np.zeros(drift.shape[:-1] + (quad.shape[-1],))], axis=-1)
            wts += np.einsum("ikm,ipm->ipk", np.linalg.pinv(np.swapaxes(X, -1, -2)), rhs)
        V = (rp[..., None, None] * up[..., :, None] * up[..., None, :] + rm[..., None, None] * um[..., :, None] * um[..., None, :]) / (rp + rm)[..., None, None]
        tri = [(a, b) for a in range(n) for b in range(a, n)]
        G = np.stack([V[..., a, b] for a, b in tri], axis=-2)  # (N, p, P)
        Pinv = np.linalg.pinv(G)  # (N, P, p): c = Pinv vec(A)
        split = np.zeros((N, P, n, n))
        for j, (a, b) in enumerate(tri):
            split[..., a, b] = Pinv[..., j] * (1.0 if a == b else 0.5)
            split[..., b, a] = split[..., a, b]
        # tr(A T) = sum_k c_k D_k  =>  vec-coefficients of T are Pinv^T D
        op = np.einsum("ikj,ikm->ijm", Pinv, wts)
        for j, (a, b) in enumerate(tri):
            if a != b:
                op[:, j] *= 0.5
        return nodes, nbr, op, split, wts

    def stencil_normals(self):
        """Normal coordinates at each interior node of its neighbours."""
        nodes, _, xi, _ = self._stencil
        return nodes, xi

    def jets(self, values: np.ndarray):
        """Gradient and Hessian in the frame at each node; NaN off the interior.

        ``values`` may carry leading batch axes, e.g. ``(T, N)``.
        """
        values = np.asarray(values, dtype=float)
        nodes, nbr, _, op = self._stencil
        n = self.M.dim
        diff = values[..., nbr] - values[..., nodes][..., None]
        coef = np.einsum("ipk,...ik->...ip", op, diff)
        batch = values.shape[:-1]
        grad = np.full(batch + (self.size, n), np.nan)
        hess = np.full(batch + (self.size, n, n), np.nan)
        grad[..., nodes, :] = coef[..., :n]
        k = n
        H = np.empty(batch + (len(nodes), n, n))
        for a in range(n):
            for b in range(a, n):
                H[..., a, b] = coef[..., k]
                H[..., b, a] = coef[..., k]
                k += 1
        hess[..., nodes, :, :] = H
        return grad, hess

    def hessian(self, values: np.ndarray) -> np.ndarray:
        return self.jets(values)[1]

    def gradient(self, values: np.ndarray) -> np.ndarray:
        return self.jets(values)[0]

    def to_dict(self) -> dict:
        return {
            "manifold": self.M.to_dict(),
            "center": [float(c) for c in self.center],
            "radius": self.radius,
            "h": self.h,
            "nodes": self.size,
        }


@dataclass
class GridFunction:
    """Values of a space-time function on ``lattice x times``; ``values`` has shape ``(T, N)``."""

    lattice: Lattice
    times: np.ndarray
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float).reshape(-1)
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim == 1:
            self.values = self.values[None, :]
        if self.values.shape != (self.times.size, self.lattice.size):
            raise ValueError(f"values shape {self.values.shape} does not match grid {(self.times.size, self.lattice.size)}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("grid values must be finite")
        if self.times.size > 1 and np.any(np.diff(self.times) <= 0):
            raise ValueError("times must increase")

    @classmethod
    def from_callable(cls, lattice: Lattice, times, fn) -> "GridFunction":
        """Sample ``fn(points, t)`` (vectorised over points) at every time."""
        times = np.asarray(times, dtype=float).reshape(-1)
        vals = np.stack([np.broadcast_to(fn(lattice.points, t), (lattice.size,)) for t in times])
        return cls(lattice, times, vals)

    @property
    def M(self) -> geo.ModelManifold:
        return self.lattice.M

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0]) if self.times.size > 1 else 0.0

    @property
    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.values)))

    def with_values(self, values) -> "GridFunction":
        return GridFunction(self.lattice, self.times.copy(), values)

    def time_mask(self, t_lo: float, t_hi: float, closed_left: bool = False) -> np.ndarray:
        """Times in ``(t_lo, t_hi]`` (or ``[t_lo, t_hi]``) with a small relative slack."""
        tol = 1e-9 * max(1.0, abs(t_hi), abs(t_lo))
        left = self.times >= t_lo - tol if closed_left else self.times > t_lo + tol
        return left & (self.times <= t_hi + tol)

    def cylinder_mask(self, c, r: float, t1: float, rho: float) -> np.ndarray:
        """Boolean ``(T, N)`` mask of ``B_r(c) x (t1 - rho, t1]``."""
        return self.time_mask(t1 - rho, t1)[:, None] & self.lattice.in_ball(c, r)[None, :]

    def cell_weights(self) -> np.ndarray:
        """Space-time cell volumes ``(T, N)``; time weights are the trapezoid-free step ``dt``."""
        dt = self.dt if self.times.size > 1 else 1.0
        return np.broadcast_to(self.lattice.cell_volume * dt, self.values.shape)

    def time_derivative(self, scheme: str = "backward") -> np.ndarray:
        """``d/dt`` by backward or centred differences; NaN where undefined."""
        v = self.values
        out = np.full_like(v, np.nan)
        dt = self.dt
        if self.times.size < 2:
            return out
        if scheme == "backward":
            out[1:] = (v[1:] - v[:-1]) / dt
        elif scheme == "centered":
            out[1:-1] = (v[2:] - v[:-2]) / (2 * dt)
        else:
            raise ValueError(f"unknown scheme {scheme!r}")
        return out

    def jets(self):
        return self.lattice.jets(self.values)

    # -- io -------------------------------------------------------------------
    def metadata(self) -> dict:
        return {
            "lattice": self.lattice.to_dict(),
            "times": {"start": float(self.times[0]), "stop": float(self.times[-1]), "count": int(self.times.size)},
        }

    def write_csv(self, path) -> None:
        N = self.lattice.M.ambient_dim
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["node"] + [f"x{i}" for i in range(N)] + ["t", "value"])
            for k, t in enumerate(self.times):
                for i in range(self.lattice.size):
                    w.writerow([i] + [repr(float(c)) for c in self.lattice.points[i]] + [repr(float(t)), repr(float(self.values[k, i]))])
        with open(str(path) + ".json", "w") as fh:
            json.dump(self.metadata(), fh, indent=2, sort_keys=True)

    def write_plot_data(self, path, time_index: int = -1) -> None:
        """Whitespace-separated ``normal coordinates, value`` for gnuplot."""
        L = self.lattice
        data = np.column_stack([L.normal, self.values[time_index]])
        np.savetxt(path, data, fmt="%.10g")


def read_csv(path, lattice: Lattice) -> GridFunction:
    """Load a grid written by :meth:`GridFunction.write_csv` onto a matching lattice."""
    rows = np.loadtxt(path, delimiter=",", skiprows=1)
    times = np.unique(rows[:, -2])
    vals = rows[:, -1].reshape(times.size, lattice.size)
    return GridFunction(lattice, times, vals)


def uniform_times(t_start: float, t_stop: float, count: int) -> np.ndarray:
    return np.linspace(t_start, t_stop, count)
