"""Discrete inf- and sup-convolutions with certificates.

The inf-convolution of a grid function ``u`` is

    u_eps(x, t) = min over grid nodes (y, s) of  u(y, s) + (d(y, x)^2 + (s - t)^2) / (2 eps),

taken exactly over the sampled nodes.  Because ``u_eps`` is an explicit
minimum it can be evaluated at any point of the manifold, which the
semiconcavity check exploits.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import geometry as geo
from .grid import GridFunction

_CHUNK = 1 << 22  # entries per distance block


def _spatial_stage(u: GridFunction, eps: float, points: np.ndarray):
    """``min_y u(y, s) + d(y, x)^2 / 2eps`` for every source time ``s`` and target ``x``.

    Returns ``(values, argnode)`` of shape ``(T, m)``.
    """
    L = u.lattice
    m = points.shape[0]
    T = u.times.size
    best = np.empty((T, m))
    arg = np.empty((T, m), dtype=np.int64)
    step = max(1, _CHUNK // max(L.size, 1))
    for lo in range(0, m, step):
        P = points[lo : lo + step]
        D2 = geo.distance(L.M, L.points[:, None, :], P[None, :, :]) ** 2 / (2.0 * eps)  # (N, c)
        for k in range(T):
            tot = u.values[k][:, None] + D2
            j = np.argmin(tot, axis=0)
            arg[k, lo : lo + step] = j
            best[k, lo : lo + step] = tot[j, np.arange(tot.shape[1])]
    return best, arg


def evaluate_inf_convolution(u: GridFunction, eps: float, points, times):
    """``u_eps`` at arbitrary paired targets ``(points[i], times[i])``.

    Returns ``(values, argnode, argtime)``.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    points = np.atleast_2d(np.asarray(points, dtype=float))
    times = np.broadcast_to(np.asarray(times, dtype=float), points.shape[:1])
    best, arg = _spatial_stage(u, eps, points)
    tot = best + (u.times[:, None] - times[None, :]) ** 2 / (2.0 * eps)
    ks = np.argmin(tot, axis=0)
    cols = np.arange(points.shape[0])
    return tot[ks, cols], arg[ks, cols], ks


@dataclass
class EnvelopeResult:
    u_eps: GridFunction
    eps: float
    kind: str
    arg_node: np.ndarray = field(repr=False)
    arg_time: np.ndarray = field(repr=False)
    source: GridFunction = field(repr=False)
    certificates: dict = field(default_factory=dict)

    @property
    def diameter(self) -> float:
        return 2.0 * self.source.lattice.radius

    @property
    def duration(self) -> float:
        return float(self.source.times[-1] - self.source.times[0])


def _certificates(u: GridFunction, res_vals: np.ndarray, eps: float) -> dict:
    L = u.lattice
    diam = 2.0 * L.radius
    return {
        "lipschitz_space": 1.5 * diam / eps,
        "lipschitz_time": 1.5 * float(u.times[-1] - u.times[0]) / eps,
        "semiconcavity_bound": semiconcavity_bound(L.M, diam, eps),
        "sup_gap": float(np.max(np.abs(u.values - res_vals))),
    }


def semiconcavity_bound(M: geo.ModelManifold, diam: float, eps: float) -> float:
    """``(H(sqrt(kappa) diam) + 1) / eps``: the space-time second-difference bound."""
    return float((geo.tau_coth(M.sqrt_kappa * diam) + 1.0) / eps)


def hessian_bound(M: geo.ModelManifold, diam: float, eps: float) -> float:
    """Upper bound ``H(sqrt(kappa) diam) / eps`` on the spatial Hessian of ``u_eps``."""
    return float(geo.tau_coth(M.sqrt_kappa * diam) / eps)


def inf_convolve(u: GridFunction, eps: float) -> EnvelopeResult:
    """Exact discrete inf-convolution over all grid nodes."""
    if not eps > 0:
        raise ValueError("eps must be positive")
    best, arg = _spatial_stage(u, eps, u.lattice.points)
    tot = best[:, None, :] + (u.times[:, None, None] - u.times[None, :, None]) ** 2 / (2.0 * eps)  # (s, t, x)
    ks = np.argmin(tot, axis=0)  # (t, x)
    vals = np.take_along_axis(tot, ks[None], axis=0)[0]
    nodes = np.take_along_axis(arg, ks, axis=0)
    # never above u itself: the self term is an admissible competitor
    vals = np.minimum(vals, u.values)
    res = EnvelopeResult(u.with_values(vals), float(eps), "inf", nodes, ks, u)
    res.certificates = _certificates(u, vals, eps)
    return res


def sup_convolve(u: GridFunction, eps: float) -> EnvelopeResult:
    """Sup-convolution through ``u^eps = -(-u)_eps``."""
    neg = inf_convolve(u.with_values(-u.values), eps)
    vals = -neg.u_eps.values
    res = EnvelopeResult(u.with_values(vals), float(eps), "sup", neg.arg_node, neg.arg_time, u)
    res.certificates = _certificates(u, vals, eps)
    return res


# ---------------------------------------------------------------------------
# checks


def check_ordering(u: GridFunction, eps_values) -> float:
    """Worst margin of ``u_{eps'} <= u_eps <= u`` along an increasing list of ``eps``."""
    eps_values = sorted(eps_values)
    prev = u.values
    worst = np.inf
    for e in eps_values:
        cur = inf_convolve(u, e).u_eps.values
        worst = min(worst, float(np.min(prev - cur)))
        prev = cur
    return worst


def realizer_identity_residual(res: EnvelopeResult) -> float:
    """``max |u_eps - u(y0,s0) - (d^2 + |s0-t0|^2)/2eps|``: the infimum is attained at the recorded argmin."""
    u = res.source
    sign = 1.0 if res.kind == "inf" else -1.0
    L = u.lattice
    y0 = L.points[res.arg_node]
    d2 = geo.distance(L.M, y0, L.points[None, :, :]) ** 2
    s0 = u.times[res.arg_time]
    uy = u.values[res.arg_time, res.arg_node]
    pen = (d2 + (s0 - u.times[:, None]) ** 2) / (2 * res.eps)
    return float(np.max(np.abs(res.u_eps.values - (uy + sign * pen))))


def check_distance_bound(res: EnvelopeResult, u: GridFunction | None = None) -> dict:
    """Margins of ``d^2 + |s0-t0|^2 <= 2 eps |u(x0,t0) - u(y0,s0)| <= 4 eps ||u||``."""
    u = res.source if u is None else u
    L = u.lattice
    y0 = L.points[res.arg_node]
    d2 = geo.distance(L.M, y0, L.points[None, :, :]) ** 2
    s0 = u.times[res.arg_time]
    q = d2 + (s0 - u.times[:, None]) ** 2
    jump = 2 * res.eps * np.abs(u.values - u.values[res.arg_time, res.arg_node])
    cap = 4 * res.eps * u.sup_norm
    scale = 1e-12 * (1 + cap)
    return {
        "first": float(np.min(jump - q)) + scale,
        "second": float(np.min(cap - jump)) + scale,
        "max_displacement": float(np.sqrt(np.max(q))),
        "containment": float(2 * np.sqrt(res.eps * u.sup_norm) - np.sqrt(np.max(q))) + scale,
    }


def check_lipschitz(res: EnvelopeResult, rng: np.random.Generator, pairs: int = 1000) -> float:
    """Worst margin of the space-time Lipschitz bound on sampled node pairs."""
    v = res.u_eps
    L = v.lattice
    T, N = v.values.shape
    k0, k1 = rng.integers(0, T, pairs), rng.integers(0, T, pairs)
    i0, i1 = rng.integers(0, N, pairs), rng.integers(0, N, pairs)
    d = geo.distance(L.M, L.points[i0], L.points[i1])
    dt = np.abs(v.times[k0] - v.times[k1])
    bound = res.certificates["lipschitz_space"] * d + res.certificates["lipschitz_time"] * dt
    diff = np.abs(v.values[k0, i0] - v.values[k1, i1])
    return float(np.min(bound - diff)) + 1e-9


def check_semiconcavity(res: EnvelopeResult, rng: np.random.Generator, probes: int = 200, r: float | None = None) -> float:
    """Worst margin of ``[u_eps(x+, t+r) + u_eps(x-, t-r) - 2 u_eps(x, t)] / r^2 <= bound``.

    ``x+-`` are ``exp_x(+-r xi)`` for random unit ``xi``.  Each ``u_eps`` is
    evaluated through the exact discrete infimum, so no interpolation enters.
    """
    if res.kind != "inf":
        raise ValueError("semiconcavity applies to inf-convolutions")
    u = res.source
    L = u.lattice
    M = L.M
    r = L.h if r is None else r
    inner = np.flatnonzero(L.dist_center < L.radius - 2 * r)
    kt = np.flatnonzero((u.times > u.times[0] + r) & (u.times < u.times[-1] - r))
    if inner.size == 0 or kt.size == 0:
        raise ValueError("grid too small for the requested probe radius")
    nodes = rng.choice(inner, probes)
    ks = rng.choice(kt, probes)
    xi = rng.standard_normal((probes, M.dim))
    xi /= np.linalg.norm(xi, axis=-1, keepdims=True)
    x = L.points[nodes]
    t = u.times[ks]
    plus = geo.exp_map(M, x, r * xi) if not M.flat else x + r * xi
    minus = geo.exp_map(M, x, -r * xi) if not M.flat else x - r * xi
    vp = evaluate_inf_convolution(u, res.eps, plus, t + r)[0]
    vm = evaluate_inf_convolution(u, res.eps, minus, t - r)[0]
    v0 = res.u_eps.values[ks, nodes]
    second = (vp + vm - 2 * v0) / r**2
    bound = res.certificates["semiconcavity_bound"]
    return float(np.min(bound - second)) + 1e-9 * bound


def convergence_profile(u: GridFunction, eps_values) -> np.ndarray:
    """``max |u_eps - u|`` along the given schedule."""
    return np.array([np.max(u.values - inf_convolve(u, e).u_eps.values) for e in eps_values])


# ---------------------------------------------------------------------------
# subjet transport


def modulus_of_continuity(u: GridFunction, rng: np.random.Generator | None = None, bins: int = 32, pairs: int = 200_000):
    """Empirical nondecreasing modulus ``omega(delta)`` from sampled node pairs.

    Pairs are measured in the space-time distance ``sqrt(d^2 + |s - t|^2)``.
    Returns ``(edges, omega)`` with ``omega[i]`` bounding jumps at distances
    up to ``edges[i + 1]``.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    L = u.lattice
    T, N = u.values.shape
    k0, k1 = rng.integers(0, T, pairs), rng.integers(0, T, pairs)
    i0, i1 = rng.integers(0, N, pairs), rng.integers(0, N, pairs)
    dist = np.sqrt(geo.distance(L.M, L.points[i0], L.points[i1]) ** 2 + (u.times[k0] - u.times[k1]) ** 2)
    jump = np.abs(u.values[k0, i0] - u.values[k1, i1])
    edges = np.linspace(0.0, dist.max() * (1 + 1e-12) + 1e-300, bins + 1)
    which = np.clip(np.searchsorted(edges, dist, side="right") - 1, 0, bins - 1)
    omega = np.zeros(bins)
    np.maximum.at(omega, which, jump)
    return edges, np.maximum.accumulate(omega)


def modulus_at(edges: np.ndarray, omega: np.ndarray, delta: float) -> float:
    i = int(np.searchsorted(edges, delta, side="left")) - 1
    return float(omega[min(max(i, 0), omega.size - 1)])


def eps_threshold(u: GridFunction, inner_radius: float, inner_start: float) -> float:
    """``delta0^2 / (8 ||u||)`` with ``delta0 = min(r - r_H, T1 - T0)``."""
    L = u.lattice
    delta0 = min(L.radius - inner_radius, inner_start - float(u.times[0]))
    if delta0 <= 0:
        raise ValueError("inner cylinder must sit strictly inside the grid")
    norm = u.sup_norm
    return np.inf if norm == 0 else float(delta0**2 / (8.0 * norm))


@dataclass
class SubjetCheck:
    node: int
    time_index: int
    ok: bool
    skipped: bool
    margin: float
    vertex_error: float
    time_gap: float
    reason: str = ""


def discrete_jet(res: EnvelopeResult, node: int, k: int):
    """``(p, zeta, A)`` of ``u_eps`` at ``(node, times[k])``: backward time difference, fitted gradient and Hessian."""
    v = res.u_eps
    L = v.lattice
    if not L.interior[node] or k == 0:
        return None
    g, H = L.jets(v.values[k])
    p = (v.values[k, node] - v.values[k - 1, node]) / v.dt
    return p, g[node], H[node]


def subjet_transport_check(
    M: geo.ModelManifold,
    u: GridFunction,
    res: EnvelopeResult,
    node: int,
    k: int,
    radius: float | None = None,
    slack: float = 1.0,
    omega=None,
    eps0: float | None = None,
) -> SubjetCheck:
    """Check the transported second-order subjet of ``u_eps`` against ``u`` itself.

    The jet ``(p, zeta, A)`` of ``u_eps`` at ``(x0, t0)`` is moved to the
    realizer ``(y0, s0)``; then ``u(exp_{y0} xi, s0 + sigma)`` must dominate

        u(y0, s0) + <L zeta, xi> + sigma p + 1/2 <(L A - 2 kappa omega I) xi, xi>

    for ``sigma <= 0`` up to ``slack * (|xi|^2 + |sigma|)`` on grid nodes near
    ``(y0, s0)``.  When ``eps0`` is given, ``eps >= eps0`` is refused.
    """
    if eps0 is not None and res.eps >= eps0:
        raise ValueError(f"eps={res.eps} is not below the threshold {eps0}")
    L = u.lattice
    jet = discrete_jet(res, node, k)
    if jet is None:
        return SubjetCheck(node, k, False, True, np.nan, np.nan, np.nan, "no full stencil")
    p, zeta, A = jet
    x0 = L.points[node]
    t0 = u.times[k]
    j0 = int(res.arg_node[k, node])
    s_idx = int(res.arg_time[k, node])
    y0 = L.points[j0]
    s0 = u.times[s_idx]
    pred = geo.exp_map(M, x0, -res.eps * zeta) if not M.flat else x0 - res.eps * zeta
    vertex_error = float(geo.distance(M, pred, y0))
    time_gap = float(s0 - (t0 - res.eps * p))
    Lm = geo.transport_matrix(M, x0, y0)
    zeta_y = Lm @ zeta
    A_y = Lm @ A @ Lm.T
    if omega is None:
        omega = modulus_of_continuity(u)
    w = modulus_at(*omega, 2 * np.sqrt(res.eps * u.sup_norm))
    A_y = A_y - 2 * M.kappa * w * np.eye(M.dim)
    radius = 2.5 * L.h if radius is None else radius
    near = np.flatnonzero(geo.distance(M, L.points, y0) < radius)
    ks = np.flatnonzero((u.times <= s0 + 1e-12) & (u.times >= s0 - radius))
    xi = geo.log_map(M, y0, L.points[near]) if not M.flat else L.points[near] - y0
    sig = u.times[ks] - s0
    rhs = (
        u.values[s_idx, j0]
        + (xi @ zeta_y)[None, :]
        + sig[:, None] * p
        + 0.5 * np.einsum("ia,ab,ib->i", xi, A_y, xi)[None, :]
    )
    allow = slack * (np.sum(xi * xi, axis=-1)[None, :] + np.abs(sig)[:, None])
    margin = float(np.min(u.values[np.ix_(ks, near)] - rhs + allow))
    return SubjetCheck(node, k, margin >= 0, False, margin, vertex_error, time_gap)
