"""Parabolic contact sets, the parabolic normal map and the ABP-type estimate.

For a vertex ``y``, opening ``a`` and drift ``b`` the objective is
``O(z, tau) = u(z, tau) + (a/2) d_y(z)^2 - b tau``.  A node ``(x, t)`` is a
contact point when ``O(x, t)`` attains the running infimum of ``O`` over the
grid slab with times in ``(t_0, t]`` (the first grid time is the open bottom).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from . import geometry as geo
from .grid import GridFunction
from .pucci import Ellipticity, pucci_minus

TIE_TOL = 1e-12


class PreconditionError(ValueError):
    """A hypothesis of the estimate under test is violated; no claim is made."""


@dataclass
class ContactRecord:
    node: int
    time_index: int
    x: np.ndarray
    t: float
    y: np.ndarray
    a: float
    b: float
    objective: float
    grad: np.ndarray
    hess: np.ndarray
    dudt: float
    vertex_error: float = math.nan
    touch_eig: float = math.nan
    jac_tilde: float = math.nan
    jac_phi: float = math.nan
    skipped: str = ""

    @property
    def usable(self) -> bool:
        return not self.skipped

    def to_dict(self) -> dict:
        f = lambda a: [float(v) for v in np.ravel(a)]
        return {
            "node": self.node,
            "time_index": self.time_index,
            "x": f(self.x),
            "t": self.t,
            "y": f(self.y),
            "a": self.a,
            "b": self.b,
            "objective": self.objective,
            "grad": f(self.grad),
            "hess": f(self.hess),
            "dudt": self.dudt,
            "vertex_error": self.vertex_error,
            "touch_eig": self.touch_eig,
            "jac_tilde": self.jac_tilde,
            "jac_phi": self.jac_phi,
            "skipped": self.skipped,
        }


def _running_contacts(obj: np.ndarray, valid: np.ndarray):
    """Indices ``(k, i)`` where ``obj`` is within tolerance of its running minimum over ``valid``."""
    masked = np.where(valid, obj, np.inf)
    slab_min = np.min(masked, axis=1)
    run = np.minimum.accumulate(slab_min)
    tol = TIE_TOL * (1.0 + np.abs(run))
    hit = valid & (masked <= (run + tol)[:, None])
    return np.argwhere(hit)


def contact_nodes(u: GridFunction, y, a: float, b: float, node_mask=None, t_shift: float = 0.0):
    """``(time_index, node)`` pairs of the discrete contact set for one vertex."""
    L = u.lattice
    if L.size == 0 or u.times.size < 2:
        raise ValueError("contact search needs a nonempty lattice and at least two times")
    node_mask = np.ones(L.size, bool) if node_mask is None else np.asarray(node_mask, bool)
    d2 = geo.distance(L.M, L.points, y) ** 2
    obj = u.values + 0.5 * a * d2[None, :] - b * (u.times - t_shift)[:, None]
    valid = np.zeros_like(obj, dtype=bool)
    valid[1:] = node_mask[None, :]
    return _running_contacts(obj, valid), obj


def find_contact_set(u: GridFunction, E, a: float, b: float, node_mask=None, jets=None) -> list[ContactRecord]:
    """Contact records for every vertex in ``E``; ties are all kept.

    Gradient and Hessian come from the lattice fit, ``du/dt`` from the
    backward difference (the contact condition looks into the past).
    """
    if not (a > 0 and b > 0):
        raise ValueError("opening a and drift b must be positive")
    E = np.atleast_2d(np.asarray(E, dtype=float))
    L = u.lattice
    M = L.M
    grad, hess = u.jets() if jets is None else jets
    dudt = u.time_derivative("backward")
    out = []
    for y in E:
        hits, obj = contact_nodes(u, y, a, b, node_mask)
        for k, i in hits:
            g = grad[k, i]
            skipped = "" if L.interior[i] and np.all(np.isfinite(g)) else "boundary node: no stencil"
            rec = ContactRecord(int(i), int(k), L.points[i].copy(), float(u.times[k]), y.copy(), a, b, float(obj[k, i]), g.copy(), hess[k, i].copy(), float(dudt[k, i]), skipped=skipped)
            if not skipped:
                tip = geo.exp_map(M, rec.x, g / a) if not M.flat else rec.x + g / a
                rec.vertex_error = float(geo.distance(M, tip, y))
                H = geo.hess_half_dist_sq(M, y, rec.x)
                rec.touch_eig = float(np.linalg.eigvalsh(rec.hess + a * H)[0])
            out.append(rec)
    return out


# ---------------------------------------------------------------------------
# Jacobians


def _ricci_factor(M: geo.ModelManifold, grad_norm, a: float):
    """Argument ``sqrt(kappa_ric / n) |grad u| / a`` with ``kappa_ric = (n - 1) kappa``."""
    n = M.dim
    return math.sqrt((n - 1) * M.kappa / n) * grad_norm / a


def jacobian_tilde(u: GridFunction, rec: ContactRecord, jets=None) -> float:
    """``Jac`` of ``z -> exp_z(a^{-1} grad u(z, t))`` at the record's node.

    The map is sampled at the node and its lattice neighbours, expressed in
    normal coordinates at the image of the node, and differentiated with the
    lattice's quadratic least-squares fit.  ``NaN`` if a neighbour lacks a
    gradient.
    """
    L = u.lattice
    M = L.M
    nodes, nbr, xi, op = L._stencil
    pos = np.searchsorted(nodes, rec.node)
    if pos >= nodes.size or nodes[pos] != rec.node:
        return math.nan
    grad = (u.lattice.gradient(u.values[rec.time_index]) if jets is None else jets[0][rec.time_index])
    ids = np.concatenate([[rec.node], nbr[pos]])
    g = grad[ids]
    if not np.all(np.isfinite(g)):
        return math.nan
    pts = L.points[ids]
    img = geo.exp_map(M, pts, g / rec.a) if not M.flat else pts + g / rec.a
    c = geo.log_map(M, img[0], img) if not M.flat else img - img[0]
    coef = op[pos] @ (c[1:] - c[0])  # (p, n): rows are fit terms, columns image components
    J = coef[: M.dim].T
    return float(np.linalg.det(J))


def jacobian_phi(u: GridFunction, rec: ContactRecord, jets=None) -> float:
    """``Jac Phi = a^{-1} (b - du/dt) Jac phi~`` at a contact record."""
    jt = jacobian_tilde(u, rec, jets)
    rec.jac_tilde = jt
    rec.jac_phi = (rec.b - rec.dudt) / rec.a * abs(jt) if np.isfinite(jt) else math.nan
    if not np.isfinite(jt) and not rec.skipped:
        rec.skipped = "degenerate stencil"
    return rec.jac_phi


def parabolic_jacobian_bound(M: geo.ModelManifold, rec: ContactRecord, lambda_tilde: float = 1.0) -> float:
    if not 0 < lambda_tilde <= 1:
        raise ValueError("lambda_tilde must lie in (0, 1]")
    n = M.dim
    tau = _ricci_factor(M, np.linalg.norm(rec.grad), rec.a)
    lap = float(np.trace(rec.hess))
    inner = (lambda_tilde * lap - rec.dudt) / (lambda_tilde * rec.a) + rec.b / (lambda_tilde * rec.a) + n * float(geo.tau_coth(tau))
    return float(geo.sinhc(tau)) ** (n + 1) * max(inner, 0.0) ** (n + 1) / (n + 1) ** (n + 1)


def elliptic_jacobian_bound(M: geo.ModelManifold, rec: ContactRecord) -> float:
    n = M.dim
    tau = _ricci_factor(M, np.linalg.norm(rec.grad), rec.a)
    inner = float(geo.tau_coth(tau)) + float(np.trace(rec.hess)) / (n * rec.a)
    return float(geo.sinhc(tau)) ** n * max(inner, 0.0) ** n


def jacobian_bound_check(u: GridFunction, rec: ContactRecord, lambda_tilde: float = 1.0, jets=None) -> float:
    """Margin ``bound - Jac Phi`` of the parabolic normal-map estimate."""
    jp = jacobian_phi(u, rec, jets) if math.isnan(rec.jac_phi) else rec.jac_phi
    return parabolic_jacobian_bound(u.M, rec, lambda_tilde) - jp


def elliptic_jacobian_bound_check(u: GridFunction, rec: ContactRecord, jets=None) -> float:
    """Margin ``bound - Jac phi~`` of the elliptic estimate at the record's time slice."""
    if math.isnan(rec.jac_tilde):
        jacobian_phi(u, rec, jets)
    return elliptic_jacobian_bound(u.M, rec) - abs(rec.jac_tilde)


# ---------------------------------------------------------------------------
# ABP-Krylov-Tso


def abp_constants(eta: float) -> dict:
    A_eta = 5.0 + 24.0 / eta**2
    return {"A_eta": A_eta, "M_eta": 2.0 * (A_eta + 1.0), "a_R2": 2.0, "b_R2": 12.0 / eta**2}


@dataclass
class AbpReport:
    lhs: float
    log_rhs: float
    M_eta: float
    contact_fraction: float
    tol: float
    diagnostics: dict = field(default_factory=dict)

    @property
    def rhs(self) -> float:
        return math.exp(self.log_rhs) if self.log_rhs < 700 else math.inf

    @property
    def holds(self) -> bool:
        return math.log(self.lhs) <= self.log_rhs + math.log1p(self.tol)

    @property
    def log_margin(self) -> float:
        return self.log_rhs + math.log1p(self.tol) - math.log(self.lhs)

    def to_dict(self) -> dict:
        return {
            "lhs": self.lhs,
            "rhs": self.rhs if np.isfinite(self.rhs) else None,
            "log_rhs": self.log_rhs,
            "M_eta": self.M_eta,
            "contact_fraction": self.contact_fraction,
            "tol": self.tol,
            "holds": self.holds,
            "diagnostics": self.diagnostics,
        }


def _cylinder(u: GridFunction, dist: np.ndarray, r: float, top: float, depth: float) -> np.ndarray:
    return u.time_mask(top - depth, top)[:, None] & (dist < r)[None, :]


def _check_cover(u: GridFunction, z0, radius: float, t_lo: float, t_hi: float):
    L = u.lattice
    gap = float(geo.distance(L.M, L.center, z0)) + radius
    if gap > L.radius * (1 + 1e-9):
        raise PreconditionError(f"lattice of radius {L.radius} does not cover the ball of radius {radius}")
    tol = 1e-9 * max(1.0, abs(t_lo), abs(t_hi))
    if u.times[0] > t_lo + tol or u.times[-1] < t_hi - tol:
        raise PreconditionError(f"time grid [{u.times[0]}, {u.times[-1]}] does not cover ({t_lo}, {t_hi}]")


def abp_sides(u: GridFunction, hess: np.ndarray, dudt: np.ndarray, eta: float, R: float, z0, ell: Ellipticity, kappaR0: float, t_top: float = 0.0) -> dict:
    """Both sides of the ABP-type inequality from precomputed jets.

    ``hess`` is ``(T, N, n, n)`` and ``dudt`` is ``(T, N)``; values of ``u``
    decide the sublevel set.  Returns logs to survive very large integrands.
    """
    L = u.lattice
    M = L.M
    n = M.dim
    bc = {"alpha1": 11.0 / eta, "beta1": 9.0 / eta, "beta2": 4.0 + eta**2}
    cst = abp_constants(eta)
    S = float(geo.sinhc(2 * bc["alpha1"] * kappaR0))
    H = float(geo.tau_coth(2 * bc["alpha1"] * kappaR0))
    dist = L.distance_to(z0)
    region = _cylinder(u, dist, bc["beta1"] * R, t_top, bc["beta2"] * R**2) & (u.values <= cst["M_eta"])
    region &= np.isfinite(dudt) & np.all(np.isfinite(hess), axis=(-1, -2))
    lam, Lam = ell.lam, ell.Lam
    X = np.full(u.values.shape, -np.inf)
    if np.any(region):
        m = pucci_minus(ell, hess[region])
        X[region] = R**2 / (2 * lam) * (m - dudt[region]) + 6.0 / (lam * eta**2) + (n + 1) * Lam / lam * H
    pos = region & (X > 0)
    w = u.cell_weights()
    if np.any(pos):
        log_terms = (n + 1) * (math.log(S) + np.log(X[pos])) + np.log(w[pos])
        log_rhs = float(logsumexp(log_terms))
    else:
        log_rhs = -math.inf
    lhs = float(geo.ball_volume(M, R)) * R**2
    return {"lhs": lhs, "log_rhs": log_rhs, "region": region, "S": S, "H": H, "sublevel_volume": float(np.sum(w[region]))}


def _contact_fraction(u: GridFunction, eta: float, R: float, z0, t_top: float, max_vertices: int = 64) -> float:
    """Volume share of the scaled contact set inside ``K_{beta1 R, beta2 R^2}``."""
    L = u.lattice
    cst = abp_constants(eta)
    a, b = 2.0 / R**2, 12.0 / (eta**2 * R**2)
    dist = L.distance_to(z0)
    outer = dist < 11.0 / eta * R
    inner_k = _cylinder(u, dist, 9.0 / eta * R, t_top, (4 + eta**2) * R**2)
    verts = np.flatnonzero(dist < R)
    if verts.size > max_vertices:
        verts = verts[np.linspace(0, verts.size - 1, max_vertices).astype(int)]
    hit = np.zeros(u.values.shape, bool)
    for j in verts:
        idx, obj = contact_nodes(u, L.points[j], a, b, outer, t_shift=t_top)
        keep = obj[idx[:, 0], idx[:, 1]] * R**2 / 2 <= (cst["A_eta"] + 1) * R**2
        hit[idx[keep, 0], idx[keep, 1]] = True
    w = u.cell_weights()
    tot = float(np.sum(w[inner_k]))
    return float(np.sum(w[hit & inner_k]) / tot) if tot > 0 else 0.0


def abp_hypotheses(u: GridFunction, eta: float, R: float, z0, t_top: float) -> dict:
    """Check ``u >= 0`` on the outer shell and ``inf u <= 1`` on ``K_{2R}``; raise on failure."""
    a1, a2 = 11.0 / eta, 4 + eta**2 + eta**4 / 4
    b1, b2 = 9.0 / eta, 4 + eta**2
    _check_cover(u, z0, a1 * R, t_top - a2 * R**2, t_top)
    dist = u.lattice.distance_to(z0)
    big = _cylinder(u, dist, a1 * R, t_top, a2 * R**2)
    shell = big & ~_cylinder(u, dist, b1 * R, t_top, b2 * R**2)
    k2 = _cylinder(u, dist, 2 * R, t_top, 4 * R**2)
    shell_min = float(np.min(u.values[shell])) if np.any(shell) else math.inf
    inner_inf = float(np.min(u.values[k2])) if np.any(k2) else math.inf
    if shell_min < -TIE_TOL:
        raise PreconditionError(f"u >= 0 on the outer shell fails (min {shell_min:.3e})")
    if inner_inf > 1.0:
        raise PreconditionError(f"inf of u over K_2R is {inner_inf:.6g} > 1")
    return {"shell_min": shell_min, "inner_inf": inner_inf}


def abp_estimate_check(u: GridFunction, eta: float, R: float, z0=None, ell: Ellipticity = Ellipticity(), R0: float | None = None, t_top: float = 0.0, tol: float = 0.05, contact: bool = True) -> AbpReport:
    """Evaluate both sides of the ABP-type inequality for grid data ``u``.

    ``R0 >= R`` sets the curvature factors at ``2 alpha1 sqrt(kappa) R0``.
    """
    M = u.M
    z0 = M.origin() if z0 is None else z0
    R0 = R if R0 is None else R0
    if R0 < R:
        raise ValueError("R0 must be at least R")
    hyp = abp_hypotheses(u, eta, R, z0, t_top)
    grad, hess = u.jets()
    dudt = u.time_derivative("backward")
    sides = abp_sides(u, hess, dudt, eta, R, z0, ell, M.sqrt_kappa * R0, t_top)
    frac = _contact_fraction(u, eta, R, z0, t_top) if contact else math.nan
    diag = {**hyp, "sublevel_volume": sides["sublevel_volume"], "S": sides["S"], "H": sides["H"], "kappaR0": M.sqrt_kappa * R0}
    return AbpReport(sides["lhs"], sides["log_rhs"], abp_constants(eta)["M_eta"], frac, tol, diag)


# ---------------------------------------------------------------------------
# measure decay


def theta_decay(kappaR0: float) -> float:
    """Integrability exponent of the decay step: ``1 + log2 cosh(4 sqrt(kappa) R0)``."""
    return 1.0 + math.log2(math.cosh(4.0 * kappaR0))


def decay_constants(eta: float, ell: Ellipticity, n: int, kappaR0: float, log_C_eta: float) -> dict:
    """Derived ``mu_eta``, ``eps_eta`` and ``M~_eta`` (logs included) from the proof's constant chain.

    ``C1 = S^{n+1} / (2 lam)^{n+1}``, ``C2 = 12/eta^2 + 2(n+1) Lam H``,
    ``C3 = 2^n C1 (C_eta + C2)^{n+1}``, with ``S, H`` at ``2 alpha1 sqrt(kappa) R0``;
    ``2 mu^{(n+1)/(n theta+1)} = C3^{-1} D^{-1} beta1^{-log2 D} / beta2`` and
    ``eps = mu^{1/(n theta+1)}``.
    """
    a1, b1, b2 = 11.0 / eta, 9.0 / eta, 4 + eta**2
    arg = 2.0 * a1 * kappaR0
    logS = math.log(float(geo.sinhc(arg)))
    H = float(geo.tau_coth(arg))
    C2 = 12.0 / eta**2 + 2 * (n + 1) * ell.Lam * H
    log_C1 = (n + 1) * (logS - math.log(2 * ell.lam))
    log_sum = np.logaddexp(log_C_eta, math.log(C2))
    log_C3 = n * math.log(2) + log_C1 + (n + 1) * log_sum
    D = 2.0**n * math.cosh(2 * kappaR0) ** (n - 1)
    theta = theta_decay(kappaR0)
    p = (n + 1) / (n * theta + 1)
    log_rhs = -log_C3 - math.log(D) - math.log2(D) * math.log(b1) - math.log(b2)
    log_mu = (log_rhs - math.log(2)) / p
    log_eps = log_mu / (n * theta + 1)
    M_eta = abp_constants(eta)["M_eta"]
    log_Mt = float(np.logaddexp(math.log(M_eta), log_C_eta))
    ex = lambda v: math.exp(v) if -745 < v < 709 else (0.0 if v <= -745 else math.inf)
    return {
        "C1": ex(log_C1),
        "C2": C2,
        "log_C3": log_C3,
        "doubling": D,
        "theta": theta,
        "log_mu_eta": log_mu,
        "mu_eta": ex(log_mu),
        "log_eps_eta": log_eps,
        "eps_eta": ex(log_eps),
        "M_eta": M_eta,
        "log_M_tilde": log_Mt,
        "provenance": "DERIVED-CONSTANT",
    }


def _core_quadrature(p, u: GridFunction, hess_u, dudt, eta: float, R: float, z0, ell: Ellipticity, kappaR0: float, n_r: int = 24, n_th: int = 24, n_t: int = 64):
    """Log-domain quadrature of the ABP integrand over the barrier core.

    The core ``B_{eta R / 2} x (-eta^2 R^2, -3 eta^2 R^2 / 4]`` (barrier shifted
    by ``-eta^2 R^2``) holds the only part of ``u + v`` where the barrier term
    can be positive; its time scale is far below a solver step, so it is
    integrated on its own Gauss-Legendre grid (log-spaced in barrier time)
    with the jets of ``u`` taken from the nearest node and stored time.
    """
    from . import barrier as bar

    M = u.M
    n = M.dim
    if n != 2:
        raise NotImplementedError("refined core quadrature is implemented for surfaces")
    lam, Lam = ell.lam, ell.Lam
    cst = abp_constants(eta)
    S = float(geo.sinhc(2 * 11.0 / eta * kappaR0))
    H = float(geo.tau_coth(2 * 11.0 / eta * kappaR0))
    xr, wr = np.polynomial.legendre.leggauss(n_r)
    rad = 0.25 * eta * R * (xr + 1)
    wrad = 0.25 * eta * R * wr * (geo.sinhc(M.sqrt_kappa * rad) * rad)
    th = 2 * np.pi * (np.arange(n_th) + 0.5) / n_th
    xt, wt = np.polynomial.legendre.leggauss(n_t)
    lo, hi = math.log(1e-6 * eta**2 / 4), math.log(eta**2 / 4)
    ltau = 0.5 * (hi - lo) * (xt + 1) + lo
    tau_b = np.exp(ltau)
    wtau = 0.5 * (hi - lo) * wt * tau_b * R**2
    comps = rad[:, None, None] * np.stack([np.cos(th), np.sin(th)], -1)[None]
    pts = (geo.exp_map(M, z0, comps) if not M.flat else np.asarray(z0) + comps).reshape(-1, M.ambient_dim)
    L = u.lattice
    near = np.array([L.nearest(q) for q in pts])
    logw_space = np.log(np.repeat(wrad, n_th) * (2 * np.pi / n_th))
    terms = []
    for k, tb in enumerate(tau_b):
        t = tb * R**2 - eta**2 * R**2
        ki = int(np.argmin(np.abs(u.times - t)))
        v, D2v, dtv = bar.barrier_jets(p, M, z0, R, pts, t, shift=eta**2 * R**2)
        uval = u.values[ki, near] + v
        Hs = hess_u[ki, near] + D2v
        X = R**2 / (2 * lam) * (pucci_minus(ell, Hs) - (dudt[ki, near] + dtv)) + 6.0 / (lam * eta**2) + (n + 1) * Lam / lam * H
        ok = (uval <= cst["M_eta"]) & (X > 0) & np.isfinite(X)
        if np.any(ok):
            terms.append((n + 1) * (math.log(S) + np.log(X[ok])) + logw_space[ok] + math.log(wtau[k]))
    return float(logsumexp(np.concatenate(terms))) if terms else -math.inf


@dataclass
class DecayReport:
    fraction: float
    log_fraction: float
    fraction_with_barrier: float
    fraction_in_small: float
    M_eta_used: float | None
    log_M_eta_used: float
    passed: bool
    constants: dict
    abp: dict
    f_norm: float

    def to_dict(self) -> dict:
        return {
            "fraction": self.fraction,
            "log_fraction": self.log_fraction,
            "fraction_with_barrier": self.fraction_with_barrier,
            "fraction_in_small": self.fraction_in_small,
            "M_eta_used": self.M_eta_used,
            "log_M_eta_used": self.log_M_eta_used,
            "passed": self.passed,
            "constants": self.constants,
            "abp": self.abp,
            "f_norm": self.f_norm,
        }


def f_average_norm(f: GridFunction, mask: np.ndarray, scale: float, exponent: float) -> float:
    """``(mean over mask of |scale * f+|^exponent)^(1/exponent)`` with cell weights."""
    w = f.cell_weights()[mask]
    g = np.abs(scale * np.maximum(f.values[mask], 0.0))
    if g.size == 0 or np.sum(w) == 0:
        return 0.0
    top = float(np.max(g))
    if top == 0.0:
        return 0.0
    return top * float(np.sum(w * (g / top) ** exponent) / np.sum(w)) ** (1.0 / exponent)


def measure_decay_check(u: GridFunction, eta: float, R: float, z0=None, ell: Ellipticity = Ellipticity(), f: GridFunction | None = None, R0: float | None = None, barrier=None) -> DecayReport:
    """Sublevel-set measure estimate for a supersolution, checked against the derived ``mu_eta``.

    ``barrier`` is a :class:`~harnack_lab.barrier.BarrierParams`; it is
    searched when omitted.  The ABP inequality is evaluated on ``u + v_eta``
    with the barrier shifted back by ``eta^2 R^2``.
    """
    from . import barrier as bar

    M = u.M
    n = M.dim
    z0 = M.origin() if z0 is None else z0
    R0 = R if R0 is None else R0
    kR0 = M.sqrt_kappa * R0
    top = 4.0 * R**2
    b1, b2 = 9.0 / eta, 4 + eta**2
    hyp = abp_hypotheses(u, eta, R, z0, top)
    p = barrier if barrier is not None else bar.search_barrier_params(eta, ell, kR0, n)
    cert = bar.certify_barrier(p, M, z0, R, radial=32, angular=8, time=32)
    if not cert.ok:
        raise PreconditionError(f"barrier certificate failed: {cert.margins}")
    cst = decay_constants(eta, ell, n, kR0, cert.log_C_eta)

    L = u.lattice
    dist = L.distance_to(z0)
    kbig = _cylinder(u, dist, b1 * R, top, b2 * R**2)
    f = u.with_values(np.zeros_like(u.values)) if f is None else f
    f_norm = f_average_norm(f, kbig, b1**2 * R**2, n * cst["theta"] + 1)
    if f_norm > cst["eps_eta"]:
        raise PreconditionError(f"source too large: norm {f_norm:.3e} exceeds eps_eta {cst['eps_eta']:.3e}")

    # barrier on the grid (zero outside its cylinder is never needed: the grid sits inside it)
    shift = eta**2 * R**2
    a1, a2 = 11.0 / eta, 4 + eta**2 + eta**4 / 4
    inside = _cylinder(u, dist, a1 * R, top, a2 * R**2)
    T, N = u.values.shape
    v = np.zeros((T, N))
    D2v = np.zeros((T, N, n, n))
    dtv = np.zeros((T, N))
    for k in range(T):
        cols = np.flatnonzero(inside[k])
        if cols.size:
            v[k, cols], D2v[k, cols], dtv[k, cols] = bar.barrier_jets(p, M, z0, R, L.points[cols], u.times[k], shift=shift)
    w_vals = np.where(inside, u.values + v, u.values)
    _, hess_u = u.jets()
    dudt = u.time_derivative("backward")
    uv = u.with_values(w_vals)
    core = _cylinder(u, dist, 0.5 * eta * R, -0.75 * eta**2 * R**2, 0.25 * eta**2 * R**2)
    grid_dudt = np.where(core, np.nan, dudt + dtv)  # core cells go to the refined quadrature
    sides = abp_sides(uv, hess_u + D2v, grid_dudt, eta, R, z0, ell, kR0, top)
    log_core = _core_quadrature(p, u, hess_u, dudt, eta, R, z0, ell, kR0)
    log_rhs = float(np.logaddexp(sides["log_rhs"], log_core))

    wts = u.cell_weights()
    small = _cylinder(u, dist, eta * R, 0.0, eta**2 * R**2)
    denom = float(np.sum(wts[kbig]))
    frac_uv = float(np.sum(wts[small & (w_vals <= cst["M_eta"])]) / denom)
    log_Mt = cst["log_M_tilde"]
    below = np.log(np.maximum(u.values, 1e-300)) <= log_Mt
    below |= u.values <= 0
    frac = float(np.sum(wts[small & below]) / denom)
    small_vol = float(np.sum(wts[small]))
    frac_small = float(np.sum(wts[small & below]) / small_vol) if small_vol > 0 else math.nan
    log_frac = math.log(frac) if frac > 0 else -math.inf
    passed = log_frac >= cst["log_mu_eta"]
    abp = {
        "lhs": sides["lhs"],
        "log_rhs": log_rhs,
        "log_rhs_grid": sides["log_rhs"],
        "log_rhs_core": log_core,
        "holds": math.log(sides["lhs"]) <= log_rhs,
        **hyp,
    }
    return DecayReport(frac, log_frac, frac_uv, frac_small, math.exp(log_Mt) if log_Mt < 700 else None, log_Mt, bool(passed), cst, abp, f_norm)
