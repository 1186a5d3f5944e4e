"""End-to-end Harnack measurements on model spaces.

A scenario fixes a model space, an operator, a scale ``R <= R0``, a base
point ``(x0, t0)``, initial data and a source.  Its solution lives on
``B_{2R}(x0) x [t0, t0 + 4R^2]`` and is measured on three cylinders
(``K_r(x, t) = B_r(x) x (t - r^2, t]``):

* sup over ``K_R(x0, t0 + 2R^2)``,
* inf over ``K_R(x0, t0 + 4R^2)``,
* the source average over ``K_{2R}(x0, t0 + 4R^2)``.

Sup and inf are grid extrema (no interpolation); balls are closed up to
roundoff, which matches the open-ball extrema of continuous data.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import stats

from . import geometry as geo
from . import solver as S
from .grid import GridFunction, Lattice
from .pucci import Ellipticity, OperatorSpec

BALL_SLACK = 1e-12
DEFAULT_PS = (0.1, 0.25, 0.5, 0.75, 0.9)
_GL_X, _GL_W = np.polynomial.legendre.leggauss(96)


class ScenarioError(ValueError):
    """The scenario violates a hypothesis of the measured inequality."""


# ---------------------------------------------------------------------------
# closed forms


def theta_exponent(kappa: float, R0: float, mode: str = "harnack8") -> float:
    """``1 + log2 cosh(c sqrt(kappa) R0)`` with ``c = 8`` (Harnack) or ``c = 4`` (ABP step)."""
    if kappa < 0 or R0 < 0:
        raise ValueError("kappa and R0 must be nonnegative")
    c = {"harnack8": 8.0, "abp4": 4.0}.get(mode)
    if c is None:
        raise ValueError(f"unknown theta mode {mode!r}")
    x = c * math.sqrt(kappa) * R0
    # log2 cosh x without overflow
    return 1.0 + (x + math.log1p(math.exp(-2 * x)) - math.log(2.0)) / math.log(2.0)


def _li_yau(n: int, kappa: float, d, t1, t2):
    d, t1, t2 = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in (d, t1, t2)))
    if np.any(t1 <= 0) or np.any(t2 <= t1):
        raise ValueError("need 0 < t1 < t2")
    expo = d**2 / (4 * (t2 - t1)) * (1 + kappa * (t2 + t1) / 3) + n / 4 * kappa * (t2 - t1)
    return (t2 / t1) ** (n / 2) * np.exp(expo)


def li_yau_bound(n: int, kappa: float, x1, t1: float, x2, t2: float, M: geo.ModelManifold) -> float:
    """Sharp two-point factor: ``u(x1, t1) <= factor * u(x2, t2)`` for positive heat solutions.

    ``kappa`` is the Ricci lower-bound parameter (``Ric >= -kappa``); on the
    model space of sectional curvature ``-k`` it is ``(n - 1) k``.
    """
    if kappa < 0:
        raise ValueError("kappa must be nonnegative")
    d = geo.distance(M, x1, x2)
    return float(_li_yau(n, kappa, d, t1, t2))


def li_yau_cylinder_bound(n: int, kappa: float, d_max: float, t1s, t2s) -> float:
    """Max of the two-point factor over ``d <= d_max`` and the given time sets."""
    t1s = np.asarray(t1s, dtype=float)[:, None]
    t2s = np.asarray(t2s, dtype=float)[None, :]
    # the factor increases with d, so the far end of the distance range wins
    return float(np.max(_li_yau(n, kappa, d_max, t1s, t2s)))


def heat_kernel(M: geo.ModelManifold, r, t):
    """Heat kernel of the model space as a function of distance ``r`` and time ``t > 0``.

    Flat: Gaussian in any dimension.  Hyperbolic: closed form for ``n = 3``
    and the integral representation for ``n = 2``, integrated on a fixed
    Gauss-Legendre rule after ``s = r + w^2`` (which removes the endpoint
    singularity).  Curvature ``-k`` is reached by the scaling
    ``p_k(r, t) = k^{n/2} p_1(sqrt(k) r, k t)``.
    """
    r, t = np.broadcast_arrays(np.asarray(r, dtype=float), np.asarray(t, dtype=float))
    if np.any(t <= 0):
        raise ValueError("heat kernel needs t > 0")
    n = M.dim
    if M.flat:
        out = np.exp(-(r**2) / (4 * t)) / (4 * np.pi * t) ** (n / 2)
        return float(out) if out.ndim == 0 else out
    k = M.kappa
    rs, ts = math.sqrt(k) * r, k * t
    if n == 3:
        out = np.exp(-ts - rs**2 / (4 * ts)) / (4 * np.pi * ts) ** 1.5 * geo.sinhc(rs) ** -1
    elif n == 2:
        W = np.sqrt(np.sqrt(rs**2 + 160 * ts) - rs)
        w = 0.5 * W[..., None] * (_GL_X + 1)
        ww = 0.5 * W[..., None] * _GL_W
        s = rs[..., None] + w**2
        den = np.sqrt(2 * np.sinh(0.5 * (2 * rs[..., None] + w**2)) * np.sinh(0.5 * w**2))
        jac = 2 * w / den
        integral = np.sum(ww * s * np.exp(-(s**2 - rs[..., None] ** 2) / (4 * ts[..., None])) * jac, axis=-1)
        out = math.sqrt(2) * np.exp(-ts / 4 - rs**2 / (4 * ts)) / (4 * np.pi * ts) ** 1.5 * integral
    else:
        raise NotImplementedError("hyperbolic heat kernel is implemented for n = 2, 3")
    out = k ** (n / 2) * out
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# scenarios


@dataclass(frozen=True)
class InitialData:
    """``heat_kernel``: kernel from a point ``offset`` away from ``x0`` started ``shift`` before ``t0``;
    ``bump``: ``base + amplitude * exp(-d^2 / (2 width^2))`` held fixed on the boundary;
    ``constant``: ``u = value``."""

    kind: str = "heat_kernel"
    offset: float = 0.0
    shift: float = 0.5
    base: float = 0.0
    amplitude: float = 1.0
    width: float = 0.5
    value: float = 1.0

    def __post_init__(self):
        if self.kind not in ("heat_kernel", "bump", "constant"):
            raise ValueError(f"unknown initial data kind {self.kind!r}")
        if self.kind == "heat_kernel" and not self.shift > 0:
            raise ValueError("heat kernel data need a positive time shift")


@dataclass(frozen=True)
class Source:
    kind: str = "zero"
    value: float = 0.0

    def __post_init__(self):
        if self.kind not in ("zero", "constant"):
            raise ValueError(f"unknown source kind {self.kind!r}")

    def __call__(self, points, t):
        return np.full(np.shape(points)[:-1], self.value if self.kind == "constant" else 0.0)


@dataclass(frozen=True)
class HarnackScenario:
    manifold: geo.ModelManifold
    operator: OperatorSpec
    R: float = 1.0
    R0: float | None = None
    center: tuple = ()
    t0: float = 0.0
    initial: InitialData = InitialData()
    source: Source = Source()
    h: float = 0.1
    cfl: float = 0.4
    mode: str = "solve"
    frames: int = 201
    seed: int = 0

    def __post_init__(self):
        if not self.R > 0:
            raise ValueError("R must be positive")
        if self.R0 is not None and self.R0 < self.R:
            raise ValueError("R0 must be at least R")
        if self.mode not in ("solve", "exact"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.mode == "exact" and not (self.operator.kind == "laplacian" and self.source.kind == "zero" and self.initial.kind != "bump"):
            raise ValueError("exact mode needs the heat equation with kernel or constant data and no source")
        if not 0 < self.h < self.R:
            raise ValueError("grid spacing must lie in (0, R)")

    @property
    def R0_eff(self) -> float:
        return self.R if self.R0 is None else self.R0

    @property
    def x0(self) -> np.ndarray:
        M = self.manifold
        v = np.zeros(M.dim) if len(self.center) == 0 else np.asarray(self.center, dtype=float)
        return geo.exp_map(M, M.origin(), v) if not M.flat else v

    @property
    def kernel_source(self) -> np.ndarray:
        M = self.manifold
        e = np.zeros(M.dim)
        e[0] = self.initial.offset
        return geo.exp_map(M, self.x0, e) if not M.flat else self.x0 + e

    @property
    def time_origin(self) -> float:
        """Start of the positive solution: ``t0 - shift`` for kernels, ``t0`` otherwise."""
        return self.t0 - self.initial.shift if self.initial.kind == "heat_kernel" else self.t0

    def lattice(self) -> Lattice:
        # K_{2R} plus one cell of margin plus the Dirichlet ring
        return Lattice(self.manifold, self.x0, 2 * self.R + 2 * self.h, self.h)

    def exact(self, points, t):
        ini = self.initial
        if ini.kind == "constant":
            return np.full(np.shape(points)[:-1], ini.value)
        if ini.kind == "bump":
            d = geo.distance(self.manifold, points, self.kernel_source)
            return ini.base + ini.amplitude * np.exp(-(d**2) / (2 * ini.width**2))
        d = geo.distance(self.manifold, points, self.kernel_source)
        return heat_kernel(self.manifold, d, t - self.t0 + ini.shift)

    def to_dict(self) -> dict:
        return {
            "manifold": self.manifold.to_dict(),
            "operator": self.operator.to_dict(),
            "R": self.R,
            "R0": self.R0_eff,
            "center": [float(c) for c in self.center],
            "t0": self.t0,
            "initial": dict(vars(self.initial)),
            "source": dict(vars(self.source)),
            "h": self.h,
            "cfl": self.cfl,
            "mode": self.mode,
            "frames": self.frames,
            "seed": self.seed,
        }


def scenario_solution(scn: HarnackScenario, horizon: float | None = None) -> tuple[GridFunction, GridFunction, dict]:
    """Solution and source on the scenario grid, plus solver diagnostics.

    The run ends at ``t0 + 4R^2`` unless ``horizon`` says otherwise.
    """
    L = scn.lattice()
    t_end = scn.t0 + 4 * scn.R**2 if horizon is None else float(horizon)
    if not t_end > scn.t0:
        raise ValueError("horizon must exceed t0")
    if scn.mode == "exact":
        times = np.linspace(scn.t0, t_end, scn.frames)
        u = GridFunction.from_callable(L, times, scn.exact)
        info = {"mode": "exact", "frames": int(times.size)}
    else:
        boundary = scn.exact if scn.initial.kind == "heat_kernel" else None
        source = None if scn.source.kind == "zero" else scn.source
        probe = S.ProblemSpec(L, scn.operator, scn.exact, scn.t0, t_end, boundary=boundary, source=source, cfl=scn.cfl)
        store = max(1, probe.steps // max(scn.frames - 1, 1))
        spec = replace(probe, store_every=store)
        res = S.solve(spec)
        u = res.u
        info = {"mode": "solve", "steps": res.steps, "dt": res.dt, "store_every": store, "residual": res.residual, **spec.monotonicity()}
    f = GridFunction.from_callable(L, u.times, scn.source)
    return u, f, info


def _power_mean(values: np.ndarray, weights: np.ndarray, q: float) -> float:
    """``(sum w |v|^q / sum w)^(1/q)``, scaled to avoid overflow for large ``q``."""
    a = np.abs(values)
    top = float(np.max(a)) if a.size else 0.0
    if top == 0.0:
        return 0.0
    return top * float(np.sum(weights * (a / top) ** q) / np.sum(weights)) ** (1.0 / q)


@dataclass
class HarnackMeasurement:
    sup_val: float
    inf_val: float
    f_norm: float
    ratio: float
    theta: float
    li_yau_bound: float | None = None
    li_yau_pair: float | None = None
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "sup_val": self.sup_val,
            "inf_val": self.inf_val,
            "f_norm": self.f_norm,
            "ratio": self.ratio,
            "theta": self.theta,
            "li_yau_bound": self.li_yau_bound,
            "li_yau_pair": self.li_yau_pair,
            "diagnostics": self.diagnostics,
        }


def _cylinders(scn: HarnackScenario, u: GridFunction):
    R, t0 = scn.R, scn.t0
    d = u.lattice.distance_to(scn.x0)
    ball = d <= R * (1 + BALL_SLACK)
    big = d <= 2 * R * (1 + BALL_SLACK)
    sup_m = u.time_mask(t0 + R**2, t0 + 2 * R**2)[:, None] & ball[None, :]
    inf_m = u.time_mask(t0 + 3 * R**2, t0 + 4 * R**2)[:, None] & ball[None, :]
    big_m = u.time_mask(t0, t0 + 4 * R**2)[:, None] & big[None, :]
    if not (sup_m.any() and inf_m.any()):
        raise ScenarioError("grid does not resolve the measurement cylinders")
    return sup_m, inf_m, big_m


def _check_nonnegative(u: GridFunction, big_m: np.ndarray):
    low = float(np.min(u.values[big_m]))
    if low < 0:
        raise ScenarioError(f"solution is negative on K_2R (min {low:.3e}); the inequality assumes u >= 0")


def measure_harnack(scn: HarnackScenario, u: GridFunction | None = None, f: GridFunction | None = None) -> HarnackMeasurement:
    """Sup, inf, source norm and their ratio for one scenario (solving it unless ``u`` is given)."""
    info = {}
    if u is None:
        u, f, info = scenario_solution(scn)
    f = u.with_values(np.zeros_like(u.values)) if f is None else f
    sup_m, inf_m, big_m = _cylinders(scn, u)
    _check_nonnegative(u, big_m)
    M = scn.manifold
    n = M.dim
    theta = theta_exponent(M.kappa, scn.R0_eff, "harnack8")
    w = u.cell_weights()
    f_norm = _power_mean(f.values[big_m], w[big_m], n * theta + 1)
    sup_val = float(np.max(u.values[sup_m]))
    inf_val = float(np.min(u.values[inf_m]))
    denom = inf_val + scn.R**2 * f_norm
    ratio = sup_val / denom if denom > 0 else math.inf
    out = HarnackMeasurement(sup_val, inf_val, f_norm, ratio, theta, diagnostics={**info, "grid": u.metadata()})
    if scn.operator.kind == "laplacian" and scn.source.kind == "zero":
        k_ric = (n - 1) * M.kappa
        origin = scn.time_origin
        t1s = u.times[sup_m.any(axis=1)] - origin
        t2s = u.times[inf_m.any(axis=1)] - origin
        out.li_yau_bound = li_yau_cylinder_bound(n, k_ric, 2 * scn.R, t1s, t2s)
        k1, i1 = np.unravel_index(np.argmax(np.where(sup_m, u.values, -np.inf)), u.values.shape)
        k2, i2 = np.unravel_index(np.argmin(np.where(inf_m, u.values, np.inf)), u.values.shape)
        L = u.lattice
        out.li_yau_pair = li_yau_bound(n, k_ric, L.points[i1], u.times[k1] - origin, L.points[i2], u.times[k2] - origin, M)
    return out


def kernel_cylinder_ratio(scn: HarnackScenario, radial: int = 41, angular: int = 32, times: int = 81) -> float:
    """Sup/inf of the exact kernel over the closed measurement cylinders, by dense sampling."""
    if scn.initial.kind != "heat_kernel":
        raise ValueError("needs heat kernel data")
    M = scn.manifold
    R = scn.R
    rad = np.linspace(0.0, R, radial)
    th = np.linspace(0.0, 2 * np.pi, angular, endpoint=False)
    comps = rad[:, None, None] * np.stack([np.cos(th), np.sin(th)], -1)[None]
    comps = comps.reshape(-1, 2)
    if M.dim != 2:
        raise NotImplementedError("dense sampling is implemented for surfaces")
    pts = geo.exp_map(M, scn.x0, comps) if not M.flat else scn.x0 + comps
    sup_t = scn.t0 + np.linspace(R**2, 2 * R**2, times)
    inf_t = scn.t0 + np.linspace(3 * R**2, 4 * R**2, times)
    sup = max(float(np.max(scn.exact(pts, t))) for t in sup_t)
    inf = min(float(np.min(scn.exact(pts, t))) for t in inf_t)
    return sup / inf


def weak_harnack_measure(scn: HarnackScenario, ps=DEFAULT_PS, u: GridFunction | None = None, f: GridFunction | None = None) -> dict:
    """``p``-mean over the early cylinder against the late infimum, for ``p`` in ``(0, 1)``.

    Uses ``f+`` in the source term.  The ``p -> 0`` limit (geometric mean) is
    reported alongside; ratios must be nondecreasing in ``p``.
    """
    ps = np.asarray(ps, dtype=float)
    if np.any((ps <= 0) | (ps >= 1)):
        raise ValueError("p must lie in (0, 1)")
    info = {}
    if u is None:
        u, f, info = scenario_solution(scn)
    f = u.with_values(np.zeros_like(u.values)) if f is None else f
    sup_m, inf_m, big_m = _cylinders(scn, u)
    _check_nonnegative(u, big_m)
    n = scn.manifold.dim
    theta = theta_exponent(scn.manifold.kappa, scn.R0_eff, "harnack8")
    w = u.cell_weights()
    f_norm = _power_mean(np.maximum(f.values[big_m], 0.0), w[big_m], n * theta + 1)
    denom = float(np.min(u.values[inf_m])) + scn.R**2 * f_norm
    vals, ws = u.values[sup_m], w[sup_m]
    means = np.array([(np.sum(ws * vals**p) / np.sum(ws)) ** (1 / p) for p in ps])
    with np.errstate(divide="ignore"):
        geo_mean = float(np.exp(np.sum(ws * np.log(vals)) / np.sum(ws))) if np.all(vals > 0) else 0.0
    ratios = means / denom if denom > 0 else np.full(ps.shape, math.inf)
    return {
        "p": ps.tolist(),
        "ratios": ratios.tolist(),
        "geometric_mean_ratio": geo_mean / denom if denom > 0 else math.inf,
        "f_norm": f_norm,
        "monotone_in_p": bool(np.all(np.diff(ratios) >= -1e-12 * np.abs(ratios[1:]))),
        "diagnostics": info,
    }


# ---------------------------------------------------------------------------
# growth of the constant


@dataclass(frozen=True)
class SweepConfig:
    values: tuple = (0.0, 0.25, 1.0, 4.0)  # kappa R0^2
    R: float = 1.0
    n: int = 2
    offsets: tuple = (0.0, 0.5, 1.0)  # in units of R
    shifts: tuple = (0.25, 0.5, 1.0)  # in units of R^2
    h: float = 0.05
    mode: str = "exact"
    operator: OperatorSpec = OperatorSpec("laplacian", Ellipticity())
    frames: int = 161
    workers: int = 1


def _sweep_member(scn: HarnackScenario) -> float:
    return measure_harnack(scn).ratio


def constant_growth_sweep(config: SweepConfig = SweepConfig()) -> dict:
    """Worst measured ratio per ``kappa R0^2`` over a family of kernel solutions.

    Asserts only that the envelope is nondecreasing; the fitted slope of
    ``log(envelope)`` against ``kappa R0^2`` is documentation.
    """
    R = config.R
    scenarios, keys = [], []
    for v in config.values:
        M = geo.ModelManifold(config.n, v / R**2)
        for off in config.offsets:
            for s in config.shifts:
                ini = InitialData("heat_kernel", offset=off * R, shift=s * R**2)
                scenarios.append(HarnackScenario(M, config.operator, R, R, initial=ini, h=config.h * R, mode=config.mode, frames=config.frames))
                keys.append((v, off, s))
    if config.workers > 1:
        with ProcessPoolExecutor(config.workers) as pool:
            ratios = list(pool.map(_sweep_member, scenarios))
    else:
        ratios = [_sweep_member(s) for s in scenarios]
    table = {}
    for (v, off, s), r in zip(keys, ratios):
        table.setdefault(v, []).append({"offset": off, "shift": s, "ratio": r})
    env = np.array([max(m["ratio"] for m in table[v]) for v in config.values])
    x = np.asarray(config.values, dtype=float)
    fit = {}
    if x.size >= 3:
        lr = stats.linregress(x, np.log(env))
        half = stats.t.ppf(0.975, x.size - 2) * lr.stderr
        fit = {"slope": lr.slope, "intercept": lr.intercept, "slope_ci95": [lr.slope - half, lr.slope + half], "r_squared": lr.rvalue**2}
    return {
        "values": x.tolist(),
        "envelope": env.tolist(),
        "nondecreasing": bool(np.all(np.diff(env) >= 0)),
        "fit_log_envelope": fit,
        "members": {str(v): table[v] for v in config.values},
        "mode": config.mode,
    }
