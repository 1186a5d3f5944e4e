"""Verification suites: each builds a :class:`VerificationReport` of margin records.

``grid_scale`` multiplies every mesh spacing (below one refines) and
``tol_scale`` multiplies numerical tolerances.  Exact algebraic and
closed-form inequalities keep their zero tolerance.
"""

from __future__ import annotations

import math
import zlib
from dataclasses import dataclass

import numpy as np

from . import __version__
from . import barrier as B
from . import contact as C
from . import envelope as E
from . import geometry as geo
from . import harness as HN
from . import pucci as P
from . import samples
from . import solver as S
from .grid import GridFunction, Lattice
from .pucci import Ellipticity, OperatorSpec
from .report import VerificationReport, at_least, at_most, holds

ELL = Ellipticity(1.0, 2.0)
ETA = 0.5


@dataclass(frozen=True)
class SuiteConfig:
    seed: int = 0
    grid_scale: float = 1.0
    tol_scale: float = 1.0
    kappa: float | None = None

    def __post_init__(self):
        if not (self.grid_scale > 0 and self.tol_scale > 0):
            raise ValueError("grid and tolerance scales must be positive")
        if self.seed < 0 or self.seed >= 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")

    def rng(self, label: str) -> np.random.Generator:
        return np.random.default_rng([self.seed, zlib.crc32(label.encode())])

    def h(self, base: float) -> float:
        return base * self.grid_scale

    def tol(self, base: float) -> float:
        return base * self.tol_scale


def _new(name: str, cfg: SuiteConfig) -> VerificationReport:
    env = {"seed": cfg.seed, "grid_scale": cfg.grid_scale, "tol_scale": cfg.tol_scale, "version": __version__, "grids": []}
    if cfg.kappa is not None:
        env["kappa"] = cfg.kappa
    return VerificationReport(name, environment=env)


def _grid(rep: VerificationReport, label: str, L: Lattice) -> None:
    rep.environment["grids"].append({"label": label, **L.to_dict()})


def _orders(errs) -> np.ndarray:
    errs = np.asarray(errs, dtype=float)
    return np.log2(errs[:-1] / errs[1:])


# ---------------------------------------------------------------------------


def geometry_suite(cfg: SuiteConfig) -> VerificationReport:
    rep = _new("geometry", cfg)
    rng = cfg.rng("geometry")
    kappa = 1.0 if cfg.kappa is None else cfg.kappa
    M = geo.ModelManifold(2, kappa)
    hs = [cfg.h(0.04), cfg.h(0.02), cfg.h(0.01)]
    errs = np.zeros(len(hs))
    for _ in range(8):
        y = geo.random_points(M, rng, (), 1.0)
        d = rng.uniform(0.3, 2.0)
        ang = rng.uniform(0, 2 * np.pi)
        x = geo.exp_map(M, y, d * np.array([math.cos(ang), math.sin(ang)]))
        radial = -geo.log_map(M, x, y) / d
        tangential = np.array([-radial[1], radial[0]])
        for e, expect in ((radial, 1.0), (tangential, float(geo.tau_coth(M.sqrt_kappa * d)))):
            f = lambda s: 0.5 * geo.distance(M, y, geo.exp_map(M, x, s * e)) ** 2
            for i, h in enumerate(hs):
                errs[i] = max(errs[i], abs((f(h) - 2 * f(0.0) + f(-h)) / h**2 - expect))
    # flat space: d^2/2 is quadratic, the differences are exact and only roundoff remains
    order = math.inf if M.flat else float(_orders(errs).min())
    rep.add(
        at_least("geometry.hessian_comparison.order", "second differences of d^2/2 against eigenvalues {1, H}", order, 1.9, errors=errs.tolist(), h=hs, kappa=kappa),
        at_most("geometry.hessian_comparison.final_error", "second differences of d^2/2 against eigenvalues {1, H}", float(errs[-1]), cfg.tol(1e-4), kappa=kappa),
    )
    for k in sorted({0.0, 1.0} | ({kappa} if cfg.kappa is not None else set())):
        for n in (2, 3):
            Mk = geo.ModelManifold(n, k)
            R = rng.uniform(0.0, 5.0, 1000)
            R = np.where(R > 0, R, 5.0)
            r = R * rng.uniform(0.0, 1.0, 1000)
            r = np.clip(r, 1e-12 * R, None)
            margin = float(np.min(geo.doubling_check(Mk, r, R)))
            rep.add(at_least(f"geometry.doubling.k{k:g}.n{n}", "volume doubling with constant 2^n cosh^(n-1)(2 sqrt(kappa) R)", margin, 0.0, samples=1000))
    x = geo.random_points(M, rng, 500, 3.0)
    v = geo.random_tangent(M, rng, 500, 3.0)
    back = geo.log_map(M, x, geo.exp_map(M, x, v))
    rep.add(at_most("geometry.exp_log_round_trip", "log inverts exp", float(np.max(np.abs(back - v))), cfg.tol(1e-10), "PLUMBING"))
    return rep


def pucci_suite(cfg: SuiteConfig) -> VerificationReport:
    rep = _new("pucci", cfg)
    rng = cfg.rng("pucci")
    tol = cfg.tol(1e-11)
    N = 10_000
    forms = np.concatenate([P.random_forms(rng, 3, N // 2), P.random_forms(rng, 3, N - N // 2, degenerate=True)])
    incs = P.random_forms(rng, 3, N)
    m1, m2, m3 = P.subadditivity_check(ELL, forms, incs)
    for name, m in (("lower", m1), ("middle", m2), ("upper", m3)):
        rep.add(at_least(f"pucci.subadditivity.{name}", "M-(S+P) <= M-(S)+M+(P) <= M+(S+P) <= M+(S)+M+(P)", float(np.min(m)), -tol, forms=N))
    lo, hi, inc = P.ellipticity_sandwich(ELL, forms, incs)
    for kind, val in inc.items():
        worst = float(min(np.min(val - lo), np.min(hi - val)))
        rep.add(at_least(f"pucci.sandwich.{kind}", "M-(P) <= F(S+P) - F(S) <= M+(P)", worst, -tol, forms=N))
    dual = float(np.max(np.abs(P.pucci_minus(ELL, -forms) + P.pucci_plus(ELL, forms))))
    rep.add(at_most("pucci.duality", "M-(-S) = -M+(S)", dual, tol, forms=N))
    kappa = 1.0 if cfg.kappa is None else cfg.kappa
    M = geo.ModelManifold(2, kappa)
    x = geo.random_points(M, rng, N, 3.0)
    y = geo.random_points(M, rng, N, 3.0)
    S2 = P.random_forms(rng, 2, N)
    for kind in P.KINDS:
        op = OperatorSpec(kind, Ellipticity() if kind == "laplacian" else ELL)
        res = float(np.max(np.abs(P.intrinsic_continuity_check(M, op, x, y, S2))))
        rep.add(at_most(f"pucci.intrinsic_continuity.{kind}", "F is unchanged by parallel transport of its argument", res, tol, forms=N, kappa=kappa))
    return rep


def envelope_suite(cfg: SuiteConfig) -> VerificationReport:
    rep = _new("envelope", cfg)
    rng = cfg.rng("envelope")
    h = cfg.h(0.1)
    worst = {k: math.inf for k in ("ordering", "realizer", "distance", "second_bound", "containment", "lipschitz", "semiconcavity", "convergence")}
    for i in range(50):
        kappa = float(i % 2)
        M = geo.ModelManifold(2, kappa)
        L = Lattice(M, M.origin(), 1.0, h)
        if i < 2:
            _grid(rep, f"envelope.k{kappa:g}", L)
        u = GridFunction.from_callable(L, np.linspace(0, 1, 11), samples.random_smooth(M, rng))
        worst["ordering"] = min(worst["ordering"], E.check_ordering(u, [0.01, 0.03, 0.1, 0.3]))
        res = E.inf_convolve(u, 0.05)
        worst["realizer"] = min(worst["realizer"], -E.realizer_identity_residual(res))
        d = E.check_distance_bound(res)
        worst["distance"] = min(worst["distance"], d["first"])
        worst["second_bound"] = min(worst["second_bound"], d["second"])
        worst["containment"] = min(worst["containment"], d["containment"])
        worst["lipschitz"] = min(worst["lipschitz"], E.check_lipschitz(res, rng, 200))
        worst["semiconcavity"] = min(worst["semiconcavity"], E.check_semiconcavity(res, rng, 40))
        prof = E.convergence_profile(u, [0.2, 0.1, 0.05, 0.025])
        worst["convergence"] = min(worst["convergence"], float(-np.max(np.diff(prof))))
    anchors = {
        "ordering": "u_eps' <= u_eps <= u for eps' > eps",
        "realizer": "the infimum is attained at the recorded realizer",
        "distance": "d^2 + |s0 - t0|^2 <= 2 eps |u(x0,t0) - u(y0,s0)|",
        "second_bound": "2 eps |u(x0,t0) - u(y0,s0)| <= 4 eps ||u||",
        "containment": "realizers lie within 2 sqrt(eps ||u||)",
        "lipschitz": "u_eps is Lipschitz with the certified constants",
        "semiconcavity": "space-time second differences of u_eps are bounded above",
        "convergence": "sup |u_eps - u| decreases as eps decreases",
    }
    tols = {"realizer": cfg.tol(1e-12), "convergence": cfg.tol(1e-15)}
    for k, v in worst.items():
        rep.add(at_least(f"envelope.{k}", anchors[k], v, -tols.get(k, 0.0), functions=50))

    # Moreau envelope of x^2/2 on a line
    h1 = cfg.h(0.01)
    L1 = Lattice(geo.ModelManifold(1, 0.0), np.zeros(1), 4.0, h1)
    x = L1.points[:, 0]
    eps = 0.5
    res = E.inf_convolve(GridFunction(L1, [0.0], 0.5 * x**2), eps)
    inner = np.abs(x) < 2.0
    err = float(np.max(np.abs(res.u_eps.values[0] - x**2 / (2 * (1 + eps)))[inner]))
    rep.add(at_most("envelope.moreau_closed_form", "inf-convolution of x^2/2 is x^2/(2(1+eps))", err, 2 * h1))

    # realizer sits at exp_x0(-eps zeta)
    worst_v, bad = 0.0, 0
    hv = cfg.h(0.05)
    for kappa in (0.0, 1.0):
        M = geo.ModelManifold(2, kappa)
        L = Lattice(M, M.origin(), 1.0, hv)
        u = GridFunction.from_callable(L, np.linspace(0, 1, 21), samples.random_smooth(M, rng))
        eps = 0.5 * E.eps_threshold(u, 0.5, 0.3)
        res = E.inf_convolve(u, eps)
        om = E.modulus_of_continuity(u)
        inner = np.flatnonzero(L.interior & (L.dist_center < 0.5))
        for node in rng.choice(inner, 50):
            r = E.subjet_transport_check(M, u, res, int(node), int(rng.integers(7, 21)), omega=om, eps0=2 * eps)
            bad += not r.ok
            worst_v = max(worst_v, r.vertex_error)
    rep.add(
        at_most("envelope.vertex_identity", "realizer y0 = exp_x0(-eps zeta)", worst_v, 3 * hv, probes=100),
        at_most("envelope.subjet_transport", "transported subjet of u_eps is a subjet of u", float(bad), 0.0, probes=100),
    )
    return rep


def barrier_suite(cfg: SuiteConfig) -> VerificationReport:
    rep = _new("barrier", cfg)
    logs = {}
    for kR0 in (0.0, 1.0):
        p = B.search_barrier_params(ETA, ELL, kR0, 2)
        cert = B.certify_barrier(p, geo.ModelManifold(2, kR0**2), R=1.0, radial=64, angular=32, time=64)
        logs[kR0] = cert.log_C_eta
        for name, m in sorted(cert.margins.items()):
            rep.add(at_least(f"barrier.k{kR0:g}.{name}", "barrier supersolution properties", float(m), 0.0, "DERIVED-CONSTANT"))
        rep.constant(f"barrier_params.k{kR0:g}", p.to_dict(), "odd l, grid m and log-grid A from the computed requirement; see search_barrier_params")
        rep.constant(f"log_C_eta.k{kR0:g}", cert.log_C_eta, "log of the max of the barrier's time derivative and tangential defect over its cylinder (64x32x64 grid)")
    rep.add(at_least("barrier.constant_monotone", "C_eta grows with kappa R0^2", logs[1.0] - logs[0.0], 0.0, "DERIVED-CONSTANT"))
    return rep


def _well_records(kappa: float, h: float, rng_seed: int):
    M = geo.ModelManifold(2, kappa)
    L = Lattice(M, M.origin(), 1.0, h)
    u = GridFunction.from_callable(L, np.linspace(0, 1, 11), samples.well(M, L.center, depth=1.0, width=0.5, drift=0.2))
    E_pts = geo.random_points(M, np.random.default_rng(rng_seed), 20, 0.3)
    jets = u.jets()
    recs = [r for r in C.find_contact_set(u, E_pts, 4.0, 1.0, jets=jets) if r.usable]
    par = min(C.jacobian_bound_check(u, r, jets=jets) for r in recs)
    ell = min(C.elliptic_jacobian_bound_check(u, r, jets=jets) for r in recs)
    return L, recs, par, ell


def contact_suite(cfg: SuiteConfig) -> VerificationReport:
    rep = _new("contact", cfg)
    seed = int(cfg.rng("contact").integers(2**31))
    for kappa in (0.0, 1.0):
        deficits = []
        for h in (cfg.h(0.05), cfg.h(0.025)):
            L, recs, par, ell = _well_records(kappa, h, seed)
            _grid(rep, f"contact.k{kappa:g}", L)
            tag = f"contact.k{kappa:g}.h{h:g}"
            rep.add(
                at_least(f"{tag}.records", "usable contact records", float(len(recs)), 200.0, "PLUMBING"),
                at_least(f"{tag}.parabolic_jacobian", "Jacobian of the normal map against its parabolic bound", par, -cfg.tol(5 * h)),
                at_least(f"{tag}.elliptic_jacobian", "Jacobian of the spatial normal map against its bound", ell, -cfg.tol(5 * h)),
            )
            deficits.append(max(0.0, -min(par, ell)))
        rep.add(at_least(f"contact.k{kappa:g}.refinement", "worst deficit does not grow under halving h", deficits[0] - deficits[1], 0.0, deficits=deficits))
    return rep


def abp_inputs(cfg: SuiteConfig, kappa: float, count: int = 10):
    """Smooth wells satisfying the ABP hypotheses on a grid covering the outer cylinder."""
    rng = cfg.rng(f"abp.{kappa:g}")
    R, h = 0.1, cfg.h(0.05)
    M = geo.ModelManifold(2, kappa)
    L = Lattice(M, M.origin(), (11 / ETA) * R + 2 * h, h)
    a2 = 4 + ETA**2 + ETA**4 / 4
    times = np.linspace(-a2 * R**2 - 1e-3, 0.0, 21)
    out = []
    for _ in range(count):
        level = rng.uniform(1.2, 2.5)
        depth = level - rng.uniform(0.0, 0.9)
        width = rng.uniform(0.6, 1.5) * R
        drift = rng.uniform(0.0, 1.0)
        centre = geo.random_points(M, rng, (), 0.5 * R)
        fn = samples.well(M, centre, depth=depth, width=width, level=level, drift=drift)
        out.append((GridFunction.from_callable(L, times, fn), {"level": level, "depth": depth, "width": width, "drift": drift}))
    return R, out


def abp_suite(cfg: SuiteConfig) -> VerificationReport:
    rep = _new("abp", cfg)
    tol = cfg.tol(0.05)
    for kappa in (0.0, 1.0):
        R, inputs = abp_inputs(cfg, kappa)
        _grid(rep, f"abp.k{kappa:g}", inputs[0][0].lattice)
        for i, (u, params) in enumerate(inputs):
            r = C.abp_estimate_check(u, ETA, R, ell=ELL, tol=tol, contact=False)
            rep.add(at_least(f"abp.k{kappa:g}.{i}", "image measure bound: lhs <= rhs (1 + tol), in logs", r.log_margin, 0.0, lhs=r.lhs, log_rhs=r.log_rhs, **params))
    rep.constant("M_eta", C.abp_constants(ETA)["M_eta"], "2 (A_eta + 1) with A_eta = 5 + 24 / eta^2")
    return rep


def decay_inputs(cfg: SuiteConfig, kappa: float, count: int = 5):
    """Solutions of ``u_t = M-(D^2 u)`` from ``c0 + c1 d^2/R^2`` plus nonnegative bumps."""
    rng = cfg.rng(f"decay.{kappa:g}")
    R, h = (1.0, cfg.h(0.5)) if kappa == 0 else (0.05, cfg.h(0.025))
    M = geo.ModelManifold(2, kappa)
    L = Lattice(M, M.origin(), (11 / ETA) * R + 1.5 * h, h)
    a2 = 4 + ETA**2 + ETA**4 / 4
    t_lo = 4 * R**2 - a2 * R**2 - 0.02 * R**2
    out = []
    for _ in range(count):
        c0, c1 = rng.uniform(0.05, 0.9), rng.uniform(0.0, 0.02)
        peaks = geo.random_points(M, rng, 2, 6 * R)
        amp = rng.uniform(0.0, 0.5, 2)
        wid = rng.uniform(0.5, 2.0, 2) * R

        def u0(x, t, c0=c0, c1=c1, peaks=peaks, amp=amp, wid=wid):
            d2 = geo.distance(M, x, M.origin()) ** 2
            bumps = sum(a * np.exp(-geo.distance(M, x, p) ** 2 / (2 * w**2)) for a, p, w in zip(amp, peaks, wid))
            return c0 + c1 * d2 / R**2 + bumps

        spec = S.ProblemSpec(L, OperatorSpec("pucci_minus", ELL), u0, t_lo, 4 * R**2, cfl=0.4)
        res = S.solve(spec)
        out.append((res, {"c0": c0, "c1": c1, "amplitudes": amp.tolist(), "widths": wid.tolist()}))
    return R, out


def decay_suite(cfg: SuiteConfig) -> VerificationReport:
    rep = _new("decay", cfg)
    for kappa in (0.0, 1.0):
        R, inputs = decay_inputs(cfg, kappa)
        _grid(rep, f"decay.k{kappa:g}", inputs[0][0].u.lattice)
        p = B.search_barrier_params(ETA, ELL, math.sqrt(kappa) * R, 2)
        for i, (res, params) in enumerate(inputs):
            r = C.measure_decay_check(res.u, ETA, R, ell=ELL, barrier=p)
            mono = res.diagnostics.get("monotone", False)
            rep.add(
                at_least(f"decay.k{kappa:g}.{i}", "sublevel fraction >= mu_eta, in logs", r.log_fraction - r.constants["log_mu_eta"], 0.0, "DERIVED-CONSTANT", fraction=r.fraction, fraction_in_small=r.fraction_in_small, **params),
                holds(f"decay.k{kappa:g}.{i}.monotone_scheme", "solver stencil has nonnegative weights", bool(mono)),
            )
        cst = r.constants
        rep.constant(f"log_mu_eta.k{kappa:g}", cst["log_mu_eta"], "log of the derived sublevel fraction from C1, C2, C3 and the barrier constant")
        rep.constant(f"log_eps_eta.k{kappa:g}", cst["log_eps_eta"], "log mu_eta / (n + 1)")
    return rep


def solver_suite(cfg: SuiteConfig) -> VerificationReport:
    rep = _new("solver", cfg)
    rng = cfg.rng("solver")
    M0 = geo.ModelManifold(2, 0.0)

    def heat(x, t):
        return np.exp(-np.sum(x**2, -1) / (4 * t)) / (4 * np.pi * t)

    errs = []
    for h in (cfg.h(0.1), cfg.h(0.05)):
        L = Lattice(M0, np.zeros(2), 3.0, h)
        spec = S.ProblemSpec(L, OperatorSpec("laplacian"), heat, 0.5, 1.0, boundary=heat)
        spec.store_every = spec.steps
        res = S.solve(spec)
        errs.append(float(np.max(np.abs(res.u.values[-1] - heat(L.points, 1.0)))))
    rep.add(at_least("solver.heat_order", "flat heat kernel error decays at second order", float(_orders(errs)[0]), 1.8, errors=errs))

    M1 = geo.ModelManifold(2, 1.0)
    L = Lattice(M1, M1.origin(), 2.0, cfg.h(0.1))
    _grid(rep, "solver.hyperbolic_heat", L)
    y = M1.origin()
    kern = lambda x, t: HN.heat_kernel(M1, geo.distance(M1, x, y), t)
    spec = S.ProblemSpec(L, OperatorSpec("laplacian"), kern, 0.5, 2.5, boundary=kern)
    spec.store_every = spec.steps
    res = S.solve(spec)
    ref = kern(L.points, 2.5)
    rel = float(np.max(np.abs(res.u.values[-1] - ref)) / np.max(ref))
    rep.add(at_most("solver.hyperbolic_heat_kernel", "heat solve on H^2 against the exact kernel", rel, cfg.tol(2e-3)))

    worst = math.inf
    for trial in range(10):
        Lc = Lattice(geo.ModelManifold(2, float(trial % 2)), geo.ModelManifold(2, float(trial % 2)).origin(), 1.0, cfg.h(0.1))
        base = samples.random_smooth(Lc.M, rng, radius=0.8)
        bump = samples.well(Lc.M, geo.random_points(Lc.M, rng, (), 0.5), depth=-abs(rng.normal()), width=rng.uniform(0.1, 0.4))
        hi = lambda x, t, base=base, bump=bump: base(x, t) + bump(x, t)
        op = OperatorSpec("pucci_minus" if trial % 4 < 2 else "pucci_plus", ELL)
        lo_u = S.solve(S.ProblemSpec(Lc, op, base, 0.0, 0.05, boundary=lambda x, t, f=base: f(x, 0.0))).u
        hi_u = S.solve(S.ProblemSpec(Lc, op, hi, 0.0, 0.05, boundary=lambda x, t, f=hi: f(x, 0.0))).u
        worst = min(worst, float(np.min(hi_u.values - lo_u.values)))
    rep.add(at_least("solver.comparison", "ordered data give ordered solutions", worst, -1e-12, pairs=10))

    Lm = Lattice(M1, M1.origin(), 1.2, cfg.h(0.1))
    mono = S.ProblemSpec(Lm, OperatorSpec("pucci_minus", ELL), lambda x, t: 0.0 * x[..., 0]).monotonicity()
    rep.add(at_least("solver.monotone_weights", "neighbour weights are nonnegative", mono["min_neighbor_weight"], 0.0, "PLUMBING", **mono))
    const = S.solve(S.ProblemSpec(Lm, OperatorSpec("pucci_plus", ELL), lambda x, t: 3.0, 0.0, 0.05))
    rep.add(at_most("solver.constant_fixed_point", "constants are stationary", float(np.max(np.abs(const.u.values - 3.0))), 0.0, "PLUMBING"))
    return rep


def _flat_heat_closed_form(R: float, shift: float) -> float:
    return (4 * R**2 + shift) / (R**2 + shift) * math.exp(R**2 / (4 * (4 * R**2 + shift)))


def harnack_suite(cfg: SuiteConfig) -> VerificationReport:
    rep = _new("harnack", cfg)
    lap = OperatorSpec("laplacian")
    R, shift = 1.0, 0.5
    M0 = geo.ModelManifold(2, 0.0)
    flat = HN.HarnackScenario(M0, lap, R, initial=HN.InitialData(shift=shift), h=cfg.h(0.1))
    m0 = HN.measure_harnack(flat)
    closed = _flat_heat_closed_form(R, shift)
    rep.add(at_most("harnack.flat_heat_closed_form", "grid ratio against the closed-form cylinder ratio of the Gaussian kernel", abs(m0.ratio / closed - 1), cfg.tol(0.05), ratio=m0.ratio, closed_form=closed))
    rep.add(at_least("harnack.flat_heat_li_yau", "ratio below the sharp two-point bound", m0.li_yau_bound - m0.ratio, 0.0, bound=m0.li_yau_bound))
    fine = HN.measure_harnack(HN.HarnackScenario(M0, lap, R, initial=HN.InitialData(shift=shift), h=cfg.h(0.05)))
    rep.add(at_most("harnack.flat_heat_h_stability", "ratio stable under halving h", abs(fine.ratio / m0.ratio - 1), cfg.tol(0.05), ratios=[m0.ratio, fine.ratio]))

    M1 = geo.ModelManifold(2, 1.0)
    hyp = HN.HarnackScenario(M1, lap, R, initial=HN.InitialData(offset=0.5, shift=shift), h=cfg.h(0.1))
    m1 = HN.measure_harnack(hyp)
    _grid(rep, "harnack.hyperbolic_heat", hyp.lattice())
    rep.add(
        at_least("harnack.hyperbolic_heat_li_yau", "ratio below the sharp two-point bound on H^2", m1.li_yau_bound - m1.ratio, 0.0, ratio=m1.ratio, bound=m1.li_yau_bound),
        at_least("harnack.hyperbolic_heat_extremal_pair", "extremal pair obeys its own two-point bound", m1.li_yau_pair - m1.ratio, 0.0, pair_bound=m1.li_yau_pair),
        holds("harnack.hyperbolic_heat_monotone_scheme", "solver stencil has nonnegative weights", bool(m1.diagnostics.get("monotone"))),
    )
    weak = HN.weak_harnack_measure(hyp)
    rep.add(holds("harnack.weak_monotone_in_p", "p-mean ratios nondecreasing in p", weak["monotone_in_p"], ratios=weak["ratios"]))

    const = HN.HarnackScenario(M1, lap, R, initial=HN.InitialData("constant", value=2.0), h=cfg.h(0.2), mode="exact")
    rep.add(at_most("harnack.constant_ratio", "constant solutions have ratio 1", abs(HN.measure_harnack(const).ratio - 1), 0.0, "PLUMBING"))
    src = HN.HarnackScenario(M0, lap, R, initial=HN.InitialData(shift=shift), source=HN.Source("constant", -0.01), h=cfg.h(0.1))
    u, f, _ = HN.scenario_solution(src)
    a = HN.measure_harnack(src, u, f).ratio
    b = HN.measure_harnack(src, u.with_values(7.0 * u.values), f.with_values(7.0 * f.values)).ratio
    rep.add(at_most("harnack.scaling_invariance", "ratio unchanged by u -> c u, f -> c f", abs(a / b - 1), 1e-12, "PLUMBING"))

    sweep = HN.constant_growth_sweep(HN.SweepConfig(h=cfg.h(0.05)))
    rep.add(holds("harnack.growth_envelope_nondecreasing", "worst ratio nondecreasing in kappa R0^2", sweep["nondecreasing"], "FORMULA", envelope=sweep["envelope"]))
    rep.results = {
        "flat_heat": m0.to_dict(),
        "hyperbolic_heat": m1.to_dict(),
        "weak_harnack": weak,
        "growth_sweep": sweep,
    }
    rep.constant("theta.k1R1", HN.theta_exponent(1.0, 1.0), "1 + log2 cosh(8 sqrt(kappa) R0)")
    return rep


SUITES = {
    "geometry": geometry_suite,
    "pucci": pucci_suite,
    "envelope": envelope_suite,
    "barrier": barrier_suite,
    "contact": contact_suite,
    "abp": abp_suite,
    "decay": decay_suite,
    "solver": solver_suite,
    "harnack": harnack_suite,
}


def run_suite(name: str, config: SuiteConfig = SuiteConfig()) -> VerificationReport:
    """Run one suite, or every suite for ``"all"``."""
    if name == "all":
        rep = _new("all", config)
        for key in SUITES:
            rep.merge(SUITES[key](config))
        return rep
    if name not in SUITES:
        raise KeyError(f"unknown suite {name!r}; choose from {sorted(SUITES)} or 'all'")
    return SUITES[name](config)
