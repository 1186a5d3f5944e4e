import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from harnack_lab import geometry as geo
from harnack_lab import harness as H
from harnack_lab.pucci import Ellipticity, OperatorSpec

LAP = OperatorSpec("laplacian")
R2 = geo.ModelManifold(2, 0.0)
H2 = geo.ModelManifold(2, 1.0)


def flat_cylinder_ratio(R, s):
    return (4 * R**2 + s) / (R**2 + s) * math.exp(R**2 / (4 * (4 * R**2 + s)))


# --- closed forms ---------------------------------------------------------------


def test_theta_values():
    assert H.theta_exponent(0.0, 3.0, "harnack8") == 1.0
    assert H.theta_exponent(0.0, 3.0, "abp4") == 1.0
    assert H.theta_exponent(1.0, 1.0) == pytest.approx(1 + math.log2(math.cosh(8.0)), rel=1e-14)
    assert H.theta_exponent(1.0, 1.0) == pytest.approx(11.5416, abs=1e-4)
    assert H.theta_exponent(1.0, 1.0, "abp4") == pytest.approx(1 + math.log2(math.cosh(4.0)), rel=1e-14)
    assert math.isfinite(H.theta_exponent(100.0, 100.0))
    with pytest.raises(ValueError):
        H.theta_exponent(-1.0, 1.0)
    with pytest.raises(ValueError):
        H.theta_exponent(1.0, 1.0, "other")


@given(st.floats(0, 50), st.floats(0, 50))
def test_theta_nondecreasing(a, b):
    lo, hi = sorted((a, b))
    assert H.theta_exponent(lo, 1.0) <= H.theta_exponent(hi, 1.0)


def reference_li_yau(n, k, d, t1, t2):
    factor = (t2 / t1) ** (n / 2)
    return factor * math.exp(d * d / (4 * (t2 - t1)) * (1 + k * (t2 + t1) / 3) + n * k * (t2 - t1) / 4)


def test_li_yau_trivial_cases():
    x = np.array([0.3, -0.2])
    assert H.li_yau_bound(2, 0.0, x, 1.0, x, 3.0, R2) == pytest.approx(3.0)
    y = x + np.array([2.0, 0.0])  # d^2 / (4 (t2 - t1)) = 1
    assert H.li_yau_bound(2, 0.0, x, 1.0, y, 2.0, R2) == pytest.approx(2.0 * math.e)
    with pytest.raises(ValueError):
        H.li_yau_bound(2, 0.0, x, 2.0, x, 2.0, R2)
    with pytest.raises(ValueError):
        H.li_yau_bound(2, 0.0, x, 0.0, x, 1.0, R2)


def test_li_yau_against_reference():
    rng = np.random.default_rng(0)
    for _ in range(20):
        x1, x2 = geo.random_points(H2, rng, 2, 2.0)
        t1 = rng.uniform(0.1, 2.0)
        t2 = t1 + rng.uniform(0.1, 2.0)
        d = float(geo.distance(H2, x1, x2))
        assert H.li_yau_bound(2, 1.0, x1, t1, x2, t2, H2) == pytest.approx(reference_li_yau(2, 1.0, d, t1, t2), rel=1e-12)


def test_cylinder_bound_is_max_over_pairs():
    t1s, t2s = np.array([1.2, 1.5, 2.0]), np.array([3.1, 4.0])
    best = max(reference_li_yau(2, 1.0, 2.0, a, b) for a in t1s for b in t2s)
    assert H.li_yau_cylinder_bound(2, 1.0, 2.0, t1s, t2s) == pytest.approx(best, rel=1e-12)


# --- heat kernels ---------------------------------------------------------------


def mckean(r, t):
    # s = r + w^2 removes the inverse square root at s = r
    def g(w):
        s = r + w * w
        return 2 * w * s * math.exp(-(s * s) / (4 * t)) / math.sqrt(2 * math.sinh(r + w * w / 2) * math.sinh(w * w / 2))

    val = integrate.quad(g, 0, math.sqrt(40 * math.sqrt(t) + 40), epsabs=0, epsrel=1e-12, limit=400)[0]
    return math.sqrt(2) * math.exp(-t / 4) / (4 * math.pi * t) ** 1.5 * val


@pytest.mark.parametrize("r,t", [(0.0, 0.3), (0.5, 0.3), (1.0, 1.0), (3.0, 0.7), (0.2, 4.0)])
def test_hyperbolic_kernel_matches_quadrature(r, t):
    assert H.heat_kernel(H2, r, t) == pytest.approx(mckean(r, t), rel=1e-8)


@pytest.mark.parametrize("M", [R2, H2, geo.ModelManifold(2, 0.25), geo.ModelManifold(3, 1.0), geo.ModelManifold(3, 0.0)])
def test_kernel_has_unit_mass(M):
    n, k = M.dim, M.kappa
    area = geo.sphere_area(n)
    for t in (0.2, 1.0):
        dens = (lambda r: r ** (n - 1)) if k == 0 else (lambda r: (math.sinh(math.sqrt(k) * r) / math.sqrt(k)) ** (n - 1))
        mass = integrate.quad(lambda r: area * dens(r) * H.heat_kernel(M, r, t), 0, 40, limit=400)[0]
        assert mass == pytest.approx(1.0, abs=1e-7)


def test_kernel_solves_heat_equation():
    r = np.linspace(0.3, 2.5, 12)
    t, e = 0.8, 1e-4
    p = lambda rr, tt: H.heat_kernel(H2, rr, tt)
    dt = (p(r, t + e) - p(r, t - e)) / (2 * e)
    prr = (p(r + e, t) - 2 * p(r, t) + p(r - e, t)) / e**2
    pr = (p(r + e, t) - p(r - e, t)) / (2 * e)
    assert np.max(np.abs(dt - prr - pr / np.tanh(r))) < 1e-5


def test_kernel_curvature_scaling_and_errors():
    M = geo.ModelManifold(2, 4.0)
    assert H.heat_kernel(M, 0.3, 0.2) == pytest.approx(4.0 * H.heat_kernel(H2, 0.6, 0.8), rel=1e-13)
    with pytest.raises(ValueError):
        H.heat_kernel(H2, 1.0, 0.0)
    with pytest.raises(NotImplementedError):
        H.heat_kernel(geo.ModelManifold(4, 1.0), 1.0, 1.0)


# --- scenarios ------------------------------------------------------------------


def test_scenario_validation():
    with pytest.raises(ValueError):
        H.HarnackScenario(R2, LAP, 1.0, R0=0.5)
    with pytest.raises(ValueError):
        H.HarnackScenario(R2, OperatorSpec("pucci_minus", Ellipticity(1, 2)), mode="exact")
    with pytest.raises(ValueError):
        H.HarnackScenario(R2, LAP, 1.0, h=1.0)
    with pytest.raises(ValueError):
        H.InitialData("spike")
    with pytest.raises(ValueError):
        H.InitialData("heat_kernel", shift=0.0)
    scn = H.HarnackScenario(H2, LAP, 1.0, center=(0.2, 0.1))
    assert float(geo.distance(H2, scn.x0, H2.origin())) == pytest.approx(math.hypot(0.2, 0.1))
    assert scn.lattice().radius == pytest.approx(2.2)
    json.dumps(scn.to_dict())


@pytest.mark.parametrize("mode", ["exact", "solve"])
def test_constant_ratio_is_one(mode):
    scn = H.HarnackScenario(H2, LAP, 0.5, initial=H.InitialData("constant", value=3.0), h=0.1, mode=mode, frames=41)
    m = H.measure_harnack(scn)
    assert m.ratio == 1.0 and m.sup_val == m.inf_val == 3.0
    w = H.weak_harnack_measure(scn)
    assert np.allclose(w["ratios"], 1.0, rtol=1e-14) and w["geometric_mean_ratio"] == pytest.approx(1.0, rel=1e-14)


def test_pucci_constant_ratio_is_one():
    op = OperatorSpec("pucci_minus", Ellipticity(1.0, 2.0))
    scn = H.HarnackScenario(R2, op, 0.5, initial=H.InitialData("constant", value=2.0), h=0.1)
    assert H.measure_harnack(scn).ratio == 1.0


def test_flat_heat_matches_closed_form_and_li_yau():
    scn = H.HarnackScenario(R2, LAP, 1.0, initial=H.InitialData(shift=0.5), h=0.1)
    m = H.measure_harnack(scn)
    assert m.ratio == pytest.approx(flat_cylinder_ratio(1.0, 0.5), rel=0.05)
    assert m.ratio <= m.li_yau_bound and m.ratio <= m.li_yau_pair
    assert m.theta == 1.0 and m.f_norm == 0.0
    assert H.kernel_cylinder_ratio(scn) == pytest.approx(flat_cylinder_ratio(1.0, 0.5), rel=1e-9)
    json.dumps(m.to_dict())


def test_hyperbolic_heat_below_li_yau():
    scn = H.HarnackScenario(H2, LAP, 1.0, initial=H.InitialData(offset=0.5, shift=0.5), h=0.1)
    m = H.measure_harnack(scn)
    assert m.diagnostics["monotone"]
    assert 1.0 < m.ratio <= m.li_yau_bound
    exact = H.measure_harnack(H.HarnackScenario(H2, LAP, 1.0, initial=H.InitialData(offset=0.5, shift=0.5), h=0.1, mode="exact"))
    assert m.ratio == pytest.approx(exact.ratio, rel=1e-2)


def test_negative_solution_rejected():
    scn = H.HarnackScenario(R2, LAP, 0.5, initial=H.InitialData("bump", base=-0.1, amplitude=1.0), h=0.1)
    with pytest.raises(H.ScenarioError, match="negative"):
        H.measure_harnack(scn)


def test_scaling_invariance_with_source():
    scn = H.HarnackScenario(R2, LAP, 0.5, initial=H.InitialData(shift=0.5), source=H.Source("constant", -0.02), h=0.1)
    u, f, _ = H.scenario_solution(scn)
    base = H.measure_harnack(scn, u, f)
    assert base.f_norm == pytest.approx(0.02)
    for c in (0.1, 13.0):
        scaled = H.measure_harnack(scn, u.with_values(c * u.values), f.with_values(c * f.values))
        assert scaled.ratio == pytest.approx(base.ratio, rel=1e-12)
    assert base.li_yau_bound is None


def test_source_lowers_ratio():
    # a source term only enlarges the denominator
    scn = H.HarnackScenario(R2, LAP, 0.5, initial=H.InitialData(shift=0.5), h=0.1)
    u, f, _ = H.scenario_solution(scn)
    plain = H.measure_harnack(scn, u, f).ratio
    with_f = H.measure_harnack(scn, u, f.with_values(np.full_like(f.values, 0.5))).ratio
    assert with_f < plain


def test_h_stability_flat():
    ratios = [H.measure_harnack(H.HarnackScenario(R2, LAP, 1.0, initial=H.InitialData(offset=0.5, shift=0.25), h=h)).ratio for h in (0.1, 0.05)]
    assert ratios[1] == pytest.approx(ratios[0], rel=0.05)


# --- weak Harnack -----------------------------------------------------------------


@pytest.fixture(scope="module")
def hyperbolic_exact():
    return [H.HarnackScenario(H2, LAP, 1.0, initial=H.InitialData(offset=0.5, shift=0.5), h=h, mode="exact") for h in (0.1, 0.05)]


def test_weak_harnack_monotone_and_limit(hyperbolic_exact):
    scn = hyperbolic_exact[0]
    w = H.weak_harnack_measure(scn, ps=(1e-6, 0.1, 0.5, 0.9))
    assert w["monotone_in_p"] and np.all(np.diff(w["ratios"]) >= 0)
    assert w["ratios"][0] == pytest.approx(w["geometric_mean_ratio"], rel=1e-5)
    with pytest.raises(ValueError):
        H.weak_harnack_measure(scn, ps=(0.5, 1.0))


def test_weak_harnack_h_stable(hyperbolic_exact):
    a, b = (np.array(H.weak_harnack_measure(s)["ratios"]) for s in hyperbolic_exact)
    assert np.all(np.isfinite(a)) and np.allclose(a, b, rtol=0.05)


# --- growth sweep ----------------------------------------------------------------


def test_growth_sweep_small():
    cfg = H.SweepConfig(values=(0.0, 0.5, 1.0), offsets=(0.0, 1.0), shifts=(0.5,), h=0.1, frames=81)
    out = H.constant_growth_sweep(cfg)
    assert out["nondecreasing"]
    assert out["envelope"][0] == pytest.approx(max(m["ratio"] for m in out["members"]["0.0"]))
    lo, hi = out["fit_log_envelope"]["slope_ci95"]
    assert lo <= out["fit_log_envelope"]["slope"] <= hi
    json.dumps(out)


def test_growth_sweep_two_values_has_no_fit():
    out = H.constant_growth_sweep(H.SweepConfig(values=(0.0, 1.0), offsets=(0.0,), shifts=(0.5,), h=0.1, frames=41))
    assert out["fit_log_envelope"] == {} and out["nondecreasing"]
