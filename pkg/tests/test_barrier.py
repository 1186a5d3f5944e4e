import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from harnack_lab import barrier as B
from harnack_lab import geometry as geo
from harnack_lab.pucci import Ellipticity

ELL = Ellipticity(1.0, 2.0)


@pytest.fixture(scope="module")
def found():
    return {k: B.search_barrier_params(0.5, ELL, k, 2) for k in (0.0, 1.0)}


def toy(kappaR0=1.0):
    return B.BarrierParams(0.5, 0.0, 1.0, 5, 0.25, ELL, kappaR0, 2)


def test_box_constants_and_ctilde():
    bc = B.box_constants(0.5)
    assert bc == {"alpha1": 22.0, "alpha2": 4.0 + 0.25 + 0.015625, "beta1": 18.0, "beta2": 4.25}
    assert B.ctilde(0.5, 2, 2.0, 0.0) == pytest.approx(48 + 12)
    assert B.ctilde(0.5, 2, 2.0, 1.0) == pytest.approx(48 + 12 * 44 / math.tanh(44))
    with pytest.raises(ValueError):
        B.box_constants(1.0)


@pytest.mark.parametrize("l", [1, 2, 4])
def test_bad_exponent_rejected(l):
    with pytest.raises(ValueError, match="odd integer"):
        B.BarrierParams(0.5, 0.0, 1.0, l, 0.25, ELL, 0.0, 2)


def test_search_exhaustion_is_reported():
    with pytest.raises(B.BarrierSearchError):
        B.search_barrier_params(0.5, ELL, 0.0, 2, l_max=101)


def test_formula_oracle(found):
    p = found[0.0]
    b1, b2 = 18.0, 4.25
    log_h = p.log_A - p.m * b2 + p.l * math.log(1 - 4 / b1**2) - math.log(4 * math.pi * b2) - 4 * p.alpha / b2
    expect = -math.exp(log_h) + p.Ctilde * b2
    assert float(B.phi(p, 4.0, b2)) == pytest.approx(expect, rel=1e-12)
    M = geo.ModelManifold(2, 0.0)
    x = np.array([2.0, 0.0])
    assert float(B.eval_barrier(p, M, np.zeros(2), 1.0, x, b2)) == pytest.approx(expect, rel=1e-12)


def test_outer_shell_and_small_time(found):
    p = found[1.0]
    tau = np.linspace(0.01, 4.25, 7)
    assert np.array_equal(B.phi(p, 18.0**2, tau), p.Ctilde * tau)
    assert np.all(B.phi(p, 0.3, np.array([-0.01, 0.0])) == 0.0)
    tau = np.array([1e-3, 1e-4, 1e-6])
    vals = B.phi(p, 0.0625, tau)
    assert np.all(np.diff(np.abs(vals - p.Ctilde * tau)) < 0)
    assert vals[-1] == pytest.approx(p.Ctilde * tau[-1], rel=1e-12)


def test_outside_cylinder_rejected(found):
    p = found[0.0]
    M = geo.ModelManifold(2, 0.0)
    with pytest.raises(ValueError):
        B.eval_barrier(p, M, np.zeros(2), 1.0, np.array([23.0, 0.0]), 1.0)
    with pytest.raises(ValueError):
        B.eval_barrier(p, M, np.zeros(2), 1.0, np.array([1.0, 0.0]), 5.0)


def test_certificates_pass_and_grow(found):
    certs = {}
    for k, p in found.items():
        M = geo.ModelManifold(2, k**2)
        c = B.certify_barrier(p, M, R=1.0)
        assert c.ok, c.margins
        assert c.margins["c_drift_defect"] > 0
        assert np.isfinite(c.log_C_eta)
        certs[k] = c
    assert certs[1.0].log_C_eta >= certs[0.0].log_C_eta
    assert found[1.0].m >= found[0.0].m and found[1.0].alpha >= found[0.0].alpha
    assert found[1.0].l >= found[0.0].l
    json.dumps(certs[1.0].to_dict())


def test_search_is_deterministic(found):
    again = B.search_barrier_params(0.5, ELL, 1.0, 2)
    assert again == found[1.0]


def test_constant_monotone_in_curvature_radius():
    logs = []
    for k in (0.0, 0.25, 0.5, 1.0, 1.5):
        p = B.search_barrier_params(0.5, ELL, k, 2)
        logs.append(B.certify_barrier(p, geo.ModelManifold(2, k**2), R=1.0, radial=32, angular=8, time=32).log_C_eta)
    assert np.all(np.diff(logs) >= 0)


def test_small_time_margin_detects_weak_exponent():
    assert B.small_time_margin(toy(0.0)) < 0
    p = B.search_barrier_params(0.5, ELL, 0.0, 2)
    assert B.small_time_margin(p) > 0
    # lowering l by one odd step breaks the expansion
    q = B.BarrierParams(p.eta, p.log_A, p.m, p.l - 2, p.alpha, p.ell, p.kappaR0, p.n)
    assert B.small_time_margin(q) <= 0


def test_larger_alpha_removes_leading_term():
    p = B.BarrierParams(0.5, 0.0, 1.0, 3, 0.5, ELL, 0.0, 2)
    assert B.small_time_margin(p) > 0


@settings(max_examples=200, deadline=None)
@given(s=st.floats(0.0, 400.0), tau=st.floats(1e-6, 5.0))
def test_floor_identity_outside_core(s, tau):
    eta = 0.5
    st_, d1, d2, dt = B.floored_s(eta, np.array(s), np.array(tau))
    assert st_ >= s - 1e-15 and st_ >= 0 and 0 <= d1 <= 1
    if s >= eta**2 / 4 or tau >= eta**2 / 4:
        assert st_ == pytest.approx(s, abs=1e-14) and d1 == 1 and d2 == 0 and dt == 0


def test_floor_monotone_and_smooth():
    s = np.linspace(0, 0.1, 20001)
    for tau in (1e-4, 0.03, 0.045, 0.06):
        st_, d1, d2, _ = B.floored_s(0.5, s, np.full_like(s, tau))
        assert np.all(np.diff(st_) >= 0)
        # derivative is continuous: no jumps larger than the local slope allows
        assert np.max(np.abs(np.diff(d1))) < 1e-2


def _second_difference_error(p, M, z0, x, t, h):
    _, D2, _ = B.barrier_jets(p, M, z0, 1.0, x, t)
    n = M.dim
    f0 = B.eval_barrier(p, M, z0, 1.0, x, t)
    err = 0.0
    for v in (np.eye(n)[0], np.eye(n)[1], np.array([1.0, 1.0]) / np.sqrt(2)):
        fp = B.eval_barrier(p, M, z0, 1.0, geo.exp_map(M, x, h * v) if not M.flat else x + h * v, t)
        fm = B.eval_barrier(p, M, z0, 1.0, geo.exp_map(M, x, -h * v) if not M.flat else x - h * v, t)
        err = max(err, abs((fp + fm - 2 * f0) / h**2 - v @ D2 @ v))
    return err


@pytest.mark.parametrize("kappa", [0.0, 1.0])
def test_hessian_two_ways(kappa):
    p = toy(1.0)
    M = geo.ModelManifold(2, kappa)
    z0 = M.origin()
    x = geo.exp_map(M, z0, np.array([0.9, 0.6])) if not M.flat else np.array([0.9, 0.6])
    e = [_second_difference_error(p, M, z0, x, 1.0, h) for h in (0.02, 0.01, 0.005)]
    rates = np.log2(np.array(e[:-1]) / np.array(e[1:]))
    assert np.all(rates > 1.8), (e, rates)


def test_time_derivative_matches_difference():
    p = toy(1.0)
    M = geo.ModelManifold(2, 1.0)
    x = geo.exp_map(M, M.origin(), np.array([0.5, -0.3]))
    t, dt = 0.7, 1e-5
    _, _, d = B.barrier_jets(p, M, M.origin(), 1.0, x, t)
    fd = (B.eval_barrier(p, M, M.origin(), 1.0, x, t + dt) - B.eval_barrier(p, M, M.origin(), 1.0, x, t - dt)) / (2 * dt)
    assert float(d) == pytest.approx(float(fd), rel=1e-6)


def test_translation_shifts_time(found):
    p = found[0.0]
    M = geo.ModelManifold(2, 0.0)
    value, jets = B.translated_barrier(p, M, np.zeros(2), 1.0)
    x = np.array([1.0, 0.5])
    assert value(x, 1.0) == B.eval_barrier(p, M, np.zeros(2), 1.0, x, 1.25)
