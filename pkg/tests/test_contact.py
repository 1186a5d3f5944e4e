import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from harnack_lab import contact as C
from harnack_lab import geometry as geo
from harnack_lab import samples
from harnack_lab.grid import GridFunction, Lattice
from harnack_lab.pucci import Ellipticity

ELL = Ellipticity(1.0, 2.0)


def lattice(kappa, radius=1.0, h=0.1):
    M = geo.ModelManifold(2, kappa)
    return Lattice(M, M.origin(), radius, h)


def record_at(u, node, k, a, b):
    grad, hess = u.jets()
    dudt = u.time_derivative("backward")
    L = u.lattice
    return C.ContactRecord(node, k, L.points[node], float(u.times[k]), L.points[node], a, b, 0.0, grad[k, node], hess[k, node], float(dudt[k, node]))


@pytest.mark.parametrize("kappa", [0.0, 1.0])
def test_zero_function_touches_below_vertex(kappa):
    L = lattice(kappa)
    u = GridFunction(L, np.linspace(0, 1, 6), np.zeros((6, L.size)))
    y = geo.exp_map(L.M, L.center, np.array([0.23, -0.41])) if not L.M.flat else np.array([0.23, -0.41])
    hits, _ = C.contact_nodes(u, y, 2.0, 1.0)
    j = L.nearest(y)
    assert sorted(map(tuple, hits)) == [(k, j) for k in range(1, 6)]


def test_shift_and_scaling_keep_contacts():
    L = lattice(1.0)
    u = GridFunction.from_callable(L, np.linspace(0, 1, 9), samples.random_smooth(L.M, np.random.default_rng(3)))
    y = geo.exp_map(L.M, L.center, np.array([0.1, 0.2]))
    base, _ = C.contact_nodes(u, y, 3.0, 1.0)
    shifted, _ = C.contact_nodes(u.with_values(u.values + 7.5), y, 3.0, 1.0)
    scaled, _ = C.contact_nodes(u.with_values(u.values / 4.0), y, 0.75, 0.25)
    assert np.array_equal(base, shifted) and np.array_equal(base, scaled)


def test_rejects_nonpositive_parameters():
    L = lattice(0.0)
    u = GridFunction(L, [0.0, 1.0], np.zeros((2, L.size)))
    with pytest.raises(ValueError):
        C.find_contact_set(u, np.zeros(2), 0.0, 1.0)
    with pytest.raises(ValueError):
        C.find_contact_set(u, np.zeros(2), 1.0, -1.0)


def test_contacts_match_brute_force():
    L = lattice(0.0, radius=0.5, h=0.1)
    rng = np.random.default_rng(8)
    u = GridFunction(L, np.linspace(0, 1, 5), rng.normal(size=(5, L.size)))
    y, a, b = np.array([0.05, -0.1]), 2.0, 0.5
    hits, _ = C.contact_nodes(u, y, a, b)
    expect = []
    for k in range(1, 5):
        for i in range(L.size):
            o = u.values[k, i] + a / 2 * np.sum((L.points[i] - y) ** 2) - b * u.times[k]
            past = min(u.values[j, m] + a / 2 * np.sum((L.points[m] - y) ** 2) - b * u.times[j] for j in range(1, k + 1) for m in range(L.size))
            if o <= past + 1e-12:
                expect.append((k, i))
    assert sorted(map(tuple, hits)) == expect


@pytest.mark.parametrize("kappa", [0.0, 1.0])
def test_constant_has_unit_jacobian(kappa):
    L = lattice(kappa)
    u = GridFunction(L, [0.0, 0.5, 1.0], np.full((3, L.size), 2.0))
    rec = record_at(u, L.nearest(L.center), 2, 3.0, 1.5)
    assert C.jacobian_tilde(u, rec) == pytest.approx(1.0, abs=1e-12)
    assert C.jacobian_phi(u, rec) == pytest.approx(0.5, abs=1e-12)


def test_flat_quadratic_jacobian_exact():
    L = lattice(0.0)
    Q = np.array([[0.8, -0.3], [-0.3, 0.2]])
    fn = lambda p, t: 0.5 * np.einsum("...i,ij,...j->...", p, Q, p) + 0.1 * t
    u = GridFunction.from_callable(L, [0.0, 0.5, 1.0], fn)
    a, b = 2.0, 1.0
    rec = record_at(u, L.nearest(np.array([0.2, 0.1])), 2, a, b)
    assert C.jacobian_tilde(u, rec) == pytest.approx(np.linalg.det(np.eye(2) + Q / a), rel=1e-10)
    assert C.jacobian_phi(u, rec) == pytest.approx((b - 0.1) / a * np.linalg.det(np.eye(2) + Q / a), rel=1e-9)


def test_touching_paraboloid_collapses():
    L = lattice(0.0)
    y = np.array([0.3, 0.0])
    a = 2.0
    u = GridFunction.from_callable(L, [0.0, 1.0], lambda p, t: -0.5 * a * np.sum((p - y) ** 2, axis=-1))
    rec = record_at(u, L.nearest(np.zeros(2)), 1, a, 1.0)
    assert abs(C.jacobian_tilde(u, rec)) < 1e-10


@settings(max_examples=60, deadline=None)
@given(
    q=st.lists(st.floats(-0.9, 3.0), min_size=2, max_size=2),
    angle=st.floats(0, math.pi),
    c=st.floats(-2.0, 0.9),
    lam=st.floats(0.2, 1.0),
)
def test_parabolic_bound_flat_quadratics(q, angle, c, lam):
    # convex-enough quadratics with b > u_t: the bound is the AM-GM inequality
    L = Lattice(geo.ModelManifold(2, 0.0), np.zeros(2), 0.3, 0.1)
    rot = np.array([[math.cos(angle), -math.sin(angle)], [math.sin(angle), math.cos(angle)]])
    Q = rot @ np.diag(q) @ rot.T
    u = GridFunction.from_callable(L, [0.0, 1.0], lambda p, t: 0.5 * np.einsum("...i,ij,...j->...", p, Q, p) + c * t)
    rec = record_at(u, L.nearest(np.zeros(2)), 1, 1.0, 1.0)
    margin = C.jacobian_bound_check(u, rec, lambda_tilde=1.0)
    assert margin >= -1e-9
    if lam < 1 and c <= 0 and np.all(np.asarray(q) >= 0):
        assert C.jacobian_bound_check(u, rec, lambda_tilde=lam) >= margin - 1e-9


def test_elliptic_bound_is_sharp_for_flat_zero():
    L = lattice(0.0)
    u = GridFunction(L, [0.0, 1.0], np.zeros((2, L.size)))
    rec = record_at(u, L.nearest(L.center), 1, 1.0, 1.0)
    assert C.elliptic_jacobian_bound_check(u, rec) == pytest.approx(0.0, abs=1e-12)


def test_bound_rejects_bad_lambda():
    L = lattice(0.0)
    u = GridFunction(L, [0.0, 1.0], np.zeros((2, L.size)))
    rec = record_at(u, L.nearest(L.center), 1, 1.0, 1.0)
    with pytest.raises(ValueError):
        C.parabolic_jacobian_bound(L.M, rec, 1.5)


def _well_margins(kappa, h):
    L = lattice(kappa, h=h)
    u = GridFunction.from_callable(L, np.linspace(0, 1, 11), samples.well(L.M, L.center, depth=1.0, width=0.5, drift=0.2))
    E = geo.random_points(L.M, np.random.default_rng(0), 20, 0.3)
    jets = u.jets()
    recs = [r for r in C.find_contact_set(u, E, 4.0, 1.0, jets=jets) if r.usable]
    par = min(C.jacobian_bound_check(u, r, jets=jets) for r in recs)
    ell = min(C.elliptic_jacobian_bound_check(u, r, jets=jets) for r in recs)
    return recs, par, ell


@pytest.mark.parametrize("kappa", [0.0, 1.0])
def test_well_contact_records(kappa):
    coarse, p1, e1 = _well_margins(kappa, 0.05)
    fine, p2, e2 = _well_margins(kappa, 0.025)
    assert len(coarse) >= 200 and len(fine) >= 200
    assert min(p1, e1) >= -5 * 0.05 and min(p2, e2) >= -5 * 0.025
    assert max(0.0, -min(p2, e2)) <= max(0.0, -min(p1, e1))
    assert max(r.vertex_error for r in fine) < max(r.vertex_error for r in coarse) < 2 * 0.05
    assert min(r.touch_eig for r in fine) > -1e-6
    json.dumps(fine[0].to_dict())


def _abp_grid(kappa, R=0.1, h=0.05, level=2.0):
    eta = 0.5
    M = geo.ModelManifold(2, kappa)
    L = Lattice(M, M.origin(), 22 * R + 2 * h, h)
    a2 = 4 + eta**2 + eta**4 / 4
    times = np.linspace(-a2 * R**2 - 1e-3, 0.0, 21)
    return GridFunction.from_callable(L, times, samples.well(M, M.origin(), depth=1.5, width=R, level=level, drift=0.5))


@pytest.mark.parametrize("kappa", [0.0, 1.0])
def test_abp_holds_on_wells(kappa):
    u = _abp_grid(kappa)
    rep = C.abp_estimate_check(u, 0.5, 0.1, ell=ELL)
    assert rep.holds and rep.log_margin > 0
    assert 0 < rep.contact_fraction <= 1
    assert rep.diagnostics["inner_inf"] <= 1
    json.dumps(rep.to_dict())


def test_abp_preconditions():
    with pytest.raises(C.PreconditionError, match="inf"):
        C.abp_estimate_check(_abp_grid(0.0, level=3.0), 0.5, 0.1, ell=ELL)
    with pytest.raises(C.PreconditionError, match="shell"):
        C.abp_estimate_check(_abp_grid(0.0, level=-0.1), 0.5, 0.1, ell=ELL)
    u = _abp_grid(0.0)
    with pytest.raises(C.PreconditionError, match="cover"):
        C.abp_estimate_check(u, 0.5, 0.2, ell=ELL)


def test_abp_constants():
    c = C.abp_constants(0.5)
    assert c["A_eta"] == 101.0 and c["M_eta"] == 204.0


def test_decay_constants_chain():
    cst = C.decay_constants(0.5, ELL, 2, 0.0, 240.0)
    assert cst["theta"] == 1.0 and cst["doubling"] == 4.0
    # C3 from its parts
    expect = 2 * math.log(2) + math.log(cst["C1"]) + 3 * np.logaddexp(240.0, math.log(cst["C2"]))
    assert cst["log_C3"] == pytest.approx(expect, rel=1e-12)
    assert cst["C2"] == pytest.approx(48 + 12)
    # eps^{n+1} equals mu^{(n+1)/(n theta + 1)}
    assert 3 * cst["log_eps_eta"] == pytest.approx(cst["log_mu_eta"], rel=1e-12)
    assert cst["log_mu_eta"] < 0 and cst["mu_eta"] >= 0
    worse = C.decay_constants(0.5, ELL, 2, 0.5, 245.0)
    assert worse["log_mu_eta"] < cst["log_mu_eta"] and worse["theta"] > 1


@pytest.fixture(scope="module")
def constant_grid():
    R, eta = 1.0, 0.5
    M = geo.ModelManifold(2, 0.0)
    L = Lattice(M, M.origin(), 22 * R + 0.75, 0.5)
    a2 = 4 + eta**2 + eta**4 / 4
    times = np.linspace(4 - a2 - 0.02, 4.0, 44)
    return GridFunction(L, times, np.ones((times.size, L.size)))


def test_measure_decay_constant_supersolution(constant_grid):
    rep = C.measure_decay_check(constant_grid, 0.5, 1.0, ell=ELL)
    assert rep.passed and rep.fraction_in_small == 1.0
    assert rep.log_fraction >= rep.constants["log_mu_eta"]
    assert rep.abp["holds"]
    json.dumps(rep.to_dict())


def test_measure_decay_rejects_large_source(constant_grid):
    f = constant_grid.with_values(np.full_like(constant_grid.values, 1e-3))
    with pytest.raises(C.PreconditionError, match="source"):
        C.measure_decay_check(constant_grid, 0.5, 1.0, ell=ELL, f=f)
