import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bidisk_hull.construction import ConstructionConfig, run_construction
from bidisk_hull.geometry import GridSpec, PointCloud
from bidisk_hull.polynomials import BiPoly, enumerate_family
from bidisk_hull.verify import (
    CERT_TOL,
    EXP_MINUS_HALF,
    CheckRecord,
    VerificationReport,
    battery,
    check_certificate_c,
    check_max_modulus,
    check_nesting,
    check_projection_thinness,
    check_v_in_m,
    eta_coverage,
    exhaustive_monomial_margin,
    fit_certificate_poly,
    occupancy,
    search_hull_certificate,
    spectrum_gap,
)

from conftest import line_cloud, random_cloud

HALF_SUM = BiPoly.parse("(z+w)/2")
GRID = GridSpec(6, 8)


@pytest.fixture(scope="module")
def worked():
    return run_construction(ConstructionConfig(stages=1, injected_pairs=((HALF_SUM, 0.5),)))[0]


def torus(n: int) -> PointCloud:
    rng = np.random.default_rng(11)
    t = rng.uniform(0, 2 * np.pi, (2, n))
    return PointCloud(np.exp(1j * t[0]), np.exp(1j * t[1]))


def circle_times_zero(n: int = 256) -> PointCloud:
    z = np.exp(2j * np.pi * np.arange(n) / n)
    return PointCloud(z, np.zeros(n, complex))


def test_torus_has_no_certificate_for_origin():
    S = torus(10_000)
    assert search_hull_certificate((0, 0), S, 4, 10_000, seed=0) is None
    # every monomial vanishes at the origin except the constant
    assert exhaustive_monomial_margin((0, 0), S, 4) <= CERT_TOL


def test_circle_times_zero_certificate_margin():
    cert = search_hull_certificate((0, 0.5), circle_times_zero(), 3, 2000, seed=0)
    assert cert is not None
    assert cert.margin == pytest.approx(0.5, abs=1e-9)
    # the optimum is p = w up to a unimodular factor
    w_coef = dict(zip(cert.monomials, cert.coeffs))[(0, 1)]
    assert abs(w_coef) == pytest.approx(1, abs=1e-6)


def test_circle_times_zero_certificate_value_check():
    S = circle_times_zero()
    cert = search_hull_certificate((0, 0.5), S, 2, 500, seed=3)
    lhs = abs(complex(cert(np.array([0j]), np.array([0.5 + 0j]))[0]))
    rhs = float(np.max(np.abs(cert(S.z, S.w))))
    assert lhs - rhs == pytest.approx(cert.margin, abs=1e-12)
    assert sum(abs(c) for c in cert.coeffs) == pytest.approx(1)


def test_degree_zero_never_certifies():
    S = circle_times_zero()
    assert search_hull_certificate((0, 0.9), S, 0, 100) is None


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 3))
def test_member_of_cloud_never_certified(seed, degree):
    rng = np.random.default_rng(seed)
    S = random_cloud(rng, 30)
    k = int(rng.integers(0, len(S)))
    q = (S.z[k], S.w[k])
    assert search_hull_certificate(q, S, degree, 300, seed=seed) is None


def test_fit_certificate_degree_three_cannot_reach_point_zero_five(worked):
    # any cubic h restricted to z = w = e^{it} leaves the modes k >= 4 of
    # e^{-1} e^{2u}; Parseval bounds its sup error below by their l2 norm
    lower = math.exp(-1) * math.sqrt(sum((2**k / math.factorial(k)) ** 2 for k in range(4, 40)))
    cert = fit_certificate_poly(worked.F, 3, GRID)
    u = np.exp(1j * np.linspace(0, 2 * np.pi, 4096, endpoint=False))
    err = np.max(np.abs(cert(u, u) - np.exp(2 * u - 1)))
    assert lower > 0.26
    assert err >= lower
    assert cert.details["fit_max_error"] > 0.05


def test_fit_certificate_degree_six_within_taylor_bound(worked):
    taylor = math.exp(-1) * sum(2**k / math.factorial(k) for k in range(7, 40))
    assert taylor < 0.05
    cert = fit_certificate_poly(worked.F, 6, GRID)
    assert cert.details["fit_max_error"] < 0.05
    assert not cert.details["rank_deficient"]


def test_fit_certificate_degree_zero_has_no_margin(worked):
    cert = fit_certificate_poly(worked.F, 0, GRID, worked.K_cloud, worked.M_witness)
    assert cert.margin <= 0


def test_fit_margin_consistent_with_exact_separation(worked):
    K, M = worked.K_cloud, worked.M_witness
    cert = fit_certificate_poly(worked.F, 6, GRID, K, M)
    exact_k = np.abs(np.exp(-worked.F(K.z, K.w)))
    exact_m = np.abs(np.exp(-worked.F(M.z, M.w)))
    err = max(
        np.max(np.abs(cert(K.z, K.w) - np.exp(-worked.F(K.z, K.w)))),
        np.max(np.abs(cert(M.z, M.w) - np.exp(-worked.F(M.z, M.w)))),
    )
    exact = exact_k.min() - exact_m.max()
    assert abs(cert.margin - exact) <= 2 * err + 1e-12
    assert cert.margin > 0


def test_fit_degree_cap():
    with pytest.raises(ValueError):
        fit_certificate_poly(None, 13, GRID)


def test_certificate_c_worked(worked):
    rep = check_certificate_c(worked, worked.M_witness, worked.K_cloud)
    assert rep.passed
    assert abs(np.exp(-worked.F(0.0, 0.0))) == pytest.approx(math.exp(-1))
    assert abs(np.exp(-worked.F(1.0, 0.0))) == 1
    sup_m = rep.select("exp-separation.on-M")[0].details["sup"]
    assert sup_m <= EXP_MINUS_HALF + 1e-9


def test_v_in_m_worked_and_random(worked):
    rep = check_v_in_m([worked], [line_cloud()])
    assert rep.passed
    assert rep.records[0].margin == pytest.approx(0.5, abs=1e-9)
    bad = check_v_in_m([worked], [random_cloud(np.random.default_rng(0), 200)])
    assert not bad.passed and bad.records[0].witnesses


def test_nesting_single_stage_is_vacuous(worked):
    rep = check_nesting([worked])
    assert rep.passed
    assert not rep.select("nesting.L-in-next-L")


def test_max_modulus_examples():
    V = line_cloud()
    Y = V.subset(V.reach >= 1 - 1e-12)
    const = check_max_modulus(lambda z, w: np.full(len(z), 0.3 + 0j), V, Y)
    assert const.passed and const.margin == pytest.approx(1e-6, abs=1e-15)
    rz = check_max_modulus(BiPoly.parse("z"), V, Y)
    assert rz.passed and rz.details["sup_V"] == pytest.approx(1)
    r = check_max_modulus(BiPoly.parse("1 - z w"), V, Y)
    assert r.passed and r.details["sup_V"] == pytest.approx(2) and r.details["sup_Y"] == pytest.approx(2)


def test_max_modulus_detects_interior_peak():
    V = line_cloud()
    Y = V.subset(V.reach >= 1 - 1e-12)
    # a polynomial peaking at the centre of the disc fails without the
    # maximum principle; here Y is not the boundary of an analytic disc
    V2 = V.concat(PointCloud.from_points([(0.99, 0.99)]))
    rec = check_max_modulus(BiPoly.parse("(z+w)/2"), V2, Y)
    assert not rec.passed and rec.witnesses


def test_battery_composition():
    b = battery(3, 4, 0)
    assert len(b) == 64
    assert b[:32] == enumerate_family(3, 4, 32)
    assert all(p.l1_norm <= 1 + 1e-12 for p in b)
    assert battery(3, 4, 0) == b


def test_spectrum_gap_worked(worked):
    rep = spectrum_gap([worked], line_cloud())
    assert rep.passed
    assert rep.records[0].margin == pytest.approx(0.5, abs=1e-15)
    hit = line_cloud().concat(PointCloud.from_points([(0.5, 0.5)]))
    bad = spectrum_gap([worked], hit)
    assert not bad.passed and bad.records[0].margin == 0


def test_projection_occupancy():
    V = line_cloud(n_r=41, n_a=120)
    rep = check_projection_thinness(V)
    fr = rep.select("projection.proj1")[0].details["fractions"]
    assert fr[0] > 0.8
    ten = random_cloud(np.random.default_rng(4), 10)
    assert occupancy(ten.z, 0.1) <= 10 * 0.01 / math.pi + 1e-15
    rng = np.random.default_rng(9)
    for _ in range(20):
        X = random_cloud(rng, int(rng.integers(1, 300)))
        fr = check_projection_thinness(X).select("projection.proj2")[0].details["fractions"]
        assert all(a >= b for a, b in zip(fr, fr[1:]))


def test_eta_coverage_on_worked_line():
    V = line_cloud()
    hit = eta_coverage(V, [0.5], [-1 + 0j], 0.0)
    assert hit.records[0].details["covered"] == 1
    miss = eta_coverage(V, [0.5], [1 + 0j], 0.05)
    assert miss.records[0].details["covered"] == 0
    origin = PointCloud.from_points([(0, 0)])
    empty = eta_coverage(origin, [0.5], [0j], 0.05)
    assert empty.records[0].details["fraction"] == 0
    assert empty.records[0].details["empty_shells"] == [0.5]
    assert empty.passed  # report-only by default
    assert not eta_coverage(origin, [0.5], [0j], 0.05, threshold=0.5).passed


def test_report_round_trip_and_failure_witnesses(worked):
    rep = check_v_in_m([worked], [random_cloud(np.random.default_rng(1), 50)])
    back = VerificationReport.from_list(rep.to_list())
    assert back.to_list() == rep.to_list()
    for r in rep.failures():
        assert isinstance(r, CheckRecord) and r.witnesses
    assert "variety-in-M" in rep.summary()
