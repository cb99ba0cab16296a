import math
from dataclasses import replace

import numpy as np
import pytest

from bidisk_hull.construction import (
    BudgetError,
    ConstructionConfig,
    ContractError,
    RegionLabel,
    StageFunction,
    StageRangeError,
    classify_many,
    classify_region,
    dedupe,
    eval_stage,
    exponent_holds,
    extract_level_set,
    log_mag_stage,
    newton_polish,
    polish_batch,
    run_construction,
    select_exponent,
)
from bidisk_hull.geometry import C2Point, GridSpec, PointCloud, sample_bidisk
from bidisk_hull.polynomials import BiPoly, g_poly
from bidisk_hull.verify import check_nesting

HALF_SUM = BiPoly.parse("(z+w)/2")
GRID = GridSpec(6, 8)


def worked_f1() -> StageFunction:
    return StageFunction.base(g_poly(HALF_SUM, 0.5))


def two_stage(n_safety: float = 2.0):
    pairs = ((HALF_SUM, 0.5), (BiPoly.parse("z"), -0.5))
    return run_construction(ConstructionConfig(stages=2, injected_pairs=pairs, n_safety=n_safety))


def test_worked_stage_function():
    F = worked_f1()
    t = np.array([0, 0.3, 0.5j, -0.7 + 0.1j])
    assert np.allclose(F(t, -t), 1, atol=1e-15)
    assert eval_stage(F, C2Point(0, 0)) == 1
    assert log_mag_stage(F, C2Point(0, 0)) == 0
    assert eval_stage(F, C2Point(0.4, 0.4)) == pytest.approx(0.2)


def test_log_magnitude_agrees_with_value():
    con = run_construction(ConstructionConfig(stages=4))
    cloud = sample_bidisk(GridSpec(5, 7))
    for s in con:
        vals = s.F(cloud.z, cloud.w)
        lm = s.F.log_magnitude(cloud.z, cloud.w)
        ok = np.isfinite(vals) & (np.abs(vals) > 1e-300)
        assert ok.sum() > 0
        assert np.allclose(lm[ok], np.log(np.abs(vals[ok])), atol=1e-9, rtol=0)
        assert s.F(0.0, 0.0) == pytest.approx(1, abs=1e-9)


def test_log_magnitude_at_level_set_points():
    con = run_construction(ConstructionConfig(stages=3))
    for s in con:
        lm = s.F.log_magnitude(s.K_cloud.z, s.K_cloud.w)
        assert np.all((lm == -np.inf) | (lm <= -20))


def test_stage_value_against_direct_recursion():
    con = run_construction(ConstructionConfig(stages=3))
    rng = np.random.default_rng(3)
    z = 0.6 * (rng.uniform(-1, 1, 40) + 1j * rng.uniform(-1, 1, 40)) / math.sqrt(2)
    w = 0.6 * (rng.uniform(-1, 1, 40) + 1j * rng.uniform(-1, 1, 40)) / math.sqrt(2)
    direct = con[0].G(z, w)
    with np.errstate(all="ignore"):
        for s in con.stages[1:]:
            direct = np.exp(s.N * (direct - 1)) * s.G(z, w)
    ok = np.isfinite(direct) & (np.abs(direct) < 1e100)
    assert ok.sum() > 10
    assert np.allclose(con[-1].F(z[ok], w[ok]), direct[ok], rtol=1e-10, atol=1e-300)


def test_deep_negative_values_underflow_to_zero():
    # Re F_1 hugely negative with a huge phase: the next layer is exactly
    # zero, not unresolved
    g1 = g_poly(BiPoly.parse("z"), 1e-9 + 0j)
    F = StageFunction.base(g1).compose(10_000, g_poly(BiPoly.parse("w"), 0.5))
    z, w = np.array([0.6 + 0.6j]), np.array([0.0j])
    assert abs(10_000 * g1(z, w).imag[0]) > 1e12
    assert F(z, w)[0] == 0
    assert F.log_magnitude(z, w)[0] < -1e12


def test_overflow_is_a_range_error():
    g1 = g_poly(BiPoly.parse("z"), 1e-6 + 0j)  # F_1(-1, 0) ~ 1e6
    F = StageFunction.base(g1).compose(1000, g_poly(BiPoly.parse("w"), 0.5))
    with pytest.raises(StageRangeError):
        eval_stage(F, C2Point(-1.0, 0.0))
    with pytest.raises(StageRangeError):
        log_mag_stage(F.compose(2, g1), C2Point(-1.0, 0.0))


def test_stage_function_record_round_trip():
    con = run_construction(ConstructionConfig(stages=3))
    F = con[-1].F
    back = StageFunction.from_record(F.to_record())
    cloud = sample_bidisk(GridSpec(4, 5))
    assert np.array_equal(F(cloud.z, cloud.w), back(cloud.z, cloud.w), equal_nan=True)
    assert back.depth == 3


def test_newton_affine_one_step():
    pt = newton_polish(HALF_SUM, 0.5, C2Point(0.6, 0.5), tol=1e-10)
    assert pt is not None
    assert abs(pt.z + pt.w - 1) <= 1e-10


def test_newton_seed_on_level_set_unchanged():
    out = polish_batch(HALF_SUM, 0.5, [0.5], [0.5], tol=1e-10)
    assert out.success[0] and out.iterations[0] == 0
    assert out.z[0] == 0.5 and out.w[0] == 0.5


def test_newton_unattainable_target_fails():
    zw = BiPoly.parse("z*w")
    for seed in [(0.5, 0.5), (1, 1), (0.9j, -0.9)]:
        assert newton_polish(zw, 4, C2Point(*seed)) is None


def test_level_set_affine():
    K = extract_level_set(HALF_SUM, 0.5, GRID, 1e-10)
    assert len(K) > 10
    assert np.max(np.abs(K.z + K.w - 1)) <= 2e-10


def test_level_set_near_corner():
    K = extract_level_set(HALF_SUM, 0.999, GRID, 1e-10)
    assert len(K) > 0
    assert np.max(np.abs((K.z + K.w) / 2 - 0.999)) <= 1e-10


def test_level_set_out_of_range_is_empty():
    p = BiPoly.parse("z*w/4")
    assert len(extract_level_set(p, 0.3, GRID, 1e-10)) == 0
    assert len(extract_level_set(p, 0.26j, GRID, 1e-10)) == 0


def test_level_set_requires_open_disk_target():
    with pytest.raises(ContractError):
        extract_level_set(HALF_SUM, 1.0, GRID)


def test_dedupe_net_property():
    rng = np.random.default_rng(0)
    z = rng.uniform(-1, 1, 400) * 0.7
    w = rng.uniform(-1, 1, 400) * 0.7 + 0j
    z = z + 0j
    r = 0.2
    keep = dedupe(z, w, r)
    kz, kw = z[keep], w[keep]
    d = np.maximum(np.abs(kz[:, None] - kz[None, :]), np.abs(kw[:, None] - kw[None, :]))
    np.fill_diagonal(d, np.inf)
    assert d.min() >= r
    # every dropped point is within r of a kept one
    all_d = np.maximum(np.abs(z[:, None] - kz[None, :]), np.abs(w[:, None] - kw[None, :]))
    assert all_d.min(axis=1).max() < r


def test_classify_examples():
    F = worked_f1()
    assert classify_region(F, C2Point(0, 0)) is RegionLabel.M
    assert classify_region(F, C2Point(0.4, 0.4)) is RegionLabel.L
    assert classify_region(F, C2Point(0.25, 0.25)) is RegionLabel.BOTH
    assert classify_region(F, C2Point(0.25, 0)) is RegionLabel.M
    K = extract_level_set(HALF_SUM, 0.5, GRID)
    assert all(lab is RegionLabel.L for lab in classify_many(F, K.z, K.w))


def test_select_exponent_closed_form():
    # one sample with Re F_prev = 1/2 and |G| = 1
    F_prev = worked_f1()
    G = g_poly(BiPoly.parse("w"), -0.5 + 0j)  # G = 2w + 1, equals 1 at w = 0
    pt = PointCloud.from_points([(0.5, 0.0)])
    assert abs(G(0.5, 0.0)) == 1 and F_prev(0.5, 0.0) == 0.5
    assert select_exponent(F_prev, G, pt, safety=1.0) == 3 == math.ceil(math.log(4) / 0.5)
    n2 = select_exponent(F_prev, G, pt, safety=2.0)
    assert n2 == math.ceil(2 * math.log(4) / 0.5)


def test_select_exponent_floor_when_g_small():
    F_prev = worked_f1()
    G = g_poly(BiPoly.parse("w"), 0.45 + 0j)
    pts = PointCloud.from_points([(0.5, 0.5)])
    assert F_prev(0.5, 0.5) == 0 and abs(G(0.5, 0.5)) < 0.25
    assert select_exponent(F_prev, G, pts, safety=1.0) == 1
    assert select_exponent(F_prev, G, PointCloud.from_points([]), safety=1.0) == 1


def test_select_exponent_is_minimal_on_samples():
    F_prev = worked_f1()
    G = g_poly(BiPoly.parse("z"), -0.5 + 0j)
    L = PointCloud.from_points([(0.5, 0.0), (0.8, 0.1), (0.6j + 0.3, 0.5)])
    n = select_exponent(F_prev, G, L, safety=1.0)
    assert exponent_holds(F_prev, G, L, n).all()
    if n > 1:
        assert not exponent_holds(F_prev, G, L, n - 1).all()


def test_select_exponent_contract_and_budget():
    F_prev = worked_f1()
    G = g_poly(BiPoly.parse("z"), -0.5 + 0j)
    with pytest.raises(ContractError):
        select_exponent(F_prev, G, PointCloud.from_points([(0, 0)]))
    with pytest.raises(BudgetError):
        select_exponent(F_prev, G, PointCloud.from_points([(0.26, 0.0)]), max_n=5)
    with pytest.raises(ContractError):
        select_exponent(F_prev, G, PointCloud.from_points([(0.5, 0)]), safety=0.5)


def test_worked_construction_single_stage():
    con = run_construction(ConstructionConfig(stages=1, injected_pairs=((HALF_SUM, 0.5),)))
    s = con[0]
    assert s.injected and s.N is None and s.a == 0.5
    one_minus = BiPoly.parse("1 - z - w")
    cloud = sample_bidisk(GRID)
    assert np.allclose(s.F(cloud.z, cloud.w), one_minus(cloud.z, cloud.w), atol=1e-15)


def test_default_construction_invariants():
    con = run_construction(ConstructionConfig())
    assert len(con) == 5
    for s in con:
        assert abs(s.F(0.0, 0.0) - 1) <= 1e-9
        assert s.margins.max_abs_on_k <= 1e-6
        if s.j > 1:
            assert s.N >= 1
            assert s.margins.max_abs_on_prev_l_and_k < 0.25


def test_construction_is_deterministic():
    a = run_construction(ConstructionConfig(stages=3))
    b = run_construction(ConstructionConfig(stages=3))
    for s, t in zip(a, b):
        assert s.N == t.N and s.p == t.p and s.a == t.a
        assert np.array_equal(s.K_cloud.z, t.K_cloud.z)


def test_two_stage_nesting_margin():
    con = two_stage()
    rep = check_nesting(con.stages)
    assert rep.passed
    step = [r for r in rep if r.name == "nesting.L-in-next-L"]
    assert step and all(r.margin >= 0.25 for r in step)


def test_corrupted_exponent_fails_nesting_with_witness():
    con = two_stage()
    s1, s2 = con.stages
    broken = replace(s2, N=0, F=s1.F.compose(0, s2.G))
    rep = check_nesting([s1, broken])
    bad = [r for r in rep if not r.passed]
    assert bad and all(r.witnesses for r in bad)


def test_empty_level_sets_are_skipped_with_note():
    pairs = ((BiPoly.parse("z*w/4"), 0.3 + 0j), (HALF_SUM, 0.5 + 0j))
    con = run_construction(ConstructionConfig(stages=1, injected_pairs=pairs))
    assert len(con) == 1 and con[0].p == HALF_SUM
    assert any("empty level set" in n for n in con.notes)


def test_invalid_stage_count():
    with pytest.raises(ContractError):
        ConstructionConfig(stages=0)
