import math

import numpy as np
import pytest

from lpstab import body as B
from lpstab import functionals as F
from lpstab import generators as G
from lpstab import harness as H
from lpstab import sphere
from lpstab.errors import NotNormalized, NotSymmetric


def disc(**amps):
    g = sphere.make_grid(2)
    c = np.zeros(g.ncoef)
    c[0] = 1.0
    for key, v in amps.items():
        k = int(key[1:])
        c[2 * k - 1 if key[0] == "c" else 2 * k] = v
    return B.from_coefficients(2, c)


def all_pass(rows):
    bad = [r for r in rows if r.failed]
    assert not bad, [(r.check, r.p, r.margin, r.error) for r in bad[:5]]


# -- constants ---------------------------------------------------------------------------------

def test_constants():
    assert H.c0(2, -1.0) == 2.0
    assert H.c1(2, -1.0) == 2.0
    assert H.c1(3, -2.0) == 3.0
    assert abs(sphere.sphere_area(1) - 2.0) <= 1e-15
    assert abs(H.diameter_constant(2) - (1 + math.sqrt(4 / math.pi))) <= 1e-15
    assert abs(H.diameter_constant(3) - (1 + math.sqrt(2))) <= 1e-15


@pytest.mark.parametrize("n", [2, 3])
@pytest.mark.parametrize("p", [-1.5, -0.5, 2.0])
def test_c0_from_second_moment(n, p):
    g = sphere.make_grid(n)
    v = np.ones(n) / math.sqrt(n)
    m = sphere.integrate(g, (g.nodes @ v) ** 2)
    inv = p * (p - 1) / (2 * sphere.sphere_area(n)) * m
    assert abs(H.c0(n, p) - 1 / inv) <= 1e-10 * abs(H.c0(n, p))


# -- row semantics ------------------------------------------------------------------------------

def test_inequality_tolerance_semantics():
    K = G.ball(1.0)
    r = H.inequality("x", K, 1.0, 1.0 + 1e-6, 1.0)
    assert r.passed and r.tol == 1e-6 and r.margin == 1.0 - (1.0 + 1e-6)
    assert not H.inequality("x", K, 1.0, 1.0 + 2e-6, 1.0).passed
    big = H.inequality("x", K, 1.0, 100.0 + 5e-5, 100.0)
    assert big.passed and abs(big.tol - 1e-4) <= 1e-18
    assert not H.inequality("x", K, 1.0, 1.0 + 1e-12, 1.0, tol_scale=1e-15).passed


def test_identity_and_trend_rows():
    K = G.ball(1.0)
    r = H.identity("id", K, None, 1.0, 1.0 + 1e-11, 1e-10)
    assert r.passed and r.margin == -abs(1.0 - (1.0 + 1e-11))
    assert not H.identity("id", K, None, 1.0, 1.1, 1e-10).passed
    t = H.trend("t", K, 2.0, 0.3, 0.1)
    assert t.check == "trend:t" and t.passed is None and t.is_trend and not t.failed
    e = H.error_report("c", "body", 2, None, ValueError("boom"))
    assert e.failed and e.kind == "error" and e.error == "ValueError: boom"
    assert math.isnan(e.lhs)


def test_aux_is_plain_python():
    K = G.ball(1.0)
    r = H.inequality("x", K, 1.0, 0.0, 1.0, {"v": np.array([1.0, 2.0]), "s": np.float64(3.0)})
    assert r.aux == {"v": [1.0, 2.0], "s": 3.0} and type(r.aux["s"]) is float


# -- individual checks ----------------------------------------------------------------------------

@pytest.mark.parametrize("n", [2, 3])
def test_ball_passes_everything(n):
    rows = H.checks_for_body(G.ball(1.0, n), G.BodySpec("ball", {"r": 1.0}, n), maps=2)
    all_pass(rows)
    assert any(r.check == "p_minus_one:l2" for r in rows)


def test_polarization_identity():
    lhs, rhs = H.polarization_terms(G.ball(1.0))
    assert abs(lhs - 1) <= 1e-14 and abs(rhs - 1) <= 1e-14
    for n in (2, 3):
        K = G.random_convex(11, n=n)
        all_pass(H.check_polarization_identity(K))
        # lhs from a plain numpy recomputation on a refined grid
        g = K.grid.refined(2)
        h = K.support(g.nodes)
        om = sphere.sphere_area(n)
        lhs = (g.weights @ (1 / h)) / math.sqrt((g.weights @ h ** -2.0) * om)
        assert abs(H.polarization_terms(K)[0] - lhs) <= 1e-10


def test_lemma_requires_normalized_body():
    K = B.scale(G.random_convex(0), 1.1)
    with pytest.raises(NotNormalized):
        H.check_lemma_entropy_santalo(K, -1.0)
    with pytest.raises(ValueError):
        H.check_lemma_entropy_santalo(H.normalized(K), 0.5)


def test_lemma_rows():
    K = H.normalized(G.random_convex(4))
    rows = H.check_lemma_entropy_santalo(K, -1.0)
    all_pass(rows)
    assert [r.check for r in rows] == ["entropy_santalo", "entropy_santalo:stationarity"]
    r = rows[0]
    assert r.aux["c0"] == H.c0(2, -1.0) and r.lhs >= 0


def test_symmetric_checks_reject_asymmetric_bodies():
    K = G.random_convex(1)
    with pytest.raises(NotSymmetric):
        H.check_thm33(K)
    with pytest.raises(NotSymmetric):
        H.check_thm12(K, 0.5)


def test_range_errors():
    K = G.ball(1.0)
    with pytest.raises(ValueError):
        H.check_thm32_upper(K, 0.5)
    with pytest.raises(ValueError):
        H.check_thm12(K, 1.0)
    with pytest.raises(ValueError):
        H.check_thm32_negative(K, -2.0)
    with pytest.raises(ValueError):
        H.check_2d_affine(G.ball(1.0, 3))
    with pytest.raises(ValueError):
        H.check_sln_invariance(K, np.diag([2.0, 1.0]))


def test_negative_p_symmetric_disc_resolution_stable():
    K = disc(c2=0.05, c4=0.02)
    rows = H.check_thm32_negative(K, -1.5)
    all_pass(rows)
    c = np.zeros(sphere.make_grid(2, 1024).ncoef)
    c[:K.coefficients.size] = K.coefficients
    rows2 = H.check_thm32_negative(B.from_coefficients(2, c, sphere.make_grid(2, 1024)), -1.5)
    for a, b in zip(rows, rows2):
        assert abs(a.lhs - b.lhs) <= 1e-8 * max(1, abs(a.lhs))
        assert abs(a.rhs - b.rhs) <= 1e-8 * max(1, abs(a.rhs))


def test_p_minus_one_cases():
    rows = H.check_thm33(G.ball(1.0))
    all_pass(rows)
    assert rows[0].aux["eps"] <= 1e-14
    rows = H.check_thm33(G.smoothed_cap_cut(0.1), with_trend=True)
    all_pass(rows)
    trend = [r for r in rows if r.is_trend]
    assert len(trend) == 1 and trend[0].check == "trend:p_minus_one_order" and trend[0].rhs > 0


def test_planar_affine_examples():
    for K in (G.ball(1.0), G.ellipsoid([1.4, 0.8]), disc(c4=0.05)):
        rows = H.check_2d_affine(K)
        all_pass(rows)
        assert rows[0].check == "affine2d:banach_mazur"
    bm = H.check_2d_affine(G.ellipsoid([1.4, 0.8]))[0]
    assert abs(bm.lhs - 1) <= 1e-6 and abs(bm.rhs - 1) <= 1e-6
    rows = H.check_2d_affine(G.random_convex(2))
    assert [r.check for r in rows] == ["affine2d:bracket_min", "affine2d:bracket_max"]


def test_sln_examples():
    K = disc(c3=0.03, s2=0.02)
    rows = H.check_sln_invariance(K, np.eye(2))
    assert all(r.margin == 0 for r in rows)
    c, s = math.cos(0.7), math.sin(0.7)
    rows = H.check_sln_invariance(K, [[c, -s], [s, c]], tol=1e-8)
    all_pass(rows)
    all_pass(H.check_sln_invariance(K, np.diag([1.3, 1 / 1.3])))


def test_random_unimodular(rng):
    for n in (2, 3):
        for _ in range(20):
            ell = H.random_unimodular(n, rng)
            assert abs(np.linalg.det(ell) - 1) <= 1e-12


def test_gradient_checks():
    all_pass(H.check_gradient_stationarity(G.BodySpec("ball", {"r": 1.0}).build(), -1.0))
    rows = H.check_gradient_stationarity(G.BodySpec("ellipsoid", {"A": [1.5, 1.0]}).build(), 2.0)
    all_pass(rows)
    assert rows[0].check == "gradient:volume_product_ellipsoid"
    K, K2 = G.harmonic_bump(0.02, 3), G.harmonic_bump(0.01, 3)
    all_pass(H.check_gradient_scaling(K, K2, -1.0, 3))
    rows = H.check_gradient_scaling(G.harmonic_bump(0.02, 2), G.harmonic_bump(0.01, 2), -1.0, 2)
    assert rows[1].is_trend


def test_width_bound_rows():
    rows = H.check_width_bounds(G.random_convex(9))
    all_pass(rows)
    assert sum(r.check == "widths:product" for r in rows) == 3


def test_santalo_row():
    rows = H.check_santalo(G.random_convex(2, n=3))
    all_pass(rows)
    assert rows[0].rhs == sphere.ball_volume(3) ** 2


# -- suites --------------------------------------------------------------------------------------

def test_run_suite_empty():
    assert H.run_suite([]) == []
    assert H.summarize([])["passed"]


def test_run_suite_records_generator_errors():
    specs = [G.BodySpec("harmonic", {"eps": 0.2, "degree": 3}), G.BodySpec("ball", {"r": 1.0})]
    rows = H.run_suite(specs, maps=1)
    assert rows[0].check == "generator" and rows[0].kind == "error"
    assert "NotStrictlyConvex" in rows[0].error
    assert len(rows) > 1 and all(not r.failed for r in rows[1:])
    s = H.summarize(rows)
    assert s["failed"] == 1 and not s["passed"]


def test_run_suite_deterministic():
    specs = [G.BodySpec("random", {"seed": 3}), G.BodySpec("cap_cut", {"eps": 0.1})]
    a = H.run_suite(specs, maps=2)
    b = H.run_suite(specs, maps=2)
    assert [(r.check, r.body, r.p, r.lhs, r.rhs) for r in a] == [(r.check, r.body, r.p, r.lhs, r.rhs) for r in b]


def test_tight_tolerance_fails():
    rows = H.checks_for_body(G.smoothed_cap_cut(0.1), tol_scale=1e-15, maps=1)
    assert not H.summarize(rows)["passed"]


def test_p_grid_selection():
    sel = H._select([-3.0, -2.0, -1.0, 0.0, 0.5, 1.0, 4.0], 2)
    assert sel["entropy_santalo"] == [-2.0, -1.0]
    assert sel["negative_p"] == [-1.0]
    assert sel["small_p"] == [0.0, 0.5] and sel["width_upper"] == [1.0, 4.0]
    assert 0.0 not in sel["gradient"]


def _doubled(spec, K):
    params = dict(spec.params)
    if spec.family == "cap_cut":
        params["s"] = K.meta["smoothing"]  # same body, not the finer grid's default smoothing
    return G.BodySpec(spec.family, params, spec.n, (2 * K.grid.size,)).build()


def test_resolution_doubling_is_stable(suite2):
    # every reported lhs/rhs moves by at most 1e-5 relative when the grid doubles
    worst = 0.0
    for spec, K in suite2:
        a = H.checks_for_body(K, None, maps=1)
        b = H.checks_for_body(_doubled(spec, K), None, maps=1)
        assert [r.check for r in a] == [r.check for r in b]
        for r, s in zip(a, b):
            for x, y in ((r.lhs, s.lhs), (r.rhs, s.rhs)):
                d = abs(x - y) / max(abs(x), abs(y), 1e-3)
                worst = max(worst, d)
                assert d <= 1e-5, (spec.name, r.check, r.p, x, y)
    assert worst > 0
