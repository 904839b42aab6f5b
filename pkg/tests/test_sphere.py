import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import special

from lpstab import sphere
from lpstab.errors import GridMismatch, ResolutionError

G2 = sphere.make_grid(2)
G3 = sphere.make_grid(3)
SMALL3 = sphere.make_grid(3, 16, 32)


def _unit(v):
    v = np.asarray(v, dtype=float)
    return v / np.linalg.norm(v)


def real_sh_oracle(l, m, u):
    """Real orthonormal harmonics from scipy's complex ones (Condon-Shortley phase removed)."""
    theta = np.arccos(np.clip(u[:, 2], -1, 1))
    phi = np.arctan2(u[:, 1], u[:, 0])
    Y = special.sph_harm_y(l, abs(m), theta, phi) * (-1) ** abs(m)
    if m == 0:
        return Y.real
    return math.sqrt(2) * (Y.real if m > 0 else Y.imag)


def fourier_oracle(c, t):
    """Direct summation of a0 + sum a_k cos kt + b_k sin kt."""
    out = np.full_like(t, c[0])
    for k in range(1, (len(c) - 1) // 2 + 1):
        out += c[2 * k - 1] * np.cos(k * t) + c[2 * k] * np.sin(k * t)
    return out


# -- grids -------------------------------------------------------------------

def test_circle_grid_weights_uniform():
    g = sphere.make_grid(2, 256)
    assert np.allclose(g.weights, 2 * np.pi / 256, rtol=0, atol=1e-15)
    assert abs(g.weights.sum() - 2 * np.pi) <= 1e-10


@pytest.mark.parametrize("res", [(32, 64), (48, 96), (17, 40)])
def test_sphere_grid_invariants(res):
    g = sphere.make_grid(3, *res)
    assert abs(g.weights.sum() - 4 * np.pi) <= 1e-10
    assert np.all(g.weights > 0)
    assert np.max(np.abs(np.linalg.norm(g.nodes, axis=1) - 1)) <= 1e-14
    assert np.allclose(g.nodes[g.antipode], -g.nodes, atol=1e-14)


def test_circle_grid_antipodal():
    assert np.allclose(G2.nodes[G2.antipode], -G2.nodes, atol=1e-14)


@pytest.mark.parametrize("n,res", [(3, (7,)), (3, (8, 15)), (3, (8, 14)), (2, (15,)),
                                   (2, (8,)), (4, (32,)), (1, (32,))])
def test_make_grid_rejects(n, res):
    with pytest.raises(ResolutionError):
        sphere.make_grid(n, *res)


def test_constants():
    assert sphere.ball_volume(2) == pytest.approx(math.pi, abs=1e-15)
    assert sphere.ball_volume(3) == pytest.approx(4 * math.pi / 3, abs=1e-15)
    assert sphere.sphere_area(1) == pytest.approx(2.0)
    assert sphere.sphere_area(2) == pytest.approx(2 * math.pi)
    assert sphere.sphere_area(3) == pytest.approx(4 * math.pi)
    # omega_n = n kappa_n for higher n as well
    assert sphere.sphere_area(5) == pytest.approx(8 * math.pi ** 2 / 3)


# -- integration ----------------------------------------------------------------

@pytest.mark.parametrize("g,tol", [(G2, 1e-10), (G3, 1e-10)])
def test_integrate_constant(g, tol):
    assert abs(sphere.integrate(g, np.ones(g.size)) - sphere.sphere_area(g.n)) <= tol


@given(st.lists(st.floats(-1, 1), min_size=3, max_size=3).filter(lambda v: np.linalg.norm(v) > 0.1))
@settings(max_examples=30, deadline=None)
def test_second_moment(v):
    for g in (G2, G3):
        w = _unit(v[:g.n]) if np.linalg.norm(v[:g.n]) > 1e-3 else np.eye(g.n)[0]
        val = sphere.integrate(g, (g.nodes @ w) ** 2)
        assert abs(val - sphere.sphere_area(g.n) / g.n) <= 1e-10
        assert abs(sphere.integrate(g, g.nodes @ w)) <= 1e-12


def test_integrate_grid_mismatch():
    f = sphere.ScalarField(SMALL3, np.ones(SMALL3.size))
    with pytest.raises(GridMismatch):
        sphere.integrate(G3, f)
    with pytest.raises(GridMismatch):
        sphere.integrate(G2, np.ones(10))


@given(st.integers(0, 2 ** 32 - 1), st.floats(-3, 3), st.floats(-3, 3))
@settings(max_examples=25, deadline=None)
def test_integrate_linear(seed, a, b):
    rng = np.random.default_rng(seed)
    for g in (G2, SMALL3):
        f, h = rng.standard_normal(g.size), rng.standard_normal(g.size)
        lhs = sphere.integrate(g, a * f + b * h)
        rhs = a * sphere.integrate(g, f) + b * sphere.integrate(g, h)
        scale = max(np.abs(f).max(), np.abs(h).max()) * (abs(a) + abs(b)) * sphere.sphere_area(g.n)
        assert abs(lhs - rhs) <= 1e-12 * max(scale, 1.0)


@given(st.integers(0, 2 ** 32 - 1))
@settings(max_examples=25, deadline=None)
def test_antipodal_reflection_preserves_integral(seed):
    rng = np.random.default_rng(seed)
    for g in (G2, G3):
        f = rng.standard_normal(g.size)
        assert abs(sphere.integrate(g, f[g.antipode]) - sphere.integrate(g, f)) <= 1e-12 * g.size


def test_quadrature_exact_for_harmonics():
    # every basis harmonic of degree >= 1 integrates to 0, the constant to its area
    for g in (G2, SMALL3):
        worst = 0.0
        for i in range(1, g.ncoef):
            c = np.zeros(g.ncoef)
            c[i] = 1.0
            worst = max(worst, abs(sphere.integrate(g, sphere.synthesize(c, g))))
        assert worst <= 1e-10


def test_real_harmonics_orthonormal():
    g = SMALL3
    Y = np.array([sphere.synthesize(np.eye(g.ncoef)[i], g) for i in range(g.ncoef)])
    gram = (Y * g.weights) @ Y.T
    assert np.max(np.abs(gram - np.eye(g.ncoef))) <= 1e-10


# -- transforms -------------------------------------------------------------------

def test_constant_evaluates_to_one():
    for n, c in ((2, [1.0]), (3, [math.sqrt(4 * math.pi)])):
        u = _unit(np.arange(1, n + 1))
        assert sphere.evaluate_at(c, u) == pytest.approx(1.0, abs=1e-14)


def test_cos3_at_pi_over_6():
    c = np.zeros(7)
    c[5] = 1.0
    u = np.array([math.cos(math.pi / 6), math.sin(math.pi / 6)])
    assert abs(sphere.evaluate_at(c, u)) <= 1e-12


def test_circle_synthesis_matches_direct_sum(rng):
    c = rng.standard_normal(2 * 40 + 1)
    assert np.allclose(sphere.synthesize(c, G2), fourier_oracle(c, G2.theta), atol=1e-12)


@pytest.mark.parametrize("l,m", [(0, 0), (1, -1), (1, 0), (1, 1), (2, 2), (3, -2), (5, 4), (7, -7), (12, 5)])
def test_sphere_synthesis_matches_scipy(l, m):
    c = np.zeros(G3.ncoef)
    c[sphere.lm_index(l, m)] = 1.0
    assert np.allclose(sphere.synthesize(c, G3), real_sh_oracle(l, m, G3.nodes), atol=1e-12)


@given(st.integers(0, 2 ** 32 - 1), st.integers(1, 40))
@settings(max_examples=20, deadline=None)
def test_round_trip_band_limited(seed, band):
    rng = np.random.default_rng(seed)
    for g in (G2, G3):
        b = min(band, g.band)
        c = np.zeros(g.ncoef)
        c[:sphere.coefficient_count(g.n, b)] = rng.standard_normal(sphere.coefficient_count(g.n, b))
        v = sphere.synthesize(c, g)
        assert np.max(np.abs(sphere.analyze(g, v) - c)) <= 1e-10
        assert np.max(np.abs(sphere.synthesize(sphere.analyze(g, v), g) - v)) <= 1e-10


def test_evaluate_at_matches_nodes(rng):
    for g in (G2, G3):
        c = np.zeros(g.ncoef)
        k = sphere.coefficient_count(g.n, 10)
        c[:k] = rng.standard_normal(k)
        idx = rng.choice(g.size, 25, replace=False)
        vals = sphere.evaluate_at(c, g.nodes[idx])
        assert np.allclose(vals, sphere.synthesize(c, g)[idx], atol=1e-12)


def test_evaluate_at_off_grid_matches_oracles(rng):
    u = rng.standard_normal((50, 3))
    u /= np.linalg.norm(u, axis=1)[:, None]
    c = np.zeros(sphere.coefficient_count(3, 9))
    expected = np.zeros(len(u))
    for l in range(10):
        for m in range(-l, l + 1):
            a = rng.standard_normal()
            c[sphere.lm_index(l, m)] = a
            expected += a * real_sh_oracle(l, m, u)
    assert np.allclose(sphere.evaluate_at(c, u), expected, atol=1e-12)
    t = rng.uniform(0, 2 * np.pi, 50)
    c2 = rng.standard_normal(21)
    u2 = np.column_stack([np.cos(t), np.sin(t)])
    assert np.allclose(sphere.evaluate_at(c2, u2), fourier_oracle(c2, t), atol=1e-12)


def test_evaluate_at_errors():
    with pytest.raises(ValueError):
        sphere.evaluate_at([1.0], [1.0, 0.1])
    with pytest.raises(ResolutionError):
        sphere.pad_coefficients(SMALL3, np.zeros(sphere.coefficient_count(3, 20)))
    with pytest.raises(ResolutionError):
        sphere.analyze(SMALL3, np.ones(SMALL3.size), band=40)


# -- derivatives ---------------------------------------------------------------------

def test_hessian_of_constant_vanishes():
    for g, c0 in ((G2, 1.0), (G3, math.sqrt(4 * math.pi))):
        c = np.zeros(g.ncoef)
        c[0] = c0
        Hs = sphere.covariant_hessian(sphere.field_from_coefficients(g, c))
        assert np.max(np.abs(Hs.entries)) <= 1e-9


def test_hessian_of_linear_function_in_kernel(rng):
    from lpstab.body import linear_coefficients
    for g in (G2, G3):
        x = rng.standard_normal(g.n)
        f = sphere.field_from_coefficients(g, linear_coefficients(g.n, x))
        assert np.allclose(f.values, g.nodes @ x, atol=1e-12)
        W = sphere.covariant_hessian(f).shifted(f.values)
        assert np.max(np.abs(W)) <= 1e-9


def test_ellipse_hessian_matches_finite_differences():
    a, b = 1.5, 1.0
    h = lambda t: np.sqrt((a * np.cos(t)) ** 2 + (b * np.sin(t)) ** 2)
    fine = sphere.make_grid(2, 2 * G2.size)
    c = sphere.analyze(fine, h(fine.theta), band=G2.band)
    f = sphere.field_from_coefficients(G2, c)
    W = sphere.covariant_hessian(f).shifted(f.values)[:, 0, 0]
    dt = 2 * np.pi / (10 * G2.size)
    t = G2.theta
    d2 = lambda d: (h(t + d) - 2 * h(t) + h(t - d)) / d ** 2
    # Richardson step removes the O(dt^2) truncation of the oracle
    fd = (4 * d2(dt / 2) - d2(dt)) / 3 + h(t)
    assert np.max(np.abs(W - fd)) <= 1e-7


def _ellipsoid_D2H(A, u):
    """Analytic Hessian of H(x) = |A x|."""
    A2 = A @ A
    r = np.linalg.norm(u @ A, axis=1)
    v = u @ A2
    return A2[None] / r[:, None, None] - np.einsum('ki,kj->kij', v, v) / r[:, None, None] ** 3


def test_sphere_hessian_matches_analytic_ellipsoid():
    A = np.array([[1.2, 0.1, 0.0], [0.1, 1.0, -0.05], [0.0, -0.05, 0.9]])
    g = sphere.make_grid(3, 64, 128)
    fine = g.refined(2)
    c = sphere.analyze(fine, np.linalg.norm(fine.nodes @ A, axis=1), band=g.band)
    f = sphere.field_from_coefficients(g, c)
    W = sphere.covariant_hessian(f).shifted(f.values)
    e_t, e_p = sphere.frame_3d(g)
    T = np.stack([e_t, e_p], axis=2)
    ref = np.einsum('kia,kij,kjb->kab', T, _ellipsoid_D2H(A, g.nodes), T)
    assert np.max(np.abs(W - ref)) <= 1e-7
    assert np.allclose(W, np.transpose(W, (0, 2, 1)), atol=0)


def test_jets_match_finite_differences(rng):
    c = np.zeros(sphere.coefficient_count(3, 8))
    c[0] = math.sqrt(4 * math.pi)
    c[1:] = 0.05 * rng.standard_normal(c.size - 1)
    u = rng.standard_normal((10, 3))
    u /= np.linalg.norm(u, axis=1)[:, None]
    Hv, DH, D2H = sphere.evaluate_jets(c, u, 3)

    def Hx(x):
        r = np.linalg.norm(x, axis=1)
        return r * sphere.evaluate_at(c, x / r[:, None])

    d = 1e-5
    for i in range(3):
        e = np.zeros(3)
        e[i] = d
        g_fd = (Hx(u + e) - Hx(u - e)) / (2 * d)
        assert np.allclose(DH[:, i], g_fd, atol=1e-8)
        d2 = 1e-4
        e2 = np.zeros(3)
        e2[i] = d2
        _, DHp, _ = sphere.evaluate_jets(c, (u + e2) / np.linalg.norm(u + e2, axis=1)[:, None], 3)
        _, DHm, _ = sphere.evaluate_jets(c, (u - e2) / np.linalg.norm(u - e2, axis=1)[:, None], 3)
        # DH is 0-homogeneous, so evaluating at the normalised point is exact
        assert np.allclose(D2H[:, :, i], (DHp - DHm) / (2 * d2), atol=1e-6)
    assert np.allclose(Hv, sphere.evaluate_at(c, u), atol=1e-13)


def test_covariant_hessian_needs_coefficients():
    with pytest.raises(ResolutionError):
        sphere.covariant_hessian(sphere.ScalarField(G2, np.ones(G2.size)))


def test_scalar_field_length_checked():
    with pytest.raises(GridMismatch):
        sphere.ScalarField(G2, np.ones(7))
