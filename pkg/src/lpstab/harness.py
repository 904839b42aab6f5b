"""Executable checks of the stability inequalities and identities.

Every check returns a list of :class:`StabilityReport` rows, one per
sub-statement.  Inequality rows store ``lhs <= rhs`` with
``margin = rhs - lhs`` and pass when ``margin >= -tol`` where
``tol = INEQUALITY_TOL * max(1, |rhs|)``.  Identity rows store
``margin = -|lhs - rhs|`` with an absolute or relative tolerance.  Trend
rows (check name ``trend:...``) carry data only and never fail.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import body as B
from . import functionals as F
from . import sphere
from .errors import LpstabError, NotNormalized, NotSymmetric

INEQUALITY_TOL = 1e-6
IDENTITY_TOL = {2: 1e-10, 3: 1e-8}
SLN_TOL = {2: 1e-5, 3: 1e-4}
STATIONARITY_TOL = 1e-8
GRADIENT_BALL_TOL = 1e-8
GRADIENT_ELLIPSOID_TOL = 1e-6
SCALING_TOL = 0.1


@dataclass
class StabilityReport:
    check: str
    body: str
    n: int
    p: float | None
    lhs: float
    rhs: float
    margin: float
    passed: bool | None
    tol: float
    kind: str = "mandatory"
    params: dict = field(default_factory=dict)
    aux: dict = field(default_factory=dict)
    error: str | None = None

    @property
    def is_trend(self) -> bool:
        return self.kind == "trend"

    @property
    def failed(self) -> bool:
        return self.kind != "trend" and self.passed is not True


def inequality(check, K, p, lhs, rhs, aux=None, tol_scale=None, **params) -> StabilityReport:
    """Row for ``lhs <= rhs``."""
    scale = INEQUALITY_TOL if tol_scale is None else tol_scale
    lhs, rhs = float(lhs), float(rhs)
    tol = scale * max(1.0, abs(rhs))
    margin = rhs - lhs
    return StabilityReport(check, _name(K), K.n, p, lhs, rhs, margin, bool(margin >= -tol), tol,
                           params=params, aux=_clean(aux))


def identity(check, K, p, lhs, rhs, tol, aux=None, **params) -> StabilityReport:
    """Row for ``lhs == rhs`` up to an absolute tolerance."""
    lhs, rhs = float(lhs), float(rhs)
    margin = -abs(lhs - rhs)
    return StabilityReport(check, _name(K), K.n, p, lhs, rhs, margin, bool(margin >= -tol), tol,
                           params=params, aux=_clean(aux))


def trend(check, K, p, lhs, rhs, aux=None, **params) -> StabilityReport:
    lhs, rhs = float(lhs), float(rhs)
    return StabilityReport("trend:" + check, _name(K), K.n, p, lhs, rhs, rhs - lhs, None, 0.0,
                           kind="trend", params=params, aux=_clean(aux))


def error_report(check, name, n, p, exc) -> StabilityReport:
    nan = float("nan")
    return StabilityReport(check, name, n, p, nan, nan, nan, False, 0.0, kind="error",
                           error=f"{type(exc).__name__}: {exc}")


def _name(K):
    return K.label or "body"


def _clean(aux):
    out = {}
    for k, v in (aux or {}).items():
        if isinstance(v, np.ndarray):
            v = [float(x) for x in v]
        elif isinstance(v, (np.floating, np.integer)):
            v = float(v)
        out[k] = v
    return out


# ---------------------------------------------------------------------------
# constants


def c0(n: int, p: float) -> float:
    """Constant of the entropy/Santalo point lemma, 2n / (p (p - 1))."""
    return 2 * n / (p * (p - 1))


def c1(n: int, p: float) -> float:
    return max(n / (p + n), -n / p)


def diameter_constant(n: int) -> float:
    """1 + sqrt(4 omega_{n-1} / omega_n)."""
    return 1 + math.sqrt(4 * sphere.sphere_area(n - 1) / sphere.sphere_area(n))


def normalized(K: B.ConvexBody) -> B.ConvexBody:
    """K~, cached on K."""
    return K.cached("normalized", lambda: K if B.is_normalized(K) else B.normalize_volume(K))


def _require_symmetric(K):
    if not K.is_symmetric:
        raise NotSymmetric(f"{_name(K)} is not origin-symmetric")


def _l2_to_ball(K, h, r):
    d = h - r
    return math.sqrt(sphere.integrate(K.grid, d * d) / sphere.sphere_area(K.n))


# ---------------------------------------------------------------------------
# checks


def check_lemma_entropy_santalo(K, p, tol_scale=None, directions: int = 8, seed: int = 0):
    """|e_p - s|^2 <= c0 (1 - E_p) D^{2-p} on a normalised body, p in [-n, 0).

    A second row checks first-order optimality of e_p along random
    directions.
    """
    n = K.n
    if not -n <= p < 0:
        raise ValueError(f"p = {p} outside [-n, 0)")
    if not B.is_normalized(K):
        raise NotNormalized("the lemma is stated for V(K) = kappa_n")
    W = F.width_E_p(K, p)
    s = B.santalo_point(K).point
    D = B.diameter(K)
    k0 = c0(n, p)
    lhs = float(np.sum((W.point - s) ** 2))
    rhs = k0 * (1 - W.value) * D ** (2 - p)
    aux = {"c0": k0, "D": D, "E_p": W.value, "e_p": W.point, "s": s}
    rows = [inequality("entropy_santalo", K, p, lhs, rhs, aux, tol_scale)]
    _, grad = F.width_objective(K, p, W.point)
    dirs = np.random.default_rng(seed).standard_normal((directions, n))
    dirs /= np.linalg.norm(dirs, axis=1)[:, None]
    worst = float(np.max(np.abs(dirs @ grad)))
    tol = STATIONARITY_TOL if tol_scale is None else min(STATIONARITY_TOL, tol_scale)
    rows.append(identity("entropy_santalo:stationarity", K, p, worst, 0.0, tol,
                         {"gradient_norm": float(np.linalg.norm(grad))}))
    return rows


def check_thm32_upper(K, p, tol_scale=None, with_trend: bool = True):
    """p >= 1: E_p(K~) <= R_p(K) and mean width <= E_p(K~)^{1/p}."""
    if p < 1:
        raise ValueError("this branch needs p >= 1")
    Kt = normalized(K)
    W = F.width_E_p(Kt, p)
    Rp = F.lp_ratio(K, p)
    mean_width = sphere.integrate(Kt.grid, Kt.h) / sphere.sphere_area(K.n)
    rows = [inequality("width_upper:width_vs_ratio", K, p, W.value, Rp, {"E_p": W.value, "R_p": Rp},
                       tol_scale),
            inequality("width_upper:mean_width", K, p, mean_width, W.value ** (1 / p),
                       {"E_p": W.value}, tol_scale)]
    if with_trend:
        A = B.relative_asymmetry_to_ball(Kt).value
        gap = Rp ** (1 / p) - 1
        ratio = A * A / gap if gap > 1e-14 else float("nan")
        rows.append(trend("asymmetry_gap", K, p, A, gap, {"A2_over_gap": ratio}))
    return rows


def check_thm12(K, p, tol_scale=None):
    """Origin-symmetric K, 0 <= p < 1: radius bracket, L2 bound, diameter and chain."""
    if not 0 <= p < 1:
        raise ValueError("this branch needs 0 <= p < 1")
    _require_symmetric(K)
    n = K.n
    Kt = normalized(K)
    om = sphere.sphere_area(n)
    Rp = F.lp_ratio(K, p)
    r = math.sqrt(om / sphere.integrate(Kt.grid, Kt.h ** -2.0))
    D = B.diameter(Kt)
    d2 = _l2_to_ball(Kt, Kt.h, r)
    E = F.width_E_p(Kt, -1).value
    aux = {"r": r, "R_p": Rp, "D": D}
    return [
        inequality("small_p:r_lower", K, p, 1.0, r, aux, tol_scale),
        inequality("small_p:r_upper", K, p, r, Rp, aux, tol_scale),
        inequality("small_p:l2", K, p, d2, D * math.sqrt(max(1 - 1 / Rp, 0.0)), aux, tol_scale),
        inequality("small_p:diameter", K, p, D, 2 * (diameter_constant(n) * Rp) ** 3,
                   dict(aux, constant=diameter_constant(n)), tol_scale),
        inequality("small_p:chain", K, p, 1 / Rp, E, dict(aux, E_minus1=E), tol_scale),
    ]


def check_thm32_negative(K, p, tol_scale=None):
    """-n < p < 0: radius bracket and the L2 bound about e_p(K~)."""
    n = K.n
    if not -n < p < 0:
        raise ValueError(f"p = {p} outside (-n, 0)")
    Kt = normalized(K)
    W = F.width_E_p(Kt, p)
    eps = 1 - W.value
    if eps >= 1:
        raise LpstabError(f"1 - E_p = {eps} >= 1 is impossible for a valid body")
    e = max(eps, 0.0)
    s = B.santalo_point(Kt).point
    nodes = Kt.grid.nodes
    om = sphere.sphere_area(n)
    hs = Kt.h - nodes @ s
    r = (om / sphere.integrate(Kt.grid, hs ** (-float(n)))) ** (1 / n)
    D = B.diameter(Kt)
    k0, k1 = c0(n, p), c1(n, p)
    sym = K.is_symmetric
    d2 = _l2_to_ball(Kt, Kt.h - nodes @ W.point, r)
    if sym:
        bound = math.sqrt(2 * k1 * (D / 2 + r) ** (n + 1) * e)
    else:
        bound = math.sqrt(2 * k1 * (D + r) ** (n + 1) * e) + math.sqrt(k0 * D ** (2 - p) * e)
    aux = {"r": r, "eps": eps, "c0": k0, "c1": k1, "D": D, "e_p": W.point, "s": s,
           "symmetric": sym}
    return [
        inequality("negative_p:r_lower", K, p, 1.0, r, aux, tol_scale),
        inequality("negative_p:r_upper", K, p, r, (1 - e) ** (1 / p), aux, tol_scale),
        inequality("negative_p:l2", K, p, d2, bound, aux, tol_scale),
    ]


def check_thm33(K, tol_scale=None, with_trend: bool = False):
    """Origin-symmetric K, p = -1: radius bracket, L2 bound, cube-root diameter bound."""
    _require_symmetric(K)
    n = K.n
    Kt = normalized(K)
    om = sphere.sphere_area(n)
    E = F.width_E_p(Kt, -1).value
    eps = 1 - E
    e = max(eps, 0.0)
    r = math.sqrt(om / sphere.integrate(Kt.grid, Kt.h ** -2.0))
    D = B.diameter(Kt)
    d2 = _l2_to_ball(Kt, Kt.h, r)
    aux = {"r": r, "eps": eps, "D": D}
    rows = [
        inequality("p_minus_one:r_lower", K, -1.0, 1.0, r, aux, tol_scale),
        inequality("p_minus_one:r_upper", K, -1.0, r, 1 / (1 - e), aux, tol_scale),
        inequality("p_minus_one:l2", K, -1.0, d2, D * math.sqrt(e), aux, tol_scale),
        inequality("p_minus_one:diameter", K, -1.0, (D / 2) ** (1 / 3), diameter_constant(n) / (1 - e),
                   dict(aux, constant=diameter_constant(n)), tol_scale),
    ]
    if with_trend:
        rows.append(trend("p_minus_one_order", K, -1.0, d2, e,
                          {"ratio": d2 / e if e > 0 else float("nan")}))
    return rows


def polarization_terms(K):
    """Both sides of the polarisation identity for h = h_K."""
    g, om = K.grid, sphere.sphere_area(K.n)
    i1 = sphere.integrate(g, 1 / K.h)
    i2 = sphere.integrate(g, K.h ** -2.0)
    lhs = i1 / (math.sqrt(i2) * math.sqrt(om))
    d = 1 / K.h / math.sqrt(i2) - 1 / math.sqrt(om)
    rhs = 1 - 0.5 * sphere.integrate(g, d * d)
    return lhs, rhs


def check_polarization_identity(K, tol=None):
    lhs, rhs = polarization_terms(K)
    return [identity("polarization", K, None, lhs, rhs, IDENTITY_TOL[K.n] if tol is None else tol)]


def check_santalo(K, tol_scale=None):
    """Blaschke-Santalo: V(K) V(K^s) <= kappa_n^2."""
    kn = sphere.ball_volume(K.n)
    s = B.santalo_point(K)
    prod = B.volume(K) * B.polar_volume_at(K, s.point)
    return [inequality("santalo", K, None, prod, kn * kn, {"s": s.point}, tol_scale)]


def check_width_bounds(K, tol_scale=None, p_values=(0.25, 0.5, 0.75)):
    """E_p(K~) >= 1 (p >= 1 and 0 < p < 1), <= 1 (-n < p < 0), E_0 >= 0, E_p E_{-p} >= 1."""
    Kt = normalized(K)
    n = K.n
    rows = []
    for p in (1.0, 2.0):
        rows.append(inequality("widths:p_ge_1", K, p, 1.0, F.width_E_p(Kt, p).value, None, tol_scale))
    rows.append(inequality("widths:p_zero", K, 0.0, 0.0, F.width_E_p(Kt, 0).value, None, tol_scale))
    for p in p_values:
        Ep, Em = F.width_E_p(Kt, p).value, F.width_E_p(Kt, -p).value
        rows.append(inequality("widths:p_negative", K, -p, Em, 1.0, None, tol_scale))
        rows.append(inequality("widths:p_between", K, p, 1.0, Ep, None, tol_scale))
        rows.append(inequality("widths:product", K, p, 1.0, Ep * Em, None, tol_scale))
    rows.append(inequality("widths:p_negative", K, float(-n), F.width_E_p(Kt, -n).value, 1.0,
                           None, tol_scale))
    return rows


def check_2d_affine(K, tol_scale=None):
    """Planar centro-affine checks: d_BM <= sqrt(R_{-2}) (symmetric) and the (V/pi)^2 H bracket."""
    if K.n != 2:
        raise ValueError("the planar affine check needs n = 2")
    rows = []
    Hmin, Hmax = F.centro_affine_extremes(K)
    if K.is_symmetric:
        bm = B.banach_mazur_to_ball(K)
        R = Hmax / Hmin
        rows.append(inequality("affine2d:banach_mazur", K, -2.0, bm.value, math.sqrt(R),
                               {"R_-2": R, "grid_ratio": bm.info.get("grid_ratio")}, tol_scale))
    c = (B.volume(K) / math.pi) ** 2
    aux = {"min": c * Hmin, "max": c * Hmax}
    rows.append(inequality("affine2d:bracket_min", K, None, c * Hmin, 1.0, aux, tol_scale))
    rows.append(inequality("affine2d:bracket_max", K, None, 1.0, c * Hmax, aux, tol_scale))
    return rows


def affine_bracket_trend(K):
    """(V/kappa_n)^2 H bracket around 1, reported without pass/fail."""
    Hmin, Hmax = F.centro_affine_extremes(K)
    c = (B.volume(K) / sphere.ball_volume(K.n)) ** 2
    lo, hi = c * Hmin, c * Hmax
    return [trend("affine_bracket", K, None, lo, hi, {"contains_one": bool(lo <= 1 <= hi)})]


def random_unimodular(n: int, rng, scale: float = 0.15) -> np.ndarray:
    """A random matrix of determinant one near the identity."""
    while True:
        ell = np.eye(n) + scale * rng.standard_normal((n, n))
        d = np.linalg.det(ell)
        if d > 0.2:
            return ell / d ** (1 / n)


def check_sln_invariance(K, ell, tol=None):
    """min H and max H are unchanged by ell in SL(n)."""
    ell = np.asarray(ell, dtype=float)
    if abs(np.linalg.det(ell) - 1) > 1e-10:
        raise ValueError("map must have determinant 1")
    rel = SLN_TOL[K.n] if tol is None else tol
    L = B.linear_image(K, ell)
    a0, a1 = F.centro_affine_extremes(K)
    b0, b1 = F.centro_affine_extremes(L)
    aux = {"truncation_loss": L.meta.get("truncation_loss", 0.0)}
    return [identity("sln:min_H", K, None, b0, a0, rel * abs(a0), aux),
            identity("sln:max_H", K, None, b1, a1, rel * abs(a1), aux)]


def _family(K):
    spec = K.meta.get("spec")
    if spec:
        return spec["family"]
    return (K.label or "").split("(")[0]


def gradient_norms(K, p):
    """L2 norms of both gradient fields, each at its critical-point normalisation.

    The width gradient is taken with e_p moved to the origin, the volume
    product gradient with the Santalo point moved to the origin.
    """
    Kp = B.translate(K, F.width_E_p(K, p).point) if p != 0 else K
    gw = F.field_norm(F.grad_width_field(Kp, p))
    gp = F.field_norm(F.grad_volume_product_field(K, recenter=True))
    return gw, gp


def check_gradient_stationarity(K, p, tol=None):
    """Gradient fields vanish at balls; the volume-product one also at ellipsoids."""
    gw, gp = gradient_norms(K, p)
    fam = _family(K)
    if fam == "ball":
        t = GRADIENT_BALL_TOL if tol is None else tol
        return [identity("gradient:width_ball", K, p, gw, 0.0, t),
                identity("gradient:volume_product_ball", K, p, gp, 0.0, t)]
    if fam == "ellipsoid":
        t = GRADIENT_ELLIPSOID_TOL if tol is None else tol
        return [identity("gradient:volume_product_ellipsoid", K, p, gp, 0.0, t),
                trend("gradient_width", K, p, gw, 0.0)]
    return [trend("gradient_width", K, p, gw, 0.0), trend("gradient_volume_product", K, p, gp, 0.0)]


def check_gradient_scaling(K, K_half, p, degree=None, tol=None):
    """Gradient norms halve when the perturbation amplitude halves.

    Degree-2 perturbations are infinitesimal linear images of the ball, so
    the volume-product gradient vanishes to first order there; that ratio is
    reported as a trend row.
    """
    t = SCALING_TOL if tol is None else tol
    w1, p1 = gradient_norms(K, p)
    w2, p2 = gradient_norms(K_half, p)
    rows = [identity("gradient:width_scaling", K, p, w1 / w2, 2.0, 2 * t, {"norm": w1, "norm_half": w2})]
    r = p1 / p2
    aux = {"norm": p1, "norm_half": p2}
    if degree == 2:
        rows.append(trend("gradient_volume_product_scaling", K, p, r, 2.0, aux))
    else:
        rows.append(identity("gradient:volume_product_scaling", K, p, r, 2.0, 2 * t, aux))
    return rows


# ---------------------------------------------------------------------------
# suites


def default_p_grid(n: int) -> dict:
    return {
        "entropy_santalo": [-n + 0.1, -1.5, -1.0, -0.5, -0.1],
        "negative_p": [-1.5, -1.0, -0.5] if n == 2 else [-2.0, -1.0],
        "width_upper": [1.0, 2.0, 5.0],
        "small_p": [0.0, 0.25, 0.5, 0.75],
        "gradient": [-1.0, 2.0],
    }


def _select(p_grid, n):
    grid = default_p_grid(n)
    if p_grid is None:
        return grid
    ps = [float(p) for p in p_grid]
    return {
        "entropy_santalo": [p for p in ps if -n <= p < 0],
        "negative_p": [p for p in ps if -n < p < 0],
        "width_upper": [p for p in ps if p >= 1],
        "small_p": [p for p in ps if 0 <= p < 1],
        "gradient": [p for p in ps if p != 0 and p >= -n],
    }


def checks_for_body(K, spec=None, p_grid=None, tol_scale=None, maps: int = 10, seed: int = 0):
    """All applicable checks for one body, in a fixed order; errors become rows."""
    n = K.n
    ps = _select(p_grid, n)
    Kt = normalized(K)
    rows = []
    name = _name(K)

    def run(check, p, fn):
        try:
            rows.extend(fn())
        except Exception as exc:  # recorded, never fatal
            rows.append(error_report(check, name, n, p, exc))

    idt = None if tol_scale is None else tol_scale
    run("polarization", None, lambda: check_polarization_identity(K, idt))
    run("santalo", None, lambda: check_santalo(K, tol_scale))
    run("widths", None, lambda: check_width_bounds(K, tol_scale))
    for p in ps["entropy_santalo"]:
        run("entropy_santalo", p, lambda p=p: check_lemma_entropy_santalo(Kt, p, tol_scale))
    for p in ps["negative_p"]:
        run("negative_p", p, lambda p=p: check_thm32_negative(K, p, tol_scale))
    for p in ps["width_upper"]:
        run("width_upper", p, lambda p=p: check_thm32_upper(K, p, tol_scale))
    if K.is_symmetric:
        run("p_minus_one", -1.0, lambda: check_thm33(K, tol_scale, with_trend=_family(K) == "cap_cut"))
        for p in ps["small_p"]:
            run("small_p", p, lambda p=p: check_thm12(K, p, tol_scale))
    if n == 2:
        run("affine2d", -2.0, lambda: check_2d_affine(K, tol_scale))
    else:
        run("affine_bracket", None, lambda: affine_bracket_trend(K))
    rng = np.random.default_rng(seed)
    for _ in range(maps):
        ell = random_unimodular(n, rng)
        run("sln", None, lambda ell=ell: check_sln_invariance(
            K, ell, None if tol_scale is None else tol_scale))
    for p in ps["gradient"]:
        run("gradient", p, lambda p=p: check_gradient_stationarity(
            K, p, None if tol_scale is None else tol_scale))
        if spec is not None and spec.family == "harmonic":
            def scaling(p=p):
                half = type(spec)(spec.family, dict(spec.params, eps=spec.params["eps"] / 2),
                                  spec.n, spec.resolution).build()
                return check_gradient_scaling(K, half, p, spec.params["degree"],
                                              None if tol_scale is None else tol_scale)
            run("gradient_scaling", p, scaling)
    return rows


def run_suite(specs, p_grid=None, tol_scale=None, maps: int = 10, seed: int = 0):
    """Run every applicable check on every spec; never aborts on errors."""
    rows = []
    for spec in specs:
        try:
            K = spec.build()
        except Exception as exc:
            rows.append(error_report("generator", spec.name, spec.n, None, exc))
            continue
        rows.extend(checks_for_body(K, spec, p_grid, tol_scale, maps, seed))
    return rows


def summarize(rows) -> dict:
    mandatory = [r for r in rows if not r.is_trend]
    return {"rows": len(rows), "mandatory": len(mandatory),
            "failed": sum(r.failed for r in mandatory), "trend": len(rows) - len(mandatory),
            "passed": all(not r.failed for r in mandatory)}
