"""L_p functionals of bodies: curvatures, widths, mixed volumes, gradients.

Widths follow the normalisation E_p(K) = (1/omega_n) opt_x int h_{K-x}^p,
with the optimum taken as an infimum for p >= 1 and -n <= p < 0 and as a
supremum for 0 <= p < 1 (log integrand at p = 0).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import sphere
from .body import (ConvexBody, _with, polar_volume_at, santalo_point, volume)
from .errors import NotStrictlyConvex
from .optim import grid_extremum, newton_point, power_objective


@dataclass
class LpCurvatureSummary:
    """Extremes of the L_p-curvature h^{1-p} f.

    ``m`` and ``M`` are refined off the grid; ``grid_min``/``grid_max`` are
    the raw node extremes.
    """
    p: float
    values: np.ndarray
    m: float
    M: float
    grid_min: float
    grid_max: float

    @property
    def ratio(self) -> float:
        return self.M / self.m


@dataclass
class WidthResult:
    p: float
    value: float
    point: np.ndarray
    iterations: int
    converged: bool
    attained: bool = True
    gradient_norm: float = 0.0


def _lp_curvature_at(K: ConvexBody, p: float):
    def fn(u):
        H, _, D2 = K.jets(u)
        tr = np.trace(D2, axis1=1, axis2=2)
        f = tr if K.n == 2 else 0.5 * (tr ** 2 - np.einsum('kij,kji->k', D2, D2))
        return H ** (1 - p) * f
    return fn


def lp_curvature(K: ConvexBody, p: float, refine: bool = True):
    """Node values of h^{1-p} f and their refined extremes.

    Returns ``(field, summary)``.
    """
    p = float(p)

    def build():
        vals = K.h ** (1 - p) * K.f
        g = K.grid
        lo, hi = float(vals.min()), float(vals.max())
        m, M = lo, hi
        if refine:
            fn = _lp_curvature_at(K, p)
            m = min(lo, grid_extremum(fn, vals, g.nodes, g.spacing, maximize=False)[1])
            M = max(hi, grid_extremum(fn, vals, g.nodes, g.spacing, maximize=True)[1])
        return sphere.ScalarField(g, vals), LpCurvatureSummary(p, vals, m, M, lo, hi)
    return K.cached(("lp_curvature", p, refine), build)


def lp_ratio(K: ConvexBody, p: float, refine: bool = True) -> float:
    """R_p(K) = max / min of the L_p-curvature."""
    return lp_curvature(K, p, refine)[1].ratio


def centro_affine_curvature(K: ConvexBody) -> sphere.ScalarField:
    """H = (h^{n+1} f)^{-1} at the nodes."""
    return sphere.ScalarField(K.grid, 1.0 / (K.h ** (K.n + 1) * K.f))


def centro_affine_extremes(K: ConvexBody, refine: bool = True):
    """(min H, max H), refined off the grid."""
    s = lp_curvature(K, -K.n, refine)[1]
    return 1.0 / s.M, 1.0 / s.m


def centro_affine_ratio(K: ConvexBody, refine: bool = True) -> float:
    """R_{-n}(K) = max H / min H."""
    return lp_ratio(K, -K.n, refine)


def lp_sum(K: ConvexBody, L: ConvexBody, a: float, b: float, p: float) -> ConvexBody:
    """Body with support function (a h_K^p + b h_L^p)^{1/p}, p >= 1."""
    if p < 1:
        raise ValueError("L_p sums need p >= 1")
    if not (a > 0 and b > 0):
        raise ValueError("coefficients must be positive")
    K.grid.check_same(L.grid)
    fine = K.grid.refined(2)
    u = fine.nodes
    vals = (a * K.support(u) ** p + b * L.support(u) ** p) ** (1 / p)
    c = sphere.analyze(fine, vals, band=K.grid.band)
    try:
        return _with(K, c, label=f"lp_sum({K.label},{L.label})")
    except NotStrictlyConvex as exc:
        raise NotStrictlyConvex(f"L_p sum lost convexity after truncation: {exc}") from exc


def lp_mixed_volume(K: ConvexBody, L: ConvexBody, p: float) -> float:
    """V_p(K, L) = (1/n) int h_L^p h_K^{1-p} f_K."""
    K.grid.check_same(L.grid)
    return sphere.integrate(K.grid, L.h ** p * K.h ** (1 - p) * K.f) / K.n


def minkowski_deficit(K: ConvexBody, L: ConvexBody, p: float) -> float:
    """V_p(K, L) - V(K)^{1-p/n} V(L)^{p/n}; nonnegative for p >= 1."""
    if p < 1:
        raise ValueError("the L_p Minkowski inequality needs p >= 1")
    n = K.n
    return lp_mixed_volume(K, L, p) - volume(K) ** (1 - p / n) * volume(L) ** (p / n)


def steiner_point(K: ConvexBody) -> np.ndarray:
    g = K.grid
    return (g.weights * K.h) @ g.nodes / sphere.ball_volume(K.n)


def width_E_p(K: ConvexBody, p: float) -> WidthResult:
    """L_p-width E_p(K) and its optimising point e_p.

    For p = 1 the objective does not depend on x; the Steiner point is
    returned as the canonical optimiser.
    """
    p = float(p)
    n = K.n
    if not p >= -n:
        raise ValueError(f"p = {p} is below -n = {-n}")

    def build():
        g = K.grid
        om = sphere.sphere_area(n)
        if p == 1:
            return WidthResult(p, sphere.integrate(g, K.h) / om, steiner_point(K), 0, True)
        w = g.weights / om
        maximize = 0 <= p < 1
        res = newton_point(K.h, g.nodes, w, p, maximize)
        return WidthResult(p, float(res.value), res.point, res.iterations,
                           bool(res.converged and res.gradient_norm <= 1e-9), True,
                           float(res.gradient_norm))
    return K.cached(("width", p), build)


def width_objective(K: ConvexBody, p: float, x):
    """(1/omega_n) int h_{K-x}^p (log for p = 0) with its gradient in x."""
    g = K.grid
    val, grad, _ = power_objective(K.h, g.nodes, g.weights / sphere.sphere_area(K.n),
                                   p, np.asarray(x, dtype=float))
    return val, grad


def field_norm(field) -> float:
    """L^2(sigma) norm of a field."""
    v = field.values if isinstance(field, sphere.ScalarField) else np.asarray(field)
    grid = field.grid
    return math.sqrt(sphere.integrate(grid, v * v))


def grad_width_field(K: ConvexBody, p: float) -> sphere.ScalarField:
    """L^2 gradient of h -> (int h^p)^{n/p} / V at h_K."""
    if p == 0:
        raise ValueError("the width gradient is defined for p != 0")
    n, h = K.n, K.h
    ip = sphere.integrate(K.grid, h ** p)
    V = volume(K)
    vals = h ** (p - 1) * ip ** (n / p) / V ** 2 * (n * V / ip - h ** (1 - p) * K.f)
    return sphere.ScalarField(K.grid, vals)


def grad_volume_product_field(K: ConvexBody, recenter: bool = False) -> sphere.ScalarField:
    """L^2 gradient of h -> 1/(V(K) V(K*)) at h_K.

    With ``recenter`` the body is first translated so that its Santalo
    point is the origin.
    """
    if recenter:
        from .body import translate
        K = translate(K, santalo_point(K).point)
    V = volume(K)
    Vs = polar_volume_at(K)
    P = 1.0 / (V * Vs)
    vals = P ** 2 * (V / K.h ** (K.n + 1) - Vs * K.f)
    return sphere.ScalarField(K.grid, vals)


def santalo_deficit(K: ConvexBody) -> float:
    """kappa_n^2 - V(K) V(K^s) (nonnegative by Blaschke-Santalo)."""
    s = santalo_point(K).point
    return sphere.ball_volume(K.n) ** 2 - volume(K) * polar_volume_at(K, s)
