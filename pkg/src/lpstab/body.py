"""Smooth strictly convex bodies given by spectral support functions.

A :class:`ConvexBody` is immutable once validated.  Derived quantities
(volume, diameter, Santalo point, ...) are computed lazily and cached on the
instance.  ``translate(K, x)`` always means ``K - x``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from . import sphere
from .errors import (ConvergenceError, NotPositive, NotStrictlyConvex,
                     SingularMap, TranslationLeavesOrigin)
from .optim import grid_extremum, newton_point, tangent_basis

CONVEXITY_TOL = 1e-8
# sandwich ratios this close to 1 are reported as exactly 1
EXACT_RATIO = 1e-13


class ConvexBody:
    """Body in F_0^n, stored as support-function coefficients on a grid."""

    def __init__(self, grid: sphere.SphereGrid, coefficients, label: str | None = None):
        self.grid = grid
        self.n = grid.n
        c = sphere.pad_coefficients(grid, coefficients).copy()
        c.setflags(write=False)
        self.coefficients = c
        self.label = label
        self.meta: dict = {}
        self._cache: dict = {}
        self.field = sphere.ScalarField(grid, sphere.synthesize(c, grid), c)
        self.h = self.field.values
        self.h.setflags(write=False)
        hmin = float(self.h.min())
        if not hmin > 0:
            raise NotPositive(f"min h = {hmin:.3g} <= 0: origin is not interior")
        W = sphere.covariant_hessian(self.field).shifted(self.h)
        self.W = W
        eig = np.linalg.eigvalsh(W) if self.n == 3 else W[:, :, 0]
        self.min_eig = float(eig.min())
        if not self.min_eig > CONVEXITY_TOL:
            raise NotStrictlyConvex(
                f"min eigenvalue of nabla^2 h + h g is {self.min_eig:.3g} (<= {CONVEXITY_TOL})")
        self.f = np.linalg.det(W) if self.n == 3 else W[:, 0, 0].copy()
        self.f.setflags(write=False)

    def __repr__(self):
        return f"ConvexBody(n={self.n}, label={self.label!r}, band={self.grid.band})"

    # -- point evaluation ---------------------------------------------------
    def support(self, u) -> np.ndarray:
        return sphere.evaluate_jets(self.coefficients, np.atleast_2d(u), self.n, order=0)[0]

    def jets(self, u, order=2):
        return sphere.evaluate_jets(self.coefficients, np.atleast_2d(u), self.n, order=order)

    def curvature_at(self, u) -> np.ndarray:
        """Curvature function f at arbitrary unit vectors."""
        _, _, D2 = self.jets(u)
        if self.n == 2:
            return np.trace(D2, axis1=1, axis2=2)
        tr = np.trace(D2, axis1=1, axis2=2)
        return 0.5 * (tr ** 2 - np.einsum('kij,kji->k', D2, D2))

    @property
    def is_symmetric(self) -> bool:
        return bool(np.all(np.abs(self.coefficients[sphere.degrees(self.n, self.coefficients.size) % 2 == 1])
                           <= 1e-12))

    def cached(self, key, fn):
        if key not in self._cache:
            self._cache[key] = fn()
        return self._cache[key]


def from_coefficients(n: int, coefficients, grid: sphere.SphereGrid | None = None,
                      label: str | None = None) -> ConvexBody:
    grid = grid or sphere.make_grid(n)
    if grid.n != n:
        raise ValueError(f"grid dimension {grid.n} != {n}")
    return ConvexBody(grid, coefficients, label)


def from_function(grid: sphere.SphereGrid, fn, label=None, refine: int = 2) -> ConvexBody:
    """Body whose support function is ``fn(directions)``, projected on a finer grid."""
    fine = grid.refined(refine)
    c = sphere.analyze(fine, fn(fine.nodes), band=grid.band)
    return ConvexBody(grid, c, label)


def curvature_function(K: ConvexBody) -> sphere.ScalarField:
    return sphere.ScalarField(K.grid, K.f)


def linear_coefficients(n: int, x) -> np.ndarray:
    """Coefficients of u -> x.u in the layout of ``sphere``."""
    x = np.asarray(x, dtype=float)
    if n == 2:
        return np.array([0.0, x[0], x[1]])
    s = math.sqrt(4 * math.pi / 3)
    c = np.zeros(4)
    c[1], c[2], c[3] = s * x[1], s * x[2], s * x[0]
    return c


def _with(K: ConvexBody, coefficients, label=None) -> ConvexBody:
    out = ConvexBody(K.grid, coefficients, label if label is not None else K.label)
    out.meta = dict(K.meta)
    return out


def translate(K: ConvexBody, x) -> ConvexBody:
    """K - x; requires x in the interior of K."""
    x = np.asarray(x, dtype=float)
    if np.min(K.h - K.grid.nodes @ x) <= 0:
        raise TranslationLeavesOrigin(f"point {x} is not interior to the body")
    c = np.array(K.coefficients)
    lin = linear_coefficients(K.n, x)
    c[:lin.size] -= lin
    return _with(K, c)


def scale(K: ConvexBody, lam: float) -> ConvexBody:
    if not lam > 0:
        raise ValueError("scale factor must be positive")
    return _with(K, lam * np.asarray(K.coefficients))


def volume(K: ConvexBody) -> float:
    return K.cached("volume", lambda: sphere.integrate(K.grid, K.h * K.f) / K.n)


def normalize_volume(K: ConvexBody) -> ConvexBody:
    """The dilate of K with the volume of the unit ball."""
    lam = (sphere.ball_volume(K.n) / volume(K)) ** (1 / K.n)
    return scale(K, lam)


def is_normalized(K: ConvexBody, rtol: float = 1e-9) -> bool:
    kn = sphere.ball_volume(K.n)
    return abs(volume(K) - kn) <= rtol * kn


def boundary_point(K: ConvexBody, u) -> np.ndarray:
    """The boundary point with outer normal u (gradient of h plus h u)."""
    u = np.asarray(u, dtype=float)
    pts = K.jets(u, order=1)[1]
    return pts[0] if u.ndim == 1 else pts


def boundary_points_on_grid(K: ConvexBody) -> np.ndarray:
    def build():
        return K.h[:, None] * K.grid.nodes + sphere.gradient_on_grid(K.field)
    return K.cached("boundary", build)


def diameter(K: ConvexBody) -> float:
    def build():
        g = K.grid
        width = K.h + K.h[g.antipode]

        def fn(v):
            return K.support(v) + K.support(-v)
        _, val = grid_extremum(fn, width, g.nodes, g.spacing, maximize=True)
        return float(val)
    return K.cached("diameter", build)


def linear_image(K: ConvexBody, ell) -> ConvexBody:
    """The body ell K, re-projected from a doubled grid."""
    ell = np.asarray(ell, dtype=float)
    if ell.shape != (K.n, K.n):
        raise ValueError(f"expected a {K.n}x{K.n} matrix")
    if abs(np.linalg.det(ell)) < 1e-12 * max(1.0, np.abs(ell).max() ** K.n):
        raise SingularMap("linear map is singular")
    if np.array_equal(ell, np.eye(K.n)):
        out = _with(K, K.coefficients.copy())
        out.meta["truncation_loss"] = 0.0
        return out
    fine = K.grid.refined(2)
    w = fine.nodes @ ell  # rows are ell^T u
    r = np.linalg.norm(w, axis=1)
    vals = r * K.support(w / r[:, None])
    full = sphere.analyze(fine, vals)
    keep = K.grid.ncoef
    loss = float(np.linalg.norm(full[keep:]) / np.linalg.norm(full))
    try:
        out = _with(K, full[:keep])
    except NotStrictlyConvex as exc:
        raise NotStrictlyConvex(f"{exc}; truncation loss {loss:.3g}") from exc
    out.meta["truncation_loss"] = loss
    return out


# ---------------------------------------------------------------------------
# radial function


def radial_function(K: ConvexBody, u, x=None, tol: float = 1e-13, max_iter: int = 60):
    """rho_{K-x}(u) for one or many unit directions."""
    u = np.asarray(u, dtype=float)
    U = np.atleast_2d(u)
    x = np.zeros(K.n) if x is None else np.asarray(x, dtype=float)
    if np.min(K.h - K.grid.nodes @ x) <= 0:
        raise TranslationLeavesOrigin(f"base point {x} is not interior")
    rho = _radial_newton(K, U, x, tol, max_iter)
    return float(rho[0]) if u.ndim == 1 else rho


def _radial_newton(K, U, x, tol, max_iter):
    # solve grad H(v) - x parallel to u for the normal v
    X = boundary_points_on_grid(K) - x
    dirs = X / np.linalg.norm(X, axis=1)[:, None]
    idx = np.argmax(U @ dirs.T, axis=1)
    v = K.grid.nodes[idx].copy()
    Q = tangent_basis(U)
    active = np.ones(len(U), dtype=bool)
    for _ in range(max_iter):
        if not active.any():
            break
        a = np.nonzero(active)[0]
        _, G, D2 = K.jets(v[a])
        Y = G - x
        r = np.einsum('kia,ki->ka', Q[a], Y)
        scale_ = np.linalg.norm(Y, axis=1)
        done = np.linalg.norm(r, axis=1) <= tol * scale_
        T = tangent_basis(v[a])
        J = np.einsum('kia,kij,kjb->kab', Q[a], D2, T)
        step = -np.linalg.solve(J, r[:, :, None])[:, :, 0]
        sn = np.linalg.norm(step, axis=1)
        cap = np.minimum(1.0, 0.25 / np.maximum(sn, 1e-300))
        vn = v[a] + np.einsum('kib,kb->ki', T, step * cap[:, None])
        vn /= np.linalg.norm(vn, axis=1)[:, None]
        v[a[~done]] = vn[~done]
        active[a[done]] = False
    _, G, _ = K.jets(v, order=1)
    Y = G - x
    rho = np.einsum('ki,ki->k', Y, U)
    resid = np.linalg.norm(Y - rho[:, None] * U, axis=1)
    if np.any(resid > 1e-9 * np.abs(rho)) or np.any(rho <= 0):
        raise ConvergenceError("radial function solve did not converge")
    return rho


def radial_on_grid(K: ConvexBody, x=None) -> np.ndarray:
    key = ("radial", None if x is None else tuple(np.asarray(x, dtype=float)))
    return K.cached(key, lambda: _radial_newton(
        K, K.grid.nodes, np.zeros(K.n) if x is None else np.asarray(x, dtype=float), 1e-13, 60))


def polar_body(K: ConvexBody) -> ConvexBody:
    """K*, with support function 1/rho_K re-analysed on the grid."""
    rho = radial_on_grid(K)
    return ConvexBody(K.grid, sphere.analyze(K.grid, 1.0 / rho), label=f"polar({K.label})")


# ---------------------------------------------------------------------------
# polar volumes and the Santalo point


@dataclass
class DistanceResult:
    value: float
    point: np.ndarray | None = None
    matrix: np.ndarray | None = None
    converged: bool = True
    iterations: int = 0
    info: dict = field(default_factory=dict)


def polar_volume_at(K: ConvexBody, x=None) -> float:
    """V((K - x)*) = (1/n) int (h - x.u)^{-n}."""
    x = np.zeros(K.n) if x is None else np.asarray(x, dtype=float)
    s = K.h - K.grid.nodes @ x
    if np.min(s) <= 0:
        raise TranslationLeavesOrigin(f"point {x} is on or outside the boundary")
    return sphere.integrate(K.grid, s ** (-K.n)) / K.n


def santalo_point(K: ConvexBody) -> DistanceResult:
    """Minimiser of x -> V(K^x), by damped Newton with the exact Hessian."""
    def build():
        g = K.grid
        tol = 1e-9 * sphere.ball_volume(K.n) * 1e-3
        res = newton_point(K.h, g.nodes, g.weights / K.n, -K.n, maximize=False, tol=tol)
        grad = float(np.linalg.norm(_polar_gradient(K, res.point)))
        return DistanceResult(res.value, res.point, converged=res.converged and
                              grad <= 1e-9 * sphere.ball_volume(K.n),
                              iterations=res.iterations, info={"gradient_norm": grad})
    return K.cached("santalo", build)


def _polar_gradient(K, x):
    s = K.h - K.grid.nodes @ x
    return (K.grid.weights * s ** (-K.n - 1)) @ K.grid.nodes


# ---------------------------------------------------------------------------
# distances


def l2_distance(K: ConvexBody, L: ConvexBody) -> float:
    K.grid.check_same(L.grid)
    d = K.h - L.h
    return math.sqrt(sphere.integrate(K.grid, d * d) / sphere.sphere_area(K.n))


def l2_distance_to_ball(K: ConvexBody, r: float) -> float:
    """delta_2 between K and the origin-centred ball of radius r."""
    d = K.h - r
    return math.sqrt(sphere.integrate(K.grid, d * d) / sphere.sphere_area(K.n))


def symmetric_difference_volume(K: ConvexBody, L: ConvexBody, x=None) -> float:
    """V(K delta L) from radial functions about a common interior point."""
    K.grid.check_same(L.grid)
    if x is None:
        x = 0.5 * (santalo_point(K).point + santalo_point(L).point)
        if not (np.min(K.h - K.grid.nodes @ x) > 0 and np.min(L.h - L.grid.nodes @ x) > 0):
            x = np.zeros(K.n)
    x = np.asarray(x, dtype=float)
    for B in (K, L):
        if np.min(B.h - B.grid.nodes @ x) <= 0:
            raise TranslationLeavesOrigin(f"{x} is not interior to both bodies")
    rk = radial_on_grid(K, x)
    rl = radial_on_grid(L, x)
    return sphere.integrate(K.grid, np.abs(rk ** K.n - rl ** K.n)) / K.n


# refinement of the normal set for integrands with a kink
KINK_REFINE = {2: 4, 3: 2}


def refined_copy(K: ConvexBody, factor: int) -> ConvexBody:
    """The same body on a grid ``factor`` times finer (zero-padded coefficients)."""
    def build():
        fine = K.grid.refined(factor)
        c = np.zeros(fine.ncoef)
        c[:K.coefficients.size] = K.coefficients
        return ConvexBody(fine, c, label=K.label)
    return K.cached(("refined", factor), build)


def ball_intersection_volume(K: ConvexBody, x, radius: float = 1.0) -> float:
    """V(K intersect (x + radius B)), integrated over the normals of K.

    The integrand has a kink where the boundary meets the sphere, so it is
    evaluated on a refined normal set.
    """
    Kf = refined_copy(K, KINK_REFINE[K.n])
    X = boundary_points_on_grid(Kf) - x
    s = Kf.h - Kf.grid.nodes @ x
    rho = np.linalg.norm(X, axis=1)
    ratio = np.minimum(radius / rho, 1.0) ** K.n
    return sphere.integrate(Kf.grid, ratio * s * Kf.f) / K.n


def relative_asymmetry_to_ball(K: ConvexBody) -> DistanceResult:
    """A(K~, B): minimal V(K~ delta (B + x)) / kappa_n over translations."""
    def build():
        Kt = K if is_normalized(K) else normalize_volume(K)
        kn = sphere.ball_volume(K.n)
        vol = volume(Kt)
        nodes = Kt.grid.nodes

        def objective(x):
            if np.min(Kt.h - nodes @ x) <= 1e-9:
                return 2.0
            return (vol + kn - 2 * ball_intersection_volume(Kt, x)) / kn

        x0 = santalo_point(Kt).point
        simplex = np.vstack([x0] + [x0 + 0.05 * e for e in np.eye(K.n)])
        best = None
        for _ in range(4):
            res = minimize(objective, x0, method="Nelder-Mead",
                           options=dict(initial_simplex=simplex, xatol=1e-10, fatol=1e-14,
                                        maxiter=4000))
            if best is not None and res.fun >= best.fun - 1e-14:
                best = best if best.fun <= res.fun else res
                break
            best = res
            x0 = res.x
            simplex = np.vstack([x0] + [x0 + 0.01 * e for e in np.eye(K.n)])
        return DistanceResult(max(float(best.fun), 0.0), np.array(best.x), converged=bool(best.success),
                              iterations=int(best.nit))
    return K.cached("asymmetry", build)


# ---------------------------------------------------------------------------
# Banach-Mazur distance to the ball


def _unimodular_spd(params, n):
    Lc = np.zeros((n, n))
    d = np.empty(n)
    d[:n - 1] = params[:n - 1]
    d[n - 1] = -np.sum(params[:n - 1])
    Lc[np.diag_indices(n)] = np.exp(d)
    Lc[np.tril_indices(n, -1)] = params[n - 1:]
    return Lc @ Lc.T, Lc


def _spd_params(m):
    n = m.shape[0]
    m = m / np.linalg.det(m) ** (1 / n)
    Lc = np.linalg.cholesky(m)
    d = np.log(np.diag(Lc))
    return np.concatenate([d[:n - 1], Lc[np.tril_indices(n, -1)]])


def moment_ellipsoid(K: ConvexBody):
    """Centroid and covariance of the uniform measure on K."""
    X = boundary_points_on_grid(K)
    dv = K.grid.weights * K.h * K.f  # n * cone volume element
    V = dv.sum() / K.n
    c = (dv @ X) / ((K.n + 1) * V)
    M2 = (X.T * dv) @ X / ((K.n + 2) * V)
    return c, M2 - np.outer(c, c)


def _sandwich_ratio(K, x, minv, nodes=None, h=None):
    nodes = K.grid.nodes if nodes is None else nodes
    h = K.h if h is None else h
    s = h - nodes @ x
    q = s / np.linalg.norm(nodes @ minv, axis=1)
    return q


def banach_mazur_to_ball(K: ConvexBody, starts: int = 8, seed: int = 0) -> DistanceResult:
    """Upper bound for d_BM(K, B) by multi-start simplex search.

    Minimises max/min of the support function of m(K - x) over interior
    centres x and unimodular SPD maps m.  The returned value is certified by
    refining the extreme directions, so it is a valid upper bound.
    """
    def build():
        n = K.n
        npar = n * (n + 1) // 2 - 1
        nodes = K.grid.nodes

        def ratio(params):
            m, Lc = _unimodular_spd(params[:npar], n)
            x = params[npar:]
            s = K.h - nodes @ x
            if s.min() <= 0:
                return 1e6
            minv = np.linalg.inv(m)
            q = s / np.linalg.norm(nodes @ minv, axis=1)
            return q.max() / q.min()

        sp = santalo_point(K).point
        c, cov = moment_ellipsoid(K)
        w, V = np.linalg.eigh(cov)
        m0 = V @ np.diag(w ** -0.5) @ V.T
        inits = [np.concatenate([_spd_params(m0), c]),
                 np.concatenate([np.zeros(npar), sp])]
        rng = np.random.default_rng(seed)
        for _ in range(starts):
            A = rng.normal(scale=0.15, size=(n, n))
            S = (A + A.T) / 2
            S -= np.trace(S) / n * np.eye(n)
            wS, VS = np.linalg.eigh(S)
            m = VS @ np.diag(np.exp(wS)) @ VS.T @ m0
            m = (m + m.T) / 2
            inits.append(np.concatenate([_spd_params(m), c + rng.normal(scale=0.02, size=n)]))

        best_val, best_p, total_it, conv = np.inf, None, 0, True
        for p0 in inits:
            val0 = ratio(p0)
            if val0 <= 1 + EXACT_RATIO:
                # round-off of the synthesis only: the start is already a ball
                best_val, best_p = 1.0, p0
                break
            p, val = p0, val0
            for _ in range(6):
                simplex = np.vstack([p] + [p + 0.02 * e for e in np.eye(p.size)])
                res = minimize(ratio, p, method="Nelder-Mead",
                               options=dict(initial_simplex=simplex, xatol=1e-11, fatol=1e-14,
                                            maxiter=20000, adaptive=True))
                total_it += res.nit
                improved = res.fun < val - 1e-13
                p, val = (res.x, res.fun) if res.fun < val else (p, val)
                if not improved:
                    break
            if val < best_val:
                best_val, best_p = val, p
            if best_val <= 1 + 1e-10:
                # the ratio is never below 1: further starts gain at most 1e-10
                break
        m, _ = _unimodular_spd(best_p[:npar], n)
        x = best_p[npar:]
        minv = np.linalg.inv(m)
        grid_val = best_val
        if grid_val == 1.0:
            return DistanceResult(1.0, x, m, True, total_it, {"grid_ratio": 1.0})
        q = _sandwich_ratio(K, x, minv)

        def qfn(v):
            return (K.support(v) - v @ x) / np.linalg.norm(v @ minv, axis=1)
        g = K.grid
        _, qmax = grid_extremum(qfn, q, nodes, g.spacing, maximize=True)
        _, qmin = grid_extremum(qfn, q, nodes, g.spacing, maximize=False)
        value = max(qmax / qmin, grid_val)
        return DistanceResult(float(value), x, m, conv, total_it, {"grid_ratio": float(grid_val)})
    return K.cached(("bm", starts, seed), build)
