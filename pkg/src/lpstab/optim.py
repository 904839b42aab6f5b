"""Small solvers shared by the body and functional modules."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConvergenceError


def tangent_basis(v: np.ndarray) -> np.ndarray:
    """Orthonormal basis of the tangent space at each unit vector.

    ``v`` has shape (k, n); returns (k, n, n-1).
    """
    v = np.atleast_2d(v)
    if v.shape[1] == 2:
        return np.column_stack([-v[:, 1], v[:, 0]])[:, :, None]
    a = np.zeros_like(v)
    use_y = np.abs(v[:, 0]) > 0.9
    a[~use_y, 0] = 1.0
    a[use_y, 1] = 1.0
    t1 = a - np.sum(a * v, axis=1)[:, None] * v
    t1 /= np.linalg.norm(t1, axis=1)[:, None]
    t2 = np.cross(v, t1)
    return np.stack([t1, t2], axis=-1)


@dataclass
class PointSolve:
    point: np.ndarray
    value: float
    gradient_norm: float
    iterations: int
    converged: bool


def power_objective(h, nodes, weights, p, x):
    """Value, gradient and Hessian of x -> sum w (h - x.u)^p (log for p = 0)."""
    s = h - nodes @ x
    if p == 0:
        val = weights @ np.log(s)
        g = -(weights / s) @ nodes
        H = -(nodes.T * (weights / s ** 2)) @ nodes
        return val, g, H
    sp = s ** p
    val = weights @ sp
    g = -p * ((weights * sp / s) @ nodes)
    H = p * (p - 1) * ((nodes.T * (weights * sp / s ** 2)) @ nodes)
    return val, g, H


def newton_point(h, nodes, weights, p, maximize, x0=None, tol=1e-12,
                 floor=1e-6, max_iter=200):
    """Optimise ``power_objective`` over interior points by damped Newton.

    The objective is convex (``maximize=False``) or concave (``True``);
    steps are backtracked so that ``min(h - x.u)`` stays above
    ``floor * min(h)`` and the objective improves.
    """
    n = nodes.shape[1]
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    sign = -1.0 if maximize else 1.0
    barrier = floor * h.min()
    if np.min(h - nodes @ x) <= barrier:
        raise ConvergenceError("starting point is not interior")
    val, g, H = power_objective(h, nodes, weights, p, x)
    it = 0
    for it in range(1, max_iter + 1):
        gn = np.linalg.norm(g)
        if gn <= tol:
            return PointSolve(x, val, gn, it - 1, True)
        step = -np.linalg.solve(sign * H, sign * g)
        t = 1.0
        improved = False
        for _ in range(60):
            xn = x + t * step
            if np.min(h - nodes @ xn) > barrier:
                vn, gn_, Hn = power_objective(h, nodes, weights, p, xn)
                if sign * vn <= sign * val + 1e-4 * t * sign * (g @ step) or \
                        np.linalg.norm(gn_) < np.linalg.norm(g):
                    improved = True
                    break
            t *= 0.5
        if not improved:
            # at machine precision the line search cannot make progress
            return PointSolve(x, val, gn, it, gn <= 1e3 * tol)
        x, val, g, H = xn, vn, gn_, Hn
    return PointSolve(x, val, np.linalg.norm(g), max_iter, np.linalg.norm(g) <= tol)


def refine_extremum(fn, v0, spacing, maximize=False, max_iter=30):
    """Polish a grid extremum of ``fn`` (vectorised over unit vectors).

    Newton steps in a tangent chart around ``v0`` with central-difference
    derivatives on a shrinking stencil.  Returns ``(v, value)``.
    """
    v0 = np.asarray(v0, dtype=float)
    T = tangent_basis(v0[None])[0]
    d = T.shape[1]
    sgn = -1.0 if maximize else 1.0

    def chart(a):
        w = v0 + a @ T.T
        return w / np.linalg.norm(w, axis=-1, keepdims=True)

    if d == 1:
        offs = np.array([[0.0], [-1.0], [1.0]])
    else:
        offs = np.array([[0, 0], [1, 0], [-1, 0], [0, 1], [0, -1],
                         [1, 1], [1, -1], [-1, 1], [-1, -1]], dtype=float)
    a = np.zeros(d)
    delta = spacing / 2
    best_a, best_val = a.copy(), sgn * float(fn(chart(a[None]))[0])
    stall = 0
    for _ in range(max_iter):
        vals = sgn * np.asarray(fn(chart(a + delta * offs)), dtype=float)
        f0 = vals[0]
        if d == 1:
            g = np.array([(vals[2] - vals[1]) / (2 * delta)])
            Hm = np.array([[(vals[2] - 2 * f0 + vals[1]) / delta ** 2]])
        else:
            g = np.array([(vals[1] - vals[2]), (vals[3] - vals[4])]) / (2 * delta)
            hxx = (vals[1] - 2 * f0 + vals[2]) / delta ** 2
            hyy = (vals[3] - 2 * f0 + vals[4]) / delta ** 2
            hxy = (vals[5] - vals[6] - vals[7] + vals[8]) / (4 * delta ** 2)
            Hm = np.array([[hxx, hxy], [hxy, hyy]])
        k = int(np.argmin(vals))
        gain = best_val - vals[k]
        if vals[k] < best_val:
            best_val, best_a = vals[k], a + delta * offs[k]
        # stop once the stencil no longer improves beyond round-off
        stall = stall + 1 if gain <= 1e-14 * abs(best_val) else 0
        if stall >= 2:
            break
        try:
            ok = np.all(np.linalg.eigvalsh(Hm) > 0)
        except np.linalg.LinAlgError:
            ok = False
        if ok:
            step = -np.linalg.solve(Hm, g)
            if np.linalg.norm(step) > 2 * delta:
                step *= 2 * delta / np.linalg.norm(step)
        else:
            step = delta * offs[k] if k else -delta * g / max(np.linalg.norm(g), 1e-300)
        a = a + step
        s = np.linalg.norm(step)
        if s < 1e-9:
            break
        delta = min(delta, max(2 * s, 2e-6))
    final = sgn * float(fn(chart(a[None]))[0])
    if final < best_val:
        best_val, best_a = final, a
    return chart(best_a[None])[0], sgn * best_val


def grid_extremum(fn, values, nodes, spacing, maximize=False, candidates=3):
    """Refine the best few grid nodes of ``values`` and keep the best."""
    order = np.argsort(-values if maximize else values)
    picked = []
    for i in order:
        if all(nodes[i] @ nodes[j] < np.cos(3 * spacing) for j in picked):
            picked.append(i)
        if len(picked) == candidates:
            break
    best_v, best = None, None
    for i in picked:
        v, val = refine_extremum(fn, nodes[i], spacing, maximize)
        if best is None or (val > best if maximize else val < best):
            best_v, best = v, val
    grid_best = values[order[0]]
    if (maximize and grid_best > best) or (not maximize and grid_best < best):
        return nodes[order[0]], float(grid_best)
    return best_v, float(best)
