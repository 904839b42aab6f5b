"""Reproducible families of test bodies.

Every generator returns a validated :class:`~lpstab.body.ConvexBody`.  A
:class:`BodySpec` records the family and parameters so that a body can be
rebuilt bit-for-bit from its JSON form.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import eval_legendre

from . import sphere
from .body import ConvexBody, from_coefficients, from_function
from .errors import LpstabError, NotStrictlyConvex

FAMILIES = ("ball", "ellipsoid", "harmonic", "cap_cut", "random")
SMOOTHING_LADDER = tuple(b * 10.0 ** e for e in range(-3, 1) for b in (1, 2, 5))
RANDOM_MAX_DEGREE = 8
RANDOM_AMPLITUDE = 0.1
# damping at HEADROOM * band must fall below this for the smoothed body to be
# resolved; the margin absorbs the spectral spread of moderate linear images
RESOLVED_TAIL = 1e-9
HEADROOM = 0.8


class GeneratorError(LpstabError):
    """A generator could not produce a valid body."""


def _grid(n, resolution):
    return sphere.make_grid(n, *resolution) if resolution else sphere.make_grid(n)


def ball(r: float = 1.0, n: int = 2, resolution=None) -> ConvexBody:
    if not r > 0:
        raise ValueError("radius must be positive")
    g = _grid(n, resolution)
    c = np.zeros(g.ncoef)
    c[0] = r if n == 2 else r * math.sqrt(4 * math.pi)
    return ConvexBody(g, c, label=f"ball(r={r!r})")


def ellipsoid(A, n: int | None = None, resolution=None) -> ConvexBody:
    """The body A B for a symmetric positive-definite A; h(u) = |A u|."""
    A = np.asarray(A, dtype=float)
    if A.ndim == 1:
        A = np.diag(A)
    n = A.shape[0] if n is None else n
    if A.shape != (n, n) or not np.allclose(A, A.T, atol=1e-14):
        raise ValueError("ellipsoid matrix must be symmetric n x n")
    if np.linalg.eigvalsh(A).min() <= 0:
        raise ValueError("ellipsoid matrix must be positive definite")
    g = _grid(n, resolution)
    label = "ellipsoid(" + ",".join(repr(float(a)) for a in np.diag(A)) + ")"
    return from_function(g, lambda u: np.linalg.norm(u @ A, axis=1), label=label)


def _harmonic_coefficients(n, grid, degree, order):
    c = np.zeros(grid.ncoef)
    if n == 2:
        c[2 * degree - 1 if order >= 0 else 2 * degree] = 1.0
    else:
        if abs(order) > degree:
            raise ValueError("|order| must not exceed the degree")
        c[sphere.lm_index(degree, order)] = math.sqrt(2 * math.pi)
    return c


def harmonic_threshold(n: int, degree: int, order: int = 0) -> float:
    """Largest amplitude for which 1 + eps Y stays strictly convex.

    ``Y`` is the basis harmonic scaled so that delta_2(1 + eps Y, B) = eps/sqrt 2.
    For n = 2 this is 1/(k^2 - 1).
    """
    if degree < 2:
        raise ValueError("degree must be at least 2")
    if n == 2:
        return 1.0 / (degree * degree - 1)
    g = sphere.make_grid(3).refined(2)
    c = _harmonic_coefficients(3, g, degree, order)
    F = sphere.field_from_coefficients(g, c)
    W = sphere.covariant_hessian(F).shifted(F.values)
    return -1.0 / float(np.linalg.eigvalsh(W).min())


def harmonic_bump(eps: float, degree: int, order: int = 0, n: int = 2, resolution=None) -> ConvexBody:
    """h = 1 + eps Y_{degree, order} (cosine for order >= 0 when n = 2)."""
    g = _grid(n, resolution)
    c = eps * _harmonic_coefficients(n, g, degree, order)
    c[0] += 1.0 if n == 2 else math.sqrt(4 * math.pi)
    return ConvexBody(g, c, label=f"harmonic(k={degree},m={order},eps={eps!r})")


def random_convex(seed: int, decay: float = 2.5, n: int = 2, resolution=None,
                  max_draws: int = 100) -> ConvexBody:
    """Seeded random perturbation of the ball with coefficients ~ k^{-decay}."""
    if not decay > 1:
        raise ValueError("decay must exceed 1")
    g = _grid(n, resolution)
    rng = np.random.default_rng(seed)
    deg = min(RANDOM_MAX_DEGREE, g.band)
    for _ in range(max_draws):
        c = np.zeros(g.ncoef)
        if n == 2:
            c[0] = 1.0
            for k in range(1, deg + 1):
                c[2 * k - 1:2 * k + 1] = RANDOM_AMPLITUDE * k ** -decay * rng.standard_normal(2)
        else:
            c[0] = math.sqrt(4 * math.pi)
            for l in range(1, deg + 1):
                s = RANDOM_AMPLITUDE * l ** -decay * math.sqrt(4 * math.pi / (2 * l + 1))
                c[l * l:(l + 1) ** 2] = s * rng.standard_normal(2 * l + 1)
        try:
            return ConvexBody(g, c, label=f"random(seed={seed},decay={decay!r})")
        except LpstabError:
            continue
    raise GeneratorError(f"no valid body after {max_draws} draws (seed={seed}, decay={decay})")


def _cap_cut_raw(eps, n):
    t = 1.0 - eps
    axis = n - 1  # last coordinate

    def fn(u):
        c = np.abs(u[:, axis])
        out = np.ones(len(u))
        cut = c > t
        out[cut] = t * c[cut] + math.sqrt(1 - t * t) * np.sqrt(np.maximum(1 - c[cut] ** 2, 0))
        return out
    return fn


def _piecewise_gauss(breaks, m):
    """Gauss-Legendre nodes and weights on each interval between consecutive breaks."""
    x, w = np.polynomial.legendre.leggauss(m)
    a, b = np.asarray(breaks[:-1]), np.asarray(breaks[1:])
    nodes = (0.5 * (b - a)[:, None] * (x + 1) + a[:, None]).ravel()
    weights = (0.5 * (b - a)[:, None] * w).ravel()
    return nodes, weights


def _cap_cut_coefficients(eps, n, grid):
    """Exact spectral coefficients of the raw cap cut, independent of the grid.

    The support function is analytic in the angle between its kinks (the cap
    rims and the flat faces), so Gauss-Legendre on each piece is exact to
    round-off.
    """
    t = 1.0 - eps
    fn = _cap_cut_raw(eps, n)
    m = 2 * grid.band + 64
    c = np.zeros(grid.ncoef)
    if n == 2:
        a = math.asin(t)
        breaks = sorted({0.0, a, math.pi / 2, math.pi - a, math.pi, math.pi + a, 1.5 * math.pi,
                         2 * math.pi - a, 2 * math.pi})
        th, w = _piecewise_gauss(breaks, m)
        h = fn(np.column_stack([np.cos(th), np.sin(th)]))
        c[0] = w @ h / (2 * math.pi)
        k = np.arange(1, grid.band + 1)
        c[2 * k - 1] = (np.cos(np.outer(k, th)) * h) @ w / math.pi  # sine terms vanish: h is even
        return c
    a = math.acos(t)
    phi, w = _piecewise_gauss([0.0, a, math.pi - a, math.pi], m)
    z = np.cos(phi)
    h = fn(np.column_stack([np.sin(phi), np.zeros_like(phi), z]))
    w = 2 * math.pi * w * np.sin(phi)
    for l in range(grid.band + 1):
        c[sphere.lm_index(l, 0)] = math.sqrt((2 * l + 1) / (4 * math.pi)) * (w @ (h * eval_legendre(l, z)))
    return c


def smoothed_cap_cut(eps: float, s: float | None = None, n: int = 2, resolution=None) -> ConvexBody:
    """Ball with opposite caps of height ``eps`` removed, then heat-smoothed.

    Coefficients of degree k are damped by exp(-s k^2) (n = 2) or
    exp(-s l(l+1)) (n = 3).  With ``s=None`` the smallest value of
    ``SMOOTHING_LADDER`` is used whose damping at ``HEADROOM`` times the band
    limit is below ``RESOLVED_TAIL`` and which gives a strictly convex body.
    """
    if not 0 < eps < 0.5:
        raise ValueError("cap height must lie in (0, 0.5)")
    g = _grid(n, resolution)
    raw = _cap_cut_coefficients(eps, n, g)
    raw[sphere.degrees(n, raw.size) % 2 == 1] = 0.0
    k = HEADROOM * g.band
    lam = k * k if n == 2 else k * (k + 1)
    if s is None:
        ladder = tuple(x for x in SMOOTHING_LADDER if math.exp(-x * lam) <= RESOLVED_TAIL)
    else:
        ladder = (s,)
    err = None
    for si in ladder:
        if not si > 0:
            raise ValueError("smoothing must be positive")
        fn = (lambda k: np.exp(-si * k * k)) if n == 2 else (lambda k: np.exp(-si * k * (k + 1)))
        c = sphere.degree_scale(raw, n, fn)
        try:
            K = ConvexBody(g, c, label=f"cap_cut(eps={eps!r},s={si!r})")
        except NotStrictlyConvex as exc:
            err = exc
            continue
        K.meta["smoothing"] = si
        return K
    raise NotStrictlyConvex(f"cap cut eps={eps} not convex for smoothing {ladder[-1]}: {err}")


@dataclass
class BodySpec:
    """Serializable description of a generated body."""
    family: str
    params: dict = field(default_factory=dict)
    n: int = 2
    resolution: tuple | None = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}; expected one of {FAMILIES}")
        if self.n not in (2, 3):
            raise ValueError("dimension must be 2 or 3")
        if self.resolution is not None:
            self.resolution = tuple(int(r) for r in self.resolution)

    @property
    def name(self) -> str:
        args = ",".join(f"{k}={_fmt(v)}" for k, v in sorted(self.params.items()))
        return f"{self.family}({args})"

    def build(self) -> ConvexBody:
        p, n, res = self.params, self.n, self.resolution
        if self.family == "ball":
            K = ball(p.get("r", 1.0), n, res)
        elif self.family == "ellipsoid":
            K = ellipsoid(p["A"], n, res)
        elif self.family == "harmonic":
            K = harmonic_bump(p["eps"], p["degree"], p.get("order", 0), n, res)
        elif self.family == "cap_cut":
            K = smoothed_cap_cut(p["eps"], p.get("s"), n, res)
        else:
            K = random_convex(p["seed"], p.get("decay", 2.5), n, res)
        K.label = self.name
        K.meta["spec"] = self.to_dict()
        return K

    def to_dict(self) -> dict:
        return {"family": self.family, "params": self.params, "n": self.n,
                "resolution": None if self.resolution is None else list(self.resolution)}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "BodySpec":
        return cls(d["family"], dict(d.get("params", {})), int(d.get("n", 2)), d.get("resolution"))

    @classmethod
    def from_json(cls, text: str) -> "BodySpec":
        return cls.from_dict(json.loads(text))


def _fmt(v):
    if isinstance(v, (list, tuple)):
        return "[" + ";".join(_fmt(x) for x in v) + "]"
    return repr(v)


def _ellipsoid_matrices(n):
    if n == 2:
        c, s = math.cos(0.4), math.sin(0.4)
        R = np.array([[c, -s], [s, c]])
        return [[1.5, 1.0], [1.2, 1 / 1.2], (R @ np.diag([1.3, 0.85]) @ R.T).tolist()]
    c, s = math.cos(0.5), math.sin(0.5)
    R = np.array([[c, 0, -s], [0, 1, 0], [s, 0, c]]) @ np.array([[1, 0, 0], [0, c, -s], [0, s, c]])
    return [[1.3, 1.0, 0.8], [1.2, 1.2, 1 / 1.44], (R @ np.diag([1.25, 1.0, 0.85]) @ R.T).tolist()]


def default_suite(n: int = 2, resolution=None) -> list:
    """Ball, ellipsoids, harmonic bumps, cap cuts and random bodies.

    Harmonic amplitudes are {0.02, 0.05, 0.1 * threshold}; amplitudes at or
    above 0.8 * threshold are clamped to that value.
    """
    specs = [BodySpec("ball", {"r": 1.0}, n, resolution)]
    for A in _ellipsoid_matrices(n):
        specs.append(BodySpec("ellipsoid", {"A": A}, n, resolution))
    for k in (2, 3, 4):
        thr = harmonic_threshold(n, k)
        for eps in (0.02, 0.05, 0.1 * thr):
            eps = float(min(eps, 0.8 * thr))
            specs.append(BodySpec("harmonic", {"eps": eps, "degree": k, "order": 0}, n, resolution))
    for eps in (0.05, 0.1, 0.2):
        specs.append(BodySpec("cap_cut", {"eps": eps}, n, resolution))
    for seed in range(5):
        specs.append(BodySpec("random", {"seed": seed, "decay": 2.5}, n, resolution))
    return specs
