"""Grids, quadrature and spectral transforms on the circle and the 2-sphere.

Scalar fields on S^{n-1} (n = 2, 3) are stored two ways: as samples at the
nodes of a :class:`SphereGrid` and as spectral coefficients.

Coefficient layouts
-------------------
n = 2
    ``[a0, a1, b1, a2, b2, ...]`` for ``a0 + sum_k a_k cos(k t) + b_k sin(k t)``.
n = 3
    real, orthonormal spherical harmonics ordered by ``(l, m)`` with
    ``m = -l..l``; flat index ``l*l + l + m``.  ``Y_l0 = P_l(cos t)``,
    ``Y_lm = sqrt(2) P_l^m cos(m phi)`` and ``Y_l,-m = sqrt(2) P_l^m sin(m phi)``
    for ``m > 0``, where ``P_l^m`` are fully normalised associated Legendre
    functions without the Condon-Shortley phase.

Point evaluation away from the grid goes through :func:`evaluate_jets`, which
returns the value, gradient and Hessian of the degree-one homogeneous
extension ``H(x) = |x| h(x/|x|)``.  For a support function, ``grad H(u)`` is
the boundary point with normal ``u`` and the tangential block of
``hess H(u)`` is ``nabla^2 h + h g``.  In three dimensions the extension is
built from Cartesian solid harmonics, so nothing is singular at the poles.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import GridMismatch, ResolutionError

DEFAULT_RESOLUTION = {2: (512,), 3: (48, 96)}


def ball_volume(n: int) -> float:
    """kappa_n, the volume of the unit ball in R^n."""
    return math.pi ** (n / 2) / math.gamma(n / 2 + 1)


def sphere_area(n: int) -> float:
    """omega_n = n kappa_n, the surface area of S^{n-1}."""
    return n * ball_volume(n)


# ---------------------------------------------------------------------------
# grids


@dataclass(frozen=True, eq=False)
class SphereGrid:
    n: int
    resolution: tuple
    nodes: np.ndarray
    weights: np.ndarray
    band: int
    antipode: np.ndarray
    # n = 2: node angles.  n = 3: cos(theta) of the rings and the longitudes.
    theta: np.ndarray
    phi: np.ndarray | None = None
    # n = 3 Legendre tables, shape (m, l, ring)
    _plm: np.ndarray | None = field(default=None, repr=False)
    _dplm: np.ndarray | None = field(default=None, repr=False)

    @property
    def size(self) -> int:
        return self.nodes.shape[0]

    @property
    def ncoef(self) -> int:
        return coefficient_count(self.n, self.band)

    @property
    def spacing(self) -> float:
        """Typical angular distance between neighbouring nodes."""
        if self.n == 2:
            return 2 * math.pi / self.resolution[0]
        return math.pi / self.resolution[0]

    def same_as(self, other: "SphereGrid") -> bool:
        return self.n == other.n and self.resolution == other.resolution

    def check_same(self, other: "SphereGrid") -> None:
        if not self.same_as(other):
            raise GridMismatch(f"grid {self.resolution} (n={self.n}) vs "
                               f"{other.resolution} (n={other.n})")

    def refined(self, factor: int = 2) -> "SphereGrid":
        return make_grid(self.n, *(r * factor for r in self.resolution))


def coefficient_count(n: int, band: int) -> int:
    return 2 * band + 1 if n == 2 else (band + 1) ** 2


def band_of(n: int, ncoef: int) -> int:
    if n == 2:
        if ncoef % 2 != 1:
            raise ResolutionError(f"circle coefficient vector must have odd length, got {ncoef}")
        return (ncoef - 1) // 2
    band = math.isqrt(ncoef) - 1
    if (band + 1) ** 2 != ncoef:
        raise ResolutionError(f"{ncoef} is not a square number of sphere coefficients")
    return band


def make_grid(n: int, *resolution: int) -> SphereGrid:
    """Build (or fetch from cache) a quadrature grid on S^{n-1}.

    ``n = 2`` takes ``N`` uniform nodes; ``n = 3`` takes ``L`` Gauss-Legendre
    rings in ``cos(theta)`` times ``M`` uniform longitudes.
    """
    if not resolution:
        resolution = DEFAULT_RESOLUTION.get(n, ())
    return _make_grid(n, tuple(int(r) for r in resolution))


@lru_cache(maxsize=None)
def _make_grid(n: int, resolution: tuple) -> SphereGrid:
    if n == 2:
        if len(resolution) != 1:
            raise ResolutionError("circle grid takes a single node count")
        (N,) = resolution
        if N < 16:
            raise ResolutionError(f"N={N} below minimum 16")
        if N % 2:
            raise ResolutionError(f"N={N} must be even for antipodal closure")
        t = 2 * np.pi * np.arange(N) / N
        nodes = np.column_stack([np.cos(t), np.sin(t)])
        weights = np.full(N, 2 * np.pi / N)
        antipode = (np.arange(N) + N // 2) % N
        return SphereGrid(2, resolution, nodes, weights, N // 2 - 1, antipode, t)
    if n == 3:
        if len(resolution) == 1:
            resolution = (resolution[0], 2 * resolution[0])
        L, M = resolution
        if L < 8:
            raise ResolutionError(f"L={L} below minimum 8")
        if M < 2 * L or M % 2:
            raise ResolutionError(f"M={M} must be even and at least 2L={2 * L}")
        x, w = np.polynomial.legendre.leggauss(L)
        x = x[::-1].copy()
        w = w[::-1].copy()
        phi = 2 * np.pi * np.arange(M) / M
        s = np.sqrt(1 - x * x)
        nodes = np.stack([
            np.outer(s, np.cos(phi)),
            np.outer(s, np.sin(phi)),
            np.outer(x, np.ones(M)),
        ], axis=-1).reshape(-1, 3)
        weights = np.outer(w, np.full(M, 2 * np.pi / M)).ravel()
        band = min(L - 1, M // 2 - 1)
        ring = np.arange(L)
        anti_ring = L - 1 - ring
        anti_lon = (np.arange(M) + M // 2) % M
        antipode = (anti_ring[:, None] * M + anti_lon[None, :]).ravel()
        plm, dplm = _legendre_tables(band, x)
        return SphereGrid(3, resolution, nodes, weights, band, antipode, x, phi, plm, dplm)
    raise ResolutionError(f"dimension n={n} not supported (only 2 and 3)")


def _legendre_tables(band: int, x: np.ndarray):
    """Normalised P_l^m(x) and dP_l^m/dtheta, indexed [m, l, ring]."""
    s = np.sqrt(1 - x * x)
    P = np.zeros((band + 1, band + 1, x.size))
    dP = np.zeros_like(P)
    pmm = np.full_like(x, 1 / math.sqrt(4 * math.pi))
    for m in range(band + 1):
        if m > 0:
            pmm = pmm * math.sqrt((2 * m + 1) / (2 * m)) * s
        P[m, m] = pmm
        if m + 1 <= band:
            P[m, m + 1] = math.sqrt(2 * m + 3) * x * pmm
        for l in range(m + 2, band + 1):
            a = math.sqrt((4 * l * l - 1) / (l * l - m * m))
            b = math.sqrt((2 * l + 1) * ((l - 1) ** 2 - m * m) / ((2 * l - 3) * (l * l - m * m)))
            P[m, l] = a * x * P[m, l - 1] - b * P[m, l - 2]
        for l in range(m, band + 1):
            lower = P[m, l - 1] if l - 1 >= m else 0.0
            c = math.sqrt((2 * l + 1) / (2 * l - 1) * (l * l - m * m)) if l > 0 else 0.0
            dP[m, l] = (l * x * P[m, l] - c * lower) / s
    return P, dP


def lm_index(l: int, m: int) -> int:
    return l * l + l + m


# ---------------------------------------------------------------------------
# fields


@dataclass(frozen=True, eq=False)
class ScalarField:
    grid: SphereGrid
    values: np.ndarray
    coefficients: np.ndarray | None = None

    def __post_init__(self):
        if self.values.shape != (self.grid.size,):
            raise GridMismatch(f"{self.values.shape[0]} values for a {self.grid.size}-node grid")

    def integral(self) -> float:
        return integrate(self.grid, self)


@dataclass(frozen=True, eq=False)
class HessianField:
    """Covariant Hessian of a scalar field in an orthonormal tangent frame."""
    grid: SphereGrid
    entries: np.ndarray  # (nodes, n-1, n-1)

    def shifted(self, h: np.ndarray) -> np.ndarray:
        """nabla^2 h + h g at every node."""
        eye = np.eye(self.grid.n - 1)
        return self.entries + h[:, None, None] * eye


def field_from_coefficients(grid: SphereGrid, coefficients) -> ScalarField:
    c = pad_coefficients(grid, coefficients)
    return ScalarField(grid, synthesize(c, grid), c)


def pad_coefficients(grid: SphereGrid, coefficients) -> np.ndarray:
    c = np.asarray(coefficients, dtype=float)
    band = band_of(grid.n, c.size)
    if band > grid.band:
        raise ResolutionError(f"degree {band} exceeds grid band limit {grid.band}")
    if c.size == grid.ncoef:
        return c
    out = np.zeros(grid.ncoef)
    out[:c.size] = c
    return out


def integrate(grid: SphereGrid, f) -> float:
    """Quadrature approximation of the integral of ``f`` over S^{n-1}."""
    if isinstance(f, ScalarField):
        grid.check_same(f.grid)
        f = f.values
    f = np.asarray(f, dtype=float)
    if f.shape[0] != grid.size:
        raise GridMismatch(f"{f.shape[0]} samples for a {grid.size}-node grid")
    return float(grid.weights @ f)


def analyze(grid: SphereGrid, values, band: int | None = None) -> np.ndarray:
    """Spectral coefficients of node samples, truncated at ``band``."""
    band = grid.band if band is None else band
    if band > grid.band:
        raise ResolutionError(f"degree {band} exceeds grid band limit {grid.band}")
    v = np.asarray(values, dtype=float)
    if v.shape != (grid.size,):
        raise GridMismatch(f"{v.shape} samples for a {grid.size}-node grid")
    if grid.n == 2:
        N = grid.size
        F = np.fft.rfft(v) / N
        out = np.empty(2 * band + 1)
        out[0] = F[0].real
        out[1::2] = 2 * F[1:band + 1].real
        out[2::2] = -2 * F[1:band + 1].imag
        return out
    L, M = grid.resolution
    F = np.fft.rfft(v.reshape(L, M), axis=1) * (2 * np.pi / M)
    wl = np.polynomial.legendre.leggauss(L)[1][::-1]
    out = np.zeros((band + 1) ** 2)
    for m in range(band + 1):
        P = grid._plm[m, m:band + 1]  # (l, ring)
        ls = np.arange(m, band + 1)
        if m == 0:
            out[ls * ls + ls] = P @ (wl * F[:, 0].real)
        else:
            out[ls * ls + ls + m] = math.sqrt(2) * (P @ (wl * F[:, m].real))
            out[ls * ls + ls - m] = -math.sqrt(2) * (P @ (wl * F[:, m].imag))
    return out


def synthesize(coefficients, grid: SphereGrid, dtheta: bool = False) -> np.ndarray:
    """Node samples of a coefficient vector (``dtheta``: polar derivative, n=3)."""
    c = pad_coefficients(grid, coefficients)
    if grid.n == 2:
        N = grid.size
        K = grid.band
        F = np.zeros(N // 2 + 1, dtype=complex)
        F[0] = c[0]
        F[1:K + 1] = (c[1::2] - 1j * c[2::2]) / 2
        return np.fft.irfft(F, n=N) * N
    L, M = grid.resolution
    band = grid.band
    table = grid._dplm if dtheta else grid._plm
    F = np.zeros((L, M // 2 + 1), dtype=complex)
    for m in range(band + 1):
        ls = np.arange(m, band + 1)
        P = table[m, m:band + 1]
        if m == 0:
            F[:, 0] = c[ls * ls + ls] @ P
        else:
            a = c[ls * ls + ls + m] @ P
            b = c[ls * ls + ls - m] @ P
            F[:, m] = math.sqrt(2) * (a - 1j * b) / 2
    return (np.fft.irfft(F, n=M, axis=1) * M).ravel()


def phi_derivative(coefficients, n: int) -> np.ndarray:
    """Coefficients of the azimuthal derivative (d/dtheta for n=2)."""
    c = np.asarray(coefficients, dtype=float)
    out = np.zeros_like(c)
    if n == 2:
        k = np.arange(1, (c.size - 1) // 2 + 1)
        out[1::2] = k * c[2::2]
        out[2::2] = -k * c[1::2]
        return out
    band = band_of(3, c.size)
    for l in range(1, band + 1):
        m = np.arange(1, l + 1)
        out[l * l + l + m] = m * c[l * l + l - m]
        out[l * l + l - m] = -m * c[l * l + l + m]
    return out


def degree_scale(coefficients, n: int, fn) -> np.ndarray:
    """Multiply each coefficient by ``fn(degree)``."""
    c = np.asarray(coefficients, dtype=float)
    if n == 2:
        k = np.concatenate([[0], np.repeat(np.arange(1, (c.size - 1) // 2 + 1), 2)])
    else:
        band = band_of(3, c.size)
        k = np.concatenate([np.full(2 * l + 1, l) for l in range(band + 1)])
    return c * fn(k.astype(float))


def degrees(n: int, ncoef: int) -> np.ndarray:
    return degree_scale(np.ones(ncoef), n, lambda k: k).astype(int)


def covariant_hessian(f: ScalarField) -> HessianField:
    """Covariant Hessian of a spectrally represented field.

    n = 2 gives the single entry h''; n = 3 uses the (e_theta, e_phi) frame.
    """
    if f.coefficients is None:
        raise ResolutionError("covariant_hessian needs a spectral representation")
    grid, c = f.grid, f.coefficients
    if grid.n == 2:
        d2 = degree_scale(c, 2, lambda k: -k * k)
        return HessianField(grid, synthesize(d2, grid)[:, None, None])
    cp = phi_derivative(c, 3)
    cpp = phi_derivative(cp, 3)
    lap = degree_scale(c, 3, lambda l: l * (l + 1))
    h_t = synthesize(c, grid, dtheta=True)
    h_p = synthesize(cp, grid)
    h_pp = synthesize(cpp, grid)
    h_tp = synthesize(cp, grid, dtheta=True)
    Lh = synthesize(lap, grid)
    L, M = grid.resolution
    ct = np.repeat(grid.theta, M)
    st = np.sqrt(1 - ct * ct)
    cot = ct / st
    h_tt = -cot * h_t - Lh - h_pp / st ** 2
    out = np.empty((grid.size, 2, 2))
    out[:, 0, 0] = h_tt
    out[:, 0, 1] = out[:, 1, 0] = (h_tp - cot * h_p) / st
    out[:, 1, 1] = h_pp / st ** 2 + cot * h_t
    return HessianField(grid, out)


def gradient_on_grid(f: ScalarField) -> np.ndarray:
    """Ambient-coordinate tangential gradient at every node, shape (nodes, n)."""
    grid, c = f.grid, f.coefficients
    if c is None:
        raise ResolutionError("gradient needs a spectral representation")
    dp = synthesize(phi_derivative(c, grid.n), grid)
    if grid.n == 2:
        t = grid.theta
        return dp[:, None] * np.column_stack([-np.sin(t), np.cos(t)])
    e_t, e_p = frame_3d(grid)
    L, M = grid.resolution
    st = np.sqrt(1 - np.repeat(grid.theta, M) ** 2)
    dt = synthesize(c, grid, dtheta=True)
    return dt[:, None] * e_t + (dp / st)[:, None] * e_p


def frame_3d(grid: SphereGrid):
    """Orthonormal (e_theta, e_phi) at every node of a 3D grid."""
    L, M = grid.resolution
    ct = np.repeat(grid.theta, M)
    st = np.sqrt(1 - ct * ct)
    ph = np.tile(grid.phi, L)
    e_t = np.column_stack([ct * np.cos(ph), ct * np.sin(ph), -st])
    e_p = np.column_stack([-np.sin(ph), np.cos(ph), np.zeros_like(ph)])
    return e_t, e_p


# ---------------------------------------------------------------------------
# point evaluation


def _check_directions(directions, n: int) -> np.ndarray:
    u = np.atleast_2d(np.asarray(directions, dtype=float))
    if u.shape[1] != n:
        raise ValueError(f"expected {n}-vectors, got shape {u.shape}")
    if np.any(np.abs(np.linalg.norm(u, axis=1) - 1) > 1e-12):
        raise ValueError("directions must be unit vectors (tolerance 1e-12)")
    return u


def evaluate_at(coefficients, direction, n: int | None = None):
    """Value of the coefficient series at one or more unit directions."""
    c = np.asarray(coefficients, dtype=float)
    d = np.asarray(direction, dtype=float)
    if n is None:
        n = d.shape[-1]
    u = _check_directions(d, n)
    vals = evaluate_jets(c, u, n, order=0)[0]
    return float(vals[0]) if d.ndim == 1 else vals


def effective_band(coefficients, n: int, rtol: float = 0.0) -> int:
    c = np.abs(np.asarray(coefficients, dtype=float))
    nz = np.nonzero(c > rtol * max(c.max(initial=0.0), 1e-300))[0]
    if nz.size == 0:
        return 0
    last = nz[-1]
    if n == 2:
        return (last + 1) // 2
    return math.isqrt(last)


def evaluate_jets(coefficients, u, n: int, order: int = 2):
    """Value, gradient and Hessian of ``H(x) = |x| h(x/|x|)`` at unit ``u``.

    Returns ``(H, DH, D2H)`` with shapes ``(k,)``, ``(k, n)``, ``(k, n, n)``;
    entries beyond ``order`` are ``None``.
    """
    c = np.asarray(coefficients, dtype=float)
    u = np.atleast_2d(np.asarray(u, dtype=float))
    band = effective_band(c, n)
    if n == 2:
        return _circle_jets(c[:2 * band + 1], u, order)
    c = c[:(band + 1) ** 2]
    out = [], [], []
    chunk = 2048 if order == 2 else 8192
    for start in range(0, u.shape[0], chunk):
        res = _solid_jets(c, band, u[start:start + chunk], order)
        for acc, r in zip(out, res):
            acc.append(r)
    return tuple(np.concatenate(acc) if acc[0] is not None else None for acc in out)


def _circle_jets(c, u, order):
    t = np.arctan2(u[:, 1], u[:, 0])
    K = (c.size - 1) // 2
    k = np.arange(1, K + 1)
    C = np.cos(np.outer(t, k))
    S = np.sin(np.outer(t, k))
    a, b = c[1::2], c[2::2]
    h = c[0] + C @ a + S @ b
    if order == 0:
        return h, None, None
    hp = C @ (k * b) - S @ (k * a)
    perp = np.column_stack([-u[:, 1], u[:, 0]])
    grad = h[:, None] * u + hp[:, None] * perp
    if order == 1:
        return h, grad, None
    hpp = -(C @ (k * k * a) + S @ (k * k * b))
    hess = (h + hpp)[:, None, None] * perp[:, :, None] * perp[:, None, :]
    return h, grad, hess


def _solid_jets(c, band, u, order):
    """Solid-harmonic evaluation with exact first and second derivatives.

    Each basis function is Q_lm(z, r^2) * T_lm(x, y), with T a combination
    of Re/Im (x + i y)^m.  Partial derivatives of Q in (z, r^2) and of T in
    (x, y) are summed over m first; the 3x3 Hessian is assembled once.
    """
    k = u.shape[0]
    x, y, z = u[:, 0], u[:, 1], u[:, 2]
    # Re/Im (x + i y)^m, shifted by two so that index m-2 >= 0 always exists
    Cv = np.zeros((band + 3, k))
    Sv = np.zeros((band + 3, k))
    Cv[2] = 1.0
    for m in range(1, band + 1):
        Cv[m + 2] = x * Cv[m + 1] - y * Sv[m + 1]
        Sv[m + 2] = y * Cv[m + 1] + x * Sv[m + 1]
    npart = (1, 3, 6)[order]
    # Q partials: value, d/dz, d/dr2, d2/dz2, d2/dz dr2, d2/dr2^2; indexed [part, m, point]
    Q1 = np.zeros((npart, band + 1, k))
    Q2 = np.zeros((npart, band + 1, k))
    nsum = (1, 5, 15)[order]
    tot = np.zeros((nsum, k))
    kw = np.zeros((4, k))  # kappa-weighted S0, Ax, Ay, Sz, plus Sr below
    kwr = np.zeros(k)
    kk2 = np.zeros(k)
    ms = np.arange(band + 1, dtype=float)
    cmm = 1 / math.sqrt(4 * math.pi)
    sq2 = math.sqrt(2)
    for l in range(band + 1):
        if l > 0:
            cmm *= math.sqrt((2 * l + 1) / (2 * l))
        lf = float(l)
        mm = ms[:l]
        a = np.sqrt((4 * lf * lf - 1) / (lf * lf - mm * mm))[None, :, None]
        if l >= 2:
            b = np.sqrt(np.maximum((2 * lf + 1) * ((lf - 1) ** 2 - mm * mm), 0)
                        / ((2 * lf - 3) * (lf * lf - mm * mm)))[None, :, None]
        else:
            b = np.zeros((1, l, 1))
        Qn = np.zeros((npart, band + 1, k))
        p1, p2 = Q1[:, :l], Q2[:, :l]
        Qn[0, :l] = a[0] * z * p1[0] - b[0] * p2[0]
        if order >= 1:
            Qn[1, :l] = a[0] * (p1[0] + z * p1[1]) - b[0] * p2[1]
            Qn[2, :l] = a[0] * z * p1[2] - b[0] * (p2[0] + p2[2])
        if order >= 2:
            Qn[3, :l] = a[0] * (2 * p1[1] + z * p1[3]) - b[0] * p2[3]
            Qn[4, :l] = a[0] * (p1[2] + z * p1[4]) - b[0] * (p2[1] + p2[4])
            Qn[5, :l] = a[0] * z * p1[5] - b[0] * (2 * p2[2] + p2[5])
        Qn[0, l] = cmm
        Q2, Q1 = Q1, Qn

        base = l * l + l
        cc = np.zeros(l + 1)
        cs = np.zeros(l + 1)
        cc[0] = c[base]
        if l > 0:
            cc[1:] = sq2 * c[base + 1:base + l + 1]
            cs[1:] = sq2 * c[base - np.arange(1, l + 1)]
        if not (cc.any() or cs.any()):
            continue
        Q = Qn[:, :l + 1]
        m = ms[:l + 1]
        T = cc[:, None] * Cv[2:l + 3] + cs[:, None] * Sv[2:l + 3]
        kap = 1.0 - l
        s = np.einsum('amk,mk->ak', Q, T)
        tot[0] += s[0]
        kw[0] += kap * s[0]
        kk2 += kap * (kap - 2) * s[0]
        if order == 0:
            continue
        Tx = m[:, None] * (cc[:, None] * Cv[1:l + 2] + cs[:, None] * Sv[1:l + 2])
        Ty = m[:, None] * (cs[:, None] * Cv[1:l + 2] - cc[:, None] * Sv[1:l + 2])
        ax = np.einsum('mk,mk->k', Q[0], Tx)
        ay = np.einsum('mk,mk->k', Q[0], Ty)
        tot[1] += ax
        tot[2] += ay
        tot[3] += s[1]
        tot[4] += s[2]
        kw[1] += kap * ax
        kw[2] += kap * ay
        kw[3] += kap * s[1]
        kwr += kap * s[2]
        if order == 1:
            continue
        mm2 = (m * (m - 1))[:, None]
        Txx = mm2 * (cc[:, None] * Cv[:l + 1] + cs[:, None] * Sv[:l + 1])
        Txy = mm2 * (cs[:, None] * Cv[:l + 1] - cc[:, None] * Sv[:l + 1])
        tot[5] += s[3]
        tot[6] += s[4]
        tot[7] += s[5]
        tot[8] += np.einsum('mk,mk->k', Q[0], Txx)
        tot[9] += np.einsum('mk,mk->k', Q[0], Txy)
        tot[10] += np.einsum('mk,mk->k', Q[1], Tx)
        tot[11] += np.einsum('mk,mk->k', Q[1], Ty)
        tot[12] += np.einsum('mk,mk->k', Q[2], Tx)
        tot[13] += np.einsum('mk,mk->k', Q[2], Ty)

    Hval = tot[0]
    if order == 0:
        return Hval, None, None
    ez = np.array([0.0, 0.0, 1.0])
    gradG = np.column_stack([tot[1], tot[2], np.zeros(k)]) + tot[3][:, None] * ez + 2 * tot[4][:, None] * u
    grad = gradG + kw[0][:, None] * u
    if order == 1:
        return Hval, grad, None
    eye = np.eye(3)
    uu = u[:, :, None] * u[:, None, :]
    hess = np.zeros((k, 3, 3))
    hess[:, 0, 0] += tot[8]
    hess[:, 1, 1] -= tot[8]
    hess[:, 0, 1] += tot[9]
    hess[:, 1, 0] += tot[9]
    hess[:, 2, 2] += tot[5]
    ezu = ez[None, :, None] * u[:, None, :] + u[:, :, None] * ez[None, None, :]
    hess += 2 * tot[6][:, None, None] * ezu + 4 * tot[7][:, None, None] * uu
    hess += 2 * tot[4][:, None, None] * eye
    Bv = np.column_stack([tot[10], tot[11], np.zeros(k)])
    Cw = np.column_stack([tot[12], tot[13], np.zeros(k)])
    hess += ez[None, :, None] * Bv[:, None, :] + Bv[:, :, None] * ez[None, None, :]
    hess += 2 * (u[:, :, None] * Cw[:, None, :] + Cw[:, :, None] * u[:, None, :])
    ghat = (np.column_stack([kw[1], kw[2], np.zeros(k)]) + kw[3][:, None] * ez
            + 2 * kwr[:, None] * u)
    hess += kw[0][:, None, None] * eye + kk2[:, None, None] * uu
    hess += u[:, :, None] * ghat[:, None, :] + ghat[:, :, None] * u[:, None, :]
    return Hval, grad, hess
