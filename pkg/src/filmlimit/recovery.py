"""Explicit recovery sequences for the three limit energies.

* elastic film on foundation: film ``(ubar, eps^2 x3 h)``, bonding
  ``(x3 + 1)(ubar, 0)``, substrate zero;
* cracked Kirchhoff-Love film: ``c_eps (u + (0, 0, eps^2 corrector))``;
* film with delamination: as above in the film, bonding layer switched off
  on a smoothed delamination set.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import ndimage, signal

from . import energy2d, energy3d
from . import fields as F
from .model import (U3_ZERO_TOL, CrackSurface3D, DelaminationRegion, Facet, KLDisplacement,
                    KLFilmField, LayeredDomain, MaterialParams, PixelGrid, crack_facets,
                    validate_admissible)


class MarginError(ValueError):
    """Mollification width too large for the domain."""


class PairingError(ValueError):
    """Set-smoothing index too small for the given eps."""


class TraceMismatchError(ValueError):
    pass


@dataclass(frozen=True)
class RecoveryControls:
    """Tuning of the corrector and set-smoothing constructions.

    Attributes
    ----------
    delta_exponent : float
        Mollification width ``delta(eps) = eps**delta_exponent``.
    nodes_per_delta : int
        Spline knots per mollification width.
    collar_factor : float
        Target is cut off within ``collar_factor * delta`` of the boundary.
    quad_order : int
        Planar Gauss order per knot cell.
    m_exponent : float
        Set smoothing index ``m(eps) = ceil(eps**-m_exponent)``.
    bending_corrector : bool
        Add the second corrector relaxing the bending trace (see
        :class:`CorrectorField`).  ``False`` keeps the single ``x3 h(x')``
        term.
    """

    delta_exponent: float = 0.5
    nodes_per_delta: int = 4
    collar_factor: float = 2.0
    quad_order: int = 4
    m_exponent: float = 0.5
    bending_corrector: bool = True

    def delta(self, eps: float) -> float:
        return eps**self.delta_exponent

    def m(self, eps: float) -> int:
        return int(math.ceil(eps ** (-self.m_exponent) - 1e-12))


# ---------------------------------------------------------------------------
# mollified correctors


def _bump(r: np.ndarray) -> np.ndarray:
    out = np.zeros_like(r)
    inside = r < 1.0
    out[inside] = np.exp(-1.0 / (1.0 - r[inside] ** 2))
    return out


def _bspline(t: np.ndarray):
    """Cubic B-spline weights and derivatives for nodes ``i-1 .. i+2``."""
    s = 1.0 - t
    b = np.stack([s**3 / 6, (3 * t**3 - 6 * t**2 + 4) / 6, (-3 * t**3 + 3 * t**2 + 3 * t + 1) / 6, t**3 / 6])
    d = np.stack([-(s**2) / 2, (3 * t**2 - 4 * t) / 2, (-3 * t**2 + 2 * t + 1) / 2, t**2 / 2])
    return b, d


class SplineScalar:
    """Tensor cubic B-spline on a uniform knot grid over ``(0, Lx) x (0, Ly)``.

    ``coef`` holds values at nodes ``0 .. N`` per axis; outside nodes are zero.
    """

    def __init__(self, coef: np.ndarray, Lx: float, Ly: float):
        self.coef = np.asarray(coef, dtype=float)
        self.Nx, self.Ny = self.coef.shape[0] - 1, self.coef.shape[1] - 1
        self.Lx, self.Ly = Lx, Ly
        self.hx, self.hy = Lx / self.Nx, Ly / self.Ny
        self._pad = np.pad(self.coef, ((1, 2), (1, 2)))

    @property
    def knots(self) -> tuple:
        return (tuple(np.linspace(0, self.Lx, self.Nx + 1)), tuple(np.linspace(0, self.Ly, self.Ny + 1)))

    def _locate(self, xp):
        sx = np.asarray(xp[..., 0], dtype=float) / self.hx
        sy = np.asarray(xp[..., 1], dtype=float) / self.hy
        i = np.clip(np.floor(sx).astype(int), 0, self.Nx - 1)
        j = np.clip(np.floor(sy).astype(int), 0, self.Ny - 1)
        return i, j, sx - i, sy - j

    def eval(self, xp, grad: bool = False):
        i, j, tx, ty = self._locate(xp)
        bx, dx = _bspline(tx)
        by, dy = _bspline(ty)
        v = np.zeros(np.shape(tx))
        gx = np.zeros_like(v)
        gy = np.zeros_like(v)
        for a in range(4):
            for b in range(4):
                c = self._pad[i + a, j + b]
                v += c * bx[a] * by[b]
                if grad:
                    gx += c * dx[a] * by[b]
                    gy += c * bx[a] * dy[b]
        if grad:
            return v, gx / self.hx, gy / self.hy
        return v

    @property
    def sup_bound(self) -> float:
        """``max |coef|``; bounds the spline from above (partition of unity)."""
        return float(np.max(np.abs(self.coef), initial=0.0))

    def grad_l2(self, p: int = 4) -> float:
        def f(P):
            _, gx, gy = self.eval(P, grad=True)
            return gx * gx + gy * gy
        return math.sqrt(max(0.0, F.quadrature_integral(f, (0, 0), (self.Lx, self.Ly), (self.Nx, self.Ny), p)))

    def l2_distance(self, target: Callable, p: int = 4) -> float:
        def f(P):
            return (self.eval(P) - target(P)) ** 2
        return math.sqrt(max(0.0, F.quadrature_integral(f, (0, 0), (self.Lx, self.Ly), (self.Nx, self.Ny), p)))

    def l2(self, p: int = 4) -> float:
        return self.l2_distance(lambda P: np.zeros(len(P)), p)


@dataclass
class HEps:
    """Mollified corrector data.

    ``h`` approximates ``-lam_f/(lam_f + 2 mu_f) div ubar``; ``h2`` (possibly
    ``None``) approximates the same multiple of ``tr e(grad u3)``.
    """

    h: SplineScalar | None
    h2: SplineScalar | None
    eps: float
    delta: float
    knots: tuple

    @property
    def is_zero(self) -> bool:
        return self.h is None and self.h2 is None

    def value(self, xp) -> np.ndarray:
        return np.zeros(np.shape(xp)[:-1]) if self.h is None else self.h.eval(xp)

    @property
    def sup_bound(self) -> float:
        s = 0.0 if self.h is None else self.h.sup_bound
        if self.h2 is not None:
            s += self.h2.sup_bound / 8.0
        return s

    def grad_l2(self) -> float:
        return 0.0 if self.h is None else self.h.grad_l2()

    def report(self) -> dict:
        return {"eps": self.eps, "delta": self.delta, "sup_bound": self.sup_bound,
                "grad_l2": self.grad_l2(), "eps_grad_l2": self.eps * self.grad_l2(),
                "knots": [len(self.knots[0]) - 1, len(self.knots[1]) - 1] if self.knots[0] else [0, 0]}


def _knot_counts(Lx, Ly, base: PixelGrid, spacing: float) -> tuple[int, int]:
    rx = max(1, math.ceil(base.hx / spacing - 1e-9))
    ry = max(1, math.ceil(base.hy / spacing - 1e-9))
    return base.nx * rx, base.ny * ry


def mollify_to_spline(target: Callable, Lx: float, Ly: float, delta: float, Nx: int, Ny: int,
                      collar: float) -> SplineScalar | None:
    """Spline through node values of ``rho_delta * (cutoff target)``.

    The target is sampled at knot-cell centers and cut off where the distance
    to the boundary is at most ``collar``.  The discrete kernel is normalised
    so constants are reproduced exactly away from the boundary.
    Returns ``None`` when the cut-off target vanishes identically.
    """
    hx, hy = Lx / Nx, Ly / Ny
    cx = (np.arange(Nx) + 0.5) * hx
    cy = (np.arange(Ny) + 0.5) * hy
    X, Y = np.meshgrid(cx, cy, indexing="ij")
    C = np.stack([X, Y], axis=-1)
    dist = np.minimum(np.minimum(X, Lx - X), np.minimum(Y, Ly - Y))
    T = np.where(dist > collar, target(C.reshape(-1, 2)).reshape(X.shape), 0.0)
    if not np.any(T):
        return None
    Rx = int(math.ceil(delta / hx)) + 1
    Ry = int(math.ceil(delta / hy)) + 1
    ox = (np.arange(-Rx + 1, Rx + 1) - 0.5) * hx
    oy = (np.arange(-Ry + 1, Ry + 1) - 0.5) * hy
    OX, OY = np.meshgrid(ox, oy, indexing="ij")
    K = _bump(np.hypot(OX, OY) / delta)
    K /= K.sum()
    full = signal.fftconvolve(T, K, mode="full")
    nodes = full[Rx - 1:Rx - 1 + Nx + 1, Ry - 1:Ry - 1 + Ny + 1]
    nodes = np.where(np.abs(nodes) < 1e-15 * np.abs(T).max(), 0.0, nodes)
    return SplineScalar(nodes, Lx, Ly)


def build_h_eps(k: KLDisplacement, eps: float, params: MaterialParams,
                ctl: RecoveryControls = RecoveryControls(), base: PixelGrid | None = None,
                bending: bool | None = None) -> HEps:
    """Mollified corrector targets for ``k`` at scale ``eps``.

    Raises
    ------
    MarginError
        If the cut-off collar plus the kernel support reach the middle of the
        domain while the target is not identically zero.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    bending = ctl.bending_corrector if bending is None else bending
    base = base or PixelGrid(k.Lx, k.Ly, 8, 8)
    delta = ctl.delta(eps)
    Nx, Ny = _knot_counts(k.Lx, k.Ly, base, delta / ctl.nodes_per_delta)
    r = params.h_ratio
    t1 = lambda P: -r * k.div_ubar(P)

    def t2(P):
        e = k.strain_grad_u3(P)
        return -r * (e[..., 0, 0] + e[..., 1, 1])

    collar = ctl.collar_factor * delta
    margin_bad = collar + delta + 2 * max(k.Lx / Nx, k.Ly / Ny) >= 0.5 * min(k.Lx, k.Ly)
    h = mollify_to_spline(t1, k.Lx, k.Ly, delta, Nx, Ny, 0.0 if margin_bad else collar)
    h2 = mollify_to_spline(t2, k.Lx, k.Ly, delta, Nx, Ny, 0.0 if margin_bad else collar) if bending else None
    if margin_bad and (h is not None or h2 is not None):
        raise MarginError(f"delta = {delta:.4g} leaves no interior for the cut-off on this domain")
    if h is None and h2 is None:
        return HEps(None, None, eps, delta, ((), ()))
    knots = (h or h2).knots
    return HEps(h, h2, eps, delta, knots)


class CorrectorField(F.Field):
    """``(0, 0, c eps^2 [x3 h(x') + (x3 - x3^2)/2 h2(x')])``.

    Its ``e_33`` equals ``c eps^2 (h + (1/2 - x3) h2)``, which relaxes the
    membrane and the bending trace at the same time.
    """

    def __init__(self, hdata: HEps, eps: float, scale: float = 1.0):
        self.hd, self.eps, self.scale = hdata, eps, scale
        kx, ky = hdata.knots
        self.breaks = (tuple(kx), tuple(ky), ())

    def _parts(self, x):
        xp = x[..., :2]
        z = np.zeros(x.shape[:-1])
        h = gx = gy = z
        h2 = g2x = g2y = z
        if self.hd.h is not None:
            h, gx, gy = self.hd.h.eval(xp, grad=True)
        if self.hd.h2 is not None:
            h2, g2x, g2y = self.hd.h2.eval(xp, grad=True)
        return h, gx, gy, h2, g2x, g2y

    def value(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape)
        if self.hd.is_zero:
            return out
        h, _, _, h2, _, _ = self._parts(x)
        z = x[..., 2]
        out[..., 2] = self.scale * self.eps**2 * (z * h + 0.5 * (z - z * z) * h2)
        return out

    def jacobian(self, x):
        x = np.asarray(x, dtype=float)
        J = np.zeros(x.shape[:-1] + (3, 3))
        if self.hd.is_zero:
            return J
        h, gx, gy, h2, g2x, g2y = self._parts(x)
        z = x[..., 2]
        q = 0.5 * (z - z * z)
        s = self.scale * self.eps**2
        J[..., 2, 0] = s * (z * gx + q * g2x)
        J[..., 2, 1] = s * (z * gy + q * g2y)
        J[..., 2, 2] = s * (h + (0.5 - z) * h2)
        return J


# ---------------------------------------------------------------------------
# layer fields


def _scaled(f: F.Field, c: float) -> F.Field:
    return f if c == 1.0 else F.ScaledField(c, f)


def bonding_field(piece, c: float = 1.0) -> F.VectorField:
    """``c (x3 + 1)(ubar, 0)`` on one KL piece."""
    x0, x1, y0, y1 = piece.rect
    lift = F.Const(float(c)) * (F.Var(2) + F.ONE)
    return F.VectorField((lift * piece.ubar[0], lift * piece.ubar[1], F.ZERO),
                         ((x0, x1), (y0, y1), (-2.0, 1.0)))


@dataclass
class RecoveryResult:
    """Recovery field with its facets and the data needed to evaluate it."""

    kind: str
    eps: float
    field: F.PiecewiseField
    facets: CrackSurface3D
    domain: LayeredDomain
    c_eps: float = 1.0
    hdata: HEps | None = None
    delta_eps: DelaminationRegion | None = None
    smoothing: dict = field(default_factory=dict)
    film_only: bool = False

    def energy(self, params: MaterialParams) -> energy3d.EnergyBreakdown:
        return energy3d.energy_breakdown(self.field, self.facets, self.eps, params, self.domain,
                                         film_only=self.film_only)


def _integration_domain(domain: LayeredDomain, hd: HEps | None, ctl: RecoveryControls) -> LayeredDomain:
    if hd is None or hd.is_zero:
        return domain.with_cells(domain.nx, domain.ny, nz=1, pz=3)
    return domain.with_cells(len(hd.knots[0]) - 1, len(hd.knots[1]) - 1, nz=1, p=ctl.quad_order, pz=3)


def _film_pieces(k: KLDisplacement, hd: HEps, eps: float, c: float):
    out = []
    for pc in k.pieces:
        x0, x1, y0, y1 = pc.rect
        f = _scaled(KLFilmField(pc), c)
        if not hd.is_zero:
            f = f + CorrectorField(hd, eps, c)
        out.append((F.Box((x0, y0, 0.0), (x1, y1, 1.0)), f))
    return out


def _trace_check(u: F.PiecewiseField, pairs, samplers, declared=None):
    rep = F.validate_traces(u, [(a, b, s) for (a, b), s in zip(pairs, samplers)],
                            declared or [False] * len(pairs))
    if not rep.ok:
        raise TraceMismatchError("; ".join(rep.messages))
    return rep


def recovery_sobolev(k: KLDisplacement, eps: float, params: MaterialParams,
                     domain: LayeredDomain = LayeredDomain(),
                     ctl: RecoveryControls = RecoveryControls()) -> RecoveryResult:
    """Three-layer field for the elastic (crack-free, planar) limit.

    Film ``(ubar, eps^2 x3 h)``, bonding ``(x3 + 1)(ubar, 0)``, substrate 0.
    """
    if not k.is_crack_free():
        raise ValueError("ubar must be crack-free")
    if not k.u3_is_zero():
        raise ValueError("the elastic limit takes planar ubar only (u3 = 0)")
    hd = build_h_eps(k, eps, params, ctl, domain.grid, bending=False)
    bond = [(F.Box((pc.rect[0], pc.rect[2], -1.0), (pc.rect[1], pc.rect[3], 0.0)), bonding_field(pc))
            for pc in k.pieces]
    film = _film_pieces(k, hd, eps, 1.0)
    sub = [(F.Box((0, 0, -2.0), (k.Lx, k.Ly, -1.0)), F.ZeroField())]
    u = F.PiecewiseField(bond + film + sub, CrackSurface3D(), F.Box((0, 0, -2), (k.Lx, k.Ly, 1)))
    n = len(k.pieces)
    pairs, samplers = [], []
    for i, pc in enumerate(k.pieces):
        lo, hi = (pc.rect[0], pc.rect[2]), (pc.rect[1], pc.rect[3])
        pairs += [(i, n + i), (i, 2 * n)]
        samplers += [F.horizontal_interface_sampler(0.0, lo, hi), F.horizontal_interface_sampler(-1.0, lo, hi)]
    _trace_check(u, pairs, samplers)
    return RecoveryResult("sobolev", eps, u, CrackSurface3D(), _integration_domain(domain, hd, ctl), 1.0, hd)


def clamp_factor(M: float, eps: float, hd: HEps) -> float:
    """``c_eps = M / (M + eps^2 ||h||_inf)`` with the spline sup bound."""
    return M / (M + eps**2 * hd.sup_bound)


def recovery_film(k: KLDisplacement, eps: float, params: MaterialParams,
                  domain: LayeredDomain = LayeredDomain(),
                  ctl: RecoveryControls = RecoveryControls()) -> RecoveryResult:
    """Clamped, corrected film field; facets are the cracks times ``(0, 1)``."""
    hd = build_h_eps(k, eps, params, ctl, domain.grid)
    c = clamp_factor(params.M, eps, hd)
    film = _film_pieces(k, hd, eps, c)
    facets = crack_facets(k.cracks)
    u = F.PiecewiseField(film, facets, F.Box((0, 0, 0), (k.Lx, k.Ly, 1)))
    return RecoveryResult("film", eps, u, facets, _integration_domain(domain, hd, ctl), c, hd, film_only=True)


# ---------------------------------------------------------------------------
# set smoothing


@dataclass
class SmoothSetResult:
    region: DelaminationRegion
    t: float
    delta_m: float
    l1_discrepancy: float
    chi_m: np.ndarray = field(repr=False)


def _pixel_kernel(grid: PixelGrid, radius: float) -> np.ndarray:
    rx = int(math.floor(radius / grid.hx))
    ry = int(math.floor(radius / grid.hy))
    ox = np.arange(-rx, rx + 1) * grid.hx
    oy = np.arange(-ry, ry + 1) * grid.hy
    OX, OY = np.meshgrid(ox, oy, indexing="ij")
    K = _bump(np.hypot(OX, OY) / radius)
    return K / K.sum()


def smooth_set(delta: DelaminationRegion, m: int, levels: int = 64) -> SmoothSetResult:
    """Mollify ``chi_Delta`` with radius ``1/m`` and threshold at a level in ``[1/2, 1 - delta_m)``.

    The level minimising the pixel perimeter is chosen; ties go to the
    smaller L1 discrepancy, then to the smaller level.  Reflecting boundary
    conditions keep sets that meet the boundary orthogonally unchanged.
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    g = delta.grid
    chi = delta.mask.astype(float)
    if delta.count in (0, g.nx * g.ny):
        return SmoothSetResult(delta, 0.5, 0.0, 0.0, chi)
    K = _pixel_kernel(g, 1.0 / m)
    chi_m = ndimage.correlate(chi, K, mode="reflect")
    delta_m = math.sqrt(float(np.sum(np.abs(chi_m - chi))) * g.pixel_area)
    hi = 1.0 - delta_m
    ts = np.linspace(0.5, hi, levels, endpoint=False) if hi > 0.5 else np.array([0.5])
    best = None
    for t in ts:
        reg = DelaminationRegion(g, chi_m > t)
        l1 = float(np.count_nonzero(reg.mask != delta.mask)) * g.pixel_area
        key = (round(reg.perimeter, 12), l1, float(t))
        if best is None or key < best[0]:
            best = (key, reg, float(t), l1)
    _, reg, t, l1 = best
    return SmoothSetResult(reg, t, delta_m, l1, chi_m)


# ---------------------------------------------------------------------------
# full three-layer construction


def _row_rects(mask: np.ndarray, grid: PixelGrid):
    """Merge selected pixels into row runs ``(x0, x1, y0, y1)``."""
    out = []
    for j in range(mask.shape[1]):
        col = mask[:, j]
        i = 0
        while i < len(col):
            if col[i]:
                s = i
                while i < len(col) and col[i]:
                    i += 1
                out.append((s * grid.hx, i * grid.hx, j * grid.hy, (j + 1) * grid.hy))
            else:
                i += 1
    return out


def _merge_edges(edges):
    """Merge collinear adjacent axis-aligned unit edges."""
    vert, hor = {}, {}
    for (a, b) in edges:
        if abs(a[0] - b[0]) < 1e-14:
            vert.setdefault(round(a[0], 12), []).append(tuple(sorted((a[1], b[1]))))
        else:
            hor.setdefault(round(a[1], 12), []).append(tuple(sorted((a[0], b[0]))))
    out = []
    for x, iv in vert.items():
        for s, e in _union(iv):
            out.append(((x, s), (x, e)))
    for y, iv in hor.items():
        for s, e in _union(iv):
            out.append(((s, y), (e, y)))
    return out


def _union(iv):
    iv = sorted(iv)
    res = [list(iv[0])]
    for s, e in iv[1:]:
        if s <= res[-1][1] + 1e-12:
            res[-1][1] = max(res[-1][1], e)
        else:
            res.append([s, e])
    return [tuple(r) for r in res]


def _bonding_crack_edges(k: KLDisplacement, mask: np.ndarray, grid: PixelGrid):
    """Crack pieces (one pixel long) with both neighbouring pixels attached."""
    out = []
    for a, b in k.cracks.segments():
        d = b - a
        L = float(np.linalg.norm(d))
        h = grid.hx if abs(d[0]) < 1e-14 else grid.hy
        n = max(1, int(round(L / h)))
        t = d / L
        nrm = np.array([-t[1], t[0]])
        for s in range(n):
            p0, p1 = a + t * s * L / n, a + t * (s + 1) * L / n
            mid = 0.5 * (p0 + p1)
            sides = []
            for sg in (-1, 1):
                q = mid + sg * nrm * 0.5 * min(grid.hx, grid.hy)
                i = min(grid.nx - 1, max(0, int(q[0] / grid.hx)))
                j = min(grid.ny - 1, max(0, int(q[1] / grid.hy)))
                inside = 0 <= q[0] <= grid.Lx and 0 <= q[1] <= grid.Ly
                sides.append(mask[i, j] if inside else True)
            if not sides[0] and not sides[1]:
                out.append((tuple(p0), tuple(p1)))
    return out


def recovery_full(k: KLDisplacement, delta: DelaminationRegion, eps: float, params: MaterialParams,
                  domain: LayeredDomain | None = None, ctl: RecoveryControls = RecoveryControls(),
                  m: int | None = None) -> RecoveryResult:
    """Three-layer field with the bonding layer removed on the smoothed set.

    Facets: film cracks times ``(0, 1)``; ``Delta_eps x {0}``; pixels off
    ``Delta_eps`` where ``u3`` or ``grad u3`` is nonzero, at ``x3 = 0``; the
    pixel boundary of ``Delta_eps`` times ``[-1, 0]``; crack pieces times
    ``[-1, 0]`` where both sides stay bonded.

    Raises
    ------
    PairingError
        If ``m`` is smaller than ``ctl.m(eps)``.
    """
    grid = delta.grid
    domain = domain or LayeredDomain(k.Lx, k.Ly, grid.nx, grid.ny)
    if (domain.nx, domain.ny) != (grid.nx, grid.ny):
        raise ValueError("delamination grid must match the domain pixel grid")
    m_rule = ctl.m(eps)
    m = m_rule if m is None else m
    if m < m_rule:
        raise PairingError(f"m = {m} is below the pairing rule m(eps) = {m_rule}")
    sm = smooth_set(delta, m)
    D = sm.region
    hd = build_h_eps(k, eps, params, ctl, grid)
    c = clamp_factor(params.M, eps, hd)

    film = _film_pieces(k, hd, eps, c)
    zero_b = [(F.PixelPrism(k.Lx, k.Ly, D.mask, -1.0, 0.0), F.ZeroField())] if D.count else []
    bond = [(F.Box((pc.rect[0], pc.rect[2], -1.0), (pc.rect[1], pc.rect[3], 0.0)), bonding_field(pc, c))
            for pc in k.pieces]
    sub = [(F.Box((0, 0, -2.0), (k.Lx, k.Ly, -1.0)), F.ZeroField())]

    facets = list(crack_facets(k.cracks).facets)
    for x0, x1, y0, y1 in _row_rects(D.mask, grid):
        facets.append(Facet.horizontal(x0, x1, y0, y1, 0.0, "bonding"))
    C = grid.centers()
    vert = (np.abs(k.u3(C)) > U3_ZERO_TOL) | np.any(np.abs(k.grad_u3(C)) > U3_ZERO_TOL, axis=-1)
    for x0, x1, y0, y1 in _row_rects(vert & ~D.mask, grid):
        facets.append(Facet.horizontal(x0, x1, y0, y1, 0.0, "bonding"))
    for a, b in _merge_edges(D.boundary_edges()):
        facets.append(Facet.vertical(a, b, -1.0, 0.0, "bonding"))
    ce = _bonding_crack_edges(k, D.mask, grid)
    if ce:
        for a, b in _merge_edges(ce):
            facets.append(Facet.vertical(a, b, -1.0, 0.0, "bonding"))
    cs = CrackSurface3D(tuple(facets))
    u = F.PiecewiseField(zero_b + bond + film + sub, cs, F.Box((0, 0, -2), (k.Lx, k.Ly, 1)))
    smoothing = {"m": m, "t_m": sm.t, "delta_m": sm.delta_m, "l1_discrepancy": sm.l1_discrepancy,
                 "perimeter": D.perimeter, "eps_perimeter": eps * D.perimeter}
    return RecoveryResult("full", eps, u, cs, _integration_domain(domain, hd, ctl), c, hd, D, smoothing)


# ---------------------------------------------------------------------------
# sweeps


CSV_COLUMNS = ("eps", "E_bulk_f", "E_bulk_b", "E_surf_f", "E_surf_b", "E_total", "E_limit", "gap")


@dataclass
class SweepRow:
    eps: float
    breakdown: energy3d.EnergyBreakdown
    limit: dict
    extra: dict = field(default_factory=dict)

    @property
    def E_limit(self) -> float:
        return float(self.limit["total"])

    @property
    def gap(self) -> float:
        return self.breakdown.total - self.E_limit

    def csv_values(self) -> tuple:
        b = self.breakdown
        return (self.eps, b.bulk_film, b.bulk_bonding, b.surf_film, b.surf_bonding, b.total,
                self.E_limit, self.gap)

    def to_dict(self) -> dict:
        surf_lim = self.limit.get("kappa_f_term", 0.0) + self.limit.get("kappa_b_term", 0.0)
        b = self.breakdown
        return {"eps": self.eps, "energy": b.to_dict(), "limit": self.limit, "gap": self.gap,
                "gap_surface": b.surf_film + b.surf_bonding - surf_lim,
                "gap_bulk": b.bulk_film + b.bulk_bonding - (self.E_limit - surf_lim), **self.extra}


def limit_energy(kind: str, k: KLDisplacement, params: MaterialParams, grid: PixelGrid) -> dict:
    if kind == "sobolev":
        mem, deb = energy2d.J0_terms(k, params, grid)
        return {"membrane": mem, "debonding": deb, "total": mem + deb}
    if kind == "film":
        mem = energy2d.membrane_energy(k, params, grid)
        ben = energy2d.bending_energy(k, params, grid)
        kf = params.kappa_f * k.cracks.union_length
        return {"membrane": mem, "bending": ben, "kappa_f_term": kf, "total": mem + ben + kf}
    if kind == "full":
        return energy2d.E0_breakdown(k, params, grid).to_dict()
    raise ValueError(f"unknown builder {kind!r}")


def build(kind: str, k: KLDisplacement, eps: float, params: MaterialParams, domain: LayeredDomain,
          ctl: RecoveryControls, delta: DelaminationRegion | None = None) -> RecoveryResult:
    if kind == "sobolev":
        return recovery_sobolev(k, eps, params, domain, ctl)
    if kind == "film":
        return recovery_film(k, eps, params, domain, ctl)
    if kind == "full":
        if delta is None:
            delta = energy2d.delamination_set(k, params, domain.grid)
        return recovery_full(k, delta, eps, params, domain, ctl)
    raise ValueError(f"unknown builder {kind!r}")


def limsup_sweep(kind: str, k: KLDisplacement, eps_list: Sequence[float], params: MaterialParams,
                 domain: LayeredDomain = LayeredDomain(), ctl: RecoveryControls = RecoveryControls(),
                 delta: DelaminationRegion | None = None, workers: int = 1) -> list[SweepRow]:
    """Energies of the recovery fields and the limit energy for each ``eps``.

    ``kind`` is ``"sobolev"``, ``"film"`` or ``"full"``.  Rows keep the
    order of ``eps_list`` whatever the number of workers.
    """
    lim = limit_energy(kind, k, params, domain.grid)

    def one(eps):
        r = build(kind, k, eps, params, domain, ctl, delta)
        extra = {"c_eps": r.c_eps}
        if r.hdata is not None and not r.hdata.is_zero:
            extra["h"] = {"delta": r.hdata.delta, "sup_bound": r.hdata.sup_bound}
        if r.smoothing:
            extra["smoothing"] = r.smoothing
        return SweepRow(float(eps), r.energy(params), lim, extra)

    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            return list(ex.map(one, eps_list))
    return [one(e) for e in eps_list]


def fit_rate(eps: Sequence[float], gap: Sequence[float]) -> float:
    """Least-squares slope of ``log gap`` against ``log eps``."""
    e = np.log(np.asarray(eps, dtype=float))
    g = np.log(np.asarray(gap, dtype=float))
    A = np.column_stack([e, np.ones_like(e)])
    return float(np.linalg.lstsq(A, g, rcond=None)[0][0])


def check_admissible(r: RecoveryResult, params: MaterialParams):
    return validate_admissible(r.field, params.M, r.domain.Lx, r.domain.Ly,
                               include_substrate=not r.film_only)
