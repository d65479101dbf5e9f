"""Reduced limit functionals: membrane, bending, debonding with delamination,
the relaxed density form and the one-dimensional anti-plane energy."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from . import fields as F
from .model import (U3_ZERO_TOL, DelaminationDensity, DelaminationRegion, KLDisplacement,
                    MaterialParams, PixelGrid)


class CracksPresentError(ValueError):
    pass


# ---------------------------------------------------------------------------
# planar quadratic forms


def reduced_form(e: np.ndarray, params: MaterialParams) -> np.ndarray:
    """``lam* (tr e)^2 + mu_f e:e`` for planar strains ``(..., 2, 2)``."""
    tr = e[..., 0, 0] + e[..., 1, 1]
    return params.lam_star * tr * tr + params.mu_f * np.einsum("...ij,...ij->...", e, e)


def _piece_integral(k: KLDisplacement, integrand, grid: PixelGrid | None, p: int) -> float:
    """Integrate ``integrand(points)`` piece by piece with cells aligned to ``grid``."""
    total = 0.0
    for pc in k.pieces:
        x0, x1, y0, y1 = pc.rect
        if grid is None:
            cells = (1, 1)
        else:
            cx, cy = (x1 - x0) / grid.hx, (y1 - y0) / grid.hy
            if abs(cx - round(cx)) > 1e-9 or abs(cy - round(cy)) > 1e-9:
                raise F.MisalignedCellsError("piece rectangle is not a union of grid cells")
            cells = (max(1, round(cx)), max(1, round(cy)))
        sub = KLDisplacement((pc,), k.cracks, k.Lx, k.Ly)
        total += F.quadrature_integral(lambda P: integrand(sub, P), (x0, y0), (x1, y1), cells, p)
    return float(total)


def _check_cracks_on_piece_boundaries(k: KLDisplacement) -> None:
    xs, ys = k.rect_breaks()
    for a, b in k.cracks.segments():
        if abs(a[0] - b[0]) <= 1e-12 and np.min(np.abs(np.asarray(xs) - a[0])) <= 1e-12:
            continue
        if abs(a[1] - b[1]) <= 1e-12 and np.min(np.abs(np.asarray(ys) - a[1])) <= 1e-12:
            continue
        raise F.MisalignedCellsError("crack segment does not lie on a piece boundary")


def membrane_energy(k: KLDisplacement, params: MaterialParams, grid: PixelGrid | None = None,
                    p: int = F.DEFAULT_ORDER) -> float:
    """``int_omega lam* (div ubar)^2 + mu_f e(ubar):e(ubar)`` (no factor one half)."""
    _check_cracks_on_piece_boundaries(k)
    return _piece_integral(k, lambda s, P: reduced_form(s.strain_ubar(P), params), grid, p)


def bending_energy(k: KLDisplacement, params: MaterialParams, grid: PixelGrid | None = None,
                   p: int = F.DEFAULT_ORDER) -> float:
    """One twelfth of the reduced form applied to ``e(grad u3)``."""
    _check_cracks_on_piece_boundaries(k)
    return _piece_integral(k, lambda s, P: reduced_form(s.strain_grad_u3(P), params), grid, p) / 12.0


def debonding_pixels(k: KLDisplacement, params: MaterialParams, grid: PixelGrid,
                     p: int = F.DEFAULT_ORDER) -> np.ndarray:
    """Per-pixel ``mu_b/2 int |ubar|^2``; pixels must not straddle piece edges."""
    xs, ys = k.rect_breaks()
    for v in xs:
        if abs(v / grid.hx - round(v / grid.hx)) > 1e-9:
            raise F.MisalignedCellsError("piece edge is not a pixel line")
    for v in ys:
        if abs(v / grid.hy - round(v / grid.hy)) > 1e-9:
            raise F.MisalignedCellsError("piece edge is not a pixel line")

    def f(P):
        u = k.ubar(P)
        return 0.5 * params.mu_b * np.sum(u * u, axis=-1)

    return F.pixel_union_integral(f, grid.Lx, grid.Ly, np.ones((grid.nx, grid.ny), bool), p)


def delamination_set(k: KLDisplacement, params: MaterialParams, grid: PixelGrid,
                     u3_tol: float = U3_ZERO_TOL) -> DelaminationRegion:
    """Pixels whose center has ``|ubar| > threshold`` or ``|u3| > u3_tol``."""
    C = grid.centers()
    ub = k.ubar(C)
    mask = np.linalg.norm(ub, axis=-1) > params.threshold
    mask |= np.abs(k.u3(C)) > u3_tol
    return DelaminationRegion(grid, mask)


@dataclass
class E0Breakdown:
    membrane: float
    bending: float
    debonding: float
    kappa_f_term: float
    kappa_b_term: float
    delamination: DelaminationRegion = field(repr=False)

    @property
    def total(self) -> float:
        return self.membrane + self.bending + self.debonding + self.kappa_f_term + self.kappa_b_term

    def to_dict(self) -> dict:
        return {"membrane": self.membrane, "bending": self.bending, "debonding": self.debonding,
                "kappa_f_term": self.kappa_f_term, "kappa_b_term": self.kappa_b_term,
                "total": self.total, "delaminated_area": self.delamination.area}


def E0_breakdown(k: KLDisplacement, params: MaterialParams, grid: PixelGrid | None = None,
                 p: int = F.DEFAULT_ORDER) -> E0Breakdown:
    """Limit energy with debonding, delamination and transverse cracks."""
    grid = grid or PixelGrid(k.Lx, k.Ly, 8, 8)
    delta = delamination_set(k, params, grid)
    I = debonding_pixels(k, params, grid, p)
    deb = float(np.sum(np.where(delta.mask, 0.0, I)))
    return E0Breakdown(
        membrane_energy(k, params, grid, p),
        bending_energy(k, params, grid, p),
        deb,
        params.kappa_f * k.cracks.union_length,
        params.kappa_b * delta.area,
        delta,
    )


def E0_total(k: KLDisplacement, params: MaterialParams, grid: PixelGrid | None = None,
             p: int = F.DEFAULT_ORDER) -> float:
    return E0_breakdown(k, params, grid, p).total


def E0_film(k: KLDisplacement, params: MaterialParams, grid: PixelGrid | None = None,
            p: int = F.DEFAULT_ORDER) -> float:
    """Film-only limit: membrane plus bending plus ``kappa_f`` times crack length."""
    return (membrane_energy(k, params, grid, p) + bending_energy(k, params, grid, p)
            + params.kappa_f * k.cracks.union_length)


def J0_terms(k: KLDisplacement, params: MaterialParams, grid: PixelGrid | None = None,
             p: int = F.DEFAULT_ORDER) -> tuple[float, float]:
    if not k.is_crack_free():
        raise CracksPresentError("the elastic limit is defined for crack-free ubar only")
    grid = grid or PixelGrid(k.Lx, k.Ly, 8, 8)
    mem = membrane_energy(k, params, grid, p)
    deb = _piece_integral(k, lambda s, P: 0.5 * params.mu_b * np.sum(s.ubar(P) ** 2, axis=-1), grid, p)
    return mem, deb


def J0_total(k: KLDisplacement, params: MaterialParams, grid: PixelGrid | None = None,
             p: int = F.DEFAULT_ORDER) -> float:
    """Membrane energy plus ``mu_b/2 int |ubar|^2``."""
    return float(sum(J0_terms(k, params, grid, p)))


# ---------------------------------------------------------------------------
# pointwise relaxation


def pointwise_theta_min(ubar_norm: float, u3_nonzero: bool, params: MaterialParams) -> tuple[float, float]:
    """Minimise ``mu_b/2 (1-eta)|ubar|^2 + kappa_b eta`` over admissible ``eta``.

    When ``u3 != 0`` only ``eta = 1`` is admissible.  Ties go to ``eta = 0``.
    """
    if ubar_norm < 0:
        raise ValueError("|ubar| must be non-negative")
    if u3_nonzero:
        return 1.0, params.kappa_b
    el = 0.5 * params.mu_b * ubar_norm * ubar_norm
    if el > params.kappa_b:
        return 1.0, params.kappa_b
    return 0.0, el


def relaxed_theta_energy(k: KLDisplacement, theta: DelaminationDensity, params: MaterialParams,
                         p: int = F.DEFAULT_ORDER) -> float:
    """``mu_b/2 int (1 - theta)|ubar|^2 + kappa_b int theta`` with pixelwise ``theta``."""
    I = debonding_pixels(k, params, theta.grid, p)
    t = theta.theta
    return float(np.sum((1.0 - t) * I) + params.kappa_b * np.sum(t) * theta.grid.pixel_area)


# ---------------------------------------------------------------------------
# anti-plane profiles


@dataclass
class Profile1D:
    """Piecewise-linear profile on ``(0, L)`` with ``n`` uniform cells.

    ``left[c]`` and ``right[c]`` are the end values of cell ``c``.  A jump
    sits at interior node ``i`` when ``right[i-1] != left[i]``.
    """

    L: float
    left: np.ndarray
    right: np.ndarray

    def __post_init__(self):
        self.left = np.asarray(self.left, dtype=float)
        self.right = np.asarray(self.right, dtype=float)
        if self.left.shape != self.right.shape or self.left.ndim != 1 or len(self.left) < 1:
            raise ValueError("left/right must be equal-length 1D arrays")

    @classmethod
    def continuous(cls, L: float, nodal) -> "Profile1D":
        u = np.asarray(nodal, dtype=float)
        return cls(L, u[:-1].copy(), u[1:].copy())

    @property
    def n(self) -> int:
        return len(self.left)

    @property
    def h(self) -> float:
        return self.L / self.n

    @property
    def jumps(self) -> np.ndarray:
        """Interior node indices carrying a jump."""
        return np.flatnonzero(self.right[:-1] != self.left[1:]) + 1

    def nodes(self) -> np.ndarray:
        return np.linspace(0, self.L, self.n + 1)

    def delamination(self, params: MaterialParams, w=0.0) -> np.ndarray:
        """Per-cell delaminated fraction (0, 1/2 or 1) from the endpoint optimum."""
        w = np.broadcast_to(np.asarray(w, dtype=float), (self.n,))
        a = 0.5 * params.mu_b * (self.left - w) ** 2 > params.kappa_b
        b = 0.5 * params.mu_b * (self.right - w) ** 2 > params.kappa_b
        return 0.5 * (a.astype(float) + b.astype(float))

    def to_dict(self) -> dict:
        return {"L": self.L, "left": self.left.tolist(), "right": self.right.tolist()}


@dataclass
class AntiplaneBreakdown:
    elastic: float
    debonding: float
    kappa_f_term: float
    kappa_b_term: float

    @property
    def total(self) -> float:
        return self.elastic + self.debonding + self.kappa_f_term + self.kappa_b_term

    def to_dict(self) -> dict:
        d = asdict(self)
        d["total"] = self.total
        return d


def antiplane_breakdown(prof: Profile1D, params: MaterialParams, w=0.0) -> AntiplaneBreakdown:
    h = prof.h
    w = np.broadcast_to(np.asarray(w, dtype=float), (prof.n,))
    el = 0.5 * params.mu_f * np.sum((prof.right - prof.left) ** 2) / h
    ga = 0.5 * params.mu_b * (prof.left - w) ** 2
    gb = 0.5 * params.mu_b * (prof.right - w) ** 2
    da, db = ga > params.kappa_b, gb > params.kappa_b
    deb = 0.5 * h * (np.sum(np.where(da, 0.0, ga)) + np.sum(np.where(db, 0.0, gb)))
    kb = 0.5 * h * params.kappa_b * (np.count_nonzero(da) + np.count_nonzero(db))
    kf = params.kappa_f * len(prof.jumps)
    return AntiplaneBreakdown(float(el), float(deb), float(kf), float(kb))


def antiplane_energy(prof: Profile1D, params: MaterialParams, w=0.0) -> float:
    """Discrete anti-plane energy with per-endpoint optimal delamination.

    Per cell: ``mu_f/2 (b-a)^2/h + h (g(a) + g(b))/2`` with
    ``g(u) = min(mu_b (u-w)^2/2, kappa_b)``; each jump costs ``kappa_f``.
    """
    h = prof.h
    w = np.broadcast_to(np.asarray(w, dtype=float), (prof.n,))
    g = lambda u: np.minimum(0.5 * params.mu_b * (u - w) ** 2, params.kappa_b)
    cells = 0.5 * params.mu_f * (prof.right - prof.left) ** 2 / h + 0.5 * h * (g(prof.left) + g(prof.right))
    return float(np.sum(cells) + params.kappa_f * len(prof.jumps))
