"""Crack projections onto the mid-plane, candidate delamination sets and the
four-direction decomposition identity for symmetric 3x3 tensors."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import CrackSurface3D, DelaminationRegion, Facet, PixelGrid

FAMILIES = ("xi+", "xi-", "eta+", "eta-")


@dataclass(frozen=True)
class ObliqueDirection:
    """One of ``xi+-_eps = (+-1, 0, 1/eps)/sqrt2`` and ``eta+-_eps = (0, +-1, 1/eps)/sqrt2``."""

    family: str
    eps: float

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"family must be one of {FAMILIES}")
        if not self.eps > 0:
            raise ValueError("eps must be positive")

    @property
    def vector(self) -> np.ndarray:
        s = -1.0 if self.family.endswith("-") else 1.0
        planar = (s, 0.0) if self.family.startswith("xi") else (0.0, s)
        return np.array([planar[0], planar[1], 1.0 / self.eps]) / math.sqrt(2.0)

    def project(self, pts: np.ndarray) -> np.ndarray:
        """Foot ``x'`` of the line through ``pts`` along this direction on ``x3 = 0``."""
        pts = np.asarray(pts, dtype=float)
        d = self.vector
        t = pts[..., 2] / d[2]
        return pts[..., :2] - t[..., None] * d[:2]


def all_directions(eps: float) -> list[ObliqueDirection]:
    return [ObliqueDirection(f, eps) for f in FAMILIES]


# ---------------------------------------------------------------------------
# rasterisation


def _convex_hull(P: np.ndarray) -> np.ndarray:
    P = np.unique(np.round(P, 14), axis=0)
    if len(P) < 3:
        return P
    P = P[np.lexsort((P[:, 1], P[:, 0]))]

    def cross(a, b):
        return a[0] * b[1] - a[1] * b[0]

    def half(pts):
        h = []
        for q in pts:
            while len(h) >= 2 and cross(h[-1] - h[-2], q - h[-2]) <= 0:
                h.pop()
            h.append(q)
        return h

    lower, upper = half(P), half(P[::-1])
    return np.array(lower[:-1] + upper[:-1])


def rasterize_polygon(poly: np.ndarray, grid: PixelGrid) -> np.ndarray:
    """Pixels whose center lies in the closed convex polygon ``poly``.

    Degenerate (zero-area) polygons cover no pixel.
    """
    mask = np.zeros((grid.nx, grid.ny), bool)
    H = _convex_hull(np.asarray(poly, dtype=float))
    if len(H) < 3:
        return mask
    area = 0.5 * abs(np.sum(H[:, 0] * np.roll(H[:, 1], -1) - np.roll(H[:, 0], -1) * H[:, 1]))
    if area <= 1e-14:
        return mask
    lo = H.min(axis=0)
    hi = H.max(axis=0)
    i0 = max(0, int(math.floor(lo[0] / grid.hx - 0.5)))
    i1 = min(grid.nx - 1, int(math.ceil(hi[0] / grid.hx - 0.5)))
    j0 = max(0, int(math.floor(lo[1] / grid.hy - 0.5)))
    j1 = min(grid.ny - 1, int(math.ceil(hi[1] / grid.hy - 0.5)))
    if i1 < i0 or j1 < j0:
        return mask
    xs = (np.arange(i0, i1 + 1) + 0.5) * grid.hx
    ys = (np.arange(j0, j1 + 1) + 0.5) * grid.hy
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    inside = np.ones(X.shape, bool)
    scale = max(grid.hx, grid.hy)
    for a, b in zip(H, np.roll(H, -1, axis=0)):
        e = b - a
        cr = e[0] * (Y - a[1]) - e[1] * (X - a[0])
        inside &= cr >= -1e-12 * scale * np.linalg.norm(e)
    mask[i0:i1 + 1, j0:j1 + 1] = inside
    return mask


def _clip_halfspace(P: np.ndarray, n: np.ndarray, c: float) -> np.ndarray:
    """Clip a planar polygon in 3D (ordered vertices) to ``n . x <= c``."""
    if len(P) == 0:
        return P
    out = []
    for a, b in zip(P, np.roll(P, -1, axis=0)):
        da, db = a @ n - c, b @ n - c
        if da <= 0:
            out.append(a)
        if (da < 0 < db) or (db < 0 < da):
            t = da / (da - db)
            out.append(a + t * (b - a))
    return np.asarray(out).reshape(-1, 3)


def clip_facet(f: Facet, x0: float, x1: float, y0: float, y1: float) -> np.ndarray:
    """Vertices of a facet clipped to the column ``(x0, x1) x (y0, y1) x R``."""
    P = np.asarray(f.vertices, dtype=float)
    for n, c in (((-1, 0, 0), -x0), ((1, 0, 0), x1), ((0, -1, 0), -y0), ((0, 1, 0), y1)):
        P = _clip_halfspace(P, np.asarray(n, dtype=float), c)
    return P


def orthogonal_projection_mask(c: CrackSurface3D, grid: PixelGrid, layers=("film", "bonding")) -> np.ndarray:
    mask = np.zeros((grid.nx, grid.ny), bool)
    for f in c.facets:
        if f.layer in layers:
            mask |= rasterize_polygon(np.asarray(f.vertices, dtype=float)[:, :2], grid)
    return mask


def orthogonal_projection_area(c: CrackSurface3D, grid: PixelGrid | None = None,
                               exact: bool = False) -> float:
    """Area of the vertical projection of the facets onto omega.

    With ``exact=True`` the sum of ``|nu_3| * area`` is returned (correct for
    non-overlapping projections); otherwise pixel rasterisation is used.
    """
    if exact:
        n, a = c.arrays()
        return float(np.sum(np.abs(n[:, 2]) * a)) if len(a) else 0.0
    grid = grid or PixelGrid(1.0, 1.0, 256, 256)
    return float(orthogonal_projection_mask(c, grid).sum() * grid.pixel_area)


def oblique_projection_set(c: CrackSurface3D, d: ObliqueDirection, grid: PixelGrid,
                           margin: float | None = None) -> DelaminationRegion:
    """Pixels covered by projecting facets along ``d`` onto ``x3 = 0``.

    Facets are first clipped to ``omega_eps x R`` with
    ``omega_eps = {dist(x', boundary) > 2 eps}``.
    """
    margin = 2.0 * d.eps if margin is None else margin
    mask = np.zeros((grid.nx, grid.ny), bool)
    x0, x1, y0, y1 = margin, grid.Lx - margin, margin, grid.Ly - margin
    if x1 <= x0 or y1 <= y0:
        return DelaminationRegion(grid, mask)
    for f in c.facets:
        P = clip_facet(f, x0, x1, y0, y1)
        if len(P) < 3:
            continue
        mask |= rasterize_polygon(d.project(P), grid)
    return DelaminationRegion(grid, mask)


def delamination_candidate(c: CrackSurface3D, eps: float, grid: PixelGrid,
                           oblique: bool = True) -> DelaminationRegion:
    """Union of the four oblique projections and the vertical shadow of film facets.

    With ``oblique=False`` only the vertical projection of all facets is
    used, the orthogonal alternative.
    """
    if not oblique:
        return DelaminationRegion(grid, orthogonal_projection_mask(c, grid))
    mask = orthogonal_projection_mask(c, grid, layers=("film",))
    for d in all_directions(eps):
        mask |= oblique_projection_set(c, d, grid).mask
    return DelaminationRegion(grid, mask)


# ---------------------------------------------------------------------------
# tensor identity


def direction_quad(theta: float) -> tuple[np.ndarray, ...]:
    p, q = math.cos(theta), math.sin(theta)
    s = 1.0 / math.sqrt(2.0)
    return (np.array([p, q, 1.0]) * s, np.array([-p, -q, 1.0]) * s,
            np.array([-q, p, 1.0]) * s, np.array([q, -p, 1.0]) * s)


def decomposition_sides(A: np.ndarray, theta) -> tuple[np.ndarray, np.ndarray]:
    """Both sides of the identity for arrays of symmetric ``A`` (``(..., 3, 3)``).

    Left: ``|A|^2``.  Right: the four directional squares minus half the
    squared trace plus the five remainder squares.
    """
    A = np.asarray(A, dtype=float)
    th = np.asarray(theta, dtype=float)
    p, q = np.cos(th), np.sin(th)
    s = 1.0 / math.sqrt(2.0)
    one = np.ones_like(p)
    dirs = [np.stack([p, q, one], -1) * s, np.stack([-p, -q, one], -1) * s,
            np.stack([-q, p, one], -1) * s, np.stack([q, -p, one], -1) * s]
    lhs = np.einsum("...ij,...ij->...", A, A)
    tr = A[..., 0, 0] + A[..., 1, 1] + A[..., 2, 2]
    rhs = -0.5 * tr * tr
    for v in dirs:
        rhs = rhs + np.einsum("...i,...ij,...j->...", v, A, v) ** 2
    a11, a22, a12, a33 = A[..., 0, 0], A[..., 1, 1], A[..., 0, 1], A[..., 2, 2]
    rhs = rhs + 0.5 * (q * q * a11 + p * p * a22 - 2 * p * q * a12) ** 2
    rhs = rhs + 0.5 * (p * p * a11 + q * q * a22 + 2 * p * q * a12) ** 2
    rhs = rhs + 2 * ((p * p - q * q) * a12 + p * q * (a22 - a11)) ** 2
    rhs = rhs + 0.5 * (a33 * a33 + (a11 + a22) ** 2)
    return lhs, rhs


def tensor_decomposition_residual(A: np.ndarray, theta) -> np.ndarray:
    """``| |A|^2 - RHS |``; rejects non-symmetric input."""
    A = np.asarray(A, dtype=float)
    if A.shape[-2:] != (3, 3):
        raise ValueError("A must be 3x3")
    if not np.allclose(A, np.swapaxes(A, -1, -2), rtol=0, atol=1e-14 * max(1.0, float(np.abs(A).max(initial=0)))):
        raise ValueError("A must be symmetric")
    lhs, rhs = decomposition_sides(A, theta)
    return np.abs(lhs - rhs)


def random_symmetric(rng: np.random.Generator, n: int, scale: float = 1.0) -> np.ndarray:
    B = rng.normal(scale=scale, size=(n, 3, 3))
    return 0.5 * (B + np.swapaxes(B, -1, -2))


# ---------------------------------------------------------------------------
# export


def to_pgm(region: DelaminationRegion) -> bytes:
    """Binary portable grey-map, row 0 at the top (largest ``x2``)."""
    m = region.mask
    img = np.where(m.T[::-1], 255, 0).astype(np.uint8)
    header = f"P5\n{m.shape[0]} {m.shape[1]}\n255\n".encode()
    return header + img.tobytes()


def from_pgm(data: bytes, grid: PixelGrid) -> DelaminationRegion:
    parts = data.split(b"\n", 3)
    w, h = map(int, parts[1].split())
    img = np.frombuffer(parts[3], dtype=np.uint8).reshape(h, w)
    return DelaminationRegion(grid, (img[::-1].T > 127))
