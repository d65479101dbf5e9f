"""Core value types: materials, layered domains, cracks, delamination sets and
Kirchhoff-Love reduced displacements."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from . import fields as F

U3_ZERO_TOL = 1e-9
LAYERS = ("film", "bonding")


# ---------------------------------------------------------------------------
# material and domain


@dataclass(frozen=True)
class MaterialParams:
    """Dimensionless Lame moduli, toughnesses and the sup-norm bound.

    Film moduli are ``(lam_f, mu_f)``; the bonding layer carries
    ``(lam_b, mu_b)`` before the ``eps**2`` scaling.
    """

    lam_f: float = 1.0
    mu_f: float = 1.0
    lam_b: float = 1.0
    mu_b: float = 1.0
    kappa_f: float = 1.0
    kappa_b: float = 1.0
    M: float = 10.0

    def __post_init__(self):
        for name in ("mu_f", "mu_b", "kappa_f", "kappa_b", "M"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be positive, got {v}")
        for name in ("lam_f", "lam_b"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0):
                raise ValueError(f"{name} must be non-negative, got {v}")

    @property
    def bulk_lb_applicable(self) -> bool:
        return self.lam_b >= self.mu_b

    @property
    def threshold(self) -> float:
        """Debonding threshold ``sqrt(2 kappa_b / mu_b)``."""
        return math.sqrt(2.0 * self.kappa_b / self.mu_b)

    @property
    def lam_star(self) -> float:
        """Reduced plane-stress modulus ``lam_f mu_f / (lam_f + 2 mu_f)``."""
        return self.lam_f * self.mu_f / (self.lam_f + 2.0 * self.mu_f)

    @property
    def h_ratio(self) -> float:
        """``lam_f / (lam_f + 2 mu_f)``, the corrector coefficient."""
        return self.lam_f / (self.lam_f + 2.0 * self.mu_f)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "MaterialParams":
        return cls(**{k: float(v) for k, v in d.items()})


@dataclass(frozen=True)
class PixelGrid:
    Lx: float = 1.0
    Ly: float = 1.0
    nx: int = 8
    ny: int = 8

    @property
    def hx(self) -> float:
        return self.Lx / self.nx

    @property
    def hy(self) -> float:
        return self.Ly / self.ny

    @property
    def pixel_area(self) -> float:
        return self.hx * self.hy

    def centers(self) -> np.ndarray:
        """Pixel centers, shape ``(nx, ny, 2)``."""
        xs = (np.arange(self.nx) + 0.5) * self.hx
        ys = (np.arange(self.ny) + 0.5) * self.hy
        X, Y = np.meshgrid(xs, ys, indexing="ij")
        return np.stack([X, Y], axis=-1)

    def refine(self, k: int) -> "PixelGrid":
        return PixelGrid(self.Lx, self.Ly, self.nx * k, self.ny * k)


@dataclass(frozen=True)
class LayeredDomain:
    """``omega = (0, Lx) x (0, Ly)`` with film, bonding and substrate layers.

    ``nx, ny`` are the planar pixel and quadrature cell counts, ``nz`` the
    cells per unit layer thickness, ``p`` the Gauss order per axis.
    """

    Lx: float = 1.0
    Ly: float = 1.0
    nx: int = 8
    ny: int = 8
    nz: int = 2
    p: int = F.DEFAULT_ORDER
    pz: int | None = None

    def __post_init__(self):
        if self.Lx <= 0 or self.Ly <= 0:
            raise ValueError("domain lengths must be positive")
        if min(self.nx, self.ny, self.nz, self.p, self.pz or 1) < 1:
            raise ValueError("resolutions must be >= 1")

    @property
    def orders(self) -> tuple:
        return (self.p, self.p, self.pz or self.p)

    @property
    def grid(self) -> PixelGrid:
        return PixelGrid(self.Lx, self.Ly, self.nx, self.ny)

    @property
    def area(self) -> float:
        return self.Lx * self.Ly

    def layer_box(self, layer: str) -> tuple:
        z = {"film": (0.0, 1.0), "bonding": (-1.0, 0.0), "substrate": (-2.0, -1.0)}[layer]
        return (0.0, 0.0, z[0]), (self.Lx, self.Ly, z[1])

    def box3(self) -> tuple:
        return ((0.0, self.Lx), (0.0, self.Ly), (-2.0, 1.0))

    def with_cells(self, nx: int, ny: int, nz: int | None = None, p: int | None = None,
                   pz: int | None = None) -> "LayeredDomain":
        return LayeredDomain(self.Lx, self.Ly, nx, ny, nz or self.nz, p or self.p, pz or self.pz)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "LayeredDomain":
        kw = dict(d)
        for k in ("nx", "ny", "nz", "p", "pz"):
            if kw.get(k) is not None:
                kw[k] = int(kw[k])
        return cls(**kw)


# ---------------------------------------------------------------------------
# cracks


@dataclass(frozen=True)
class Facet:
    """Planar polygonal facet with a layer tag.

    The unit normal, area and centroid are derived from the vertices.
    """

    vertices: tuple
    layer: str

    def __post_init__(self):
        if self.layer not in LAYERS:
            raise ValueError(f"unknown layer {self.layer!r}")
        V = np.asarray(self.vertices, dtype=float)
        if V.ndim != 2 or V.shape[1] != 3 or V.shape[0] < 3:
            raise ValueError("facet needs at least three 3D vertices")
        if self.area <= 0:
            raise ValueError("facet area must be positive")
        z0, z1 = (0.0, 1.0) if self.layer == "film" else (-1.0, 0.0)
        if V[:, 2].min() < z0 - 1e-12 or V[:, 2].max() > z1 + 1e-12:
            raise ValueError("facet lies outside its tagged layer")
        if self.layer == "film" and np.all(np.abs(V[:, 2]) <= 1e-12):
            raise ValueError("the interface x3 = 0 belongs to the bonding layer")

    @property
    def _vec_area(self) -> np.ndarray:
        V = np.asarray(self.vertices, dtype=float)
        c = V[0]
        s = np.zeros(3)
        for a, b in zip(V[1:-1], V[2:]):
            s += np.cross(a - c, b - c)
        return 0.5 * s

    @property
    def area(self) -> float:
        return float(np.linalg.norm(self._vec_area))

    @property
    def normal(self) -> np.ndarray:
        v = self._vec_area
        return v / np.linalg.norm(v)

    @property
    def centroid(self) -> np.ndarray:
        return np.asarray(self.vertices, dtype=float).mean(axis=0)

    @classmethod
    def vertical(cls, a, b, z0: float, z1: float, layer: str) -> "Facet":
        """Rectangle ``segment(a, b) x (z0, z1)``."""
        a, b = tuple(map(float, a)), tuple(map(float, b))
        return cls(((a[0], a[1], z0), (b[0], b[1], z0), (b[0], b[1], z1), (a[0], a[1], z1)), layer)

    @classmethod
    def horizontal(cls, x0, x1, y0, y1, z: float, layer: str) -> "Facet":
        return cls(((x0, y0, z), (x1, y0, z), (x1, y1, z), (x0, y1, z)), layer)

    @classmethod
    def from_normal(cls, normal, area: float, centroid, layer: str) -> "Facet":
        """Square facet with the given unit normal, area and centroid."""
        n = np.asarray(normal, dtype=float)
        n = n / np.linalg.norm(n)
        t = np.array([1.0, 0.0, 0.0]) if abs(n[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
        t1 = np.cross(n, t)
        t1 /= np.linalg.norm(t1)
        t2 = np.cross(n, t1)
        s = math.sqrt(area) / 2
        c = np.asarray(centroid, dtype=float)
        V = [c - s * t1 - s * t2, c + s * t1 - s * t2, c + s * t1 + s * t2, c - s * t1 + s * t2]
        return cls(tuple(tuple(map(float, v)) for v in V), layer)

    def to_dict(self) -> dict:
        return {"vertices": [list(map(float, v)) for v in self.vertices], "layer": self.layer}

    @classmethod
    def from_dict(cls, d: dict) -> "Facet":
        return cls(tuple(tuple(map(float, v)) for v in d["vertices"]), d["layer"])


@dataclass(frozen=True)
class CrackSurface3D:
    facets: tuple = ()

    def __add__(self, other: "CrackSurface3D") -> "CrackSurface3D":
        return CrackSurface3D(tuple(self.facets) + tuple(other.facets))

    def __len__(self):
        return len(self.facets)

    def layer(self, name: str) -> "CrackSurface3D":
        return CrackSurface3D(tuple(f for f in self.facets if f.layer == name))

    def arrays(self) -> tuple[np.ndarray, np.ndarray]:
        """Normals ``(n, 3)`` and areas ``(n,)``."""
        if not self.facets:
            return np.zeros((0, 3)), np.zeros(0)
        return (np.array([f.normal for f in self.facets]),
                np.array([f.area for f in self.facets]))

    def to_dict(self) -> dict:
        return {"facets": [f.to_dict() for f in self.facets]}

    @classmethod
    def from_dict(cls, d: dict) -> "CrackSurface3D":
        return cls(tuple(Facet.from_dict(f) for f in d.get("facets", [])))


@dataclass(frozen=True)
class PlanarCrackSet:
    """Polylines in omega; ``length`` is the plain sum of segment lengths."""

    polylines: tuple = ()

    def __post_init__(self):
        for seg in self.segments():
            if np.linalg.norm(seg[1] - seg[0]) <= 0:
                raise ValueError("crack segments must have positive length")

    def segments(self) -> np.ndarray:
        segs = []
        for line in self.polylines:
            P = np.asarray(line, dtype=float)
            segs.extend(np.stack([P[:-1], P[1:]], axis=1))
        return np.asarray(segs).reshape(-1, 2, 2)

    @property
    def length(self) -> float:
        s = self.segments()
        return float(np.linalg.norm(s[:, 1] - s[:, 0], axis=-1).sum()) if len(s) else 0.0

    @property
    def union_length(self) -> float:
        """H1 of the union: collinear overlapping segments are merged."""
        s = self.segments()
        if not len(s):
            return 0.0
        groups: dict = {}
        for a, b in s:
            d = b - a
            d = d / np.linalg.norm(d)
            if d[0] < -1e-12 or (abs(d[0]) <= 1e-12 and d[1] < 0):
                d = -d
            off = d[0] * a[1] - d[1] * a[0]
            key = (round(d[0], 9), round(d[1], 9), round(off, 9))
            t0, t1 = sorted((float(a @ d), float(b @ d)))
            groups.setdefault(key, []).append((t0, t1))
        total = 0.0
        for iv in groups.values():
            iv.sort()
            cs, ce = iv[0]
            for a, b in iv[1:]:
                if a <= ce + 1e-12:
                    ce = max(ce, b)
                else:
                    total += ce - cs
                    cs, ce = a, b
            total += ce - cs
        return total

    def distance(self, pts: np.ndarray) -> np.ndarray:
        """Distance from planar points ``(..., 2)`` to the crack set."""
        pts = np.asarray(pts, dtype=float)
        s = self.segments()
        out = np.full(pts.shape[:-1], np.inf)
        for a, b in s:
            d = b - a
            t = np.clip(((pts - a) @ d) / (d @ d), 0.0, 1.0)
            out = np.minimum(out, np.linalg.norm(pts - a - t[..., None] * d, axis=-1))
        return out

    def to_dict(self) -> dict:
        return {"polylines": [[list(map(float, p)) for p in line] for line in self.polylines]}

    @classmethod
    def from_dict(cls, d) -> "PlanarCrackSet":
        lines = d["polylines"] if isinstance(d, dict) else d
        return cls(tuple(tuple(tuple(map(float, p)) for p in line) for line in lines))


# ---------------------------------------------------------------------------
# delamination sets


@dataclass(frozen=True)
class DelaminationRegion:
    """Pixel subset of omega.

    ``perimeter`` counts pixel edges separating selected from unselected
    pixels inside omega; edges on the outer boundary are not part of the
    reduced boundary in omega and are not counted.
    """

    grid: PixelGrid
    mask: np.ndarray = field(compare=False)

    def __post_init__(self):
        m = np.asarray(self.mask, dtype=bool)
        if m.shape != (self.grid.nx, self.grid.ny):
            raise ValueError("mask shape does not match the pixel grid")
        object.__setattr__(self, "mask", m)

    @classmethod
    def empty(cls, grid: PixelGrid) -> "DelaminationRegion":
        return cls(grid, np.zeros((grid.nx, grid.ny), bool))

    @classmethod
    def full(cls, grid: PixelGrid) -> "DelaminationRegion":
        return cls(grid, np.ones((grid.nx, grid.ny), bool))

    @property
    def count(self) -> int:
        return int(self.mask.sum())

    @property
    def area(self) -> float:
        return self.count * self.grid.pixel_area

    @property
    def perimeter(self) -> float:
        m = self.mask.astype(np.int8)
        vx = np.count_nonzero(np.diff(m, axis=0))
        vy = np.count_nonzero(np.diff(m, axis=1))
        return vx * self.grid.hy + vy * self.grid.hx

    def boundary_edges(self) -> list[tuple]:
        """Interior pixel edges of the boundary as planar segments."""
        g, m = self.grid, self.mask
        out = []
        for i, j in zip(*np.nonzero(m[:-1, :] != m[1:, :])):
            x = (i + 1) * g.hx
            out.append(((x, j * g.hy), (x, (j + 1) * g.hy)))
        for i, j in zip(*np.nonzero(m[:, :-1] != m[:, 1:])):
            y = (j + 1) * g.hy
            out.append(((i * g.hx, y), ((i + 1) * g.hx, y)))
        return out

    def __or__(self, other: "DelaminationRegion") -> "DelaminationRegion":
        return DelaminationRegion(self.grid, self.mask | other.mask)

    def __eq__(self, other):
        return (isinstance(other, DelaminationRegion) and self.grid == other.grid
                and np.array_equal(self.mask, other.mask))

    def __hash__(self):
        return hash((self.grid, self.mask.tobytes()))

    def to_dict(self) -> dict:
        ii, jj = np.nonzero(self.mask)
        return {"grid": asdict(self.grid), "pixels": [[int(i), int(j)] for i, j in zip(ii, jj)]}

    @classmethod
    def from_dict(cls, d: dict) -> "DelaminationRegion":
        g = PixelGrid(**d["grid"])
        m = np.zeros((g.nx, g.ny), bool)
        for i, j in d["pixels"]:
            m[i, j] = True
        return cls(g, m)


@dataclass(frozen=True)
class DelaminationDensity:
    grid: PixelGrid
    theta: np.ndarray = field(compare=False)

    def __post_init__(self):
        t = np.asarray(self.theta, dtype=float)
        if t.shape != (self.grid.nx, self.grid.ny):
            raise ValueError("density shape does not match the pixel grid")
        if np.any(t < 0) or np.any(t > 1) or not np.all(np.isfinite(t)):
            raise ValueError("density must lie in [0, 1]")
        object.__setattr__(self, "theta", t)

    @classmethod
    def indicator(cls, region: DelaminationRegion) -> "DelaminationDensity":
        return cls(region.grid, region.mask.astype(float))

    def to_dict(self) -> dict:
        return {"grid": asdict(self.grid), "theta": self.theta.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "DelaminationDensity":
        return cls(PixelGrid(**d["grid"]), np.asarray(d["theta"], dtype=float))


# ---------------------------------------------------------------------------
# reduced displacements


def _planar_expr(e) -> F.Expr:
    e = F.as_expr(e)
    return e


@dataclass(frozen=True)
class KLPiece:
    """Analytic data on one rectangle ``(x0, x1) x (y0, y1)`` of omega.

    ``grad_u3`` defaults to the symbolic gradient of ``u3``.
    """

    rect: tuple
    ubar: tuple
    u3: F.Expr = F.ZERO
    grad_u3: tuple | None = None

    def __post_init__(self):
        object.__setattr__(self, "rect", tuple(map(float, self.rect)))
        object.__setattr__(self, "ubar", tuple(_planar_expr(e) for e in self.ubar))
        object.__setattr__(self, "u3", _planar_expr(self.u3))
        if self.grad_u3 is None:
            g = (self.u3.diff(0), self.u3.diff(1))
        else:
            g = tuple(_planar_expr(e) for e in self.grad_u3)
        object.__setattr__(self, "grad_u3", g)
        x0, x1, y0, y1 = self.rect
        if not (x1 > x0 and y1 > y0):
            raise ValueError("piece rectangle must have positive size")
        for e in self.exprs():
            if e.diff(2) != F.ZERO:
                raise ValueError("planar data must not depend on x3")

    def exprs(self):
        return (*self.ubar, self.u3, *self.grad_u3)

    def contains(self, xp: np.ndarray) -> np.ndarray:
        x0, x1, y0, y1 = self.rect
        t = 1e-12
        return ((xp[..., 0] >= x0 - t) & (xp[..., 0] <= x1 + t)
                & (xp[..., 1] >= y0 - t) & (xp[..., 1] <= y1 + t))

    def to_dict(self) -> dict:
        return {"rect": list(self.rect), "ubar": [e.to_text() for e in self.ubar],
                "u3": self.u3.to_text(), "grad_u3": [e.to_text() for e in self.grad_u3]}

    @classmethod
    def from_dict(cls, d: dict) -> "KLPiece":
        return cls(tuple(d["rect"]), tuple(d["ubar"]), d.get("u3", "0"),
                   tuple(d["grad_u3"]) if d.get("grad_u3") is not None else None)


def _pad3(xp: np.ndarray) -> np.ndarray:
    xp = np.asarray(xp, dtype=float)
    return np.concatenate([xp, np.zeros(xp.shape[:-1] + (1,))], axis=-1)


@dataclass(frozen=True)
class KLDisplacement:
    """Kirchhoff-Love reduced state ``(ubar, u3)`` on omega with planar cracks.

    The induced film field is
    ``u_a = ubar_a + (1/2 - x3) d_a u3``, ``u_3 = u3``.
    """

    pieces: tuple
    cracks: PlanarCrackSet = PlanarCrackSet()
    Lx: float = 1.0
    Ly: float = 1.0

    @classmethod
    def single(cls, ubar, u3="0", cracks=PlanarCrackSet(), Lx=1.0, Ly=1.0, grad_u3=None):
        return cls((KLPiece((0.0, Lx, 0.0, Ly), tuple(ubar), u3, grad_u3),), cracks, Lx, Ly)

    @classmethod
    def zero(cls, Lx=1.0, Ly=1.0):
        return cls.single(("0", "0"), "0", Lx=Lx, Ly=Ly)

    def _eval(self, xp, which) -> np.ndarray:
        xp = np.asarray(xp, dtype=float)
        x3 = _pad3(xp)
        out = None
        done = np.zeros(xp.shape[:-1], bool)
        for pc in self.pieces:
            sel = pc.contains(xp) & ~done
            if not sel.any():
                continue
            exprs = which(pc)
            vals = np.stack([e.evaluate(x3[sel]) for e in exprs], axis=-1)
            if out is None:
                out = np.zeros(xp.shape[:-1] + (len(exprs),))
            out[sel] = vals
            done |= sel
        if not done.all():
            raise F.DomainError("point outside omega")
        return out

    def ubar(self, xp) -> np.ndarray:
        return self._eval(xp, lambda p: p.ubar)

    def u3(self, xp) -> np.ndarray:
        return self._eval(xp, lambda p: (p.u3,))[..., 0]

    def grad_u3(self, xp) -> np.ndarray:
        return self._eval(xp, lambda p: p.grad_u3)

    def strain_ubar(self, xp) -> np.ndarray:
        """Planar symmetric gradient of ``ubar`` off the cracks, ``(..., 2, 2)``."""
        J = self._eval(xp, lambda p: tuple(e.diff(j) for e in p.ubar for j in range(2)))
        J = J.reshape(J.shape[:-1] + (2, 2))
        return 0.5 * (J + np.swapaxes(J, -1, -2))

    def strain_grad_u3(self, xp) -> np.ndarray:
        """Symmetric gradient of the stored ``grad u3`` field, ``(..., 2, 2)``."""
        J = self._eval(xp, lambda p: tuple(e.diff(j) for e in p.grad_u3 for j in range(2)))
        J = J.reshape(J.shape[:-1] + (2, 2))
        return 0.5 * (J + np.swapaxes(J, -1, -2))

    def div_ubar(self, xp) -> np.ndarray:
        e = self.strain_ubar(xp)
        return e[..., 0, 0] + e[..., 1, 1]

    def rect_breaks(self) -> tuple:
        xs = sorted({v for p in self.pieces for v in p.rect[:2]})
        ys = sorted({v for p in self.pieces for v in p.rect[2:]})
        return tuple(xs), tuple(ys)

    def is_crack_free(self) -> bool:
        return len(self.cracks.segments()) == 0

    def u3_is_zero(self, n: int = 17) -> bool:
        xs = np.linspace(0, self.Lx, n)
        ys = np.linspace(0, self.Ly, n)
        X, Y = np.meshgrid(xs, ys, indexing="ij")
        P = np.stack([X, Y], axis=-1)
        return bool(np.all(np.abs(self.u3(P)) <= U3_ZERO_TOL)
                    and np.all(np.abs(self.grad_u3(P)) <= U3_ZERO_TOL))

    def to_dict(self) -> dict:
        return {"pieces": [p.to_dict() for p in self.pieces], "cracks": self.cracks.to_dict(),
                "Lx": self.Lx, "Ly": self.Ly}

    @classmethod
    def from_dict(cls, d: dict) -> "KLDisplacement":
        return cls(tuple(KLPiece.from_dict(p) for p in d["pieces"]),
                   PlanarCrackSet.from_dict(d.get("cracks", {"polylines": []})),
                   float(d.get("Lx", 1.0)), float(d.get("Ly", 1.0)))


@dataclass
class KLReport:
    ok: bool
    violations: list


def validate_kl(k: KLDisplacement, params: MaterialParams | None = None,
                grid: PixelGrid | None = None, fd_step: float = 1e-5,
                fd_tol: float = 1e-6) -> KLReport:
    """Check coverage, gradient consistency off cracks, and the sup bound."""
    grid = grid or PixelGrid(k.Lx, k.Ly, 16, 16)
    C = grid.centers().reshape(-1, 2)
    out = []
    area = sum((p.rect[1] - p.rect[0]) * (p.rect[3] - p.rect[2]) for p in k.pieces)
    if abs(area - k.Lx * k.Ly) > 1e-9 * k.Lx * k.Ly:
        out.append("pieces do not tile omega")
    try:
        k.ubar(C)
    except F.DomainError:
        out.append("pieces do not cover omega")
        return KLReport(False, out)
    far = k.cracks.distance(C) > 2 * fd_step if not k.is_crack_free() else np.ones(len(C), bool)
    for idx, pc in enumerate(k.pieces):
        x0, x1, y0, y1 = pc.rect
        inner = far & (C[:, 0] > x0 + 2 * fd_step) & (C[:, 0] < x1 - 2 * fd_step)
        inner &= (C[:, 1] > y0 + 2 * fd_step) & (C[:, 1] < y1 - 2 * fd_step)
        P = _pad3(C[inner])
        if not len(P):
            continue
        g = np.stack([e.evaluate(P) for e in pc.grad_u3], axis=-1)
        for a in range(2):
            dx = np.zeros(3)
            dx[a] = fd_step
            fd = (pc.u3.evaluate(P + dx) - pc.u3.evaluate(P - dx)) / (2 * fd_step)
            err = np.abs(fd - g[:, a]) / np.maximum(1.0, np.abs(g[:, a]))
            if np.any(err > fd_tol):
                out.append(f"grad u3 inconsistent with u3 on piece {idx} (max err {err.max():.3g})")
    if params is not None:
        sup = kl_sup_norm(k)
        if sup > params.M:
            out.append(f"induced displacement sup {sup:.6g} exceeds M = {params.M}")
    return KLReport(not out, out)


def kl_sup_norm(k: KLDisplacement, n: int = 21) -> float:
    """Sampled sup of the induced film field on a lattice of ``n**2`` columns and 5 heights."""
    xs = np.linspace(0, k.Lx, n)
    ys = np.linspace(0, k.Ly, n)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    P = np.stack([X, Y], axis=-1).reshape(-1, 2)
    ub, u3, g = k.ubar(P), k.u3(P), k.grad_u3(P)
    best = 0.0
    for z in np.linspace(0, 1, 5):
        ua = ub + (0.5 - z) * g
        best = max(best, float(np.max(np.linalg.norm(np.column_stack([ua, u3]), axis=-1))))
    return best


@dataclass(frozen=True)
class SubstrateLoad:
    """Planar substrate displacement ``w`` given by two expressions in ``x1, x2``."""

    w: tuple = (F.ZERO, F.ZERO)

    def __post_init__(self):
        object.__setattr__(self, "w", tuple(F.as_expr(e) for e in self.w))

    def value(self, xp) -> np.ndarray:
        x3 = _pad3(xp)
        v = np.stack([e.evaluate(x3) for e in self.w], axis=-1)
        if not np.all(np.isfinite(v)):
            raise F.DomainError("substrate load is not finite")
        return v

    def to_dict(self) -> dict:
        return {"w": [e.to_text() for e in self.w]}

    @classmethod
    def from_dict(cls, d: dict) -> "SubstrateLoad":
        return cls(tuple(d["w"]))


# ---------------------------------------------------------------------------
# 3D induced fields


class KLFilmField(F.Field):
    """Film field induced by one KL piece (smooth inside the piece)."""

    def __init__(self, piece: KLPiece):
        self.piece = piece
        ub1, ub2 = piece.ubar
        g1, g2 = piece.grad_u3
        half = F.Const(0.5) - F.Var(2)
        self.vf = F.VectorField((ub1 + half * g1, ub2 + half * g2, piece.u3),
                                ((piece.rect[0], piece.rect[1]), (piece.rect[2], piece.rect[3]), (-2.0, 1.0)))

    def value(self, x):
        return self.vf.value(x)

    def jacobian(self, x):
        # the stored grad u3 is used for d_a u3, matching the KL structure even
        # where it is supplied rather than derived
        J = self.vf.jacobian(x)
        x = np.asarray(x, dtype=float)
        g = np.stack([e.evaluate(x) for e in self.piece.grad_u3], axis=-1)
        J[..., 2, 0] = g[..., 0]
        J[..., 2, 1] = g[..., 1]
        return J


def crack_facets(cracks: PlanarCrackSet, z0: float = 0.0, z1: float = 1.0,
                 layer: str = "film") -> CrackSurface3D:
    return CrackSurface3D(tuple(Facet.vertical(a, b, z0, z1, layer) for a, b in cracks.segments()))


def induce_3d(k: KLDisplacement, params: MaterialParams | None = None) -> F.PiecewiseField:
    """Film field ``ubar_a + (1/2 - x3) d_a u3, u3`` on ``omega x (0, 1)``.

    Jump facets are the planar cracks times ``(0, 1)``.  Raises
    ``ValueError`` when the sampled sup exceeds ``params.M``.
    """
    if params is not None:
        sup = kl_sup_norm(k)
        if sup > params.M:
            raise ValueError(f"induced field sup {sup:.6g} exceeds M = {params.M}")
    pieces = []
    for pc in k.pieces:
        x0, x1, y0, y1 = pc.rect
        pieces.append((F.Box((x0, y0, 0.0), (x1, y1, 1.0)), KLFilmField(pc)))
    return F.PiecewiseField(pieces, crack_facets(k.cracks), F.Box((0, 0, 0), (k.Lx, k.Ly, 1.0)))


@dataclass
class AdmissibilityReport:
    admissible: bool
    sup_norm: float
    substrate_max: float
    violations: list

    def to_dict(self) -> dict:
        return asdict(self)


def validate_admissible(u: F.Field, M: float, Lx: float = 1.0, Ly: float = 1.0,
                        n: int = 22, include_substrate: bool = True) -> AdmissibilityReport:
    """Sampled admissibility: zero on the substrate and sup-norm at most ``M``.

    Uses an ``n x n x n`` lattice per layer (about ``10**4`` points at the
    default).
    """
    xs = np.linspace(0, Lx, n)
    ys = np.linspace(0, Ly, n)
    viol = []
    sup = 0.0
    sub = 0.0
    layers = [(0.0, 1.0), (-1.0, 0.0)]
    for z0, z1 in layers:
        zs = np.linspace(z0, z1, n)
        P = np.stack(np.meshgrid(xs, ys, zs, indexing="ij"), axis=-1).reshape(-1, 3)
        try:
            v = u.value(P)
        except F.DomainError:
            continue
        sup = max(sup, float(np.max(np.linalg.norm(v, axis=-1))))
    if include_substrate:
        zs = np.linspace(-2.0, -1.0, n)[:-1]
        P = np.stack(np.meshgrid(xs, ys, zs, indexing="ij"), axis=-1).reshape(-1, 3)
        try:
            sub = float(np.max(np.abs(u.value(P))))
        except F.DomainError:
            sub = 0.0
            viol.append("field undefined on the substrate")
    if sup > M * (1 + 1e-12):
        viol.append(f"sup norm {sup:.6g} exceeds M = {M}")
    if sub > 0.0:
        viol.append(f"field is nonzero on the substrate (max {sub:.3g})")
    return AdmissibilityReport(not viol, sup, sub, viol)


# ---------------------------------------------------------------------------
# configuration


def dumps(obj) -> str:
    """Canonical JSON for any value type exposing ``to_dict``."""
    return json.dumps(obj.to_dict() if hasattr(obj, "to_dict") else obj, sort_keys=True,
                      separators=(",", ":"))


SCHEMA = {
    "material": set(MaterialParams.__dataclass_fields__),
    "domain": {"Lx", "Ly"},
    "resolution": {"nx", "ny", "nz", "p", "pz"},
    "sweep": {"eps", "cases"},
    "solver": {"n", "n_u", "U", "L", "bc", "w", "tol", "maxiter", "grid", "load", "nx", "ny"},
}


class ConfigError(ValueError):
    pass


@dataclass
class Config:
    material: MaterialParams = field(default_factory=MaterialParams)
    domain: LayeredDomain = field(default_factory=LayeredDomain)
    sweep: dict = field(default_factory=dict)
    solver: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        dom = self.domain.to_dict()
        res = {k: dom.pop(k) for k in SCHEMA["resolution"]}
        return {"material": self.material.to_dict(), "domain": dom, "resolution": res,
                "sweep": self.sweep, "solver": self.solver, **self.extra}


def load_config(source) -> Config:
    """Build a ``Config`` from a JSON file path or a mapping.

    Blocks: ``material``, ``domain`` (Lx, Ly), ``resolution`` (nx, ny, nz, p),
    ``sweep`` and ``solver``.  Other top-level keys (``field``, ``kl``,
    ``facets``) are kept verbatim for the commands that use them.
    """
    if isinstance(source, (dict, list)):
        d = source
    else:
        with open(source, encoding="utf-8") as fh:
            try:
                d = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"invalid JSON: {exc}") from exc
    if not isinstance(d, dict):
        raise ConfigError("configuration must be a JSON object")
    for block, keys in SCHEMA.items():
        sub = d.get(block, {})
        if not isinstance(sub, dict):
            raise ConfigError(f"block {block!r} must be an object")
        bad = set(sub) - keys
        if bad:
            raise ConfigError(f"unknown keys in {block!r}: {sorted(bad)}")
    try:
        mat = MaterialParams.from_dict(d.get("material", {}))
        dom = LayeredDomain.from_dict({**d.get("domain", {}), **d.get("resolution", {})})
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    extra = {k: v for k, v in d.items() if k not in SCHEMA}
    return Config(mat, dom, dict(d.get("sweep", {})), dict(d.get("solver", {})), extra)
