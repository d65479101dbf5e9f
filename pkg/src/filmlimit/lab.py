"""Microstructure counterexample, lower-bound audits and configured
recovery families."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import energy2d, energy3d
from . import fields as F
from .geometry import delamination_candidate
from .model import (CrackSurface3D, DelaminationDensity, Facet, KLDisplacement, KLPiece,
                    LayeredDomain, MaterialParams, PixelGrid, PlanarCrackSet)

CBAR = 8.0 / 3.0
PI = "3.141592653589793"


class HypothesisError(ValueError):
    """Audit hypothesis (such as ``lam_b >= mu_b``) not satisfied."""


# ---------------------------------------------------------------------------
# microstructure profiles


@dataclass(frozen=True)
class MicroProfile:
    """Bonding-layer profile ``v(s, t)`` on ``(0, 2) x (0, 1)`` with ``v(s, 0) = v(s, 1) = 0``.

    ``kind`` is ``"fourier"`` (exact Euler-Lagrange modes truncated at ``K``),
    ``"separable"`` (``v = -s phi(t)`` with the optimal ``phi``) or ``"zero"``.
    """

    kind: str = "fourier"
    K: int = 7
    cbar: float = CBAR

    def __post_init__(self):
        if self.kind not in ("fourier", "separable", "zero"):
            raise ValueError(f"unknown profile kind {self.kind!r}")
        if self.K < 1:
            raise ValueError("K must be >= 1")

    @property
    def modes(self):
        ks = np.arange(1, self.K + 1, 2, dtype=float)
        a = ks * math.pi * math.sqrt(2.0)
        b = -4.0 / (ks * math.pi)
        return ks, a, b / (a * np.cosh(a))

    def phi(self, t):
        """Optimal separable profile ``1 - cosh((t - 1/2)/sqrt(c)) / cosh(1/(2 sqrt(c)))``."""
        r = math.sqrt(self.cbar)
        return 1.0 - np.cosh((np.asarray(t) - 0.5) / r) / math.cosh(0.5 / r)

    def dphi(self, t):
        r = math.sqrt(self.cbar)
        return -np.sinh((np.asarray(t) - 0.5) / r) / (r * math.cosh(0.5 / r))

    def eval(self, s, t):
        """``(v, d_s v, d_t v)``."""
        s, t = np.broadcast_arrays(np.asarray(s, dtype=float), np.asarray(t, dtype=float))
        if self.kind == "zero":
            z = np.zeros(s.shape)
            return z, z.copy(), z.copy()
        if self.kind == "separable":
            return -s * self.phi(t), -self.phi(t), -s * self.dphi(t)
        v = np.zeros(s.shape)
        vs = np.zeros(s.shape)
        vt = np.zeros(s.shape)
        for k, a, A in zip(*self.modes):
            sn, cs = np.sin(k * math.pi * t), np.cos(k * math.pi * t)
            v += A * np.sinh(a * (s - 1)) * sn
            vs += A * a * np.cosh(a * (s - 1)) * sn
            vt += A * k * math.pi * np.sinh(a * (s - 1)) * cs
        return v, vs, vt

    def q_closed_form(self) -> float:
        if self.kind == "zero":
            return 1.0
        if self.kind == "separable":
            r = math.sqrt(self.cbar)
            return 2.0 * r * math.tanh(0.5 / r)
        ks, a, _ = self.modes
        return float(1.0 - 8.0 * np.sum(np.tanh(a) / (ks**2 * math.pi**2 * a)))

    def q_quadrature(self, cells: int = 16, p: int = 10) -> float:
        """``(1/2) int_0^2 int_0^1 (1 + d_s v)^2 + 2 (d_t v)^2`` by Gauss quadrature."""
        def f(P):
            _, vs, vt = self.eval(P[:, 0], P[:, 1])
            return (1 + vs) ** 2 + 2 * vt**2
        return 0.5 * F.quadrature_integral(f, (0.0, 0.0), (2.0, 1.0), (2 * cells, cells), p)


def micro_profile_q(kind: str = "fourier", K: int = 7, cbar: float = CBAR):
    """Profile of the microstructure example and its ratio ``q``.

    Examples
    --------
    >>> prof, q = micro_profile_q("separable")
    >>> round(q, 5)
    0.96988
    """
    prof = MicroProfile(kind, K, cbar)
    return prof, prof.q_closed_form()


def micro_interval(q: float, params: MaterialParams) -> tuple[float, float]:
    """``(sqrt(2 kappa_b/mu_b), sqrt(2 kappa_b/(q mu_b)))``."""
    return params.threshold, math.sqrt(2 * params.kappa_b / (q * params.mu_b))


class MicroField(F.Field):
    """Periodic bonding-layer field of the microstructure example (rescaled coordinates).

    Film ``(0, ell, 0)``; bonding strip ``i``:
    ``(0, ell (1 + x3), ell eps v((x2 - 2 i eps)/eps, 1 + x3))``; substrate 0.
    """

    def __init__(self, N: int, ell: float, prof: MicroProfile):
        if N < 1:
            raise ValueError("N must be >= 1")
        self.N, self.ell, self.prof = N, float(ell), prof
        self.eps = 1.0 / (2 * N)
        self.breaks = ((), tuple(2 * i * self.eps for i in range(N + 1)), (-1.0, 0.0))

    def _st(self, x):
        s = x[..., 1] / self.eps
        i = np.clip(np.floor(s / 2.0), 0, self.N - 1)
        return s - 2 * i, 1.0 + x[..., 2]

    def value(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape)
        z = x[..., 2]
        film, bond = z > 0, (z >= -1) & (z <= 0)
        out[film, 1] = self.ell
        s, t = self._st(x)
        v, _, _ = self.prof.eval(s, t)
        out[..., 1] = np.where(bond, self.ell * (1 + z), out[..., 1])
        out[..., 2] = np.where(bond, self.ell * self.eps * v, 0.0)
        return out

    def jacobian(self, x):
        x = np.asarray(x, dtype=float)
        J = np.zeros(x.shape[:-1] + (3, 3))
        z = x[..., 2]
        bond = (z >= -1) & (z <= 0)
        s, t = self._st(x)
        _, vs, vt = self.prof.eval(s, t)
        J[..., 1, 2] = np.where(bond, self.ell, 0.0)
        J[..., 2, 1] = np.where(bond, self.ell * vs, 0.0)
        J[..., 2, 2] = np.where(bond, self.ell * self.eps * vt, 0.0)
        return J

    def facets(self) -> CrackSurface3D:
        """Vertical bonding facets at the interior strip interfaces ``x2 = 2 i eps``."""
        fs = tuple(Facet.vertical((0.0, 2 * i * self.eps), (1.0, 2 * i * self.eps), -1.0, 0.0, "bonding")
                   for i in range(1, self.N))
        return CrackSurface3D(fs)

    def kl(self) -> KLDisplacement:
        return KLDisplacement.single(("0", repr(self.ell)))


@dataclass
class MicroEnergies:
    N: int
    ell: float
    q: float
    lhs_quadrature: float
    lhs_closed_form: float
    rhs: float

    @property
    def rel_error(self) -> float:
        if self.lhs_closed_form == 0:
            return abs(self.lhs_quadrature)
        return abs(self.lhs_quadrature / self.lhs_closed_form - 1.0)

    def to_dict(self) -> dict:
        return {"N": self.N, "ell": self.ell, "q": self.q, "lhs_quadrature": self.lhs_quadrature,
                "lhs_closed_form": self.lhs_closed_form, "rhs": self.rhs, "rel_error": self.rel_error}


def constant_film_limit(ell: float, params: MaterialParams) -> float:
    """Limit debonding/delamination energy of the constant film ``(0, ell)`` on the unit square."""
    if abs(ell) <= params.threshold:
        return 0.5 * params.mu_b * ell * ell
    return params.kappa_b


def micro_energies(N: int, ell: float, prof: MicroProfile, params: MaterialParams,
                   sub: int = 16, p: int = 10) -> MicroEnergies:
    """Left side (bonding shear plus normal energy, no delamination area) and right side.

    The left side is integrated over the bonding layer with ``sub`` cells per
    strip in ``x2`` and ``sub/4`` cells in ``x3``.
    """
    u = MicroField(N, ell, prof)
    eps = u.eps

    def density(P, e):
        return 2 * params.mu_b * (e[..., 0, 2] ** 2 + e[..., 1, 2] ** 2) + params.mu_b * e[..., 2, 2] ** 2 / eps**2

    cells = (1, N * sub, max(1, sub // 4))
    lhs = F.integrate_field_density(density, u, (0.0, 0.0, -1.0), (1.0, 1.0, 0.0), cells, p)
    q = prof.q_closed_form()
    return MicroEnergies(N, float(ell), q, float(lhs), 0.5 * q * params.mu_b * ell * ell, constant_film_limit(ell, params))


# ---------------------------------------------------------------------------
# audits


@dataclass
class AuditCase:
    """One member of an eps-family: rescaled field, its facets and the reduced state."""

    eps: float
    field: F.Field
    facets: CrackSurface3D
    domain: LayeredDomain
    k: KLDisplacement


def cases_from_recovery(results, k: KLDisplacement) -> list[AuditCase]:
    return [AuditCase(r.eps, r.field, r.facets, r.domain, k) for r in results]


def micro_cases(N_list, ell: float, prof: MicroProfile, sub: int = 8, nz: int = 4, p: int = 8,
                grid_per_strip: int = 8) -> list[AuditCase]:
    out = []
    for N in N_list:
        u = MicroField(N, ell, prof)
        n = 2 * N * grid_per_strip
        dom = LayeredDomain(1.0, 1.0, n, n, nz=nz, p=p)
        out.append(AuditCase(u.eps, u, u.facets(), dom, u.kl()))
    return out


def _theta(case: AuditCase, oblique: bool) -> DelaminationRegion:
    return delamination_candidate(case.facets, case.eps, case.domain.grid, oblique=oblique)


def _bonding_bulk(case: AuditCase, params: MaterialParams) -> float:
    return energy3d.bulk_bonding(case.field, case.eps, params, case.domain)


def _liminf(rows, key, n=3):
    if not rows:
        return math.nan
    tail = sorted(rows, key=lambda r: r["eps"])[:n]
    return min(r[key] for r in tail)


def _ratio(a, b):
    if a == 0 and b == 0:
        return 1.0
    return a / b if b else math.inf


@dataclass
class AuditTable:
    name: str
    rows: list
    summary: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"name": self.name, "rows": self.rows, "summary": self.summary}


def audit_theta_lower_bound(cases: list[AuditCase], params: MaterialParams, report_tol: float = 0.02,
                            oblique: bool = True) -> AuditTable:
    """Bonding energy ``E_eps(u_eps, Omega_b)`` against the relaxed ``theta`` energy.

    ``theta = chi`` of the candidate delamination set of each member.  The
    liminf is approximated by the minimum over the three smallest ``eps``.
    """
    rows = []
    for c in cases:
        eb = _bonding_bulk(c, params) + energy3d.surface_bonding(c.facets.layer("bonding"), c.eps, params)
        th = DelaminationDensity.indicator(_theta(c, oblique))
        rel = energy2d.relaxed_theta_energy(c.k, th, params)
        rows.append({"eps": c.eps, "E_bonding": eb, "relaxed": rel, "ratio": _ratio(eb, rel),
                     "theta_area": float(th.theta.sum() * th.grid.pixel_area)})
    lim = _liminf(rows, "ratio")
    return AuditTable("theta_lower_bound", rows,
                      {"liminf_ratio": lim, "flagged": bool(lim < 1 - report_tol), "report_tol": report_tol,
                       "projection": "oblique" if oblique else "orthogonal"})


def audit_surface_eighth(cases: list[AuditCase], params: MaterialParams) -> AuditTable:
    """Bonding surface energy against ``(1/8) int theta_eps`` (report only)."""
    rows = []
    for c in cases:
        sb = energy3d.surface_bonding(c.facets.layer("bonding"), c.eps, params)
        ob = _theta(c, True)
        orth = _theta(c, False)
        rows.append({"eps": c.eps, "surface_bonding": sb, "eighth_oblique": ob.area / 8.0,
                     "eighth_orthogonal": orth.area / 8.0})
    return AuditTable("surface_eighth", rows, {"asserted": False})


def audit_bulk_lower_bound(cases: list[AuditCase], params: MaterialParams, oblique: bool = True) -> AuditTable:
    """``J_eps(u_eps, Omega_b)`` against ``mu_b/2 int (1 - theta_eps)|ubar|^2``.

    Raises
    ------
    HypothesisError
        If ``lam_b < mu_b``.
    """
    if not params.bulk_lb_applicable:
        raise HypothesisError("the bulk lower bound assumes lam_b >= mu_b")
    rows = []
    for c in cases:
        jb = _bonding_bulk(c, params)
        reg = _theta(c, oblique)
        I = energy2d.debonding_pixels(c.k, params, reg.grid)
        rhs = float(np.sum(np.where(reg.mask, 0.0, I)))
        rows.append({"eps": c.eps, "J_bonding": jb, "rhs": rhs, "ratio": _ratio(jb, rhs)})
    return AuditTable("bulk_lower_bound", rows, {"liminf_ratio": _liminf(rows, "ratio"),
                                                 "projection": "oblique" if oblique else "orthogonal"})


# ---------------------------------------------------------------------------
# configured families


_S2 = f"sin({PI}*x1)^2*sin({PI}*x2)^2"
_S4 = f"sin({PI}*x1)^4*sin({PI}*x2)^4"


@dataclass(frozen=True)
class Family:
    name: str
    kind: str
    k: KLDisplacement
    params: MaterialParams


def family(name: str, params: MaterialParams | None = None) -> Family:
    """Recovery families used by the sweeps.

    ``constant``: ``ubar = (c, 0)`` with ``c`` at half the threshold.
    ``smooth``: ``ubar = (a S, b S)`` with ``S = sin^2(pi x1) sin^2(pi x2)``.
    ``single-crack``: smooth ``ubar`` plus a jump of ``0.1`` across ``x1 = 1/2``
    and ``u3 = 0.2 sin^4(pi x1) sin^4(pi x2)``; ``M = 100``.
    ``delaminated``: constant ``ubar`` below the threshold on the left half
    and above it on the right half, cracked along ``x1 = 1/2``.
    """
    p = params or MaterialParams()
    if name == "constant":
        c = 0.5 * p.threshold
        return Family(name, "sobolev", KLDisplacement.single((repr(c), "0")), p)
    if name == "smooth":
        return Family(name, "sobolev", KLDisplacement.single((f"0.5*{_S2}", f"0.3*{_S2}")), p)
    cr = PlanarCrackSet([((0.5, 0.0), (0.5, 1.0))])
    if name == "single-crack":
        pcs = (KLPiece((0, 0.5, 0, 1), (f"0.5*{_S2}", f"0.3*{_S2}"), f"0.2*{_S4}"),
               KLPiece((0.5, 1, 0, 1), (f"0.5*{_S2}+0.1", f"0.3*{_S2}"), f"0.2*{_S4}"))
        pm = MaterialParams(**{**p.to_dict(), "M": max(p.M, 100.0)})
        return Family(name, "film", KLDisplacement(pcs, cr, 1.0, 1.0), pm)
    if name == "delaminated":
        t = p.threshold
        pcs = (KLPiece((0, 0.5, 0, 1), (repr(0.5 * t), "0")), KLPiece((0.5, 1, 0, 1), (repr(2 * t), "0")))
        return Family(name, "full", KLDisplacement(pcs, cr, 1.0, 1.0), p)
    raise ValueError(f"unknown family {name!r}")


FAMILY_NAMES = ("constant", "smooth", "single-crack", "delaminated")
