"""Rescaled bulk energies of the film and bonding layer and the anisotropic
Griffith surface energies."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from . import fields as F
from .model import CrackSurface3D, LayeredDomain, MaterialParams


class InconsistentFacetsError(ValueError):
    pass


def _invariants(e: np.ndarray):
    eaa = e[..., 0, 0] + e[..., 1, 1]
    eab2 = e[..., 0, 0] ** 2 + e[..., 1, 1] ** 2 + 2 * e[..., 0, 1] ** 2
    ea3 = e[..., 0, 2] ** 2 + e[..., 1, 2] ** 2
    e33 = e[..., 2, 2]
    return eaa, eab2, ea3, e33


def _layer_terms(u: F.Field, lam: float, mu: float, box, domain: LayeredDomain) -> np.ndarray:
    """Unscaled integrals of the three groups of the layered quadratic form."""

    def density(P, e):
        eaa, eab2, ea3, e33 = _invariants(e)
        return np.column_stack([
            lam * eaa * eaa + 2 * mu * eab2,
            2 * lam * eaa * e33 + 4 * mu * ea3,
            (lam + 2 * mu) * e33 * e33,
        ])

    lo, hi = box
    cells = (domain.nx, domain.ny, domain.nz)
    return np.asarray(F.integrate_field_density(density, u, lo, hi, cells, p=domain.orders))


def bulk_film_terms(u: F.Field, eps: float, params: MaterialParams,
                    domain: LayeredDomain = LayeredDomain()) -> np.ndarray:
    """The three scaled film integrals with prefactors ``1/2, 1/(2 eps^2), 1/(2 eps^4)``."""
    _check_eps(eps)
    t = _layer_terms(u, params.lam_f, params.mu_f, domain.layer_box("film"), domain)
    return t * np.array([0.5, 0.5 / eps**2, 0.5 / eps**4])


def bulk_bonding_terms(u: F.Field, eps: float, params: MaterialParams,
                       domain: LayeredDomain = LayeredDomain()) -> np.ndarray:
    """The three scaled bonding integrals with prefactors ``eps^2/2, 1/2, 1/(2 eps^2)``."""
    _check_eps(eps)
    t = _layer_terms(u, params.lam_b, params.mu_b, domain.layer_box("bonding"), domain)
    return t * np.array([0.5 * eps**2, 0.5, 0.5 / eps**2])


def bulk_film(u: F.Field, eps: float, params: MaterialParams,
              domain: LayeredDomain = LayeredDomain()) -> float:
    """Rescaled elastic energy of the film ``omega x (0, 1)``.

    Examples
    --------
    ``u = (x1, 0, 0)`` gives ``(lam_f + 2 mu_f) |omega| / 2``.
    """
    return float(bulk_film_terms(u, eps, params, domain).sum())


def bulk_bonding(u: F.Field, eps: float, params: MaterialParams,
                 domain: LayeredDomain = LayeredDomain()) -> float:
    """Rescaled elastic energy of the bonding layer ``omega x [-1, 0]``."""
    return float(bulk_bonding_terms(u, eps, params, domain).sum())


def _check_eps(eps):
    if not eps > 0:
        raise ValueError("eps must be positive")


def film_weight(normals: np.ndarray, eps: float) -> np.ndarray:
    """``|(nu', nu_3 / eps)|`` per normal."""
    n = np.atleast_2d(normals)
    return np.sqrt(n[:, 0] ** 2 + n[:, 1] ** 2 + (n[:, 2] / eps) ** 2)


def bonding_weight(normals: np.ndarray, eps: float) -> np.ndarray:
    """``|(eps nu', nu_3)|`` per normal."""
    n = np.atleast_2d(normals)
    return np.sqrt(eps**2 * (n[:, 0] ** 2 + n[:, 1] ** 2) + n[:, 2] ** 2)


def _require_layer(c: CrackSurface3D, layer: str):
    for f in c.facets:
        if f.layer != layer:
            raise ValueError(f"facet outside {layer}: tagged {f.layer!r}")


def surface_film(c: CrackSurface3D, eps: float, params: MaterialParams) -> float:
    """``kappa_f * sum(area * |(nu', nu_3/eps)|)`` over film facets."""
    _check_eps(eps)
    _require_layer(c, "film")
    n, a = c.arrays()
    if not len(a):
        return 0.0
    return float(params.kappa_f * np.sum(a * film_weight(n, eps)))


def surface_bonding(c: CrackSurface3D, eps: float, params: MaterialParams) -> float:
    """``kappa_b * sum(area * |(eps nu', nu_3)|)`` over bonding facets."""
    _check_eps(eps)
    _require_layer(c, "bonding")
    n, a = c.arrays()
    if not len(a):
        return 0.0
    return float(params.kappa_b * np.sum(a * bonding_weight(n, eps)))


@dataclass
class EnergyBreakdown:
    eps: float
    film_terms: tuple
    bonding_terms: tuple
    surf_film: float
    surf_bonding: float

    @property
    def bulk_film(self) -> float:
        return float(sum(self.film_terms))

    @property
    def bulk_bonding(self) -> float:
        return float(sum(self.bonding_terms))

    @property
    def total(self) -> float:
        return self.bulk_film + self.bulk_bonding + self.surf_film + self.surf_bonding

    def to_dict(self) -> dict:
        d = asdict(self)
        d.update(film_terms=list(map(float, self.film_terms)),
                 bonding_terms=list(map(float, self.bonding_terms)),
                 bulk_film=self.bulk_film, bulk_bonding=self.bulk_bonding, total=self.total)
        return d


def _facet_key(f):
    return (f.layer, tuple(np.round(np.asarray(f.vertices, dtype=float), 12).ravel()))


def check_facets(u: F.Field, cracks: CrackSurface3D) -> None:
    declared = getattr(u, "facets", None)
    if declared is None:
        return
    a = sorted(_facet_key(f) for f in declared.facets)
    b = sorted(_facet_key(f) for f in cracks.facets)
    if a != b:
        raise InconsistentFacetsError(
            f"crack list ({len(b)} facets) differs from the field's declared facets ({len(a)})")


def energy_breakdown(u: F.Field, cracks: CrackSurface3D, eps: float, params: MaterialParams,
                     domain: LayeredDomain = LayeredDomain(), film_only: bool = False) -> EnergyBreakdown:
    """All four contributions of the rescaled Griffith energy."""
    check_facets(u, cracks)
    ft = bulk_film_terms(u, eps, params, domain)
    if film_only:
        if len(cracks.layer("bonding")):
            raise InconsistentFacetsError("bonding facets given for a film-only evaluation")
        bt, sb = np.zeros(3), 0.0
    else:
        bt = bulk_bonding_terms(u, eps, params, domain)
        sb = surface_bonding(cracks.layer("bonding"), eps, params)
    sf = surface_film(cracks.layer("film"), eps, params)
    return EnergyBreakdown(float(eps), tuple(map(float, ft)), tuple(map(float, bt)), sf, sb)


def total_E_eps(u: F.Field, cracks: CrackSurface3D, eps: float, params: MaterialParams,
                domain: LayeredDomain = LayeredDomain()) -> float:
    """Film plus bonding bulk energy plus both surface terms."""
    return energy_breakdown(u, cracks, eps, params, domain).total
