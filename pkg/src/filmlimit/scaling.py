"""Change of variables between the physical thin domain and the rescaled one.

A physical displacement ``v`` on ``omega x (-2 eps, eps)`` maps to
``u_a(x', x3) = v_a(x', eps x3)`` and ``u_3(x', x3) = eps v_3(x', eps x3)``.
"""

from __future__ import annotations

import numpy as np

from . import energy3d
from . import fields as F
from .model import CrackSurface3D, Facet, LayeredDomain, MaterialParams


class RescaledField(F.Field):
    """Rescaled view of a generic physical field (chain rule on the Jacobian)."""

    def __init__(self, v: F.Field, eps: float, inverse: bool = False):
        self.v, self.eps, self.inverse = v, float(eps), inverse
        s = 1.0 / self.eps if inverse else self.eps
        self._s = s
        vb = v.breaks
        self.breaks = None if vb is None else (vb[0], vb[1], tuple(z / s for z in vb[2]))

    def _inner(self, x):
        y = np.array(x, dtype=float, copy=True)
        y[..., 2] *= self._s
        return y

    def value(self, x):
        val = self.v.value(self._inner(x))
        val[..., 2] *= self._s
        return val

    def jacobian(self, x):
        J = self.v.jacobian(self._inner(x))
        J[..., :, 2] *= self._s
        J[..., 2, :] *= self._s
        return J


def _scale_box(box, s):
    (a, b), (c, d), (z0, z1) = box
    return ((a, b), (c, d), (z0 / s, z1 / s))


def rescale(v: F.Field, eps: float) -> F.Field:
    """Rescaled field ``u`` of a physical field ``v``.

    Analytic fields stay analytic: ``x3`` is substituted by ``eps * x3``.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    if isinstance(v, F.VectorField):
        sub = {2: F.Const(float(eps)) * F.Var(2)}
        c1, c2, c3 = (c.substitute(sub) for c in v.components)
        return F.VectorField((c1, c2, F.Const(float(eps)) * c3), _scale_box(v.box, eps))
    return RescaledField(v, eps)


def unrescale(u: F.Field, eps: float) -> F.Field:
    """Inverse of :func:`rescale`."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    if isinstance(u, F.VectorField):
        sub = {2: F.Var(2) / F.Const(float(eps))}
        c1, c2, c3 = (c.substitute(sub) for c in u.components)
        return F.VectorField((c1, c2, c3 / F.Const(float(eps))), _scale_box(u.box, 1.0 / eps))
    return RescaledField(u, eps, inverse=True)


def physical_energy(v: F.Field, eps: float, params: MaterialParams,
                    domain: LayeredDomain = LayeredDomain(), film_only: bool = False) -> float:
    """Layered isotropic elastic energy of ``v`` on the physical thin domain.

    The film ``omega x (0, eps)`` has moduli ``(lam_f, mu_f)``, the bonding
    layer ``omega x [-eps, 0]`` has ``eps**2 (lam_b, mu_b)``.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")

    def form(lam, mu):
        def density(P, e):
            tr = e[..., 0, 0] + e[..., 1, 1] + e[..., 2, 2]
            return 0.5 * (lam * tr * tr + 2 * mu * np.einsum("...ij,...ij->...", e, e))
        return density

    cells = (domain.nx, domain.ny, domain.nz)
    total = F.integrate_field_density(form(params.lam_f, params.mu_f), v, (0, 0, 0),
                                      (domain.Lx, domain.Ly, eps), cells, p=domain.orders)
    if not film_only:
        total += F.integrate_field_density(form(eps**2 * params.lam_b, eps**2 * params.mu_b), v,
                                           (0, 0, -eps), (domain.Lx, domain.Ly, 0.0), cells, p=domain.orders)
    return float(total)


def rescaled_energy(u: F.Field, eps: float, params: MaterialParams,
                    domain: LayeredDomain = LayeredDomain(), film_only: bool = False) -> float:
    """``J_eps(u, film) + J_eps(u, bonding)`` on the unit-thickness layers."""
    total = energy3d.bulk_film(u, eps, params, domain)
    if not film_only:
        total += energy3d.bulk_bonding(u, eps, params, domain)
    return total


def rescale_facet(f: Facet, eps: float) -> Facet:
    """Map a physical facet to rescaled coordinates ``x3 -> x3 / eps``."""
    V = np.asarray(f.vertices, dtype=float).copy()
    V[:, 2] /= eps
    return Facet(tuple(map(tuple, V)), f.layer)


def physical_surface_energy(c: CrackSurface3D, eps: float, params: MaterialParams) -> float:
    """Griffith energy with toughness ``kappa_f`` in the film and ``eps kappa_b`` in the bonding layer.

    ``c`` is given in physical coordinates; layer tags refer to the physical
    layers.
    """
    n, a = c.arrays()
    tough = np.array([params.kappa_f if f.layer == "film" else eps * params.kappa_b for f in c.facets])
    return float(np.sum(tough * a)) if len(a) else 0.0


def physical_facet(vertices, layer: str, eps: float) -> Facet:
    """Facet in physical coordinates; layer bounds are checked after rescaling."""
    V = np.asarray(vertices, dtype=float)
    f = Facet(tuple(map(tuple, V / np.array([1, 1, eps]))), layer)
    return _RawFacet(tuple(map(tuple, V)), layer, f)


class _RawFacet:
    """Physical facet wrapper exposing the ``Facet`` geometry interface."""

    def __init__(self, vertices, layer, rescaled: Facet):
        self.vertices, self.layer, self.rescaled = vertices, layer, rescaled

    @property
    def _vec(self):
        V = np.asarray(self.vertices, dtype=float)
        c = V[0]
        s = np.zeros(3)
        for a, b in zip(V[1:-1], V[2:]):
            s += np.cross(a - c, b - c)
        return 0.5 * s

    @property
    def area(self):
        return float(np.linalg.norm(self._vec))

    @property
    def normal(self):
        v = self._vec
        return v / np.linalg.norm(v)


def facet_scaling_check(vertices, layer: str, eps: float, params: MaterialParams) -> tuple[float, float]:
    """Physical surface energy of one facet and ``eps`` times its rescaled energy."""
    raw = physical_facet(vertices, layer, eps)
    tough = params.kappa_f if layer == "film" else eps * params.kappa_b
    phys = tough * raw.area
    c = CrackSurface3D((raw.rescaled,))
    if layer == "film":
        resc = energy3d.surface_film(c, eps, params)
    else:
        resc = energy3d.surface_bonding(c, eps, params)
    return phys, eps * resc
