import numpy as np
import pytest
from helpers import random_physical_field

from filmlimit import energy3d
from filmlimit import fields as F
from filmlimit import scaling as S
from filmlimit.model import LayeredDomain, MaterialParams

P = MaterialParams(lam_f=1.3, mu_f=0.7, lam_b=2.1, mu_b=0.9, kappa_f=1.7, kappa_b=0.6)
DOM = LayeredDomain(1.0, 1.0, 2, 2, 2, 5)


def phys(a, b, c, eps=1.0):
    return F.parse_field(a, b, c, box=((0, 1), (0, 1), (-2 * eps, eps)))


def test_rescale_examples():
    x = np.random.default_rng(0).uniform(0, 1, (5, 3))
    assert np.all(S.rescale(phys("0", "0", "0"), 0.1).value(x) == 0)
    np.testing.assert_allclose(S.rescale(phys("0", "0", "1"), 0.1).value(x), np.tile([0, 0, 0.1], (5, 1)))
    u = S.rescale(phys("x3", "0", "0"), 0.5)
    np.testing.assert_allclose(u.value(x)[:, 0], 0.5 * x[:, 2])


def test_rescale_rejects_bad_eps():
    with pytest.raises(ValueError):
        S.rescale(phys("x1", "0", "0"), 0.0)


@pytest.mark.parametrize("seed", range(5))
@pytest.mark.parametrize("eps", [1.0, 0.3, 0.1])
def test_unrescale_inverts(seed, eps):
    rng = np.random.default_rng(seed)
    v = phys(*random_physical_field(rng), eps=eps)
    w = S.unrescale(S.rescale(v, eps), eps)
    x = rng.uniform(0, 1, (8, 3)) * np.array([1, 1, eps])
    np.testing.assert_allclose(w.value(x), v.value(x), rtol=1e-13, atol=1e-14)


def test_physical_energy_examples():
    assert S.physical_energy(phys("0", "0", "0"), 0.2, P, DOM) == 0.0
    e = S.physical_energy(phys("x1", "0", "0"), 1.0, P, DOM, film_only=True)
    assert e == pytest.approx(0.5 * (P.lam_f + 2 * P.mu_f), rel=1e-13)


@pytest.mark.parametrize("seed", range(6))
@pytest.mark.parametrize("eps", [1.0, 0.2])
def test_scaling_identity(seed, eps):
    v = phys(*random_physical_field(np.random.default_rng(seed)), eps=eps)
    lhs = S.physical_energy(v, eps, P, DOM)
    rhs = eps * S.rescaled_energy(S.rescale(v, eps), eps, P, DOM)
    assert abs(lhs - rhs) <= 1e-10 * abs(lhs)


def test_generic_field_path_matches_analytic():
    v = phys("x1*x3", "sin(x2)", "x3^2 + x1", eps=0.3)
    generic = F.PiecewiseField([(F.Box((0, 0, -0.6), (1, 1, 0.3)), v)])
    a = S.rescaled_energy(S.rescale(v, 0.3), 0.3, P, DOM)
    b = S.rescaled_energy(S.rescale(generic, 0.3), 0.3, P, DOM)
    assert a == pytest.approx(b, rel=1e-12)


@pytest.mark.parametrize("eps", [1.0, 0.1, 0.01])
@pytest.mark.parametrize("verts, layer", [
    (((0.5, 0, 0), (0.5, 1, 0), (0.5, 1, "e"), (0.5, 0, "e")), "film"),
    (((0, 0, "-e"), (1, 0, "-e"), (1, 1, "-e/2"), (0, 1, "-e/2")), "bonding"),
    (((0, 0, 0), (1, 0, 0), (1, 1, 0), (0, 1, 0)), "bonding"),
])
def test_facet_scaling(eps, verts, layer):
    sub = {"e": eps, "-e": -eps, "-e/2": -eps / 2}
    V = [tuple(sub.get(c, c) if isinstance(c, str) else c for c in v) for v in verts]
    phys_e, resc_e = S.facet_scaling_check(V, layer, eps, P)
    assert abs(phys_e - resc_e) <= 1e-12 * max(phys_e, 1e-300)


def test_rescale_facet_roundtrip():
    from filmlimit.model import Facet
    f = Facet.vertical((0.2, 0), (0.2, 1), 0.0, 0.1, "film")
    g = S.rescale_facet(f, 0.1)
    assert np.asarray(g.vertices)[:, 2].max() == pytest.approx(1.0)
    assert energy3d.film_weight(g.normal, 0.1)[0] == pytest.approx(1.0)
