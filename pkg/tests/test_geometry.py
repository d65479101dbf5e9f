import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from filmlimit import geometry as G
from filmlimit.model import CrackSurface3D, DelaminationRegion, Facet, PixelGrid


def test_direction_vectors():
    d = G.ObliqueDirection("xi+", 0.1)
    np.testing.assert_allclose(d.vector, np.array([1, 0, 10]) / math.sqrt(2))
    assert all(x.vector[2] > 0 for x in G.all_directions(0.3))
    with pytest.raises(ValueError):
        G.ObliqueDirection("zeta", 0.1)
    with pytest.raises(ValueError):
        G.ObliqueDirection("xi+", 0.0)


def test_direction_projection():
    d = G.ObliqueDirection("xi+", 0.2)
    np.testing.assert_allclose(d.project(np.array([[0.5, 0.5, -1.0]])), [[0.7, 0.5]])
    np.testing.assert_allclose(d.project(np.array([[0.5, 0.5, 0.0]])), [[0.5, 0.5]])


def test_orthogonal_projection_examples():
    vert = CrackSurface3D((Facet.vertical((0.5, 0.1), (0.5, 0.9), 0.0, 1.0, "film"),))
    assert G.orthogonal_projection_area(vert, PixelGrid(1, 1, 64, 64)) == 0.0
    hor = CrackSurface3D((Facet.horizontal(0.25, 0.75, 0.25, 0.5, 0.0, "bonding"),))
    assert G.orthogonal_projection_area(hor, PixelGrid(1, 1, 64, 64)) == pytest.approx(0.125)
    assert G.orthogonal_projection_area(hor, exact=True) == pytest.approx(0.125)


def test_orthogonal_projection_oblique_facet_converges():
    a = 0.09
    f = CrackSurface3D((Facet.from_normal((1, 0, 1), a, (0.5, 0.5, 0.5), "film"),))
    target = a / math.sqrt(2)
    assert G.orthogonal_projection_area(f, exact=True) == pytest.approx(target, rel=1e-14)
    errs = [abs(G.orthogonal_projection_area(f, PixelGrid(1, 1, n, n)) - target) for n in (64, 128, 256)]
    assert errs[-1] < 0.02 * target
    assert errs[-1] <= errs[0]


@pytest.mark.parametrize("eps", [0.1, 0.05])
def test_oblique_vertical_bonding_strip(eps):
    c, length = 0.5, 0.5
    f = CrackSurface3D((Facet.vertical((c, 0.25), (c, 0.25 + length), -1.0, 0.0, "bonding"),))
    g = PixelGrid(1, 1, 400, 400)
    r = G.oblique_projection_set(f, G.ObliqueDirection("xi+", eps), g)
    assert r.area == pytest.approx(eps * length, rel=0.05)
    xs = g.centers()[..., 0][r.mask]
    assert xs.min() >= c - 1e-12 and xs.max() <= c + eps + 1e-12


def test_oblique_horizontal_translate():
    eps, z0 = 0.1, -0.5
    f = CrackSurface3D((Facet.horizontal(0.3, 0.6, 0.3, 0.6, z0, "bonding"),))
    g = PixelGrid(1, 1, 100, 100)
    r = G.oblique_projection_set(f, G.ObliqueDirection("xi-", eps), g)
    assert r.area == pytest.approx(0.09, rel=1e-9)
    xs = g.centers()[..., 0][r.mask]
    # foot x1 + eps * z0 for xi-
    assert xs.min() == pytest.approx(0.3 + eps * z0 + 0.005, abs=1e-9)
    assert xs.max() == pytest.approx(0.6 + eps * z0 - 0.005, abs=1e-9)


def test_empty_inputs():
    g = PixelGrid(1, 1, 16, 16)
    assert G.delamination_candidate(CrackSurface3D(), 0.1, g).count == 0
    assert G.oblique_projection_set(CrackSurface3D(), G.ObliqueDirection("eta+", 0.1), g).count == 0


def test_candidate_vertical_bonding_two_strips():
    eps = 0.05
    f = CrackSurface3D((Facet.vertical((0.5, 0.2), (0.5, 0.8), -1.0, 0.0, "bonding"),))
    areas = []
    for n in (200, 400, 800):
        areas.append(G.delamination_candidate(f, eps, PixelGrid(1, 1, n, n)).area)
    assert areas[-1] == pytest.approx(2 * eps * 0.6, rel=0.03)
    assert abs(areas[2] - areas[1]) <= abs(areas[1] - areas[0]) + 1e-12


def test_candidate_film_crack_vanishes():
    f = CrackSurface3D((Facet.vertical((0.5, 0.2), (0.5, 0.8), 0.0, 1.0, "film"),))
    areas = [G.delamination_candidate(f, e, PixelGrid(1, 1, 400, 400)).area for e in (0.1, 0.05, 0.025)]
    assert areas[0] > areas[1] > areas[2]


@settings(max_examples=25, deadline=None)
@given(st.lists(st.tuples(st.floats(0.1, 0.9), st.floats(0.1, 0.9), st.floats(-0.95, -0.05),
                          st.sampled_from(["x", "y", "z"])), min_size=1, max_size=4))
def test_candidate_monotone_in_facets(specs):
    facets = []
    for x, y, z, kind in specs:
        if kind == "x":
            facets.append(Facet.vertical((x, 0.2), (x, 0.7), -1.0, 0.0, "bonding"))
        elif kind == "y":
            facets.append(Facet.vertical((0.2, y), (0.7, y), -1.0, 0.0, "bonding"))
        else:
            facets.append(Facet.horizontal(0.3, 0.5, 0.3, 0.5, z, "bonding"))
    g = PixelGrid(1, 1, 64, 64)
    prev = np.zeros((64, 64), bool)
    for k in range(1, len(facets) + 1):
        m = G.delamination_candidate(CrackSurface3D(tuple(facets[:k])), 0.05, g).mask
        assert np.all(m >= prev)
        prev = m


def test_oblique_tends_to_translate():
    f = CrackSurface3D((Facet.horizontal(0.3, 0.6, 0.3, 0.6, -0.5, "bonding"),))
    g = PixelGrid(1, 1, 200, 200)
    ortho = G.orthogonal_projection_mask(f, g)
    diffs = []
    for eps in (0.08, 0.04, 0.02):
        m = G.oblique_projection_set(f, G.ObliqueDirection("eta+", eps), g).mask
        diffs.append(np.count_nonzero(m ^ ortho) * g.pixel_area)
    assert diffs[0] > diffs[1] > diffs[2]
    assert diffs[2] / 0.02 == pytest.approx(diffs[0] / 0.08, rel=0.2)


def test_identity_examples():
    assert float(G.tensor_decomposition_residual(np.zeros((3, 3)), 0.0)) == 0.0
    assert float(G.tensor_decomposition_residual(np.eye(3), 0.0)) <= 1e-12 * 4
    with pytest.raises(ValueError):
        G.tensor_decomposition_residual(np.triu(np.ones((3, 3))), 0.0)


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(-10, 10), st.floats(0.01, 100))
def test_identity_property(seed, theta, scale):
    A = G.random_symmetric(np.random.default_rng(seed), 1, scale)[0]
    r = float(G.tensor_decomposition_residual(A, theta))
    assert r <= 1e-12 * (1 + np.sum(A * A))


def test_identity_vectorised():
    rng = np.random.default_rng(5)
    A = G.random_symmetric(rng, 100)
    th = rng.uniform(0, 2 * np.pi, 100)
    lhs, rhs = G.decomposition_sides(A, th)
    np.testing.assert_allclose(lhs, rhs, rtol=1e-12, atol=1e-12)


def test_pgm_roundtrip():
    g = PixelGrid(1, 1, 5, 3)
    m = np.zeros((5, 3), bool)
    m[0, 0] = m[4, 2] = m[2, 1] = True
    r = DelaminationRegion(g, m)
    data = G.to_pgm(r)
    assert data.startswith(b"P5\n5 3\n255\n")
    assert G.from_pgm(data, g) == r
