import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from filmlimit import fields as F

PI = repr(math.pi)


def test_zero_field():
    u = F.parse_field("0", "0", "0")
    x = np.random.default_rng(0).uniform(0, 1, (10, 3))
    assert np.all(u.value(x) == 0)
    assert np.all(u.strain(x) == 0)


@pytest.mark.parametrize("comps, entry, expected", [
    (("x3", "0", "0"), (0, 2), 0.5),
    (("x1", "0", "0"), (0, 0), 1.0),
    (("0", "0", "x3"), (2, 2), 1.0),
    (("x2", "x1", "0"), (0, 1), 1.0),
])
def test_linear_strains(comps, entry, expected):
    u = F.parse_field(*comps)
    x = np.random.default_rng(1).uniform(0, 1, (7, 3))
    e = u.strain(x)
    target = np.zeros((3, 3))
    target[entry] = target[entry[::-1]] = expected
    np.testing.assert_array_equal(e, np.broadcast_to(target, e.shape))


def test_symbolic_rule():
    u = F.parse_field("sin(x1)*x3", "0", "0")
    x = np.array([[0.3, 0.1, 0.7], [1.0, 0.5, -1.5]])
    np.testing.assert_allclose(u.strain(x)[:, 0, 0], x[:, 2] * np.cos(x[:, 0]), rtol=0, atol=1e-15)


@pytest.mark.parametrize("text", ["x1 + 2*x2^3", "sin(x1)*cosh(x3)/(2 + x2)", "exp(-x1)", "(x1-x2)^-2 + 1",
                                  "1.5e-3*sinh(x3)^2", "-(x1*x2)"])
def test_roundtrip(text):
    e = F.parse_expr(text)
    again = F.parse_expr(e.to_text())
    assert again.to_text() == e.to_text()
    x = np.array([[0.2, 0.4, 0.6]])
    np.testing.assert_allclose(again.evaluate(x), e.evaluate(x), rtol=1e-15)


@pytest.mark.parametrize("text, exc, pos", [
    ("x1 +* x2", F.DSLSyntaxError, 4),
    ("foo(x1)", F.UnknownIdentifierError, 0),
    ("x4", F.UnknownIdentifierError, 0),
    ("x1^2.5", F.NonIntegerExponentError, 3),
    ("(x1", F.DSLSyntaxError, 3),
])
def test_syntax_errors(text, exc, pos):
    with pytest.raises(exc) as info:
        F.parse_expr(text)
    assert info.value.position == pos


def test_domain_validation():
    with pytest.raises(F.DomainError):
        F.parse_field("1/x1", "0", "0")
    u = F.parse_field("x1", "0", "0", box=((0, 1), (0, 1), (0, 1)))
    with pytest.raises(F.DomainError):
        u.value(np.array([[2.0, 0.5, 0.5]]))


_atoms = st.sampled_from(["x1", "x2", "x3", "0.7", "1.3"])


def _exprs():
    return st.recursive(
        _atoms,
        lambda ch: st.one_of(
            st.tuples(ch, st.sampled_from(["+", "-", "*"]), ch).map(lambda t: f"({t[0]}{t[1]}{t[2]})"),
            st.tuples(st.sampled_from(["sin", "cos", "sinh", "cosh", "exp"]), ch).map(lambda t: f"{t[0]}({t[1]})"),
            st.tuples(ch, st.integers(0, 3)).map(lambda t: f"({t[0]})^{t[1]}"),
        ),
        max_leaves=5,
    )


@settings(max_examples=60, deadline=None)
@given(_exprs(), _exprs(), _exprs(), st.integers(0, 2**31 - 1))
def test_strain_matches_finite_differences(a, b, c, seed):
    u = F.parse_field(a, b, c, box=((0, 1), (0, 1), (-1, 1)))
    x = np.random.default_rng(seed).uniform(0.1, 0.9, (4, 3))
    h = 1e-5
    J = np.zeros((4, 3, 3))
    for j in range(3):
        d = np.zeros(3)
        d[j] = h
        J[:, :, j] = (u.value(x + d) - u.value(x - d)) / (2 * h)
    fd = 0.5 * (J + np.swapaxes(J, 1, 2))
    e = u.strain(x)
    assert np.allclose(e, np.swapaxes(e, 1, 2))
    assert np.all(np.abs(fd - e) <= 1e-6 * np.maximum(1.0, np.abs(e)))


@pytest.mark.parametrize("p", [1, 3, 5])
def test_quadrature_constant(p):
    assert F.quadrature_integral(lambda P: np.ones(len(P)), (0, 0, 0), (1, 1, 1), 1, p) == pytest.approx(1, abs=1e-15)


def test_quadrature_polynomial_exactness():
    assert abs(F.quadrature_integral(lambda P: P[:, 0] ** 2, (0,), (1,), 1, 2) - 1 / 3) < 1e-15


def test_quadrature_sin_squared():
    # one cell at p = 6 leaves ~3e-7; two or more cells reach roundoff
    f = lambda P: np.sin(math.pi * P[:, 0]) ** 2
    assert abs(F.quadrature_integral(f, (0,), (1,), 4, 6) - 0.5) < 1e-12


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-3, 3), min_size=4, max_size=4), st.integers(1, 6))
def test_quadrature_subdivision_invariance(coef, n):
    f = lambda P: coef[0] + coef[1] * P[:, 0] + coef[2] * P[:, 0] ** 3 * P[:, 1] + coef[3] * P[:, 1] ** 4
    a = F.quadrature_integral(f, (0, 0), (1, 2), 1, 3)
    b = F.quadrature_integral(f, (0, 0), (1, 2), (n, n), 3)
    assert abs(a - b) <= 1e-13 * max(1.0, abs(a))


def test_misaligned_cells_refused():
    u = F.PiecewiseField([(F.Box((0, 0, 0), (0.3, 1, 1)), F.parse_field("x1", "0", "0")),
                          (F.Box((0.3, 0, 0), (1, 1, 1)), F.parse_field("0", "0", "0"))])
    with pytest.raises(F.MisalignedCellsError):
        F.integrate_field_density(lambda P, e: e[..., 0, 0], u, (0, 0, 0), (1, 1, 1), (2, 1, 1))
    u2 = F.PiecewiseField([(F.Box((0, 0, 0), (0.5, 1, 1)), F.parse_field("x1", "0", "0")),
                           (F.Box((0.5, 0, 0), (1, 1, 1)), F.parse_field("0", "0", "0"))])
    v = F.integrate_field_density(lambda P, e: e[..., 0, 0], u2, (0, 0, 0), (1, 1, 1), (2, 1, 1))
    assert v == pytest.approx(0.5, abs=1e-15)


def test_oblique_halfspace_cannot_be_integrated():
    u = F.PiecewiseField([(F.HalfSpace((1, 1, 0), 1.0), F.parse_field("x1", "0", "0")),
                          (F.Box((0, 0, 0), (1, 1, 1)), F.ZeroField())])
    assert u.breaks is None
    with pytest.raises(F.MisalignedCellsError):
        F.integrate_field_density(lambda P, e: e[..., 0, 0], u, (0, 0, 0), (1, 1, 1), 4)


def test_piecewise_traces():
    a = F.parse_field("x1", "0", "0")
    b = F.parse_field("x1 + 1", "0", "0")
    u = F.PiecewiseField([(F.Box((0, 0, 0), (1, 1, 0.5)), a), (F.Box((0, 0, 0.5), (1, 1, 1)), b)])
    s = F.horizontal_interface_sampler(0.5)
    assert F.validate_traces(u, [(0, 1, s)], [True]).ok
    rep = F.validate_traces(u, [(0, 1, s)], [False])
    assert not rep.ok and rep.undeclared_max_gap == pytest.approx(1.0)
    same = F.PiecewiseField([(F.Box((0, 0, 0), (1, 1, 0.5)), a), (F.Box((0, 0, 0.5), (1, 1, 1)), a)])
    assert not F.validate_traces(same, [(0, 1, s)], [True]).ok
    assert F.validate_traces(same, [(0, 1, s)], [False]).ok


def test_first_match_and_cover():
    u = F.PiecewiseField([(F.Box((0, 0, 0), (1, 1, 1)), F.parse_field("1", "0", "0")),
                          (F.Box((0, 0, 0), (1, 1, 1)), F.parse_field("2", "0", "0"))],
                         domain=F.Box((0, 0, 0), (1, 1, 1)))
    assert u.value(np.array([[0.5, 0.5, 0.5]]))[0, 0] == 1.0
    u.check_cover()
    partial = F.PiecewiseField([(F.Box((0, 0, 0), (0.5, 1, 1)), F.ZeroField())], domain=F.Box((0, 0, 0), (1, 1, 1)))
    with pytest.raises(F.DomainError):
        partial.check_cover()


def test_pixel_union_integral():
    mask = np.zeros((4, 4), bool)
    mask[:2] = True
    I = F.pixel_union_integral(lambda P: P[:, 0], 1.0, 1.0, mask, p=2)
    assert I.sum() == pytest.approx(0.5 * 0.5 * 0.5, abs=1e-15)
    assert np.all(I[2:] == 0)
