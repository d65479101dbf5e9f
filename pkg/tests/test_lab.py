import math

import numpy as np
import pytest

from filmlimit import lab
from filmlimit import recovery as R
from filmlimit.model import LayeredDomain, MaterialParams

P = MaterialParams()


def test_profile_q_values():
    _, qf = lab.micro_profile_q("fourier", 7)
    _, qs = lab.micro_profile_q("separable")
    _, qz = lab.micro_profile_q("zero")
    assert qf <= 0.95 and qf < 1 - 1e-3
    assert round(qs, 5) == 0.96988
    assert qz == 1.0


def test_fourier_q_decreases_with_modes():
    qs = [lab.micro_profile_q("fourier", K)[1] for K in (1, 3, 7, 15)]
    assert all(a > b for a, b in zip(qs, qs[1:]))


@pytest.mark.parametrize("kind", ["fourier", "separable", "zero"])
def test_q_quadrature_matches_closed_form(kind):
    prof, q = lab.micro_profile_q(kind)
    assert prof.q_quadrature() == pytest.approx(q, rel=1e-12)


def test_profile_boundary_values():
    prof = lab.MicroProfile("fourier", 7)
    s = np.linspace(0, 2, 11)
    for t in (0.0, 1.0):
        v, _, _ = prof.eval(s, np.full_like(s, t))
        np.testing.assert_allclose(v, 0.0, atol=1e-14)


def test_profile_rejects_bad_input():
    with pytest.raises(ValueError):
        lab.MicroProfile("cubic")
    with pytest.raises(ValueError):
        lab.MicroProfile("fourier", 0)
    with pytest.raises(ValueError):
        lab.MicroField(0, 1.0, lab.MicroProfile())


def test_interval():
    _, q = lab.micro_profile_q()
    lo, hi = lab.micro_interval(q, P)
    assert lo == P.threshold
    assert hi == pytest.approx(P.threshold / math.sqrt(q))


@pytest.mark.parametrize("N", [2, 4, 8])
def test_micro_lhs_quadrature(N):
    prof, q = lab.micro_profile_q()
    lo, hi = lab.micro_interval(q, P)
    m = lab.micro_energies(N, 0.5 * (lo + hi), prof, P)
    assert m.rel_error <= 1e-6


def test_micro_midpoint_beats_limit():
    prof, q = lab.micro_profile_q()
    lo, hi = lab.micro_interval(q, P)
    m = lab.micro_energies(4, 0.5 * (lo + hi), prof, P)
    assert m.lhs_quadrature < m.rhs - 0.01 * m.rhs


def test_micro_zero_displacement():
    m = lab.micro_energies(2, 0.0, lab.MicroProfile(), P)
    assert (m.lhs_quadrature, m.rhs) == (0.0, 0.0)


def test_rhs_branches():
    below = 0.5 * P.threshold
    assert lab.constant_film_limit(below, P) == pytest.approx(0.5 * P.mu_b * below**2)
    assert lab.constant_film_limit(2 * P.threshold, P) == P.kappa_b
    assert lab.constant_film_limit(P.threshold, P) == pytest.approx(P.kappa_b)


def test_micro_field_traces():
    u = lab.MicroField(2, 0.7, lab.MicroProfile())
    x = np.random.default_rng(0).uniform(0, 1, (20, 3))
    x[:, 2] = 0.0
    np.testing.assert_allclose(u.value(x), np.tile([0, 0.7, 0], (20, 1)), atol=1e-13)
    x[:, 2] = -1.0
    np.testing.assert_allclose(u.value(x), 0.0, atol=1e-13)
    assert len(u.facets()) == 1


def test_micro_audits():
    prof, q = lab.micro_profile_q()
    lo, hi = lab.micro_interval(q, P)
    cases = lab.micro_cases([2, 4], 0.5 * (lo + hi), prof)
    th = lab.audit_theta_lower_bound(cases, P)
    assert len(th.rows) == 2 and set(th.summary) >= {"liminf_ratio", "flagged"}
    assert lab.audit_surface_eighth(cases, P).summary == {"asserted": False}
    assert math.isfinite(lab.audit_bulk_lower_bound(cases, P).summary["liminf_ratio"])


def test_constant_family_audit_ratio_one():
    fam = lab.family("constant", P)
    dom = LayeredDomain(1, 1, 8, 8)
    res = [R.build(fam.kind, fam.k, e, P, dom, R.RecoveryControls()) for e in (0.01, 0.005, 0.0025)]
    cases = lab.cases_from_recovery(res, fam.k)
    assert lab.audit_theta_lower_bound(cases, P).summary["liminf_ratio"] == pytest.approx(1.0, rel=1e-12)
    assert lab.audit_bulk_lower_bound(cases, P).summary["liminf_ratio"] == pytest.approx(1.0, rel=1e-12)


def test_zero_family_audit():
    from filmlimit.model import KLDisplacement
    dom = LayeredDomain(1, 1, 8, 8)
    k = KLDisplacement.zero()
    res = [R.recovery_sobolev(k, e, P, dom) for e in (0.01, 0.005)]
    cases = lab.cases_from_recovery(res, k)
    t = lab.audit_theta_lower_bound(cases, P)
    assert all(r["E_bonding"] == 0.0 and r["relaxed"] == 0.0 and r["ratio"] == 1.0 for r in t.rows)


def test_bulk_audit_hypothesis():
    p = MaterialParams(lam_b=0.5, mu_b=1.0)
    with pytest.raises(lab.HypothesisError):
        lab.audit_bulk_lower_bound([], p)


@pytest.mark.parametrize("name", lab.FAMILY_NAMES)
def test_families_are_admissible(name):
    from filmlimit.model import validate_kl
    fam = lab.family(name, P)
    assert validate_kl(fam.k, fam.params).ok
    assert fam.kind in ("sobolev", "film", "full")


def test_unknown_family():
    with pytest.raises(ValueError):
        lab.family("spiral")
