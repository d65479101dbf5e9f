import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from filmlimit import solvers as S
from filmlimit.energy2d import Profile1D
from filmlimit.model import MaterialParams, SubstrateLoad

S2 = "sin(3.141592653589793*x1)^2*sin(3.141592653589793*x2)^2"


def random_instance(rng, n_max=10, nu_max=9):
    n = int(rng.integers(2, n_max + 1))
    n_u = int(rng.choice([3, 5, 7, 9][: (nu_max - 1) // 2]))
    U = float(rng.uniform(0.5, 2.0))
    p = MaterialParams(mu_f=rng.uniform(0.05, 3), mu_b=rng.uniform(0.2, 5), kappa_f=rng.uniform(0.01, 1),
                       kappa_b=rng.uniform(0.05, 1))
    lv = np.linspace(-U, U, n_u)
    lb = float(lv[rng.integers(n_u)]) if rng.uniform() < 0.7 else None
    rb = float(lv[rng.integers(n_u)]) if rng.uniform() < 0.7 else None
    w = rng.uniform(-U, U, n) if rng.uniform() < 0.5 else 0.0
    return S.AntiplaneProblem(n, n_u, U, p, w, lb, rb)


def test_problem_validation():
    with pytest.raises(ValueError):
        S.AntiplaneProblem(1, 5, 1.0)
    with pytest.raises(ValueError):
        S.AntiplaneProblem(4, 4, 1.0)
    with pytest.raises(ValueError):
        S.AntiplaneProblem(4, 5, 1.0, left_bc=2.0)
    with pytest.raises(ValueError):
        S.AntiplaneProblem(4, 5, 1.0, left_bc=0.3).level_index(0.3)


def test_zero_bc():
    sol = S.solve_antiplane(S.AntiplaneProblem(20, 11, 1.0, left_bc=0.0, right_bc=0.0))
    assert sol.energy == 0.0
    assert np.all(sol.profile.left == 0) and np.all(sol.profile.right == 0)
    assert S.brute_force_antiplane(S.AntiplaneProblem(6, 5, 1.0, left_bc=0.0, right_bc=0.0)).energy == 0.0


@pytest.mark.parametrize("seed", range(30))
def test_dp_equals_brute_force(seed):
    pb = random_instance(np.random.default_rng(seed), n_max=12, nu_max=9)
    dp = S.solve_antiplane(pb, max_jumps=2)
    bf = S.brute_force_antiplane(pb, max_jumps=2)
    assert dp.energy == bf.energy
    assert dp.objective == pytest.approx(dp.energy, rel=1e-12, abs=1e-14)


@pytest.mark.parametrize("seed", range(10))
def test_dp_equals_enumeration(seed):
    rng = np.random.default_rng(1000 + seed)
    pb = random_instance(rng, n_max=3, nu_max=5)
    dp = S.solve_antiplane(pb)
    en = S.enumerate_antiplane(pb)
    assert dp.energy == pytest.approx(en.energy, rel=1e-12, abs=1e-15)


def test_oracle_size_limits():
    with pytest.raises(S.InstanceTooLargeError):
        S.brute_force_antiplane(S.AntiplaneProblem(30, 5, 1.0))
    with pytest.raises(S.InstanceTooLargeError):
        S.brute_force_antiplane(S.AntiplaneProblem(10, 17, 1.0))
    with pytest.raises(S.InstanceTooLargeError):
        S.enumerate_antiplane(S.AntiplaneProblem(10, 5, 1.0))


@pytest.mark.parametrize("seed", range(5))
def test_dp_beats_random_profiles(seed):
    rng = np.random.default_rng(50 + seed)
    pb = random_instance(rng, n_max=40, nu_max=9)
    best = S.solve_antiplane(pb).energy
    lv = pb.levels
    for _ in range(100):
        li = rng.integers(pb.n_u, size=pb.n)
        ri = np.where(rng.uniform(size=pb.n) < 0.7, np.roll(li, -1), rng.integers(pb.n_u, size=pb.n))
        if pb.left_bc is not None:
            li[0] = pb.level_index(pb.left_bc)
        if pb.right_bc is not None:
            ri[-1] = pb.level_index(pb.right_bc)
        assert best <= pb.energy(Profile1D(pb.L, lv[li], lv[ri])) + 1e-12


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31))
def test_refinement_monotone(seed):
    rng = np.random.default_rng(seed)
    pb = random_instance(rng, n_max=20, nu_max=9)
    fine = S.AntiplaneProblem(pb.n, 2 * pb.n_u - 1, pb.U, pb.params, pb.w, pb.left_bc, pb.right_bc)
    assert S.solve_antiplane(fine).energy <= S.solve_antiplane(pb).energy + 1e-12


def test_small_kappa_f_single_jump():
    p = MaterialParams(mu_f=1.0, mu_b=1.0, kappa_f=0.01, kappa_b=10.0)
    pb = S.AntiplaneProblem(50, 21, 1.0, p, left_bc=0.0, right_bc=1.0)
    sol = S.solve_antiplane(pb)
    assert sol.jumps.tolist() == [pb.n - 1]
    assert np.all(sol.profile.left[:-1] == 0)
    assert sol.energy == pytest.approx(p.kappa_f, abs=pb.h * p.mu_b / 2 + 1e-12)
    assert sol.energy < S.coth_energy(1.0, p)


def test_forced_delamination():
    p = MaterialParams(mu_f=100.0, mu_b=2.0, kappa_f=100.0, kappa_b=1.0)
    pb = S.AntiplaneProblem(20, 9, 2.0, p, left_bc=2.0, right_bc=2.0)
    sol = S.solve_antiplane(pb)
    assert sol.delamination().sum() > 0
    assert sol.energy == pytest.approx(p.kappa_b)
    no_delam = 0.5 * p.mu_b * 4.0
    assert sol.energy < no_delam


@pytest.mark.parametrize("factor, branch", [(0.5, "quadratic"), (2.0, "capped")])
def test_threshold_branches(factor, branch):
    p = MaterialParams(mu_f=1.0, mu_b=2.0, kappa_f=10.0, kappa_b=1.0)
    ell = factor * p.threshold
    sol = S.solve_antiplane(S.AntiplaneProblem(40, 21, ell, p, left_bc=ell, right_bc=ell))
    expect = 0.5 * p.mu_b * ell**2 if branch == "quadratic" else p.kappa_b
    assert sol.energy == pytest.approx(expect, rel=1e-12)


def test_coth_convergence():
    p = MaterialParams(mu_f=1.0, mu_b=1e4, kappa_f=1e6, kappa_b=1e6)
    ref = S.coth_energy(0.01, p)
    errs = []
    for n in (250, 500):
        sol = S.solve_antiplane(S.AntiplaneProblem(n, 2001, 0.01, p, left_bc=0.0, right_bc=0.01))
        assert len(sol.jumps) == 0
        errs.append(abs(sol.energy - ref) / ref)
    assert errs[1] < errs[0]


def test_coth_formula_limit():
    p = MaterialParams(mu_f=2.0, mu_b=3.0)
    # short interval: coth(kL) ~ 1/(kL), energy ~ mu_f delta^2 / (2 L)
    assert S.coth_energy(0.1, p, L=1e-4) == pytest.approx(p.mu_f * 0.01 / (2e-4), rel=1e-6)


def test_membrane_zero_and_constant():
    p = MaterialParams(lam_f=1.3, mu_f=0.7, mu_b=2.0)
    mesh = S.MembraneMesh(1, 1, 8, 8)
    z = S.solve_membrane(mesh, SubstrateLoad(("0", "0")), p)
    assert z.energy == 0.0 and np.all(z.u == 0)
    c = S.solve_membrane(mesh, SubstrateLoad(("0.3", "-0.2")), p, tol=1e-12)
    np.testing.assert_allclose(c.nodal()[..., 0], 0.3, atol=1e-10)
    np.testing.assert_allclose(c.nodal()[..., 1], -0.2, atol=1e-10)
    assert abs(c.energy) < 1e-10


def test_membrane_manufactured_rate():
    p = MaterialParams(lam_f=1.3, mu_f=0.7, mu_b=2.0)
    us = (f"0.5*{S2}", f"0.3*{S2}*cos(x1)")
    w = S.manufactured_load(us, p)
    from filmlimit import fields as F
    e1, e2 = F.parse_expr(us[0]), F.parse_expr(us[1])

    def exact(P):
        P3 = np.concatenate([P, np.zeros(P.shape[:-1] + (1,))], -1)
        return np.stack([e1.evaluate(P3), e2.evaluate(P3)], -1)

    errs = [S.solve_membrane(S.MembraneMesh(1, 1, n, n), w, p, tol=1e-12).l2_error(exact) for n in (8, 16, 32)]
    ratios = [errs[i] / errs[i + 1] for i in range(2)]
    assert all(3.5 <= r <= 4.5 for r in ratios)


def test_membrane_energy_monotone_and_residual():
    p = MaterialParams(mu_b=0.5)
    sol = S.solve_membrane(S.MembraneMesh(1, 1, 16, 16), SubstrateLoad(("x1*x2", "sin(x1)")), p, tol=1e-10)
    E = np.array(sol.pcg.energies)
    # CG decreases the quadratic energy; allow roundoff at convergence
    assert np.all(np.diff(E) <= 1e-12 * np.max(np.abs(E)))
    assert sol.pcg.residuals[-1] <= 1e-10 * sol.pcg.residuals[0]


def test_membrane_mirror_symmetry():
    p = MaterialParams(lam_f=1.3, mu_f=0.7, mu_b=2.0)
    mesh = S.MembraneMesh(2, 1, 12, 6)
    w = SubstrateLoad(("(x1-1)^3*x2", "(x1-1)^2 + x2"))
    sol = S.solve_membrane(mesh, w, p, tol=1e-13).nodal()
    mirrored = sol[::-1].copy()
    mirrored[..., 0] *= -1
    assert np.max(np.abs(sol - mirrored)) <= 1e-10


def test_pcg_nonconvergence():
    import scipy.sparse as sp
    A = sp.diags(np.linspace(1, 1e6, 200)).tocsr() + sp.eye(200, k=1) * 0.5 + sp.eye(200, k=-1) * 0.5
    with pytest.raises(S.ConvergenceError):
        S.pcg(A.tocsr(), np.ones(200), tol=1e-14, maxiter=2)
    with pytest.raises(ValueError):
        S.solve_membrane(S.MembraneMesh(1, 1, 2, 2), SubstrateLoad(("0", "0")), MaterialParams(), tol=0.0)
