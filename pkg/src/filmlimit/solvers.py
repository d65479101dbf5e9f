"""Global minimisation of the discrete anti-plane energy and the membrane
problem on an elastic foundation."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from numba import njit

from . import fields as F
from .energy2d import Profile1D, antiplane_energy
from .model import MaterialParams, SubstrateLoad

INF = np.inf


class ConvergenceError(RuntimeError):
    pass


class InstanceTooLargeError(ValueError):
    pass


# ---------------------------------------------------------------------------
# anti-plane dynamic programme


@dataclass
class AntiplaneProblem:
    """Discrete anti-plane instance.

    Profiles are piecewise linear on ``n`` uniform cells of ``(0, L)`` with
    end values on ``n_u`` equispaced levels in ``[-U, U]``.  ``w`` is a
    per-cell substrate offset.  ``left_bc``/``right_bc`` fix ``u(0)`` and
    ``u(L)`` when given; they must be levels.
    """

    n: int
    n_u: int
    U: float
    params: MaterialParams = field(default_factory=MaterialParams)
    w: object = 0.0
    left_bc: float | None = None
    right_bc: float | None = None
    L: float = 1.0

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("n must be >= 2")
        if self.n_u < 3 or self.n_u % 2 == 0:
            raise ValueError("n_u must be odd and >= 3 so that 0 is a level")
        if not self.U > 0:
            raise ValueError("U must be positive")
        self.w = np.array(np.broadcast_to(np.asarray(self.w, dtype=float), (self.n,)))
        for bc in (self.left_bc, self.right_bc):
            if bc is not None and abs(bc) > self.U * (1 + 1e-12):
                raise ValueError(f"boundary datum {bc} outside [-U, U]")

    @property
    def levels(self) -> np.ndarray:
        return np.linspace(-self.U, self.U, self.n_u)

    @property
    def h(self) -> float:
        return self.L / self.n

    def level_index(self, v: float | None) -> int:
        if v is None:
            return -1
        lv = self.levels
        j = int(np.argmin(np.abs(lv - v)))
        if abs(lv[j] - v) > 1e-12 * max(1.0, self.U):
            raise ValueError(f"boundary datum {v} is not a level of the grid")
        return j

    def half_cell_cost(self) -> np.ndarray:
        """``h/2 g_c(level)`` with ``g = min(mu_b (u - w)^2 / 2, kappa_b)``, shape ``(n, n_u)``."""
        p = self.params
        d = self.levels[None, :] - self.w[:, None]
        return 0.5 * self.h * np.minimum(0.5 * p.mu_b * d * d, p.kappa_b)

    def profile(self, li: np.ndarray, ri: np.ndarray) -> Profile1D:
        lv = self.levels
        return Profile1D(self.L, lv[li], lv[ri])

    def energy(self, prof: Profile1D) -> float:
        return antiplane_energy(prof, self.params, self.w)


@njit(cache=True)
def _dist_transform(f, q, out, arg):
    """``out[j] = min_k f[k] + q (j - k)^2`` (lower envelope of parabolas)."""
    n = f.shape[0]
    v = np.empty(n, np.int64)
    z = np.empty(n + 1)
    k = -1
    for i in range(n):
        if f[i] == np.inf:
            continue
        if k < 0:
            k = 0
            v[0] = i
            z[0] = -np.inf
            z[1] = np.inf
            continue
        while True:
            r = v[k]
            s = ((f[i] + q * i * i) - (f[r] + q * r * r)) / (2.0 * q * (i - r))
            if s <= z[k]:
                k -= 1
                if k < 0:
                    break
            else:
                break
        k += 1
        v[k] = i
        z[k] = s if k > 0 else -np.inf
        z[k + 1] = np.inf
    if k < 0:
        for j in range(n):
            out[j] = np.inf
            arg[j] = -1
        return
    k = 0
    for j in range(n):
        while z[k + 1] < j:
            k += 1
        r = v[k]
        out[j] = f[r] + q * (j - r) * (j - r)
        arg[j] = r


@njit(cache=True)
def _dp_core(hc, q, kappa_f, lfix, rfix, nlayers, capped):
    """Forward sweep over cells; states (jump layer, level).

    Returns the optimum and the argmin level indices of each cell end.
    """
    n, nu = hc.shape
    D = np.full((nlayers, nu), np.inf)
    E = np.empty((nlayers, nu))
    arg_cell = np.empty((n, nlayers, nu), np.int64)
    arg_jump = np.empty((n, nlayers, nu), np.int64)
    arg_layer = np.empty((n, nlayers, nu), np.int64)
    tmp = np.empty(nu)
    out = np.empty(nu)
    arg = np.empty(nu, np.int64)
    for c in range(n):
        # node c: entry into cell c
        if c == 0:
            for l in range(nlayers):
                for v in range(nu):
                    E[l, v] = np.inf
                    arg_jump[0, l, v] = v
                    arg_layer[0, l, v] = l
            for v in range(nu):
                if lfix < 0 or v == lfix:
                    E[0, v] = 0.0
        else:
            for l in range(nlayers):
                src = l - 1 if capped else l
                b1 = np.inf
                b2 = np.inf
                i1 = -1
                i2 = -1
                if src >= 0:
                    for v in range(nu):
                        x = D[src, v]
                        if x < b1:
                            b2, i2 = b1, i1
                            b1, i1 = x, v
                        elif x < b2:
                            b2, i2 = x, v
                for v in range(nu):
                    best = D[l, v]
                    bj = v
                    bl = l
                    if src >= 0:
                        if i1 != v:
                            cand, ci = b1, i1
                        else:
                            cand, ci = b2, i2
                        if ci >= 0 and cand + kappa_f < best:
                            best = cand + kappa_f
                            bj = ci
                            bl = src
                    E[l, v] = best
                    arg_jump[c, l, v] = bj
                    arg_layer[c, l, v] = bl
        # cell c
        for l in range(nlayers):
            for v in range(nu):
                tmp[v] = E[l, v] + hc[c, v]
            _dist_transform(tmp, q, out, arg)
            for v in range(nu):
                D[l, v] = out[v] + hc[c, v]
                arg_cell[c, l, v] = arg[v]
    best = np.inf
    bl, bv = -1, -1
    for l in range(nlayers):
        for v in range(nu):
            if rfix >= 0 and v != rfix:
                continue
            if D[l, v] < best:
                best = D[l, v]
                bl, bv = l, v
    left = np.empty(n, np.int64)
    right = np.empty(n, np.int64)
    if bl < 0:
        return best, left, right
    l, v = bl, bv
    for c in range(n - 1, -1, -1):
        right[c] = v
        a = arg_cell[c, l, v]
        left[c] = a
        v = arg_jump[c, l, a]
        l = arg_layer[c, l, a]
    return best, left, right


@dataclass
class AntiplaneSolution:
    profile: Profile1D
    energy: float
    objective: float
    problem: AntiplaneProblem

    @property
    def jumps(self) -> np.ndarray:
        return self.profile.jumps

    def delamination(self) -> np.ndarray:
        return self.profile.delamination(self.problem.params, self.problem.w)


def solve_antiplane(pb: AntiplaneProblem, max_jumps: int | None = None) -> AntiplaneSolution:
    """Exact global minimum of the discrete anti-plane energy.

    Shortest path over states (node, level): the cell transition is a
    squared-distance transform, a jump at an interior node costs
    ``kappa_f``.  ``max_jumps`` restricts the number of jumps.
    """
    p = pb.params
    dlev = 2 * pb.U / (pb.n_u - 1)
    q = 0.5 * p.mu_f * dlev * dlev / pb.h
    if q <= 0:
        raise ValueError("mu_f must be positive")
    capped = max_jumps is not None
    nl = max_jumps + 1 if capped else 1
    obj, li, ri = _dp_core(pb.half_cell_cost(), q, p.kappa_f, pb.level_index(pb.left_bc),
                           pb.level_index(pb.right_bc), nl, capped)
    if not math.isfinite(obj):
        raise ConvergenceError("no admissible profile")
    prof = pb.profile(li, ri)
    return AntiplaneSolution(prof, pb.energy(prof), float(obj), pb)


def _cell_matrices(pb: AntiplaneProblem) -> np.ndarray:
    lv = pb.levels
    hc = pb.half_cell_cost()
    el = 0.5 * pb.params.mu_f * (lv[None, :] - lv[:, None]) ** 2 / pb.h
    return hc[:, :, None] + el[None] + hc[:, None, :]


def brute_force_antiplane(pb: AntiplaneProblem, max_jumps: int = 2) -> AntiplaneSolution:
    """Enumerate all jump placements (at most ``max_jumps``) and all level sequences.

    For each placement the minimum over level sequences is a min-plus matrix
    chain, which enumerates every sequence implicitly.
    """
    if pb.n > 24 or pb.n_u > 15 or max_jumps > 2:
        raise InstanceTooLargeError("oracle limited to n <= 24, n_u <= 15, jumps <= 2")
    C = _cell_matrices(pb)
    nu = pb.n_u
    stay = np.where(np.eye(nu, dtype=bool), 0.0, INF)
    jump = np.where(np.eye(nu, dtype=bool), INF, pb.params.kappa_f)
    start = np.full(nu, INF)
    lf, rf = pb.level_index(pb.left_bc), pb.level_index(pb.right_bc)
    if lf < 0:
        start[:] = 0.0
    else:
        start[lf] = 0.0
    best = (INF, None)
    for r in range(max_jumps + 1):
        for S in itertools.combinations(range(1, pb.n), r):
            vec = start
            back = []
            for c in range(pb.n):
                if c > 0:
                    T = jump if c in S else stay
                    M = vec[:, None] + T
                    a = np.argmin(M, axis=0)
                    vec = M[a, np.arange(nu)]
                    back.append(("node", a))
                M = vec[:, None] + C[c]
                a = np.argmin(M, axis=0)
                vec = M[a, np.arange(nu)]
                back.append(("cell", a))
            if rf >= 0:
                v, val = rf, vec[rf]
            else:
                v = int(np.argmin(vec))
                val = vec[v]
            if val < best[0]:
                best = (float(val), (v, back))
    if best[1] is None:
        raise ConvergenceError("no admissible profile")
    v, back = best[1]
    li = np.empty(pb.n, int)
    ri = np.empty(pb.n, int)
    c = pb.n - 1
    for kind, a in reversed(back):
        if kind == "cell":
            ri[c] = v
            v = a[v]
            li[c] = v
            c -= 1
        else:
            v = a[v]
    prof = pb.profile(li, ri)
    return AntiplaneSolution(prof, pb.energy(prof), best[0], pb)


def enumerate_antiplane(pb: AntiplaneProblem) -> AntiplaneSolution:
    """Plain enumeration of every end-value pair per cell (tiny instances only)."""
    if pb.n_u ** (2 * pb.n) > 2_000_000:
        raise InstanceTooLargeError("full enumeration limited to n_u**(2n) <= 2e6")
    lv = pb.levels
    lf, rf = pb.level_index(pb.left_bc), pb.level_index(pb.right_bc)
    best = (INF, None)
    for seq in itertools.product(range(pb.n_u), repeat=2 * pb.n):
        li, ri = np.array(seq[0::2]), np.array(seq[1::2])
        if (lf >= 0 and li[0] != lf) or (rf >= 0 and ri[-1] != rf):
            continue
        e = pb.energy(Profile1D(pb.L, lv[li], lv[ri]))
        if e < best[0]:
            best = (e, (li, ri))
    prof = pb.profile(*best[1])
    return AntiplaneSolution(prof, best[0], best[0], pb)


def coth_energy(delta: float, params: MaterialParams, L: float = 1.0) -> float:
    """Minimum of ``mu_f/2 int u'^2 + mu_b/2 int u^2`` with ``u(0) = 0``, ``u(L) = delta``."""
    k = math.sqrt(params.mu_b / params.mu_f)
    return 0.5 * delta**2 * math.sqrt(params.mu_f * params.mu_b) / math.tanh(k * L)


# ---------------------------------------------------------------------------
# membrane on an elastic foundation


_G2 = np.array([-1.0, 1.0]) / math.sqrt(3.0)
_G3 = (np.array([-math.sqrt(0.6), 0.0, math.sqrt(0.6)]), np.array([5.0, 8.0, 5.0]) / 9.0)


def _q1(xi, eta):
    N = 0.25 * np.array([(1 - xi) * (1 - eta), (1 + xi) * (1 - eta), (1 + xi) * (1 + eta), (1 - xi) * (1 + eta)])
    dN = 0.25 * np.array([[-(1 - eta), -(1 - xi)], [(1 - eta), -(1 + xi)],
                          [(1 + eta), (1 + xi)], [-(1 + eta), (1 - xi)]])
    return N, dN


@dataclass
class MembraneMesh:
    Lx: float
    Ly: float
    nx: int
    ny: int

    @property
    def hx(self):
        return self.Lx / self.nx

    @property
    def hy(self):
        return self.Ly / self.ny

    @property
    def n_nodes(self):
        return (self.nx + 1) * (self.ny + 1)

    def node(self, i, j):
        return i * (self.ny + 1) + j

    def coords(self) -> np.ndarray:
        X, Y = np.meshgrid(np.linspace(0, self.Lx, self.nx + 1), np.linspace(0, self.Ly, self.ny + 1), indexing="ij")
        return np.stack([X.ravel(), Y.ravel()], axis=-1)

    def elements(self) -> np.ndarray:
        i, j = np.meshgrid(np.arange(self.nx), np.arange(self.ny), indexing="ij")
        i, j = i.ravel(), j.ravel()
        return np.stack([self.node(i, j), self.node(i + 1, j), self.node(i + 1, j + 1), self.node(i, j + 1)], -1)


def _element_matrices(mesh: MembraneMesh, params: MaterialParams):
    """Element stiffness of ``2 int [lam* div^2 + mu_f e:e] + mu_b int |u|^2``."""
    hx, hy = mesh.hx, mesh.hy
    lam2, mu = 2 * params.lam_star, params.mu_f
    D = np.array([[lam2 + 2 * mu, lam2, 0], [lam2, lam2 + 2 * mu, 0], [0, 0, mu]])
    K = np.zeros((8, 8))
    for xi in _G2:
        for eta in _G2:
            N, dN = _q1(xi, eta)
            dx = dN[:, 0] * 2 / hx
            dy = dN[:, 1] * 2 / hy
            B = np.zeros((3, 8))
            B[0, 0::2] = dx
            B[1, 1::2] = dy
            B[2, 0::2] = dy
            B[2, 1::2] = dx
            w = hx * hy / 4
            K += w * (B.T @ D @ B)
            Nv = np.zeros((2, 8))
            Nv[0, 0::2] = N
            Nv[1, 1::2] = N
            K += w * params.mu_b * (Nv.T @ Nv)
    return K


def _gauss3_points(mesh: MembraneMesh):
    g, wg = _G3
    pts, wts, shape = [], [], []
    for a, wa in zip(g, wg):
        for b, wb in zip(g, wg):
            N, _ = _q1(a, b)
            pts.append((a, b))
            wts.append(wa * wb * mesh.hx * mesh.hy / 4)
            shape.append(N)
    return np.array(pts), np.array(wts), np.array(shape)


def _element_origins(mesh: MembraneMesh):
    i, j = np.meshgrid(np.arange(mesh.nx), np.arange(mesh.ny), indexing="ij")
    return np.stack([i.ravel() * mesh.hx, j.ravel() * mesh.hy], -1)


def _quad_points(mesh: MembraneMesh):
    pts, wts, shape = _gauss3_points(mesh)
    org = _element_origins(mesh)
    phys = org[:, None, :] + (pts[None] + 1) / 2 * np.array([mesh.hx, mesh.hy])
    return phys, wts, shape


@dataclass
class PCGResult:
    x: np.ndarray
    iterations: int
    residuals: list
    energies: list


def pcg(A, b, tol=1e-10, maxiter=10000, x0=None) -> PCGResult:
    """Jacobi-preconditioned conjugate gradients for SPD ``A``.

    Records ``||r|| / ||b||`` and the quadratic energy ``x.Ax/2 - b.x`` per
    iteration.

    Raises
    ------
    ConvergenceError
        If the relative residual is still above ``tol`` after ``maxiter``.
    """
    dinv = 1.0 / A.diagonal()
    x = np.zeros_like(b) if x0 is None else x0.copy()
    r = b - A @ x
    nb = np.linalg.norm(b)
    if nb == 0:
        return PCGResult(np.zeros_like(b), 0, [0.0], [0.0])
    z = dinv * r
    d = z.copy()
    rz = r @ z
    res = [np.linalg.norm(r) / nb]
    en = [0.5 * x @ (A @ x) - b @ x]
    for it in range(1, maxiter + 1):
        Ad = A @ d
        alpha = rz / (d @ Ad)
        x += alpha * d
        r -= alpha * Ad
        res.append(np.linalg.norm(r) / nb)
        en.append(0.5 * x @ (b - r) - b @ x)
        if res[-1] <= tol:
            return PCGResult(x, it, res, en)
        z = dinv * r
        rz_new = r @ z
        d = z + (rz_new / rz) * d
        rz = rz_new
    raise ConvergenceError(f"PCG did not reach {tol:g} in {maxiter} iterations (residual {res[-1]:.3g})")


@dataclass
class MembraneSolution:
    mesh: MembraneMesh
    u: np.ndarray
    energy: float
    pcg: PCGResult

    def nodal(self) -> np.ndarray:
        """Nodal values shaped ``(nx+1, ny+1, 2)``."""
        return self.u.reshape(self.mesh.nx + 1, self.mesh.ny + 1, 2)

    def l2_error(self, exact) -> float:
        """L2 distance to ``exact(pts) -> (..., 2)`` with 3x3 Gauss per element."""
        phys, wts, shape = _quad_points(self.mesh)
        U = self.u.reshape(-1, 2)[self.mesh.elements()]
        uh = np.einsum("qa,eac->eqc", shape, U)
        d = uh - exact(phys)
        return math.sqrt(float(np.sum(wts[None, :] * np.sum(d * d, axis=-1))))


def assemble_membrane(mesh: MembraneMesh, params: MaterialParams):
    Ke = _element_matrices(mesh, params)
    el = mesh.elements()
    dofs = np.stack([2 * el, 2 * el + 1], -1).reshape(len(el), 8)
    rows = np.repeat(dofs, 8, axis=1).ravel()
    cols = np.tile(dofs, (1, 8)).ravel()
    vals = np.tile(Ke.ravel(), len(el))
    n = 2 * mesh.n_nodes
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n)), dofs


def solve_membrane(mesh: MembraneMesh, w: SubstrateLoad, params: MaterialParams, tol: float = 1e-10,
                   maxiter: int = 20000) -> MembraneSolution:
    """Q1 minimiser of ``int [lam* div^2 + mu_f e:e] + mu_b/2 int |u - w|^2`` with natural BCs.

    Stiffness and mass use 2x2 Gauss; the load uses 3x3 Gauss.  Returns
    the nodal field and the energy (including the constant ``mu_b/2 int |w|^2``).
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    K, dofs = assemble_membrane(mesh, params)
    phys, wts, shape = _quad_points(mesh)
    W = w.value(phys)
    fe = params.mu_b * np.einsum("q,qa,eqc->eac", wts, shape, W).reshape(len(dofs), 8)
    b = np.zeros(K.shape[0])
    np.add.at(b, dofs.ravel(), fe.ravel())
    c = 0.5 * params.mu_b * float(np.sum(wts[None, :] * np.sum(W * W, axis=-1)))
    res = pcg(K, b, tol, maxiter)
    u = res.x
    energy = 0.5 * u @ (K @ u) - b @ u + c
    return MembraneSolution(mesh, u, float(energy), res)


def manufactured_load(ustar: tuple, params: MaterialParams) -> SubstrateLoad:
    """``w = u* - (2/mu_b) div(A e(u*))`` with ``A e = lam* tr(e) I + mu_f e``."""
    u1, u2 = (F.as_expr(e) for e in ustar)
    ls, mu = F.Const(params.lam_star), F.Const(params.mu_f)
    e11, e22 = u1.diff(0), u2.diff(1)
    e12 = F.Const(0.5) * (u1.diff(1) + u2.diff(0))
    tr = e11 + e22
    s11 = ls * tr + mu * e11
    s22 = ls * tr + mu * e22
    s12 = mu * e12
    c = F.Const(2.0 / params.mu_b)
    w1 = u1 - c * (s11.diff(0) + s12.diff(1))
    w2 = u2 - c * (s12.diff(0) + s22.diff(1))
    return SubstrateLoad((w1, w2))
