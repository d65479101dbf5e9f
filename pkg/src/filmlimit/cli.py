"""Command-line front end.

Every command writes its CSV/JSON outputs and a ``manifest.json`` (config
hash, seed, library versions, sha256 of every output) into ``--out``.

Exit codes: 0 success, 2 validation failure, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import platform
import sys
from importlib import metadata
from pathlib import Path

import numpy as np

from . import energy2d, energy3d, geometry, lab, recovery, solvers
from . import fields as F
from .model import (Config, ConfigError, CrackSurface3D, KLDisplacement,
                    SubstrateLoad, dumps, load_config)

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL = 0, 2, 3
IDENTITY_TOL = 1e-12


class ValidationFailure(Exception):
    """Command ran but its check failed."""


class NumericalFailure(Exception):
    pass


# ---------------------------------------------------------------------------
# output stage


def fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".17g")
    return str(x)


def csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([fmt(v) for v in r])
    return buf.getvalue()


def _jsonable(o):
    if isinstance(o, dict):
        return {str(k): _jsonable(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_jsonable(v) for v in o]
    if isinstance(o, np.ndarray):
        return _jsonable(o.tolist())
    if isinstance(o, (np.floating, float)):
        f = float(o)
        return f if math.isfinite(f) else repr(f)
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, np.bool_):
        return bool(o)
    return o


def json_text(obj) -> str:
    return json.dumps(_jsonable(obj), sort_keys=True, indent=2) + "\n"


class Output:
    """Serialised writer for one run directory."""

    def __init__(self, path: Path, force: bool):
        self.path = Path(path)
        if self.path.exists() and any(self.path.iterdir()) and not force:
            raise FileExistsError(f"output directory {self.path} is not empty (use --force)")
        self.path.mkdir(parents=True, exist_ok=True)
        self.files: dict[str, str] = {}

    def write(self, name: str, data) -> None:
        raw = data.encode() if isinstance(data, str) else bytes(data)
        (self.path / name).write_bytes(raw)
        self.files[name] = hashlib.sha256(raw).hexdigest()

    def manifest(self, command: str, cfg: Config, seed: int, argv: list[str]) -> None:
        versions = {"python": platform.python_version()}
        for pkg in ("numpy", "scipy", "numba", "artifact"):
            try:
                versions[pkg] = metadata.version(pkg)
            except metadata.PackageNotFoundError:
                versions[pkg] = None
        chash = hashlib.sha256(dumps(cfg).encode()).hexdigest()
        m = {"command": command, "argv": argv, "seed": seed, "config_sha256": chash,
             "versions": versions, "files": dict(sorted(self.files.items()))}
        (self.path / "manifest.json").write_text(json_text(m))


# ---------------------------------------------------------------------------
# commands


def _eps_list(args, cfg: Config, default):
    if getattr(args, "eps", None):
        return [float(e) for e in args.eps.split(",")]
    return [float(e) for e in cfg.sweep.get("eps", default)]


def _facets(cfg: Config) -> CrackSurface3D:
    d = cfg.extra.get("facets", [])
    return CrackSurface3D.from_dict(d if isinstance(d, dict) else {"facets": d})


def cmd_eval3d(args, cfg: Config, out: Output, rng):
    comps = cfg.extra.get("field")
    if not comps or len(comps) != 3:
        raise ConfigError("eval3d needs a 'field' entry with three component strings")
    u = F.parse_field(*comps, box=((0, cfg.domain.Lx), (0, cfg.domain.Ly), (-2, 1)))
    facets = _facets(cfg)
    rows, recs = [], []
    for eps in _eps_list(args, cfg, [1.0]):
        b = energy3d.energy_breakdown(u, facets, eps, cfg.material, cfg.domain)
        rows.append((eps, b.bulk_film, b.bulk_bonding, b.surf_film, b.surf_bonding, b.total))
        recs.append(b.to_dict())
    out.write("eval3d.csv", csv_text(("eps", "E_bulk_f", "E_bulk_b", "E_surf_f", "E_surf_b", "E_total"), rows))
    out.write("eval3d.json", json_text(recs))
    for r in rows:
        print("eps=%s total=%s" % (fmt(r[0]), fmt(r[-1])))


def _kl(cfg: Config, args) -> KLDisplacement:
    if getattr(args, "case", None):
        return lab.family(args.case, cfg.material).k
    d = cfg.extra.get("kl")
    if d is None:
        raise ConfigError("a 'kl' entry or --case is required")
    return KLDisplacement.from_dict(d)


def cmd_eval2d(args, cfg: Config, out: Output, rng):
    k = _kl(cfg, args)
    grid = cfg.domain.grid
    e0 = energy2d.E0_breakdown(k, cfg.material, grid)
    res = {"E0": e0.to_dict()}
    if k.is_crack_free() and k.u3_is_zero():
        mem, deb = energy2d.J0_terms(k, cfg.material, grid)
        res["J0"] = {"membrane": mem, "debonding": deb, "total": mem + deb}
    delta = energy2d.delamination_set(k, cfg.material, grid)
    out.write("eval2d.json", json_text(res))
    out.write("delamination.pgm", geometry.to_pgm(delta))
    print("E0_total=%s" % fmt(e0.total))


def cmd_recover(args, cfg: Config, out: Output, rng):
    if args.case:
        fam = lab.family(args.case, cfg.material)
        kind, k, params = fam.kind, fam.k, fam.params
    else:
        kind, k, params = args.builder, _kl(cfg, args), cfg.material
    eps = _eps_list(args, cfg, [0.01, 0.005, 0.0025, 0.00125])
    rows = recovery.limsup_sweep(kind, k, eps, params, cfg.domain, workers=args.workers)
    out.write("sweep.csv", csv_text(recovery.CSV_COLUMNS, [r.csv_values() for r in rows]))
    summary = {"builder": kind, "rows": [r.to_dict() for r in rows]}
    gaps = [r.gap for r in rows]
    if len(rows) >= 2 and all(g > 0 for g in gaps):
        summary["fit_rate"] = recovery.fit_rate(eps, gaps)
    out.write("sweep.json", json_text(summary))
    for r in rows:
        print("eps=%s E=%s limit=%s gap=%s" % tuple(fmt(v) for v in (r.eps, r.breakdown.total, r.E_limit, r.gap)))


def cmd_solve1d(args, cfg: Config, out: Output, rng):
    s = cfg.solver
    bc = s.get("bc", [None, None])
    pb = solvers.AntiplaneProblem(int(s.get("n", 64)), int(s.get("n_u", 41)), float(s.get("U", 1.0)),
                                  cfg.material, s.get("w", 0.0), bc[0], bc[1], float(s.get("L", 1.0)))
    sol = solvers.solve_antiplane(pb)
    prof = sol.profile
    x = prof.nodes()
    um = np.concatenate([[prof.left[0]], prof.right])
    up = np.concatenate([prof.left, [prof.right[-1]]])
    jump = np.zeros(len(x), bool)
    jump[prof.jumps] = True
    p = cfg.material
    w = np.asarray(pb.w)
    wl = np.concatenate([[w[0]], w])
    wr = np.concatenate([w, [w[-1]]])
    dl = (0.5 * p.mu_b * (um - wl) ** 2 > p.kappa_b) | (0.5 * p.mu_b * (up - wr) ** 2 > p.kappa_b)
    out.write("profile.csv", csv_text(("x", "u_minus", "u_plus", "jump", "delaminated"),
                                      zip(x, um, up, jump, dl)))
    out.write("solve1d.json", json_text({"energy": sol.energy,
                                         "breakdown": energy2d.antiplane_breakdown(prof, p, pb.w).to_dict(),
                                         "jumps": prof.jumps}))
    print("energy=%s jumps=%d" % (fmt(sol.energy), len(prof.jumps)))


def cmd_membrane(args, cfg: Config, out: Output, rng):
    s = cfg.solver
    mesh = solvers.MembraneMesh(cfg.domain.Lx, cfg.domain.Ly, int(s.get("nx", cfg.domain.nx)),
                                int(s.get("ny", cfg.domain.ny)))
    load = SubstrateLoad(tuple(s.get("load", ["0", "0"])))
    sol = solvers.solve_membrane(mesh, load, cfg.material, float(s.get("tol", 1e-10)),
                                 int(s.get("maxiter", 20000)))
    xy = mesh.coords()
    u = sol.u.reshape(-1, 2)
    out.write("membrane.csv", csv_text(("x1", "x2", "u1", "u2"), np.column_stack([xy, u])))
    out.write("membrane.json", json_text({"energy": sol.energy, "iterations": sol.pcg.iterations,
                                          "residuals": sol.pcg.residuals[-1:]}))
    print("energy=%s iterations=%d" % (fmt(sol.energy), sol.pcg.iterations))


def cmd_micro(args, cfg: Config, out: Output, rng):
    prof, q = lab.micro_profile_q(args.profile, args.K)
    lo, hi = lab.micro_interval(q, cfg.material)
    ell = 0.5 * (lo + hi) if args.ell == "auto" else float(args.ell)
    m = lab.micro_energies(args.N, ell, prof, cfg.material)
    res = {"q": q, "interval": [lo, hi], **m.to_dict()}
    out.write("micro.json", json_text(res))
    print("q=%s" % fmt(q))
    print("interval=(%s, %s)" % (fmt(lo), fmt(hi)))
    print("ell=%s lhs=%s rhs=%s" % (fmt(ell), fmt(m.lhs_quadrature), fmt(m.rhs)))


def cmd_audit(args, cfg: Config, out: Output, rng):
    p = cfg.material
    eps = _eps_list(args, cfg, [0.01, 0.005, 0.0025])
    if args.family == "micro":
        prof, q = lab.micro_profile_q(args.profile, args.K)
        lo, hi = lab.micro_interval(q, p)
        Ns = sorted({max(1, int(round(1 / (2 * e)))) for e in eps})
        cases = lab.micro_cases(Ns, 0.5 * (lo + hi), prof)
    else:
        fam = lab.family(args.family, p)
        res = [recovery.build(fam.kind, fam.k, e, fam.params, cfg.domain, recovery.RecoveryControls())
               for e in eps]
        cases = lab.cases_from_recovery(res, fam.k)
    tables = []
    if args.which in ("theta", "all"):
        tables.append(lab.audit_theta_lower_bound(cases, p))
    if args.which in ("surface", "all"):
        tables.append(lab.audit_surface_eighth(cases, p))
    if args.which in ("bulk", "all"):
        tables.append(lab.audit_bulk_lower_bound(cases, p))
    for t in tables:
        keys = list(t.rows[0]) if t.rows else ["eps"]
        out.write(f"audit_{t.name}.csv", csv_text(keys, [[r[k] for k in keys] for r in t.rows]))
        out.write(f"audit_{t.name}.json", json_text(t.to_dict()))
        for k in keys[1:]:
            out.write(f"audit_{t.name}_{k}.dat",
                      "".join(f"{fmt(r['eps'])} {fmt(r[k])}\n" for r in t.rows))
        print("%s %s" % (t.name, json.dumps(_jsonable(t.summary), sort_keys=True)))


def cmd_identity(args, cfg: Config, out: Output, rng):
    A = geometry.random_symmetric(rng, args.samples)
    th = rng.uniform(0, 2 * math.pi, args.samples)
    r = geometry.tensor_decomposition_residual(A, th)
    scaled = r / (1 + np.einsum("...ij,...ij->...", A, A))
    worst = float(scaled.max())
    out.write("identity.json", json_text({"samples": args.samples, "max_residual": float(r.max()),
                                          "max_scaled_residual": worst, "tol": IDENTITY_TOL}))
    print("max residual %s (scaled %s)" % (fmt(float(r.max())), fmt(worst)))
    if worst > IDENTITY_TOL:
        raise NumericalFailure(f"scaled residual {worst:.3g} exceeds {IDENTITY_TOL:g}")


def cmd_project(args, cfg: Config, out: Output, rng):
    c = _facets(cfg)
    grid = cfg.domain.grid
    res = []
    for eps in _eps_list(args, cfg, [0.1]):
        ob = geometry.delamination_candidate(c, eps, grid, oblique=True)
        orth = geometry.delamination_candidate(c, eps, grid, oblique=False)
        tag = fmt(eps)
        out.write(f"candidate_oblique_eps{tag}.pgm", geometry.to_pgm(ob))
        out.write(f"candidate_orthogonal_eps{tag}.pgm", geometry.to_pgm(orth))
        res.append({"eps": eps, "area_oblique": ob.area, "area_orthogonal": orth.area,
                    "perimeter_oblique": ob.perimeter})
        print("eps=%s oblique=%s orthogonal=%s" % (tag, fmt(ob.area), fmt(orth.area)))
    out.write("project.json", json_text(res))


COMMANDS = {"eval3d": cmd_eval3d, "eval2d": cmd_eval2d, "recover": cmd_recover, "solve1d": cmd_solve1d,
            "membrane": cmd_membrane, "micro": cmd_micro, "audit": cmd_audit, "identity": cmd_identity,
            "project": cmd_project}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON configuration file")
    common.add_argument("--out", help="output directory (default: out/<command>)")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--force", action="store_true", help="allow writing into a non-empty directory")
    ap = argparse.ArgumentParser(prog="filmlimit", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    for name in ("eval3d", "eval2d", "project"):
        s = sub.add_parser(name, parents=[common])
        s.add_argument("--eps", help="comma-separated eps values")
        if name == "eval2d":
            s.add_argument("--case", choices=lab.FAMILY_NAMES)
    s = sub.add_parser("recover", parents=[common])
    s.add_argument("--case", choices=lab.FAMILY_NAMES)
    s.add_argument("--builder", choices=("sobolev", "film", "full"), default="sobolev")
    s.add_argument("--eps", help="comma-separated eps values")
    s.add_argument("--workers", type=int, default=1)
    sub.add_parser("solve1d", parents=[common])
    sub.add_parser("membrane", parents=[common])
    s = sub.add_parser("micro", parents=[common])
    s.add_argument("--N", type=int, default=4)
    s.add_argument("--ell", default="auto")
    s.add_argument("--profile", choices=("fourier", "separable"), default="fourier")
    s.add_argument("--K", type=int, default=7)
    s = sub.add_parser("audit", parents=[common])
    s.add_argument("--which", choices=("theta", "surface", "bulk", "all"), default="all")
    s.add_argument("--family", choices=lab.FAMILY_NAMES + ("micro",), default="delaminated")
    s.add_argument("--eps", help="comma-separated eps values")
    s.add_argument("--profile", choices=("fourier", "separable"), default="fourier")
    s.add_argument("--K", type=int, default=7)
    s = sub.add_parser("identity", parents=[common])
    s.add_argument("--samples", type=int, default=10000)
    return ap


def run(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_VALIDATION if exc.code else EXIT_OK
    try:
        cfg = load_config(args.config) if args.config else load_config({})
        out = Output(Path(args.out or f"out/{args.command}"), args.force)
    except (ConfigError, FileExistsError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    rng = np.random.default_rng(args.seed)
    code = EXIT_OK
    try:
        COMMANDS[args.command](args, cfg, out, rng)
    except NumericalFailure as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        code = EXIT_NUMERICAL
    except (solvers.ConvergenceError, FloatingPointError, ZeroDivisionError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ConfigError, ValidationFailure, ValueError, KeyError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    out.manifest(args.command, cfg, args.seed, argv)
    return code


def main() -> None:
    sys.exit(run())
