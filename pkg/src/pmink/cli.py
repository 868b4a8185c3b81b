"""Command line front end.

Subcommands: check (classify a problem), solve (run the matching driver and
write artifacts), oracle (radial reference profiles to CSV), reconstruct
(solve then Legendre-dualize to a mesh), barriers (print the certified
envelope constants). Exit codes: 0 success, 1 configuration or parse error,
2 refused by a nonexistence certificate, 3 an admissibility condition
failed, 4 the numerical stage failed.
"""
from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import admissibility, config as _config, pipelines, radial
from .errors import (ConditionFailed, ConfigError, MissingBounds,
                     NonexistentByLemma, PminkError)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_REFUSED = 2
EXIT_CONDITION = 3
EXIT_NUMERIC = 4


def _add_common(sp):
    sp.add_argument("--config", required=True, help="JSON problem description")
    sp.add_argument("--out", default=None, help="artifact directory")
    sp.add_argument("--grid-h", type=float, default=None,
                    help="override solver spacing")
    sp.add_argument("--max-iters", type=int, default=None,
                    help="override the Newton iteration cap")
    sp.add_argument("--reproducible", action="store_true",
                    help="record library versions and pin thread counts")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="pmink",
        description="solvers for prescribed-curvature support functions")
    sub = ap.add_subparsers(dest="command", required=True)

    _add_common(sub.add_parser("check", help="classify without solving"))
    _add_common(sub.add_parser("solve", help="solve and certify"))
    _add_common(sub.add_parser("barriers", help="print certified envelopes"))

    rp = sub.add_parser("reconstruct", help="solve then mesh the dual graph")
    _add_common(rp)
    rp.add_argument("--gradient-cap", type=float, default=None,
                    help="clip the dual window at this gradient magnitude")
    rp.add_argument("--dual-shape", type=int, default=None,
                    help="dual grid nodes per axis")

    op = sub.add_parser("oracle", help="radial reference profile to CSV")
    op.add_argument("--form", default="constant",
                    choices=["constant", "p_less_one", "power_p"])
    op.add_argument("--p", type=float, default=None)
    op.add_argument("--n", type=int, default=2)
    op.add_argument("--R", type=float, default=1.0)
    op.add_argument("--radius", type=float, default=1.0)
    op.add_argument("--target", type=float, default=0.0)
    op.add_argument("--out", default="oracle.csv")
    return ap


def _ensure_dir(path):
    if path:
        os.makedirs(path, exist_ok=True)
    return path


def _repro_stamp(enabled: bool) -> dict:
    import scipy
    stamp = {"numpy": np.__version__, "scipy": scipy.__version__,
             "python": sys.version.split()[0]}
    if enabled:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS",
                    "MKL_NUM_THREADS"):
            os.environ.setdefault(var, "1")
        stamp["threads_pinned"] = True
    return stamp


def _write_nodes_csv(path, op, u) -> None:
    cols = [op.nodes[:, i] for i in range(op.nodes.shape[1])]
    data = np.column_stack(cols + [u])
    header = ",".join([f"x{i+1}" for i in range(op.nodes.shape[1])] + ["u"])
    np.savetxt(path, data, delimiter=",", header=header, comments="",
               fmt="%.17g")


def _load_config(args) -> _config.RunConfig:
    return _config.load(args.config)


def cmd_check(args) -> int:
    cfg = _load_config(args)
    spec = cfg.problem_spec()
    verdict = admissibility.classify(spec)
    payload = verdict.to_dict()
    print(json.dumps(payload, indent=2, default=float))
    if verdict.status == "NonexistentByLemma":
        return EXIT_REFUSED
    if verdict.status == "ConditionFailed":
        return EXIT_CONDITION
    return EXIT_OK


def _solver_params(cfg, args):
    sv = cfg.solver
    h = args.grid_h if args.grid_h is not None else sv.get("h", 1.0 / 32.0)
    tol = sv.get("tol", 1e-8)
    max_newton = args.max_iters if args.max_iters is not None \
        else sv.get("max_newton", 80)
    return float(h), float(tol), int(max_newton)


def cmd_solve(args) -> int:
    cfg = _load_config(args)
    spec = cfg.problem_spec()
    h, tol, max_newton = _solver_params(cfg, args)
    out = _ensure_dir(args.out or cfg.output.get("dir"))
    stamp = _repro_stamp(args.reproducible)

    if spec.case in ("PLessOne", "TypeI"):
        sol = pipelines.solve_problem(spec, h, tol_solve=tol,
                                      max_newton=max_newton)
        summary = sol.summary()
        summary["environment"] = stamp
        if out:
            _write_nodes_csv(os.path.join(out, "u.csv"), sol.op, sol.values())
            with open(os.path.join(out, "summary.json"), "w") as fh:
                json.dump(summary, fh, indent=2, default=float)
        print(json.dumps(summary, indent=2, default=float))
        return EXIT_OK

    if spec.case == "TypeII":
        pr = cfg.problem
        ts = pipelines.solve_type_II(
            spec.n, spec.p, float(pr["q"]), spec.curvature, h=h,
            k_max=int(cfg.solver.get("k_max", 3)), tol_solve=tol,
            max_newton=max_newton)
        summary = ts.summary()
        summary["environment"] = stamp
        if out:
            _write_nodes_csv(os.path.join(out, "u.csv"), ts.op,
                             ts.u.masked_values())
            with open(os.path.join(out, "summary.json"), "w") as fh:
                json.dump(summary, fh, indent=2, default=float)
        print(json.dumps(summary, indent=2, default=float))
        return EXIT_OK

    # TypeIII
    pr = cfg.problem
    section = cfg.domain("section")
    phi = cfg.boundary_data(spec.n)
    ts3 = pipelines.solve_type_III(
        section, spec.m_free, spec.p, spec.curvature, spec.g, spec.h, phi,
        L=float(pr.get("half_length", cfg.solver.get("L", 4.0))), h=h,
        tol_solve=tol, max_newton=max_newton)
    summary = {"window_diff": ts3.window_diff, "window_tol": ts3.window_tol,
               "n_nodes": int(ts3.op.N), "environment": stamp}
    if ts3.completeness is not None:
        summary["completeness"] = ts3.completeness.to_dict()
    if out:
        _write_nodes_csv(os.path.join(out, "u.csv"), ts3.op,
                         ts3.u.masked_values())
        with open(os.path.join(out, "summary.json"), "w") as fh:
            json.dump(summary, fh, indent=2, default=float)
    print(json.dumps(summary, indent=2, default=float))
    return EXIT_OK


def cmd_reconstruct(args) -> int:
    cfg = _load_config(args)
    spec = cfg.problem_spec()
    if spec.case not in ("PLessOne", "TypeI"):
        raise ConfigError("reconstruct drives the bounded Dirichlet cases")
    h, tol, max_newton = _solver_params(cfg, args)
    out = _ensure_dir(args.out or cfg.output.get("dir"))

    sol = pipelines.solve_problem(spec, h, tol_solve=tol,
                                  max_newton=max_newton)
    shape = None
    if args.dual_shape is not None:
        shape = (args.dual_shape,) * spec.n
    rec = pipelines.reconstruct(sol, gradient_cap=args.gradient_cap,
                                dual_shape=shape)
    summary = {
        "dual_box": rec.dual_box.tolist(),
        "residual": rec.residual,
        "shell_H": rec.shell_H,
        "n_vertices": int(len(rec.surface.vertices)),
        "n_faces": int(len(rec.surface.faces)),
    }
    if out:
        mesh_kind = cfg.output.get("mesh", "ply")
        if mesh_kind in ("ply", "both") and spec.n <= 2:
            rec.surface.to_ply(os.path.join(out, "surface.ply"))
        if mesh_kind in ("csv", "both"):
            rec.surface.to_csv(os.path.join(out, "surface.csv"))
        with open(os.path.join(out, "reconstruction.json"), "w") as fh:
            json.dump(summary, fh, indent=2, default=float)
    print(json.dumps(summary, indent=2, default=float))
    return EXIT_OK


def cmd_barriers(args) -> int:
    cfg = _load_config(args)
    spec = cfg.problem_spec()
    h, tol, _ = _solver_params(cfg, args)

    if spec.case == "TypeII":
        from .barriers import typeII_barriers
        q = float(cfg.problem["q"])
        asym = typeII_barriers(spec.n, spec.p, q, spec.curvature)
        payload = {"provenance": "PowerLawAsymptote",
                   "delta": asym.delta, "gamma": asym.gamma,
                   "C1": asym.C1, "C2": asym.C2,
                   "mu_lo": asym.mu_lo, "mu_hi": asym.mu_hi}
        print(json.dumps(payload, indent=2, default=float))
        return EXIT_OK

    from .operator import DiscreteMAOperator
    admissibility.refuse_if_inadmissible(spec)
    op = DiscreteMAOperator(spec.domain, h=h)
    rhs = spec.rhs_model()
    phi = spec.phi_planar()
    pair = pipelines._assemble_barriers(spec, spec.domain, phi, op, rhs)
    payload = {"provenance": pair.provenance, "constants": pair.constants,
               "sub_margin_min": float(pair.sub_report.min_margin),
               "super_margin_max": float(pair.super_report.max_margin),
               "ordered": bool(pair.ordered())}
    print(json.dumps(payload, indent=2, default=float))
    out = _ensure_dir(args.out or cfg.output.get("dir"))
    if out:
        _write_nodes_csv(os.path.join(out, "sub.csv"), op,
                         pair.sub.masked_values())
        _write_nodes_csv(os.path.join(out, "super.csv"), op,
                         pair.super_.masked_values())
    return EXIT_OK


def cmd_oracle(args) -> int:
    prof = radial.radial_oracle(args.form, p=args.p, radius=args.radius,
                                n=args.n, R=args.R, target=args.target)
    prof.to_csv(args.out)
    print(json.dumps({"u0": prof.u0, "end_error": prof.end_error,
                      "rows": int(len(prof.r)), "out": args.out},
                     indent=2))
    return EXIT_OK


_COMMANDS = {
    "check": cmd_check,
    "solve": cmd_solve,
    "reconstruct": cmd_reconstruct,
    "barriers": cmd_barriers,
    "oracle": cmd_oracle,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (ConfigError, MissingBounds) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NonexistentByLemma as exc:
        print(f"refused: {exc}", file=sys.stderr)
        return EXIT_REFUSED
    except ConditionFailed as exc:
        print(f"inadmissible: {exc}", file=sys.stderr)
        return EXIT_CONDITION
    except PminkError as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}",
              file=sys.stderr)
        return EXIT_NUMERIC
    except FileNotFoundError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
