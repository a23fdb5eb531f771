"""Command-line driver.

Verbs: validate, mesh, solve-direct, decompose, solve-limit, unfold-check,
converge. Exit codes: 0 success, 2 config error, 3 geometry violation,
4 solver failure.
"""
from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from .config import load_config
from .density import write_density_csv
from .direct import solve_direct, write_solution
from .errors import (ConfigError, ConvergenceError, GeometryError, MeshError, NotNicelyDecomposedError,
                     NotSPDError, PlacementError)
from .fem import DiscreteField, h1_error
from .geometry import validate_tooth
from .graph import decompose, p_table, write_graph
from .meshing import mesh_brush, mesh_tooth_reference, write_mesh
from .limit import solve_limit_on_brush, write_limit
from .pipeline import CSV_COLUMNS, CSV_HEADER, converge_row, density_for, format_row
from .unfolding import trace_compat, unfold, unfold_derivatives, write_unfolded

EXIT_OK, EXIT_CONFIG, EXIT_GEOMETRY, EXIT_SOLVER = 0, 2, 3, 4


class GeometryViolation(Exception):
    pass


def _apply_overrides(cfg, args):
    if args.h_base is not None:
        cfg.mesh.h_base = args.h_base
    if args.h_tooth is not None:
        cfg.mesh.h_tooth = args.h_tooth
    if args.h_y is not None:
        cfg.mesh.h_y = args.h_y
    if args.cg_tol is not None:
        cfg.cg_tol = args.cg_tol
    return cfg


NORMALIZATION = "|ω| ≠ 1"


def _check_tooth(cfg, allow_unnormalized=False):
    v = validate_tooth(cfg.tooth)
    if not v and allow_unnormalized and v.violation == NORMALIZATION:
        print(f"warning: tooth {cfg.tooth.name}: {v.violation} (graph data is scale-covariant)",
              file=sys.stderr)
        return
    if not v:
        raise GeometryViolation(f"tooth {cfg.tooth.name}: {v.violation}")


def _out(args, name):
    os.makedirs(args.out, exist_ok=True)
    return os.path.join(args.out, name)


def _tag(eps):
    return f"{eps:.6g}"


def _brush(cfg, eps):
    return mesh_brush(cfg.spec(eps), cfg.mesh.h_base, cfg.mesh.tooth_h(eps), cfg.mesh.h_xi)


def cmd_validate(cfg, args):
    _check_tooth(cfg)
    for eps in cfg.epsilons:
        spec = cfg.spec(eps)
        print(f"eps={_tag(eps)}: ok ({spec.n_teeth} teeth, |omega_eps|={spec.teeth_measure:.6g})")
    print(f"tooth {cfg.tooth.name}: ok")


def cmd_mesh(cfg, args):
    _check_tooth(cfg)
    ref = mesh_tooth_reference(cfg.tooth, cfg.mesh.h_tooth, cfg.mesh.h_xi)
    with open(_out(args, "tooth_mesh.txt"), "w") as fh:
        write_mesh(fh, ref)
    for eps in cfg.epsilons:
        bm = _brush(cfg, eps)
        with open(_out(args, f"mesh_eps{_tag(eps)}.txt"), "w") as fh:
            write_mesh(fh, bm.mesh)
        print(f"eps={_tag(eps)}: {bm.mesh.n_vertices} vertices, {bm.mesh.n_triangles} triangles")


def cmd_solve_direct(cfg, args):
    _check_tooth(cfg)
    for eps in cfg.epsilons:
        u = solve_direct(_brush(cfg, eps), cfg.source, cfg.cg_tol, not args.deterministic)
        with open(_out(args, f"direct_eps{_tag(eps)}.txt"), "w") as fh:
            write_solution(fh, u)
        print(f"eps={_tag(eps)}: min {u.coefficients.min():.6g} max {u.coefficients.max():.6g}")


def cmd_decompose(cfg, args):
    _check_tooth(cfg, allow_unnormalized=True)
    d = decompose(mesh_tooth_reference(cfg.tooth, min(cfg.mesh.h_tooth, cfg.tooth.delta0), cfg.mesh.h_xi))
    with open(_out(args, "graph.txt"), "w") as fh:
        write_graph(fh, d)
    with open(_out(args, "p_table.csv"), "w") as fh:
        fh.write("i,j,y,p\n")
        for row in p_table(d):
            fh.write("{},{},{:.17g},{:.17g}\n".format(*row))
    print("i j   y        p")
    for i, j, y, p in p_table(d):
        print(f"{i} {j}   {y:<8.6g} {p:.6g}")
    for jt in d.joints:
        print(f"joint ({jt.i},{jt.k}): B={list(jt.below)} A={list(jt.above)}")


def cmd_solve_limit(cfg, args):
    _check_tooth(cfg)
    for eps in cfg.epsilons:
        bm = _brush(cfg, eps)
        d = decompose(bm.reference)
        theta = density_for(cfg, bm.spec, bm.trace_x[bm.trace_in_omega_prime()])
        lim = solve_limit_on_brush(bm, d, theta, cfg.source, cfg.mesh.h_y, cfg.cg_tol)
        with open(_out(args, f"limit_eps{_tag(eps)}.txt"), "w") as fh:
            write_limit(fh, lim)
        with open(_out(args, f"density_eps{_tag(eps)}.csv"), "w") as fh:
            write_density_csv(fh, theta)
        eb, eg = lim.energy()
        print(f"eps={_tag(eps)}: E={eb + eg:.10g} dropped={int(lim.dropped.sum())}/{len(lim.dropped)}")


def cmd_unfold_check(cfg, args):
    _check_tooth(cfg)
    rng = np.random.default_rng(args.seed)
    for eps in cfg.epsilons:
        bm = _brush(cfg, eps)
        u = DiscreteField(bm.mesh, rng.standard_normal(bm.mesh.n_vertices))
        uf = unfold(u, bm)
        teeth, used = bm.teeth
        zero = DiscreteField(teeth, np.zeros(teeth.n_vertices))
        direct_l2, _ = h1_error(teeth, u.coefficients[used], zero)
        dy, dxi = unfold_derivatives(u, bm)
        g = u.gradients()[bm.tooth_triangles]
        l = bm.spec.lengths[:, None]
        print(f"eps={_tag(eps)}: |L2 gap|={abs(uf.l2_norm() - direct_l2):.3e} "
              f"dy={np.max(np.abs(dy - g[..., 1])):.3e} dxi={np.max(np.abs(dxi - l * g[..., 0])):.3e} "
              f"trace={trace_compat(u, bm):.3e}")
        with open(_out(args, f"unfolded_eps{_tag(eps)}.txt"), "w") as fh:
            write_unfolded(fh, uf)


def cmd_converge(cfg, args):
    _check_tooth(cfg)
    rows = [converge_row(cfg, eps, not args.deterministic) for eps in cfg.epsilons]
    lines = [CSV_HEADER, ",".join(CSV_COLUMNS)] + [format_row(r) for r in rows]
    with open(_out(args, "converge.csv"), "w") as fh:
        fh.write("\n".join(lines) + "\n")
    print("\n".join(lines))
    if any(r["status"] != "ok" for r in rows):
        return EXIT_SOLVER
    return EXIT_OK


COMMANDS = {
    "validate": cmd_validate,
    "mesh": cmd_mesh,
    "solve-direct": cmd_solve_direct,
    "decompose": cmd_decompose,
    "solve-limit": cmd_solve_limit,
    "unfold-check": cmd_unfold_check,
    "converge": cmd_converge,
}


def build_parser():
    p = argparse.ArgumentParser(prog="brushhom", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", required=True, help="YAML run configuration")
    p.add_argument("--out", default="out", help="output directory")
    p.add_argument("--h-base", type=float, dest="h_base")
    p.add_argument("--h-tooth", type=float, dest="h_tooth")
    p.add_argument("--h-y", type=float, dest="h_y")
    p.add_argument("--cg-tol", type=float, dest="cg_tol")
    p.add_argument("--deterministic", action="store_true",
                   help="serial element loop (output is reproducible either way)")
    p.add_argument("--seed", type=int, default=0, help="seed for random fields in unfold-check")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = _apply_overrides(load_config(args.config), args)
        code = COMMANDS[args.command](cfg, args)
        return EXIT_OK if code is None else code
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (GeometryViolation, GeometryError, PlacementError, MeshError, NotNicelyDecomposedError) as exc:
        print(f"geometry violation: {exc}", file=sys.stderr)
        return EXIT_GEOMETRY
    except (ConvergenceError, NotSPDError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
