"""Command-line interface.

Subcommands: validate, cells, solve-eps, solve-hom, approx, sweep, plot.
Exit codes: 0 ok, 2 configuration error, 3 solver failure, 4 acceptance
failure.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import artifacts, cell_solver, configio, harness
from . import homogenized as hom
from .errors import AcceptanceFailure, ConfigError, SolverError, ThickJunctionError
from .geometry import build_layout, build_mesh, layout_to_text, validate


def _parser():
    p = argparse.ArgumentParser(prog="thickjunction",
                                description="reaction-diffusion on thick "
                                "fractal junctions: solvers, corrector and "
                                "rate sweeps")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("config", help="problem file (INI format)")
        sp.add_argument("--out", default=None, help="output directory")
        sp.add_argument("--workers", type=int, default=None)
        sp.add_argument("--rho", type=float, default=None,
                        help="reporting exponent in (0,1)")
        sp.add_argument("--seed", type=int, default=None,
                        help="seed recorded in the run manifest")

    for name, desc in (("validate", "check a problem file and print the layout"),
                       ("cells", "solve all layer problems and export constants"),
                       ("solve-eps", "solve the periodic junction problem"),
                       ("solve-hom", "solve the homogenized multi-sheeted problem"),
                       ("approx", "full single-run pipeline incl. corrector"),
                       ("sweep", "error-vs-eps ladder with rate fit")):
        sp = sub.add_parser(name, help=desc)
        common(sp)
    sub.choices["sweep"].add_argument("--min-slope", type=float, default=None,
                                      help="fail (exit 4) if the fitted "
                                      "slope is below this")

    sp = sub.add_parser("plot", help="render curve files and SVG from a sweep CSV")
    sp.add_argument("csv", help="sweep CSV path")
    sp.add_argument("--out", default=None)
    sp.add_argument("--rho", type=float, default=None)
    return p


def _load(args):
    cfg = configio.load_config(args.config)
    if args.rho is not None:
        cfg["sweep"]["rho"] = args.rho
    if args.workers is not None:
        cfg["sweep"]["workers"] = args.workers
    if args.seed is not None:
        cfg["sweep"]["seed"] = args.seed
    out = args.out or cfg["output"]["dir"]
    return cfg, out


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        return _dispatch(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return 3
    except AcceptanceFailure as exc:
        print(f"acceptance failure: {exc}", file=sys.stderr)
        return 4
    except ThickJunctionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


def _dispatch(args) -> int:
    if args.command == "plot":
        from .plots import emit_plotdata
        out = emit_plotdata(args.csv, args.out, args.rho)
        print(f"slope {out['slope']:.6f}  figure {out['paths']['figure']}")
        return 0

    cfg, out_dir = _load(args)

    if args.command == "validate":
        params = configio.build_geometry(cfg)
        vp = validate(params)
        layout = build_layout(vp)
        text = layout_to_text(layout)
        if out_dir:
            os.makedirs(out_dir, exist_ok=True)
            with open(os.path.join(out_dir, "layout.txt"), "w") as f:
                f.write(text)
        print(f"geometry ok: N={params.N} eps={params.eps:.6g} "
              f"rods={len(layout.rods)} area={layout.area():.12g}")
        return 0

    if args.command == "cells":
        os.makedirs(out_dir, exist_ok=True)
        params = configio.build_geometry(cfg)
        validate(params)
        cells = harness.solve_cells(cfg, params)
        manifest = cell_solver.constants_manifest(cells)
        with open(os.path.join(out_dir, "cell_constants.txt"), "w") as f:
            f.write(manifest)
        for name, sol in sorted(cells.items()):
            artifacts.write_cell_solution(
                os.path.join(out_dir, f"cell_{name}.cell"), sol)
        print(manifest, end="")
        return 0

    if args.command == "solve-eps":
        os.makedirs(out_dir, exist_ok=True)
        from . import eps_solver
        params = configio.build_geometry(cfg)
        vp = validate(params)
        data = configio.build_problem(cfg, params)
        data.certify()
        mesh = build_mesh(vp, configio.build_mesh_resolution(cfg))
        sys_ = eps_solver.assemble(mesh, data)
        K = configio.time_steps(cfg, params.N)
        tg = np.linspace(0.0, cfg["time"]["T"], K + 1)
        traj = eps_solver.solve(sys_, tg, opts=harness._newton_opts(cfg))
        path = os.path.join(out_dir, "eps_trajectory.traj")
        artifacts.write_trajectory(path, traj.values, {
            "mesh_hash": mesh.content_hash(),
            "config_hash": harness.config_hash(cfg),
            "dt": tg[1] - tg[0], "K": K,
            "newton_tol": cfg["solver"]["newton_tol"]})
        print(f"solved: {mesh.n_nodes} nodes, {K} steps, "
              f"max |u| = {traj.max_abs:.6g}, wrote {path}")
        return 0

    if args.command == "solve-hom":
        os.makedirs(out_dir, exist_ok=True)
        params = configio.build_geometry(cfg)
        validate(params)
        data = configio.build_problem(cfg, params)
        data.certify()
        sys_ = hom.assemble(params, data,
                            configio.build_hom_resolution(cfg, params),
                            backend=cfg["solver"]["hom_backend"])
        K = configio.time_steps(cfg, params.N)
        tg = np.linspace(0.0, cfg["time"]["T"], K + 1)
        traj = hom.solve(sys_, tg, opts=harness._newton_opts(cfg), keep="none")
        field = hom.extract_field(sys_, traj.final)
        path = os.path.join(out_dir, "hom_final.msf")
        artifacts.write_multisheet(path, field)
        artifacts.write_traces_csv(os.path.join(out_dir, "hom_traces.csv"),
                                   sys_.x1,
                                   hom.interface_traces(sys_, traj.final))
        print(f"solved: {sys_.n} unknowns, {K} steps, wrote {path}")
        return 0

    if args.command == "approx":
        row = harness.run_single(cfg, out_dir)
        print(artifacts.SWEEP_HEADER)
        print(artifacts.format_row(row))
        return 0

    if args.command == "sweep":
        report = harness.run_sweep(cfg, out_dir)
        print(f"fitted slope {report.slope:.4f} "
              f"(stderr {report.slope_stderr:.4f}), predicted dominant "
              f"exponent {report.predicted_exponent:.4f}")
        print(f"csv: {report.csv_path}")
        if args.min_slope is not None and report.slope < args.min_slope:
            raise AcceptanceFailure(
                f"fitted slope {report.slope:.4f} below required "
                f"{args.min_slope}")
        return 0

    raise ConfigError(f"unknown command {args.command!r}")


if __name__ == "__main__":
    sys.exit(main())
