"""Sweep orchestration: run the full pipeline over a ladder of N values,
collect error norms against the theoretical bound terms, fit log-log rates
and persist reproducible CSV artifacts.

Layout of a sweep run:
    cells are solved once per geometry; the homogenized problem is solved
    once on its fine grid at the finest time step of the ladder (the coarser
    ladders' time nodes are nested, so their states are exact subsamples);
    each N entry then streams the periodic solve, assembling the corrector
    and accumulating norms step by step without storing the trajectory.
"""

from __future__ import annotations

import hashlib
import json
import os
import time as _time
from dataclasses import dataclass

import numpy as np

from . import artifacts, cell_solver, configio, corrector, eps_solver
from . import homogenized as hom
from .errors import ConfigError
from .geometry import build_layout, build_mesh, layout_to_text, validate
from .model import ProblemData
from .timestep import NewtonOptions


@dataclass
class SweepReport:
    rows: list
    slope: float
    slope_stderr: float
    predicted_exponent: float
    csv_path: str | None
    summary: dict


def fit_loglog(eps_vals, errs):
    """Least-squares slope of log(err) against log(eps), with its stderr."""
    x = np.log(np.asarray(eps_vals, dtype=float))
    y = np.log(np.asarray(errs, dtype=float))
    n = len(x)
    xb, yb = x.mean(), y.mean()
    sxx = float(np.sum((x - xb) ** 2))
    slope = float(np.sum((x - xb) * (y - yb)) / sxx)
    intercept = float(yb - slope * xb)
    resid = y - (intercept + slope * x)
    stderr = float(np.sqrt(np.sum(resid ** 2) / max(n - 2, 1) / sxx))
    return slope, intercept, stderr


def fit_single_constant(eps_vals, errs, exponents):
    """Best C for err ~ C * sum_e eps^e; returns (C, relative residual)."""
    eps_vals = np.asarray(eps_vals, dtype=float)
    errs = np.asarray(errs, dtype=float)
    phi = np.zeros_like(eps_vals)
    for e in exponents:
        phi = phi + eps_vals ** e
    C = float(np.sum(errs * phi) / np.sum(phi * phi))
    rel = float(np.sqrt(np.sum((errs - C * phi) ** 2) / np.sum(errs ** 2)))
    return C, rel


def predicted_exponent(cfg: dict) -> float:
    """Smallest decay exponent among the bound terms (the expected rate)."""
    rho = cfg["sweep"]["rho"]
    alpha = cfg["exponents"]["alpha"]
    beta = cfg["exponents"]["beta"]
    exps = [1.0 - rho]
    for i in range(3):
        exps.append(alpha[i] - 1.0 + (1.0 if alpha[i] == 1.0 else 0.0))
        if beta[i] > 1.0:
            exps.append(beta[i] - 1.0)
        elif cfg["sources"]["g_mode"] == "perturbed":
            exps.append(1.0)   # ||g_eps - g0|| = eps * ||w||
    return min(exps)


def bound_columns(cfg: dict, eps: float) -> dict:
    rho = cfg["sweep"]["rho"]
    alpha = cfg["exponents"]["alpha"]
    beta = cfg["exponents"]["beta"]
    out = {
        "bound_eps_term": eps ** (1.0 - rho),
        "bound_alpha_term": sum(
            eps ** (alpha[i] - 1.0 + (1.0 if alpha[i] == 1.0 else 0.0))
            for i in range(3)),
        "bound_beta_term": sum(eps ** (beta[i] - 1.0)
                               for i in range(3) if beta[i] > 1.0),
    }
    return out


def _newton_opts(cfg: dict) -> NewtonOptions:
    s = cfg["solver"]
    return NewtonOptions(tol=s["newton_tol"], max_iter=int(s["newton_max_iter"]))


def solve_cells(cfg: dict, params) -> dict:
    r = cfg["resolution"]
    return cell_solver.solve_cell_family(params, L=r["cell_L"],
                                         cells_across=int(r["cell_across"]))


def _corrector_config(cfg: dict, params) -> corrector.CorrectorConfig:
    c = cfg["corrector"]
    tau0 = c["tau0_frac"] * min(params.l1, params.l2, params.l3, params.d0)
    return corrector.CorrectorConfig(tau0=tau0, tol_eta=c["tol_eta"])


def _g_term(cfg: dict, data: ProblemData, sys, time_grid) -> float:
    """delta_{beta,1} * ||g_eps - g0||_{L2(rods x (0,T))} via mesh quadrature."""
    from . import assembly
    from .geometry import REGION_LEVEL
    beta = data.beta
    if all(b != 1.0 for b in beta) or data.g_mode == "matched":
        return 0.0
    mesh = sys.mesh
    eps = mesh.params.eps
    per_t = np.zeros(len(time_grid))
    for kk, t in enumerate(time_grid):
        tot = 0.0
        for lev in (0, 1, 2):
            if beta[lev] != 1.0:
                continue

            def f(x, y, _lev=lev, _t=t):
                d = data.g_eps(_lev, x, y, _t, eps) - data.g0[_lev](x, y, _t)
                return d * d
            tot += assembly.integrate_over_cells(mesh.bm, f,
                                                 region=REGION_LEVEL[lev])
        per_t[kk] = tot
    return float(np.sqrt(np.trapezoid(per_t, time_grid)))


def run_entry(cfg: dict, N: int, data: ProblemData, cells: dict,
              hom_sys, hom_rows, stride: int,
              write_ckpt_dir: str | None = None) -> dict:
    """Solve one ladder entry and return its CSV row."""
    params = configio.build_geometry(cfg, N)
    vp = validate(params)
    mesh = build_mesh(vp, configio.build_mesh_resolution(cfg))
    sys = eps_solver.assemble(mesh, data)
    asm = corrector.CorrectorAssembler(mesh, cells, hom_sys,
                                       _corrector_config(cfg, params))
    K = configio.time_steps(cfg, N)
    tg = np.linspace(0.0, cfg["time"]["T"], K + 1)
    acc = corrector.ErrorAccumulator(mesh=mesh, M=sys.M, S=sys.S,
                                     M_region=sys.M_region, times=tg)
    keep = "all" if write_ckpt_dir else "none"

    def on_step(k, t, u):
        u_h = np.asarray(hom_rows[k * stride])
        if k < K:
            R = asm.assemble_R(u_h)
            acc.update(k, R - u)
        else:
            R, V = asm.assemble_R(u_h, with_leading=True)
            acc.update(k, R - u)
            acc.finish_corollary(V - u)

    traj = eps_solver.solve(sys, tg, opts=_newton_opts(cfg), keep=keep,
                            on_step=on_step)
    row = {
        "eps": params.eps, "N": N,
        "max_L2": acc.max_l2, "L2H1": acc.l2h1,
        "corollary_L2_body": acc.corollary_body,
        "corollary_L2_rods": acc.corollary_rods,
        "bound_g_term": _g_term(cfg, data, sys, tg),
    }
    row.update(bound_columns(cfg, params.eps))
    if write_ckpt_dir:
        path = os.path.join(write_ckpt_dir, f"eps_trajectory_N{N}.traj")
        artifacts.write_trajectory(path, traj.values, {
            "mesh_hash": mesh.content_hash(),
            "config_hash": config_hash(cfg),
            "dt": tg[1] - tg[0], "K": K,
            "newton_tol": cfg["solver"]["newton_tol"],
        })
    return row


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(configio.config_text(cfg).encode()).hexdigest()


def _hom_time_grid(cfg: dict, N_max: int) -> np.ndarray:
    K = configio.time_steps(cfg, N_max)
    return np.linspace(0.0, cfg["time"]["T"], K + 1)


def _validate_ladder(ns: list[int]):
    ns = [int(n) for n in ns]
    if sorted(ns) != ns or len(set(ns)) != len(ns):
        raise ConfigError("sweep N values must be strictly increasing")
    if len(ns) < 3:
        raise ConfigError("a slope fit needs at least 3 sweep entries")
    for n in ns:
        q = n / ns[0]
        if abs(q - round(q)) > 1e-12 or (round(q) & (round(q) - 1)) != 0:
            raise ConfigError("sweep N values must be power-of-two multiples "
                              "of the smallest entry (nested time grids)")
    return ns


def run_sweep(cfg: dict, out_dir: str, workers: int | None = None) -> SweepReport:
    """Full ladder: cells once, homogenized once at the finest dt, one
    streamed entry per N; emits sweep.csv, summary.json and manifests."""
    os.makedirs(out_dir, exist_ok=True)
    ns = _validate_ladder(list(cfg["sweep"]["N_values"]))
    t_start = _time.time()
    params0 = configio.build_geometry(cfg, ns[0])
    validate(params0)
    data = configio.build_problem(cfg, params0)
    data.certify()
    cells = solve_cells(cfg, params0)
    with open(os.path.join(out_dir, "cell_constants.txt"), "w") as f:
        f.write(cell_solver.constants_manifest(cells))

    hom_sys = hom.assemble(params0, data,
                           configio.build_hom_resolution(cfg, params0),
                           backend=cfg["solver"]["hom_backend"])
    tg_hom = _hom_time_grid(cfg, ns[-1])
    hom_path = os.path.join(out_dir, "hom_trajectory.npy")
    store = np.lib.format.open_memmap(hom_path, mode="w+", dtype=np.float64,
                                      shape=(len(tg_hom), hom_sys.n))
    hom.solve(hom_sys, tg_hom, opts=_newton_opts(cfg), keep="none",
              store=store)
    store.flush()
    hom_rows = np.load(hom_path, mmap_mode="r")

    K_max = len(tg_hom) - 1
    jobs = []
    for N in ns:
        stride = K_max // configio.time_steps(cfg, N)
        jobs.append((N, stride))

    workers = int(cfg["sweep"]["workers"]) if workers is None else workers
    rows = []
    if workers <= 1:
        for N, stride in jobs:
            rows.append(run_entry(cfg, N, data, cells, hom_sys, hom_rows,
                                  stride))
    else:
        import multiprocessing as mp
        ctx = mp.get_context("fork")
        args = [(cfg, N, stride, hom_path) for N, stride in jobs]
        with ctx.Pool(processes=workers) as pool:
            rows = pool.map(_entry_job, args)
    rows.sort(key=lambda r: r["N"])

    csv_path = os.path.join(out_dir, "sweep.csv")
    artifacts.write_sweep_csv(csv_path, rows)
    geom_hash = hashlib.sha256(
        layout_to_text(build_layout(validate(params0))).encode()).hexdigest()

    eps_vals = [r["eps"] for r in rows]
    errs = [r["max_L2"] + r["L2H1"] for r in rows]
    slope, intercept, stderr = fit_loglog(eps_vals, errs)
    summary = {
        "N_values": ns,
        "eps": eps_vals,
        "measured_error": errs,
        "fitted_slope": slope,
        "fitted_intercept": intercept,
        "slope_stderr": stderr,
        "rho": cfg["sweep"]["rho"],
        "predicted_dominant_exponent": predicted_exponent(cfg),
        "wall_seconds": _time.time() - t_start,
        "config_hash": config_hash(cfg),
    }
    with open(os.path.join(out_dir, "summary.json"), "w") as f:
        json.dump(summary, f, indent=1, sort_keys=True)
    _write_manifest(cfg, out_dir, extra={"csv": csv_path,
                                         "hom_trajectory": hom_path,
                                         "geometry_hash": geom_hash})
    return SweepReport(rows=rows, slope=slope, slope_stderr=stderr,
                       predicted_exponent=summary["predicted_dominant_exponent"],
                       csv_path=csv_path, summary=summary)


def _entry_job(args):
    cfg, N, stride, hom_path = args
    params0 = configio.build_geometry(cfg, int(cfg["sweep"]["N_values"][0]))
    data = configio.build_problem(cfg, params0)
    data.certify()
    cells = solve_cells(cfg, params0)
    hom_sys = hom.assemble(params0, data,
                           configio.build_hom_resolution(cfg, params0),
                           backend=cfg["solver"]["hom_backend"])
    hom_rows = np.load(hom_path, mmap_mode="r")
    return run_entry(cfg, N, data, cells, hom_sys, hom_rows, stride)


def run_single(cfg: dict, out_dir: str, N: int | None = None) -> dict:
    """One (N, data) pipeline with artifacts; returns the CSV row."""
    os.makedirs(out_dir, exist_ok=True)
    t_start = _time.time()
    N = int(cfg["geometry"]["N"]) if N is None else int(N)
    params = configio.build_geometry(cfg, N)
    vp = validate(params)
    data = configio.build_problem(cfg, params)
    data.certify()
    cells = solve_cells(cfg, params)
    with open(os.path.join(out_dir, "layout.txt"), "w") as f:
        f.write(layout_to_text(build_layout(vp)))
    with open(os.path.join(out_dir, "cell_constants.txt"), "w") as f:
        f.write(cell_solver.constants_manifest(cells))

    hom_sys = hom.assemble(params, data,
                           configio.build_hom_resolution(cfg, params),
                           backend=cfg["solver"]["hom_backend"])
    K = configio.time_steps(cfg, N)
    tg = np.linspace(0.0, cfg["time"]["T"], K + 1)
    trajh = hom.solve(hom_sys, tg, opts=_newton_opts(cfg), keep="all")

    write_dir = out_dir if cfg["output"]["write_checkpoints"] else None
    row = run_entry(cfg, N, data, cells, hom_sys, trajh.values, 1,
                    write_ckpt_dir=write_dir)
    artifacts.write_sweep_csv(os.path.join(out_dir, "single.csv"), [row])

    field = hom.extract_field(hom_sys, trajh.final)
    artifacts.write_multisheet(os.path.join(out_dir, "hom_final.msf"), field)
    artifacts.write_traces_csv(os.path.join(out_dir, "hom_traces.csv"),
                               hom_sys.x1,
                               hom.interface_traces(hom_sys, trajh.final))
    geom_hash = hashlib.sha256(
        layout_to_text(build_layout(vp)).encode()).hexdigest()
    _write_manifest(cfg, out_dir, extra={
        "csv": os.path.join(out_dir, "single.csv"),
        "wall_seconds": _time.time() - t_start,
        "geometry_hash": geom_hash,
    })
    return row


def _write_manifest(cfg: dict, out_dir: str, extra: dict | None = None):
    manifest = {
        "config": configio.config_text(cfg),
        "config_hash": config_hash(cfg),
        "package_version": _package_version(),
        "timestamp": _time.strftime("%Y-%m-%dT%H:%M:%S"),
        "newton_tol": cfg["solver"]["newton_tol"],
        "time_policy": {"T": cfg["time"]["T"],
                        "steps_base": cfg["time"]["steps_base"],
                        "N_base": cfg["time"]["N_base"],
                        "rule": "dt = T / (steps_base * (N/N_base)^2)"},
    }
    if extra:
        manifest.update(extra)
    with open(os.path.join(out_dir, "run_manifest.json"), "w") as f:
        json.dump(manifest, f, indent=1, sort_keys=True)


def _package_version() -> str:
    from . import __version__
    return __version__


def calibrate_time_base(cfg: dict, max_rounds: int = 2,
                        target_ratio: float = 0.1) -> int:
    """One-off time-refinement check on the smallest ladder entry.

    Doubles steps_base until halving dt changes the measured error by less
    than target_ratio of its value; returns the calibrated steps_base.
    """
    ns = list(cfg["sweep"]["N_values"])
    N = int(ns[0])
    base = int(cfg["time"]["steps_base"])
    params = configio.build_geometry(cfg, N)
    validate(params)
    data = configio.build_problem(cfg, params)
    data.certify()
    cells = solve_cells(cfg, params)
    hom_res = configio.build_hom_resolution(cfg, params)

    def measure(steps):
        import copy
        local = copy.deepcopy(cfg)
        local["time"]["steps_base"] = steps
        hom_sys = hom.assemble(params, data, hom_res,
                               backend=cfg["solver"]["hom_backend"])
        K = configio.time_steps(local, N)
        tg = np.linspace(0.0, cfg["time"]["T"], K + 1)
        trajh = hom.solve(hom_sys, tg, keep="all")
        row = run_entry(local, N, data, cells, hom_sys, trajh.values, 1)
        return row["max_L2"] + row["L2H1"]

    for _ in range(max_rounds):
        e1 = measure(base)
        e2 = measure(2 * base)
        if abs(e1 - e2) <= target_ratio * abs(e2):
            break
        base *= 2
    return base
