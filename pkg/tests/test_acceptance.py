"""Acceptance suite: one test per quantitative criterion, each printing a
pass line with its measured numbers (visible with -s / -rA).

Criteria 9 and 10 run full eps-sweeps at desk scale (N up to 64); on one
core budget roughly half an hour for the whole module.
"""

import os

import numpy as np
import pytest

from thickjunction import (assembly, cell_solver as cs, configio, corrector,
                           eps_solver, harness, model)
from thickjunction import homogenized as hom
from thickjunction.geometry import MeshResolution, build_mesh, validate

PI = np.pi

SWEEP_MAIN = """
[sweep]
N_values = 8 16 32 64
rho = 0.1
"""

SWEEP_BETA15 = """
[exponents]
beta = 1.5 1.5 1.5

[sources]
g_amplitude = 8.0

[sweep]
N_values = 8 16 32 64
rho = 0.1
"""


def _report(criterion, ok, detail):
    line = f"[criterion {criterion:>2}] {'PASS' if ok else 'FAIL'}: {detail}"
    print(line)
    assert ok, line


@pytest.fixture(scope="session")
def sweep_main(tmp_path_factory):
    cfg = configio.load_config(SWEEP_MAIN)
    out = tmp_path_factory.mktemp("sweep_main")
    return cfg, harness.run_sweep(cfg, str(out)), out


@pytest.fixture(scope="session")
def sweep_beta15(tmp_path_factory):
    cfg = configio.load_config(SWEEP_BETA15)
    out = tmp_path_factory.mktemp("sweep_b15")
    return cfg, harness.run_sweep(cfg, str(out)), out


def test_criterion_01_cell_problem_slopes(cells_ref):
    z2 = cells_ref["Z0_2"]
    xi1 = cells_ref["Xi1_1"]
    s_bot = z2.exits["bot1"].slope
    s_xi = xi1.exits["bot1"].slope
    ok = abs(s_bot - 2.0) < 1e-3 and abs(s_xi - 2.5) < 1e-3
    _report(1, ok, f"junction bottom slope {s_bot:.6f} (want 2.000), "
                   f"branch exit-1 slope {s_xi:.6f} (want 2.500)")


def test_criterion_02_cell_problem_symmetries(cells_ref):
    z1, z2 = cells_ref["Z0_1"], cells_ref["Z0_2"]
    top = z1.bm.blocks[0]
    odd = float(np.max(np.abs(z1.u[top.nid] + z1.u[top.nid][:, ::-1])))
    even = float(np.max(np.abs(z2.u[top.nid] - z2.u[top.nid][:, ::-1])))
    ok = odd < 1e-10 and even < 1e-10
    _report(2, ok, f"odd defect {odd:.2e}, even defect {even:.2e} (tol 1e-10)")


def test_criterion_03_decay_rates(cells_ref, params4):
    checks = [
        ("junction odd, upper exit", cells_ref["Z0_1"].exits["top"].decay_rate,
         2 * PI),
        ("junction even, upper exit", cells_ref["Z0_2"].exits["top"].decay_rate,
         2 * PI),
        ("junction odd, strip exit", cells_ref["Z0_1"].exits["bot1"].decay_rate,
         PI / params4.h0),
        ("branch carrier exit", cells_ref["Xi1_1"].exits["bot1"].decay_rate,
         PI / params4.h11),
        ("branch flat exit", cells_ref["Xi1_1"].exits["bot2"].decay_rate,
         PI / params4.h12),
        ("branch upper exit", cells_ref["Xi1_2"].exits["top"].decay_rate,
         PI / params4.h0),
    ]
    worst = max(abs(got - want) / want for _, got, want in checks)
    ok = worst < 0.2
    _report(3, ok, "max relative deviation of fitted exponents "
                   f"{worst:.3f} (tol 0.20) over {len(checks)} exits")


def test_criterion_04_truncation_convergence(params4, cells_ref):
    fam20 = cs.solve_cell_family(params4, L=20.0)
    worst = 0.0
    for name, sol10 in cells_ref.items():
        for key in sol10.exits:
            worst = max(worst,
                        abs(sol10.exits[key].const - fam20[name].exits[key].const),
                        abs(sol10.exits[key].slope - fam20[name].exits[key].slope))
    ok = worst < 1e-4
    _report(4, ok, f"max constant/slope change L=10 -> L=20: {worst:.2e} "
                   "(tol 1e-4)")


def test_criterion_05_manufactured_orders(params4):
    vp = validate(params4)
    # periodic-junction solver, spatial (stationary oracle)
    case = model.make_manufactured_eps(params4, stationary=True)
    errs = []
    for k in range(3):
        res = MeshResolution(cells_across=2 * 2 ** k,
                             fine_cells_per_eps=4 * 2 ** k,
                             coarse_spacing_eps=2.0 / 2 ** k)
        mesh = build_mesh(vp, res)
        sys = eps_solver.assemble(mesh, case.data)
        u = eps_solver.stationary_state(sys, 1.0)
        ue = case.exact(mesh.nodes[:, 0], mesh.nodes[:, 1], 1.0)
        errs.append(assembly.l2_norm(sys.M, u - ue))
    eps_orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))

    # homogenized solver, spatial
    caseh = model.make_manufactured_hom(params4, stationary=True)
    herrs = []
    for nx in (32, 64, 128):
        sysh = hom.assemble(params4, caseh.data, hom.HomResolution(nx=nx))
        u = hom.stationary_state(sysh, 1.0)
        ue = np.zeros(sysh.n)
        X, Y = np.meshgrid(sysh.x1, sysh.y_body, indexing="xy")
        ue[sysh.body_idx] = caseh.exact_sheets["+"](X, Y, 1.0)
        for key in hom.SHEET_KEYS:
            Xs = np.tile(sysh.x1, (sysh.sheet_idx[key].shape[0], 1))
            Ys = np.tile(sysh.y_sheet[key][:, None], (1, len(sysh.x1)))
            ue[sysh.sheet_idx[key]] = caseh.exact_sheets[key](Xs, Ys, 1.0)
        herrs.append(assembly.l2_norm(sysh.M_V, u - ue))
    hom_orders = np.log2(np.array(herrs[:-1]) / np.array(herrs[1:]))

    # temporal orders against a fine-dt reference on fixed meshes
    case_t = model.make_manufactured_eps(params4, T=0.05)
    mesh = build_mesh(vp, MeshResolution())
    sys = eps_solver.assemble(mesh, case_t.data)

    def efinal(K):
        return eps_solver.solve(sys, np.linspace(0, 0.05, K + 1),
                                keep="none").final
    ref = efinal(64)
    terrs = [assembly.l2_norm(sys.M, efinal(K) - ref) for K in (4, 8, 16)]
    t_orders_eps = np.log2(np.array(terrs[:-1]) / np.array(terrs[1:]))

    caseh_t = model.make_manufactured_hom(params4, T=0.05)
    sysh = hom.assemble(params4, caseh_t.data, hom.HomResolution(nx=64))

    def hfinal(K):
        return hom.solve(sysh, np.linspace(0, 0.05, K + 1), keep="none").final
    refh = hfinal(64)
    therrs = [assembly.l2_norm(sysh.M_V, hfinal(K) - refh) for K in (4, 8, 16)]
    t_orders_hom = np.log2(np.array(therrs[:-1]) / np.array(therrs[1:]))

    ok = (np.all(eps_orders >= 1.8) and np.all(hom_orders >= 1.8)
          and np.all(t_orders_eps >= 0.9) and np.all(t_orders_hom >= 0.9))
    _report(5, ok,
            f"spatial orders eps {np.round(eps_orders, 2)}, "
            f"hom {np.round(hom_orders, 2)} (>= 1.8); temporal "
            f"eps {np.round(t_orders_eps, 2)}, hom {np.round(t_orders_hom, 2)}"
            " (>= 0.9)")


def test_criterion_06_monotonicity_and_coercivity(params4, default_data4,
                                                  mesh4):
    sysh = hom.assemble(params4, default_data4, hom.HomResolution(nx=64))
    syse = eps_solver.assemble(mesh4, default_data4)
    rng = np.random.default_rng(2024)
    mono_ok = coer_ok = True
    for _ in range(100):
        u = rng.standard_normal(sysh.n)
        w = rng.standard_normal(sysh.n)
        pairing, bound = hom.monotonicity_probe(sysh, u, w)
        mono_ok &= pairing >= bound - 1e-9 * max(1.0, abs(pairing))
        phi = rng.standard_normal(sysh.n) * rng.uniform(0.2, 3.0)
        lhs, rhs = hom.coercivity_probe(sysh, phi, delta=0.25)
        coer_ok &= lhs >= rhs - 1e-9 * max(1.0, abs(lhs))
        ue = rng.standard_normal(syse.n)
        we = rng.standard_normal(syse.n)
        pe, be = eps_solver.monotonicity_gap(syse, ue, we)
        mono_ok &= pe >= be - 1e-9 * max(1.0, abs(pe))
    ok = mono_ok and coer_ok
    _report(6, ok, "monotonicity and coercivity probes on 100 random pairs "
                   "(homogenized + periodic operators)")


def test_criterion_07_integral_identity(mesh4):
    rng = np.random.default_rng(31)
    worst = 0.0
    for i in range(20):
        a1, a2, b1, b2, c = rng.uniform(-2, 2, size=5)

        def phi(x, y, a1=a1, a2=a2, b1=b1, b2=b2, c=c):
            return np.sin(a1 * x + b1) * np.cos(a2 * y + b2) + c * x * y

        def dphi(x, y, a1=a1, a2=a2, b1=b1, b2=b2, c=c):
            return a1 * np.cos(a1 * x + b1) * np.cos(a2 * y + b2) + c * y

        level, m = [(0, 0), (1, 1), (1, 2), (2, 1), (2, 4)][i % 5]
        r, scale = eps_solver.integral_identity_residual(mesh4, level, m,
                                                         phi, dphi)
        worst = max(worst, r / scale)
    # second-order quadrature: refining by 2 must shrink the residual ~4x
    fine = build_mesh(validate(mesh4.params), MeshResolution().refine(2))

    def phi0(x, y):
        return np.sin(2 * x + 0.7) * np.cos(3 * y)

    def dphi0(x, y):
        return 2 * np.cos(2 * x + 0.7) * np.cos(3 * y)

    r0, s0 = eps_solver.integral_identity_residual(mesh4, 0, 0, phi0, dphi0)
    r1, s1 = eps_solver.integral_identity_residual(fine, 0, 0, phi0, dphi0)
    ratio = (r0 / s0) / (r1 / s1)
    ok = worst < 5e-3 and ratio > 2.5
    _report(7, ok, f"20 random fields: max relative residual {worst:.2e}; "
                   f"refinement ratio {ratio:.2f} (O(dx^2) behavior)")


def test_criterion_08_corrector_conformity(mesh8, cells_ref, params8):
    data = model.default_problem(params8, T=0.02)
    data.certify()
    sysh = hom.assemble(params8, data, hom.HomResolution(nx=128))
    traj = hom.solve(sysh, np.linspace(0, 0.02, 5))
    asm = corrector.CorrectorAssembler(mesh8, cells_ref, sysh)
    R = asm.assemble_R(traj.final)
    # the assembled field is single-valued on shared interface nodes by
    # construction; verify the two bounding formulas agree to rounding
    jumps = asm.interface_jump_pairs(traj.final)
    worst = max(jumps.values())
    scale = float(np.max(np.abs(R)))
    ok = worst <= 1e-12 * max(1.0, scale)
    _report(8, ok, f"max interface formula disagreement {worst:.2e} "
                   f"(field scale {scale:.2e}); assembled field nodal, "
                   "jumps identically zero")


def test_criterion_09_rate_study(sweep_main, sweep_beta15):
    cfg, rep, _ = sweep_main
    ok_main = rep.slope >= 0.7
    cfg15, rep15, _ = sweep_beta15
    errs15 = [r["max_L2"] + r["L2H1"] for r in rep15.rows]
    eps15 = [r["eps"] for r in rep15.rows]
    rho = cfg15["sweep"]["rho"]
    C, rel = harness.fit_single_constant(eps15, errs15, (0.5, 1.0 - rho))
    ok_15 = rep15.slope >= 0.35 and rel <= 0.25
    ok = ok_main and ok_15
    _report(9, ok,
            f"alpha=beta=2 slope {rep.slope:.3f} (>= 0.7); "
            f"beta=1.5 slope {rep15.slope:.3f} (>= 0.35), single-constant "
            f"fit C={C:.3f} rel residual {rel:.3f} (<= 0.25)")


def test_criterion_10_corollary_rates(sweep_main):
    _, rep, _ = sweep_main
    eps_vals = [r["eps"] for r in rep.rows]
    comp = [r["corollary_L2_body"] + r["corollary_L2_rods"] for r in rep.rows]
    slope, _, _ = harness.fit_loglog(eps_vals, comp)
    ok = slope >= 0.7
    _report(10, ok, f"component-error slope at final time {slope:.3f} "
                    "(>= 0.7)")


def test_criterion_11_determinism(tmp_path):
    cfg_text = ("[geometry]\nN = 8\n[time]\nT = 0.02\nsteps_base = 4\n"
                "N_base = 8\n[resolution]\nhom_nx = 96\n")
    cfg = configio.load_config(cfg_text)
    harness.run_single(cfg, str(tmp_path / "r1"))
    harness.run_single(cfg, str(tmp_path / "r2"))
    a = (tmp_path / "r1" / "single.csv").read_bytes()
    b = (tmp_path / "r2" / "single.csv").read_bytes()
    ok = a == b
    _report(11, ok, f"repeated runs byte-identical CSV ({len(a)} bytes)")
