import numpy as np
import pytest

from conftest import reference_params
from thickjunction import assembly, eps_solver, model
from thickjunction.errors import ShapeMismatch, UntaggedBoundary
from thickjunction.geometry import MeshResolution, build_mesh, validate
from thickjunction.model import ProblemData, affine, default_nonlinearities


@pytest.fixture(scope="module")
def sys4(mesh4, default_data4):
    return eps_solver.assemble(mesh4, default_data4)


def test_stiffness_annihilates_constants(sys4):
    one = np.ones(sys4.n)
    assert np.max(np.abs(sys4.S @ one)) < 1e-10


def test_mass_total_is_junction_area(sys4, mesh4):
    assert sys4.M.sum() == pytest.approx(mesh4.layout.area(), abs=1e-10)


def test_robin_weights_supported_on_walls_only(sys4, mesh4):
    for lev in (0, 1, 2):
        w = sys4.w_upsilon[lev]
        support = np.flatnonzero(w > 0)
        wall_nodes = np.unique(np.concatenate(
            [es.nodes for es in mesh4.upsilon[lev]]))
        assert np.array_equal(support, np.sort(wall_nodes))


def test_robin_scaling_across_eps(params4, default_data4):
    # total Robin weight = eps^alpha * |walls|; |walls| is N-independent
    rows = {}
    for N in (4, 8):
        p = reference_params(N)
        mesh = build_mesh(validate(p), MeshResolution())
        sys = eps_solver.assemble(mesh, default_data4)
        lev = 0
        total = np.sum(sys.w_upsilon[lev]) * p.eps ** default_data4.alpha[lev]
        length = sum(es.length() for es in mesh.upsilon[lev])
        assert total == pytest.approx(p.eps ** 2 * length, rel=1e-12)
        rows[N] = (total, length)
    # wall length doubles with N while eps halves: ratio = 2 / 2^alpha
    ratio = rows[8][0] / rows[4][0]
    assert ratio == pytest.approx(2.0 / 4.0, rel=1e-12)


def test_untagged_boundary_detected(params4, default_data4):
    mesh = build_mesh(validate(params4), MeshResolution())
    mesh.exterior.pop()
    with pytest.raises(UntaggedBoundary):
        eps_solver.assemble(mesh, default_data4)


def test_zero_case_step_and_solve(mesh4):
    data = model.make_zero_case(T=0.02)
    sys = eps_solver.assemble(mesh4, data)
    u, info = eps_solver.step(sys, np.zeros(sys.n), 0.01, 0.01)
    assert np.all(u == 0.0)
    assert info.iterations <= 1
    traj = eps_solver.solve(sys, np.linspace(0, 0.02, 5))
    assert np.all(traj.values == 0.0)


def test_affine_case_single_newton_iteration(mesh4):
    k = affine(1.0, 0.0)
    data = ProblemData(k=k, k_levels=(k, k, k), kappa=(k, k, k),
                       alpha=(2.0, 2.0, 2.0), beta=(2.0, 2.0, 2.0), T=0.02,
                       f0=lambda x, y, t: np.sin(np.pi * np.asarray(x))
                       * np.ones(np.shape(np.asarray(y))))
    sys = eps_solver.assemble(mesh4, data)
    traj = eps_solver.solve(sys, np.linspace(0, 0.02, 5))
    assert all(info.iterations == 1 for info in traj.newton)
    assert traj.max_l2 > 0


def test_manufactured_newton_converges_fast(params4):
    case = model.make_manufactured_eps(params4, T=0.05)
    mesh = build_mesh(validate(params4), MeshResolution())
    sys = eps_solver.assemble(mesh, case.data)
    traj = eps_solver.solve(sys, np.linspace(0, 0.05, 9))
    for info in traj.newton:
        assert info.iterations <= 6
        assert info.residuals[-1] <= 1e-10


def test_stationary_state_is_time_invariant(params4):
    case = model.make_manufactured_eps(params4, stationary=True)
    mesh = build_mesh(validate(params4), MeshResolution())
    sys = eps_solver.assemble(mesh, case.data)
    u_star = eps_solver.stationary_state(sys, 1.0)
    u1, info = eps_solver.step(sys, u_star, 1e-3, 1.0 + 1e-3)
    gap = assembly.l2_norm(sys.M, u1 - u_star)
    assert gap < 1e-8


def test_manufactured_spatial_order(params4):
    case = model.make_manufactured_eps(params4, stationary=True)
    vp = validate(params4)
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
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(orders >= 1.8)


def test_manufactured_temporal_order(params4):
    case = model.make_manufactured_eps(params4, T=0.05)
    mesh = build_mesh(validate(params4), MeshResolution())
    sys = eps_solver.assemble(mesh, case.data)

    def final(K):
        return eps_solver.solve(sys, np.linspace(0, 0.05, K + 1),
                                keep="none").final

    ref = final(64)
    errs = [assembly.l2_norm(sys.M, final(K) - ref) for K in (4, 8, 16)]
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(orders >= 0.9)


def test_steady_approach_with_constant_source(mesh4):
    k, k_levels, kappa = default_nonlinearities()

    def f0(x, y, t):
        return (model.bump((np.asarray(x) - 0.5) / 0.35)
                * model.bump((np.asarray(y) - 0.15) / 0.105) * 30.0)

    data = ProblemData(k=k, k_levels=k_levels, kappa=kappa,
                       alpha=(2.0, 2.0, 2.0), beta=(2.0, 2.0, 2.0),
                       T=2.0, f0=f0)
    sys = eps_solver.assemble(mesh4, data)
    traj = eps_solver.solve(sys, np.linspace(0, 2.0, 17))
    incr = [assembly.l2_norm(sys.M, traj.values[k + 1] - traj.values[k])
            for k in range(16)]
    tail = incr[4:]
    assert all(b < a for a, b in zip(tail[:-1], tail[1:]))
    u_star = eps_solver.stationary_state(sys, 2.0)
    gap = assembly.l2_norm(sys.M, traj.final - u_star)
    assert gap < 0.05 * assembly.l2_norm(sys.M, u_star)


def test_energy_bound_holds(sys4):
    traj = eps_solver.solve(sys4, np.linspace(0, 0.02, 5))
    assert traj.max_l2 <= traj.energy_bound


def test_weak_residual_solution_and_probe(mesh4, default_data4):
    sys = eps_solver.assemble(mesh4, default_data4)
    tg = np.linspace(0, 0.02, 5)
    traj = eps_solver.solve(sys, tg)
    one = np.ones(sys.n)
    r = eps_solver.weak_residual(sys, traj.values, tg, one)
    assert np.max(r) < 1e-9
    # probe along the last solution increment: that is what Newton solved
    incr = traj.values[-1] - traj.values[-2]
    incr /= assembly.h1_norm(sys.M, sys.S, incr)
    r2 = eps_solver.weak_residual(sys, traj.values, tg, incr)
    assert r2[-1] < 1e-8
    with pytest.raises(ShapeMismatch):
        eps_solver.weak_residual(sys, traj.values, tg, np.ones(3))


def test_weak_residual_consistency_order(params4):
    # exact-solution interpolant plugged into the discrete weak form: the
    # residual against a fixed probe decreases under joint refinement
    case = model.make_manufactured_eps(params4, T=0.05)
    vp = validate(params4)
    vals = []
    for k, K in ((0, 8), (1, 32)):
        res = MeshResolution(cells_across=2 * 2 ** k,
                             fine_cells_per_eps=4 * 2 ** k,
                             coarse_spacing_eps=2.0 / 2 ** k)
        mesh = build_mesh(vp, res)
        sys = eps_solver.assemble(mesh, case.data)
        tg = np.linspace(0, 0.05, K + 1)
        vals_exact = np.stack([case.exact(mesh.nodes[:, 0], mesh.nodes[:, 1], t)
                               for t in tg])
        rng = np.random.default_rng(11)
        probe = rng.standard_normal(sys.n)
        probe /= assembly.h1_norm(sys.M, sys.S, probe)
        r = eps_solver.weak_residual(sys, vals_exact, tg, probe)
        vals.append(np.max(r))
    assert vals[1] < 0.5 * vals[0]


def test_discrete_monotonicity_random_pairs(sys4):
    rng = np.random.default_rng(42)
    for _ in range(100):
        u = rng.standard_normal(sys4.n)
        w = rng.standard_normal(sys4.n)
        pairing, bound = eps_solver.monotonicity_gap(sys4, u, w)
        assert pairing >= bound - 1e-9 * max(1.0, abs(pairing))


def test_integral_identity_quadrature(mesh4):
    rng = np.random.default_rng(5)
    resids = []
    for _ in range(20):
        a1, a2, b1, b2, c = rng.uniform(-2, 2, size=5)

        def phi(x, y, a1=a1, a2=a2, b1=b1, b2=b2, c=c):
            return np.sin(a1 * x + b1) * np.cos(a2 * y + b2) + c * x * y

        def dphi(x, y, a1=a1, a2=a2, b1=b1, b2=b2, c=c):
            return a1 * np.cos(a1 * x + b1) * np.cos(a2 * y + b2) + c * y

        r, scale = eps_solver.integral_identity_residual(mesh4, 0, 0, phi, dphi)
        resids.append(r / scale)
    assert max(resids) < 5e-3

    # O(dx^2): refushing the mesh by 2 shrinks the residual by ~4
    fine = build_mesh(validate(mesh4.params), MeshResolution().refine(2))

    def phi(x, y):
        return np.sin(2 * x + 0.7) * np.cos(3 * y)

    def dphi(x, y):
        return 2 * np.cos(2 * x + 0.7) * np.cos(3 * y)

    r0, s0 = eps_solver.integral_identity_residual(mesh4, 1, 2, phi, dphi)
    r1, s1 = eps_solver.integral_identity_residual(fine, 1, 2, phi, dphi)
    assert r1 / s1 < (r0 / s0) / 2.5


def test_solve_requires_zero_start(sys4):
    from thickjunction.errors import SolverError
    with pytest.raises(SolverError):
        eps_solver.solve(sys4, np.linspace(0.1, 0.2, 3))


def test_trajectory_initial_state_is_zero(sys4):
    traj = eps_solver.solve(sys4, np.linspace(0, 0.02, 3))
    assert np.all(traj.values[0] == 0.0)
