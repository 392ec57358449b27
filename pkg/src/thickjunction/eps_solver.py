"""Direct solver for the semilinear parabolic problem on the full junction.

Space: bilinear elements on the tagged structured mesh, nonlinear reaction
and Robin terms by nodal (lumped) quadrature so Newton Jacobians are
stiffness-plus-diagonal.  Time: implicit Euler from zero initial data.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import assembly
from .errors import ShapeMismatch, SolverError
from .geometry import REGION_BODY, REGION_LEVEL, StructuredMesh
from .model import ProblemData
from .timestep import (NewtonOptions, NodalTerm, ParabolicProblem,
                       SparseDirectSolver, StepInfo, newton_step,
                       solve_stationary)


def _sawtooth(xi1, b):
    return b - (xi1 - np.floor(xi1))


@dataclass
class DiscreteEpsSystem:
    mesh: StructuredMesh
    data: ProblemData
    M: object
    S: object
    M_region: dict
    w_region: dict
    w_upsilon: dict                     # level -> unscaled lumped wall weights
    lumped: np.ndarray                  # global lumped mass
    pb: ParabolicProblem
    lin: SparseDirectSolver
    body_sel: np.ndarray
    rod_sel: dict
    upsilon_sel: dict

    @property
    def eps(self) -> float:
        return self.mesh.params.eps

    @property
    def n(self) -> int:
        return self.mesh.n_nodes


def assemble(mesh: StructuredMesh, data: ProblemData) -> DiscreteEpsSystem:
    """Galerkin assembly of mass/stiffness/Robin structures plus load hooks."""
    mesh.check_boundary_tags()
    if not data.certificates:
        data.certify()
    M, S = assembly.assemble_mass_stiffness(mesh.bm)
    M_region = assembly.region_mass_matrices(mesh.bm)
    w_region = assembly.region_lumped_weights(mesh.bm)
    lumped = np.asarray(M.sum(axis=1)).ravel()

    eps = mesh.params.eps
    n = mesh.n_nodes
    w_ups = {lev: assembly.edge_lumped_vector(n, mesh.upsilon[lev])
             for lev in (0, 1, 2)}

    terms = [NodalTerm(w_region[REGION_BODY], data.k)]
    for lev in (0, 1, 2):
        terms.append(NodalTerm(w_region[REGION_LEVEL[lev]], data.k_levels[lev]))
    for lev in (0, 1, 2):
        terms.append(NodalTerm(eps ** data.alpha[lev] * w_ups[lev],
                               data.kappa[lev]))

    xy = mesh.nodes
    body_sel = np.flatnonzero(w_region[REGION_BODY] > 0)
    rod_sel = {lev: np.flatnonzero(w_region[REGION_LEVEL[lev]] > 0)
               for lev in (0, 1, 2)}
    ups_sel = {lev: np.flatnonzero(w_ups[lev] > 0) for lev in (0, 1, 2)}

    def load(t):
        F = np.zeros(n)
        sel = body_sel
        F[sel] += (w_region[REGION_BODY][sel]
                   * data.f0(xy[sel, 0], xy[sel, 1], t))
        for lev in (0, 1, 2):
            if data.volume_rod[lev] is not None:
                sel = rod_sel[lev]
                F[sel] += (w_region[REGION_LEVEL[lev]][sel]
                           * data.volume_rod[lev](xy[sel, 0], xy[sel, 1], t))
            sel = ups_sel[lev]
            if sel.size:
                g = data.g_eps(lev, xy[sel, 0], xy[sel, 1], t, eps)
                F[sel] += eps ** data.beta[lev] * w_ups[lev][sel] * g
        return F

    pb = ParabolicProblem(M=M, S=S, terms=terms, load=load, norm_w=lumped)
    lin = SparseDirectSolver(pb)
    return DiscreteEpsSystem(mesh=mesh, data=data, M=M, S=S,
                             M_region=M_region, w_region=w_region,
                             w_upsilon=w_ups, lumped=lumped, pb=pb, lin=lin,
                             body_sel=body_sel, rod_sel=rod_sel,
                             upsilon_sel=ups_sel)


@dataclass
class EpsTrajectory:
    times: np.ndarray
    values: np.ndarray | None           # (K+1, n) when kept
    final: np.ndarray
    newton: list
    max_abs: float
    energy_bound: float
    max_l2: float

    def at(self, k: int) -> np.ndarray:
        if self.values is None:
            raise SolverError("trajectory values were not kept")
        return self.values[k]


def step(system: DiscreteEpsSystem, state: np.ndarray, dt: float,
         t_next: float, opts: NewtonOptions | None = None):
    """One implicit Euler step from ``state``; returns (u, StepInfo)."""
    if state.shape != (system.n,):
        raise ShapeMismatch(f"state has shape {state.shape}, expected ({system.n},)")
    return newton_step(system.pb, system.lin, state, dt, t_next, opts=opts)


def apriori_l2_bound(system: DiscreteEpsSystem, time_grid: np.ndarray) -> float:
    """Crude discrete a-priori bound on max_n ||u^n||_{L2} from data norms.

    From monotonicity, ||u^n||_M <= max_t ||F(t) - A(0)||_{Ml^-1} * kappa / c1
    with kappa <= 3 the lumped/consistent mass equivalence factor.
    """
    data = system.data
    a0 = system.pb.spatial_apply(np.zeros(system.n))
    worst = 0.0
    for t in time_grid[1:]:
        r = system.pb.load(t) - a0
        worst = max(worst, system.pb.weighted_norm(r))
    return 3.0 * worst / data.c1_min


def solve(system: DiscreteEpsSystem, time_grid: np.ndarray,
          opts: NewtonOptions | None = None, keep: str = "all",
          on_step=None) -> EpsTrajectory:
    """March the trajectory from zero initial data over ``time_grid``.

    ``on_step(k, t, u)`` is invoked after every accepted step (including
    k=0 with the zero state), which lets callers stream error accumulation
    without storing the trajectory.
    """
    time_grid = np.asarray(time_grid, dtype=float)
    if time_grid[0] != 0.0:
        raise SolverError("time grid must start at t = 0")
    n = system.n
    u = np.zeros(n)
    K = len(time_grid) - 1
    values = np.zeros((K + 1, n)) if keep == "all" else None
    infos: list[StepInfo] = []
    max_abs = 0.0
    max_l2 = 0.0
    bound = apriori_l2_bound(system, time_grid)
    if on_step is not None:
        on_step(0, 0.0, u)
    for k in range(1, K + 1):
        dt = time_grid[k] - time_grid[k - 1]
        try:
            u, info = step(system, u, dt, time_grid[k], opts=opts)
        except SolverError as exc:
            exc.step_index = k
            raise
        infos.append(info)
        if values is not None:
            values[k] = u
        max_abs = max(max_abs, float(np.abs(u).max(initial=0.0)))
        l2 = assembly.l2_norm(system.M, u)
        max_l2 = max(max_l2, l2)
        if l2 > 2.0 * bound + 1e-12:
            raise SolverError(
                f"energy stability violated at step {k}: ||u|| = {l2} "
                f"exceeds a-priori bound {bound}")
        if on_step is not None:
            on_step(k, time_grid[k], u)
    S_cert = system.data.cert_S
    if max_abs > S_cert:
        raise SolverError(
            f"solution range {max_abs} exceeds certification interval "
            f"[-{S_cert}, {S_cert}]; re-certify with a larger S")
    return EpsTrajectory(times=time_grid, values=values, final=u,
                         newton=infos, max_abs=max_abs,
                         energy_bound=bound, max_l2=max_l2)


def stationary_state(system: DiscreteEpsSystem, t: float,
                     opts: NewtonOptions | None = None) -> np.ndarray:
    """Discrete steady state S u + reaction(u) + robin(u) = F(t)."""
    u, _ = solve_stationary(system.pb, SparseDirectSolver(system.pb), t, opts=opts)
    return u


def weak_residual(system: DiscreteEpsSystem, values: np.ndarray,
                  time_grid: np.ndarray, probe: np.ndarray) -> np.ndarray:
    """| <du/dt, psi> + <A u, psi> - <F, psi> | per step, discrete time
    derivative; an independent consistency probe for any nodal trajectory."""
    if probe.shape != (system.n,):
        raise ShapeMismatch("probe shape does not match the mesh")
    if values.shape[1] != system.n or values.shape[0] != len(time_grid):
        raise ShapeMismatch("trajectory array does not match mesh/time grid")
    out = np.zeros(len(time_grid) - 1)
    for k in range(1, len(time_grid)):
        dt = time_grid[k] - time_grid[k - 1]
        u = values[k]
        r = (system.M @ (u - values[k - 1])) / dt
        r = r + system.pb.spatial_apply(u) - system.pb.load(time_grid[k])
        out[k - 1] = abs(float(probe @ r))
    return out


def monotonicity_gap(system: DiscreteEpsSystem, u: np.ndarray,
                     w: np.ndarray) -> tuple[float, float]:
    """(pairing, certified lower bound) for <A u - A w, u - w>."""
    d = u - w
    pairing = float((system.pb.spatial_apply(u) - system.pb.spatial_apply(w)) @ d)
    bound = system.data.c1_min * float(d @ (system.M @ d))
    return pairing, bound


def integral_identity_residual(mesh: StructuredMesh, level: int, m: int,
                               phi, dphi_dx1) -> tuple[float, float]:
    """Residual of the wall/volume integral identity on the (level, m) rods.

    (eps*h/2) * int_walls phi dx2  vs  int_G phi dx - eps * int_G Y(x1/eps)
    * d_x1 phi dx, all by the mesh quadrature (trapezoid on walls, 2x2
    Gauss in cells).  Returns (residual, magnitude) for relative checks.
    """
    p = mesh.params
    eps = p.eps
    h = p.h(level, m)
    b = mesh.layout.offsets.b(level, m)

    lhs = 0.0
    for es in mesh.upsilon[level]:
        if es.branch != m:
            continue
        xw = np.full(es.nodes.shape, es.fixed)
        vals = phi(xw, mesh.nodes[es.nodes, 1])
        lhs += float(np.sum(es.lumped_weights() * vals))
    lhs *= eps * h / 2.0

    vol = 0.0
    saw = 0.0
    for blk in mesh.bm.blocks:
        sp = blk.spec
        if sp.level != level or sp.branch != m:
            continue
        dx = np.diff(blk.x)
        dy = np.diff(blk.y)
        xc = blk.x[:-1]
        yc = blk.y[:-1]
        for gx in (-1.0 / np.sqrt(3.0), 1.0 / np.sqrt(3.0)):
            for gy in (-1.0 / np.sqrt(3.0), 1.0 / np.sqrt(3.0)):
                px = xc + dx * 0.5 * (1.0 + gx)
                py = yc + dy * 0.5 * (1.0 + gy)
                PX, PY = np.meshgrid(px, py, indexing="ij")
                wq = np.outer(dx, dy) * 0.25
                vol += float(np.sum(wq * phi(PX, PY)))
                saw += float(np.sum(wq * _sawtooth(PX / eps, b) * dphi_dx1(PX, PY)))
    rhs = vol - eps * saw
    scale = max(abs(lhs), abs(rhs), 1e-30)
    return abs(lhs - rhs), scale
