"""Homogenized multi-sheeted problem on the limit domains.

One 2D field on the body is coupled to per-column 1D fields on the three
branching-layer rectangles (one sheet on the first, two on the second, four
on the third, counting from the body).  Interface nodes are single shared
unknowns, so value continuity is exact and the Kirchhoff flux balances are
the natural conditions of the summed weak form.

x1 enters the sheet integrals only through trapezoid column weights; the
sheet blocks are tridiagonal chains hanging from the body's bottom row,
which the optional Schur backend eliminates column-by-column.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import splu

from . import assembly
from .errors import GridMismatch, LinearSolveFailure, ShapeMismatch, SolverError
from .geometry import GeometryParams
from .meshing import BlockSpec, build_block_mesh
from .model import ProblemData
from .timestep import (NewtonOptions, NodalTerm, ParabolicProblem,
                       SparseDirectSolver, newton_step, solve_stationary)

SHEET_KEYS = ((0, 0), (1, 1), (1, 2), (2, 1), (2, 2), (2, 3), (2, 4))
PARENT = {(1, 1): (0, 0), (1, 2): (0, 0),
          (2, 1): (1, 1), (2, 2): (1, 1), (2, 3): (1, 2), (2, 4): (1, 2)}


@dataclass(frozen=True)
class HomResolution:
    nx: int = 256                  # x1 intervals on (0, a)
    ny_body: int | None = None     # default: d0 / (a/nx)
    ny_sheets: tuple | None = None


@dataclass
class HomogenizedSystem:
    params: GeometryParams
    data: ProblemData
    x1: np.ndarray
    y_body: np.ndarray                       # ascending, y[0] = 0
    y_sheet: dict                            # key -> descending depth grid
    body_idx: np.ndarray                     # (ny+1, nx1)
    sheet_idx: dict                          # key -> (M+1, nx1), row 0 = top
    n: int
    M_time: sparse.csr_matrix
    S: sparse.csr_matrix
    M_V: sparse.csr_matrix
    S_V: sparse.csr_matrix
    pb: ParabolicProblem
    lin: object
    col_w: np.ndarray                        # trapezoid x1 column weights
    lumped_by: dict                          # diagnostic weight vectors

    def node_count(self) -> int:
        return self.n

    def h(self, key) -> float:
        lev, m = key
        return self.params.h0 if lev == 0 else self.params.h(lev, m)


def _trapezoid_weights(x: np.ndarray) -> np.ndarray:
    w = np.zeros(len(x))
    d = np.diff(x)
    w[:-1] += 0.5 * d
    w[1:] += 0.5 * d
    return w


def default_resolution(params: GeometryParams, nx: int = 256) -> HomResolution:
    d = params.a / nx
    ny_body = max(8, int(round(params.d0 / d)))
    ny_sheets = tuple(max(8, int(round(l / d))) for l in params.rod_lengths)
    return HomResolution(nx=nx, ny_body=ny_body, ny_sheets=ny_sheets)


def assemble(params: GeometryParams, data: ProblemData,
             res: HomResolution | None = None,
             backend: str = "monolithic") -> HomogenizedSystem:
    """Assemble the coupled body/sheet system.

    backend: 'monolithic' (sparse LU on the full matrix) or 'schur'
    (eliminate sheet chains onto the body block; bitwise-deterministic and
    verified to match the monolithic path).
    """
    if not data.certificates:
        data.certify()
    if res is None:
        res = default_resolution(params)
    ny_b = res.ny_body if res.ny_body is not None else \
        default_resolution(params, res.nx).ny_body
    sheets_n = res.ny_sheets if res.ny_sheets is not None else \
        default_resolution(params, res.nx).ny_sheets

    p = params
    q = p.depths
    nx1 = res.nx + 1
    x1 = np.linspace(0.0, p.a, nx1)
    y_body = np.linspace(0.0, p.d0, ny_b + 1)
    M0, M1, M2 = sheets_n
    y_sheet = {}
    y_sheet[(0, 0)] = np.linspace(0.0, q[1], M0 + 1)
    for m in (1, 2):
        y_sheet[(1, m)] = np.linspace(q[1], q[2], M1 + 1)
    for m in (1, 2, 3, 4):
        y_sheet[(2, m)] = np.linspace(q[2], q[3], M2 + 1)

    nb = (ny_b + 1) * nx1
    body_idx = np.arange(nb, dtype=np.int64).reshape(ny_b + 1, nx1)
    cursor = nb
    own_rows = {}
    for key, rows in (((0, 0), M0), ((1, 1), M1), ((1, 2), M1),
                      ((2, 1), M2), ((2, 2), M2), ((2, 3), M2), ((2, 4), M2)):
        own_rows[key] = np.arange(cursor, cursor + rows * nx1,
                                  dtype=np.int64).reshape(rows, nx1)
        cursor += rows * nx1
    n = cursor

    sheet_idx = {}
    sheet_idx[(0, 0)] = np.vstack([body_idx[0], own_rows[(0, 0)]])
    for m in (1, 2):
        sheet_idx[(1, m)] = np.vstack([own_rows[(0, 0)][-1], own_rows[(1, m)]])
    for m in (1, 2, 3, 4):
        parent = (1, 1) if m <= 2 else (1, 2)
        sheet_idx[(2, m)] = np.vstack([own_rows[parent][-1], own_rows[(2, m)]])

    # body matrices via a one-block mesh (ids coincide with 0..nb-1)
    bm = build_block_mesh([BlockSpec(x=x1, y=y_body)])
    Mb, Sb = assembly.assemble_mass_stiffness(bm)
    w_body = np.asarray(Mb.sum(axis=1)).ravel()

    col_w = _trapezoid_weights(x1)

    rows_m, cols_m, vals_mt, vals_mv = [], [], [], []
    rows_s, cols_s, vals_st, vals_sv = [], [], [], []
    lumped_h = {key: np.zeros(n) for key in SHEET_KEYS}
    lumped_1 = {key: np.zeros(n) for key in SHEET_KEYS}

    for key in SHEET_KEYS:
        lev = key[0]
        h = p.h0 if lev == 0 else p.h(lev, key[1])
        y = y_sheet[key]
        dlt = abs(y[1] - y[0])
        idx = sheet_idx[key]
        top = idx[:-1, :].ravel()
        bot = idx[1:, :].ravel()
        cw = np.tile(col_w, idx.shape[0] - 1)
        # stiffness h * w_q / delta * [[1,-1],[-1,1]]
        c = h * cw / dlt
        rows_s += [top, top, bot, bot]
        cols_s += [top, bot, top, bot]
        vals_st += [c, -c, -c, c]
        cv = cw / dlt
        vals_sv += [cv, -cv, -cv, cv]
        # consistent mass h * w_q * delta * [[1/3,1/6],[1/6,1/3]]
        mel = cw * dlt
        rows_m += [top, top, bot, bot]
        cols_m += [top, bot, top, bot]
        vals_mt += [h * mel / 3.0, h * mel / 6.0, h * mel / 6.0, h * mel / 3.0]
        vals_mv += [mel / 3.0, mel / 6.0, mel / 6.0, mel / 3.0]
        np.add.at(lumped_h[key], top, h * mel / 2.0)
        np.add.at(lumped_h[key], bot, h * mel / 2.0)
        np.add.at(lumped_1[key], top, mel / 2.0)
        np.add.at(lumped_1[key], bot, mel / 2.0)

    def glob(mat_body, rows, cols, vals):
        co = mat_body.tocoo()
        r = np.concatenate([co.row] + rows)
        cc = np.concatenate([co.col] + cols)
        v = np.concatenate([co.data] + vals)
        out = sparse.coo_matrix((v, (r, cc)), shape=(n, n)).tocsr()
        out.sum_duplicates()
        return out

    M_time = glob(Mb, rows_m, cols_m, vals_mt)
    S = glob(Sb, rows_s, cols_s, vals_st)
    M_V = glob(Mb, rows_m, cols_m, vals_mv)
    S_V = glob(Sb, rows_s, cols_s, vals_sv)

    w_body_g = np.zeros(n)
    w_body_g[:nb] = w_body
    terms = [NodalTerm(w_body_g, data.k)]
    for lev in (0, 1, 2):
        wk = np.zeros(n)
        for key in SHEET_KEYS:
            if key[0] == lev:
                wk = wk + lumped_h[key]
        terms.append(NodalTerm(wk, data.k_levels[lev]))
        if data.alpha[lev] == 1.0:
            wc = np.zeros(n)
            for key in SHEET_KEYS:
                if key[0] == lev:
                    wc = wc + 2.0 * lumped_1[key]
            terms.append(NodalTerm(wc, data.kappa[lev]))

    xy_body = bm.nodes
    sheet_xy = {}
    for key in SHEET_KEYS:
        X = np.tile(x1, (sheet_idx[key].shape[0], 1))
        Y = np.tile(y_sheet[key][:, None], (1, nx1))
        sheet_xy[key] = (X, Y)

    def load(t):
        F = np.zeros(n)
        F[:nb] += w_body * data.f0(xy_body[:, 0], xy_body[:, 1], t)
        for key in SHEET_KEYS:
            lev = key[0]
            X, Y = sheet_xy[key]
            contrib = np.zeros(X.shape)
            if data.beta[lev] == 1.0:
                contrib += 2.0 * data.g0[lev](X, Y, t)
            src = data.sheet_source.get(key)
            if src is not None:
                contrib += src(X, Y, t)
            if np.any(contrib):
                w = lumped_1[key][sheet_idx[key]]
                np.add.at(F, sheet_idx[key].ravel(), (w * contrib).ravel())
        return F

    lumped_time = np.asarray(M_time.sum(axis=1)).ravel()
    pb = ParabolicProblem(M=M_time, S=S, terms=terms, load=load,
                          norm_w=lumped_time)
    if backend == "monolithic":
        lin = SparseDirectSolver(pb)
    elif backend == "schur":
        lin = SchurChainSolver(pb, body_idx, sheet_idx, y_sheet, col_w, p)
    else:
        raise SolverError(f"unknown backend {backend!r}")
    return HomogenizedSystem(params=p, data=data, x1=x1, y_body=y_body,
                             y_sheet=y_sheet, body_idx=body_idx,
                             sheet_idx=sheet_idx, n=n, M_time=M_time, S=S,
                             M_V=M_V, S_V=S_V, pb=pb, lin=lin, col_w=col_w,
                             lumped_by={"body": w_body_g, "sheet_h": lumped_h,
                                        "sheet_1": lumped_1})


# ---------------------------------------------------------------------------
# multi-sheeted fields
# ---------------------------------------------------------------------------

@dataclass
class MultiSheetedField:
    x1: np.ndarray
    y_body: np.ndarray
    y_sheet: dict
    body: np.ndarray                 # (ny+1, nx1), row 0 at x2=0
    sheets: dict                     # key -> (M+1, nx1), row 0 at the top

    def check_grids(self, other: "MultiSheetedField"):
        if self.body.shape != other.body.shape or \
                any(self.sheets[k].shape != other.sheets[k].shape
                    for k in self.sheets):
            raise GridMismatch("multi-sheeted fields live on different grids")


def extract_field(system: HomogenizedSystem, u: np.ndarray) -> MultiSheetedField:
    if u.shape != (system.n,):
        raise ShapeMismatch("state vector does not match the system")
    return MultiSheetedField(
        x1=system.x1, y_body=system.y_body, y_sheet=system.y_sheet,
        body=u[system.body_idx].copy(),
        sheets={k: u[system.sheet_idx[k]].copy() for k in SHEET_KEYS})


def pack_field(system: HomogenizedSystem, f: MultiSheetedField) -> np.ndarray:
    u = np.zeros(system.n)
    u[system.body_idx] = f.body
    for k in SHEET_KEYS:
        u[system.sheet_idx[k]] = f.sheets[k]
    return u


def one_sided_d2(F: np.ndarray, dlt: float, from_top: bool) -> np.ndarray:
    """Second-order one-sided d/dx2 at a sheet end (rows ordered top-down).

    from_top=True: derivative at row 0 using rows 0,1,2 (x2 decreasing by
    dlt per row); from_top=False: derivative at the last row.
    """
    if from_top:
        return (3.0 * F[0] - 4.0 * F[1] + F[2]) / (2.0 * dlt)
    return (-3.0 * F[-1] + 4.0 * F[-2] - F[-3]) / (2.0 * dlt)


def central_dx1(F: np.ndarray, dx: float) -> np.ndarray:
    """Central x1 differences (second-order one-sided at the ends)."""
    out = np.empty_like(F)
    out[..., 1:-1] = (F[..., 2:] - F[..., :-2]) / (2.0 * dx)
    out[..., 0] = (-3.0 * F[..., 0] + 4.0 * F[..., 1] - F[..., 2]) / (2.0 * dx)
    out[..., -1] = (3.0 * F[..., -1] - 4.0 * F[..., -2] + F[..., -3]) / (2.0 * dx)
    return out


def interface_traces(system: HomogenizedSystem, u: np.ndarray) -> dict:
    """Values, tangential derivatives and one-sided flux traces at the three
    interface depths, on the homogenized x1 grid."""
    f = extract_field(system, u)
    p = system.params
    dx = system.x1[1] - system.x1[0]
    out = {}

    dlt_b = system.y_body[1] - system.y_body[0]
    Fb = f.body
    out["v_I0"] = Fb[0].copy()
    out["dx1_I0"] = central_dx1(Fb[0], dx)
    # body rows ascend away from the interface
    out["dx2_plus_I0"] = (-3.0 * Fb[0] + 4.0 * Fb[1] - Fb[2]) / (2.0 * dlt_b)

    F0 = f.sheets[(0, 0)]
    dlt0 = abs(system.y_sheet[(0, 0)][1] - system.y_sheet[(0, 0)][0])
    out["dx2_v0_I0"] = one_sided_d2(F0, dlt0, from_top=True)
    out["dx2_v0_I1"] = one_sided_d2(F0, dlt0, from_top=False)
    out["v_I1"] = F0[-1].copy()
    out["dx1_I1"] = central_dx1(F0[-1], dx)

    for m in (1, 2):
        F = f.sheets[(1, m)]
        dlt1 = abs(system.y_sheet[(1, m)][1] - system.y_sheet[(1, m)][0])
        out[f"dx2_v1{m}_I1"] = one_sided_d2(F, dlt1, from_top=True)
        out[f"dx2_v1{m}_I2"] = one_sided_d2(F, dlt1, from_top=False)
        out[f"v_I2_{m}"] = F[-1].copy()
        out[f"dx1_I2_{m}"] = central_dx1(F[-1], dx)
    for m in (1, 2, 3, 4):
        F = f.sheets[(2, m)]
        dlt2 = abs(system.y_sheet[(2, m)][1] - system.y_sheet[(2, m)][0])
        out[f"dx2_v2{m}_I2"] = one_sided_d2(F, dlt2, from_top=True)
    return out


def check_transmission(system: HomogenizedSystem, u: np.ndarray) -> dict:
    """Max Kirchhoff flux defects per interface (one-sided differences)."""
    tr = interface_traces(system, u)
    p = system.params
    d0 = np.max(np.abs(tr["dx2_plus_I0"] - p.h0 * tr["dx2_v0_I0"]))
    d1 = np.max(np.abs(p.h0 * tr["dx2_v0_I1"]
                       - p.h11 * tr["dx2_v11_I1"] - p.h12 * tr["dx2_v12_I1"]))
    d2a = np.max(np.abs(p.h11 * tr["dx2_v11_I2"]
                        - p.h21 * tr["dx2_v21_I2"] - p.h22 * tr["dx2_v22_I2"]))
    d2b = np.max(np.abs(p.h12 * tr["dx2_v12_I2"]
                        - p.h23 * tr["dx2_v23_I2"] - p.h24 * tr["dx2_v24_I2"]))
    return {"I0": float(d0), "I1": float(d1), "I2_1": float(d2a),
            "I2_2": float(d2b)}


# ---------------------------------------------------------------------------
# operator probes
# ---------------------------------------------------------------------------

def apply_operator(system: HomogenizedSystem, u: np.ndarray) -> np.ndarray:
    return system.pb.spatial_apply(u)


def monotonicity_probe(system: HomogenizedSystem, u: np.ndarray,
                       w: np.ndarray) -> tuple[float, float]:
    """(<A u - A w, u - w>, certified lower bound c1 min(1, min h) |u-w|_V^2)."""
    d = u - w
    pairing = float((apply_operator(system, u) - apply_operator(system, w)) @ d)
    p = system.params
    cmin = system.data.c1_min * min(1.0, p.h_min)
    bound = cmin * float(d @ (system.M_V @ d))
    return pairing, bound


def _linear_coeff_budget(system: HomogenizedSystem):
    """Per-term (|f(0)|, total weight) pairs for the coercivity constant."""
    out = []
    for t in system.pb.terms:
        f0 = t.fam.at_zero
        W = float(np.sum(t.weights))
        out.append((abs(f0), W))
    return out


def coercivity_probe(system: HomogenizedSystem, phi: np.ndarray,
                     delta: float = 0.25) -> tuple[float, float]:
    """lhs = <A phi, phi>; rhs = C3 |phi|_H^2 - delta |phi|_V^2 - C4(delta).

    C3 = min(1, h_min) * min(1, c1); the linear parts f(0) are absorbed by
    Cauchy's inequality with the lumped/consistent mass factor 9 folded
    into C4.
    """
    lhs = float(apply_operator(system, phi) @ phi)
    p = system.params
    C3 = min(1.0, p.h_min) * min(1.0, system.data.c1_min)
    nv2 = float(phi @ (system.M_V @ phi))
    nh2 = nv2 + float(phi @ (system.S_V @ phi))
    C4 = sum(9.0 * f0 * f0 * W / (4.0 * delta)
             for f0, W in _linear_coeff_budget(system))
    rhs = C3 * nh2 - delta * nv2 - C4
    return lhs, rhs


def boundedness_probe(system: HomogenizedSystem, phi: np.ndarray,
                      psi: np.ndarray) -> tuple[float, float]:
    """|<A phi, psi>| and a data-derived bound C1 (1 + |phi|_H) |psi|_H."""
    val = abs(float(apply_operator(system, phi) @ psi))
    p = system.params
    hmax = max(1.0, p.h0, p.h11, p.h12, p.h21, p.h22, p.h23, p.h24)
    c3 = 0.0
    Wmax = 0.0
    for t in system.pb.terms:
        c3 = max(c3, max(abs(t.fam.at_zero), t.fam.c2))
        Wmax = max(Wmax, float(np.sum(t.weights)))
    n_terms = len(system.pb.terms)
    C1 = hmax + 3.0 * n_terms * c3 * max(1.0, np.sqrt(Wmax))
    nh_phi = np.sqrt(float(phi @ (system.M_V @ phi)) + float(phi @ (system.S_V @ phi)))
    nh_psi = np.sqrt(float(psi @ (system.M_V @ psi)) + float(psi @ (system.S_V @ psi)))
    return val, C1 * (1.0 + nh_phi) * nh_psi


# ---------------------------------------------------------------------------
# time stepping
# ---------------------------------------------------------------------------

@dataclass
class HomTrajectory:
    times: np.ndarray
    values: np.ndarray | None
    final: np.ndarray
    newton: list
    max_abs: float


def solve(system: HomogenizedSystem, time_grid: np.ndarray,
          opts: NewtonOptions | None = None, keep: str = "all",
          on_step=None, store: np.ndarray | None = None) -> HomTrajectory:
    """Implicit Euler trajectory from zero initial data.

    ``store`` (optional, shape (K+1, n), may be a memmap) receives every
    state row; ``on_step(k, t, u)`` streams states to a callback.
    """
    time_grid = np.asarray(time_grid, dtype=float)
    if time_grid[0] != 0.0:
        raise SolverError("time grid must start at t = 0")
    u = np.zeros(system.n)
    K = len(time_grid) - 1
    values = np.zeros((K + 1, system.n)) if keep == "all" else None
    infos = []
    max_abs = 0.0
    if store is not None:
        store[0] = u
    if on_step is not None:
        on_step(0, 0.0, u)
    for k in range(1, K + 1):
        dt = time_grid[k] - time_grid[k - 1]
        try:
            u, info = newton_step(system.pb, system.lin, u, dt, time_grid[k],
                                  opts=opts)
        except SolverError as exc:
            exc.step_index = k
            raise
        infos.append(info)
        if values is not None:
            values[k] = u
        if store is not None:
            store[k] = u
        max_abs = max(max_abs, float(np.abs(u).max(initial=0.0)))
        if on_step is not None:
            on_step(k, time_grid[k], u)
    if max_abs > system.data.cert_S:
        raise SolverError("homogenized solution left the certification range")
    return HomTrajectory(times=time_grid, values=values, final=u,
                         newton=infos, max_abs=max_abs)


def stationary_state(system: HomogenizedSystem, t: float,
                     opts: NewtonOptions | None = None) -> np.ndarray:
    u, _ = solve_stationary(system.pb, SparseDirectSolver(system.pb), t,
                            opts=opts)
    return u


# ---------------------------------------------------------------------------
# Schur fast path: eliminate sheet chains onto the body block
# ---------------------------------------------------------------------------

class SchurChainSolver:
    """Column-wise elimination of the tridiagonal sheet chains.

    The Jacobian is (M/dt + S + diag); its sheet part decomposes per x1
    column into a tree of tridiagonal chains rooted at the body's bottom
    row.  Chain off-diagonals are known in closed form (uniform sheet
    grids): off = h*w_q*(dlt/(6*dt) - 1/dlt).  Leaf-to-root elimination
    folds one Schur scalar per column onto the body diagonal; the body
    block is then factorized with sparse LU.  Elimination order is fixed,
    so results are bit-reproducible.
    """

    _ORDER = [(2, 1), (2, 2), (2, 3), (2, 4), (1, 1), (1, 2), (0, 0)]

    def __init__(self, pb: ParabolicProblem, body_idx, sheet_idx, y_sheet,
                 col_w, params):
        self.pb = pb
        self.body_idx = body_idx
        self.sheet_idx = sheet_idx
        self.nb = body_idx.size
        self.n = pb.n
        self.col_w = col_w
        self._hd = {}
        for key in sheet_idx:
            h = params.h0 if key[0] == 0 else params.h(key[0], key[1])
            dlt = abs(y_sheet[key][1] - y_sheet[key][0])
            self._hd[key] = (h, dlt)
        self._dt = None
        self._body_A0 = None
        self._lu = None
        self.refactor_count = 0

    def prepare(self, dt: float | None):
        if dt == self._dt and self._body_A0 is not None:
            return
        self._dt = dt
        A = self.pb.S.tocsr() if dt is None else \
            (self.pb.M.multiply(1.0 / dt) + self.pb.S).tocsr()
        self._diagA = A.diagonal()
        body_ids = self.body_idx.ravel()
        Ab = A[body_ids][:, body_ids].tocsc()
        Ab.sort_indices()
        cols = np.repeat(np.arange(self.nb), np.diff(Ab.indptr))
        self._body_diag_pos = np.flatnonzero(Ab.indices == cols)
        self._body_A0 = Ab
        self._off = {}
        for key, (h, dlt) in self._hd.items():
            mass_off = 0.0 if dt is None else dlt / (6.0 * dt)
            self._off[key] = h * self.col_w * (mass_off - 1.0 / dlt)
        self._lu = None

    @property
    def has_lu(self) -> bool:
        return self._lu is not None

    def refresh(self, diag: np.ndarray):
        d = self._diagA + diag
        self._dtld = {}
        for key in self._ORDER:
            rows = self.sheet_idx[key]
            off = self._off[key]                  # (nx1,), same per element
            M = rows.shape[0] - 1
            dt_l = np.empty((M, rows.shape[1]))
            dt_l[M - 1] = d[rows[M]]
            for r in range(M - 1, 0, -1):
                dt_l[r - 1] = d[rows[r]] - off * off / dt_l[r]
            d[rows[0]] = d[rows[0]] - off * off / dt_l[0]
            self._dtld[key] = dt_l
        body_ids = self.body_idx.ravel()
        Ab = self._body_A0.copy()
        Ab.data[self._body_diag_pos] += d[body_ids] - self._diagA[body_ids]
        try:
            self._lu = splu(Ab)
        except RuntimeError as exc:
            raise LinearSolveFailure(str(exc)) from exc
        self.refactor_count += 1

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        if self._lu is None:
            raise LinearSolveFailure("no factorization available")
        b = rhs.copy()
        btld = {}
        for key in self._ORDER:
            rows = self.sheet_idx[key]
            off = self._off[key]
            dt_l = self._dtld[key]
            M = rows.shape[0] - 1
            bt = np.empty_like(dt_l)
            bt[M - 1] = b[rows[M]]
            for r in range(M - 1, 0, -1):
                bt[r - 1] = b[rows[r]] - off * bt[r] / dt_l[r]
            b[rows[0]] = b[rows[0]] - off * bt[0] / dt_l[0]
            btld[key] = bt
        body_ids = self.body_idx.ravel()
        x = np.zeros(self.n)
        x[body_ids] = self._lu.solve(b[body_ids])
        for key in reversed(self._ORDER):
            rows = self.sheet_idx[key]
            off = self._off[key]
            dt_l = self._dtld[key]
            bt = btld[key]
            M = rows.shape[0] - 1
            for r in range(1, M + 1):
                x[rows[r]] = (bt[r - 1] - off * x[rows[r - 1]]) / dt_l[r - 1]
        return x
