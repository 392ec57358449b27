"""Layer problems on truncated periodicity cells.

Each cell is a union of semi-infinite strips truncated at |xi2| = L: the
junction cell (full-width periodic upper half plus one strip below) and the
branching cells (one parent strip above, two child strips below).  The
truncation rows carry the Neumann data of the known far-field slopes, the
pure-Neumann null space is pinned by a mean-zero constraint, and the
solution is shifted to the declared normalization afterwards.

Far-field extraction exploits two exact discrete identities: the
cross-sectional integral of a Q1 solution is an affine function of xi2
inside a strip (so slopes are flux-exact), and transverse Fourier modes
have zero cross-mean (so constants converge instantly in the mean).  Decay
rates are fitted on the max-norm deviation from the asymptote.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import splu

from . import assembly
from .errors import (CompatibilityFailure, ConfigError, FitIllConditioned,
                     LinearSolveFailure, OutsideCell, TruncationTooSmall)
from .geometry import GeometryParams, unit_walls
from .meshing import BlockMesh, BlockSpec, build_block_mesh, refine_breakpoints

CELL_KINDS = ("Pi0", "Pi1", "Pi2_1", "Pi2_2")


@dataclass(frozen=True)
class CellSpec:
    kind: str
    top: tuple[float, float]
    bots: tuple[tuple[float, float], ...]
    L: float
    dxi: float
    periodic: bool

    def __post_init__(self):
        if self.kind not in CELL_KINDS:
            raise ConfigError(f"unknown cell kind {self.kind!r}")
        widths = [hi - lo for lo, hi in (self.top,) + self.bots]
        if self.L < 5.0 * max(1.0 if self.periodic else 0.0, *widths):
            raise ConfigError(f"truncation L={self.L} too small for widths {widths}")
        for lo, hi in self.bots:
            if not (self.top[0] - 1e-14 <= lo < hi <= self.top[1] + 1e-14):
                if not self.periodic:
                    raise ConfigError("bottom strips must nest in the top strip")
        for lo, hi in ((self.top,) + self.bots):
            if not (-1e-14 <= lo < hi <= 1.0 + 1e-14):
                raise ConfigError("strips must lie within the unit period")

    @property
    def top_width(self) -> float:
        return self.top[1] - self.top[0]

    def bot_width(self, i: int) -> float:
        lo, hi = self.bots[i]
        return hi - lo

    def center(self, exit_key: str) -> float:
        if exit_key == "top":
            return 0.5 * (self.top[0] + self.top[1])
        i = int(exit_key[3:]) - 1
        lo, hi = self.bots[i]
        return 0.5 * (lo + hi)


def cell_spec(kind: str, params: GeometryParams, L: float = 10.0,
              cells_across: int = 8) -> CellSpec:
    """Concrete cell geometry from the junction parameters.

    dxi resolves the narrowest strip of this cell with >= cells_across
    cells.
    """
    walls = unit_walls(params)
    if kind == "Pi0":
        top = (0.0, 1.0)
        bots = (walls[(0, 0)],)
        periodic = True
    elif kind == "Pi1":
        top = walls[(0, 0)]
        bots = (walls[(1, 1)], walls[(1, 2)])
        periodic = False
    elif kind == "Pi2_1":
        top = walls[(1, 1)]
        bots = (walls[(2, 1)], walls[(2, 2)])
        periodic = False
    elif kind == "Pi2_2":
        top = walls[(1, 2)]
        bots = (walls[(2, 3)], walls[(2, 4)])
        periodic = False
    else:
        raise ConfigError(f"unknown cell kind {kind!r}")
    widths = [hi - lo for lo, hi in (top,) + bots]
    dxi = min(widths) / cells_across
    return CellSpec(kind=kind, top=top, bots=bots, L=L, dxi=dxi,
                    periodic=periodic)


@dataclass
class FarField:
    slope: float            # coefficient of xi2 in the asymptote
    const: float            # additive constant under our normalization
    xi1_coeff: float        # 0.0, or -1.0 for sawtooth-type solutions
    center: float           # strip center b entering coeff*(xi1 - b)... see value()
    decay_rate: float
    fit_residual: float
    direction: int          # +1 top exit, -1 bottom exit
    interval: tuple[float, float]

    def value(self, xi1, xi2):
        return (self.slope * np.asarray(xi2)
                + self.const
                + self.xi1_coeff * (np.asarray(xi1) - self.center))

    def gradient(self, xi1, xi2):
        shape = np.broadcast(np.asarray(xi1), np.asarray(xi2)).shape
        return (np.full(shape, self.xi1_coeff), np.full(shape, self.slope))


@dataclass
class CellSolution:
    spec: CellSpec
    problem: str                       # "Z1" | "Z2" | "Xi1" | "Xi2" | "Z"
    bm: BlockMesh
    u: np.ndarray
    exits: dict[str, FarField]
    normalization: str

    def field(self, block_index: int) -> np.ndarray:
        return self.u[self.bm.blocks[block_index].nid]

    # ---- sampling -------------------------------------------------------

    def _strip_for(self, xi1: np.ndarray, bottom: bool) -> int:
        """Index of the strip containing all of xi1 (0=top, 1..=bots)."""
        tol = 1e-12
        if not bottom:
            lo, hi = self.spec.top
            if np.all((xi1 >= lo - tol) & (xi1 <= hi + tol)):
                return 0
            raise OutsideCell("xi1 outside the top strip")
        for i, (lo, hi) in enumerate(self.spec.bots):
            if np.all((xi1 >= lo - tol) & (xi1 <= hi + tol)):
                return i + 1
        raise OutsideCell("xi1 outside every bottom strip")

    def _bilinear(self, block, xi1, xi2):
        x, y = block.x, block.y
        F = self.u[block.nid]
        ix = np.clip(np.searchsorted(x, xi1, side="right") - 1, 0, len(x) - 2)
        iy = np.clip(np.searchsorted(y, xi2, side="right") - 1, 0, len(y) - 2)
        tx = (xi1 - x[ix]) / (x[ix + 1] - x[ix])
        ty = (xi2 - y[iy]) / (y[iy + 1] - y[iy])
        TX, TY = np.meshgrid(tx, ty, indexing="ij")
        f00 = F[np.ix_(iy, ix)].T
        f10 = F[np.ix_(iy, ix + 1)].T
        f01 = F[np.ix_(iy + 1, ix)].T
        f11 = F[np.ix_(iy + 1, ix + 1)].T
        vals = ((1 - TX) * (1 - TY) * f00 + TX * (1 - TY) * f10
                + (1 - TX) * TY * f01 + TX * TY * f11)
        dx = (x[ix + 1] - x[ix])[:, None]
        dy = (y[iy + 1] - y[iy])[None, :]
        g1 = ((1 - TY) * (f10 - f00) + TY * (f11 - f01)) / dx
        g2 = ((1 - TX) * (f01 - f00) + TX * (f11 - f10)) / dy
        return vals, g1, g2

    def sample_tensor(self, xi1: np.ndarray, xi2: np.ndarray,
                      with_gradient: bool = False):
        """Sample on the tensor grid xi1 x xi2 -> array (len(xi1), len(xi2)).

        xi1 is wrapped 1-periodically; beyond |xi2| > L the stored far-field
        asymptote continues the solution.
        """
        xi1 = np.mod(np.asarray(xi1, dtype=float), 1.0)
        xi2 = np.asarray(xi2, dtype=float)
        L = self.spec.L
        vals = np.empty((len(xi1), len(xi2)))
        g1 = np.empty_like(vals) if with_gradient else None
        g2 = np.empty_like(vals) if with_gradient else None

        masks = {
            "far_top": xi2 > L,
            "top": (xi2 >= 0.0) & (xi2 <= L),
            "bot": (xi2 < 0.0) & (xi2 >= -L),
            "far_bot": xi2 < -L,
        }
        for zone, msel in masks.items():
            if not np.any(msel):
                continue
            z = xi2[msel]
            if zone in ("far_top", "far_bot"):
                bottom = zone == "far_bot"
                strip = self._strip_for(xi1, bottom)
                key = "top" if strip == 0 else f"bot{strip}"
                ff = self.exits[key]
                X, Z = np.meshgrid(xi1, z, indexing="ij")
                vals[:, msel] = ff.value(X, Z)
                if with_gradient:
                    gg1, gg2 = ff.gradient(X, Z)
                    g1[:, msel] = gg1
                    g2[:, msel] = gg2
            else:
                bottom = zone == "bot"
                strip = self._strip_for(xi1, bottom)
                # block order: top block first, then bottom strips
                block = self.bm.blocks[strip]
                v, d1, d2 = self._bilinear(block, xi1, z)
                vals[:, msel] = v
                if with_gradient:
                    g1[:, msel] = d1
                    g2[:, msel] = d2
        if with_gradient:
            return vals, g1, g2
        return vals

    def sample_points(self, xi1, xi2, with_gradient: bool = False):
        """Pointwise sampling (flattened, matched arrays)."""
        xi1 = np.atleast_1d(np.asarray(xi1, dtype=float))
        xi2 = np.atleast_1d(np.asarray(xi2, dtype=float))
        out = np.empty(xi1.shape)
        gg1 = np.empty(xi1.shape)
        gg2 = np.empty(xi1.shape)
        for i in range(xi1.size):
            res = self.sample_tensor(xi1[i:i + 1], xi2[i:i + 1],
                                     with_gradient=with_gradient)
            if with_gradient:
                out[i], gg1[i], gg2[i] = res[0][0, 0], res[1][0, 0], res[2][0, 0]
            else:
                out[i] = res[0, 0]
        if with_gradient:
            return out, gg1, gg2
        return out

    def content_hash(self) -> str:
        h = hashlib.sha256()
        h.update(self.u.tobytes())
        return h.hexdigest()


# ---------------------------------------------------------------------------
# mesh and solve
# ---------------------------------------------------------------------------

def _build_cell_mesh(spec: CellSpec) -> tuple[BlockMesh, np.ndarray, dict]:
    """Top block plus bottom strips, conforming at xi2 = 0."""
    breaks = sorted({spec.top[0], spec.top[1],
                     *(v for lo_hi in spec.bots for v in lo_hi)})
    master, _ = refine_breakpoints(np.asarray(breaks), spec.dxi)
    ny = int(np.ceil(spec.L / spec.dxi))
    y_top = np.linspace(0.0, spec.L, ny + 1)
    y_bot = np.linspace(-spec.L, 0.0, ny + 1)

    def col_span(lo, hi):
        i0 = int(np.searchsorted(master, lo))
        i1 = int(np.searchsorted(master, hi))
        if not (master[i0] == lo and master[i1] == hi):
            raise ConfigError("strip walls must be master grid points")
        return i0, i1

    specs = [BlockSpec(x=master, y=y_top, region=0, level=10,
                       periodic_x=spec.periodic)]
    for i, (lo, hi) in enumerate(spec.bots):
        i0, i1 = col_span(lo, hi)
        specs.append(BlockSpec(x=master[i0:i1 + 1], y=y_bot, parent=0,
                               parent_col_offset=i0, region=1 + i,
                               level=11, branch=i + 1))
    bm = build_block_mesh(specs)
    spans = {f"bot{i + 1}": col_span(lo, hi) for i, (lo, hi) in enumerate(spec.bots)}
    return bm, master, spans


def _wall_edges(bm: BlockMesh, spec: CellSpec):
    """(block, side, strip_key) for every lateral wall with its node column."""
    walls = []
    if not spec.periodic:
        top = bm.blocks[0]
        walls.append(("top", -1, top.left_col(), top.y))
        walls.append(("top", +1, top.right_col(), top.y))
    for i in range(len(spec.bots)):
        b = bm.blocks[1 + i]
        walls.append((f"bot{i + 1}", -1, b.left_col(), b.y))
        walls.append((f"bot{i + 1}", +1, b.right_col(), b.y))
    return walls


def _edge_weights(pos: np.ndarray) -> np.ndarray:
    w = np.zeros(len(pos))
    gaps = np.abs(np.diff(pos))
    w[:-1] += 0.5 * gaps
    w[1:] += 0.5 * gaps
    return w


def _truncation_load(bm: BlockMesh, spec: CellSpec, slopes: dict) -> np.ndarray:
    """Neumann load from prescribed far-field slopes at the truncation rows."""
    b = np.zeros(bm.n_nodes)
    top = bm.blocks[0]
    row = top.nid[-1, :]
    w = _edge_weights(top.x)
    if spec.periodic:
        # identified seam column: weights of both ends land on one node
        pass
    np.add.at(b, row, slopes["top"] * w)
    for i in range(len(spec.bots)):
        blk = bm.blocks[1 + i]
        row = blk.nid[0, :]
        w = _edge_weights(blk.x)
        np.add.at(b, row, -slopes[f"bot{i + 1}"] * w)
    return b


def _wall_load(bm: BlockMesh, spec: CellSpec, flux_per_side) -> np.ndarray:
    """Neumann load on lateral walls; flux_per_side(strip_key, side) gives
    the outward normal derivative value (constant along the wall)."""
    b = np.zeros(bm.n_nodes)
    for strip_key, side, col, y in _wall_edges(bm, spec):
        g = flux_per_side(strip_key, side)
        if g != 0.0:
            np.add.at(b, col, g * _edge_weights(y))
    return b


def _pinned_solve(S: sparse.csr_matrix, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve the pure-Neumann system with the mean-zero constraint w.u = 0."""
    total = float(np.sum(b))
    if abs(total) > 1e-12 * max(1.0, float(np.sum(np.abs(b)))):
        raise CompatibilityFailure(
            f"Neumann data sums to {total}, incompatible with the pure "
            "Neumann problem")
    n = S.shape[0]
    K = sparse.bmat([[S, w[:, None]], [w[None, :], None]], format="csc")
    try:
        lu = splu(K)
    except RuntimeError as exc:
        raise LinearSolveFailure(str(exc)) from exc
    sol = lu.solve(np.concatenate([b, [0.0]]))
    return sol[:n]


def _cross_means(blk, u) -> tuple[np.ndarray, np.ndarray]:
    """Trapezoid cross-sectional means of u over every row of a block."""
    F = u[blk.nid]
    w = _edge_weights(blk.x)
    width = blk.x[-1] - blk.x[0]
    return blk.y, (F @ w) / width


def _fit_exit(blk, u, direction: int, xi1_coeff: float, center: float,
              interval, L: float) -> FarField:
    """Least-squares slope/constant on the outer quarter plus decay fit."""
    y, means = _cross_means(blk, u)
    if xi1_coeff != 0.0:
        # remove the sawtooth part's cross mean (zero for a centered strip,
        # kept explicit for clarity)
        xm = 0.5 * (blk.x[0] + blk.x[-1])
        means = means - xi1_coeff * (xm - center)
    sel = (y * direction) >= 0.75 * L
    if np.count_nonzero(sel) < 3:
        raise FitIllConditioned("not enough cross-sections in the outer quarter")
    A = np.stack([y[sel], np.ones(np.count_nonzero(sel))], axis=1)
    coef, res, *_ = np.linalg.lstsq(A, means[sel], rcond=None)
    slope, const = float(coef[0]), float(coef[1])
    fit = A @ coef
    fit_residual = float(np.sqrt(np.mean((means[sel] - fit) ** 2)))
    scale = max(1.0, abs(const), abs(slope) * L)
    if fit_residual > 1e-7 * scale:
        raise TruncationTooSmall(
            f"far-field fit residual {fit_residual} too large; increase L")

    # decay of the max-norm deviation from the asymptote
    X = blk.x[None, :]
    asy = slope * y[:, None] + const + xi1_coeff * (X - center)
    dev = np.max(np.abs(u[blk.nid] - asy), axis=1)
    start = max(0.02 * L, 2.0 * abs(y[1] - y[0]))
    usable = (dev > 1e-11 * scale) & (dev < 1e-2 * scale) & ((y * direction) > start)
    rate = np.nan
    if np.count_nonzero(usable) >= 5:
        yy = y[usable] * direction
        dd = np.log(dev[usable])
        a = np.stack([yy, np.ones(len(yy))], axis=1)
        c, *_ = np.linalg.lstsq(a, dd, rcond=None)
        rate = float(-c[0])
    return FarField(slope=slope, const=const, xi1_coeff=xi1_coeff,
                    center=center, decay_rate=rate, fit_residual=fit_residual,
                    direction=direction, interval=tuple(interval))


def _solve_cell(spec: CellSpec, problem: str) -> CellSolution:
    bm, master, spans = _build_cell_mesh(spec)
    _, S = assembly.assemble_mass_stiffness(bm)
    lumped = assembly.region_lumped_weights(bm)
    w_all = np.zeros(bm.n_nodes)
    for v in lumped.values():
        w_all += v

    top_w = spec.top_width if not spec.periodic else 1.0
    nbot = len(spec.bots)

    if problem == "Z1":
        slopes = {"top": 0.0, **{f"bot{i+1}": 0.0 for i in range(nbot)}}
        b = _truncation_load(bm, spec, slopes)
        b += _wall_load(bm, spec,
                        lambda k, side: float(-side))   # d_xi1 u = -1 on walls
        coeffs = {"top": 0.0, "bot1": -1.0}
        normalization = "zero mean at the top truncation"
    elif problem == "Z2":
        slopes = {"top": 1.0, "bot1": top_w / spec.bot_width(0)}
        b = _truncation_load(bm, spec, slopes)
        coeffs = {"top": 0.0, "bot1": 0.0}
        normalization = "top asymptote xi2 + 0"
    elif problem in ("Xi1", "Xi2"):
        carrier = 0 if problem == "Xi1" else 1
        slopes = {"top": 1.0}
        for i in range(nbot):
            slopes[f"bot{i+1}"] = (top_w / spec.bot_width(i)) if i == carrier else 0.0
        b = _truncation_load(bm, spec, slopes)
        coeffs = {k: 0.0 for k in slopes}
        normalization = "top asymptote xi2 + 0"
    elif problem == "Z":
        slopes = {"top": 0.0, **{f"bot{i+1}": 0.0 for i in range(nbot)}}
        b = _truncation_load(bm, spec, slopes)
        b += _wall_load(bm, spec, lambda k, side: float(-side))
        coeffs = {k: -1.0 for k in slopes}
        normalization = "top asymptote -xi1 + b_top + 0"
    else:
        raise ConfigError(f"unknown cell problem {problem!r}")

    u = _pinned_solve(S, w_all, b)

    # normalization shift
    top_blk = bm.blocks[0]
    if problem == "Z1":
        row = top_blk.nid[-1, :]
        w = _edge_weights(top_blk.x)
        shift = float(np.sum(u[row] * w) / np.sum(w))
    else:
        ff = _fit_exit(top_blk, u, +1, coeffs["top"], spec.center("top"),
                       spec.top, spec.L)
        shift = ff.const
    u = u - shift

    exits = {"top": _fit_exit(top_blk, u, +1, coeffs["top"],
                              spec.center("top"), spec.top, spec.L)}
    for i in range(nbot):
        key = f"bot{i+1}"
        exits[key] = _fit_exit(bm.blocks[1 + i], u, -1, coeffs[key],
                               spec.center(key), spec.bots[i], spec.L)
    return CellSolution(spec=spec, problem=problem, bm=bm, u=u, exits=exits,
                        normalization=normalization)


def solve_junction_layer(spec: CellSpec, p: int) -> CellSolution:
    """Junction-layer solutions on Pi0: p=1 (wall-driven, decaying above)
    or p=2 (linear growth above, slope 1/h0 below)."""
    if spec.kind != "Pi0":
        raise ConfigError("junction-layer problems live on the Pi0 cell")
    if p not in (1, 2):
        raise ConfigError("p must be 1 or 2")
    return _solve_cell(spec, f"Z{p}")


def solve_branch_layer_Xi(spec: CellSpec) -> tuple[CellSolution, CellSolution]:
    """The two flux-carrying branch-layer solutions (exit 1 / exit 2)."""
    if spec.kind == "Pi0":
        raise ConfigError("Xi problems live on branching cells")
    return _solve_cell(spec, "Xi1"), _solve_cell(spec, "Xi2")


def solve_branch_layer_Z(spec: CellSpec) -> CellSolution:
    """The sawtooth-matching branch-layer solution (d_xi1 = -1 on walls)."""
    if spec.kind == "Pi0":
        raise ConfigError("Z branch problems live on branching cells")
    return _solve_cell(spec, "Z")


def extract_far_field(sol: CellSolution, exit_key: str):
    """(slope, constant, decay_rate, fit_residual) of one exit."""
    ff = sol.exits[exit_key]
    return ff.slope, ff.const, ff.decay_rate, ff.fit_residual


def cross_section_fluxes(sol: CellSolution, block_index: int) -> np.ndarray:
    """Exact discrete flux through each horizontal cell row of a block.

    For Q1 fields d_xi2 u is constant in xi2 within a cell, so the per-row
    value integrates the flux exactly; conservation makes the array constant
    inside a strip.
    """
    blk = sol.bm.blocks[block_index]
    F = sol.u[blk.nid]
    dx = np.diff(blk.x)
    dy = np.diff(blk.y)
    dF = (F[1:, :] - F[:-1, :]) / dy[:, None]
    mids = 0.5 * (dF[:, 1:] + dF[:, :-1])
    return mids @ dx


def solve_cell_family(params: GeometryParams, L: float = 10.0,
                      cells_across: int = 8) -> dict[str, CellSolution]:
    """All eleven layer solutions the corrector needs, keyed by name."""
    out = {}
    s0 = cell_spec("Pi0", params, L=L, cells_across=cells_across)
    out["Z0_1"] = solve_junction_layer(s0, 1)
    out["Z0_2"] = solve_junction_layer(s0, 2)
    s1 = cell_spec("Pi1", params, L=L, cells_across=cells_across)
    out["Xi1_1"], out["Xi1_2"] = solve_branch_layer_Xi(s1)
    out["Z1"] = solve_branch_layer_Z(s1)
    for pm in (1, 2):
        sp = cell_spec(f"Pi2_{pm}", params, L=L, cells_across=cells_across)
        xi1, xi2 = solve_branch_layer_Xi(sp)
        out[f"Xi2_{pm}_1"] = xi1
        out[f"Xi2_{pm}_2"] = xi2
        out[f"Z2_{pm}"] = solve_branch_layer_Z(sp)
    return out


def constants_manifest(cells: dict[str, CellSolution]) -> str:
    """Text manifest 'name = value' with 17 significant digits."""
    lines = ["# far-field constants (normalizations as documented per problem)"]
    for name in sorted(cells):
        sol = cells[name]
        for key in sorted(sol.exits):
            ff = sol.exits[key]
            lines.append("%s.%s.slope = %.17g" % (name, key, ff.slope))
            lines.append("%s.%s.const = %.17g" % (name, key, ff.const))
    return "\n".join(lines) + "\n"
