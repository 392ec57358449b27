"""Corrector assembly: the approximating field on the junction mesh.

The approximation is the homogenized field plus eps-scale corrections near
each interface: sawtooth * d_x1 terms inside rods, and cutoff * layer-block
terms built from sampled cell solutions and one-sided interface traces.

Matching weights are used in flux form throughout: the products
P_m = h_child * d_x2 v_child / h_parent replace eta * d_x2 v_parent, which
is algebraically identical where the interface flux is nonzero and stays
finite where it vanishes.  The blend ratio eta itself is only reported (NaN
where the denominator is below tol_eta).

Interface rows of every factor come from shared per-interface trace arrays,
so the assembled field is continuous across interfaces by construction and
the two bounding formulas agree to rounding.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline, RectBivariateSpline

from . import assembly
from .errors import GridMismatch, MissingCell, ShapeMismatch
from .geometry import StructuredMesh
from .homogenized import (SHEET_KEYS, HomogenizedSystem, central_dx1,
                          interface_traces)

CELL_NAMES = ("Z0_1", "Z0_2", "Xi1_1", "Xi1_2", "Z1",
              "Xi2_1_1", "Xi2_1_2", "Z2_1", "Xi2_2_1", "Xi2_2_2", "Z2_2")


@dataclass(frozen=True)
class CorrectorConfig:
    tau0: float
    tol_eta: float = 1e-10
    use_cutoffs: bool = True


def default_corrector_config(params) -> CorrectorConfig:
    return CorrectorConfig(tau0=0.4 * min(params.l1, params.l2, params.l3,
                                          params.d0))


def cutoff_chi(s, tau0: float):
    """C^2 quintic ramp: 1 for |s| <= tau0/2, 0 for |s| >= tau0."""
    s = np.abs(np.asarray(s, dtype=float))
    r = np.clip((s - 0.5 * tau0) / (0.5 * tau0), 0.0, 1.0)
    return 1.0 - r ** 3 * (10.0 - 15.0 * r + 6.0 * r * r)


def sawtooth(xi1, b: float):
    """Periodic sawtooth -xi1 + b + floor(xi1); |value| <= 1 for b in (0,1)."""
    xi1 = np.asarray(xi1, dtype=float)
    return b - (xi1 - np.floor(xi1))


def sample_cell(sol, x1, x2, eps: float, origin: float):
    """Spec-level sampler: map x to cell coordinates and interpolate.

    Returns (value, d_xi1, d_xi2) with the gradient in cell coordinates.
    """
    xi1 = np.asarray(x1, dtype=float) / eps
    xi2 = (np.asarray(x2, dtype=float) - origin) / eps
    return sol.sample_points(xi1, xi2, with_gradient=True)


# ---------------------------------------------------------------------------
# per-mesh precomputation
# ---------------------------------------------------------------------------

@dataclass
class _RegionBank:
    """Static per-region sampling data (time-independent)."""
    level: int
    branch: int
    rows_own: int                 # rows assembled by this region (bottom-up)
    y: np.ndarray                 # full row depths
    cols_flat: np.ndarray         # all columns of all period copies, sorted
    node_grid: np.ndarray         # (rows_own, ncols_total) global node ids
    Y_vals: np.ndarray            # sawtooth at the template columns, tiled
    top: dict = field(default_factory=dict)     # band arrays near upper iface
    bot: dict = field(default_factory=dict)     # band arrays near lower iface


class CorrectorAssembler:
    """Assembles the approximating field on a fixed junction mesh from a
    homogenized state, reusing cell samples across periods and time steps."""

    def __init__(self, mesh: StructuredMesh, cells: dict,
                 hom: HomogenizedSystem, config: CorrectorConfig | None = None):
        for name in CELL_NAMES:
            if name not in cells:
                raise MissingCell(f"cell solution {name!r} was not supplied")
        self.mesh = mesh
        self.cells = cells
        self.hom = hom
        p = mesh.params
        self.params = p
        self.cfg = config or default_corrector_config(p)
        if self.cfg.tau0 >= 0.5 * min(p.l1, p.l2, p.l3, p.d0) + 1e-12:
            raise GridMismatch("tau0 must stay below half the shortest rod")
        self.eps = p.eps
        self.q = p.depths
        self._prepare_banks()

    # -- static data -------------------------------------------------------

    def _band_rows(self, y, origin, side, limit_row=None):
        """Rows with positive cutoff around the interface at ``origin``.

        side=+1: rows above (y >= origin), side=-1: rows below.
        """
        rel = (y - origin) * side
        sel = (rel >= -1e-14) & (rel < self.cfg.tau0)
        idx = np.flatnonzero(sel)
        if limit_row is not None:
            idx = idx[idx < limit_row]
        return idx

    def _prepare_banks(self):
        mesh, p, eps = self.mesh, self.params, self.eps
        tau0 = self.cfg.tau0
        unit = mesh.unit_grid
        P = len(unit)
        offs = mesh.layout.offsets
        cells = self.cells
        chi = (lambda s: cutoff_chi(s, tau0)) if self.cfg.use_cutoffs else \
            (lambda s: np.zeros(np.shape(s)))
        self._chi = chi

        # body
        body = mesh.body_block()
        yb = body.y
        nb_cols = len(body.x)
        band = self._band_rows(yb, 0.0, +1)
        xi2 = yb[band] / eps
        tpl = {name: cells[name].sample_tensor(unit[:-1], xi2).T
               for name in ("Z0_1", "Z0_2")}
        col_map = np.arange(nb_cols) % (P - 1)
        self.body = {
            "block": body, "rows_band": band, "xi2": xi2,
            "chi": chi(yb[band]),
            "Z0_1": tpl["Z0_1"][:, col_map], "Z0_2": tpl["Z0_2"][:, col_map],
        }

        # rods, one bank per (level, branch); period copies share columns
        self.rods = {}
        rod_cells = {
            (0, 0): (("Z0_1", "Z0_2"), ("Z1", "Xi1_1", "Xi1_2")),
            (1, 1): (("Z1", "Xi1_1", "Xi1_2"), ("Z2_1", "Xi2_1_1", "Xi2_1_2")),
            (1, 2): (("Z1", "Xi1_1", "Xi1_2"), ("Z2_2", "Xi2_2_1", "Xi2_2_2")),
            (2, 1): (("Z2_1", "Xi2_1_1", "Xi2_1_2"), ()),
            (2, 2): (("Z2_1", "Xi2_1_1", "Xi2_1_2"), ()),
            (2, 3): (("Z2_2", "Xi2_2_1", "Xi2_2_2"), ()),
            (2, 4): (("Z2_2", "Xi2_2_1", "Xi2_2_2"), ()),
        }
        for level in (0, 1, 2):
            branches = (0,) if level == 0 else \
                ((1, 2) if level == 1 else (1, 2, 3, 4))
            for m in branches:
                lo, hi = mesh.wall_cols[(level, m)]
                fr = unit[lo:hi + 1]
                blocks = [mesh.block_of(level, m, j) for j in range(p.N)]
                y = blocks[0].y
                ny = len(y)
                rows_own = ny - 1          # top row owned by the parent
                cols_flat = np.concatenate([b.x for b in blocks])
                node_grid = np.concatenate([b.nid[:rows_own, :] for b in blocks],
                                           axis=1)
                b_off = offs.b(level, m) if level > 0 else offs.b0
                Yv = np.tile(sawtooth(fr, b_off), p.N)

                bank = _RegionBank(level=level, branch=m, rows_own=rows_own,
                                   y=y, cols_flat=cols_flat,
                                   node_grid=node_grid, Y_vals=Yv)

                top_names, bot_names = rod_cells[(level, m)]
                q_top = self.q[level]
                band_t = self._band_rows(y, q_top, -1, limit_row=rows_own)
                xi2_t = (y[band_t] - q_top) / eps
                bank.top = {"rows": band_t, "xi2": xi2_t,
                            "chi": chi(y[band_t] - q_top)}
                for name in top_names:
                    s = cells[name].sample_tensor(fr, xi2_t).T
                    bank.top[name] = np.tile(s, (1, p.N))
                if bot_names:
                    q_bot = self.q[level + 1]
                    band_b = self._band_rows(y, q_bot, +1, limit_row=rows_own)
                    xi2_b = (y[band_b] - q_bot) / eps
                    bank.bot = {"rows": band_b, "xi2": xi2_b,
                                "chi": chi(y[band_b] - q_bot)}
                    for name in bot_names:
                        s = cells[name].sample_tensor(fr, xi2_b).T
                        bank.bot[name] = np.tile(s, (1, p.N))
                self.rods[(level, m)] = bank

    # -- per-step trace machinery ------------------------------------------

    def fluxes(self, traces: dict) -> dict:
        """Flux-form products and Kirchhoff sums at I1 and I2."""
        p = self.params
        out = {}
        out["P1_I1"] = p.h11 * traces["dx2_v11_I1"] / p.h0
        out["P2_I1"] = p.h12 * traces["dx2_v12_I1"] / p.h0
        out["D_I1"] = out["P1_I1"] + out["P2_I1"]
        out["P1_I2_1"] = p.h21 * traces["dx2_v21_I2"] / p.h11
        out["P2_I2_1"] = p.h22 * traces["dx2_v22_I2"] / p.h11
        out["D_I2_1"] = out["P1_I2_1"] + out["P2_I2_1"]
        out["P1_I2_2"] = p.h23 * traces["dx2_v23_I2"] / p.h12
        out["P2_I2_2"] = p.h24 * traces["dx2_v24_I2"] / p.h12
        out["D_I2_2"] = out["P1_I2_2"] + out["P2_I2_2"]
        return out

    def eta_report(self, traces: dict) -> dict:
        """Matching ratios eta (NaN where the interface flux denominator is
        below tol_eta) plus the flux-form products that replace them."""
        fl = self.fluxes(traces)
        p = self.params
        out = dict(fl)
        for name, num, den in (("eta1", fl["P1_I1"], fl["D_I1"]),
                               ("eta2_1", fl["P1_I2_1"], fl["D_I2_1"]),
                               ("eta2_2", fl["P1_I2_2"], fl["D_I2_2"])):
            hpar = p.h0 if name == "eta1" else (p.h11 if name == "eta2_1" else p.h12)
            defined = np.abs(hpar * den) > self.cfg.tol_eta
            eta = np.full(den.shape, np.nan)
            eta[defined] = num[defined] / den[defined]
            out[name] = eta
        return out

    def eta_flux_products(self, u_hom: np.ndarray) -> dict:
        """Flux-form matching products plus the (possibly undefined) ratios
        for one homogenized state."""
        return self.eta_report(interface_traces(self.hom, u_hom))

    def _step_context(self, u_hom: np.ndarray):
        """Splines and trace interpolants for one homogenized state."""
        hom = self.hom
        tr = interface_traces(hom, u_hom)
        fl = self.fluxes(tr)
        x1h = hom.x1

        def sp1(arr):
            return CubicSpline(x1h, arr)

        ctx = {"traces": tr, "fluxes": fl}
        ctx["t_dx1_I0"] = sp1(tr["dx1_I0"])
        ctx["t_dx2p_I0"] = sp1(tr["dx2_plus_I0"])
        ctx["t_v_I0"] = sp1(tr["v_I0"])
        ctx["t_dx1_I1"] = sp1(tr["dx1_I1"])
        ctx["t_v_I1"] = sp1(tr["v_I1"])
        ctx["t_P1_I1"] = sp1(fl["P1_I1"])
        ctx["t_P2_I1"] = sp1(fl["P2_I1"])
        ctx["t_D_I1"] = sp1(fl["D_I1"])
        for pm in (1, 2):
            ctx[f"t_dx1_I2_{pm}"] = sp1(tr[f"dx1_I2_{pm}"])
            ctx[f"t_v_I2_{pm}"] = sp1(tr[f"v_I2_{pm}"])
            ctx[f"t_P1_I2_{pm}"] = sp1(fl[f"P1_I2_{pm}"])
            ctx[f"t_P2_I2_{pm}"] = sp1(fl[f"P2_I2_{pm}"])
            ctx[f"t_D_I2_{pm}"] = sp1(fl[f"D_I2_{pm}"])

        # sheet value and d_x1 splines (ascending axes required)
        body_vals = u_hom[hom.body_idx]
        ctx["sp_body"] = RectBivariateSpline(hom.y_body, x1h, body_vals,
                                             kx=3, ky=3)
        dxh = x1h[1] - x1h[0]
        ctx["sp_sheet"] = {}
        ctx["sp_sheet_dx1"] = {}
        for key in SHEET_KEYS:
            vals = u_hom[hom.sheet_idx[key]]
            y = hom.y_sheet[key]
            yy = y[::-1]
            vv = vals[::-1, :]
            ctx["sp_sheet"][key] = RectBivariateSpline(yy, x1h, vv, kx=3, ky=3)
            dvals = central_dx1(vals, dxh)
            ctx["sp_sheet_dx1"][key] = RectBivariateSpline(yy, x1h,
                                                           dvals[::-1, :],
                                                           kx=3, ky=3)
        return ctx

    # -- assembly ------------------------------------------------------------

    def assemble_R(self, u_hom: np.ndarray, with_leading: bool = False):
        """Nodal approximating field; optionally also the plain leading-order
        (uncorrected) multi-sheeted field mapped onto the junction."""
        if u_hom.shape != (self.hom.n,):
            raise ShapeMismatch("homogenized state does not match the system")
        mesh, p, eps = self.mesh, self.params, self.eps
        ctx = self._step_context(u_hom)
        R = np.zeros(mesh.n_nodes)
        V = np.zeros(mesh.n_nodes) if with_leading else None

        # body
        body = self.body["block"]
        xb, yb = body.x, body.y
        vals = ctx["sp_body"](yb, xb, grid=True)
        vals[0, :] = ctx["t_v_I0"](xb)
        if V is not None:
            V[body.nid] = vals.copy()
        band = self.body["rows_band"]
        if band.size:
            T1 = ctx["t_dx1_I0"](xb)
            T2 = ctx["t_dx2p_I0"](xb)
            Nplus = (self.body["Z0_1"] * T1[None, :]
                     + (self.body["Z0_2"] - self.body["xi2"][:, None]) * T2[None, :])
            vals[band, :] += eps * self.body["chi"][:, None] * Nplus
        R[body.nid] = vals

        for (level, m), bank in self.rods.items():
            key = (0, 0) if level == 0 else (level, m)
            pm = None if level == 0 else (m if level == 1 else (1 if m <= 2 else 2))
            cols = bank.cols_flat
            rows_own = bank.rows_own
            y_own = bank.y[:rows_own]
            sp = ctx["sp_sheet"][key]
            spd = ctx["sp_sheet_dx1"][key]
            v_field = sp(y_own, cols, grid=True)
            dx1_field = spd(y_own, cols, grid=True)

            # interface-row overrides: bottom row (own row 0) is an interface
            # for levels 0 and 1; the top interface row belongs to the parent
            if level == 0:
                v_field[0, :] = ctx["t_v_I1"](cols)
                dx1_field[0, :] = ctx["t_dx1_I1"](cols)
            elif level == 1:
                v_field[0, :] = ctx[f"t_v_I2_{m}"](cols)
                dx1_field[0, :] = ctx[f"t_dx1_I2_{m}"](cols)

            out = v_field + eps * bank.Y_vals[None, :] * dx1_field

            # upper-interface blocks
            t_rows = bank.top["rows"]
            if t_rows.size:
                xi2 = bank.top["xi2"][:, None]
                chiv = bank.top["chi"][:, None]
                if level == 0:
                    T1 = ctx["t_dx1_I0"](cols)
                    T2 = ctx["t_dx2p_I0"](cols)
                    N = ((bank.top["Z0_1"] - bank.Y_vals[None, :]) * T1[None, :]
                         + (bank.top["Z0_2"] - xi2 / p.h0) * T2[None, :])
                elif level == 1:
                    T1 = ctx["t_dx1_I1"](cols)
                    P1 = ctx["t_P1_I1"](cols)
                    P2 = ctx["t_P2_I1"](cols)
                    Pm = P1 if m == 1 else P2
                    hr = p.h0 / p.h(1, m)
                    N = ((bank.top["Z1"] - bank.Y_vals[None, :]) * T1[None, :]
                         + bank.top["Xi1_1"] * P1[None, :]
                         + bank.top["Xi1_2"] * P2[None, :]
                         - xi2 * hr * Pm[None, :])
                else:
                    T1 = ctx[f"t_dx1_I2_{pm}"](cols)
                    P1 = ctx[f"t_P1_I2_{pm}"](cols)
                    P2 = ctx[f"t_P2_I2_{pm}"](cols)
                    child = {1: ("1", p.h11 / p.h21), 2: ("2", p.h11 / p.h22),
                             3: ("1", p.h12 / p.h23), 4: ("2", p.h12 / p.h24)}[m]
                    Pm = P1 if child[0] == "1" else P2
                    zname, xnames = (("Z2_1", ("Xi2_1_1", "Xi2_1_2"))
                                     if pm == 1 else ("Z2_2", ("Xi2_2_1", "Xi2_2_2")))
                    N = ((bank.top[zname] - bank.Y_vals[None, :]) * T1[None, :]
                         + bank.top[xnames[0]] * P1[None, :]
                         + bank.top[xnames[1]] * P2[None, :]
                         - xi2 * child[1] * Pm[None, :])
                out[t_rows, :] += eps * chiv * N

            # lower-interface blocks (levels 0 and 1 only)
            if bank.bot:
                b_rows = bank.bot["rows"]
                if b_rows.size:
                    xi2 = bank.bot["xi2"][:, None]
                    chiv = bank.bot["chi"][:, None]
                    if level == 0:
                        T1 = ctx["t_dx1_I1"](cols)
                        P1 = ctx["t_P1_I1"](cols)
                        P2 = ctx["t_P2_I1"](cols)
                        D = ctx["t_D_I1"](cols)
                        N = ((bank.bot["Z1"] - bank.Y_vals[None, :]) * T1[None, :]
                             + bank.bot["Xi1_1"] * P1[None, :]
                             + bank.bot["Xi1_2"] * P2[None, :]
                             - xi2 * D[None, :])
                    else:
                        T1 = ctx[f"t_dx1_I2_{m}"](cols)
                        P1 = ctx[f"t_P1_I2_{m}"](cols)
                        P2 = ctx[f"t_P2_I2_{m}"](cols)
                        D = ctx[f"t_D_I2_{m}"](cols)
                        zname, xnames = (("Z2_1", ("Xi2_1_1", "Xi2_1_2"))
                                         if m == 1 else
                                         ("Z2_2", ("Xi2_2_1", "Xi2_2_2")))
                        N = ((bank.bot[zname] - bank.Y_vals[None, :]) * T1[None, :]
                             + bank.bot[xnames[0]] * P1[None, :]
                             + bank.bot[xnames[1]] * P2[None, :]
                             - xi2 * D[None, :])
                    out[b_rows, :] += eps * chiv * N

            R[bank.node_grid] = out
            if V is not None:
                V[bank.node_grid] = v_field

        if with_leading:
            return R, V
        return R

    def interface_jump_pairs(self, u_hom: np.ndarray) -> dict:
        """Evaluate both bounding formulas on every interface row (the
        algebraic cancellation check behind exact conformity)."""
        mesh, p, eps = self.mesh, self.params, self.eps
        ctx = self._step_context(u_hom)
        out = {}

        def rod_top_formula(level, m, cols, fr):
            bank = self.rods[(level, m)]
            b_off = mesh.layout.offsets.b(level, m) if level > 0 else 0.5
            Y = sawtooth(fr, b_off)
            if level == 0:
                V = ctx["t_v_I0"](cols)
                T1 = ctx["t_dx1_I0"](cols)
                T2 = ctx["t_dx2p_I0"](cols)
                z1 = self.cells["Z0_1"].sample_tensor(fr, np.array([0.0]))[:, 0]
                z2 = self.cells["Z0_2"].sample_tensor(fr, np.array([0.0]))[:, 0]
                return V + eps * (Y * T1 + (z1 - Y) * T1 + z2 * T2)
            if level == 1:
                V = ctx["t_v_I1"](cols)
                T1 = ctx["t_dx1_I1"](cols)
                P1 = ctx["t_P1_I1"](cols)
                P2 = ctx["t_P2_I1"](cols)
                z = self.cells["Z1"].sample_tensor(fr, np.array([0.0]))[:, 0]
                x1v = self.cells["Xi1_1"].sample_tensor(fr, np.array([0.0]))[:, 0]
                x2v = self.cells["Xi1_2"].sample_tensor(fr, np.array([0.0]))[:, 0]
                return V + eps * (Y * T1 + (z - Y) * T1 + x1v * P1 + x2v * P2)
            pm = 1 if m <= 2 else 2
            V = ctx[f"t_v_I2_{pm}"](cols)
            T1 = ctx[f"t_dx1_I2_{pm}"](cols)
            P1 = ctx[f"t_P1_I2_{pm}"](cols)
            P2 = ctx[f"t_P2_I2_{pm}"](cols)
            zname, xnames = (("Z2_1", ("Xi2_1_1", "Xi2_1_2")) if pm == 1
                             else ("Z2_2", ("Xi2_2_1", "Xi2_2_2")))
            z = self.cells[zname].sample_tensor(fr, np.array([0.0]))[:, 0]
            x1v = self.cells[xnames[0]].sample_tensor(fr, np.array([0.0]))[:, 0]
            x2v = self.cells[xnames[1]].sample_tensor(fr, np.array([0.0]))[:, 0]
            return V + eps * (Y * T1 + (z - Y) * T1 + x1v * P1 + x2v * P2)

        def parent_formula(level, m, cols, fr):
            """The formula of the region above, evaluated on the interface."""
            if level == 0:
                V = ctx["t_v_I0"](cols)
                T1 = ctx["t_dx1_I0"](cols)
                T2 = ctx["t_dx2p_I0"](cols)
                z1 = self.cells["Z0_1"].sample_tensor(fr, np.array([0.0]))[:, 0]
                z2 = self.cells["Z0_2"].sample_tensor(fr, np.array([0.0]))[:, 0]
                return V + eps * (z1 * T1 + z2 * T2)
            if level == 1:
                V = ctx["t_v_I1"](cols)
                T1 = ctx["t_dx1_I1"](cols)
                P1 = ctx["t_P1_I1"](cols)
                P2 = ctx["t_P2_I1"](cols)
                z = self.cells["Z1"].sample_tensor(fr, np.array([0.0]))[:, 0]
                x1v = self.cells["Xi1_1"].sample_tensor(fr, np.array([0.0]))[:, 0]
                x2v = self.cells["Xi1_2"].sample_tensor(fr, np.array([0.0]))[:, 0]
                Y0 = sawtooth(fr, 0.5)
                return V + eps * (Y0 * T1 + (z - Y0) * T1 + x1v * P1 + x2v * P2)
            pm = 1 if m <= 2 else 2
            V = ctx[f"t_v_I2_{pm}"](cols)
            T1 = ctx[f"t_dx1_I2_{pm}"](cols)
            P1 = ctx[f"t_P1_I2_{pm}"](cols)
            P2 = ctx[f"t_P2_I2_{pm}"](cols)
            zname, xnames = (("Z2_1", ("Xi2_1_1", "Xi2_1_2")) if pm == 1
                             else ("Z2_2", ("Xi2_2_1", "Xi2_2_2")))
            z = self.cells[zname].sample_tensor(fr, np.array([0.0]))[:, 0]
            x1v = self.cells[xnames[0]].sample_tensor(fr, np.array([0.0]))[:, 0]
            x2v = self.cells[xnames[1]].sample_tensor(fr, np.array([0.0]))[:, 0]
            Y1 = sawtooth(fr, mesh.layout.offsets.b(1, pm))
            return V + eps * (Y1 * T1 + (z - Y1) * T1 + x1v * P1 + x2v * P2)

        unit = mesh.unit_grid
        for level in (0, 1, 2):
            branches = (0,) if level == 0 else \
                ((1, 2) if level == 1 else (1, 2, 3, 4))
            for m in branches:
                lo, hi = mesh.wall_cols[(level, m)]
                fr_t = unit[lo:hi + 1]
                fr = np.tile(fr_t, p.N)
                cols = self.rods[(level, m)].cols_flat
                above = parent_formula(level, m, cols, fr)
                below = rod_top_formula(level, m, cols, fr)
                out[(level, m)] = float(np.max(np.abs(above - below)))
        return out


# ---------------------------------------------------------------------------
# error accumulation
# ---------------------------------------------------------------------------

@dataclass
class ErrorAccumulator:
    """Streams max-L2 and L2-in-time-H1 norms of R - u over the trajectory,
    plus the leading-order (corollary) component errors at the final time."""
    mesh: StructuredMesh
    M: object
    S: object
    M_region: dict
    times: np.ndarray
    max_l2: float = 0.0
    _h1_sq: list = field(default_factory=list)
    corollary_body: float = 0.0
    corollary_rods: float = 0.0

    def update(self, k: int, e: np.ndarray):
        l2sq = max(float(e @ (self.M @ e)), 0.0)
        self.max_l2 = max(self.max_l2, np.sqrt(l2sq))
        self._h1_sq.append(l2sq + max(float(e @ (self.S @ e)), 0.0))

    def finish_corollary(self, diff_leading: np.ndarray):
        from .geometry import REGION_BODY, REGION_LEVEL
        d = diff_leading
        self.corollary_body = assembly.l2_norm(self.M_region[REGION_BODY], d)
        tot = 0.0
        for lev in (0, 1, 2):
            tot += assembly.l2_norm(self.M_region[REGION_LEVEL[lev]], d)
        self.corollary_rods = tot

    @property
    def l2h1(self) -> float:
        vals = np.asarray(self._h1_sq)
        if len(vals) != len(self.times):
            raise ShapeMismatch("accumulator saw a different number of steps")
        return float(np.sqrt(np.trapezoid(vals, self.times)))


def error_norms(R_traj: np.ndarray, u_traj: np.ndarray, mesh: StructuredMesh,
                M, S, time_grid: np.ndarray) -> dict:
    """Whole-trajectory error norms for stored trajectories (test-scale)."""
    if R_traj.shape != u_traj.shape:
        raise ShapeMismatch("trajectories differ in shape")
    if R_traj.shape[0] != len(time_grid):
        raise ShapeMismatch("trajectory does not match the time grid")
    max_l2 = 0.0
    h1s = np.zeros(len(time_grid))
    for k in range(len(time_grid)):
        e = R_traj[k] - u_traj[k]
        l2sq = max(float(e @ (M @ e)), 0.0)
        max_l2 = max(max_l2, np.sqrt(l2sq))
        h1s[k] = l2sq + max(float(e @ (S @ e)), 0.0)
    return {"max_L2": max_l2,
            "L2H1": float(np.sqrt(np.trapezoid(h1s, time_grid)))}
