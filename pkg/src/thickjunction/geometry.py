"""Thick fractal junction geometry: parameters, rod layout, structured mesh.

The junction is a rectangular body (0,a) x (0,d0) with N periodic trees of
thin rods hanging from its bottom edge.  Each tree has a level-0 trunk, two
level-1 branches and four level-2 branches; all widths are fixed fractions
of the period eps = a/N.

Conventions fixed here and relied on everywhere else:

* periods are indexed j = 0..N-1 (N rods per level-0 layer);
* interface depths are q0 = 0, q1 = -l1, q2 = -l1-l2, q3 = -l1-l2-l3;
* wall abscissae within the unit period are snapped to shared values, so
  flush child/parent walls are bitwise identical and become exact grid
  lines of the mesh;
* mesh nodes are numbered block by block (body, level 0, 1, 2; within a
  level by period j then branch m), rows bottom-to-top, columns
  left-to-right; interface rows reuse the parent block's node ids.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from .errors import BadCount, ConfigError, NestingViolation, RangeViolation
from .meshing import BlockMesh, BlockSpec, EdgeSet, build_block_mesh, graded_segment, refine_breakpoints

REGION_BODY = 0
REGION_LEVEL = {0: 1, 1: 2, 2: 3}

# interval fractions h, keyed (level, branch)
H_KEYS = [(0, 0), (1, 1), (1, 2), (2, 1), (2, 2), (2, 3), (2, 4)]


@dataclass(frozen=True)
class GeometryParams:
    a: float
    N: int
    l1: float
    l2: float
    l3: float
    h0: float
    h11: float
    h12: float
    h21: float
    h22: float
    h23: float
    h24: float
    d0: float

    @property
    def eps(self) -> float:
        return self.a / self.N

    def h(self, level: int, m: int) -> float:
        return {(0, 0): self.h0, (1, 1): self.h11, (1, 2): self.h12,
                (2, 1): self.h21, (2, 2): self.h22, (2, 3): self.h23,
                (2, 4): self.h24}[(level, m)]

    @property
    def h_min(self) -> float:
        return min(self.h0, self.h11, self.h12,
                   self.h21, self.h22, self.h23, self.h24)

    @property
    def depths(self) -> tuple[float, float, float, float]:
        q1 = -self.l1
        q2 = q1 - self.l2
        q3 = q2 - self.l3
        return (0.0, q1, q2, q3)

    @property
    def rod_lengths(self) -> tuple[float, float, float]:
        return (self.l1, self.l2, self.l3)


@dataclass(frozen=True)
class ValidatedParams:
    """Wrapper certifying that :func:`validate` accepted the parameters."""
    params: GeometryParams

    def __getattr__(self, name):
        return getattr(self.params, name)


@dataclass(frozen=True)
class Offsets:
    b0: float
    b11: float
    b12: float
    b21: float
    b22: float
    b23: float
    b24: float

    def b(self, level: int, m: int) -> float:
        return {(0, 0): self.b0, (1, 1): self.b11, (1, 2): self.b12,
                (2, 1): self.b21, (2, 2): self.b22, (2, 3): self.b23,
                (2, 4): self.b24}[(level, m)]


def validate(params: GeometryParams) -> ValidatedParams:
    """Check interval and strict-nesting constraints.

    Raises RangeViolation, NestingViolation or BadCount; returns a
    ValidatedParams wrapper on success.
    """
    p = params
    if not (isinstance(p.N, (int, np.integer)) and p.N >= 2):
        raise BadCount(f"rod count N must be an integer >= 2, got {p.N}")
    for name in ("a", "l1", "l2", "l3", "d0"):
        v = getattr(p, name)
        if not (v > 0):
            raise RangeViolation(f"{name} must be positive, got {v}")
    for name in ("h0", "h11", "h12", "h21", "h22", "h23", "h24"):
        v = getattr(p, name)
        if not (0.0 < v < 1.0):
            raise RangeViolation(f"{name} must lie strictly in (0,1), got {v}")
    if not (p.h11 + p.h12 < p.h0):
        raise NestingViolation(
            f"h11 + h12 = {p.h11 + p.h12} must be strictly below h0 = {p.h0}")
    if not (p.h21 + p.h22 < p.h11):
        raise NestingViolation(
            f"h21 + h22 = {p.h21 + p.h22} must be strictly below h11 = {p.h11}")
    if not (p.h23 + p.h24 < p.h12):
        raise NestingViolation(
            f"h23 + h24 = {p.h23 + p.h24} must be strictly below h12 = {p.h12}")
    return ValidatedParams(p)


def derive_offsets(params: GeometryParams | ValidatedParams) -> Offsets:
    """Rod center offsets within the unit period, by the closed formulas."""
    p = params.params if isinstance(params, ValidatedParams) else params
    return Offsets(
        b0=0.5,
        b11=(1.0 - p.h0 + p.h11) / 2.0,
        b12=(1.0 + p.h0 - p.h12) / 2.0,
        b21=(1.0 - p.h0 + p.h21) / 2.0,
        b22=(1.0 - p.h0 + 2.0 * p.h11 - p.h22) / 2.0,
        b23=(1.0 + p.h0 - 2.0 * p.h12 + p.h23) / 2.0,
        b24=(1.0 + p.h0 - p.h24) / 2.0,
    )


def unit_walls(params: GeometryParams) -> dict[tuple[int, int], tuple[float, float]]:
    """Wall abscissae (left, right) per rod within the unit period.

    Flush walls share the identical float so that they land on one grid
    line; the values agree with b_{i,m} +- h_{i,m}/2 to machine precision.
    """
    p = params
    w0l = (1.0 - p.h0) / 2.0
    w0r = (1.0 + p.h0) / 2.0
    w11 = (w0l, w0l + p.h11)
    w12 = (w0r - p.h12, w0r)
    return {
        (0, 0): (w0l, w0r),
        (1, 1): w11,
        (1, 2): w12,
        (2, 1): (w0l, w0l + p.h21),
        (2, 2): (w11[1] - p.h22, w11[1]),
        (2, 3): (w12[0], w12[0] + p.h23),
        (2, 4): (w0r - p.h24, w0r),
    }


@dataclass(frozen=True)
class RodSpec:
    level: int
    branch: int
    period: int
    x1_lo: float
    x1_hi: float
    x2_lo: float
    x2_hi: float

    @property
    def width(self) -> float:
        return self.x1_hi - self.x1_lo


@dataclass(frozen=True)
class JunctionLayout:
    params: GeometryParams
    offsets: Offsets
    rods: tuple[RodSpec, ...]

    @property
    def body(self) -> tuple[float, float, float, float]:
        return (0.0, self.params.a, 0.0, self.params.d0)

    def area(self) -> float:
        p = self.params
        total = p.a * p.d0
        for r in self.rods:
            total += r.width * (r.x2_hi - r.x2_lo)
        return total

    def rods_at(self, level: int, branch: int | None = None):
        return [r for r in self.rods
                if r.level == level and (branch is None or r.branch == branch)]


def build_layout(params: ValidatedParams) -> JunctionLayout:
    """Enumerate all 7N rod rectangles of the junction."""
    if not isinstance(params, ValidatedParams):
        raise ConfigError("build_layout requires validated parameters")
    p = params.params
    eps = p.eps
    offs = derive_offsets(p)
    walls = unit_walls(p)
    q = p.depths
    rods = []
    for level, x2_lo, x2_hi in ((0, q[1], q[0]), (1, q[2], q[1]), (2, q[3], q[2])):
        branches = {0: (0,), 1: (1, 2), 2: (1, 2, 3, 4)}[level]
        for j in range(p.N):
            for m in branches:
                wl, wr = walls[(level, m)]
                rods.append(RodSpec(level, m, j,
                                    eps * (j + wl), eps * (j + wr),
                                    x2_lo, x2_hi))
    return JunctionLayout(params=p, offsets=offs, rods=tuple(rods))


def layout_to_text(layout: JunctionLayout) -> str:
    """Plain-text layout record: one rod per line, 17 significant digits."""
    p = layout.params
    lines = [
        "# thick fractal junction layout",
        f"# a={p.a!r} N={p.N} eps={p.eps!r} d0={p.d0!r}",
        f"# l1={p.l1!r} l2={p.l2!r} l3={p.l3!r}",
        "# period index convention: j = 0..N-1 (N trees per layer)",
        "# columns: level m j x1_lo x1_hi x2_lo x2_hi",
    ]
    for r in layout.rods:
        lines.append("%d %d %d %.17g %.17g %.17g %.17g"
                     % (r.level, r.branch, r.period,
                        r.x1_lo, r.x1_hi, r.x2_lo, r.x2_hi))
    return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class MeshResolution:
    """Resolution policy for the junction mesh.

    x1 spacing is h_min/cells_across within each period (walls are always
    grid lines); x2 spacing is eps/fine_cells_per_eps in bands of width
    fine_band_eps*eps around every interface depth, growing geometrically
    to coarse_spacing_eps*eps away from interfaces.
    """
    cells_across: int = 2
    fine_cells_per_eps: float = 8.0
    fine_band_eps: float = 4.0
    coarse_spacing_eps: float = 5.0
    grade_ratio: float = 1.35
    coarse_spacing_abs: float | None = None

    def __post_init__(self):
        if self.cells_across < 2:
            raise ConfigError("cells_across must be >= 2")

    def refine(self, factor: int = 2) -> "MeshResolution":
        """Uniformly refine all spacings (for convergence studies)."""
        return MeshResolution(
            cells_across=self.cells_across * factor,
            fine_cells_per_eps=self.fine_cells_per_eps * factor,
            fine_band_eps=self.fine_band_eps,
            coarse_spacing_eps=self.coarse_spacing_eps / factor,
            grade_ratio=self.grade_ratio,
            coarse_spacing_abs=(None if self.coarse_spacing_abs is None
                                else self.coarse_spacing_abs / factor))


@dataclass
class StructuredMesh:
    """Conforming rectilinear mesh over the junction with tagged boundaries."""
    layout: JunctionLayout
    resolution: MeshResolution
    bm: BlockMesh
    upsilon: dict[int, list[EdgeSet]]          # level -> wall edge sets
    exterior: list[EdgeSet]                    # Neumann-only outer boundary
    interfaces: dict[tuple[int, int, int], np.ndarray]  # (level,m,j) -> node ids
    unit_grid: np.ndarray                      # x1 template within one period
    wall_cols: dict[tuple[int, int], tuple[int, int]]   # template col index span

    @property
    def n_nodes(self) -> int:
        return self.bm.n_nodes

    @property
    def nodes(self) -> np.ndarray:
        return self.bm.nodes

    @property
    def params(self) -> GeometryParams:
        return self.layout.params

    def body_block(self):
        return self.bm.blocks[0]

    def rod_blocks(self, level: int):
        return [b for b in self.bm.blocks if b.spec.level == level]

    def block_of(self, level: int, m: int, j: int):
        p = self.params
        if level == 0:
            return self.bm.blocks[1 + j]
        if level == 1:
            return self.bm.blocks[1 + p.N + 2 * j + (m - 1)]
        return self.bm.blocks[1 + 3 * p.N + 4 * j + (m - 1)]

    def content_hash(self) -> str:
        h = hashlib.sha256()
        h.update(self.bm.nodes.tobytes())
        h.update(self.bm.cells.tobytes())
        return h.hexdigest()

    def check_boundary_tags(self):
        """Every boundary edge of the union must belong to a tagged set."""
        from .errors import UntaggedBoundary
        cells = self.bm.cells
        edges = np.concatenate([
            cells[:, [0, 1]], cells[:, [1, 2]],
            cells[:, [2, 3]], cells[:, [3, 0]]])
        edges.sort(axis=1)
        order = np.lexsort((edges[:, 1], edges[:, 0]))
        se = edges[order]
        dup = np.all(se[1:] == se[:-1], axis=1)
        keep = np.ones(len(se), dtype=bool)
        keep[1:][dup] = False
        keep[:-1][dup] = False
        boundary = {tuple(e) for e in se[keep]}
        tagged = set()
        for sets in list(self.upsilon.values()) + [self.exterior]:
            for es in sets:
                for a, b in zip(es.nodes[:-1], es.nodes[1:]):
                    tagged.add((min(a, b), max(a, b)))
        missing = boundary - tagged
        if missing:
            raise UntaggedBoundary(f"{len(missing)} boundary edges lack a tag")


def _period_template(params: GeometryParams, cells_across: int):
    """Unit-period x1 grid containing every wall, plus wall index spans."""
    walls = unit_walls(params)
    uniq: list[float] = [0.0, 1.0]
    for wl, wr in walls.values():
        for w in (wl, wr):
            if not any(w == u for u in uniq):
                uniq.append(w)
    breaks = np.array(sorted(uniq))
    d_target = params.h_min / cells_across
    grid, bidx = refine_breakpoints(breaks, d_target)
    locate = {b: int(i) for b, i in zip(breaks, bidx)}
    spans = {key: (locate[wl], locate[wr]) for key, (wl, wr) in walls.items()}
    return grid, spans


def build_mesh(params: ValidatedParams, resolution: MeshResolution | None = None,
               layout: JunctionLayout | None = None) -> StructuredMesh:
    """Build the conforming tagged mesh over the whole junction."""
    if resolution is None:
        resolution = MeshResolution()
    if layout is None:
        layout = build_layout(params)
    p = layout.params
    eps, N = p.eps, p.N
    res = resolution

    unit, spans = _period_template(p, res.cells_across)
    P = len(unit)
    cols_per = P - 1
    global_x = np.concatenate([eps * (j + unit[:-1]) for j in range(N)]
                              + [np.array([eps * N])])
    global_x[-1] = p.a

    d_fine = eps / res.fine_cells_per_eps
    band = res.fine_band_eps * eps
    d_max = res.coarse_spacing_eps * eps
    if res.coarse_spacing_abs is not None:
        d_max = min(d_max, res.coarse_spacing_abs)
    ratio = res.grade_ratio
    q = p.depths

    y_body = graded_segment(p.d0, d_fine, d_max, band, 0.0, d_max, ratio)
    y_rod = []
    for level, length in enumerate(p.rod_lengths):
        band_hi = band
        band_lo = band if level < 2 else 0.0
        offs = graded_segment(length, d_fine, d_fine, band_lo, band_hi, d_max, ratio)
        y = q[level + 1] + offs
        y[0] = q[level + 1]
        y[-1] = q[level]
        y_rod.append(y)

    specs = [BlockSpec(x=global_x, y=y_body, region=REGION_BODY, level=-1)]

    def gspan(level, m, j):
        lo, hi = spans[(level, m)]
        return j * cols_per + lo, j * cols_per + hi

    for j in range(N):
        lo, hi = gspan(0, 0, j)
        specs.append(BlockSpec(x=global_x[lo:hi + 1], y=y_rod[0], parent=0,
                               parent_col_offset=lo, region=REGION_LEVEL[0],
                               level=0, branch=0, period=j))
    for j in range(N):
        plo, _ = gspan(0, 0, j)
        for m in (1, 2):
            lo, hi = gspan(1, m, j)
            specs.append(BlockSpec(x=global_x[lo:hi + 1], y=y_rod[1],
                                   parent=1 + j, parent_col_offset=lo - plo,
                                   region=REGION_LEVEL[1], level=1, branch=m,
                                   period=j))
    for j in range(N):
        for m in (1, 2, 3, 4):
            parent_m = 1 if m <= 2 else 2
            pidx = 1 + N + 2 * j + (parent_m - 1)
            plo, _ = gspan(1, parent_m, j)
            lo, hi = gspan(2, m, j)
            specs.append(BlockSpec(x=global_x[lo:hi + 1], y=y_rod[2],
                                   parent=pidx, parent_col_offset=lo - plo,
                                   region=REGION_LEVEL[2], level=2, branch=m,
                                   period=j))

    bm = build_block_mesh(specs)

    upsilon: dict[int, list[EdgeSet]] = {0: [], 1: [], 2: []}
    exterior: list[EdgeSet] = []
    interfaces: dict[tuple[int, int, int], np.ndarray] = {}

    body = bm.blocks[0]
    exterior.append(EdgeSet("body_exterior", -1, 0, body.nid[:, 0],
                            body.y, fixed=0.0))
    exterior.append(EdgeSet("body_exterior", -1, 0, body.nid[:, -1],
                            body.y, fixed=p.a))
    exterior.append(EdgeSet("body_exterior", -1, 0, body.nid[-1, :],
                            body.x, fixed=p.d0))

    def uncovered_segments(block, child_spans_local):
        """Bottom-row runs of ``block`` not covered by children."""
        nxc = len(block.x)
        covered = np.zeros(nxc - 1, dtype=bool)
        for lo, hi in child_spans_local:
            covered[lo:hi] = True
        segs = []
        c = 0
        while c < nxc - 1:
            if not covered[c]:
                c0 = c
                while c < nxc - 1 and not covered[c]:
                    c += 1
                segs.append((c0, c))
            else:
                c += 1
        return segs

    # body bottom outside rod tops
    spans0 = [gspan(0, 0, j) for j in range(N)]
    for c0, c1 in uncovered_segments(body, spans0):
        exterior.append(EdgeSet("body_exterior", -1, 0,
                                body.nid[0, c0:c1 + 1], body.x[c0:c1 + 1],
                                fixed=0.0))

    for bidx, b in enumerate(bm.blocks[1:], start=1):
        sp = b.spec
        level, m, j = sp.level, sp.branch, sp.period
        upsilon[level].append(EdgeSet("upsilon", level, m, b.nid[:, 0],
                                      b.y, fixed=b.x[0]))
        upsilon[level].append(EdgeSet("upsilon", level, m, b.nid[:, -1],
                                      b.y, fixed=b.x[-1]))
        interfaces[(level, m, j)] = b.top_row().copy()
        if level == 2:
            exterior.append(EdgeSet("rod_base", level, m, b.bottom_row(),
                                    b.x, fixed=b.y[0]))
        else:
            kids = []
            if level == 0:
                child_ms = (1, 2)
            else:
                child_ms = (1, 2) if m == 1 else (3, 4)
            plo, _ = gspan(level, m, j)
            for cm in child_ms:
                lo, hi = gspan(level + 1, cm, j)
                kids.append((lo - plo, hi - plo))
            for c0, c1 in uncovered_segments(b, kids):
                exterior.append(EdgeSet("rod_base", level, m,
                                        b.nid[0, c0:c1 + 1], b.x[c0:c1 + 1],
                                        fixed=b.y[0]))

    return StructuredMesh(layout=layout, resolution=res, bm=bm,
                          upsilon=upsilon, exterior=exterior,
                          interfaces=interfaces, unit_grid=unit,
                          wall_cols=spans)
