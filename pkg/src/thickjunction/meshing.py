"""Block-structured rectilinear meshes over unions of axis-aligned rectangles.

The junction domain and every truncated periodicity cell share one layout
idiom: horizontal strata of rectangles stacked vertically, where each block's
top row of nodes coincides with a contiguous slice of its parent's bottom
row.  Conformity is by construction: a child's column coordinates are a
slice of the parent's column array, so shared nodes exist once and carry a
single id.

Node ordering is fixed and reproducible: blocks are numbered in the order
given, rows bottom-to-top, columns left-to-right; shared top rows reuse the
parent's ids.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import SnapConflict


@dataclass
class BlockSpec:
    """One rectangular block of a union mesh.

    ``x`` must be float-identical to ``parent.x[offset : offset + len(x)]``
    when a parent is given; the builder checks this bitwise.
    """

    x: np.ndarray
    y: np.ndarray
    parent: int | None = None          # index into the spec list
    parent_col_offset: int = 0
    region: int = 0                    # nonlinearity dispatch tag
    level: int = -1                    # -1 body, 0..2 rod level
    branch: int = 0                    # m index (1-based; 0 if absent)
    period: int = 0                    # j index
    periodic_x: bool = False           # identify last column with first


@dataclass
class Block:
    spec: BlockSpec
    nid: np.ndarray                    # (ny, nx) global node ids

    @property
    def x(self):
        return self.spec.x

    @property
    def y(self):
        return self.spec.y

    def top_row(self):
        return self.nid[-1, :]

    def bottom_row(self):
        return self.nid[0, :]

    def left_col(self):
        return self.nid[:, 0]

    def right_col(self):
        return self.nid[:, -1]


@dataclass
class EdgeSet:
    """A maximal run of boundary edges sharing one tag.

    ``nodes`` are ordered along the edge; ``pos`` is the varying coordinate
    (y on vertical walls, x on horizontal segments).
    """

    kind: str
    level: int
    branch: int
    nodes: np.ndarray
    pos: np.ndarray
    fixed: float                       # the non-varying coordinate

    def lumped_weights(self):
        w = np.zeros(len(self.pos))
        gaps = np.diff(self.pos)
        w[:-1] += 0.5 * np.abs(gaps)
        w[1:] += 0.5 * np.abs(gaps)
        return w

    def length(self):
        return float(np.abs(self.pos[-1] - self.pos[0]))


@dataclass
class BlockMesh:
    nodes: np.ndarray                  # (n, 2)
    blocks: list[Block]
    edge_sets: list[EdgeSet] = field(default_factory=list)
    _cells: np.ndarray | None = None
    _cell_region: np.ndarray | None = None

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    def _build_cells(self):
        quads, regions = [], []
        for b in self.blocks:
            nid = b.nid
            sw = nid[:-1, :-1].ravel()
            se = nid[:-1, 1:].ravel()
            ne = nid[1:, 1:].ravel()
            nw = nid[1:, :-1].ravel()
            quads.append(np.stack([sw, se, ne, nw], axis=1))
            regions.append(np.full(sw.size, b.spec.region, dtype=np.int16))
        self._cells = np.concatenate(quads).astype(np.int64)
        self._cell_region = np.concatenate(regions)

    @property
    def cells(self):
        if self._cells is None:
            self._build_cells()
        return self._cells

    @property
    def cell_region(self):
        if self._cell_region is None:
            self._build_cells()
        return self._cell_region

    def cell_sizes(self):
        """Per-cell (dx, dy), ordered like ``cells``."""
        dxs, dys = [], []
        for b in self.blocks:
            dx = np.diff(b.x)
            dy = np.diff(b.y)
            dxs.append(np.tile(dx, len(dy)))
            dys.append(np.repeat(dy, len(dx)))
        return np.concatenate(dxs), np.concatenate(dys)

    def area(self) -> float:
        dx, dy = self.cell_sizes()
        return float(np.sum(dx * dy))


def build_block_mesh(specs: list[BlockSpec]) -> BlockMesh:
    """Allocate node ids and coordinates for a list of stacked blocks."""
    blocks: list[Block] = []
    coords: list[np.ndarray] = []
    next_id = 0
    for spec in specs:
        ny, nx = len(spec.y), len(spec.x)
        if ny < 2 or nx < 2:
            raise SnapConflict(
                f"block level={spec.level} m={spec.branch} j={spec.period} "
                f"degenerates to {ny}x{nx} nodes")
        nid = np.empty((ny, nx), dtype=np.int64)
        if spec.parent is not None:
            parent = blocks[spec.parent]
            off = spec.parent_col_offset
            pslice = parent.spec.x[off:off + nx]
            if pslice.shape != spec.x.shape or not np.array_equal(pslice, spec.x):
                raise SnapConflict(
                    "child columns are not a bitwise slice of the parent grid")
            nid[-1, :] = parent.nid[0, off:off + nx]
            own_rows = ny - 1
        else:
            own_rows = ny

        n_cols = nx - 1 if spec.periodic_x else nx
        fresh = np.arange(next_id, next_id + own_rows * n_cols,
                          dtype=np.int64).reshape(own_rows, n_cols)
        if spec.periodic_x:
            fresh = np.concatenate([fresh, fresh[:, :1]], axis=1)
        nid[:own_rows, :] = fresh
        next_id += own_rows * n_cols

        xy = np.empty((own_rows * n_cols, 2))
        xg = spec.x[:n_cols]
        xy[:, 0] = np.tile(xg, own_rows)
        xy[:, 1] = np.repeat(spec.y[:own_rows], n_cols)
        coords.append(xy)
        blocks.append(Block(spec, nid))

    nodes = np.concatenate(coords) if coords else np.zeros((0, 2))
    return BlockMesh(nodes=nodes, blocks=blocks)


def graded_segment(length: float, d_lo: float, d_hi: float,
                   band_lo: float, band_hi: float,
                   d_max: float, ratio: float = 1.35) -> np.ndarray:
    """Offsets 0..length with fine bands of spacing d_lo / d_hi at the ends.

    Spacing grows geometrically from each band up to ``d_max``; the leftover
    middle is filled uniformly.  First and last offsets are exactly 0 and
    ``length``.
    """
    if length <= 0:
        raise ValueError("segment length must be positive")

    def one_side(d_fine, band):
        pts = [0.0]
        if band > 0 and d_fine < length:
            n = max(1, int(np.ceil(band / d_fine)))
            for _ in range(n):
                pts.append(pts[-1] + d_fine)
            d = d_fine * ratio
            while d < d_max:
                pts.append(pts[-1] + d)
                d *= ratio
        return np.asarray(pts)

    lo = one_side(d_lo, band_lo)
    hi = one_side(d_hi, band_hi)
    gap = length - lo[-1] - hi[-1]
    if gap < d_max * 0.25:
        # bands collide: fall back to a uniform grid at the finer spacing
        d = min(d_lo, d_hi, d_max)
        n = max(1, int(np.ceil(length / d)))
        return np.linspace(0.0, length, n + 1)
    n_mid = max(1, int(np.ceil(gap / d_max)))
    mid = np.linspace(lo[-1], length - hi[-1], n_mid + 1)
    out = np.concatenate([lo[:-1], mid, length - hi[-2::-1]])
    out[0] = 0.0
    out[-1] = length
    return out


def refine_breakpoints(breaks: np.ndarray, d_target: float) -> tuple[np.ndarray, np.ndarray]:
    """Subdivide each interval between breakpoints to spacing <= d_target.

    Returns (grid, break_indices) where grid contains every breakpoint
    exactly and break_indices[i] locates breaks[i] in grid.
    """
    breaks = np.asarray(breaks, dtype=float)
    if np.any(np.diff(breaks) <= 0):
        raise SnapConflict("breakpoints must be strictly increasing")
    pieces = []
    idx = [0]
    for a, b in zip(breaks[:-1], breaks[1:]):
        n = max(1, int(np.ceil((b - a) / d_target - 1e-12)))
        seg = np.linspace(a, b, n + 1)
        pieces.append(seg[:-1])
        idx.append(idx[-1] + n)
    grid = np.concatenate(pieces + [breaks[-1:]])
    for i, k in enumerate(idx):
        grid[k] = breaks[i]
    return grid, np.asarray(idx, dtype=np.int64)
