import numpy as np
import pytest

from conftest import random_valid_params, reference_params
from thickjunction import assembly
from thickjunction.errors import (BadCount, ConfigError, NestingViolation,
                                  RangeViolation, SnapConflict)
from thickjunction.geometry import (GeometryParams, MeshResolution,
                                    build_layout, build_mesh, derive_offsets,
                                    layout_to_text, unit_walls, validate)
from thickjunction.meshing import (BlockSpec, build_block_mesh,
                                   graded_segment, refine_breakpoints)


def with_params(**kw):
    base = dict(a=1.0, N=8, l1=0.3, l2=0.3, l3=0.3, h0=0.5, h11=0.2, h12=0.2,
                h21=0.08, h22=0.08, h23=0.08, h24=0.08, d0=0.3)
    base.update(kw)
    return GeometryParams(**base)


def test_offsets_level1_example():
    offs = derive_offsets(with_params(h0=0.5, h11=0.2, h12=0.2))
    assert offs.b11 == pytest.approx(0.35, abs=0)
    assert offs.b12 == pytest.approx(0.65, abs=0)


def test_offsets_level2_example():
    p = with_params(h0=0.9, h11=0.3, h12=0.3, h21=0.1, h22=0.1,
                    h23=0.1, h24=0.1)
    offs = derive_offsets(p)
    assert offs.b21 == pytest.approx(0.1, abs=1e-15)
    assert offs.b22 == pytest.approx(0.3, abs=1e-15)
    assert offs.b23 == pytest.approx(0.7, abs=1e-15)
    assert offs.b24 == pytest.approx(0.9, abs=1e-15)


def test_flush_wall_identity_is_algebraic():
    p = with_params()
    offs = derive_offsets(p)
    assert offs.b11 - p.h11 / 2 == pytest.approx((1 - p.h0) / 2, abs=1e-16)


def test_flush_wall_identities_random_draws():
    rng = np.random.default_rng(20240811)
    for _ in range(1000):
        p = random_valid_params(rng)
        offs = derive_offsets(p)
        tol = 4e-16
        assert abs(offs.b11 - p.h11 / 2 - (1 - p.h0) / 2) < tol
        assert abs(offs.b12 + p.h12 / 2 - (1 + p.h0) / 2) < tol
        assert abs(offs.b21 - p.h21 / 2 - (1 - p.h0) / 2) < tol
        assert abs(offs.b22 + p.h22 / 2 - ((1 - p.h0) / 2 + p.h11)) < tol
        assert abs(offs.b23 - p.h23 / 2 - ((1 + p.h0) / 2 - p.h12)) < tol
        assert abs(offs.b24 + p.h24 / 2 - (1 + p.h0) / 2) < tol


def test_validate_rejects_nesting_equality():
    with pytest.raises(NestingViolation):
        validate(with_params(h0=0.5, h11=0.25, h12=0.25))


def test_validate_rejects_h_on_interval_boundary():
    with pytest.raises(RangeViolation):
        validate(with_params(h0=1.0))


def test_validate_rejects_small_N():
    with pytest.raises(BadCount):
        validate(with_params(N=1))


def test_validate_accepts_reference_set():
    vp = validate(reference_params(16))
    assert vp.params.N == 16


def test_layout_level0_span_example():
    vp = validate(with_params(N=2, a=1.0, h0=0.5))
    lay = build_layout(vp)
    rod = [r for r in lay.rods if r.level == 0 and r.period == 0][0]
    assert rod.x1_lo == pytest.approx(0.125, abs=1e-16)
    assert rod.x1_hi == pytest.approx(0.375, abs=1e-16)


def test_layout_rod_count_is_7N():
    lay = build_layout(validate(with_params(N=4)))
    assert len(lay.rods) == 28


def test_layout_flush_walls_shared_floats():
    lay = build_layout(validate(with_params(N=3)))
    for j in range(3):
        r0 = [r for r in lay.rods if r.level == 0 and r.period == j][0]
        r11 = [r for r in lay.rods if r.level == 1 and r.branch == 1
               and r.period == j][0]
        assert r11.x1_lo == r0.x1_lo  # bitwise flush


def test_layout_disjoint_and_nested_random():
    rng = np.random.default_rng(7)
    for _ in range(50):
        p = random_valid_params(rng)
        lay = build_layout(validate(p))
        for j in range(p.N):
            for level in (0, 1, 2):
                rods = sorted([r for r in lay.rods
                               if r.level == level and r.period == j],
                              key=lambda r: r.x1_lo)
                for a, b in zip(rods[:-1], rods[1:]):
                    assert a.x1_hi < b.x1_lo + 1e-15
            # children nest inside their parents
            for r in lay.rods:
                if r.level == 0 or r.period != j:
                    continue
                parents = [q for q in lay.rods
                           if q.level == r.level - 1 and q.period == j
                           and q.x1_lo <= r.x1_lo + 1e-15
                           and r.x1_hi <= q.x1_hi + 1e-15]
                assert parents


def test_mesh_columns_across_narrowest_rod():
    # the narrowest rods span exactly cells_across cells -> +1 node columns
    p = with_params(N=4)
    mesh = build_mesh(validate(p), MeshResolution(cells_across=4))
    blk = mesh.block_of(2, 1, 0)
    assert len(blk.x) == 5


def test_mesh_conformity_shared_interface_nodes(mesh4):
    mesh = mesh4
    for (level, m, j), nodes in mesh.interfaces.items():
        child = mesh.block_of(level, m, j)
        assert np.array_equal(child.top_row(), nodes)
        xy = mesh.nodes[nodes]
        q = mesh.params.depths[level]
        assert np.all(xy[:, 1] == q)


def test_mesh_area_matches_layout(mesh4):
    lay = mesh4.layout
    assert mesh4.bm.area() == pytest.approx(lay.area(), rel=1e-12)
    M, _ = assembly.assemble_mass_stiffness(mesh4.bm)
    assert M.sum() == pytest.approx(lay.area(), rel=1e-10)


def test_mesh_boundary_tags_complete(mesh4):
    mesh4.check_boundary_tags()


def test_mesh_node_ordering_reproducible(params4):
    a = build_mesh(validate(params4), MeshResolution())
    b = build_mesh(validate(params4), MeshResolution())
    assert a.nodes.tobytes() == b.nodes.tobytes()
    assert a.bm.cells.tobytes() == b.bm.cells.tobytes()


def test_resolution_requires_two_cells_across():
    with pytest.raises(ConfigError):
        MeshResolution(cells_across=1)


def test_layout_export_format(params4):
    lay = build_layout(validate(params4))
    text = layout_to_text(lay)
    lines = [ln for ln in text.strip().split("\n") if not ln.startswith("#")]
    assert len(lines) == 7 * params4.N
    parts = lines[0].split()
    assert len(parts) == 7
    assert float(parts[4]) > float(parts[3])


def test_unit_walls_strictly_ordered(params4):
    walls = unit_walls(params4)
    breaks = sorted({v for pair in walls.values() for v in pair})
    assert all(b2 > b1 for b1, b2 in zip(breaks[:-1], breaks[1:]))


def test_graded_segment_exact_endpoints():
    g = graded_segment(0.3, 0.01, 0.01, 0.05, 0.05, 0.08)
    assert g[0] == 0.0 and g[-1] == 0.3
    assert np.all(np.diff(g) > 0)


def test_refine_breakpoints_contains_breaks():
    breaks = np.array([0.0, 0.25, 0.3, 1.0])
    grid, idx = refine_breakpoints(breaks, 0.04)
    assert np.all(grid[idx] == breaks)
    assert np.max(np.diff(grid)) <= 0.04 + 1e-15


def test_degenerate_block_raises():
    with pytest.raises(SnapConflict):
        build_block_mesh([BlockSpec(x=np.array([0.0]), y=np.array([0.0, 1.0]))])
