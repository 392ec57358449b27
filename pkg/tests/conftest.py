import pytest

from thickjunction import cell_solver, model
from thickjunction.geometry import (GeometryParams, MeshResolution,
                                    build_mesh, validate)


def reference_params(N=4):
    return GeometryParams(a=1.0, N=N, l1=0.3, l2=0.3, l3=0.3, h0=0.5,
                          h11=0.2, h12=0.2, h21=0.08, h22=0.08,
                          h23=0.08, h24=0.08, d0=0.3)


@pytest.fixture(scope="session")
def params4():
    return reference_params(4)


@pytest.fixture(scope="session")
def params8():
    return reference_params(8)


@pytest.fixture(scope="session")
def mesh4(params4):
    return build_mesh(validate(params4), MeshResolution())


@pytest.fixture(scope="session")
def mesh8(params8):
    return build_mesh(validate(params8), MeshResolution())


@pytest.fixture(scope="session")
def cells_ref(params4):
    """Cell family for the reference widths (h0=0.5, h1=0.2, h2=0.08)."""
    return cell_solver.solve_cell_family(params4, L=10.0)


@pytest.fixture(scope="session")
def default_data4(params4):
    data = model.default_problem(params4, T=0.02)
    data.certify()
    return data


def random_valid_params(rng):
    h0 = rng.uniform(0.25, 0.9)
    h11 = rng.uniform(0.08, 0.45) * h0
    h12 = rng.uniform(0.08, 0.45) * h0
    h21 = rng.uniform(0.1, 0.4) * h11
    h22 = rng.uniform(0.1, 0.4) * h11
    h23 = rng.uniform(0.1, 0.4) * h12
    h24 = rng.uniform(0.1, 0.4) * h12
    return GeometryParams(a=rng.uniform(0.5, 2.0), N=int(rng.integers(2, 30)),
                          l1=rng.uniform(0.1, 1.0), l2=rng.uniform(0.1, 1.0),
                          l3=rng.uniform(0.1, 1.0), h0=h0, h11=h11, h12=h12,
                          h21=h21, h22=h22, h23=h23, h24=h24,
                          d0=rng.uniform(0.1, 1.0))
