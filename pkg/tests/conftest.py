# conftest.py — shared coarse meshes and cached solutions for the nodal-lab tests

import math

import pytest

from flow import FlowConfig
from grid import DomainSpec, build_mesh
from nonlinearity import NonlinearitySpec
from solutions import nodal_search, positive_solution
from symmetry import second_eigenspace

SQUARE_H = math.pi / 16
DISK_H = 1.0 / 8.0
LAMBDA = 5.2


@pytest.fixture(scope="session")
def square_mesh():
    return build_mesh(DomainSpec.square(math.pi), SQUARE_H)


@pytest.fixture(scope="session")
def disk_mesh():
    return build_mesh(DomainSpec.disk(1.0), DISK_H)


@pytest.fixture(scope="session")
def square_basis(square_mesh):
    return second_eigenspace(square_mesh)


@pytest.fixture(scope="session")
def ac_spec():
    return NonlinearitySpec.allen_cahn(LAMBDA)


@pytest.fixture(scope="session")
def flow_cfg():
    return FlowConfig()


@pytest.fixture(scope="session")
def square_w(square_mesh, ac_spec, flow_cfg):
    return positive_solution(square_mesh, ac_spec, flow_cfg)


@pytest.fixture(scope="session")
def square_catalog(square_mesh, square_basis, ac_spec, flow_cfg):
    # the two symmetric branch directions plus one generic angle
    seeds = []
    for alpha in (0.0, math.pi / 4, math.pi / 8):
        phi = square_basis.phi_alpha(alpha)
        seeds.append(phi * (0.1 / phi.sup_norm()))
    return nodal_search(square_mesh, ac_spec, seeds=seeds, cfg=flow_cfg)


@pytest.fixture(scope="session")
def dumbbell_mesh():
    # two unit lobes, channel width 0.4 resolved by four spacings
    return build_mesh(DomainSpec.dumbbell(1.0, 0.4, 1.0), 0.1)
