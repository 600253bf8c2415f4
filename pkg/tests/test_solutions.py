# test_solutions.py — positive solution, nodal catalog, Morse index and mountain-pass paths

import math

import numpy as np
import pytest

from flow import FlowConfig
from grid import DomainSpec, GridError, build_mesh
from nonlinearity import DerivativeSingularityError, NonlinearitySpec
from solutions import (
    MountainPassError,
    constructive_mp_path,
    default_seeds,
    dumbbell_experiment,
    dumbbell_scan,
    first_eigenfunction,
    morse_index,
    nodal_search,
    odd_extension_solution,
    positive_solution,
    solve_from_seed,
    string_saddle,
)
from symmetry import classify_square_branch, foliated_schwarz_check, nodal_domains, second_eigenspace


def test_first_eigenfunction(square_mesh):
    lam1, phi1 = first_eigenfunction(square_mesh)
    assert lam1 == pytest.approx(1.99355, abs=1e-4)
    assert np.all(phi1.values > 0)
    assert phi1.sup_norm() == pytest.approx(1.0)


def test_positive_solution(square_w, ac_spec):
    assert square_w.converged
    assert square_w.sign_class == "positive"
    assert np.all(square_w.field.values > 0)
    assert square_w.field.sup_norm() <= 1.0 + 1e-8
    assert square_w.energy < 0
    assert square_w.diagnostics["cross_validation"] <= 1e-6
    assert morse_index(square_w, ac_spec) == {"index": 0, "zeros_flagged": 0}


def test_positive_solution_below_lambda1(square_mesh):
    rep = positive_solution(square_mesh, NonlinearitySpec.allen_cahn(1.5))
    assert rep.sign_class == "zero"


def test_sublinear_positive_solution_has_no_morse_index():
    mesh = build_mesh(DomainSpec.square(math.pi), math.pi / 8)
    spec = NonlinearitySpec.sublinear_power(0.5)
    w = positive_solution(mesh, spec)
    assert w.sign_class == "positive"
    assert "newton_steps" not in w.diagnostics
    with pytest.raises(DerivativeSingularityError):
        morse_index(w, spec)


def test_default_seeds(square_basis, ac_spec):
    seeds = default_seeds(square_basis, ac_spec)
    assert len(seeds) == 16
    assert all(s.sup_norm() == pytest.approx(0.1) for s in seeds)


def test_catalog_ordering_and_bounds(square_catalog, square_w):
    assert len(square_catalog) >= 2
    energies = [e.energy for e in square_catalog.entries]
    assert energies == sorted(energies)
    assert square_catalog.c_nod == energies[0]
    assert square_catalog.best is square_catalog.entries[0]
    assert square_w.energy <= square_catalog.c_nod < 0
    for rep in square_catalog.entries:
        assert rep.sign_class == "nodal"
        assert np.max(np.abs(rep.field.values) - square_w.field.values) <= 1e-6


def test_least_energy_is_midline_type(square_catalog, square_basis, ac_spec):
    best = square_catalog.best
    assert classify_square_branch(best.field, square_basis)["type"] == "M"
    assert morse_index(best, ac_spec) == {"index": 1, "zeros_flagged": 0}
    assert nodal_domains(best.field) == 2


def test_diagonal_solution_has_morse_index_two(square_catalog, square_basis, ac_spec):
    kinds = {}
    for rep in square_catalog.entries:
        kinds.setdefault(classify_square_branch(rep.field, square_basis)["type"], rep)
    assert "D" in kinds
    assert morse_index(kinds["D"], ac_spec) == {"index": 2, "zeros_flagged": 0}
    assert kinds["D"].energy > square_catalog.c_nod


def test_nodal_search_below_lambda2(square_mesh, square_basis):
    spec = NonlinearitySpec.allen_cahn(3.0)
    seeds = [square_basis.phi_alpha(a) * 0.5 for a in (0.0, math.pi / 4)]
    catalog = nodal_search(square_mesh, spec, seeds=seeds)
    assert len(catalog) == 0
    assert catalog.c_nod is None and catalog.best is None


def test_constructive_path_certifies(square_catalog, square_w, ac_spec):
    best = square_catalog.best
    path = constructive_mp_path(best, square_w, ac_spec)
    assert path.certificate
    assert path.max_energy == pytest.approx(path.reference_energy, rel=1e-3)
    assert np.allclose(path.images[0].values, -square_w.field.values)
    assert np.allclose(path.images[-1].values, square_w.field.values)
    assert len(path.images) <= 21 + 1


def test_constructive_path_needs_a_saddle(square_w, ac_spec):
    with pytest.raises(MountainPassError):
        constructive_mp_path(square_w, square_w, ac_spec)


def test_string_saddle_matches_least_energy_nodal(square_mesh, square_basis, square_catalog, square_w, ac_spec):
    c_nod = square_catalog.c_nod
    est = string_saddle(square_mesh, ac_spec, w=square_w, direction=square_basis.nodal_mode, c_nod=c_nod)
    assert est.method == "string"
    assert est.max_energy == pytest.approx(c_nod, rel=1e-2)
    assert est.diagnostics["saddle_tol"] == pytest.approx(1e-3 * abs(c_nod))
    assert est.diagnostics["top_morse"] == 1


def test_default_seed_catalog_on_square(square_mesh, square_basis, ac_spec, flow_cfg):
    catalog = nodal_search(square_mesh, ac_spec, cfg=flow_cfg, basis=square_basis)
    assert len(catalog) >= 4
    types = {classify_square_branch(rep.field, square_basis)["type"] for rep in catalog.entries}
    assert {"M", "D"} <= types
    fields = [rep.field.values for rep in catalog.entries]
    for i, a in enumerate(fields):
        for b in fields[i + 1:]:
            assert np.max(np.abs(a - b)) > 1e-3
            assert np.max(np.abs(a + b)) > 1e-3


def test_default_seed_catalog_empty_below_lambda2(square_mesh, square_basis, flow_cfg):
    catalog = nodal_search(square_mesh, NonlinearitySpec.allen_cahn(4.5), cfg=flow_cfg, basis=square_basis)
    assert len(catalog) == 0
    assert catalog.c_nod is None


def test_solve_from_seed_hands_over_to_newton(square_basis, ac_spec):
    phi = square_basis.phi_alpha(0.0)
    rep = solve_from_seed(phi * (0.1 / phi.sup_norm()), ac_spec, FlowConfig())
    assert rep.converged
    assert "newton_steps" in rep.diagnostics
    assert rep.sign_class == "nodal"


def test_odd_extension_on_disk(disk_mesh):
    spec = NonlinearitySpec.allen_cahn(20.0)
    rep = odd_extension_solution(disk_mesh, spec, axis="y_axis")
    assert rep.converged and rep.sign_class == "nodal"
    assert rep.diagnostics["glued_residual"] <= 1e-6
    assert nodal_domains(rep.field) == 2
    x, _ = disk_mesh.coords
    assert np.all(rep.field.values[x == 0.0] == 0.0)


def test_disk_least_energy_nodal_solution(disk_mesh):
    basis = second_eigenspace(disk_mesh)
    spec = NonlinearitySpec.allen_cahn(basis.eigenvalue + 1.0)
    w = positive_solution(disk_mesh, spec)
    catalog = nodal_search(disk_mesh, spec, basis=basis)
    best = catalog.best
    assert best is not None
    assert nodal_domains(best.field) == 2
    report = foliated_schwarz_check(best.field)
    assert report.is_foliated_schwarz
    assert report.radial_variance > 0.2
    assert report.odd_deviation <= 0.02
    assert morse_index(best, spec)["index"] == 1
    assert constructive_mp_path(best, w, spec).certificate


def test_dumbbell_scan_records_unresolved_channel():
    scan = dumbbell_scan(1.0, [0.1], 1.0, NonlinearitySpec.allen_cahn(20.0), h=0.25)
    assert scan["results"] == [] and scan["selected"] is None
    assert scan["failures"][0]["kind"] == "GridError"


def test_dumbbell_rejects_spacing_wider_than_channel():
    spec = NonlinearitySpec.allen_cahn(20.0)
    with pytest.raises(GridError, match="does not resolve"):
        dumbbell_experiment(1.0, 0.2, 1.0, spec, h=0.1)
    scan = dumbbell_scan(1.0, [0.2], 1.0, spec, h=0.1)
    assert scan["failures"][0]["kind"] == "GridError"


@pytest.fixture(scope="module")
def dumbbell_run():
    return dumbbell_experiment(1.0, 0.4, 1.0, NonlinearitySpec.allen_cahn(20.0))


def test_dumbbell_separates_nodal_minimum_from_mountain_pass(dumbbell_run):
    run = dumbbell_run
    assert run["h"] == pytest.approx(0.1)
    assert run["c_nod"] < 0
    assert run["morse"]["index"] == 0
    assert run["saddle_morse"] == 1
    assert run["reports"]["saddle"].diagnostics["top_morse"] == 1
    assert run["gap"] > 0.05 * abs(run["c_nod"])
    assert nodal_domains(run["reports"]["u_W"].field) == 2
