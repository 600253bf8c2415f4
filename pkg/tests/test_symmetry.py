# test_symmetry.py — second eigenspace, projections, polarization and symmetry diagnostics

import math

import numpy as np
import pytest

from grid import DomainSpec, ScalarField, build_mesh, inner_l2, neg_laplacian, norm_l2, reflect
from symmetry import (
    SymmetryError,
    SymmetryProjector,
    UnreliableProjectionError,
    classify_square_branch,
    detect_invariances,
    foliated_schwarz_check,
    nodal_domains,
    polarize,
    project_E2,
    second_eigenspace,
    symmetry_tags,
)


def dirichlet(u):
    return u.mesh.h ** 2 * float(u.values @ (neg_laplacian(u.mesh) @ u.values))


def test_square_eigenspace(square_basis):
    h = square_basis.mesh.h
    expected = 4.0 / h ** 2 * (math.sin(h / 2) ** 2 + math.sin(h) ** 2)
    assert square_basis.eigenvalue == pytest.approx(expected, rel=1e-8)
    assert square_basis.degenerate and square_basis.aligned
    assert norm_l2(square_basis.psi1) == pytest.approx(1.0)
    assert abs(inner_l2(square_basis.psi1, square_basis.psi2)) < 1e-8

    x, y = square_basis.mesh.coords
    t1 = ScalarField(square_basis.mesh, np.sin(x) * np.sin(2 * y))
    cos = inner_l2(square_basis.psi1, t1) / norm_l2(t1)
    assert cos == pytest.approx(1.0, abs=1e-7)


def test_projection_of_basis_vector(square_basis):
    proj = project_E2(square_basis.psi1, square_basis)
    c1, c2 = proj["coeffs"]
    assert c1 == pytest.approx(1.0) and abs(c2) < 1e-8
    assert proj["remainder_norm"] < 1e-7


def test_branch_classification(square_basis):
    assert classify_square_branch(square_basis.phi_alpha(0.0), square_basis)["type"] == "M"
    assert classify_square_branch(square_basis.phi_alpha(math.pi / 2), square_basis)["type"] == "M"
    d = classify_square_branch(square_basis.phi_alpha(math.pi / 4), square_basis)
    assert d["type"] == "D" and d["alpha"] == pytest.approx(math.pi / 4, abs=1e-6)
    assert classify_square_branch(square_basis.phi_alpha(math.pi / 8), square_basis)["type"] == "other"
    # mod pi: the negative of a branch has the same angle
    assert classify_square_branch(-square_basis.phi_alpha(0.3), square_basis)["alpha"] == pytest.approx(0.3, abs=1e-6)


def test_classification_needs_E2_content(square_basis):
    with pytest.raises(UnreliableProjectionError):
        classify_square_branch(square_basis.phi1, square_basis)


def test_disk_basis_is_not_aligned(disk_mesh):
    basis = second_eigenspace(disk_mesh)
    assert basis.degenerate and not basis.aligned
    x, _ = disk_mesh.coords
    # the first basis vector follows the x direction
    assert inner_l2(basis.psi1, ScalarField(disk_mesh, x)) > 0
    with pytest.raises(SymmetryError):
        classify_square_branch(basis.psi1, basis)


def test_detect_invariances(square_basis):
    found = set(detect_invariances(square_basis.psi1))
    assert found == {("x_axis", -1), ("y_axis", 1), ("center", -1)}
    d = set(detect_invariances(square_basis.phi_alpha(math.pi / 4)))
    assert ("diagonal", 1) in d and ("anti_diagonal", -1) in d


def test_projector(square_mesh):
    rng = np.random.default_rng(3)
    v = rng.standard_normal(square_mesh.M)
    P = SymmetryProjector(square_mesh, [("x_axis", -1), ("y_axis", 1)])
    assert P.size == 4
    Pv = P(v)
    assert np.allclose(P(Pv), Pv)
    assert set(detect_invariances(ScalarField(square_mesh, Pv))) >= {("x_axis", -1), ("y_axis", 1), ("center", -1)}

    assert SymmetryProjector(square_mesh, [])(v) is v


def test_inconsistent_constraints(square_mesh):
    with pytest.raises(SymmetryError):
        SymmetryProjector(square_mesh, [("x_axis", 1), ("y_axis", 1), ("center", -1)])


def test_polarization(square_mesh):
    rng = np.random.default_rng(4)
    u = ScalarField(square_mesh, rng.standard_normal(square_mesh.M))
    for axis in ("x_axis", "diagonal"):
        p = polarize(u, axis)
        assert np.array_equal(np.sort(p.values), np.sort(u.values))
        assert dirichlet(p) <= dirichlet(u) + 1e-10
        assert np.array_equal(polarize(p, axis).values, p.values)


def test_foliated_schwarz_on_odd_profile(disk_mesh):
    u = ScalarField.from_function(disk_mesh, lambda x, y: x * (1 - x ** 2 - y ** 2))
    rep = foliated_schwarz_check(u)
    assert rep.is_foliated_schwarz
    assert rep.axis_deg == pytest.approx(0.0, abs=1e-6)
    assert rep.odd_deviation < 1e-12
    assert rep.radial_variance > 0.2
    assert rep.odd_axis["y_axis"] == 0.0


def test_foliated_schwarz_rejects_wrong_monotonicity(disk_mesh):
    u = ScalarField.from_function(disk_mesh, lambda x, y: np.cos(3 * np.arctan2(y, x)) * (1 - x ** 2 - y ** 2))
    assert not foliated_schwarz_check(u).is_foliated_schwarz


def test_foliated_schwarz_needs_radial_domain(square_basis):
    with pytest.raises(SymmetryError):
        foliated_schwarz_check(square_basis.psi1)


def test_nodal_domains(square_mesh, square_basis):
    assert nodal_domains(square_basis.psi1) == 2
    assert nodal_domains(square_basis.phi1) == 1
    x, y = square_mesh.coords
    assert nodal_domains(ScalarField(square_mesh, np.sin(2 * x) * np.sin(2 * y))) == 4
    assert nodal_domains(ScalarField.zeros(square_mesh)) == 0


def test_symmetry_tags(square_basis, disk_mesh):
    assert symmetry_tags(square_basis.psi1) == ["odd_y"]
    assert symmetry_tags(square_basis.psi2) == ["odd_x"]
    assert symmetry_tags(square_basis.phi1) == ["none"]

    odd = ScalarField.from_function(disk_mesh, lambda x, y: x * (1 - x ** 2 - y ** 2))
    tags = symmetry_tags(odd)
    assert "odd_x" in tags
    assert any(t.startswith("fss(axis=") for t in tags)

    radial = ScalarField.from_function(disk_mesh, lambda x, y: 1 - x ** 2 - y ** 2)
    assert symmetry_tags(radial) == ["radial"]


def test_projection_is_idempotent(square_mesh, square_basis):
    rng = np.random.default_rng(5)
    u = ScalarField(square_mesh, rng.standard_normal(square_mesh.M))
    once = project_E2(u, square_basis)["projection"]
    twice = project_E2(once, square_basis)
    assert np.allclose(twice["projection"].values, once.values, atol=1e-12)
    assert twice["remainder_norm"] < 1e-12 * norm_l2(once)


def test_projector_output_is_exactly_symmetric(square_mesh):
    gens = [("x_axis", -1), ("y_axis", -1), ("diagonal", 1)]
    P = SymmetryProjector(square_mesh, gens)
    assert P.size == 8
    rng = np.random.default_rng(9)
    for _ in range(5):
        out = P(rng.standard_normal(square_mesh.M))
        for sym, parity in gens:
            assert np.array_equal(reflect(ScalarField(square_mesh, out), sym).values, parity * out)
        assert np.allclose(P(out), out, atol=1e-14)


def test_rectangle_has_simple_second_eigenvalue():
    h = math.pi / 16
    basis = second_eigenspace(build_mesh(DomainSpec.rectangle(math.pi, math.pi / 2), h))
    assert not basis.degenerate
    assert basis.eigenvalue == pytest.approx(8.0 / h ** 2 * math.sin(h) ** 2, rel=1e-8)
    assert basis.third_eigenvalue > basis.eigenvalue + 1.0


def test_dumbbell_ground_pair_is_resolved(dumbbell_mesh):
    basis = second_eigenspace(dumbbell_mesh)
    phi1 = basis.phi1.values
    assert np.min(phi1) >= -1e-6 * np.max(phi1)
    mode = basis.nodal_mode
    assert mode is basis.psi1 and not basis.degenerate
    assert (reflect(mode, "y_axis") + mode).sup_norm() <= 1e-5 * mode.sup_norm()
    assert nodal_domains(mode) == 2
    assert basis.lambda1 < basis.eigenvalue
