# test_bifurcation.py — branch continuation near lambda_2 on the square

import csv
import math

import numpy as np
import pytest

from bifurcation import (
    CSV_COLUMNS,
    Branch,
    BranchError,
    BranchPoint,
    analytic_sigma,
    branch_summary,
    continue_branch,
    default_lambda_grid,
    energy_identity_check,
    energy_ratio_check,
    expected_ratio,
    fit_sigma,
    phi_alpha_discrete,
    u_form_energy,
    u_form_morse_index,
    write_branch_csv,
)
from grid import inner_l2


@pytest.fixture(scope="module")
def midline_branch(square_mesh, square_basis):
    lam2 = square_basis.eigenvalue
    grid = [lam2 + d for d in (0.02, 0.08, 0.14, 0.2)]
    return continue_branch(square_mesh, 0.0, grid, basis=square_basis)


def synthetic_branch(lam2, sigma, n=5):
    points = []
    for k in range(1, n + 1):
        s = 0.1 * k
        points.append(BranchPoint(lam=lam2 + sigma * s * s, s=s, field=None, energy_J=-0.01 * k,
                                  energy_u=-0.05 * k, morse=1, zeros_flagged=0, residual=1e-11,
                                  alpha=0.0, kind="M"))
    return Branch(alpha_target=0.0, lambda2h=lam2, points=points)


def test_analytic_constants():
    assert analytic_sigma(0.0) == pytest.approx(9 / 16)
    assert analytic_sigma(math.pi / 4) == pytest.approx(21 / 32)
    assert expected_ratio(0.0) == pytest.approx(-math.pi ** 2 / 9)
    assert expected_ratio(math.pi / 4) == pytest.approx(-2 * math.pi ** 2 / 21)


def test_default_grid():
    grid = default_lambda_grid(5.0)
    assert len(grid) == 12
    assert grid[0] == pytest.approx(5.02) and grid[-1] == pytest.approx(5.4)
    assert all(b > a for a, b in zip(grid, grid[1:]))


def test_phi_alpha_normalisation(square_basis):
    phi = phi_alpha_discrete(square_basis, 0.3)
    assert inner_l2(phi, phi) == pytest.approx(math.pi ** 2 / 4)


def test_fit_sigma_exact():
    fit = fit_sigma(synthetic_branch(5.0, 0.5))
    assert fit["sigma_hat"] == pytest.approx(0.5)
    assert fit["stderr"] == pytest.approx(0.0, abs=1e-12)


def test_fit_sigma_needs_four_points():
    with pytest.raises(BranchError):
        fit_sigma(synthetic_branch(5.0, 0.5, n=3))


def test_midline_branch(midline_branch, square_basis):
    br = midline_branch
    assert not br.truncated
    assert len(br.points) == 4
    assert all(p.kind == "M" for p in br.points)
    assert all(p.morse == 1 and p.zeros_flagged == 0 for p in br.points)
    s = [p.s for p in br.points]
    assert all(b > a > 0 for a, b in zip(s, s[1:]))
    assert br.sigma_hat == pytest.approx(9 / 16, rel=0.1)


def test_midline_energy_asymptotics(midline_branch):
    ratio = energy_ratio_check(midline_branch)[0]["ratio"]
    assert ratio == pytest.approx(-math.pi ** 2 / 9, rel=0.1)
    for p in midline_branch.points:
        assert p.energy_J < 0
        assert energy_identity_check(p) <= 1e-4


def test_u_form_consistency(midline_branch):
    for p in midline_branch.points:
        assert u_form_energy(p.field, p.lam) == pytest.approx(p.energy_u, rel=1e-9)
        u = p.field * math.sqrt(p.lam)
        assert u_form_morse_index(u, p.lam)["index"] == p.morse


def test_branch_symmetries(square_mesh, square_basis, midline_branch):
    lam2 = square_basis.eigenvalue
    grid = [lam2 + 0.02, lam2 + 0.08]
    s0 = math.sqrt(0.02 / analytic_sigma(0.0))
    reference = midline_branch.points[:2]

    flipped = continue_branch(square_mesh, 0.0, grid, s0=-s0, basis=square_basis)
    assert len(flipped.points) == 2
    for p, q in zip(flipped.points, reference):
        assert p.s == pytest.approx(-q.s, rel=1e-6)
        assert p.energy_J == pytest.approx(q.energy_J, rel=1e-8)

    turned = continue_branch(square_mesh, math.pi / 2, grid, basis=square_basis)
    assert len(turned.points) == 2
    for p, q in zip(turned.points, reference):
        assert p.kind == "M"
        assert p.energy_J == pytest.approx(q.energy_J, rel=1e-6)


def test_diagonal_branch(square_mesh, square_basis):
    lam2 = square_basis.eigenvalue
    br = continue_branch(square_mesh, math.pi / 4, [lam2 + 0.05, lam2 + 0.1], basis=square_basis)
    assert [p.kind for p in br.points] == ["D", "D"]
    assert all(p.morse == 2 for p in br.points)
    assert br.sigma_hat is None


def test_branch_preconditions(square_mesh, square_basis, disk_mesh):
    lam2 = square_basis.eigenvalue
    with pytest.raises(BranchError):
        continue_branch(square_mesh, 0.0, [lam2 - 0.1, lam2 + 0.1], basis=square_basis)
    with pytest.raises(BranchError):
        continue_branch(square_mesh, 0.0, [lam2 + 0.2, lam2 + 0.1], basis=square_basis)
    with pytest.raises(BranchError):
        continue_branch(disk_mesh, 0.0, [20.0])


def test_branch_csv(tmp_path, midline_branch):
    path = write_branch_csv(midline_branch, tmp_path / "branch.csv")
    with open(path, newline="") as f:
        rows = list(csv.reader(f))
    assert tuple(rows[0]) == CSV_COLUMNS
    assert len(rows) == 1 + len(midline_branch.points)
    assert float(rows[1][0]) == pytest.approx(midline_branch.points[0].lam, rel=1e-11)


def test_branch_summary(midline_branch):
    summary = branch_summary(midline_branch)
    assert summary["n_points"] == 4
    assert summary["types"] == ["M"]
    assert summary["sigma_analytic"] == pytest.approx(9 / 16)
    assert np.isfinite(summary["ratio_limit_observed"])
