# bifurcation.py — Branch continuation near lambda_2 on the square for nodal-lab

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from config import (
    ANGLE_TOL_DEG,
    BRANCH_POINTS,
    OUTPUT_DIGITS,
    PHI_ALPHA_L2,
    WINDOW_HIGH,
    WINDOW_LOW,
    log
)
from flow import FlowConfig, NewtonError, energy
from grid import Mesh, ScalarField, inner_l2, neg_laplacian
from linalg import ConvergenceError, count_negative_eigs, shifted
from nonlinearity import NonlinearitySpec
from solutions import morse_index, solve_from_seed
from symmetry import (
    EigenspaceBasis,
    SymmetryProjector,
    UnreliableProjectionError,
    classify_square_branch,
    detect_invariances,
    second_eigenspace,
)


class BranchError(Exception):
    pass


CSV_COLUMNS = ("lambda", "s", "energy_J", "energy_u", "morse", "zeros_flagged", "alpha_deg", "residual")


# ==============================================================================
# TYPES
# ==============================================================================

@dataclass
class BranchPoint:
    """
    One equilibrium of -Delta v = lam (v - v^3); u = sqrt(lam) v solves
    -Delta u = lam u - u^3 and s is its amplitude along phi_alpha.
    """

    lam: float
    s: float
    field: ScalarField | None
    energy_J: float
    energy_u: float
    morse: int
    zeros_flagged: int
    residual: float
    alpha: float
    kind: str = ""


@dataclass
class Branch:
    alpha_target: float
    lambda2h: float
    points: list[BranchPoint] = field(default_factory=list)
    sigma_hat: float | None = None
    fit_stderr: float | None = None
    truncated: bool = False
    message: str = ""


# ==============================================================================
# ANALYTIC VALUES
# ==============================================================================

def analytic_sigma(alpha: float) -> float:
    """int phi_alpha^4 / int phi_alpha^2 for phi_alpha = cos a sin x sin 2y + sin a sin 2x sin y."""
    return 3.0 / 64.0 * (13.0 - math.cos(4.0 * alpha))


def expected_ratio(alpha: float) -> float:
    """Limit of J lam / (lam - lambda_2)^2 along the alpha branch: -(int phi^2)^2 / (4 int phi^4)."""
    return -4.0 * math.pi ** 2 / (3.0 * (13.0 - math.cos(4.0 * alpha)))


def default_lambda_grid(lambda2h: float, n: int = BRANCH_POINTS) -> list[float]:
    """n points in (lambda2h + WINDOW_LOW, lambda2h + WINDOW_HIGH], ascending."""
    return [float(x) for x in np.linspace(lambda2h + WINDOW_LOW, lambda2h + WINDOW_HIGH, n)]


def phi_alpha_discrete(basis: EigenspaceBasis, alpha: float) -> ScalarField:
    """Discrete phi_alpha with int phi_alpha^2 = side^2 / 4."""
    side = basis.mesh.domain.side
    scale = math.sqrt(PHI_ALPHA_L2 * (side / math.pi) ** 2)
    return basis.phi_alpha(alpha) * scale


# ==============================================================================
# u-FORM QUANTITIES
# ==============================================================================

def u_form_energy(v: ScalarField, lam: float) -> float:
    """1/2 int |grad u|^2 - lam/2 int u^2 + 1/4 int u^4 at u = sqrt(lam) v."""
    u = math.sqrt(lam) * v.values
    A = neg_laplacian(v.mesh)
    h2 = v.mesh.h ** 2
    return float(h2 * (0.5 * np.dot(u, A @ u) - 0.5 * lam * np.dot(u, u) + 0.25 * np.sum(u ** 4)))


def u_form_morse_index(u: ScalarField, lam: float, zero_band: float | None = None) -> dict:
    """Negative eigenvalues of -Delta - (lam - 3 u^2)."""
    J = shifted(neg_laplacian(u.mesh), lam - 3.0 * u.values ** 2)
    counts = count_negative_eigs(J, zero_band)
    return {"index": counts["negatives"], "zeros_flagged": counts["zeros_flagged"]}


# ==============================================================================
# CONTINUATION
# ==============================================================================

def _angle_gap(a: float, b: float) -> float:
    d = abs(a - b) % math.pi
    return min(d, math.pi - d)


def continue_branch(mesh: Mesh, alpha: float, lambda_grid: list[float] | None = None,
                    s0: float | None = None, cfg: FlowConfig | None = None,
                    basis: EigenspaceBasis | None = None,
                    angle_tol_deg: float = ANGLE_TOL_DEG) -> Branch:
    """
    Natural continuation in lambda of the branch leaving lambda_2 along
    phi_alpha. The first point is seeded with s0 phi_alpha (u-form amplitude),
    every later one with the previous equilibrium. The branch is truncated
    at the first failed solve or when its angle leaves the target.
    """

    if mesh.domain.kind != "square":
        raise BranchError("Branch continuation is set up for the square")

    cfg = cfg or FlowConfig()
    basis = basis or second_eigenspace(mesh)
    lam2 = basis.eigenvalue

    lambda_grid = list(lambda_grid) if lambda_grid is not None else default_lambda_grid(lam2)
    if not lambda_grid:
        raise BranchError("Empty lambda grid")
    if any(b <= a for a, b in zip(lambda_grid, lambda_grid[1:])):
        raise BranchError("lambda grid must be strictly ascending")
    if lambda_grid[0] <= lam2:
        raise BranchError(f"First lambda {lambda_grid[0]:.6g} must exceed lambda2h = {lam2:.6g}")

    phi = phi_alpha_discrete(basis, alpha)
    phi_norm2 = inner_l2(phi, phi)
    if s0 is None:
        s0 = math.sqrt((lambda_grid[0] - lam2) / analytic_sigma(alpha))

    branch = Branch(alpha_target=alpha, lambda2h=lam2)
    tol = math.radians(angle_tol_deg)

    log(f"=== Branch alpha={math.degrees(alpha):.1f} deg: {len(lambda_grid)} lambdas from {lambda_grid[0]:.6g}, s0={s0:.4g} ===")

    prev = None
    for lam in lambda_grid:
        spec = NonlinearitySpec.allen_cahn(lam, 3.0)
        seed = phi * (s0 / math.sqrt(lam)) if prev is None else prev

        try:
            projector = SymmetryProjector(mesh, detect_invariances(seed))
            rep = solve_from_seed(seed, spec, cfg, projector=projector)
            if not rep.converged:
                raise BranchError(f"no convergence at lambda={lam:.6g}: {rep.message}")
            if rep.sign_class != "nodal":
                raise BranchError(f"equilibrium at lambda={lam:.6g} is {rep.sign_class}")

            v = rep.field
            cls = classify_square_branch(v, basis, angle_tol_deg)
            if _angle_gap(cls["alpha"], alpha) > tol:
                raise BranchError(
                    f"angle drifted to {math.degrees(cls['alpha']):.2f} deg at lambda={lam:.6g}"
                )
            m = morse_index(rep, spec)
        except (BranchError, NewtonError, ConvergenceError, UnreliableProjectionError) as e:
            branch.truncated = True
            branch.message = str(e)
            log(f"WARNING: branch alpha={math.degrees(alpha):.1f} truncated: {e}")
            break

        u = v * math.sqrt(lam)
        s = inner_l2(u, phi) / phi_norm2
        J = energy(v, spec)
        branch.points.append(BranchPoint(
            lam=lam,
            s=s,
            field=v,
            energy_J=J,
            energy_u=lam * J,
            morse=m["index"],
            zeros_flagged=m["zeros_flagged"],
            residual=rep.residual,
            alpha=cls["alpha"],
            kind=cls["type"],
        ))
        prev = v
        log(f"  lambda={lam:.6g}: s={s:.6g}, J={J:.8g}, morse={m['index']}, type={cls['type']}")

    if not branch.points:
        raise BranchError(f"Branch alpha={alpha:.4f} has no points: {branch.message}")

    if len(branch.points) >= 4:
        fit = fit_sigma(branch)
        branch.sigma_hat = fit["sigma_hat"]
        branch.fit_stderr = fit["stderr"]

    return branch


# ==============================================================================
# VALIDATION
# ==============================================================================

def fit_sigma(branch: Branch) -> dict:
    """Least squares of (lam - lambda2h) = sigma s^2 through the origin."""
    if len(branch.points) < 4:
        raise BranchError(f"fit_sigma needs at least 4 branch points, got {len(branch.points)}")

    x = np.array([p.s ** 2 for p in branch.points])
    y = np.array([p.lam - branch.lambda2h for p in branch.points])
    sxx = float(np.dot(x, x))
    if sxx == 0:
        raise BranchError("All branch amplitudes are zero")

    sigma = float(np.dot(x, y) / sxx)
    r = y - sigma * x
    stderr = math.sqrt(float(np.dot(r, r)) / (len(x) - 1) / sxx)
    return {"sigma_hat": sigma, "stderr": stderr}


def energy_ratio_check(branch: Branch) -> list[dict]:
    """J lam / (lam - lambda2h)^2 per point."""
    return [
        {"lambda": p.lam, "ratio": p.energy_J * p.lam / (p.lam - branch.lambda2h) ** 2}
        for p in branch.points
    ]


def energy_identity_check(point: BranchPoint) -> float:
    """
    Relative gap between J(v) from the quadratic form and -lam/4 int v^4;
    the two agree on equilibria only.
    """
    v = point.field
    J = energy(v, NonlinearitySpec.allen_cahn(point.lam, 3.0))
    quartic = -0.25 * point.lam * v.mesh.h ** 2 * float(np.sum(v.values ** 4))
    if J == 0.0 and quartic == 0.0:
        return 0.0
    if J == 0.0:
        return math.inf
    return abs(J - quartic) / abs(J)


# ==============================================================================
# OUTPUT
# ==============================================================================

def write_branch_csv(branch: Branch, path: str | Path) -> Path:
    path = Path(path)
    fmt = f"{{:.{OUTPUT_DIGITS}g}}"
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(CSV_COLUMNS)
        for p in branch.points:
            writer.writerow([
                fmt.format(p.lam),
                fmt.format(p.s),
                fmt.format(p.energy_J),
                fmt.format(p.energy_u),
                p.morse,
                p.zeros_flagged,
                fmt.format(math.degrees(p.alpha)),
                fmt.format(p.residual),
            ])
    return path


def branch_summary(branch: Branch) -> dict:
    ratios = energy_ratio_check(branch)
    return {
        "alpha_deg": math.degrees(branch.alpha_target),
        "lambda2h": branch.lambda2h,
        "n_points": len(branch.points),
        "types": sorted({p.kind for p in branch.points}),
        "morse": [p.morse for p in branch.points],
        "zeros_flagged": [p.zeros_flagged for p in branch.points],
        "sigma_hat": branch.sigma_hat,
        "sigma_stderr": branch.fit_stderr,
        "sigma_analytic": analytic_sigma(branch.alpha_target),
        "ratio_limit_observed": ratios[0]["ratio"] if ratios else None,
        "ratio_limit_expected": expected_ratio(branch.alpha_target),
        "truncated": branch.truncated,
        "message": branch.message,
    }
