# symmetry.py — Second eigenspace, polarization and symmetry diagnostics for nodal-lab

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage
from scipy.interpolate import RegularGridInterpolator

from config import (
    ANGLE_TOL_DEG,
    EIG_TOL,
    FSS_TOL,
    POLAR_NR,
    POLAR_NTHETA,
    REMAINDER_LIMIT,
    SIGN_FLOOR_FACTOR,
    SYMMETRY_DETECT_TOL,
    SYMMETRY_TAG_TOL,
    ZERO_BAND_FACTOR,
    log
)
from grid import (
    SYMMETRIES,
    Mesh,
    ScalarField,
    inner_l2,
    is_symmetric,
    neg_laplacian,
    norm_l2,
    reflect,
    reflection_permutation,
    reflection_side,
)
from linalg import inf_norm, smallest_eigs


class SymmetryError(Exception):
    pass


class UnreliableProjectionError(Exception):
    """The field is mostly outside the second eigenspace."""
    pass


# ==============================================================================
# SECOND EIGENSPACE
# ==============================================================================

@dataclass(frozen=True, eq=False)
class EigenspaceBasis:
    """
    (psi1, psi2) span the eigenspace of the second Dirichlet eigenvalue,
    orthonormal in inner_l2. On squares psi1 is the discrete sin x sin 2y and
    psi2 the discrete sin 2x sin y; elsewhere psi1 follows the x direction.
    """

    mesh: Mesh
    eigenvalue: float
    basis: tuple[ScalarField, ScalarField]
    third_eigenvalue: float
    lambda1: float
    phi1: ScalarField
    degenerate: bool
    aligned: bool

    @property
    def psi1(self) -> ScalarField:
        return self.basis[0]

    @property
    def psi2(self) -> ScalarField:
        return self.basis[1]

    @property
    def nodal_mode(self) -> ScalarField:
        """Transverse direction for strings: psi2 on a degenerate pair, else the lambda_2 mode psi1."""
        return self.psi2 if self.degenerate else self.psi1

    def phi_alpha(self, alpha: float) -> ScalarField:
        """cos(alpha) psi1 + sin(alpha) psi2, unit in inner_l2."""
        return self.psi1 * math.cos(alpha) + self.psi2 * math.sin(alpha)


def _unit(mesh: Mesh, v: np.ndarray) -> ScalarField:
    u = ScalarField(mesh, v)
    n = norm_l2(u)
    if n == 0:
        raise SymmetryError("Cannot normalize a zero vector")
    return u * (1.0 / n)


def _sign_fix(u: ScalarField, refs: list[ScalarField]) -> ScalarField:
    for ref in refs:
        c = inner_l2(u, ref)
        if abs(c) > 1e-8 * norm_l2(ref):
            return u if c > 0 else -u
    return u


def second_eigenspace(mesh: Mesh, eig_tol: float = EIG_TOL) -> EigenspaceBasis:
    A = neg_laplacian(mesh)
    if mesh.M < 3:
        raise SymmetryError(f"Mesh has {mesh.M} interior node(s); the second eigenspace needs at least 3")

    pairs = smallest_eigs(A, min(mesh.M, 4), eig_tol)
    mu = [p.value for p in pairs]
    band = ZERO_BAND_FACTOR * inf_norm(A)
    v0, v1 = pairs[0].vector, pairs[1].vector

    floor = SIGN_FLOOR_FACTOR * float(np.max(np.abs(v0)))
    mixed = float(np.min(v0)) < -floor and float(np.max(v0)) > floor
    if mu[1] - mu[0] <= band or mixed:
        # nearly decoupled subdomains: the solver may return any basis of the
        # bottom pair, the ground mode is the part carrying the mean
        c0, c1 = float(np.sum(v0)), float(np.sum(v1))
        r = math.hypot(c0, c1)
        if r > 0:
            v0, v1 = (c0 * v0 + c1 * v1) / r, (c1 * v0 - c0 * v1) / r
            mu[0] = float(v0 @ (A @ v0)) / float(v0 @ v0)
            mu[1] = float(v1 @ (A @ v1)) / float(v1 @ v1)
            log(f"Bottom eigenpair split by {pairs[1].value - pairs[0].value:.3e}; ground mode taken as the mean-carrying combination")

    degenerate = abs(mu[2] - mu[1]) <= band

    phi1 = _unit(mesh, v0)
    if np.sum(phi1.values) < 0:
        phi1 = -phi1

    a = _unit(mesh, v1)
    b = _unit(mesh, pairs[2].vector)

    x, y = mesh.coords
    aligned = False

    if mesh.domain.kind == "square":
        k = math.pi / mesh.domain.side
        t1 = ScalarField(mesh, np.sin(k * x) * np.sin(2 * k * y))
        t2 = ScalarField(mesh, np.sin(2 * k * x) * np.sin(k * y))
    else:
        xc, yc = mesh.center
        t1 = ScalarField(mesh, x - xc)
        t2 = ScalarField(mesh, y - yc)

    if degenerate:
        c1, c2 = inner_l2(t1, a), inner_l2(t1, b)
        if math.hypot(c1, c2) > 1e-8 * norm_l2(t1):
            psi1 = _unit(mesh, (a * c1 + b * c2).values)
            psi2 = _unit(mesh, (b * c1 - a * c2).values)
            psi2 = _sign_fix(psi2, [t2])
            aligned = mesh.domain.kind == "square"
        else:
            psi1, psi2 = _sign_fix(a, [t1, t2]), _sign_fix(b, [t2, t1])
    else:
        psi1, psi2 = _sign_fix(a, [t1, t2]), _sign_fix(b, [t2, t1])

    basis = EigenspaceBasis(
        mesh=mesh,
        eigenvalue=mu[1],
        basis=(psi1, psi2),
        third_eigenvalue=mu[2],
        lambda1=mu[0],
        phi1=phi1,
        degenerate=degenerate,
        aligned=aligned,
    )
    log(
        f"Second eigenspace ({mesh.domain.kind}, M={mesh.M}): lambda1h={mu[0]:.8g}, "
        f"lambda2h={mu[1]:.8g}, next={mu[2]:.8g}, degenerate={degenerate}"
    )
    return basis


def project_E2(u: ScalarField, basis: EigenspaceBasis) -> dict:
    if u.mesh is not basis.mesh:
        raise SymmetryError("project_E2: field and basis live on different meshes")
    c1 = inner_l2(u, basis.psi1)
    c2 = inner_l2(u, basis.psi2)
    projection = basis.psi1 * c1 + basis.psi2 * c2
    return {
        "coeffs": (c1, c2),
        "projection": projection,
        "remainder_norm": norm_l2(u - projection),
    }


def classify_square_branch(u: ScalarField, basis: EigenspaceBasis,
                           angle_tol_deg: float = ANGLE_TOL_DEG) -> dict:
    """
    alpha = atan2(c2, c1) mod pi in the analytic alignment; type M near
    0 or pi/2 (midline nodal set), D near pi/4 or 3pi/4 (diagonal).
    """

    if not basis.aligned:
        raise SymmetryError("Branch classification needs a square mesh with an aligned eigenbasis")

    proj = project_E2(u, basis)
    unorm = norm_l2(u)
    if unorm == 0 or proj["remainder_norm"] > REMAINDER_LIMIT * unorm:
        raise UnreliableProjectionError(
            f"E2 remainder {proj['remainder_norm']:.3e} exceeds {REMAINDER_LIMIT} of ||u|| = {unorm:.3e}"
        )

    c1, c2 = proj["coeffs"]
    alpha = math.atan2(c2, c1) % math.pi

    tol = math.radians(angle_tol_deg)

    def near(target: float) -> bool:
        d = abs(alpha - target) % math.pi
        return min(d, math.pi - d) <= tol

    if near(0.0) or near(math.pi / 2):
        kind = "M"
    elif near(math.pi / 4) or near(3 * math.pi / 4):
        kind = "D"
    else:
        kind = "other"

    return {"alpha": alpha, "type": kind, "remainder_norm": proj["remainder_norm"]}


# ==============================================================================
# INVARIANCES AND PROJECTOR
# ==============================================================================

def detect_invariances(u: ScalarField, rel_tol: float = SYMMETRY_DETECT_TOL) -> list[tuple[str, int]]:
    """(reflection, parity) pairs with u even (+1) or odd (-1) within rel_tol * ||u||_inf."""
    sup = u.sup_norm()
    found = []
    for sym in SYMMETRIES:
        if not is_symmetric(u.mesh, sym):
            continue
        r = reflect(u, sym).values
        if np.max(np.abs(r - u.values)) <= rel_tol * sup:
            found.append((sym, 1))
        elif np.max(np.abs(r + u.values)) <= rel_tol * sup:
            found.append((sym, -1))
    return found


class SymmetryProjector:
    """
    Orthogonal projector onto the fields satisfying every (reflection, parity)
    constraint: the average over the group of signed node permutations the
    constraints generate.
    """

    def __init__(self, mesh: Mesh, generators: list[tuple[str, int]]):
        self.mesh = mesh
        self.generators = list(generators)

        identity = (np.arange(mesh.M), 1)
        elements = {(identity[0].tobytes(), 1): identity}
        gens = [(reflection_permutation(mesh, sym), parity) for sym, parity in self.generators]

        frontier = [identity]
        while frontier:
            nxt = []
            for perm, sign in frontier:
                for gperm, gsign in gens:
                    # apply (perm, sign) then (gperm, gsign)
                    new = (perm[gperm], sign * gsign)
                    key = (new[0].tobytes(), new[1])
                    if key not in elements:
                        elements[key] = new
                        nxt.append(new)
            frontier = nxt

        perms = {}
        for perm, sign in elements.values():
            k = perm.tobytes()
            if k in perms and perms[k] != sign:
                raise SymmetryError(f"Inconsistent symmetry constraints {self.generators}: only zero satisfies them")
            perms[k] = sign

        self._elements = list(elements.values())

        # u[i] = sign[i] * u[rep[i]] on the image; sign 0 where the constraints force a zero
        P = np.stack([perm for perm, _ in self._elements])
        S = np.array([sign for _, sign in self._elements])[:, None]
        self._rep = P.min(axis=0)
        hit = P == self._rep
        pos = np.any(hit & (S > 0), axis=0)
        neg = np.any(hit & (S < 0), axis=0)
        self._sign = np.where(pos & neg, 0.0, np.where(pos, 1.0, -1.0))

    @property
    def size(self) -> int:
        return len(self._elements)

    def __call__(self, values: np.ndarray) -> np.ndarray:
        if len(self._elements) == 1:
            return values
        acc = np.zeros_like(values, dtype=float)
        for perm, sign in self._elements:
            acc += sign * values[perm]
        acc /= len(self._elements)
        return self._sign * acc[self._rep]


# ==============================================================================
# POLARIZATION
# ==============================================================================

def polarize(u: ScalarField, axis: str) -> ScalarField:
    """Pointwise max with the mirror image on the positive side, min on the other."""
    perm = reflection_permutation(u.mesh, axis)
    side = reflection_side(u.mesh, axis)
    v = u.values
    mirrored = v[perm]
    out = np.where(side > 0, np.maximum(v, mirrored), np.where(side < 0, np.minimum(v, mirrored), v))
    return u.with_values(out)


# ==============================================================================
# FOLIATED SCHWARZ CHECK
# ==============================================================================

@dataclass
class SymmetryReport:
    odd_axis: dict[str, float]
    axis: tuple[float, float]
    axis_deg: float
    axial_deviation: float
    odd_deviation: float
    monotonicity_violation: float
    min_angular_slope: float
    radial_variance: float
    is_foliated_schwarz: bool
    tol: float
    diagnostics: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {
            "odd_axis": dict(self.odd_axis),
            "axis": list(self.axis),
            "axis_deg": self.axis_deg,
            "axial_deviation": self.axial_deviation,
            "odd_deviation": self.odd_deviation,
            "monotonicity_violation": self.monotonicity_violation,
            "min_angular_slope": self.min_angular_slope,
            "radial_variance": self.radial_variance,
            "is_foliated_schwarz": self.is_foliated_schwarz,
            "tol": self.tol,
        }


def odd_axis_deviations(u: ScalarField) -> dict[str, float]:
    """||u + reflect(u)||_inf / ||u||_inf for every exact line reflection of the mesh."""
    sup = u.sup_norm() or 1.0
    out = {}
    for sym in ("x_axis", "y_axis", "diagonal", "anti_diagonal"):
        if is_symmetric(u.mesh, sym):
            out[sym] = float(np.max(np.abs(u.values + reflect(u, sym).values)) / sup)
    return out


def foliated_schwarz_check(u: ScalarField, n_r: int = POLAR_NR, n_theta: int = POLAR_NTHETA,
                           tol: float = FSS_TOL) -> SymmetryReport:
    """
    Resamples u bilinearly on a polar grid (boundary ring of 2h excluded),
    finds the axis from the angular mode 1 and measures symmetry about it and
    monotonicity in the angle. Deviations are relative to ||u||_inf; the
    monotonicity violation is the total increase on (0, pi) averaged over radii.
    """

    mesh = u.mesh
    dom = mesh.domain
    if not dom.is_radial:
        raise SymmetryError(f"Foliated Schwarz check needs a disk or annulus mesh, got {dom.kind}")
    if n_theta % 2 or n_theta < 8 or n_r < 2:
        raise ValueError("n_theta must be even and >= 8, n_r >= 2")

    sup = u.sup_norm()
    scale = sup if sup > 0 else 1.0
    h = mesh.h

    r_in = dom.inner if dom.kind == "annulus" else 0.0
    r_out = dom.outer if dom.kind == "annulus" else dom.radius
    if r_out - r_in <= 4 * h:
        raise SymmetryError("Domain too thin for polar resampling at this h")

    interp = RegularGridInterpolator(
        (mesh.Y[:, 0], mesh.X[0, :]), u.to_grid(fill=0.0),
        method="linear", bounds_error=False, fill_value=0.0,
    )

    radii = np.linspace(r_in + 2 * h, r_out - 2 * h, n_r)
    dtheta = 2 * math.pi / n_theta

    def sample(theta0: float) -> np.ndarray:
        theta = theta0 + dtheta * np.arange(n_theta)
        R, T = np.meshgrid(radii, theta, indexing="ij")
        pts = np.column_stack([(R * np.sin(T)).ravel(), (R * np.cos(T)).ravel()])
        return interp(pts).reshape(n_r, n_theta)

    U = sample(0.0)
    theta = dtheta * np.arange(n_theta)
    mode1 = np.mean(U * np.exp(-1j * theta)[None, :])
    theta0 = float(np.angle(mode1)) if abs(mode1) > 1e-12 * scale else 0.0

    V = sample(theta0)
    k = np.arange(n_theta)
    half = n_theta // 2

    axial = float(np.max(np.abs(V - V[:, (-k) % n_theta]))) / scale
    odd = float(np.max(np.abs(V + V[:, (half - k) % n_theta]))) / scale

    upper = V[:, : half + 1]
    steps = np.diff(upper, axis=1)
    violation = float(np.mean(np.sum(np.maximum(steps, 0.0), axis=1))) / scale
    slopes = -(upper[:, 2:] - upper[:, :-2]) / (2 * dtheta)
    min_slope = float(np.min(slopes)) / scale if slopes.size else 0.0

    radial_var = math.sqrt(float(np.mean(np.var(U, axis=1)))) / scale

    is_fss = axial <= tol and violation <= tol

    axis_deg = math.degrees(theta0) % 360.0
    if axis_deg >= 360.0 - 1e-9:
        axis_deg = 0.0

    report = SymmetryReport(
        odd_axis=odd_axis_deviations(u),
        axis=(math.cos(theta0), math.sin(theta0)),
        axis_deg=axis_deg,
        axial_deviation=axial,
        odd_deviation=odd,
        monotonicity_violation=violation,
        min_angular_slope=min_slope,
        radial_variance=radial_var,
        is_foliated_schwarz=bool(is_fss),
        tol=tol,
        diagnostics={"n_r": n_r, "n_theta": n_theta, "r_min": float(radii[0]), "r_max": float(radii[-1])},
    )
    log(
        f"FSS check: axis={report.axis_deg:.2f} deg, axial={axial:.3e}, odd={odd:.3e}, "
        f"violation={violation:.3e}, radial_var={radial_var:.3e}, fss={report.is_foliated_schwarz}"
    )
    return report


# ==============================================================================
# NODAL DOMAINS AND TAGS
# ==============================================================================

# 4-connectivity
_STRUCTURE_4 = np.array([[0, 1, 0],
                         [1, 1, 1],
                         [0, 1, 0]], dtype=int)


def nodal_domains(u: ScalarField, sign_floor: float | None = None) -> int:
    if sign_floor is None:
        sign_floor = SIGN_FLOOR_FACTOR * u.sup_norm()
    grid = u.to_grid(fill=0.0)
    _, n_pos = ndimage.label(grid > sign_floor, structure=_STRUCTURE_4)
    _, n_neg = ndimage.label(grid < -sign_floor, structure=_STRUCTURE_4)
    return int(n_pos + n_neg)


def symmetry_tags(u: ScalarField, tol: float = SYMMETRY_TAG_TOL) -> list[str]:
    """
    odd_x: odd under x -> -x about the mesh center; odd_y likewise in y;
    odd_diag: odd under either diagonal swap. Radial meshes add fss(axis=..)
    or radial from the polar check.
    """

    mesh = u.mesh
    dev = odd_axis_deviations(u)
    tags = []
    if dev.get("y_axis", math.inf) <= tol:
        tags.append("odd_x")
    if dev.get("x_axis", math.inf) <= tol:
        tags.append("odd_y")
    if min(dev.get("diagonal", math.inf), dev.get("anti_diagonal", math.inf)) <= tol:
        tags.append("odd_diag")

    if mesh.domain.is_radial and u.sup_norm() > 0:
        rep = foliated_schwarz_check(u)
        if rep.radial_variance <= rep.tol:
            tags.append("radial")
        elif rep.is_foliated_schwarz:
            tags.append(f"fss(axis={rep.axis_deg:.1f}°)")

    return tags or ["none"]
