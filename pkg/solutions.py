# solutions.py — Positive, nodal and mountain-pass solutions for nodal-lab

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp

from config import (
    DEDUP_TOL_FACTOR,
    DEBUG_MODE,
    DUMBBELL_CHANNEL_CELLS,
    DUMBBELL_H,
    ENDPOINT_TOL_FACTOR,
    MEMBERSHIP_EPS,
    MP_EPS_FACTOR,
    MP_IMAGES,
    MP_SEGMENT_IMAGES,
    NEWTON_BASIN,
    NEWTON_TOL,
    PATH_TOL_FACTOR,
    POSITIVE_START_AMPLITUDE,
    SADDLE_TOL_FACTOR,
    SEED_AMPLITUDE,
    SEED_ANGLES,
    STRING_CLIMB_AFTER,
    STRING_IMAGES,
    STRING_MAX_ITER,
    STRING_PERTURBATION,
    THREADS,
    log
)
from flow import (
    FlowConfig,
    NewtonError,
    SolveReport,
    energy,
    flow_to_equilibrium,
    newton_refine,
    residual_norm,
)
from grid import (
    DomainSpec,
    GridError,
    Mesh,
    ScalarField,
    build_mesh,
    extend_by_zero,
    neg_laplacian,
    reflection_permutation,
    reflection_side,
    submesh,
)
from linalg import FactorizedOperator, count_negative_eigs, inf_norm, shifted, smallest_eigs
from nonlinearity import NonlinearitySpec
from symmetry import EigenspaceBasis, SymmetryProjector, detect_invariances, second_eigenspace


class SolutionError(Exception):
    """A solve failed; `report` holds the offending SolveReport when there is one."""

    def __init__(self, message: str, report: SolveReport | None = None):
        super().__init__(message)
        self.report = report


class CrossValidationError(SolutionError):
    pass


class MountainPassError(SolutionError):
    pass


class DumbbellError(SolutionError):
    pass


class SaddleSearchError(Exception):
    """String method gave up; `estimate` is the last PathEstimate."""

    def __init__(self, message: str, estimate: "PathEstimate | None" = None):
        super().__init__(message)
        self.estimate = estimate


# ==============================================================================
# RESULT TYPES
# ==============================================================================

@dataclass
class NodalCatalog:
    entries: list[SolveReport]
    c_nod: float | None
    best_index: int | None
    failures: list[dict] = field(default_factory=list)
    seeds_tried: int = 0

    @property
    def best(self) -> SolveReport | None:
        return None if self.best_index is None else self.entries[self.best_index]

    def __len__(self) -> int:
        return len(self.entries)


@dataclass
class PathEstimate:
    images: list[ScalarField]
    energies: list[float]
    max_energy: float
    argmax: int
    method: str
    certificate: bool | None = None
    reference_energy: float | None = None
    diagnostics: dict = field(default_factory=dict)

    def summary(self) -> dict:
        return {
            "method": self.method,
            "max_energy": self.max_energy,
            "argmax": self.argmax,
            "n_images": len(self.images),
            "certificate": self.certificate,
            "reference_energy": self.reference_energy,
        }


# ==============================================================================
# SOLVE PIPELINE
# ==============================================================================

def first_eigenfunction(mesh: Mesh) -> tuple[float, ScalarField]:
    """lambda_1^h and the positive first eigenvector scaled to sup norm 1."""
    pair = smallest_eigs(neg_laplacian(mesh), 1)[0]
    v = np.abs(pair.vector)
    return pair.value, ScalarField(mesh, v / np.max(v))


def solve_from_seed(seed: ScalarField, spec: NonlinearitySpec, cfg: FlowConfig | None = None,
                    projector=None) -> SolveReport:
    """
    Flow from `seed`; for C^1 families hand over to Newton once the residual
    enters the basin NEWTON_BASIN, otherwise flow all the way to residual_tol.
    """

    cfg = cfg or FlowConfig()
    tol = cfg.resolve_residual_tol(seed.mesh.M)

    if not spec.is_c1:
        return flow_to_equilibrium(seed, spec, cfg, projector=projector)

    basin_cfg = replace(cfg, residual_tol=max(tol, NEWTON_BASIN))
    rep = flow_to_equilibrium(seed, spec, basin_cfg, projector=projector)
    if not rep.converged:
        return rep

    try:
        ref = newton_refine(rep.field, spec, tol=min(tol, NEWTON_TOL), projector=projector)
    except NewtonError as e:
        log(f"Newton refinement failed ({e}); continuing with the flow")
        rest = flow_to_equilibrium(rep.field, spec, cfg, projector=projector)
        rest.steps += rep.steps
        rest.energy_trace = rep.energy_trace + rest.energy_trace[1:]
        rest.diagnostics["newton_error"] = str(e)
        return rest

    newton_steps = ref.steps
    ref.steps = rep.steps + newton_steps
    ref.energy_trace = rep.energy_trace
    ref.converged = ref.residual <= tol
    ref.diagnostics = {
        **rep.diagnostics,
        **ref.diagnostics,
        "flow_steps": rep.steps,
        "newton_steps": newton_steps,
    }
    return ref


# ==============================================================================
# POSITIVE SOLUTION
# ==============================================================================

def positive_solution(mesh: Mesh, spec: NonlinearitySpec, cfg: FlowConfig | None = None) -> SolveReport:
    """
    The positive solution w from a small multiple of phi_1, cross-checked
    against a second start four times larger (capped at s_f).
    """

    cfg = cfg or FlowConfig()
    tol = cfg.resolve_residual_tol(mesh.M)
    s_cap = spec.s_f or 1.0

    lam1, phi1 = first_eigenfunction(mesh)
    if spec.family == "allen_cahn" and spec.lam <= lam1:
        log(f"WARNING: lambda={spec.lam:g} <= lambda1h={lam1:.6g}; only the zero solution is expected")

    amp = POSITIVE_START_AMPLITUDE * min(1.0, s_cap)
    seed = phi1 * amp

    log(f"=== Positive solution on {mesh.domain.kind} (M={mesh.M}) ===")
    rep = solve_from_seed(seed, spec, cfg)
    if not rep.converged:
        raise SolutionError(f"Positive-solution flow did not converge: {rep.message}", report=rep)

    if rep.sign_class == "zero":
        log("Positive-solution flow decayed to zero")
        return rep
    if rep.sign_class != "positive" or float(np.min(rep.field.values)) <= 0:
        raise SolutionError(
            f"Positive-solution flow ended {rep.sign_class}, min value {float(np.min(rep.field.values)):.3e}",
            report=rep,
        )

    seed2 = seed.with_values(np.minimum(s_cap, 4.0 * seed.values))
    rep2 = solve_from_seed(seed2, spec, cfg)
    diff = float(np.max(np.abs(rep.field.values - rep2.field.values)))
    rep.diagnostics["cross_validation"] = diff
    rep.diagnostics["lambda1h"] = lam1

    if not rep2.converged or diff > 10 * tol:
        raise CrossValidationError(
            f"Second start disagrees by {diff:.3e} in sup norm (limit {10 * tol:.3e}); "
            "the discretization may be too coarse",
            report=rep,
        )

    log(f"Positive solution: energy={rep.energy:.10g}, sup={rep.field.sup_norm():.6g}, cross-check {diff:.2e}")
    return rep


# ==============================================================================
# MORSE INDEX
# ==============================================================================

def linearization(u: ScalarField, spec: NonlinearitySpec):
    """A - diag f'(u)."""
    spec.require_c1()
    return shifted(neg_laplacian(u.mesh), spec.untruncated().fprime(u.values))


def morse_index(u: SolveReport | ScalarField, spec: NonlinearitySpec,
                zero_band: float | None = None) -> dict:
    field_ = u.field if isinstance(u, SolveReport) else u
    counts = count_negative_eigs(linearization(field_, spec), zero_band)
    result = {"index": counts["negatives"], "zeros_flagged": counts["zeros_flagged"]}
    log(f"Morse index {result['index']} (zeros flagged {result['zeros_flagged']})")
    return result


# ==============================================================================
# NODAL SEARCH
# ==============================================================================

def default_seeds(basis: EigenspaceBasis, spec: NonlinearitySpec) -> list[ScalarField]:
    """+/- eps (cos a psi1 + sin a psi2) for a = k pi / SEED_ANGLES."""
    amp = SEED_AMPLITUDE * min(1.0, spec.s_f or 1.0)
    seeds = []
    for k in range(SEED_ANGLES):
        phi = basis.phi_alpha(k * math.pi / SEED_ANGLES)
        phi = phi * (amp / phi.sup_norm())
        seeds.extend([phi, -phi])
    return seeds


def _same_solution(u: ScalarField, v: ScalarField, tol: float) -> bool:
    a, b = u.values, v.values
    return float(np.max(np.abs(a - b))) < tol or float(np.max(np.abs(a + b))) < tol


def nodal_search(mesh: Mesh, spec: NonlinearitySpec, seeds: list[ScalarField] | None = None,
                 cfg: FlowConfig | None = None, basis: EigenspaceBasis | None = None,
                 extra_seeds: list[ScalarField] | None = None) -> NodalCatalog:
    """
    Flows every seed inside the symmetry class it starts in, keeps the nodal
    equilibria and merges sign pairs and duplicates. c_nod is the least
    energy found.
    """

    cfg = cfg or FlowConfig()
    if seeds is None:
        basis = basis or second_eigenspace(mesh)
        seeds = default_seeds(basis, spec)
    seeds = list(seeds) + list(extra_seeds or [])

    log(f"=== Nodal search: {len(seeds)} seeds, {THREADS} worker(s) ===")

    def solve(i: int) -> tuple[int, SolveReport | None, str | None]:
        seed = seeds[i]
        try:
            generators = detect_invariances(seed)
            projector = SymmetryProjector(mesh, generators)
            rep = solve_from_seed(seed, spec, cfg, projector=projector)
            rep.diagnostics["seed"] = i
            rep.diagnostics["symmetry"] = [f"{s}{'+' if p > 0 else '-'}" for s, p in generators]
            return i, rep, None
        except Exception as e:
            log(f"ERROR: seed {i} failed: {e}")
            return i, None, str(e)

    with ThreadPoolExecutor(max_workers=THREADS) as pool:
        results = list(pool.map(solve, range(len(seeds))))

    failures = []
    candidates = []
    for i, rep, err in results:
        if rep is None:
            failures.append({"seed": i, "error": err})
            continue
        if not rep.converged:
            failures.append({"seed": i, "error": rep.message})
            continue
        if DEBUG_MODE:
            log(f"  seed {i}: {rep.sign_class}, energy={rep.energy:.10g}")
        if rep.sign_class == "nodal":
            candidates.append(rep)

    candidates.sort(key=lambda r: (r.energy, r.diagnostics["seed"]))
    entries: list[SolveReport] = []
    for rep in candidates:
        tol = DEDUP_TOL_FACTOR * rep.field.sup_norm()
        if not any(_same_solution(rep.field, e.field, tol) for e in entries):
            entries.append(rep)

    if not entries:
        log("Nodal search: no nodal equilibria found")
        return NodalCatalog([], None, None, failures, len(seeds))

    catalog = NodalCatalog(entries, entries[0].energy, 0, failures, len(seeds))
    log(f"Nodal search: {len(entries)} distinct nodal solution(s), c_nod={catalog.c_nod:.10g}")
    return catalog


# ==============================================================================
# CONSTRUCTIVE MOUNTAIN-PASS PATH
# ==============================================================================

class _Recorder:
    """Keeps at most 2n evenly strided snapshots of a trajectory."""

    def __init__(self, n: int, target: np.ndarray, tol: float):
        self.n = n
        self.stride = 1
        self.snapshots: list[np.ndarray] = []
        self.targets = (target, -target)
        self.tol = tol
        self.reached: int = 0

    def __call__(self, step: int, x: np.ndarray) -> bool:
        recorded = step % self.stride == 0
        if recorded:
            self.snapshots.append(x.copy())
            if len(self.snapshots) > 2 * self.n:
                self.snapshots = self.snapshots[::2]
                self.stride *= 2
        for sign, t in zip((1, -1), self.targets):
            if float(np.max(np.abs(x - t))) <= self.tol:
                self.reached = sign
                if not recorded:
                    self.snapshots.append(x.copy())
                return True
        return False


def _pick(n: int, total: int, keep: int) -> list[int]:
    idx = set(np.linspace(0, total - 1, n).round().astype(int).tolist())
    idx.add(keep)
    return sorted(idx)


def constructive_mp_path(u_nodal: SolveReport | ScalarField, w: SolveReport | ScalarField,
                         spec: NonlinearitySpec, cfg: FlowConfig | None = None,
                         eps: float | None = None, n_images: int = MP_IMAGES) -> PathEstimate:
    """
    Path -w ... u - eps phi, [u - eps phi, u + eps phi], u + eps phi ... w,
    with phi the first eigenvector of the linearization at u and the outer
    pieces flow trajectories. Certifies c_mp = c_nod when the path maximum
    stays within path_tol of I(u).
    """

    cfg = cfg or FlowConfig()
    u = u_nodal.field if isinstance(u_nodal, SolveReport) else u_nodal
    wf = w.field if isinstance(w, SolveReport) else w
    mesh = u.mesh
    flow_spec = spec.for_flow()

    J = linearization(u, spec)
    band = 1e-7 * inf_norm(J)
    pair = smallest_eigs(J, 1)[0]
    if pair.value >= -band:
        raise MountainPassError(
            f"Linearization has no negative eigenvalue (lowest {pair.value:.3e}); u is not of saddle type"
        )

    phi = pair.vector / float(np.max(np.abs(pair.vector)))
    if np.sum(phi) < 0:
        phi = -phi

    eps = MP_EPS_FACTOR * u.sup_norm() if eps is None else eps
    endpoint_tol = ENDPOINT_TOL_FACTOR * wf.sup_norm()
    e_u = energy(u, flow_spec)

    log(f"=== Constructive MP path: mu1={pair.value:.6g}, eps={eps:.3e}, I(u)={e_u:.10g} ===")

    segment = [u.with_values(u.values + s * phi) for s in np.linspace(-eps, eps, MP_SEGMENT_IMAGES)]
    seg_energies = [energy(img, flow_spec) for img in segment]
    max_energy = max(seg_energies)

    branches = {}
    for sign in (-1, 1):
        start = segment[0] if sign < 0 else segment[-1]
        rec = _Recorder(n_images, wf.values, endpoint_tol)
        rep = flow_to_equilibrium(start, spec, cfg, observer=rec)
        max_energy = max(max_energy, max(rep.energy_trace))
        if not rec.reached and rep.converged:
            rec(rep.steps, rep.field.values)

        if not rec.reached:
            raise MountainPassError(
                f"Trajectory from u{'+' if sign > 0 else '-'}eps*phi ended as {rep.sign_class} "
                f"({rep.message}) away from +/-w",
                report=rep,
            )
        branches[sign] = (rec.reached, rec.snapshots)

    if branches[-1][0] == branches[1][0]:
        end = "w" if branches[1][0] > 0 else "-w"
        raise MountainPassError(f"Both trajectories reached {end}; the path does not join -w to w")

    lower = -1 if branches[-1][0] < 0 else 1
    upper = -lower
    low_traj = branches[lower][1]
    up_traj = branches[upper][1]
    seg = segment if lower == -1 else segment[::-1]

    images = [u.with_values(-wf.values)]
    images += [u.with_values(x) for x in reversed(low_traj)]
    images += seg
    images += [u.with_values(x) for x in up_traj]
    images.append(wf)

    energies = [energy(img, flow_spec) for img in images]
    top = int(np.argmax(energies))
    chosen = _pick(n_images, len(images), top)
    images = [images[i] for i in chosen]
    energies = [energies[i] for i in chosen]
    max_energy = max(max_energy, max(energies))
    argmax = int(np.argmax(energies))

    path_tol = PATH_TOL_FACTOR * abs(e_u)
    certificate = max_energy <= e_u + path_tol

    est = PathEstimate(
        images=images,
        energies=energies,
        max_energy=max_energy,
        argmax=argmax,
        method="constructive",
        certificate=certificate,
        reference_energy=e_u,
        diagnostics={"eps": eps, "mu1": pair.value, "path_tol": path_tol, "endpoint_tol": endpoint_tol},
    )
    log(f"Constructive path: max energy {max_energy:.10g} vs I(u) {e_u:.10g}, certificate={certificate}")
    return est


# ==============================================================================
# STRING METHOD
# ==============================================================================

def _reparametrize(X: np.ndarray, lo: int, hi: int):
    """Equal l2 arclength for images lo..hi, ends fixed."""
    seg = X[lo:hi + 1]
    d = np.linalg.norm(np.diff(seg, axis=0), axis=1)
    L = np.concatenate([[0.0], np.cumsum(d)])
    if L[-1] <= 0:
        raise SaddleSearchError("String collapsed: zero arclength")
    targets = np.linspace(0.0, L[-1], len(seg))
    out = seg.copy()
    for j in range(1, len(seg) - 1):
        k = int(np.clip(np.searchsorted(L, targets[j], side="right") - 1, 0, len(d) - 1))
        frac = (targets[j] - L[k]) / d[k] if d[k] > 0 else 0.0
        out[j] = seg[k] + frac * (seg[k + 1] - seg[k])
    X[lo:hi + 1] = out


def string_saddle(mesh: Mesh, spec: NonlinearitySpec, cfg: FlowConfig | None = None,
                  n_images: int = STRING_IMAGES, w: SolveReport | ScalarField | None = None,
                  direction: ScalarField | None = None, saddle_tol: float | None = None,
                  c_nod: float | None = None,
                  max_iter: int = STRING_MAX_ITER, perturbation: float = STRING_PERTURBATION,
                  climb_after: int = STRING_CLIMB_AFTER) -> PathEstimate:
    """
    String from -w to w, bent by perturbation * ||w||_inf * sin(pi t) along
    `direction` (default: the nodal mode of the second eigenspace). Each
    iteration moves interior images one flow step and restores equal
    arclength. Once the string settles the highest image climbs: its step
    component along the tangent is reversed in the (A + kappa I) metric.
    Stops when that image's residual is below saddle_tol, 1e-3 |c_nod| by
    default. The highest image must have Morse index 1.
    """

    cfg = cfg or FlowConfig()
    if n_images < 5:
        raise ValueError(f"String needs at least 5 images, got {n_images}")

    if w is None:
        w = positive_solution(mesh, spec, cfg)
    wf = w.field if isinstance(w, SolveReport) else w
    if wf.sup_norm() == 0:
        raise SaddleSearchError("Positive solution is zero; there is no path to search")

    if direction is None:
        direction = second_eigenspace(mesh).nodal_mode
    psi = direction.values / max(direction.sup_norm(), 1e-300)

    flow_spec = spec.for_flow()
    kappa = cfg.resolve_kappa(flow_spec)
    A = neg_laplacian(mesh)
    Ak = (A + kappa * sp.identity(mesh.M, format="csr")).tocsr()
    solver = FactorizedOperator(Ak)
    h, h2 = mesh.h, mesh.h ** 2

    e_w = energy(wf, flow_spec)
    if saddle_tol is None:
        if c_nod is None:
            log("String method: no c_nod given, saddle_tol taken from I(w)")
        saddle_tol = SADDLE_TOL_FACTOR * abs(e_w if c_nod is None else c_nod)

    t = np.linspace(0.0, 1.0, n_images)
    X = np.outer(2 * t - 1, wf.values) + perturbation * wf.sup_norm() * np.outer(np.sin(np.pi * t), psi)
    X[0], X[-1] = -wf.values, wf.values

    def energies(Y: np.ndarray) -> np.ndarray:
        AY = (A @ Y.T).T
        return h2 * (0.5 * np.sum(Y * AY, axis=1) - np.sum(flow_spec.F(Y), axis=1))

    def estimate(E: np.ndarray, climbing: bool, it: int, res: float) -> PathEstimate:
        top = int(np.argmax(E))
        return PathEstimate(
            images=[ScalarField(mesh, x) for x in X],
            energies=[float(e) for e in E],
            max_energy=float(E[top]),
            argmax=top,
            method="string",
            diagnostics={"iterations": it, "climbing": climbing, "residual": res,
                         "saddle_tol": saddle_tol, "kappa": kappa},
        )

    log(f"=== String method: {n_images} images, saddle_tol={saddle_tol:.3e} ===")

    climbing = False
    res = math.inf
    E = energies(X)
    for it in range(max_iter + 1):
        E = energies(X)
        c = 1 + int(np.argmax(E[1:-1]))
        R = A @ X[c] - flow_spec.f(X[c])
        tangent = X[c + 1] - X[c - 1]
        tn = float(np.linalg.norm(tangent))
        if not np.isfinite(tn) or tn == 0.0:
            raise SaddleSearchError("String collapsed at the highest image", estimate=estimate(E, climbing, it, res))
        that = tangent / tn

        if climbing:
            res = float(h * np.linalg.norm(R))
            if res <= saddle_tol:
                break
        else:
            perp = R - np.dot(R, that) * that
            res = float(h * np.linalg.norm(perp))
            if res <= saddle_tol or it >= climb_after:
                climbing = True
                log(f"String settled at iteration {it} (perp residual {res:.3e}); climbing image {c}")
                continue

        if it == max_iter:
            raise SaddleSearchError(
                f"String method: residual {res:.3e} above {saddle_tol:.3e} after {max_iter} iterations",
                estimate=estimate(E, climbing, it, res),
            )

        inner = X[1:-1]
        B = flow_spec.f(inner) + kappa * inner
        D = solver.solve(B.T).T - inner

        if climbing:
            k = c - 1
            At = Ak @ tangent
            D[k] = D[k] - 2.0 * (np.dot(D[k], At) / np.dot(tangent, At)) * tangent

        X[1:-1] = inner + cfg.tau * D

        if climbing:
            _reparametrize(X, 0, c)
            _reparametrize(X, c, n_images - 1)
        else:
            _reparametrize(X, 0, n_images - 1)

        if not np.all(np.isfinite(X)):
            raise SaddleSearchError("String diverged (non-finite images)")

        if DEBUG_MODE and it % 100 == 0:
            log(f"  string {it}: max energy {float(np.max(E)):.10g} at image {c}, residual {res:.3e}")

    E = energies(X)
    est = estimate(E, climbing, it, res)
    est.reference_energy = e_w if c_nod is None else c_nod

    if spec.is_c1:
        top = count_negative_eigs(linearization(est.images[est.argmax], spec))
        est.diagnostics["top_morse"] = top["negatives"]
        est.diagnostics["top_zeros_flagged"] = top["zeros_flagged"]
        if top["negatives"] != 1:
            raise SaddleSearchError(
                f"String method: highest image has Morse index {top['negatives']}, not 1; "
                "the transverse direction did not break the symmetry",
                estimate=est,
            )
    log(f"String method: saddle estimate {est.max_energy:.10g} after {it} iterations (residual {res:.3e})")
    return est


# ==============================================================================
# ODD EXTENSION
# ==============================================================================

def odd_extension_solution(mesh: Mesh, spec: NonlinearitySpec, axis: str = "y_axis",
                           cfg: FlowConfig | None = None) -> SolveReport:
    """
    Positive solution of the half mesh on the positive side of `axis`,
    extended oddly. Axis nodes are zero, so the glued field is an
    equilibrium of the full problem.
    """

    side = reflection_side(mesh, axis)
    keep = np.zeros((mesh.ny, mesh.nx), dtype=bool)
    keep[mesh.mask] = side > 0
    half = submesh(mesh, keep, region=f"half:{axis}")

    log(f"=== Odd extension across {axis}: half mesh M={half.M} ===")
    w_half = positive_solution(half, spec, cfg)
    if w_half.sign_class == "zero":
        raise SolutionError("Half-domain positive solution is zero; lambda is below the half-domain threshold",
                            report=w_half)

    ext = extend_by_zero(w_half.field, mesh).values
    perm = reflection_permutation(mesh, axis)
    seed = ScalarField(mesh, ext - ext[perm])

    projector = SymmetryProjector(mesh, [(axis, -1)])
    rep = solve_from_seed(seed, spec, cfg, projector=projector)
    rep.diagnostics["glued_residual"] = residual_norm(seed, spec.untruncated())
    rep.diagnostics["half_energy"] = w_half.energy
    return rep


# ==============================================================================
# DUMBBELL
# ==============================================================================

def _lobe_mask(mesh: Mesh, center_x: float, radius: float) -> np.ndarray:
    slack = MEMBERSHIP_EPS * mesh.h
    return (mesh.X - center_x) ** 2 + mesh.Y ** 2 < (radius - slack) ** 2


def _energy_norm(mesh: Mesh, d: np.ndarray) -> float:
    return math.sqrt(max(mesh.h ** 2 * float(np.dot(d, neg_laplacian(mesh) @ d)), 0.0))


def dumbbell_experiment(lobe_r: float, delta: float, channel_len: float, spec: NonlinearitySpec,
                        cfg: FlowConfig | None = None, h: float | None = None,
                        string_images: int = STRING_IMAGES) -> dict:
    """
    Seeds W = w1 - w2 from the lobe solutions, flows it to u_W and compares
    I(u_W) with the string estimate of c_mp on the whole dumbbell. The grid
    puts at least DUMBBELL_CHANNEL_CELLS spacings across the channel; h
    defaults to min(DUMBBELL_H, delta / DUMBBELL_CHANNEL_CELLS).
    """

    cfg = cfg or FlowConfig()
    dom = DomainSpec.dumbbell(lobe_r, delta, channel_len)
    h_max = delta / DUMBBELL_CHANNEL_CELLS
    if h is None:
        h = min(DUMBBELL_H, h_max)
    elif h > h_max * (1 + 1e-12):
        raise GridError(
            f"h={h:g} does not resolve channel width {delta:g}: need h <= delta/{DUMBBELL_CHANNEL_CELLS} = {h_max:g}"
        )
    mesh = build_mesh(dom, h)
    c = dom.lobe_offset

    log(f"=== Dumbbell experiment: r={lobe_r}, delta={delta}, length={channel_len}, h={h} ===")

    w = positive_solution(mesh, spec, cfg)
    if w.sign_class != "positive":
        raise DumbbellError("Positive solution on the dumbbell is zero", report=w)

    left = submesh(mesh, _lobe_mask(mesh, -c, lobe_r), region="left_lobe")
    right = submesh(mesh, _lobe_mask(mesh, c, lobe_r), region="right_lobe")
    w1 = positive_solution(left, spec, cfg)
    w2 = positive_solution(right, spec, cfg)
    if "zero" in (w1.sign_class, w2.sign_class):
        raise DumbbellError("A lobe positive solution is zero; lambda is too small for the lobes")

    W = extend_by_zero(w1.field, mesh) - extend_by_zero(w2.field, mesh)
    u_w = solve_from_seed(W, spec, cfg)
    if not u_w.converged:
        raise DumbbellError(f"W-flow did not converge: {u_w.message}", report=u_w)
    if u_w.sign_class != "nodal":
        raise DumbbellError(f"W-flow lost its sign change (ended {u_w.sign_class}); delta too large", report=u_w)

    morse = morse_index(u_w, spec)
    saddle = string_saddle(mesh, spec, cfg, n_images=string_images, w=w, c_nod=u_w.energy)
    gap = saddle.max_energy - u_w.energy

    d_plus = u_w.field.values - w.field.values
    d_minus = u_w.field.values + w.field.values
    distances = {
        "l2_to_w": mesh.h * float(np.linalg.norm(d_plus)),
        "l2_to_minus_w": mesh.h * float(np.linalg.norm(d_minus)),
        "energy_norm_to_w": _energy_norm(mesh, d_plus),
        "energy_norm_to_minus_w": _energy_norm(mesh, d_minus),
    }

    log(f"Dumbbell delta={delta}: I(u_W)={u_w.energy:.10g}, c_mp_est={saddle.max_energy:.10g}, gap={gap:.4g}")
    return {
        "delta": delta,
        "h": mesh.h,
        "c_nod": u_w.energy,
        "c_mp_est": saddle.max_energy,
        "gap": gap,
        "morse": morse,
        "saddle_morse": saddle.diagnostics.get("top_morse"),
        "distances": distances,
        "mesh": mesh,
        "reports": {"w": w, "w_lobes": (w1, w2), "u_W": u_w, "saddle": saddle},
    }


def dumbbell_scan(lobe_r: float, deltas: list[float], channel_len: float, spec: NonlinearitySpec,
                  cfg: FlowConfig | None = None, h: float | None = None,
                  string_images: int = STRING_IMAGES) -> dict:
    """Runs the experiment for decreasing delta; selects the smallest delta with a nodal W-limit."""

    results = []
    failures = []
    for delta in sorted(deltas, reverse=True):
        try:
            results.append(dumbbell_experiment(lobe_r, delta, channel_len, spec, cfg, h, string_images))
        except (SolutionError, SaddleSearchError, GridError, NewtonError) as e:
            log(f"ERROR: dumbbell delta={delta} failed: {e}")
            failures.append({"delta": delta, "error": str(e), "kind": type(e).__name__})

    selected = min(results, key=lambda r: r["delta"]) if results else None
    return {"results": results, "failures": failures, "selected": selected}
