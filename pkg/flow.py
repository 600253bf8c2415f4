# flow.py — Discrete descent flow, energy, K-map and Newton refinement for nodal-lab

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import MatrixRankWarning, spsolve

from config import (
    CG_TOL,
    DEBUG_MODE,
    FLOW_BACKTRACKING,
    FLOW_LOG_EVERY,
    FLOW_MAX_STEPS,
    FLOW_RESIDUAL_FACTOR,
    FLOW_TAU,
    MAX_BACKTRACK,
    NEWTON_MAX_DAMPED,
    NEWTON_STEP_LIMIT,
    NEWTON_TOL,
    SIGN_FLOOR_FACTOR,
    ZERO_FIELD_TOL,
    log
)
from grid import ScalarField, neg_laplacian
from linalg import cg_solve, inf_norm
from nonlinearity import NonlinearitySpec, kappa_for

# values -> values, applied after every accepted iterate
Projector = Callable[[np.ndarray], np.ndarray]

# (step, values) -> True to stop the flow
Observer = Callable[[int, np.ndarray], bool]

SIGN_CLASSES = ("positive", "negative", "nodal", "zero")


class FlowError(Exception):
    pass


class NewtonError(Exception):
    """Newton failed; `report` holds the last iterate."""

    def __init__(self, message: str, report: "SolveReport | None" = None):
        super().__init__(message)
        self.report = report


# ==============================================================================
# CONFIG AND REPORT
# ==============================================================================

@dataclass(frozen=True)
class FlowConfig:
    """kappa=None means automatic; residual_tol=None means FLOW_RESIDUAL_FACTOR * sqrt(M)."""

    tau: float = FLOW_TAU
    kappa: float | None = None
    residual_tol: float | None = None
    max_steps: int = FLOW_MAX_STEPS
    backtracking: bool = FLOW_BACKTRACKING

    def __post_init__(self):
        if not (math.isfinite(self.tau) and 0 < self.tau <= 1):
            raise ValueError(f"flow.tau must lie in (0, 1], got {self.tau}")
        if self.kappa is not None and not (math.isfinite(self.kappa) and self.kappa >= 0):
            raise ValueError(f"flow.kappa must be nonnegative, got {self.kappa}")
        if self.residual_tol is not None and not self.residual_tol > 0:
            raise ValueError(f"flow.residual_tol must be positive, got {self.residual_tol}")
        if self.max_steps < 0:
            raise ValueError(f"flow.max_steps must be nonnegative, got {self.max_steps}")

    def resolve_kappa(self, spec: NonlinearitySpec) -> float:
        if self.kappa is not None:
            return float(self.kappa)
        return kappa_for(spec, max(1.0, spec.s_f or 1.0))

    def resolve_residual_tol(self, M: int) -> float:
        if self.residual_tol is not None:
            return float(self.residual_tol)
        return FLOW_RESIDUAL_FACTOR * math.sqrt(M)


@dataclass
class SolveReport:
    field: ScalarField
    residual: float
    energy: float
    steps: int
    energy_trace: list[float]
    converged: bool
    sign_class: str
    message: str = ""
    diagnostics: dict = field(default_factory=dict)

    def summary(self) -> dict:
        return {
            "energy": self.energy,
            "residual": self.residual,
            "steps": self.steps,
            "converged": self.converged,
            "sign_class": self.sign_class,
            "sup_norm": self.field.sup_norm(),
        }


# ==============================================================================
# ENERGY AND RESIDUAL
# ==============================================================================

def energy(u: ScalarField, spec: NonlinearitySpec) -> float:
    """1/2 h^2 u^T A u - h^2 sum F(u); F is the truncated one when spec.truncated."""
    A = neg_laplacian(u.mesh)
    x = u.values
    h2 = u.mesh.h ** 2
    return float(h2 * (0.5 * np.dot(x, A @ x) - np.sum(spec.F(x))))


def residual_vector(u: ScalarField, spec: NonlinearitySpec) -> np.ndarray:
    return neg_laplacian(u.mesh) @ u.values - spec.f(u.values)


def residual_norm(u: ScalarField, spec: NonlinearitySpec) -> float:
    """h * ||A u - f(u)||_2, the discrete L2 norm of the equation residual."""
    return float(u.mesh.h * np.linalg.norm(residual_vector(u, spec)))


def sign_class(u: ScalarField) -> str:
    sup = u.sup_norm()
    if sup <= ZERO_FIELD_TOL:
        return "zero"
    floor = SIGN_FLOOR_FACTOR * sup
    pos = float(np.max(u.values)) > floor
    neg = float(np.min(u.values)) < -floor
    if pos and neg:
        return "nodal"
    return "positive" if pos else "negative"


# ==============================================================================
# K-MAP AND FLOW STEP
# ==============================================================================

def _shifted_laplacian(mesh, kappa: float) -> sp.csr_matrix:
    return (neg_laplacian(mesh) + kappa * sp.identity(mesh.M, format="csr")).tocsr()


def k_map(u: ScalarField, spec: NonlinearitySpec, kappa: float,
          tol: float = CG_TOL, operator: sp.csr_matrix | None = None) -> ScalarField:
    """K(u) = (A + kappa I)^-1 (f(u) + kappa u), by CG warm-started at u."""
    if kappa < 0:
        raise ValueError(f"kappa must be nonnegative, got {kappa}")
    Ak = operator if operator is not None else _shifted_laplacian(u.mesh, kappa)
    b = spec.f(u.values) + kappa * u.values
    return u.with_values(cg_solve(Ak, b, tol=tol, x0=u.values))


def flow_step(u: ScalarField, tau: float, spec: NonlinearitySpec, kappa: float,
              tol: float = CG_TOL) -> ScalarField:
    """u+ = (1 - tau) u + tau K(u)."""
    if not 0 < tau <= 1:
        raise ValueError(f"tau must lie in (0, 1], got {tau}")
    Ku = k_map(u, spec, kappa, tol=tol)
    return u.with_values((1.0 - tau) * u.values + tau * Ku.values)


def _cg_tol(residual_tol: float, h: float, b: np.ndarray) -> float:
    # K is wanted to residual_tol / 10 in the h-weighted norm
    bnorm = float(np.linalg.norm(b))
    if bnorm == 0.0:
        return CG_TOL
    return float(np.clip(residual_tol / (10.0 * h * bnorm), 1e-13, CG_TOL))


def _energy_change(A: sp.csr_matrix, spec: NonlinearitySpec, u: np.ndarray,
                   c: np.ndarray, h2: float) -> tuple[float, float]:
    """
    I(c) - I(u), written so the quadratic part is formed from c - u, and the
    size of the round-off in evaluating it.
    """
    d = c - u
    s = c + u
    As = A @ s
    Fc = spec.F(c)
    Fu = spec.F(u)
    delta = h2 * (0.5 * np.dot(d, As) - np.sum(Fc - Fu))
    slack = 64 * np.finfo(float).eps * h2 * (
        np.dot(np.abs(d), np.abs(As)) + np.sum(np.abs(Fc)) + np.sum(np.abs(Fu))
    )
    return float(delta), float(slack)


# ==============================================================================
# FLOW TO EQUILIBRIUM
# ==============================================================================

def flow_to_equilibrium(u0: ScalarField, spec: NonlinearitySpec, cfg: FlowConfig | None = None,
                        projector: Projector | None = None,
                        observer: Observer | None = None) -> SolveReport:
    """
    Iterates u <- (1 - tau) u + tau K(u) until h ||A u - f(u)|| <= residual_tol.

    allen_cahn flows run on the truncated nonlinearity. With backtracking, a
    step that raises the (truncated) energy is retried with tau halved, up to
    MAX_BACKTRACK times; increments within evaluation round-off are accepted.
    The trace records the energy evaluated at every iterate.
    """

    cfg = cfg or FlowConfig()
    flow_spec = spec.for_flow()
    mesh = u0.mesh
    h, h2 = mesh.h, mesh.h ** 2

    kappa = cfg.resolve_kappa(flow_spec)
    tol = cfg.resolve_residual_tol(mesh.M)
    A = neg_laplacian(mesh)
    Ak = _shifted_laplacian(mesh, kappa)

    x = np.array(u0.values, dtype=float)
    if projector is not None:
        x = projector(x)

    current = u0.with_values(x)
    trace = [energy(current, flow_spec)]
    backtracks = 0
    tau_min = cfg.tau
    stalled = False
    stopped = False
    converged = False
    res = residual_norm(current, flow_spec)
    step = 0

    log(f"Flow start: M={mesh.M}, kappa={kappa:.6g}, tau={cfg.tau}, tol={tol:.3e}, residual={res:.3e}")

    while True:
        if res <= tol:
            converged = True
            break
        if observer is not None and observer(step, x):
            stopped = True
            break
        if step >= cfg.max_steps:
            break

        b = flow_spec.f(x) + kappa * x
        Kx = cg_solve(Ak, b, tol=_cg_tol(tol, h, b), x0=x)

        tau = cfg.tau
        accepted = None
        for attempt in range(MAX_BACKTRACK + 1 if cfg.backtracking else 1):
            c = (1.0 - tau) * x + tau * Kx
            if projector is not None:
                c = projector(c)
            delta, slack = _energy_change(A, flow_spec, x, c, h2)
            if not cfg.backtracking or delta <= slack:
                accepted = c
                break
            backtracks += 1
            tau *= 0.5

        if accepted is None:
            stalled = True
            log(f"Flow stalled at step {step}: no energy decrease after {MAX_BACKTRACK} halvings")
            break

        tau_min = min(tau_min, tau)
        x = accepted
        step += 1
        current = u0.with_values(x)
        trace.append(energy(current, flow_spec))
        res = residual_norm(current, flow_spec)

        if DEBUG_MODE and step % FLOW_LOG_EVERY == 0:
            log(f"  flow step {step}: residual={res:.3e}, energy={trace[-1]:.10g}, tau={tau:.3g}")

    if stalled:
        message = "stalled: no descent step found"
    elif stopped:
        message = "stopped by observer"
    elif converged:
        message = "converged"
    else:
        message = f"max_steps={cfg.max_steps} reached"

    report = SolveReport(
        field=current,
        residual=res,
        energy=energy(current, spec.untruncated()),
        steps=step,
        energy_trace=trace,
        converged=converged,
        sign_class=sign_class(current),
        message=message,
        diagnostics={
            "kappa": kappa,
            "residual_tol": tol,
            "backtracks": backtracks,
            "tau_min": tau_min,
            "stalled": stalled,
            "stopped_by_observer": stopped,
        },
    )
    log(
        f"Flow end: {message}, steps={step}, residual={res:.3e}, "
        f"energy={report.energy:.10g}, sign={report.sign_class}"
    )
    return report


# ==============================================================================
# NEWTON
# ==============================================================================

def newton_refine(u: ScalarField, spec: NonlinearitySpec, tol: float = NEWTON_TOL,
                  projector: Projector | None = None) -> SolveReport:
    """
    Damped Newton on R(u) = A u - f(u) with Jacobian A - diag f'(u). The
    target is raised to the round-off floor of evaluating R when tol lies
    below it.
    """

    spec.require_c1()
    spec = spec.untruncated()
    mesh = u.mesh
    h = mesh.h
    A = neg_laplacian(mesh)
    a_norm = inf_norm(A)

    x = np.array(u.values, dtype=float)
    if projector is not None:
        x = projector(x)

    def resid(v: np.ndarray) -> tuple[np.ndarray, float]:
        R = A @ v - spec.f(v)
        return R, float(h * np.linalg.norm(R))

    def partial(values: np.ndarray, r: float, its: int, msg: str) -> SolveReport:
        current = u.with_values(values)
        return SolveReport(
            field=current, residual=r, energy=energy(current, spec), steps=its,
            energy_trace=[], converged=False, sign_class=sign_class(current), message=msg,
        )

    R, r = resid(x)
    r0 = r
    floor = 64 * np.finfo(float).eps * h * (a_norm * np.linalg.norm(x) + np.linalg.norm(spec.f(x)))
    target = max(tol, float(floor))
    its = 0
    stalled = False

    while r > target:
        if its >= NEWTON_MAX_DAMPED:
            raise NewtonError(
                f"Newton diverged: residual {r:.3e} after {its} damped steps",
                report=partial(x, r, its, "diverged"),
            )

        J = (A - sp.diags(spec.fprime(x), format="csr")).tocsc()
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("error", MatrixRankWarning)
                dx = spsolve(J, -R)
        except (MatrixRankWarning, RuntimeError) as e:
            raise NewtonError(
                f"Singular Jacobian (near-degenerate solution): {e}",
                report=partial(x, r, its, "singular"),
            ) from e

        if not np.all(np.isfinite(dx)) or np.linalg.norm(dx) > NEWTON_STEP_LIMIT * (1 + np.linalg.norm(x)):
            raise NewtonError(
                "Ill-conditioned Jacobian: Newton step is not finite or too large",
                report=partial(x, r, its, "ill-conditioned"),
            )

        t = 1.0
        for _ in range(MAX_BACKTRACK + 1):
            xn = x + t * dx
            if projector is not None:
                xn = projector(xn)
            Rn, rn = resid(xn)
            if rn < r:
                break
            t *= 0.5
        else:
            if r <= 1e3 * target:
                log(f"Newton: residual {r:.3e} stalled within 1e3 of target {target:.3e}")
                stalled = True
                break
            raise NewtonError(
                f"Newton: no residual decrease from {r:.3e}",
                report=partial(x, r, its, "no decrease"),
            )

        x, R, r = xn, Rn, rn
        its += 1
        if DEBUG_MODE:
            log(f"  newton {its}: residual={r:.3e}, damping={t:g}")

    current = u.with_values(x)
    report = SolveReport(
        field=current,
        residual=r,
        energy=energy(current, spec),
        steps=its,
        energy_trace=[],
        converged=r <= target,
        sign_class=sign_class(current),
        message="stalled at round-off level" if stalled else "converged",
        diagnostics={"newton_target": target, "initial_residual": r0, "stalled": stalled},
    )
    log(f"Newton: {its} step(s), residual {r0:.3e} -> {r:.3e}")
    return report
