# linalg.py — Sparse symmetric solves and eigenvalue counting for nodal-lab

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import ArpackError, ArpackNoConvergence, cg, eigsh, splu

from config import (
    CG_MAX_ITER,
    CG_RESTARTS,
    CG_TOL,
    DEBUG_MODE,
    DENSE_EIG_LIMIT,
    EIG_MAX_ITER_FACTOR,
    EIG_SEED,
    EIG_TOL,
    ZERO_BAND_FACTOR,
    log
)


class ConvergenceError(Exception):
    """Iterative solver ran out of budget; `residual` is the last relative residual."""

    def __init__(self, message: str, residual: float | None = None):
        super().__init__(message)
        self.residual = residual


# compressed-row storage; the discrete -Delta and its linearizations
SparseOperator = sp.csr_matrix


@dataclass(frozen=True)
class EigenPair:
    value: float
    vector: np.ndarray


# ==============================================================================
# OPERATOR HELPERS
# ==============================================================================

def as_operator(A) -> sp.csr_matrix:
    """Canonical CSR form: sorted unique column indices, finite values."""
    A = sp.csr_matrix(A, dtype=float)
    A.sum_duplicates()
    A.sort_indices()
    if A.shape[0] != A.shape[1]:
        raise ValueError(f"Operator must be square, got shape {A.shape}")
    if not np.all(np.isfinite(A.data)):
        raise ValueError("Operator contains non-finite entries")
    return A


def inf_norm(A: sp.csr_matrix) -> float:
    return float(abs(A).sum(axis=1).max()) if A.shape[0] else 0.0


def gershgorin_lower(A: sp.csr_matrix) -> float:
    """Lower bound for the spectrum of a symmetric A."""
    diag = A.diagonal()
    off = np.asarray(abs(A).sum(axis=1)).ravel() - np.abs(diag)
    return float(np.min(diag - off))


def shifted(A: sp.csr_matrix, diag: np.ndarray | float) -> sp.csr_matrix:
    """A - diag(d) with d a vector or a scalar."""
    M = A.shape[0]
    d = np.broadcast_to(np.asarray(diag, dtype=float), (M,))
    return as_operator(A - sp.diags(d, format="csr"))


# ==============================================================================
# CONJUGATE GRADIENTS
# ==============================================================================

def cg_solve(A: sp.csr_matrix, b: np.ndarray, tol: float = CG_TOL,
             max_iter: int = CG_MAX_ITER, x0: np.ndarray | None = None) -> np.ndarray:
    """
    Solves the SPD system A x = b to ||A x - b|| <= tol ||b||, checked on the
    true residual. Restarts from the last iterate up to CG_RESTARTS times.
    """

    if not tol > 0:
        raise ValueError(f"CG tolerance must be positive, got {tol}")

    b = np.asarray(b, dtype=float)
    bnorm = float(np.linalg.norm(b))
    if bnorm == 0.0:
        return np.zeros_like(b)

    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=float)
    rel = float(np.linalg.norm(b - A @ x)) / bnorm
    if rel <= tol:
        return x

    for attempt in range(CG_RESTARTS + 1):
        x, info = cg(A, b, x0=x, rtol=tol, atol=0.0, maxiter=max_iter)
        rel = float(np.linalg.norm(b - A @ x)) / bnorm
        if rel <= tol:
            if attempt and DEBUG_MODE:
                log(f"CG converged after {attempt} restart(s), rel residual {rel:.3e}")
            return x
        if info < 0:
            break
        log(f"CG restart {attempt + 1}: rel residual {rel:.3e} > {tol:.3e} (info={info})")

    raise ConvergenceError(
        f"CG did not reach rel residual {tol:.3e} (final {rel:.3e})", residual=rel
    )


# ==============================================================================
# EIGENPAIRS
# ==============================================================================

def _residuals(A: sp.csr_matrix, vals: np.ndarray, V: np.ndarray) -> np.ndarray:
    return np.linalg.norm(A @ V - V * vals, axis=0)


def _rayleigh_ritz(A: sp.csr_matrix, V: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    Q, _ = np.linalg.qr(V)
    H = Q.T @ (A @ Q)
    vals, S = np.linalg.eigh(0.5 * (H + H.T))
    return vals, Q @ S


def _polish(A: sp.csr_matrix, V: np.ndarray, sigma: float, k: int,
            eig_tol: float, sweeps: int = 50) -> tuple[np.ndarray, np.ndarray]:
    """Block inverse iteration with Rayleigh-Ritz, keeping a few guard vectors."""
    M = A.shape[0]
    lu = splu((A - sigma * sp.identity(M, format="csr")).tocsc())

    block = min(M, k + 4)
    rng = np.random.default_rng(EIG_SEED)
    W = np.hstack([V, rng.standard_normal((M, block - V.shape[1]))])

    vals = np.zeros(k)
    for _ in range(sweeps):
        W = lu.solve(W)
        vals_all, W = _rayleigh_ritz(A, W)
        vals = vals_all[:k]
        if np.all(_residuals(A, vals, W[:, :k]) <= eig_tol * np.maximum(1.0, np.abs(vals))):
            return vals, W[:, :k]

    raise ConvergenceError(
        f"Eigenpairs did not reach residual {eig_tol:.1e} after {sweeps} polishing sweeps",
        residual=float(np.max(_residuals(A, vals, W[:, :k]))),
    )


def smallest_eigs(A: sp.csr_matrix, k: int, eig_tol: float = EIG_TOL) -> list[EigenPair]:
    """
    The k algebraically smallest eigenpairs of a symmetric A, ascending, with
    unit l2 vectors and ||A v - mu v|| <= eig_tol * max(1, |mu|).

    Small systems are solved densely. Otherwise shift-invert Lanczos runs with
    the shift below the Gershgorin bound, so the eigenvalues nearest the shift
    are the smallest ones.
    """

    A = as_operator(A)
    M = A.shape[0]
    if not 1 <= k <= M:
        raise ValueError(f"k must lie in [1, {M}], got {k}")

    if M <= DENSE_EIG_LIMIT or k >= M - 1:
        vals, V = np.linalg.eigh(A.toarray())
        vals, V = vals[:k], V[:, :k]
    else:
        lower = gershgorin_lower(A)
        sigma = lower - 1e-2 * (1.0 + abs(lower))
        v0 = np.random.default_rng(EIG_SEED).standard_normal(M)
        ncv = min(M - 1, max(2 * k + 1, 20))

        try:
            vals, V = eigsh(
                A, k=k, sigma=sigma, which="LM", v0=v0, ncv=ncv,
                tol=0.0, maxiter=EIG_MAX_ITER_FACTOR * M,
            )
        except ArpackNoConvergence as e:
            log(f"ARPACK: {len(e.eigenvalues)} of {k} eigenpairs converged, polishing")
            vals, V = e.eigenvalues, e.eigenvectors
        except ArpackError as e:
            raise ConvergenceError(f"ARPACK failure: {e}") from e

        if V.shape[1]:
            vals, V = _rayleigh_ritz(A, V)
        if V.shape[1] < k or np.any(
            _residuals(A, vals, V) > eig_tol * np.maximum(1.0, np.abs(vals))
        ):
            vals, V = _polish(A, V, sigma, k, eig_tol)

    res = _residuals(A, vals, V)
    bound = eig_tol * np.maximum(1.0, np.abs(vals))
    if np.any(res > bound):
        raise ConvergenceError(
            f"Eigenpair residual {float(np.max(res)):.3e} exceeds the bound", residual=float(np.max(res))
        )

    if DEBUG_MODE:
        log(f"smallest_eigs(M={M}, k={k}): {np.array2string(vals, precision=6)}")

    return [EigenPair(float(vals[i]), np.ascontiguousarray(V[:, i])) for i in range(k)]


def count_negative_eigs(A: sp.csr_matrix, zero_band: float | None = None) -> dict:
    """
    Counts eigenvalues below -zero_band and flags those within the band.
    Enumerates eigenvalues from the bottom, doubling k until the largest one
    computed lies above the band.
    """

    A = as_operator(A)
    M = A.shape[0]
    if zero_band is None:
        zero_band = ZERO_BAND_FACTOR * inf_norm(A)
    if zero_band < 0:
        raise ValueError(f"zero_band must be nonnegative, got {zero_band}")

    k = min(M, 4)
    while True:
        vals = np.array([p.value for p in smallest_eigs(A, k)])
        if vals[-1] > zero_band or k == M:
            break
        k = min(M, 2 * k)

    result = {
        "negatives": int(np.sum(vals < -zero_band)),
        "zeros_flagged": int(np.sum(np.abs(vals) <= zero_band)),
    }
    if result["zeros_flagged"]:
        log(f"WARNING: {result['zeros_flagged']} eigenvalue(s) within the zero band {zero_band:.2e}")
    return result


class FactorizedOperator:
    """Sparse LU of a fixed operator, for many right-hand sides at once."""

    def __init__(self, A: sp.csr_matrix):
        self.shape = A.shape
        self._lu = splu(as_operator(A).tocsc())

    def solve(self, B: np.ndarray) -> np.ndarray:
        return self._lu.solve(np.asarray(B, dtype=float))
