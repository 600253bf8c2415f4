# nonlinearity.py — Nonlinearity families, truncation and assumption checks for nodal-lab

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from config import (
    A2_SAMPLES,
    DERIV_FLOOR,
    KAPPA_MARGIN_FACTOR,
    log
)


class DerivativeSingularityError(Exception):
    """f' requested where the family is not C^1 (sublinear power near 0, or at all)."""
    pass


FAMILIES = ("power", "allen_cahn")


# ==============================================================================
# SPEC
# ==============================================================================

@dataclass(frozen=True)
class NonlinearitySpec:
    """
    power:       f(s) = |s|^(p-1) s,          0 < p < 1, f > 0 on (0, inf)
    allen_cahn:  f(s) = lam (s - |s|^(p-1) s), lam > 0, p > 1, zero at s_f = 1

    `truncated` replaces f by 0 outside [-s_f, s_f] (allen_cahn only).
    """

    family: str
    p: float
    lam: float = 1.0
    truncated: bool = False

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"Unknown nonlinearity family: {self.family}")
        if not math.isfinite(self.p):
            raise ValueError(f"p must be finite, got {self.p}")

        if self.family == "power":
            if not 0 < self.p < 1:
                raise ValueError(f"power: p must lie in (0, 1), got {self.p}")
            if self.truncated:
                raise ValueError("power: truncation needs a positive zero s_f, which this family lacks")
        else:
            if not self.p > 1:
                raise ValueError(f"allen_cahn: p must exceed 1, got {self.p}")
            if not (math.isfinite(self.lam) and self.lam > 0):
                raise ValueError(f"allen_cahn: lambda must be positive, got {self.lam}")

    @classmethod
    def sublinear_power(cls, p: float) -> "NonlinearitySpec":
        return cls("power", p=p)

    @classmethod
    def allen_cahn(cls, lam: float, p: float = 3.0, truncated: bool = False) -> "NonlinearitySpec":
        return cls("allen_cahn", p=p, lam=lam, truncated=truncated)

    # ---------------------------------------------------------------
    # Properties
    # ---------------------------------------------------------------

    @property
    def s_f(self) -> float | None:
        return 1.0 if self.family == "allen_cahn" else None

    @property
    def is_c1(self) -> bool:
        return self.family == "allen_cahn"

    def require_c1(self):
        if not self.is_c1:
            raise DerivativeSingularityError(
                f"{self.family} nonlinearity is not C^1 at 0; linearizations need the allen_cahn family"
            )

    def for_flow(self) -> "NonlinearitySpec":
        """The nonlinearity the descent flow runs on: truncated whenever s_f exists."""
        return replace(self, truncated=True) if self.family == "allen_cahn" else self

    def untruncated(self) -> "NonlinearitySpec":
        return replace(self, truncated=False) if self.truncated else self

    # ---------------------------------------------------------------
    # Evaluation (vectorized)
    # ---------------------------------------------------------------

    def f(self, s) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        a = np.abs(s)
        if self.family == "power":
            return np.sign(s) * a ** self.p

        val = self.lam * (s - a ** (self.p - 1) * s)
        if self.truncated:
            val = np.where(a <= 1.0, val, 0.0)
        return val

    def F(self, s) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        if self.family == "power":
            return np.abs(s) ** (self.p + 1) / (self.p + 1)

        if self.truncated:
            s = np.clip(s, -1.0, 1.0)
        a = np.abs(s)
        return self.lam * (0.5 * s * s - a ** (self.p + 1) / (self.p + 1))

    def fprime(self, s) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        a = np.abs(s)
        if self.family == "power":
            if np.any(a < DERIV_FLOOR):
                raise DerivativeSingularityError(
                    f"f' of |s|^(p-1)s is singular for |s| < {DERIV_FLOOR:g}"
                )
            return self.p * a ** (self.p - 1)

        val = self.lam * (1.0 - self.p * a ** (self.p - 1))
        if self.truncated:
            val = np.where(a < 1.0, val, 0.0)
        return val


def _scalar(value: np.ndarray):
    return float(value) if np.ndim(value) == 0 else value


def f_eval(spec: NonlinearitySpec, s):
    return _scalar(spec.f(s))


def F_eval(spec: NonlinearitySpec, s):
    return _scalar(spec.F(s))


def fprime_eval(spec: NonlinearitySpec, s):
    return _scalar(spec.fprime(s))


# ==============================================================================
# KAPPA
# ==============================================================================

def kappa_for(spec: NonlinearitySpec, bound: float, margin: float | None = None) -> float:
    """
    Smallest shift making g(s) = f(s) + kappa s strictly increasing on
    [-bound, bound], plus a margin (default KAPPA_MARGIN_FACTOR * (1 + raw)).
    """

    if not bound > 0:
        raise ValueError(f"bound must be positive, got {bound}")

    if spec.family == "power":
        raw = 0.0
    else:
        # f' decreases in |s|; truncation flattens it beyond s_f
        b = min(bound, spec.s_f) if spec.truncated else bound
        raw = max(0.0, spec.lam * (spec.p * b ** (spec.p - 1) - 1.0))

    if margin is None:
        margin = KAPPA_MARGIN_FACTOR * (1.0 + raw)
    if margin < 0:
        raise ValueError(f"margin must be nonnegative, got {margin}")
    return raw + margin


# ==============================================================================
# ASSUMPTIONS
# ==============================================================================

@dataclass(frozen=True)
class AssumptionReport:
    a1: bool
    a2: bool
    a3: bool
    a3prime: bool
    a4: bool
    limit_zero: float
    limit_inf: float
    lambda1h: float
    lambda2h: float

    def as_dict(self) -> dict:
        return {
            "a1": self.a1,
            "a2": self.a2,
            "a3": self.a3,
            "a3prime": self.a3prime,
            "a4": self.a4,
            "limit_zero": self.limit_zero,
            "limit_inf": self.limit_inf,
            "lambda1h": self.lambda1h,
            "lambda2h": self.lambda2h,
        }


def check_assumptions(spec: NonlinearitySpec, lambda1h: float, lambda2h: float) -> AssumptionReport:
    """
    Oddness and f(s)/s monotonicity are sampled; the limits at 0 and infinity
    are closed form. Truncation is a solver device, so the untruncated f is checked.
    """

    f = spec.untruncated()
    s = np.logspace(-4, 2, A2_SAMPLES)

    a1 = bool(np.array_equal(f.f(-s), -f.f(s)))
    a2 = bool(np.all(np.diff(f.f(s) / s) < 0))

    if f.family == "power":
        limit_zero, limit_inf = math.inf, 0.0
    else:
        limit_zero, limit_inf = f.lam, -math.inf

    report = AssumptionReport(
        a1=a1,
        a2=a2,
        a3=limit_zero > lambda1h,
        a3prime=limit_zero > lambda2h,
        a4=limit_inf < lambda1h,
        limit_zero=limit_zero,
        limit_inf=limit_inf,
        lambda1h=float(lambda1h),
        lambda2h=float(lambda2h),
    )
    log(
        f"Assumptions for {f.family}(p={f.p:g}, lambda={f.lam:g}): "
        f"A1={a1} A2={a2} A3={report.a3} A3'={report.a3prime} A4={report.a4}"
    )
    return report
