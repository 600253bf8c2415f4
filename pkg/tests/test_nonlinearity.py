# test_nonlinearity.py — families, truncation, kappa and the assumption report

import math

import numpy as np
import pytest

from nonlinearity import (
    DerivativeSingularityError,
    F_eval,
    NonlinearitySpec,
    check_assumptions,
    f_eval,
    fprime_eval,
    kappa_for,
)


def test_invalid_specs():
    with pytest.raises(ValueError):
        NonlinearitySpec.sublinear_power(1.5)
    with pytest.raises(ValueError):
        NonlinearitySpec.allen_cahn(-1.0)
    with pytest.raises(ValueError):
        NonlinearitySpec.allen_cahn(5.0, p=1.0)
    with pytest.raises(ValueError):
        NonlinearitySpec("power", p=0.5, truncated=True)
    with pytest.raises(ValueError):
        NonlinearitySpec("cubic", p=3.0)


def test_allen_cahn_values():
    spec = NonlinearitySpec.allen_cahn(4.0)
    assert f_eval(spec, 0.5) == pytest.approx(4.0 * (0.5 - 0.125))
    assert f_eval(spec, 1.0) == 0.0
    assert F_eval(spec, 1.0) == pytest.approx(4.0 * (0.5 - 0.25))
    assert fprime_eval(spec, 0.0) == pytest.approx(4.0)
    assert fprime_eval(spec, 1.0) == pytest.approx(-8.0)
    assert isinstance(f_eval(spec, 0.3), float)


def test_truncation():
    spec = NonlinearitySpec.allen_cahn(4.0).for_flow()
    assert spec.truncated
    assert f_eval(spec, 2.0) == 0.0
    assert F_eval(spec, 2.0) == F_eval(spec, 1.0)
    assert F_eval(spec, -3.0) == F_eval(spec, 1.0)
    assert spec.untruncated().truncated is False
    s = np.linspace(-0.9, 0.9, 7)
    assert np.array_equal(spec.f(s), spec.untruncated().f(s))


def test_sublinear_power():
    spec = NonlinearitySpec.sublinear_power(0.5)
    assert spec.s_f is None and not spec.is_c1
    assert f_eval(spec, 4.0) == pytest.approx(2.0)
    assert f_eval(spec, -4.0) == pytest.approx(-2.0)
    assert F_eval(spec, 1.0) == pytest.approx(1.0 / 1.5)
    assert fprime_eval(spec, 4.0) == pytest.approx(0.25)
    with pytest.raises(DerivativeSingularityError):
        spec.fprime(np.array([0.0, 1.0]))
    with pytest.raises(DerivativeSingularityError):
        spec.require_c1()
    assert spec.for_flow() is spec


def test_kappa_makes_g_increasing():
    spec = NonlinearitySpec.allen_cahn(5.2).for_flow()
    kappa = kappa_for(spec, 1.0)
    assert kappa >= 2 * 5.2
    s = np.linspace(-1.0, 1.0, 2001)
    assert np.all(np.diff(spec.f(s) + kappa * s) > 0)


def test_kappa_power_is_margin_only():
    spec = NonlinearitySpec.sublinear_power(0.5)
    assert kappa_for(spec, 1.0) == pytest.approx(1e-3)
    assert kappa_for(spec, 1.0, margin=0.0) == 0.0
    with pytest.raises(ValueError):
        kappa_for(spec, 0.0)


def test_assumptions_allen_cahn():
    lam1, lam2 = 2.0, 5.0
    report = check_assumptions(NonlinearitySpec.allen_cahn(5.2), lam1, lam2)
    assert report.a1 and report.a2 and report.a3 and report.a3prime and report.a4
    assert report.limit_zero == 5.2 and report.limit_inf == -math.inf

    below = check_assumptions(NonlinearitySpec.allen_cahn(3.0), lam1, lam2)
    assert below.a3 and not below.a3prime

    zero = check_assumptions(NonlinearitySpec.allen_cahn(1.5), lam1, lam2)
    assert not zero.a3


def test_assumptions_power():
    report = check_assumptions(NonlinearitySpec.sublinear_power(0.5), 2.0, 5.0)
    assert report.a1 and report.a2 and report.a3 and report.a3prime and report.a4
    d = report.as_dict()
    assert set(d) >= {"a1", "a2", "a3", "a3prime", "a4"}


def test_truncated_spec_is_checked_untruncated():
    report = check_assumptions(NonlinearitySpec.allen_cahn(5.2, truncated=True), 2.0, 5.0)
    assert report.a2
