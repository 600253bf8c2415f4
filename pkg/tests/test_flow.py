# test_flow.py — energy, K-map, descent flow and Newton refinement

import numpy as np
import pytest

import flow
from flow import (
    FlowConfig,
    energy,
    flow_step,
    flow_to_equilibrium,
    k_map,
    newton_refine,
    residual_norm,
    sign_class,
)
from grid import ScalarField, reflect, reflection_permutation
from nonlinearity import DerivativeSingularityError, NonlinearitySpec
from solutions import first_eigenfunction


@pytest.fixture(scope="module")
def phi1(square_mesh):
    return first_eigenfunction(square_mesh)[1]


def test_flow_config_validation():
    with pytest.raises(ValueError):
        FlowConfig(tau=0.0)
    with pytest.raises(ValueError):
        FlowConfig(tau=1.5)
    with pytest.raises(ValueError):
        FlowConfig(kappa=-1.0)
    with pytest.raises(ValueError):
        FlowConfig(residual_tol=0.0)
    assert FlowConfig().resolve_residual_tol(225) == pytest.approx(1.5e-7)


def test_energy_and_residual_of_zero(square_mesh, ac_spec):
    zero = ScalarField.zeros(square_mesh)
    assert energy(zero, ac_spec) == 0.0
    assert residual_norm(zero, ac_spec) == 0.0
    assert sign_class(zero) == "zero"


def test_sign_classes(square_mesh, phi1):
    assert sign_class(phi1) == "positive"
    assert sign_class(-phi1) == "negative"
    x, _ = square_mesh.coords
    assert sign_class(ScalarField(square_mesh, np.sin(2 * x))) == "nodal"


def test_flow_reaches_positive_solution(square_mesh, ac_spec, phi1):
    rep = flow_to_equilibrium(phi1 * 0.1, ac_spec, FlowConfig())
    assert rep.converged
    assert rep.sign_class == "positive"
    assert rep.residual <= 1.5e-7
    assert rep.energy < 0
    trace = np.array(rep.energy_trace)
    assert np.all(np.diff(trace) <= 1e-10)
    assert rep.field.sup_norm() <= 1.0


def test_energy_is_monotone_from_random_starts(square_mesh, ac_spec):
    rng = np.random.default_rng(7)
    cfg = FlowConfig(max_steps=40)
    for _ in range(100):
        u0 = ScalarField(square_mesh, rng.uniform(-1.0, 1.0, square_mesh.M))
        rep = flow_to_equilibrium(u0, ac_spec, cfg)
        assert np.all(np.diff(rep.energy_trace) <= 1e-10)


def test_trace_holds_energy_of_each_iterate(square_mesh, ac_spec, phi1):
    flow_spec = ac_spec.for_flow()
    seen = []

    def record(step, x):
        seen.append(energy(ScalarField(square_mesh, x.copy()), flow_spec))
        return False

    rep = flow_to_equilibrium(phi1 * 0.1, ac_spec, FlowConfig(max_steps=20), observer=record)
    assert len(seen) >= len(rep.energy_trace) - 1
    assert rep.energy_trace[:len(seen)] == pytest.approx(seen, rel=1e-12, abs=1e-14)


def test_flow_stays_in_order_interval(square_mesh, ac_spec, square_w):
    w = square_w.field.values
    rng = np.random.default_rng(11)
    for r in rng.uniform(0.0, 1.0, 5):
        lo, hi = [], []

        def bounds(step, x):
            lo.append(np.min(x))
            hi.append(np.max(x - w))
            return False

        flow_to_equilibrium(square_w.field * r, ac_spec, FlowConfig(max_steps=60), observer=bounds)
        assert min(lo) >= -1e-6
        assert max(hi) <= 1e-6


def test_k_map_preserves_order_interval(square_mesh, ac_spec, square_w):
    spec = ac_spec.for_flow()
    kappa = FlowConfig().resolve_kappa(spec)
    w = square_w.field.values
    rng = np.random.default_rng(3)
    for _ in range(10):
        u = square_w.field.with_values(w * rng.uniform(0.0, 1.0, square_mesh.M))
        Ku = k_map(u, spec, kappa, tol=1e-12).values
        assert np.min(Ku) >= -1e-10
        assert np.max(Ku - w) <= 1e-6


def test_flow_keeps_odd_symmetry_without_projector(square_mesh, ac_spec):
    x, y = square_mesh.coords
    seed = ScalarField(square_mesh, 0.1 * np.sin(2 * x) * np.sin(y))
    rep = flow_to_equilibrium(seed, ac_spec, FlowConfig(max_steps=50))
    u = rep.field
    assert (u + reflect(u, "y_axis")).sup_norm() <= 1e-9 * u.sup_norm()


def test_flow_without_backtracking(square_mesh, ac_spec, phi1):
    rep = flow_to_equilibrium(phi1 * 0.1, ac_spec, FlowConfig(backtracking=False))
    assert rep.converged and rep.diagnostics["backtracks"] == 0


def test_flow_decays_below_lambda1(phi1):
    rep = flow_to_equilibrium(phi1 * 0.1, NonlinearitySpec.allen_cahn(1.5))
    assert rep.converged
    assert rep.sign_class == "zero"


def test_zero_is_an_equilibrium(square_mesh, ac_spec):
    rep = flow_to_equilibrium(ScalarField.zeros(square_mesh), ac_spec)
    assert rep.converged and rep.steps == 0 and rep.sign_class == "zero"


def test_observer_and_step_cap(ac_spec, phi1):
    rep = flow_to_equilibrium(phi1 * 0.1, ac_spec, observer=lambda step, x: step >= 3)
    assert rep.steps == 3 and not rep.converged
    assert rep.diagnostics["stopped_by_observer"]

    rep = flow_to_equilibrium(phi1 * 0.1, ac_spec, FlowConfig(max_steps=2))
    assert rep.steps == 2 and not rep.converged
    assert "max_steps" in rep.message


def test_projector_keeps_odd_symmetry(square_mesh, ac_spec):
    x, y = square_mesh.coords
    seed = ScalarField(square_mesh, 0.1 * np.sin(2 * x) * np.sin(y))

    perm = reflection_permutation(square_mesh, "y_axis")

    def odd_in_x(v):
        return 0.5 * (v - v[perm])

    rep = flow_to_equilibrium(seed, ac_spec, FlowConfig(max_steps=50), projector=odd_in_x)
    assert np.allclose(odd_in_x(rep.field.values), rep.field.values, atol=1e-14)


def test_k_map_fixes_equilibria(square_w, ac_spec):
    kappa = FlowConfig().resolve_kappa(ac_spec.for_flow())
    Kw = k_map(square_w.field, ac_spec, kappa, tol=1e-12)
    assert np.max(np.abs(Kw.values - square_w.field.values)) < 1e-6


def test_k_map_rejects_negative_kappa(square_w, ac_spec):
    with pytest.raises(ValueError):
        k_map(square_w.field, ac_spec, -1.0)


def test_flow_step_blends_with_k_map(phi1, ac_spec):
    spec = ac_spec.for_flow()
    kappa = FlowConfig().resolve_kappa(spec)
    u = phi1 * 0.1
    Ku = k_map(u, spec, kappa, tol=1e-12)
    half = flow_step(u, 0.5, spec, kappa, tol=1e-12)
    assert np.allclose(half.values, 0.5 * (u.values + Ku.values), atol=1e-10)
    assert energy(half, spec) < energy(u, spec)
    with pytest.raises(ValueError):
        flow_step(u, 0.0, spec, kappa)


def test_newton_polishes_flow_result(ac_spec, phi1):
    rough = flow_to_equilibrium(phi1 * 0.1, ac_spec, FlowConfig(residual_tol=1e-4))
    ref = newton_refine(rough.field, ac_spec, tol=1e-10)
    assert ref.converged
    assert ref.residual <= max(1e-10, ref.diagnostics["newton_target"])
    assert ref.residual < rough.residual


def test_newton_stall_is_not_converged(monkeypatch, square_w, ac_spec, phi1):
    u = square_w.field + phi1 * 1e-9
    r0 = residual_norm(u, ac_spec)
    monkeypatch.setattr(flow, "spsolve", lambda J, b: np.zeros_like(b))
    ref = newton_refine(u, ac_spec, tol=r0 / 100)
    assert not ref.converged
    assert ref.diagnostics["stalled"]
    assert "stalled" in ref.message
    assert ref.residual == pytest.approx(r0)


def test_newton_needs_c1(square_mesh, phi1):
    with pytest.raises(DerivativeSingularityError):
        newton_refine(phi1, NonlinearitySpec.sublinear_power(0.5))


def test_sublinear_flow(square_mesh, phi1):
    spec = NonlinearitySpec.sublinear_power(0.5)
    rep = flow_to_equilibrium(phi1 * 0.1, spec)
    assert rep.converged and rep.sign_class == "positive"
    assert rep.energy < 0
