import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mcfpf import diagnostics as dg
from mcfpf import field as fld
from mcfpf import potential as pt
from mcfpf import solver as sv

DW = pt.double_well()


@pytest.fixture(scope="module")
def circle64():
    grid = fld.Grid(2, 64)
    return sv.prepare_initial_data(sv.Circle((0.5, 0.5), 0.25), DW, grid, 0.03)


def test_dynamics_validation():
    with pytest.raises(ValueError):
        sv.Dynamics(DW, "sticky")
    with pytest.raises(ValueError):
        sv.Dynamics.volume_preserving(pt.triple_well())
    with pytest.raises(ValueError):
        sv.Dynamics(DW, sv.FORCED)
    with pytest.raises(ValueError):
        sv.StepperConfig("rk4", 1e-3)
    with pytest.raises(ValueError):
        sv.StepperConfig(sv.EXPLICIT, 0.0)


def test_explicit_limit_frozen_and_enforced(circle64):
    limit = sv.explicit_dt_limit(circle64.grid, 0.03, DW)
    assert limit == pytest.approx(2.365944245800731e-05, rel=1e-12)
    with pytest.raises(sv.CFLError):
        sv.step_explicit(circle64, sv.Dynamics.plain(DW), 1.01 * limit)
    sv.step_explicit(circle64, sv.Dynamics.plain(DW), limit)


def test_explicit_step_on_constant_field_is_forward_euler():
    grid = fld.Grid(1, 16)
    u = fld.PhaseField(grid, np.full(16, 0.3), 0.5)
    new = sv.step_explicit(u, sv.Dynamics.plain(DW), 1e-4)
    expected = 0.3 - 1e-4 * (0.3**3 - 0.3) / 0.25
    np.testing.assert_allclose(new.values, expected, rtol=1e-14)
    assert new.time == 1e-4


@pytest.mark.parametrize("scheme", sv.SCHEMES)
def test_wells_are_fixed_points(scheme):
    grid = fld.Grid(2, 16)
    u = fld.PhaseField(grid, np.ones((16, 16)), 0.2)
    new = sv.step(u, sv.Dynamics.plain(DW), sv.StepperConfig(scheme, 1e-4))
    np.testing.assert_allclose(new.values, 1.0, atol=1e-14)


def test_semi_implicit_dissipates(circle64):
    dyn = sv.Dynamics.plain(DW)
    e = [dg.energy(circle64, DW).total]
    u = circle64
    for _ in range(20):
        u = sv.step_semi_implicit(u, dyn, 0.1 * 0.03**2)
        e.append(dg.energy(u, DW).total)
    assert np.all(np.diff(e) < 0)
    assert e[0] == pytest.approx(1.4809609954871275, rel=1e-12)


def test_semi_implicit_matches_explicit_for_small_dt(circle64):
    dyn = sv.Dynamics.plain(DW)
    rhs = fld.laplacian(circle64.values, circle64.grid) - DW.gradient(circle64.values) / 0.03**2
    errs = []
    for dt in (2e-7, 1e-7):
        new = sv.step_semi_implicit(circle64, dyn, dt)
        errs.append(np.max(np.abs((new.values - circle64.values) / dt - rhs)))
    assert 1.8 < errs[0] / errs[1] < 2.2


def test_zero_forcing_is_bitwise_plain(circle64):
    plain = sv.Dynamics.plain(DW)
    forced = sv.Dynamics.forced(DW, sv.ConstantForce((0.0,)))
    for scheme in (sv.EXPLICIT, sv.SEMI_IMPLICIT):
        cfg = sv.StepperConfig(scheme, 1e-5)
        a = sv.step(circle64, plain, cfg)
        b = sv.step(circle64, forced, cfg)
        assert a.values.tobytes() == b.values.tobytes()


def test_constant_forcing_shifts_constant_state():
    grid = fld.Grid(1, 16)
    u = fld.PhaseField(grid, np.zeros(16), 0.5)
    new = sv.step_explicit(u, sv.Dynamics.forced(DW, sv.ConstantForce((0.2,))), 1e-4)
    np.testing.assert_allclose(new.values, 1e-4 * (0.2 / 0.5), rtol=1e-14)


def test_plane_wave_derivatives():
    grid = fld.Grid(2, 32)
    f = sv.PlaneWaveForce((0.7,), (1, 2), omega=3.0, phase=0.1)
    h = 1e-6
    np.testing.assert_allclose(f.time_derivative(0.2, grid), (f(0.2 + h, grid) - f(0.2 - h, grid)) / (2 * h),
                               atol=1e-7)
    spectral = sv.Forcing.space_gradient(f, 0.2, grid)
    np.testing.assert_allclose(f.space_gradient(0.2, grid), spectral, atol=1e-10)
    assert f.space_gradient(0.2, grid).shape == (2, 1, 32, 32)
    with pytest.raises(ValueError):
        f(0.0, fld.Grid(1, 16))


@pytest.mark.parametrize("scheme", [sv.EXPLICIT, sv.SEMI_IMPLICIT])
def test_volume_preserving_keeps_mean(circle64, scheme):
    dyn = sv.Dynamics.volume_preserving(DW)
    dt = 0.5 * sv.explicit_dt_limit(circle64.grid, 0.03, DW)
    m0 = fld.mean(circle64.values[0], circle64.grid)
    u = circle64
    for _ in range(30):
        info = {}
        u = sv.step(u, dyn, sv.StepperConfig(scheme, dt), info=info, target_mean=m0)
    assert abs(fld.mean(u.values[0], u.grid) - m0) < 1e-14
    assert info["lambda_formula"] == pytest.approx(info["lambda_projection"], rel=1e-2)


def test_lagrange_multiplier_frozen(circle64):
    # on freshly prepared data int dW(q) vanishes to leading order, so lambda
    # starts well below sigma H / 2 and reaches it once the profile bends
    assert sv.lagrange_multiplier(circle64, DW) == pytest.approx(0.3769654230027203, rel=1e-10)
    grid = fld.Grid(1, 64)
    stripe = sv.prepare_initial_data(sv.Stripe(0, 0.5), DW, grid, 0.05)
    assert abs(sv.lagrange_multiplier(stripe, DW)) < 1e-10


def test_mm_step_decreases_objective_and_energy(circle64):
    dyn = sv.Dynamics.plain(DW)
    dt = 0.2 * 0.03**2
    info = {}
    new = sv.step_minimizing_movement(circle64, dyn, dt, info=info)
    assert info["mm_grad_norm"] < 1e-9 and not info["mm_stalled"]
    assert info["mm_objective"] <= sv.mm_objective(circle64.values, circle64, DW, dt)
    d = new.values - circle64.values
    lhs = dg.energy(new, DW).total + 0.03 / (2 * dt) * fld.integrate(np.sum(d * d, axis=0), new.grid)
    assert lhs <= dg.energy(circle64, DW).total


def test_mm_gradient_matches_objective(circle64):
    dt = 1e-4
    rng = np.random.default_rng(0)
    v = circle64.values + 0.01 * rng.normal(size=circle64.values.shape)
    d = rng.normal(size=v.shape)
    h = 1e-6
    fd = (sv.mm_objective(v + h * d, circle64, DW, dt) - sv.mm_objective(v - h * d, circle64, DW, dt)) / (2 * h)
    an = fld.integrate(np.sum(sv.mm_gradient(v, circle64, DW, dt) * d, axis=0), circle64.grid)
    assert fd == pytest.approx(an, rel=1e-6)


def test_mm_rejects_other_variants(circle64):
    with pytest.raises(ValueError):
        sv.step_minimizing_movement(circle64, sv.Dynamics.volume_preserving(DW), 1e-4)


def test_mm_iteration_cap_raises_with_best_iterate(circle64):
    with pytest.raises(sv.SolverError) as info:
        sv.step_minimizing_movement(circle64, sv.Dynamics.plain(DW), 1e-3, iter_cap=2)
    assert info.value.best is not None


def test_run_lands_on_t_end_and_records(circle64):
    dyn = sv.Dynamics.plain(DW)
    cfg = sv.StepperConfig(sv.SEMI_IMPLICIT, 3e-5)
    seen = []
    traj = sv.run(circle64, dyn, cfg, 1e-4, observers=[seen.append], stride=2)
    assert traj.steps == 4 and traj.status == "completed"
    assert traj.final.time == 1e-4
    assert [o.step for o in traj.observations] == [0, 2, 4]
    assert len(seen) == 3
    assert np.all(np.diff(traj.energies) < 0)
    # cumulative dissipation matches the energy drop up to the O(dt) scheme error
    assert traj.observations[-1].dissipation == pytest.approx(traj.energies[0] - traj.energies[-1], rel=0.2)


def test_run_with_zero_span(circle64):
    traj = sv.run(circle64, sv.Dynamics.plain(DW), sv.StepperConfig(dt=1e-5), 0.0)
    assert traj.steps == 0 and len(traj.observations) == 1
    with pytest.raises(ValueError):
        sv.run(circle64.copy(time=1.0), sv.Dynamics.plain(DW), sv.StepperConfig(dt=1e-5), 0.5)


def test_run_drops_intermediate_states(circle64):
    traj = sv.run(circle64, sv.Dynamics.plain(DW), sv.StepperConfig(dt=1e-5), 5e-5, stride=1, keep_states=False)
    states = [o.state is not None for o in traj.observations]
    assert states[0] and states[-1] and not any(states[1:-1])


def test_run_reports_lambdas_for_volume_variant(circle64):
    traj = sv.run(circle64, sv.Dynamics.volume_preserving(DW), sv.StepperConfig(dt=1e-5), 3e-5, stride=1)
    assert len(traj.lambdas) == 3
    assert traj.observations[0].lambda_formula == pytest.approx(0.3769654230027203, rel=1e-10)


def test_run_forced_collects_norms(circle64):
    f = sv.PlaneWaveForce((0.5,), (1, 0))
    traj = sv.run(circle64, sv.Dynamics.forced(DW, f), sv.StepperConfig(dt=1e-5), 2e-5)
    norms = traj.forcing_norms
    assert norms["f_sq"] == pytest.approx(2e-5 * 0.125, rel=1e-12)
    assert norms["grad_f_sq"] == pytest.approx(2e-5 * 0.125 * (2 * np.pi) ** 2, rel=1e-12)


def test_explicit_blow_up_is_reported():
    grid = fld.Grid(1, 16)
    u = fld.PhaseField(grid, np.full(16, 5.0), 0.5)
    with pytest.raises(sv.SolverError):
        sv.run(u, sv.Dynamics.plain(DW), sv.StepperConfig(sv.EXPLICIT, 10.0), 100.0)


def test_signed_distance_and_geometry_errors():
    grid = fld.Grid(2, 32)
    s = sv.signed_distance(sv.Circle((0.5, 0.5), 0.25), grid)
    assert s[16, 16] == pytest.approx(0.25)
    # minimum image: a circle across the corner
    s = sv.signed_distance(sv.Circle((0.0, 0.0), 0.1), grid)
    assert s[31, 31] == pytest.approx(0.1 - math.sqrt(2) / 32)
    with pytest.raises(ValueError):
        sv.signed_distance(sv.Circles((sv.Circle((0.3, 0.5), 0.2), sv.Circle((0.6, 0.5), 0.2))), grid)
    with pytest.raises(ValueError):
        sv.signed_distance(sv.Circle((0.5,), 0.2), grid)


def test_tripod_labels_have_three_equal_sectors():
    grid = fld.Grid(2, 64)
    labels = sv.tripod_labels(sv.Tripod((0.5, 0.5)), grid)
    # sector k spans 90 + 120 k to 210 + 120 k degrees
    assert labels[15, 42] == 0
    assert labels[32, 13] == 1
    assert labels[49, 42] == 2
    assert set(np.unique(labels)) == {0, 1, 2}


def test_initial_data_is_well_prepared():
    grid = fld.Grid(1, 256)
    u = sv.prepare_initial_data(sv.Stripe(0, 0.5), DW, grid, 0.02)
    x = grid.coordinates()[0]
    expected = np.tanh((0.25 - np.abs(x - 0.5)) / (math.sqrt(2) * 0.02))
    np.testing.assert_allclose(u.values[0], expected, atol=1e-5)


def test_tripod_initial_data_sits_in_wells_far_from_interfaces():
    tw = pt.triple_well()
    grid = fld.Grid(2, 64)
    u = sv.prepare_initial_data(sv.Tripod((0.5, 0.5)), tw, grid, 0.03)
    np.testing.assert_allclose(u.values[:, 15, 42], tw.wells[0], atol=1e-3)


@settings(max_examples=15, deadline=None)
@given(st.floats(0.05, 0.45), st.floats(0.1, 0.9))
def test_semi_implicit_is_energy_stable_for_any_dt(radius, dt_ratio):
    grid = fld.Grid(2, 32)
    eps = 0.06
    u = sv.prepare_initial_data(sv.Circle((0.5, 0.5), radius * 0.9), DW, grid, eps)
    new = sv.step_semi_implicit(u, sv.Dynamics.plain(DW), dt_ratio * 100 * eps**2)
    assert dg.energy(new, DW).total <= dg.energy(u, DW).total + 1e-12
