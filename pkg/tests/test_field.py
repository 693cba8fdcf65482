import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mcfpf import field as fld


def test_grid_rejects_non_power_of_two():
    with pytest.raises(ValueError):
        fld.Grid(2, 48)
    with pytest.raises(ValueError):
        fld.Grid(4, 16)
    with pytest.raises(ValueError):
        fld.Grid(1, 16, 0.0)


def test_grid_geometry():
    g = fld.Grid(2, 32, 2.0)
    assert g.h == 0.0625
    assert g.shape == (32, 32)
    assert g.volume == 4.0
    x = g.coordinates()
    assert x.shape == (2, 32, 32)
    assert x[0, 5, 0] == 5 * g.h and x[1, 0, 7] == 7 * g.h


def test_laplacian_of_trig_mode_is_exact():
    g = fld.Grid(2, 32)
    x, y = g.coordinates()
    f = np.sin(2 * np.pi * 3 * x) * np.cos(2 * np.pi * 2 * y)
    lap = fld.laplacian(f, g)
    np.testing.assert_allclose(lap, -(2 * np.pi) ** 2 * 13 * f, atol=1e-9)


def test_gradient_layout_and_values():
    g = fld.Grid(2, 32)
    x, y = g.coordinates()
    f = np.sin(2 * np.pi * x) + np.cos(4 * np.pi * y)
    grad = fld.gradient(f, g)
    assert grad.shape == (2, 32, 32)
    np.testing.assert_allclose(grad[0], 2 * np.pi * np.cos(2 * np.pi * x), atol=1e-11)
    np.testing.assert_allclose(grad[1], -4 * np.pi * np.sin(4 * np.pi * y), atol=1e-11)


def test_gradient_of_stack_prepends_derivative_axis():
    g = fld.Grid(1, 16)
    stack = np.random.default_rng(0).normal(size=(3, 16))
    assert fld.gradient(stack, g).shape == (1, 3, 16)


def test_nyquist_mode_has_zero_first_derivative():
    g = fld.Grid(1, 16)
    f = np.cos(np.pi * 16 * g.coordinates()[0])  # alternating +-1
    assert np.max(np.abs(fld.gradient(f, g))) < 1e-12
    np.testing.assert_allclose(fld.laplacian(f, g), -((np.pi * 16) ** 2) * f, rtol=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from([1, 2, 3]))
def test_div_grad_equals_laplacian_for_random_fields(seed, dim):
    g = fld.Grid(dim, 16 if dim < 3 else 8)
    f = np.random.default_rng(seed).normal(size=g.shape)
    # drop the Nyquist content where first derivatives and the Laplacian differ by design
    fh = np.fft.fftn(f)
    k = np.fft.fftfreq(g.n, 1.0 / g.n)
    mask = np.ones(g.shape, dtype=bool)
    for axis in range(dim):
        shape = [1] * dim
        shape[axis] = g.n
        mask &= (np.abs(k) < g.n // 2).reshape(shape)
    f = np.real(np.fft.ifftn(fh * mask))
    lhs = fld.divergence(fld.gradient(f, g), g)
    rhs = fld.laplacian(f, g)
    assert np.max(np.abs(lhs - rhs)) <= 1e-10 * max(1.0, np.max(np.abs(rhs)))


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_parseval(seed):
    g = fld.Grid(2, 16, 3.0)
    f = np.random.default_rng(seed).normal(size=g.shape)
    direct = fld.integrate(f * f, g)
    assert abs(fld.spectral_integral_of_square(f, g) - direct) <= 1e-10 * direct


def test_integrate_constant_and_window():
    g = fld.Grid(2, 16, 2.0)
    assert fld.integrate(np.ones(g.shape), g) == pytest.approx(4.0, rel=1e-15)
    w = np.zeros(g.shape)
    w[:8] = 1.0
    assert fld.integrate(np.ones(g.shape), g, w) == pytest.approx(2.0, rel=1e-15)
    with pytest.raises(ValueError):
        fld.integrate(np.ones((8, 8)), g)


def test_integrate_independent_of_layout():
    g = fld.Grid(2, 32)
    f = np.random.default_rng(3).normal(size=g.shape)
    assert fld.integrate(f, g) == fld.integrate(np.asfortranarray(f), g)


def test_phase_field_validation():
    g = fld.Grid(1, 16)
    u = fld.PhaseField(g, np.zeros(16), 0.1)
    assert u.values.shape == (1, 16)
    with pytest.raises(ValueError):
        fld.PhaseField(g, np.zeros(8), 0.1)
    with pytest.raises(ValueError):
        fld.PhaseField(g, np.full(16, np.nan), 0.1)
    with pytest.raises(ValueError):
        fld.PhaseField(g, np.zeros(16), 0.0)
    assert fld.PhaseField(g, np.zeros(16), 0.1).resolution_warning
    assert not fld.PhaseField(g, np.zeros(16), 0.2).resolution_warning


def test_readonly_view_shares_memory_but_blocks_writes():
    g = fld.Grid(1, 16)
    u = fld.PhaseField(g, np.zeros(16), 0.2)
    r = u.readonly()
    with pytest.raises(ValueError):
        r.values[0, 0] = 1.0
    u.values[0, 0] = 2.0
    assert r.values[0, 0] == 2.0


def test_snapshot_round_trip_is_bit_exact(tmp_path):
    g = fld.Grid(2, 16, 1.5)
    vals = np.random.default_rng(1).normal(size=(3, 16, 16))
    u = fld.PhaseField(g, vals, 0.17, 0.125)
    path = tmp_path / "u.mcfpf"
    fld.save_snapshot(u, path)
    assert path.stat().st_size == 56 + 8 * 3 * 256
    back = fld.load_snapshot(path)
    assert back.values.tobytes() == u.values.tobytes()
    assert (back.grid, back.epsilon, back.time) == (g, 0.17, 0.125)


def test_snapshot_layout_is_x_fastest(tmp_path):
    g = fld.Grid(2, 8)
    vals = np.arange(64, dtype=float).reshape(8, 8)
    fld.save_snapshot(fld.PhaseField(g, vals, 0.5), tmp_path / "s")
    raw = np.frombuffer((tmp_path / "s").read_bytes()[56:], dtype="<f8")
    assert raw[1] == vals[1, 0] and raw[8] == vals[0, 1]


def test_snapshot_errors(tmp_path):
    g = fld.Grid(1, 8)
    path = tmp_path / "s"
    fld.save_snapshot(fld.PhaseField(g, np.ones(8), 0.5), path)
    data = path.read_bytes()
    path.write_bytes(data[:-8])
    with pytest.raises(fld.SnapshotTruncatedError):
        fld.load_snapshot(path)
    path.write_bytes(b"NOTASNAP" + data[8:])
    with pytest.raises(fld.SnapshotHeaderError):
        fld.load_snapshot(path)
    path.write_bytes(data[:20])
    with pytest.raises(fld.SnapshotTruncatedError):
        fld.load_snapshot(path)


def test_set_threads_does_not_change_results():
    g = fld.Grid(2, 64)
    f = np.random.default_rng(2).normal(size=g.shape)
    a = fld.laplacian(f, g)
    fld.set_threads(2)
    try:
        b = fld.laplacian(f, g)
    finally:
        fld.set_threads(1)
    np.testing.assert_allclose(a, b, rtol=0, atol=1e-9 * math.sqrt(np.sum(a * a)))
