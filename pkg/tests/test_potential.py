import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mcfpf import potential as pt


@pytest.mark.parametrize("name", sorted(pt.BUILTINS))
def test_wells_are_zeros_and_critical_points(name):
    pot = pt.builtin(name)
    for a in pot.wells:
        assert pt.eval_potential(pot, a) == pytest.approx(0.0, abs=1e-14)
        np.testing.assert_allclose(pt.grad_potential(pot, a), 0.0, atol=1e-12)


@pytest.mark.parametrize("name", sorted(pt.BUILTINS))
def test_builtins_satisfy_declared_constants(name):
    report = pt.verify_hypotheses(pt.builtin(name), sample_count=500, seed=3)
    assert report.passed, [c for c in report.checks if not c.passed]


def test_frozen_values():
    assert pt.eval_potential(pt.double_well(), 0.0) == 0.25
    assert pt.eval_potential(pt.unit_well01(), 0.5) == 1.125
    tw = pt.triple_well()
    assert pt.eval_potential(tw, [0.3, 0.2]) == pytest.approx(0.05693944529218563, rel=1e-12)
    np.testing.assert_allclose(pt.grad_potential(tw, [0.3, 0.2]), [0.16898406, 0.07801503], rtol=1e-7)
    np.testing.assert_allclose(np.linalg.norm(tw.wells, axis=1), 1 / np.sqrt(3), rtol=1e-14)


def test_builtins_are_cached_instances():
    assert pt.double_well() is pt.double_well()


@settings(max_examples=40, deadline=None)
@given(st.sampled_from(sorted(pt.BUILTINS)), st.integers(0, 2**32 - 1))
def test_gradient_matches_finite_differences(name, seed):
    pot = pt.builtin(name)
    rng = np.random.default_rng(seed)
    u = rng.uniform(-1.5, 1.5, size=(pot.dim_state, 4))
    d = rng.normal(size=u.shape)
    h = 1e-6
    fd = (pot.value(u + h * d) - pot.value(u - h * d)) / (2 * h)
    an = np.sum(pot.gradient(u) * d, axis=0)
    np.testing.assert_allclose(fd, an, rtol=1e-6, atol=1e-6)


def test_split_adds_up_and_convex_part_is_convex():
    pot = pt.triple_well()
    u = np.random.default_rng(0).uniform(-2, 2, size=(2, 200))
    conv, pert = pot.split(u)
    np.testing.assert_allclose(conv + pert, pot.value(u), rtol=1e-13, atol=1e-13)
    hess = np.moveaxis(pot.hessian(u) + pot.pert_hessian_bound * np.eye(2)[..., None], -1, 0)
    assert np.min(np.linalg.eigvalsh(hess)) > -1e-6


def test_stiffness_bound_frozen():
    assert pt.double_well().stiffness_bound() == pytest.approx(3.31294185297315, rel=1e-9)


def test_polynomial_potential_matches_builtin():
    poly = pt.polynomial_potential(
        [(0.25, [4]), (-0.5, [2]), (0.25, [0])],
        [[-1.0], [1.0]],
        growth_exponent=4, growth_radius=2, growth_lower=0.1, growth_upper=1, pert_hessian_bound=1,
    )
    u = np.linspace(-3, 3, 41)[None]
    np.testing.assert_allclose(poly.value(u), pt.double_well().value(u), atol=1e-14)
    np.testing.assert_allclose(poly.gradient(u), pt.double_well().gradient(u), atol=1e-13)
    assert pt.verify_hypotheses(poly).passed


def test_wrong_constants_are_reported():
    bad = pt.polynomial_potential(
        [(0.25, [4]), (-0.5, [2]), (0.25, [0])],
        [[-1.0], [1.0]],
        growth_exponent=4, growth_radius=2, growth_lower=0.5, growth_upper=1, pert_hessian_bound=0.1,
    )
    report = pt.verify_hypotheses(bad)
    assert not report["growth"].passed
    assert not report["convexity"].passed


def test_domain_errors():
    with pytest.raises(pt.DomainError):
        pt.eval_potential(pt.double_well(), np.nan)
    with pytest.raises(ValueError):
        pt.eval_potential(pt.triple_well(), [1.0])
    with pytest.raises(KeyError):
        pt.builtin("quintic")
    with pytest.raises(ValueError):
        pt.verify_hypotheses(pt.double_well(), sample_count=0)
