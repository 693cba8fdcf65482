"""Multi-well potentials and their calculus.

A potential ``W: R^N -> [0, inf)`` is evaluated on state arrays shaped
``(N, ...)``: the leading axis holds the components of the order parameter and
any trailing axes are spatial.  Every potential carries a split
``W = W_conv + W_pert`` with ``W_pert(u) = -(C/2) |u - c|^2`` for its declared
perturbation Hessian bound ``C`` and split center ``c``, which is the form the
stabilized steppers rely on.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

from functools import lru_cache

import numpy as np


class DomainError(ValueError):
    """Raised when a potential is evaluated at a non-finite state."""


def _as_state(u, dim_state: int) -> np.ndarray:
    u = np.asarray(u, dtype=np.float64)
    if dim_state == 1 and (u.ndim == 0 or u.shape[0] != 1):
        u = u[np.newaxis]
    if u.shape[0] != dim_state:
        raise ValueError(f"state has {u.shape[0]} components, potential expects {dim_state}")
    return u


@dataclass(frozen=True, eq=False)
class Potential:
    """A multi-well potential with gradient, convex split and growth constants.

    Parameters
    ----------
    name : str
        Identifier used in configs and reports.
    wells : array_like, shape (P, N)
        The zeros ``alpha_1..alpha_P`` of ``W``.
    value_fn, grad_fn : callable
        Vectorized ``W`` and ``dW/du`` acting on arrays shaped ``(N, ...)``.
    growth_exponent, growth_radius : float
        Declared ``p`` and ``R`` of the polynomial growth bounds.
    growth_lower, growth_upper : float
        Declared ``c`` and ``C`` with ``c r^p <= W <= C r^p`` and
        ``|dW| <= C r^(p-1)`` for ``|u| = r >= R``.
    pert_hessian_bound : float
        ``C~`` bounding the second derivatives of ``W_pert`` (in modulus).
    split_center : array_like, shape (N,)
        Center of the quadratic perturbation.
    """

    name: str
    wells: np.ndarray
    value_fn: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    grad_fn: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    growth_exponent: float
    growth_radius: float
    growth_lower: float
    growth_upper: float
    pert_hessian_bound: float
    split_center: np.ndarray

    def __post_init__(self):
        wells = np.atleast_2d(np.asarray(self.wells, dtype=np.float64))
        object.__setattr__(self, "wells", wells)
        center = np.asarray(self.split_center, dtype=np.float64).reshape(-1)
        object.__setattr__(self, "split_center", center)
        if wells.shape[0] < 2:
            raise ValueError("a potential needs at least two wells")
        if center.shape[0] != wells.shape[1]:
            raise ValueError("split center dimension does not match the wells")
        if self.growth_exponent < 2:
            raise ValueError("growth exponent must be >= 2")

    @property
    def dim_state(self) -> int:
        return self.wells.shape[1]

    @property
    def num_wells(self) -> int:
        return self.wells.shape[0]

    def value(self, u: np.ndarray) -> np.ndarray:
        return self.value_fn(u)

    def gradient(self, u: np.ndarray) -> np.ndarray:
        return self.grad_fn(u)

    def _centered(self, u):
        return u - self.split_center.reshape((-1,) + (1,) * (u.ndim - 1))

    def pert_value(self, u: np.ndarray) -> np.ndarray:
        d = self._centered(u)
        return -0.5 * self.pert_hessian_bound * np.sum(d * d, axis=0)

    def pert_gradient(self, u: np.ndarray) -> np.ndarray:
        return -self.pert_hessian_bound * self._centered(u)

    def conv_value(self, u: np.ndarray) -> np.ndarray:
        return self.value(u) - self.pert_value(u)

    def conv_gradient(self, u: np.ndarray) -> np.ndarray:
        return self.gradient(u) - self.pert_gradient(u)

    def split(self, u):
        """Return ``(W_conv(u), W_pert(u))``."""
        u = _as_state(u, self.dim_state)
        return self.conv_value(u), self.pert_value(u)

    def hessian(self, u: np.ndarray, step: float = 1e-5) -> np.ndarray:
        """Central-difference Hessian of ``W``, shape ``(N, N, ...)``."""
        n = self.dim_state
        out = np.empty((n, n) + u.shape[1:])
        for k in range(n):
            e = np.zeros((n,) + (1,) * (u.ndim - 1))
            e[k] = step
            out[:, k] = (self.gradient(u + e) - self.gradient(u - e)) / (2 * step)
        return 0.5 * (out + np.swapaxes(out, 0, 1))

    def stiffness_bound(self, samples: int = 64, seed: int = 0) -> float:
        """Largest sampled Hessian eigenvalue in balls around the wells."""
        return _stiffness_bound(self, samples, seed)


@lru_cache(maxsize=64)
def _stiffness_bound(pot: Potential, samples: int, seed: int) -> float:
    rng = np.random.default_rng(seed)
    wells = pot.wells
    gaps = [np.linalg.norm(a - b) for i, a in enumerate(wells) for b in wells[i + 1:]]
    radius = 0.1 * min(gaps)
    pts = [wells]
    for a in wells:
        d = rng.normal(size=(samples, pot.dim_state))
        d *= (radius * rng.random(samples) ** (1.0 / pot.dim_state) / np.linalg.norm(d, axis=1))[:, None]
        pts.append(a + d)
    u = np.concatenate(pts).T
    hess = np.moveaxis(pot.hessian(u), -1, 0)
    return float(np.max(np.linalg.eigvalsh(hess)))


def eval_potential(pot: Potential, u) -> float:
    """Evaluate ``W`` at a single state point."""
    u = _as_state(u, pot.dim_state)
    if not np.all(np.isfinite(u)):
        raise DomainError("potential evaluated at a non-finite state")
    return float(pot.value(u.reshape(pot.dim_state, 1))[0])


def grad_potential(pot: Potential, u) -> np.ndarray:
    """Evaluate ``dW/du`` at a single state point; returns shape ``(N,)``."""
    u = _as_state(u, pot.dim_state)
    if not np.all(np.isfinite(u)):
        raise DomainError("potential gradient evaluated at a non-finite state")
    return pot.gradient(u.reshape(pot.dim_state, 1))[:, 0]


# ---------------------------------------------------------------------------
# builtins


def _double_well_value(u):
    return 0.25 * (u[0] ** 2 - 1.0) ** 2


def _double_well_grad(u):
    x = u[0]
    return (x * x * x - x)[np.newaxis]


@lru_cache(maxsize=None)
def double_well() -> Potential:
    """``W(u) = (u^2 - 1)^2 / 4`` with wells at -1 and +1."""
    return Potential(
        name="double_well",
        wells=[[-1.0], [1.0]],
        value_fn=_double_well_value,
        grad_fn=_double_well_grad,
        growth_exponent=4,
        growth_radius=2.0,
        growth_lower=0.1,
        growth_upper=1.0,
        pert_hessian_bound=1.0,
        split_center=[0.0],
    )


def _unit_well_value(u):
    return 18.0 * u[0] ** 2 * (1.0 - u[0]) ** 2


def _unit_well_grad(u):
    x = u[0]
    return (36.0 * x * (1.0 - x) * (1.0 - 2.0 * x))[np.newaxis]


@lru_cache(maxsize=None)
def unit_well01() -> Potential:
    """``W(u) = 18 u^2 (1 - u)^2``: wells 0 and 1, surface tension exactly 1."""
    return Potential(
        name="unit_well01",
        wells=[[0.0], [1.0]],
        value_fn=_unit_well_value,
        grad_fn=_unit_well_grad,
        growth_exponent=4,
        growth_radius=2.0,
        growth_lower=4.0,
        growth_upper=140.0,
        pert_hessian_bound=18.0,
        split_center=[0.5],
    )


def triangle_wells(side: float = 1.0) -> np.ndarray:
    """Vertices of an equilateral triangle centered at the origin, one on the +y axis."""
    r = side / np.sqrt(3.0)
    angles = np.pi / 2 + np.arange(3) * 2 * np.pi / 3
    return np.stack([r * np.cos(angles), r * np.sin(angles)], axis=1)


def _product_of_squares(wells: np.ndarray):
    def value(u):
        shape = (-1,) + (1,) * (u.ndim - 1)
        out = 1.0
        for a in wells:
            d = u - a.reshape(shape)
            out = out * np.sum(d * d, axis=0)
        return out

    def grad(u):
        shape = (-1,) + (1,) * (u.ndim - 1)
        diffs = [u - a.reshape(shape) for a in wells]
        sq = [np.sum(d * d, axis=0) for d in diffs]
        out = np.zeros_like(u, dtype=np.float64)
        for i, d in enumerate(diffs):
            rest = 1.0
            for j, s in enumerate(sq):
                if j != i:
                    rest = rest * s
            out = out + 2.0 * d * rest
        return out

    return value, grad


@lru_cache(maxsize=None)
def triple_well() -> Potential:
    """``W(u) = prod_i |u - alpha_i|^2`` on the unit-side equilateral triangle in R^2."""
    wells = triangle_wells(1.0)
    value, grad = _product_of_squares(wells)
    return Potential(
        name="triple_well",
        wells=wells,
        value_fn=value,
        grad_fn=grad,
        growth_exponent=6,
        growth_radius=2.0,
        growth_lower=0.1,
        growth_upper=25.0,
        # sampled minimum Hessian eigenvalue of W is about -0.794
        pert_hessian_bound=0.8,
        split_center=[0.0, 0.0],
    )


BUILTINS = {
    "double_well": double_well,
    "unit_well01": unit_well01,
    "triple_well": triple_well,
}


def builtin(name: str) -> Potential:
    try:
        return BUILTINS[name]()
    except KeyError:
        raise KeyError(f"unknown builtin potential {name!r}; choose from {sorted(BUILTINS)}") from None


def polynomial_potential(
    terms: Sequence[tuple[float, Sequence[int]]],
    wells,
    *,
    name: str = "polynomial",
    growth_exponent: float,
    growth_radius: float,
    growth_lower: float,
    growth_upper: float,
    pert_hessian_bound: float,
    split_center=None,
) -> Potential:
    """Build a potential from monomials ``coef * prod_k u_k^e_k``.

    ``terms`` is a list of ``(coefficient, exponents)`` with one exponent per
    state component.
    """
    wells = np.atleast_2d(np.asarray(wells, dtype=np.float64))
    n = wells.shape[1]
    coefs = np.array([float(c) for c, _ in terms])
    exps = np.array([list(e) for _, e in terms], dtype=int)
    if exps.ndim != 2 or exps.shape[1] != n:
        raise ValueError(f"every monomial needs {n} exponents")
    if np.any(exps < 0):
        raise ValueError("monomial exponents must be non-negative")

    def value(u):
        out = np.zeros(u.shape[1:])
        for c, e in zip(coefs, exps):
            out = out + c * np.prod([u[k] ** e[k] for k in range(n)], axis=0)
        return out

    def grad(u):
        out = np.zeros(u.shape)
        for c, e in zip(coefs, exps):
            for k in range(n):
                if e[k] == 0:
                    continue
                factors = [u[m] ** (e[m] - (m == k)) for m in range(n)]
                out[k] = out[k] + c * e[k] * np.prod(factors, axis=0)
        return out

    if split_center is None:
        split_center = wells.mean(axis=0)
    return Potential(
        name=name,
        wells=wells,
        value_fn=value,
        grad_fn=grad,
        growth_exponent=growth_exponent,
        growth_radius=growth_radius,
        growth_lower=growth_lower,
        growth_upper=growth_upper,
        pert_hessian_bound=pert_hessian_bound,
        split_center=split_center,
    )


# ---------------------------------------------------------------------------
# hypothesis checks


@dataclass
class HypothesisCheck:
    name: str
    passed: bool
    worst: float
    detail: str = ""


@dataclass
class HypothesisReport:
    potential: str
    checks: list[HypothesisCheck]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def __getitem__(self, name: str) -> HypothesisCheck:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)


def _sphere_points(rng, count: int, dim: int, rmin: float, rmax: float) -> np.ndarray:
    d = rng.normal(size=(count, dim))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    r = rng.uniform(rmin, rmax, size=count)
    # always include both ends of the radial range
    r[0], r[-1] = rmin, rmax
    return (d * r[:, None]).T


def verify_hypotheses(pot: Potential, sample_count: int = 1000, seed: int = 0) -> HypothesisReport:
    """Check the declared growth and splitting constants on pseudo-random samples.

    The checks cover the growth sandwich and derivative growth on
    ``R <= |u| <= 10 R``, consistency of the split, midpoint convexity of
    ``W_conv`` and the second-difference bound on ``W_pert``.
    """
    if sample_count < 1:
        raise ValueError("sample_count must be >= 1")
    rng = np.random.default_rng(seed)
    n = pot.dim_state
    p, R = pot.growth_exponent, pot.growth_radius
    c_lo, c_hi = pot.growth_lower, pot.growth_upper
    checks = []

    u = _sphere_points(rng, max(sample_count, 2), n, R, 10 * R)
    r = np.linalg.norm(u, axis=0)
    w = pot.value(u)
    ratio = w / r**p
    ok = bool(np.all(ratio >= c_lo) and np.all(ratio <= c_hi))
    checks.append(HypothesisCheck("growth", ok, float(max(c_lo - ratio.min(), ratio.max() - c_hi)),
                                  f"W/r^p in [{ratio.min():.4g}, {ratio.max():.4g}] vs [{c_lo}, {c_hi}]"))

    g = np.linalg.norm(pot.gradient(u), axis=0) / r ** (p - 1)
    ok = bool(np.all(g <= c_hi))
    checks.append(HypothesisCheck("growth_derivative", ok, float(g.max() - c_hi),
                                  f"max |dW|/r^(p-1) = {g.max():.4g} vs {c_hi}"))

    box = 10 * R
    v = rng.uniform(-box, box, size=(n, sample_count))
    conv, pert = pot.conv_value(v), pot.pert_value(v)
    err = np.abs(conv + pert - pot.value(v)) / np.maximum(1.0, np.abs(pot.value(v)))
    checks.append(HypothesisCheck("split_consistency", bool(np.all(err < 1e-12)), float(err.max())))

    a = rng.uniform(-box, box, size=(n, sample_count))
    b = rng.uniform(-box, box, size=(n, sample_count))
    fa, fb, fm = pot.conv_value(a), pot.conv_value(b), pot.conv_value(0.5 * (a + b))
    scale = np.maximum(1.0, np.abs(fa) + np.abs(fb))
    excess = (fm - 0.5 * (fa + fb)) / scale
    checks.append(HypothesisCheck("convexity", bool(np.all(excess <= 1e-12)), float(excess.max())))

    d = rng.normal(size=(n, sample_count))
    d /= np.linalg.norm(d, axis=0)
    step = 1e-3 * box
    second = (pot.pert_value(a + step * d) - 2 * pot.pert_value(a) + pot.pert_value(a - step * d)) / step**2
    slack = second - pot.pert_hessian_bound
    tol = 1e-6 * max(1.0, pot.pert_hessian_bound)
    checks.append(HypothesisCheck("perturbation_hessian", bool(np.all(slack <= tol)), float(slack.max())))
    return HypothesisReport(pot.name, checks)
