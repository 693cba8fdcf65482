"""Phase-field diagnostics: energies, equipartition, tilt-excess and pairings.

Every derivative is the spectral one from :mod:`mcfpf.field`, the same
calculus the steppers use, so discrete integration by parts holds to
round-off.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np

from . import field as fld
from .field import Grid, PhaseField
from .potential import Potential


@dataclass(frozen=True)
class EnergyBreakdown:
    dirichlet: float
    potential: float
    window_id: str | None = None

    @property
    def total(self) -> float:
        return self.dirichlet + self.potential


def _check_window(window, grid: Grid):
    if window is None:
        return None
    window = np.asarray(window, dtype=np.float64)
    if window.shape != grid.shape:
        raise ValueError(f"window shape {window.shape} does not match grid {grid.shape}")
    if np.min(window) < 0 or np.max(window) > 1:
        raise ValueError("scalar windows must take values in [0, 1]")
    return window


def grad_sq(u: PhaseField) -> np.ndarray:
    """``|grad u|^2`` summed over components and axes."""
    g = fld.gradient(u.values, u.grid)
    return np.sum(g * g, axis=(0, 1))


def energy(u: PhaseField, pot: Potential, window=None, window_id: str | None = None) -> EnergyBreakdown:
    """``E_eps(eta, u) = int eta (eps/2 |grad u|^2 + W(u)/eps)``."""
    window = _check_window(window, u.grid)
    eps = u.epsilon
    dirichlet = fld.integrate(0.5 * eps * grad_sq(u), u.grid, window)
    potential = fld.integrate(pot.value(u.values) / eps, u.grid, window)
    return EnergyBreakdown(dirichlet, potential, window_id)


# ---------------------------------------------------------------------------
# equipartition


@dataclass(frozen=True)
class EquipartitionReport:
    """The three measures that coincide in the limit, plus the localized energy.

    ``dirichlet = int zeta eps |grad u|^2``, ``potential = int zeta 2 W(u) / eps``,
    ``cross = int zeta sqrt(2 W(u)) |grad u|`` and ``energy = E_eps(zeta, u)``.
    ``gap`` is the largest pairwise difference of the first three divided by
    their maximum (0 when all vanish).
    """

    dirichlet: float
    potential: float
    cross: float
    energy: float

    @property
    def gap(self) -> float:
        vals = (self.dirichlet, self.potential, self.cross)
        top = max(vals)
        if top == 0:
            return 0.0
        return (max(vals) - min(vals)) / top


def equipartition_report(u: PhaseField, pot: Potential, window=None) -> EquipartitionReport:
    window = _check_window(window, u.grid)
    eps = u.epsilon
    gs = grad_sq(u)
    w = np.maximum(pot.value(u.values), 0.0)
    d = fld.integrate(eps * gs, u.grid, window)
    p = fld.integrate(2.0 * w / eps, u.grid, window)
    c = fld.integrate(np.sqrt(2.0 * w) * np.sqrt(gs), u.grid, window)
    return EquipartitionReport(d, p, c, 0.5 * (d + p))


def young_gap(u: PhaseField, pot: Potential, window=None) -> float:
    """``E_eps(zeta, u) - int zeta sqrt(2W) |grad u|``; non-negative cell by cell."""
    rep = equipartition_report(u, pot, window)
    return rep.energy - rep.cross


# ---------------------------------------------------------------------------
# compositions with the primitives


def phi_composition(u: PhaseField, pot: Potential, i: int) -> np.ndarray:
    """The field ``phi_i(u(x))``.

    Scalar potentials use the tabulated primitive; vector potentials use the
    cached state-space lattice (see :class:`mcfpf.geodesic.PhiLattice`).
    """
    from .geodesic import primitive_table

    if not 0 <= i < pot.num_wells:
        raise IndexError(f"well index {i} out of range")
    table = primitive_table(pot)
    if pot.dim_state == 1:
        return table(i, u.values[0])
    return table(i, u.values)


def phi_derivative(u: PhaseField, pot: Potential, i: int) -> np.ndarray:
    """``d phi_i / du`` at every cell, shape ``(N,) + grid.shape``."""
    from .geodesic import primitive_table

    table = primitive_table(pot)
    if pot.dim_state == 1:
        return table.derivative(i, u.values[0])[None]
    return table.derivative(i, u.values)


def total_variation(f: np.ndarray, grid: Grid, window=None) -> float:
    """``int |grad f|`` with the spectral gradient."""
    g = fld.gradient(f, grid)
    return fld.integrate(np.sqrt(np.sum(g * g, axis=0)), grid, _check_window(window, grid))


def centered_gradient(f: np.ndarray, grid: Grid) -> np.ndarray:
    """Second-order centered differences with periodic wrap, shape ``(d,) + f.shape``."""
    axes = range(f.ndim - grid.dim, f.ndim)
    return np.stack([(np.roll(f, -1, axis=a) - np.roll(f, 1, axis=a)) / (2 * grid.h) for a in axes])


def lipschitz_excess(u: PhaseField, pot: Potential, i: int) -> float:
    """Largest cellwise ``|grad(phi_i o u)| - sqrt(2W(u)) |grad u|`` using centered differences.

    The bound holds exactly for the centered difference quotients when the
    right-hand side is taken as the maximum of ``sqrt(2W)`` over the two
    neighbours, times the difference quotient of ``u``; that is what is
    compared here, so the result is ``<= 0`` up to table interpolation error.
    """
    phi = phi_composition(u, pot, i)
    grid = u.grid
    worst = -np.inf
    sq = np.sqrt(2.0 * np.maximum(pot.value(u.values), 0.0))
    for a in range(grid.dim):
        ax_u = u.values.ndim - grid.dim + a
        ax_p = phi.ndim - grid.dim + a
        dphi = np.abs(np.roll(phi, -1, axis=ax_p) - np.roll(phi, 1, axis=ax_p))
        du = np.sqrt(np.sum((np.roll(u.values, -1, axis=ax_u) - np.roll(u.values, 1, axis=ax_u)) ** 2, axis=0))
        # sqrt(2W) along the chord is bounded by its max over the three cells for smooth states
        cap = np.maximum(np.maximum(np.roll(sq, -1, axis=a), np.roll(sq, 1, axis=a)), sq)
        # allow for curvature of sqrt(2W) along the chord
        cap = cap + 0.5 * du * _sqrt2w_lipschitz(pot)
        worst = max(worst, float(np.max(dphi - cap * du)))
    return worst / (2 * grid.h)


def _sqrt2w_lipschitz(pot: Potential) -> float:
    """Crude Lipschitz constant of ``sqrt(2W)`` on the hull of the wells."""
    w = pot.wells
    lo, hi = w.min(axis=0) - 0.25, w.max(axis=0) + 0.25
    rng = np.random.default_rng(1)
    pts = lo[:, None] + (hi - lo)[:, None] * rng.random((pot.dim_state, 4000))
    sq = np.sqrt(2.0 * np.maximum(pot.value(pts), 0.0))
    g = pot.gradient(pts)
    slope = np.linalg.norm(g, axis=0) / np.maximum(sq, 1e-12)
    return float(np.max(slope[sq > 1e-6]))


# ---------------------------------------------------------------------------
# tilt-excess


def tilt_excess(u: PhaseField, pot: Potential, i: int, nu, window=None) -> float:
    """``int eta (1/eps) |eps grad u + d phi_i(u) (x) nu|^2``.

    ``nu`` is meant to be the approximate inner normal of phase ``i``; the
    excess vanishes for an equipartitioned profile whose normal it matches.
    """
    nu = np.asarray(nu, dtype=np.float64)
    if nu.shape != (u.grid.dim,):
        raise ValueError("direction must have one entry per space dimension")
    if abs(np.linalg.norm(nu) - 1.0) > 1e-12:
        raise ValueError("direction must be a unit vector")
    window = _check_window(window, u.grid)
    eps = u.epsilon
    g = fld.gradient(u.values, u.grid)  # (d, N, ...)
    dphi = phi_derivative(u, pot, i)  # (N, ...)
    shape = (-1, 1) + (1,) * u.grid.dim
    m = eps * g + nu.reshape(shape) * dphi[None]
    return fld.integrate(np.sum(m * m, axis=(0, 1)) / eps, u.grid, window)


# ---------------------------------------------------------------------------
# pairings


def _as_vector_field(xi, grid: Grid) -> np.ndarray:
    xi = np.asarray(xi, dtype=np.float64)
    if xi.shape == (grid.dim,):
        xi = np.broadcast_to(xi.reshape((-1,) + (1,) * grid.dim), (grid.dim,) + grid.shape)
    if xi.shape != (grid.dim,) + grid.shape:
        raise ValueError(f"test field must have shape {(grid.dim,) + grid.shape}")
    return xi


def transport(u_values: np.ndarray, xi: np.ndarray, grid: Grid) -> np.ndarray:
    """``(xi . grad) u``, shape like ``u_values``."""
    g = fld.gradient(u_values, grid)
    return np.sum(xi[:, None] * g, axis=0)


def first_variation_pairing(u: PhaseField, pot: Potential, xi) -> float:
    """``int (eps Lap u - dW(u)/eps) . (xi . grad) u``."""
    xi = _as_vector_field(xi, u.grid)
    eps = u.epsilon
    mu = eps * fld.laplacian(u.values, u.grid) - pot.gradient(u.values) / eps
    return fld.integrate(np.sum(mu * transport(u.values, xi, u.grid), axis=0), u.grid)


def first_variation_bound(u: PhaseField, pot: Potential, xi) -> float:
    """``(2 + sqrt(d)) max|grad xi| E_eps(u)``, the bound for the first-variation pairing.

    Integrating by parts, the pairing equals
    ``int div(xi) e_eps - eps grad u : (grad xi) grad u``; the first term is at
    most ``sqrt(d) |grad xi| E`` and the second ``2 |grad xi| E`` (Frobenius
    norms, pointwise maximum).
    """
    xi = _as_vector_field(xi, u.grid)
    g = fld.gradient(xi, u.grid)
    norm = float(np.max(np.sqrt(np.sum(g * g, axis=(0, 1)))))
    return (2.0 + math.sqrt(u.grid.dim)) * norm * energy(u, pot).total


def velocity_pairing(u_before: PhaseField, u_after: PhaseField, dt: float, xi, at: str = "midpoint") -> float:
    """``int eps (xi . grad) u_bar . (u_after - u_before) / dt``.

    ``at`` selects ``u_bar``: the midpoint average (default), or the state
    before or after the step.  With ``at="before"`` and the explicit stepper
    the pairing equals :func:`first_variation_pairing` of ``u_before`` to
    round-off.
    """
    if u_before.grid != u_after.grid or u_before.epsilon != u_after.epsilon:
        raise ValueError("states live on different grids or widths")
    grid = u_before.grid
    xi = _as_vector_field(xi, grid)
    if at == "midpoint":
        ubar = 0.5 * (u_before.values + u_after.values)
    elif at == "before":
        ubar = u_before.values
    elif at == "after":
        ubar = u_after.values
    else:
        raise ValueError(f"unknown transport state {at!r}")
    vel = (u_after.values - u_before.values) / dt
    return u_before.epsilon * fld.integrate(np.sum(transport(ubar, xi, grid) * vel, axis=0), grid)


def forcing_pairing(u: PhaseField, f: np.ndarray, xi) -> float:
    """``int f . (xi . grad) u``, the forcing contribution to the velocity pairing."""
    xi = _as_vector_field(xi, u.grid)
    return fld.integrate(np.sum(f * transport(u.values, xi, u.grid), axis=0), u.grid)


def motion_law_residual(u_before: PhaseField, u_after: PhaseField, dt: float, pot: Potential, xi,
                        at: str = "before", forcing=None) -> float:
    """Relative residual of the tested weak identity over one step.

    ``|V - FV - F| / (|V| + |FV| + E)`` with ``V`` the velocity pairing,
    ``FV`` the first-variation pairing and ``F`` the optional forcing
    pairing, all with the transport evaluated at the same state.
    """
    state = {"before": u_before, "after": u_after}.get(at)
    if state is None:
        state = u_before.copy(values=0.5 * (u_before.values + u_after.values))
    v = velocity_pairing(u_before, u_after, dt, xi, at)
    fv = first_variation_pairing(state, pot, xi)
    fp = forcing_pairing(state, forcing, xi) if forcing is not None else 0.0
    return abs(v - fv - fp) / (abs(v) + abs(fv) + energy(state, pot).total)


# ---------------------------------------------------------------------------
# windows and test fields


def _smooth_step(t: np.ndarray) -> np.ndarray:
    """C-infinity step from 1 (t <= 0) to 0 (t >= 1)."""
    t = np.clip(t, 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore"):
        a = np.where(t < 1, np.exp(-1.0 / np.maximum(1 - t, 1e-300)), 0.0)
        b = np.where(t > 0, np.exp(-1.0 / np.maximum(t, 1e-300)), 0.0)
    return a / (a + b)


def bump(grid: Grid, center, radius: float, smoothness: float = 0.5) -> np.ndarray:
    """Window equal to 1 for ``r <= (1 - smoothness) radius`` and 0 beyond ``radius``."""
    if not 0 < smoothness <= 1:
        raise ValueError("smoothness must lie in (0, 1]")
    x = grid.coordinates()
    c = np.asarray(center, dtype=np.float64).reshape((-1,) + (1,) * grid.dim)
    d = x - c
    d = d - grid.length * np.round(d / grid.length)
    r = np.sqrt(np.sum(d * d, axis=0))
    inner = (1 - smoothness) * radius
    return _smooth_step((r - inner) / (radius - inner))


def radial_field(grid: Grid, center, radius: float, smoothness: float = 0.5) -> np.ndarray:
    """``xi(x) = bump(x) (x - c) / |x - c|``-like field: ``bump(x) (x - c) / radius``."""
    x = grid.coordinates()
    c = np.asarray(center, dtype=np.float64).reshape((-1,) + (1,) * grid.dim)
    d = x - c
    d = d - grid.length * np.round(d / grid.length)
    return bump(grid, center, radius, smoothness)[None] * d / radius


# ---------------------------------------------------------------------------
# trajectory-level quantities


def dissipation_residual(traj) -> float:
    """Discrete energy-dissipation residual of a recorded run.

    Plain and volume-preserving runs: ``E(T) + D - E(0)`` with ``D`` the
    summed ``int eps |(u^{n+1} - u^n)/dt|^2 dt``.  Forced runs return the
    slack of the inequality ``E(T) + D <= E(0) + sum_n int f(t_n).(u^{n+1} - u^n)``,
    i.e. ``E(0) + work - E(T) - D``, which is ``>= 0`` for an energy-stable
    step.
    """
    obs = traj.observations
    if len(obs) < 2:
        raise ValueError("need at least two recorded states")
    first, last = obs[0], obs[-1]
    if traj.dynamics.variant == "forced":
        return first.energy + last.work - last.energy - last.dissipation
    return last.energy + last.dissipation - first.energy


def forced_energy_bound(traj) -> dict:
    """Terms of the forced energy estimate after integrating by parts in time.

    ``sum_n int f_n.(u^{n+1}-u^n)`` equals the boundary term
    ``int f.u |_0^T`` minus ``sum int (f_{n} - f_{n-1}).u^n``; the Cauchy-Schwarz
    bound replaces the latter by ``sum dt ||d_t f|| ||u||``.  Returns the
    pieces and the resulting upper bound for ``E(T) + D``.
    """
    obs = traj.observations
    first, last = obs[0], obs[-1]
    dyn = traj.dynamics
    if first.state is None or last.state is None:
        raise ValueError("the trajectory must keep its first and last state")
    grid = first.state.grid
    f0 = dyn.forcing(first.time, grid)
    f1 = dyn.forcing(last.time, grid)
    boundary = fld.integrate(np.sum(f1 * last.state.values, axis=0), grid) - fld.integrate(
        np.sum(f0 * first.state.values, axis=0), grid
    )
    return {
        "energy_0": first.energy,
        "energy_T": last.energy,
        "dissipation": last.dissipation,
        "work": last.work,
        "boundary": boundary,
        "dt_f_sq": traj.forcing_norms.get("dt_f_sq", 0.0),
    }


@dataclass
class DiagnosticsReport:
    time: float
    energy: EnergyBreakdown
    dissipation_increment: float
    equipartition: EquipartitionReport
    volume: float
    lambda_formula: float | None = None
    lambda_projection: float | None = None
    tilt_excess: float | None = None
    forcing_norms: tuple | None = None

    COLUMNS = (
        "time", "energy_dirichlet", "energy_potential", "energy_total", "dissipation_increment",
        "eq_dirichlet", "eq_potential", "eq_cross", "eq_gap", "volume",
        "lambda_formula", "lambda_projection", "tilt_excess", "f_sq", "dt_f_sq", "grad_f_sq",
    )

    def row(self) -> list:
        fn = self.forcing_norms or (None, None, None)
        vals = [
            self.time, self.energy.dirichlet, self.energy.potential, self.energy.total, self.dissipation_increment,
            self.equipartition.dirichlet, self.equipartition.potential, self.equipartition.cross,
            self.equipartition.gap, self.volume, self.lambda_formula, self.lambda_projection, self.tilt_excess, *fn,
        ]
        return ["" if v is None else repr(float(v)) for v in vals]


def report(obs, previous, pot: Potential, window=None, forcing=None, tilt=None) -> DiagnosticsReport:
    """Build a :class:`DiagnosticsReport` from an observation and the one before it.

    ``tilt`` is an optional ``(i, nu, eta)`` tilt-excess query.
    """
    u = obs.state
    inc = obs.dissipation - (previous.dissipation if previous is not None else obs.dissipation)
    tilt_val = tilt_excess(u, pot, *tilt) if tilt is not None else None
    norms = None
    if forcing is not None:
        f = forcing(u.time, u.grid)
        ft = forcing.time_derivative(u.time, u.grid)
        fg = forcing.space_gradient(u.time, u.grid)
        norms = (
            fld.integrate(np.sum(f * f, axis=0), u.grid),
            fld.integrate(np.sum(ft * ft, axis=0), u.grid),
            fld.integrate(np.sum(fg * fg, axis=(0, 1)), u.grid),
        )
    return DiagnosticsReport(
        time=u.time,
        energy=energy(u, pot, window),
        dissipation_increment=inc,
        equipartition=equipartition_report(u, pot, window),
        volume=fld.mean(u.values[0], u.grid),
        lambda_formula=obs.lambda_formula,
        lambda_projection=obs.lambda_projection,
        tilt_excess=tilt_val,
        forcing_norms=norms,
    )


def reports_to_csv(reports, path=None) -> str:
    """Write reports as CSV (header row, ',' separator, LF line endings)."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(DiagnosticsReport.COLUMNS)
    for r in reports:
        w.writerow(r.row())
    text = buf.getvalue()
    if path is not None:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    return text
