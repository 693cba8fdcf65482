"""Time stepping for the Allen-Cahn dynamics on the periodic grid.

Three variants share one right-hand side::

    du/dt = Lap u - eps^-2 dW(u) + eps^-1 F

with ``F = 0`` (plain), ``F = f(t, x)`` (forced) or ``F = lambda`` (volume
preserving, scalar phase fields only).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import field as fld
from .diagnostics import energy
from .field import Grid, PhaseField
from .potential import Potential

PLAIN = "plain"
FORCED = "forced"
VOLUME = "volume"
VARIANTS = (PLAIN, FORCED, VOLUME)

EXPLICIT = "explicit"
SEMI_IMPLICIT = "semi_implicit"
MINIMIZING_MOVEMENT = "minimizing_movement"
SCHEMES = (EXPLICIT, SEMI_IMPLICIT, MINIMIZING_MOVEMENT)


class SolverError(RuntimeError):
    """A stepper failed; ``best`` and ``trajectory`` keep what was computed."""

    def __init__(self, message: str, best: PhaseField | None = None, trajectory=None):
        super().__init__(message)
        self.best = best
        self.trajectory = trajectory


class CFLError(SolverError):
    pass


# ---------------------------------------------------------------------------
# forcing


class Forcing:
    """Time-dependent body force ``f(t, x)`` with values in ``R^N``."""

    def __call__(self, t: float, grid: Grid) -> np.ndarray:
        raise NotImplementedError

    def time_derivative(self, t: float, grid: Grid) -> np.ndarray:
        raise NotImplementedError

    def space_gradient(self, t: float, grid: Grid) -> np.ndarray:
        """Shape ``(d, N) + grid.shape``."""
        f = self(t, grid)
        return np.stack([fld.gradient(c, grid) for c in f], axis=1)


@dataclass(frozen=True)
class ConstantForce(Forcing):
    value: tuple

    def __call__(self, t, grid):
        v = np.asarray(self.value, dtype=np.float64).reshape((-1,) + (1,) * grid.dim)
        return np.broadcast_to(v, v.shape[:1] + grid.shape).copy()

    def time_derivative(self, t, grid):
        return np.zeros((len(self.value),) + grid.shape)

    def space_gradient(self, t, grid):
        return np.zeros((grid.dim, len(self.value)) + grid.shape)

    @property
    def is_zero(self) -> bool:
        return not np.any(np.asarray(self.value))


@dataclass(frozen=True)
class PlaneWaveForce(Forcing):
    """``f = A sin(2 pi m.x / Lambda - omega t + phase)`` with integer mode ``m``."""

    amplitude: tuple
    mode: tuple
    omega: float = 0.0
    phase: float = 0.0

    def _arg(self, t, grid):
        x = grid.coordinates()
        m = np.asarray(self.mode, dtype=np.float64)
        if m.shape != (grid.dim,):
            raise ValueError(f"plane-wave mode needs {grid.dim} integers")
        return 2 * np.pi * np.tensordot(m, x, axes=1) / grid.length - self.omega * t + self.phase

    def _amp(self, grid):
        return np.asarray(self.amplitude, dtype=np.float64).reshape((-1,) + (1,) * grid.dim)

    def __call__(self, t, grid):
        return self._amp(grid) * np.sin(self._arg(t, grid))[None]

    def time_derivative(self, t, grid):
        return -self.omega * self._amp(grid) * np.cos(self._arg(t, grid))[None]

    def space_gradient(self, t, grid):
        c = np.cos(self._arg(t, grid))[None]
        k = 2 * np.pi * np.asarray(self.mode, dtype=np.float64) / grid.length
        return np.stack([kk * self._amp(grid) * c for kk in k])

    @property
    def is_zero(self) -> bool:
        return not np.any(np.asarray(self.amplitude))


@dataclass(frozen=True)
class Dynamics:
    potential: Potential
    variant: str = PLAIN
    forcing: Forcing | None = None

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.variant == VOLUME and self.potential.dim_state != 1:
            raise ValueError("the volume-preserving variant needs a scalar potential (N = 1)")
        if self.variant == FORCED and self.forcing is None:
            raise ValueError("the forced variant needs a forcing")

    @classmethod
    def plain(cls, pot: Potential) -> "Dynamics":
        return cls(pot, PLAIN)

    @classmethod
    def forced(cls, pot: Potential, forcing: Forcing) -> "Dynamics":
        return cls(pot, FORCED, forcing)

    @classmethod
    def volume_preserving(cls, pot: Potential) -> "Dynamics":
        return cls(pot, VOLUME)


@dataclass
class StepperConfig:
    scheme: str = SEMI_IMPLICIT
    dt: float = 1e-5
    mm_inner_tol: float = 1e-9
    mm_iter_cap: int = 10_000

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if not self.dt > 0:
            raise ValueError("dt must be positive")


def explicit_dt_limit(grid: Grid, epsilon: float, pot: Potential) -> float:
    """Largest stable explicit step for the spectral Laplacian.

    The Nyquist mode of the spectral Laplacian has eigenvalue ``d pi^2 / h^2``
    and the reaction term adds at most ``stiffness / eps^2``; forward Euler
    needs ``dt * (sum) <= 2``.
    """
    lap = grid.dim * (np.pi / grid.h) ** 2
    return 2.0 / (lap + max(pot.stiffness_bound(), 0.0) / epsilon**2)


# ---------------------------------------------------------------------------
# steps


def _force_term(u: PhaseField, dyn: Dynamics):
    if dyn.variant == FORCED:
        f = dyn.forcing(u.time, u.grid)
        return f if np.any(f) else None
    return None


def lagrange_multiplier(u: PhaseField, pot: Potential) -> float:
    """``lambda = mean(dW(u)) / eps``, checked against ``-mean(eps Lap u - dW(u)/eps)``."""
    if u.dim_state != 1 or pot.dim_state != 1:
        raise ValueError("the Lagrange multiplier is defined for scalar phase fields")
    w = pot.gradient(u.values)[0]
    lam = fld.mean(w, u.grid) / u.epsilon
    lap = fld.laplacian(u.values[0], u.grid)
    other = -fld.mean(u.epsilon * lap - w / u.epsilon, u.grid)
    scale = 1.0 + abs(lam) + u.epsilon * float(np.max(np.abs(lap)))
    if abs(lam - other) > 1e-10 * scale:
        raise AssertionError(f"lambda expressions disagree: {lam} vs {other}")
    return lam


def _volume_fix(u: PhaseField, new: np.ndarray, lam: float, dt: float, zero_mode_factor: float, target):
    m_target = fld.mean(u.values[0], u.grid) if target is None else target
    shift = m_target - fld.mean(new[0], u.grid)
    new = new + shift
    lam_proj = lam + u.epsilon * shift * zero_mode_factor / dt
    return new, lam_proj


def step_explicit(
    u: PhaseField, dyn: Dynamics, dt: float, *, info: dict | None = None, target_mean: float | None = None,
    check_cfl: bool = True,
) -> PhaseField:
    """Forward Euler: ``u+ = u + dt (Lap u - eps^-2 dW(u) + eps^-1 F)``."""
    pot, eps = dyn.potential, u.epsilon
    if check_cfl:
        limit = explicit_dt_limit(u.grid, eps, pot)
        if dt > limit:
            raise CFLError(f"explicit step dt={dt:.3e} exceeds the stability limit {limit:.3e}", best=u)
    rhs = fld.laplacian(u.values, u.grid) - pot.gradient(u.values) / eps**2
    f = _force_term(u, dyn)
    if f is not None:
        rhs = rhs + f / eps
    lam = None
    if dyn.variant == VOLUME:
        lam = lagrange_multiplier(u, pot)
        rhs = rhs + lam / eps
    new = u.values + dt * rhs
    if dyn.variant == VOLUME:
        new, lam_proj = _volume_fix(u, new, lam, dt, 1.0, target_mean)
        if info is not None:
            info["lambda_formula"], info["lambda_projection"] = lam, lam_proj
    return u.copy(values=new, time=u.time + dt)


def step_semi_implicit(
    u: PhaseField, dyn: Dynamics, dt: float, *, info: dict | None = None, target_mean: float | None = None
) -> PhaseField:
    """Stabilized linearly implicit step with ``kappa`` = the perturbation Hessian bound.

    ``(1 - dt Lap + dt kappa / eps^2) u+ = u + dt (kappa/eps^2 u - eps^-2 dW(u) + eps^-1 F)``
    solved mode by mode.
    """
    pot, eps, grid = dyn.potential, u.epsilon, u.grid
    kappa = pot.pert_hessian_bound
    rhs = u.values + dt * (kappa / eps**2 * u.values - pot.gradient(u.values) / eps**2)
    f = _force_term(u, dyn)
    if f is not None:
        rhs = rhs + (dt / eps) * f
    lam = None
    if dyn.variant == VOLUME:
        lam = lagrange_multiplier(u, pot)
        rhs = rhs + dt * lam / eps
    _, _, k2 = fld.wavenumbers(grid)
    new = fld.ifft(fld.fft(rhs, grid) / (1.0 + dt * k2 + dt * kappa / eps**2), grid)
    if dyn.variant == VOLUME:
        new, lam_proj = _volume_fix(u, new, lam, dt, 1.0 + dt * kappa / eps**2, target_mean)
        if info is not None:
            info["lambda_formula"], info["lambda_projection"] = lam, lam_proj
    return u.copy(values=new, time=u.time + dt)


def mm_objective(v: np.ndarray, u: PhaseField, pot: Potential, dt: float) -> float:
    """``J(v) = E_eps(v) + eps/(2 dt) ||v - u||^2``."""
    d = v - u.values
    return energy(u.copy(values=v), pot).total + u.epsilon / (2 * dt) * fld.integrate(np.sum(d * d, axis=0), u.grid)


def mm_gradient(v: np.ndarray, u: PhaseField, pot: Potential, dt: float) -> np.ndarray:
    """L2 gradient of :func:`mm_objective`: ``-eps div grad v + dW(v)/eps + eps (v - u)/dt``.

    ``div grad`` rather than the Laplacian: the discrete energy uses the
    spectral gradient, which drops the Nyquist mode, and this is its exact
    derivative.
    """
    eps, grid = u.epsilon, u.grid
    _, kd, _ = fld.wavenumbers(grid)
    kd2 = sum(k * k for k in kd)
    lap = fld.ifft(-kd2 * fld.fft(v, grid), grid)
    return -eps * lap + pot.gradient(v) / eps + eps / dt * (v - u.values)


def mm_decrease(v: np.ndarray, trial: np.ndarray, u: PhaseField, pot: Potential, dt: float) -> float:
    """``J(v) - J(trial)`` assembled from pointwise differences.

    Subtracting two totals of size ``E`` loses everything below ``1e-16 E``;
    forming the differences first resolves decreases far below that, which
    the line search needs close to the minimizer.
    """
    eps, grid = u.epsilon, u.grid
    step_ = trial - v
    gs = fld.gradient(step_, grid)
    gsum = fld.gradient(trial + v, grid)
    dirichlet = 0.5 * eps * fld.integrate(np.sum(gs * gsum, axis=(0, 1)), grid)
    well = fld.integrate(pot.value(trial) - pot.value(v), grid) / eps
    prox = eps / (2 * dt) * fld.integrate(np.sum(step_ * (trial + v - 2 * u.values), axis=0), grid)
    return -(dirichlet + well + prox)


def step_minimizing_movement(
    u: PhaseField, dyn: Dynamics, dt: float, *, inner_tol: float = 1e-9, iter_cap: int = 10_000,
    info: dict | None = None,
) -> PhaseField:
    """One minimizing-movement step by preconditioned gradient descent.

    The preconditioner is the constant-coefficient operator
    ``eps/dt - eps div grad + kappa/eps`` (the semi-implicit matrix up to the
    Nyquist mode), so the first iteration from ``v = u`` with unit step
    reproduces the semi-implicit step on all other modes.  A trial is
    accepted when it lowers ``J`` (see :func:`mm_decrease`); once ``J`` is flat
    to round-off a unit step is accepted if it shrinks ``|grad J|`` and keeps
    the accumulated objective below ``J(u)``, which gives ``J(u+) <= J(u) = E(u)``.  If ``J`` stops resolving any decrease before
    ``inner_tol`` is met the iterate is returned and ``info["mm_stalled"]``
    is set.
    """
    if dyn.variant != PLAIN:
        raise ValueError("minimizing movements are implemented for the plain equation only")
    pot, eps, grid = dyn.potential, u.epsilon, u.grid
    _, kd, _ = fld.wavenumbers(grid)
    precond = eps / dt + eps * sum(k * k for k in kd) + pot.pert_hessian_bound / eps
    v = u.values.copy()
    j = j0 = mm_objective(v, u, pot, dt)
    g = mm_gradient(v, u, pot, dt)
    stalls = 0
    stalled = False
    for it in range(1, iter_cap + 1):
        gnorm = math.sqrt(fld.integrate(np.sum(g * g, axis=0), grid))
        if gnorm < inner_tol:
            break
        direction = fld.ifft(fld.fft(g, grid) / precond, grid)
        slope = fld.integrate(np.sum(g * direction, axis=0), grid)
        alpha = 1.0
        accepted = False
        while alpha > 1e-12:
            trial = v - alpha * direction
            dec = mm_decrease(v, trial, u, pot, dt)
            if dec > 0 and dec >= 1e-4 * alpha * slope:
                accepted = True
                break
            if alpha == 1.0 and j - dec < j0:
                # J is flat to round-off here; keep the step if it shrinks the gradient and
                # the step as a whole still lowers J
                gt = mm_gradient(trial, u, pot, dt)
                if math.sqrt(fld.integrate(np.sum(gt * gt, axis=0), grid)) < gnorm:
                    v, j, g = trial, j - dec, gt
                    break
            alpha *= 0.5
        else:
            # round-off floor: J cannot be lowered measurably any more
            stalls += 1
            if stalls >= 2:
                stalled = True
                break
            continue
        stalls = 0
        if accepted:
            v, j = trial, j - dec
            g = mm_gradient(v, u, pot, dt)
    else:
        raise SolverError(f"minimizing movement did not reach |grad J| < {inner_tol:g} in {iter_cap} iterations",
                          best=u.copy(values=v, time=u.time + dt))
    if info is not None:
        info["mm_iterations"] = it
        info["mm_grad_norm"] = gnorm
        info["mm_objective"] = mm_objective(v, u, pot, dt)
        info["mm_stalled"] = stalled
    return u.copy(values=v, time=u.time + dt)


def step(u: PhaseField, dyn: Dynamics, cfg: StepperConfig, dt: float | None = None, **kwargs) -> PhaseField:
    dt = cfg.dt if dt is None else dt
    if cfg.scheme == EXPLICIT:
        return step_explicit(u, dyn, dt, **kwargs)
    if cfg.scheme == SEMI_IMPLICIT:
        return step_semi_implicit(u, dyn, dt, **kwargs)
    kwargs.pop("target_mean", None)
    return step_minimizing_movement(u, dyn, dt, inner_tol=cfg.mm_inner_tol, iter_cap=cfg.mm_iter_cap, **kwargs)


# ---------------------------------------------------------------------------
# runs


@dataclass
class Observation:
    """State of a run at an observation time.

    ``dissipation`` is the cumulative ``sum_n int eps |(u^{n+1} - u^n)/dt|^2 dt``
    since the start; ``work`` is the cumulative ``sum_n int f(t_n).(u^{n+1} - u^n)``
    for forced runs.
    """

    step: int
    time: float
    state: PhaseField
    energy: float
    dissipation: float
    work: float = 0.0
    lambda_formula: float | None = None
    lambda_projection: float | None = None


@dataclass
class Trajectory:
    dynamics: Dynamics
    config: StepperConfig
    observations: list = field(default_factory=list)
    lambdas: list = field(default_factory=list)
    forcing_norms: dict = field(default_factory=dict)
    steps: int = 0
    status: str = "running"

    @property
    def times(self) -> np.ndarray:
        return np.array([o.time for o in self.observations])

    @property
    def energies(self) -> np.ndarray:
        return np.array([o.energy for o in self.observations])

    @property
    def final(self) -> PhaseField:
        return self.observations[-1].state

    @property
    def initial(self) -> PhaseField:
        return self.observations[0].state


def default_stride(epsilon: float, dt: float) -> int:
    return max(1, round(epsilon**2 / dt * 0.1))


def run(
    initial: PhaseField,
    dyn: Dynamics,
    cfg: StepperConfig,
    t_end: float,
    observers: Sequence[Callable] = (),
    stride: int | None = None,
    keep_states: bool = True,
) -> Trajectory:
    """Advance ``initial`` to ``t_end`` and record observations every ``stride`` steps.

    Observers are called as ``obs(observation)`` with a read-only state.  The
    last step is shortened so the run ends exactly at ``t_end``.  With
    ``keep_states=False`` only the first and last states are stored.
    """
    if t_end < initial.time:
        raise ValueError("t_end lies before the initial time")
    if initial.dim_state != dyn.potential.dim_state:
        raise ValueError("phase field and potential have different state dimensions")
    dt = cfg.dt
    span = t_end - initial.time
    nsteps = int(math.ceil(span / dt - 1e-9)) if span > 0 else 0
    stride = default_stride(initial.epsilon, dt) if stride is None else max(1, int(stride))
    pot = dyn.potential
    traj = Trajectory(dyn, cfg)
    target = fld.mean(initial.values[0], initial.grid) if dyn.variant == VOLUME else None

    u = initial.copy()
    dissipation = 0.0
    work = 0.0
    f_sq = ft_sq = fg_sq = 0.0

    def observe(k, lam=(None, None)):
        obs = Observation(k, u.time, u.readonly(), energy(u, pot).total, dissipation, work, *lam)
        if not keep_states and len(traj.observations) > 1:
            traj.observations[-1].state = None
        traj.observations.append(obs)
        for cb in observers:
            cb(obs)

    observe(0, (lagrange_multiplier(u, pot), None) if dyn.variant == VOLUME else (None, None))
    for k in range(1, nsteps + 1):
        h = min(dt, t_end - u.time) if k == nsteps else dt
        info = {}
        try:
            new = step(u, dyn, cfg, h, info=info, **({"target_mean": target} if dyn.variant == VOLUME else {}))
        except SolverError as exc:
            traj.status = "failed"
            exc.trajectory = traj
            raise
        if not np.all(np.isfinite(new.values)):
            traj.status = "failed"
            raise SolverError(f"non-finite values after step {k}", best=u, trajectory=traj)
        delta = new.values - u.values
        dissipation += u.epsilon * fld.integrate(np.sum(delta * delta, axis=0), u.grid) / h
        if dyn.variant == FORCED:
            f = dyn.forcing(u.time, u.grid)
            work += fld.integrate(np.sum(f * delta, axis=0), u.grid)
            ft = dyn.forcing.time_derivative(u.time, u.grid)
            fg = dyn.forcing.space_gradient(u.time, u.grid)
            f_sq += h * fld.integrate(np.sum(f * f, axis=0), u.grid)
            ft_sq += h * fld.integrate(np.sum(ft * ft, axis=0), u.grid)
            fg_sq += h * fld.integrate(np.sum(fg * fg, axis=(0, 1)), u.grid)
        if "lambda_formula" in info:
            traj.lambdas.append((new.time, info["lambda_formula"], info["lambda_projection"]))
        # snap the clock to the step count to avoid drift from repeated addition
        new.time = t_end if k == nsteps else initial.time + k * dt
        u = new
        traj.steps = k
        if k % stride == 0 or k == nsteps:
            lam = (info.get("lambda_formula"), info.get("lambda_projection"))
            observe(k, lam)
    if dyn.variant == FORCED:
        traj.forcing_norms = {"f_sq": f_sq, "dt_f_sq": ft_sq, "grad_f_sq": fg_sq}
    traj.status = "completed"
    return traj


# ---------------------------------------------------------------------------
# initial data


@dataclass(frozen=True)
class Circle:
    """Disk (2D), ball (3D) or interval (1D) around ``center`` with the given radius."""

    center: tuple
    radius: float
    inside: int = 1
    outside: int = 0


@dataclass(frozen=True)
class Stripe:
    """Slab ``|x_axis - center| < width/2`` filled with the ``inside`` well."""

    axis: int
    width: float
    center: float | None = None
    inside: int = 1
    outside: int = 0


@dataclass(frozen=True)
class Tripod:
    """Three 120 degree sectors around ``center``; arms at 90, 210 and 330 degrees.

    Sector ``k`` (counter-clockwise from the upward arm) holds well ``phases[k]``.
    Cells are assigned by the angle of their minimum-image offset from the
    center, so the periodic images add straight cut interfaces on the box
    edges opposite the center.
    """

    center: tuple
    phases: tuple = (0, 1, 2)


@dataclass(frozen=True)
class Circles:
    """Union of disjoint circles sharing one inside and one outside well."""

    circles: tuple

    def __post_init__(self):
        if not self.circles:
            raise ValueError("need at least one circle")


def _min_image(x: np.ndarray, c, length: float) -> np.ndarray:
    c = np.asarray(c, dtype=np.float64).reshape((-1,) + (1,) * (x.ndim - 1))
    d = x - c
    return d - length * np.round(d / length)


def signed_distance(geom, grid: Grid) -> np.ndarray:
    """Signed distance to the sharp interface, positive inside (circles, stripes)."""
    x = grid.coordinates()
    if isinstance(geom, Circle):
        if len(geom.center) != grid.dim:
            raise ValueError("circle center dimension does not match the grid")
        r = np.sqrt(np.sum(_min_image(x, geom.center, grid.length) ** 2, axis=0))
        return geom.radius - r
    if isinstance(geom, Stripe):
        c = grid.length / 2 if geom.center is None else geom.center
        d = x[geom.axis] - c
        d = d - grid.length * np.round(d / grid.length)
        return geom.width / 2 - np.abs(d)
    if isinstance(geom, Circles):
        circles = geom.circles
        for i, a in enumerate(circles):
            for b in circles[i + 1:]:
                gap = np.sqrt(np.sum(_min_image(np.asarray(a.center, float), b.center, grid.length) ** 2))
                if gap <= a.radius + b.radius:
                    raise ValueError("circles overlap")
        return np.max([signed_distance(c, grid) for c in circles], axis=0)
    raise TypeError(f"no signed distance for {type(geom).__name__}")


def tripod_labels(geom: Tripod, grid: Grid) -> np.ndarray:
    if grid.dim != 2:
        raise ValueError("the tripod geometry is two dimensional")
    d = _min_image(grid.coordinates(), geom.center, grid.length)
    ang = np.mod(np.degrees(np.arctan2(d[1], d[0])) - 90.0, 360.0)
    sector = np.minimum((ang // 120.0).astype(int), 2)
    return np.asarray(geom.phases)[sector]


def _label_distances(labels: np.ndarray, grid: Grid, phases) -> dict:
    """Periodic Euclidean distance from every cell center to each phase region."""
    from scipy.ndimage import distance_transform_edt

    pad = grid.n // 2
    out = {}
    for p in phases:
        mask = np.pad(labels != p, pad, mode="wrap")
        dist = distance_transform_edt(mask, sampling=grid.h)
        out[p] = dist[(slice(pad, pad + grid.n),) * grid.dim]
    return out


def prepare_initial_data(geom, pot: Potential, grid: Grid, epsilon: float, profiles=None) -> PhaseField:
    """Well-prepared data ``u0(x) = q(s(x) / eps)`` around a sharp geometry.

    ``profiles`` maps ordered well pairs ``(i, j)`` to transition profiles
    going from well ``i`` to well ``j``; missing ones are computed.  For the
    tripod, each cell in phase ``i`` uses the nearest other phase ``j`` and
    ``s = dist(x, phase j) - h/2`` (cell centers sit half a cell off the
    discrete interface).
    """
    from .geodesic import optimal_profile

    profiles = {} if profiles is None else dict(profiles)

    def prof(i, j):
        if (i, j) not in profiles:
            if (j, i) in profiles:
                profiles[(i, j)] = profiles[(j, i)].reversed()
            else:
                profiles[(i, j)] = optimal_profile(pot, i, j)
        return profiles[(i, j)]

    if isinstance(geom, Tripod):
        labels = tripod_labels(geom, grid)
        phases = sorted(set(geom.phases))
        dist = _label_distances(labels, grid, phases)
        values = np.zeros((pot.dim_state,) + grid.shape)
        for i in phases:
            others = [j for j in phases if j != i]
            stack = np.stack([dist[j] for j in others])
            nearest = np.asarray(others)[np.argmin(stack, axis=0)]
            s = np.min(stack, axis=0) - grid.h / 2
            mask = labels == i
            for j in others:
                sel = mask & (nearest == j)
                if np.any(sel):
                    values[:, sel] = prof(j, i)(s[sel] / epsilon)
        return PhaseField(grid, values, epsilon)

    if isinstance(geom, Circles):
        inside, outside = geom.circles[0].inside, geom.circles[0].outside
        if any((c.inside, c.outside) != (inside, outside) for c in geom.circles):
            raise ValueError("all circles must share the inside and outside wells")
    else:
        inside, outside = geom.inside, geom.outside
    s = signed_distance(geom, grid)
    values = prof(outside, inside)(s / epsilon)
    return PhaseField(grid, values, epsilon)
