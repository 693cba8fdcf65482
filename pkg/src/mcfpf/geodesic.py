"""Geodesic distances in the degenerate metric ``2 W(u) <.,.>``.

Curves are piecewise linear with ``M`` nodes and their length is the midpoint
rule ``sum_k sqrt(2 W(gamma_{k+1/2})) |gamma_{k+1} - gamma_k|``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import integrate as sint
from scipy import sparse
from scipy import interpolate
from scipy.interpolate import RegularGridInterpolator
from scipy.sparse.linalg import spsolve

from .potential import Potential

ITERATION_CAP = 100_000


class GeodesicError(RuntimeError):
    """The curve optimizer did not converge; ``curve`` holds the best iterate."""

    def __init__(self, message: str, curve: "GeodesicCurve"):
        super().__init__(message)
        self.curve = curve


class ProfileError(RuntimeError):
    pass


@dataclass
class GeodesicCurve:
    nodes: np.ndarray
    length: float
    iterations: int = 0
    converged: bool = True


@dataclass
class SurfaceTensionMatrix:
    sigma: np.ndarray
    curves: dict = field(default_factory=dict, repr=False)

    def __getitem__(self, idx):
        return self.sigma[idx]

    @property
    def num_phases(self) -> int:
        return self.sigma.shape[0]

    def triangle_violation(self) -> float:
        """Largest ``sigma_ij - sigma_ik - sigma_kj`` over all triples (<= 0 when the inequality holds)."""
        s = self.sigma
        return float(np.max(s[:, None, :] - s[:, :, None] - s.T[None, :, :]))


def _sqrt2w(pot: Potential, pts: np.ndarray) -> np.ndarray:
    return np.sqrt(2.0 * np.maximum(pot.value(pts.T), 0.0))


def curve_length(pot: Potential, nodes: np.ndarray, rule: str = "midpoint") -> float:
    """Length of a polyline with nodes of shape ``(M, N)`` in the metric ``2W<.,.>``.

    ``rule`` picks the quadrature on each straight segment: ``"midpoint"``
    (what the descent minimizes) or ``"simpson"`` (used for the reported
    length; the midpoint rule overestimates by O(h^2), about 1e-4 relative
    at 65 nodes for the double well).
    """
    seg = np.linalg.norm(np.diff(nodes, axis=0), axis=1)
    mid = _sqrt2w(pot, 0.5 * (nodes[1:] + nodes[:-1]))
    if rule == "midpoint":
        return float(np.sum(mid * seg))
    if rule == "simpson":
        ends = _sqrt2w(pot, nodes)
        return float(np.sum((ends[:-1] + 4.0 * mid + ends[1:]) / 6.0 * seg))
    raise ValueError(f"unknown quadrature rule {rule!r}")


def _length_gradient(pot: Potential, nodes: np.ndarray) -> np.ndarray:
    seg = np.diff(nodes, axis=0)
    ell = np.linalg.norm(seg, axis=1)
    mids = 0.5 * (nodes[1:] + nodes[:-1])
    g = _sqrt2w(pot, mids)
    dg = pot.gradient(mids.T).T / np.maximum(g, 1e-300)[:, None]
    unit = seg / np.maximum(ell, 1e-300)[:, None]
    # d(g_k l_k)/d gamma_k and d(g_k l_k)/d gamma_{k+1}
    a = 0.5 * dg * ell[:, None]
    left = a - g[:, None] * unit
    right = a + g[:, None] * unit
    grad = np.zeros_like(nodes)
    grad[:-1] += left
    grad[1:] += right
    grad[0] = grad[-1] = 0.0
    return grad


def _redistribute(nodes: np.ndarray) -> np.ndarray:
    """Move nodes along the polyline to equal arclength spacing, endpoints fixed."""
    ell = np.linalg.norm(np.diff(nodes, axis=0), axis=1)
    s = np.concatenate([[0.0], np.cumsum(ell)])
    if s[-1] == 0:
        return nodes.copy()
    target = np.linspace(0.0, s[-1], nodes.shape[0])
    out = np.stack([np.interp(target, s, nodes[:, k]) for k in range(nodes.shape[1])], axis=1)
    out[0], out[-1] = nodes[0], nodes[-1]
    return out


def _resample(points: list[np.ndarray], m: int) -> np.ndarray:
    pts = np.asarray(points, dtype=np.float64)
    ell = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    s = np.concatenate([[0.0], np.cumsum(ell)])
    target = np.linspace(0.0, s[-1], m)
    out = np.stack([np.interp(target, s, pts[:, k]) for k in range(pts.shape[1])], axis=1)
    out[0], out[-1] = pts[0], pts[-1]
    return out


def _descend(pot: Potential, nodes: np.ndarray, tol: float, max_iter: int) -> GeodesicCurve:
    nodes = _redistribute(nodes)
    length = curve_length(pot, nodes)
    best = GeodesicCurve(nodes.copy(), length, 0, False)
    m = nodes.shape[0]
    chord = np.linalg.norm(nodes[-1] - nodes[0])
    step = chord / m
    quiet = 0
    for it in range(1, max_iter + 1):
        grad = _length_gradient(pot, nodes)
        # tangential components only slide nodes along the curve; the redistribution handles those
        tang = np.zeros_like(nodes)
        tang[1:-1] = nodes[2:] - nodes[:-2]
        tang /= np.maximum(np.linalg.norm(tang, axis=1, keepdims=True), 1e-300)
        grad -= np.sum(grad * tang, axis=1, keepdims=True) * tang
        gnorm2 = float(np.sum(grad * grad))
        if gnorm2 == 0.0:
            best.converged = True
            best.iterations = it
            return best
        scale = step / np.sqrt(gnorm2 / max(m - 2, 1))
        while True:
            trial = _redistribute(nodes - scale * grad)
            trial_len = curve_length(pot, trial)
            if trial_len <= length - 1e-4 * scale * gnorm2 or scale * np.sqrt(gnorm2) < 1e-15 * max(chord, 1e-300):
                break
            scale *= 0.5
        step = min(2.0 * scale * np.sqrt(gnorm2 / max(m - 2, 1)), chord)
        change = abs(length - trial_len) / max(length, 1e-300)
        if trial_len < length:
            nodes, length = trial, trial_len
            if length < best.length:
                best = GeodesicCurve(nodes.copy(), length, it, False)
        quiet = quiet + 1 if change < tol else 0
        if quiet >= 3:
            best.converged = True
            best.iterations = it
            return best
    best.iterations = max_iter
    return best


def geodesic_distance(
    pot: Potential,
    a,
    b,
    nodes: int = 65,
    tol: float = 1e-10,
    max_iter: int = ITERATION_CAP,
    restarts: bool = True,
) -> GeodesicCurve:
    """Shortest discrete curve from ``a`` to ``b`` in the metric ``2W<.,.>``.

    Interior nodes are moved by damped gradient descent with backtracking and
    redistributed to equal chord spacing after every sweep.  For ``N >= 2`` the
    optimization is restarted from the broken line through each well other
    than the endpoints and the shortest result is kept.
    """
    if nodes < 3:
        raise ValueError("a curve needs at least 3 nodes")
    a = np.atleast_1d(np.asarray(a, dtype=np.float64))
    b = np.atleast_1d(np.asarray(b, dtype=np.float64))
    if a.shape != (pot.dim_state,) or b.shape != (pot.dim_state,):
        raise ValueError("endpoints must be state points of the potential")
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise ValueError("endpoints must be finite")
    if np.array_equal(a, b):
        return GeodesicCurve(np.repeat(a[None], nodes, axis=0), 0.0, 0, True)

    starts = [[a, b]]
    if restarts and pot.dim_state >= 2:
        for w in pot.wells:
            if not (np.allclose(w, a) or np.allclose(w, b)):
                starts.append([a, w, b])
    best = None
    for pts in starts:
        curve = _descend(pot, _resample(pts, nodes), tol, max_iter)
        if best is None or curve.length < best.length:
            best = curve
    best.length = curve_length(pot, best.nodes, "simpson")
    if not best.converged:
        raise GeodesicError(f"geodesic did not converge within {max_iter} iterations", best)
    return best


def surface_tension_matrix(pot: Potential, nodes: int = 65, tol: float = 1e-10) -> SurfaceTensionMatrix:
    """``sigma_ij = d_W(alpha_i, alpha_j)``, symmetrized over both run directions."""
    wells = pot.wells
    p = wells.shape[0]
    if p < 2:
        raise ValueError("need at least two wells")
    raw = np.zeros((p, p))
    curves = {}
    for i in range(p):
        for j in range(p):
            if i == j:
                continue
            c = geodesic_distance(pot, wells[i], wells[j], nodes, tol)
            raw[i, j] = c.length
            curves[(i, j)] = c
    sigma = 0.5 * (raw + raw.T)
    np.fill_diagonal(sigma, 0.0)
    return SurfaceTensionMatrix(sigma, curves)


@lru_cache(maxsize=16)
def _cached_sigma(pot: Potential, nodes: int, tol: float) -> SurfaceTensionMatrix:
    return surface_tension_matrix(pot, nodes, tol)


def cached_surface_tensions(pot: Potential, nodes: int = 65, tol: float = 1e-10) -> SurfaceTensionMatrix:
    """Memoized :func:`surface_tension_matrix` keyed on the potential object."""
    return _cached_sigma(pot, nodes, tol)


# ---------------------------------------------------------------------------
# primitives phi_i(u) = d_W(u, alpha_i)


def _scalar_primitive(pot: Potential, lo: float, hi: float) -> float:
    f = lambda s: np.sqrt(2.0 * max(float(pot.value(np.array([[s]]))[0]), 0.0))
    if lo == hi:
        return 0.0
    sign = 1.0 if hi > lo else -1.0
    a, b = min(lo, hi), max(lo, hi)
    breaks = [w for w in pot.wells[:, 0] if a < w < b]
    val, _ = sint.quad(f, a, b, points=breaks or None, epsabs=1e-13, epsrel=1e-12, limit=200)
    return sign * val


def phi(pot: Potential, i: int, u, nodes: int = 65, tol: float = 1e-10) -> float:
    """Geodesic distance ``phi_i(u) = d_W(u, alpha_i)`` to the ``i``-th well.

    Scalar potentials use the primitive ``|int_{alpha_i}^u sqrt(2W)|`` by
    adaptive quadrature; vector potentials optimize a curve.
    """
    if not 0 <= i < pot.num_wells:
        raise IndexError(f"well index {i} out of range")
    u = np.atleast_1d(np.asarray(u, dtype=np.float64))
    if pot.dim_state == 1:
        return abs(_scalar_primitive(pot, float(pot.wells[i, 0]), float(u[0])))
    return geodesic_distance(pot, u, pot.wells[i], nodes, tol).length


class ScalarPrimitive:
    """Tabulated ``G(u) = int_{u0}^u sqrt(2W)`` for scalar potentials.

    ``phi_i(u) = |G(u) - G(alpha_i)|``; the table is refined on demand so that
    evaluation never extrapolates.
    """

    def __init__(self, pot: Potential, lo: float | None = None, hi: float | None = None, points: int = 40001):
        if pot.dim_state != 1:
            raise ValueError("scalar primitive needs N = 1")
        self.pot = pot
        w = pot.wells[:, 0]
        span = w.max() - w.min()
        self._points = points
        self._build(w.min() - 0.5 * span if lo is None else lo, w.max() + 0.5 * span if hi is None else hi)

    def _build(self, lo: float, hi: float) -> None:
        # the wells are nodes so the kinks of sqrt(2W) sit on the table
        x = np.union1d(np.linspace(lo, hi, self._points), self.pot.wells[:, 0])
        g = np.sqrt(2.0 * np.maximum(self.pot.value(x[None]), 0.0))
        table = sint.cumulative_simpson(g, x=x, initial=0.0)
        self.x, self.table = x, table
        self._spline = interpolate.CubicHermiteSpline(x, table, g, extrapolate=False)
        self.well_values = self._spline(self.pot.wells[:, 0])

    def _ensure(self, u: np.ndarray) -> None:
        lo, hi = float(np.min(u)), float(np.max(u))
        if lo < self.x[0] or hi > self.x[-1]:
            pad = 0.1 * (hi - lo + 1e-12)
            self._build(min(lo - pad, self.x[0]), max(hi + pad, self.x[-1]))

    def primitive(self, u: np.ndarray) -> np.ndarray:
        self._ensure(u)
        return self._spline(u)

    def __call__(self, i: int, u: np.ndarray) -> np.ndarray:
        return np.abs(self.primitive(u) - self.well_values[i])

    def derivative(self, i: int, u: np.ndarray) -> np.ndarray:
        """``d phi_i / du = sign(u - alpha_i) sqrt(2W(u))``."""
        u = np.asarray(u, dtype=np.float64)
        return np.sign(u - self.pot.wells[i, 0]) * np.sqrt(2.0 * np.maximum(self.pot.value(u[None]), 0.0))


class PhiLattice:
    """``phi_i`` for vector potentials cached on a state-space lattice.

    The table holds shortest-path distances on the lattice graph whose edges
    join each node to its neighbours within ``reach`` steps (so directions
    are resolved far better than with axis moves alone), weighted by the
    midpoint rule ``sqrt(2W(mid)) * |edge|``.  These are lengths of
    admissible polylines, hence upper bounds on ``d_W``.  Evaluation is
    multilinear interpolation; the differential comes from centered
    differences of the table.
    """

    def __init__(self, pot: Potential, points: int = 129, margin: float = 0.25, reach: int = 4):
        from scipy.sparse.csgraph import dijkstra

        self.pot = pot
        w = pot.wells
        lo, hi = w.min(axis=0), w.max(axis=0)
        pad = margin * np.max(hi - lo)
        self.axes = [np.linspace(l - pad, h + pad, points) for l, h in zip(lo, hi)]
        spacing = np.array([ax[1] - ax[0] for ax in self.axes])
        shape = (points,) * pot.dim_state
        mesh = np.stack(np.meshgrid(*self.axes, indexing="ij"))
        index = np.arange(mesh[0].size).reshape(shape)
        rows, cols, weights = [], [], []
        offsets = np.array(np.meshgrid(*[np.arange(-reach, reach + 1)] * pot.dim_state, indexing="ij")).reshape(
            pot.dim_state, -1
        ).T
        for off in offsets:
            if not np.any(off) or np.gcd.reduce(np.abs(off)) != 1:
                continue
            src = tuple(slice(max(0, -o), points - max(0, o)) for o in off)
            dst = tuple(slice(max(0, o), points - max(0, -o)) for o in off)
            mid = 0.5 * (mesh[(slice(None),) + src] + mesh[(slice(None),) + dst])
            ell = float(np.linalg.norm(off * spacing))
            rows.append(index[src].ravel())
            cols.append(index[dst].ravel())
            weights.append((np.sqrt(2.0 * np.maximum(pot.value(mid), 0.0)) * ell).ravel())
        graph = sparse.csr_matrix(
            (np.concatenate(weights), (np.concatenate(rows), np.concatenate(cols))), shape=(index.size, index.size)
        )
        # a zero-weight edge would be dropped as "no edge"; wells are the only zeros
        graph.data = np.maximum(graph.data, 1e-300)
        sources = [int(index[tuple(np.rint((a - lo + pad) / spacing).astype(int))]) for a in w]
        table = dijkstra(graph, directed=False, indices=sources)
        self.table = table.reshape((pot.num_wells,) + shape)
        self._interp = [RegularGridInterpolator(self.axes, t, bounds_error=False, fill_value=None) for t in self.table]
        grads = [np.gradient(t, *spacing) for t in self.table]
        self._dinterp = [
            [RegularGridInterpolator(self.axes, gk, bounds_error=False, fill_value=None) for gk in g] for g in grads
        ]

    def __call__(self, i: int, u: np.ndarray) -> np.ndarray:
        pts = np.moveaxis(np.asarray(u, dtype=np.float64), 0, -1)
        return self._interp[i](pts)

    def derivative(self, i: int, u: np.ndarray) -> np.ndarray:
        pts = np.moveaxis(np.asarray(u, dtype=np.float64), 0, -1)
        return np.stack([f(pts) for f in self._dinterp[i]])


@lru_cache(maxsize=8)
def primitive_table(pot: Potential):
    """Shared evaluator for ``phi_i`` on fields: scalar table or state lattice."""
    if pot.dim_state == 1:
        return ScalarPrimitive(pot)
    return PhiLattice(pot)


# ---------------------------------------------------------------------------
# optimal transition profiles


@dataclass
class TransitionProfile:
    """Tabulated heteroclinic ``q(s)`` from well ``i`` (s -> -inf) to well ``j`` (s -> +inf)."""

    s: np.ndarray
    q: np.ndarray
    start: int
    end: int
    residual: float = 0.0

    def __call__(self, s) -> np.ndarray:
        """Evaluate by linear interpolation; shape ``(N,) + s.shape``, clamped to the end values."""
        s = np.asarray(s, dtype=np.float64)
        return np.stack([np.interp(s, self.s, self.q[:, k]) for k in range(self.q.shape[1])])

    def reversed(self) -> "TransitionProfile":
        return TransitionProfile(-self.s[::-1].copy(), self.q[::-1].copy(), self.end, self.start, self.residual)

    def equipartition_error(self, pot: Potential, interior_fraction: float = 0.9) -> float:
        """Max relative gap between ``|q'|^2 / 2`` and ``W(q)`` on interior samples."""
        dq = np.gradient(self.q, self.s, axis=0)
        kin = 0.5 * np.sum(dq * dq, axis=1)
        w = pot.value(self.q.T)
        span = self.s[-1] - self.s[0]
        mid = 0.5 * (self.s[0] + self.s[-1])
        inner = (np.abs(self.s - mid) < 0.5 * interior_fraction * span) & (w > 1e-10 * w.max())
        return float(np.max(np.abs(kin[inner] - w[inner]) / w[inner]))


def _decay_rates(pot: Potential) -> tuple[float, float]:
    hess = np.moveaxis(pot.hessian(pot.wells.T), -1, 0)
    eig = np.linalg.eigvalsh(hess)
    return float(np.sqrt(max(eig.min(), 1e-12))), float(np.sqrt(max(eig.max(), 1e-12)))


def optimal_profile(
    pot: Potential,
    i: int,
    j: int,
    half_width: float | None = None,
    samples: int | None = None,
    residual_tol: float = 1e-8,
    max_steps: int = 500,
) -> TransitionProfile:
    """Relax the 1D Allen-Cahn flow at unit width to the optimal profile between two wells.

    Solves ``q'' = dW/du(q)`` on ``[-S, S]`` with the ends clamped to the wells
    by pseudo-transient continuation (linearized implicit Euler with a growing
    time step) until the max residual drops below ``residual_tol``; then shifts
    ``s`` so that the midpoint of the geodesic arclength sits at ``s = 0``.
    """
    if i == j:
        raise ValueError("profile needs two distinct wells")
    slow, fast = _decay_rates(pot)
    if half_width is None:
        half_width = 20.0 / slow
    if samples is None:
        h_target = 0.01 / fast
        samples = 2 * int(np.ceil(half_width / h_target)) + 1
    n_state = pot.dim_state
    s = np.linspace(-half_width, half_width, samples)
    h = s[1] - s[0]
    a, b = pot.wells[i], pot.wells[j]
    shape = 0.5 * (1.0 + np.tanh(s * slow))
    q = a[None] + (b - a)[None] * shape[:, None]
    k = samples - 2
    lap = sparse.diags([np.ones(k - 1), -2 * np.ones(k), np.ones(k - 1)], [-1, 0, 1]) / h**2
    lap = sparse.kron(lap, sparse.eye(n_state), format="csr")
    bc = np.zeros((k, n_state))
    bc[0] = a / h**2
    bc[-1] = b / h**2

    def residual(qi):
        return (lap @ qi.ravel()).reshape(k, n_state) + bc - pot.gradient(qi.T).T

    qi = q[1:-1].copy()
    tau = 1.0
    res = residual(qi)
    rnorm = float(np.max(np.abs(res)))
    for _ in range(max_steps):
        if rnorm < residual_tol:
            break
        hess = np.moveaxis(pot.hessian(qi.T), -1, 0)
        jac = lap - sparse.block_diag(list(hess), format="csr")
        mat = sparse.eye(k * n_state, format="csr") / tau - jac
        delta = spsolve(mat.tocsc(), res.ravel()).reshape(k, n_state)
        trial = qi + delta
        trial_res = residual(trial)
        trial_norm = float(np.max(np.abs(trial_res)))
        if np.isfinite(trial_norm) and trial_norm < 10 * rnorm + 1e-12:
            qi, res, rnorm = trial, trial_res, trial_norm
            tau = min(tau * 4.0, 1e12)
        else:
            tau = max(tau / 8.0, 1e-6)
    if rnorm >= residual_tol:
        raise ProfileError(f"profile relaxation stalled at residual {rnorm:.3e}")
    q[1:-1] = qi
    dq = np.linalg.norm(np.diff(q, axis=0), axis=1)
    mids = 0.5 * (q[1:] + q[:-1])
    arc = np.concatenate([[0.0], np.cumsum(_sqrt2w(pot, mids) * dq)])
    center = float(np.interp(0.5 * arc[-1], arc, s))
    return TransitionProfile(s - center, q, i, j, rnorm)
