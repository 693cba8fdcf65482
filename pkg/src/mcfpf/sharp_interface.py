"""Sharp-interface quantities extracted from phase fields.

Interfaces are measured by sub-cell contouring (marching squares on the
pairwise discriminant), never by counting label jumps on the lattice.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage
from skimage.measure import find_contours

from .field import Grid, PhaseField
from .potential import Potential


class UnsupportedDimensionError(ValueError):
    pass


@dataclass
class Partition:
    """Phase label (0-based well index) of every cell."""

    labels: np.ndarray
    grid: Grid

    def volume(self, phase: int) -> float:
        return float(np.count_nonzero(self.labels == phase)) * self.grid.cell_volume

    def phases(self) -> list[int]:
        return sorted(int(p) for p in np.unique(self.labels))


def _well_distances(u: PhaseField, pot: Potential) -> np.ndarray:
    """``|u(x) - alpha_j|`` for every well, shape ``(P,) + grid.shape``."""
    shape = (-1,) + (1,) * u.grid.dim
    return np.stack([np.sqrt(np.sum((u.values - a.reshape(shape)) ** 2, axis=0)) for a in pot.wells])


def extract_partition(u: PhaseField, pot: Potential) -> Partition:
    """Nearest-well labels; ties go to the lowest well index."""
    if u.dim_state != pot.dim_state:
        raise ValueError("phase field and potential have different state dimensions")
    return Partition(np.argmin(_well_distances(u, pot), axis=0), u.grid)


def radius_estimate(part: Partition, phase: int) -> float:
    """``sqrt(area / pi)`` from the cell count of ``phase`` (2D only)."""
    if part.grid.dim != 2:
        raise UnsupportedDimensionError("radius estimate needs d = 2")
    count = int(np.count_nonzero(part.labels == phase))
    if count == 0:
        raise ValueError(f"phase {phase} is absent")
    return math.sqrt(count * part.grid.cell_volume / math.pi)


# ---------------------------------------------------------------------------
# interface meshes


@dataclass
class Contour:
    """An ordered polyline of the ``(i, j)`` interface, coordinates unwrapped."""

    pair: tuple
    points: np.ndarray
    closed: bool


@dataclass
class InterfaceMesh:
    """Interface elements with per-element phase pair, measure and unit normal.

    In 2D the elements are contour segments (``starts``, ``ends``); in 1D they
    are points with unit measure.  ``normals`` point into phase ``pair[0]``.
    """

    grid: Grid
    centers: np.ndarray
    pairs: np.ndarray
    measures: np.ndarray
    normals: np.ndarray
    starts: np.ndarray | None = None
    ends: np.ndarray | None = None
    contours: list = field(default_factory=list)
    junctions: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))

    @property
    def size(self) -> int:
        return len(self.measures)

    def total_measure(self, pair=None) -> float:
        if pair is None:
            return float(np.sum(self.measures))
        i, j = sorted(pair)
        sel = (self.pairs[:, 0] == i) & (self.pairs[:, 1] == j)
        return float(np.sum(self.measures[sel]))

    def to_csv(self, path=None) -> str:
        """Rows ``x, y, pair_i, pair_j, nx, ny, length`` (element centers)."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["x", "y", "pair_i", "pair_j", "nx", "ny", "length"])
        for c, p, n, m in zip(self.centers, self.pairs, self.normals, self.measures):
            c2 = list(c) + [0.0] * (2 - len(c))
            n2 = list(n) + [0.0] * (2 - len(n))
            w.writerow([repr(float(c2[0])), repr(float(c2[1])), int(p[0]), int(p[1]),
                        repr(float(n2[0])), repr(float(n2[1])), repr(float(m))])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text


def _empty_mesh(grid: Grid) -> InterfaceMesh:
    d = grid.dim
    return InterfaceMesh(grid, np.zeros((0, d)), np.zeros((0, 2), dtype=int), np.zeros(0), np.zeros((0, d)),
                         np.zeros((0, d)), np.zeros((0, d)))


def _two_nearest(dist: np.ndarray):
    order = np.argsort(dist, axis=0, kind="stable")
    return order[0], order[1]


def interface_mesh(u: PhaseField, pot: Potential) -> InterfaceMesh:
    """Sub-cell interface elements of the nearest-well partition (d = 1 or 2)."""
    grid = u.grid
    if grid.dim == 3:
        raise UnsupportedDimensionError("interface measurement is supported for d = 1 and d = 2 only")
    dist = _well_distances(u, pot)
    if grid.dim == 1:
        return _mesh_1d(dist, grid)
    return _mesh_2d(dist, grid)


def _mesh_1d(dist: np.ndarray, grid: Grid) -> InterfaceMesh:
    labels = np.argmin(dist, axis=0)
    nxt = np.roll(labels, -1)
    idx = np.nonzero(labels != nxt)[0]
    if idx.size == 0:
        return _empty_mesh(grid)
    centers, pairs, normals = [], [], []
    for k in idx:
        a, b = int(labels[k]), int(labels[(k + 1) % grid.n])
        i, j = min(a, b), max(a, b)
        psi0 = dist[i, k] - dist[j, k]
        psi1 = dist[i, (k + 1) % grid.n] - dist[j, (k + 1) % grid.n]
        frac = psi0 / (psi0 - psi1) if psi0 != psi1 else 0.5
        x = (k + frac) * grid.h
        centers.append([x % grid.length])
        pairs.append([i, j])
        # phase i lies where psi < 0
        normals.append([-1.0 if psi0 < 0 else 1.0])
    n = len(centers)
    c = np.array(centers)
    return InterfaceMesh(grid, c, np.array(pairs, dtype=int), np.ones(n), np.array(normals), c.copy(), c.copy())


def _mesh_2d(dist: np.ndarray, grid: Grid) -> InterfaceMesh:
    n, h = grid.n, grid.h
    first, second = _two_nearest(dist)
    p = dist.shape[0]
    starts, ends, pairs, normals, contours = [], [], [], [], []
    for i in range(p):
        for j in range(i + 1, p):
            psi = dist[i] - dist[j]
            if p == 2:
                mask = np.ones(grid.shape, dtype=bool)
            else:
                mask = ((first == i) & (second == j)) | ((first == j) & (second == i))
                if not np.any(mask):
                    continue
            # pad one row and column so the wrap-around cells are contoured exactly once
            psi_p = np.pad(psi, ((0, 1), (0, 1)), mode="wrap")
            mask_p = np.pad(mask, ((0, 1), (0, 1)), mode="wrap")
            if psi_p[mask_p].min() >= 0 or psi_p[mask_p].max() <= 0:
                continue
            grad = np.stack(np.gradient(np.pad(psi, 1, mode="wrap")))[:, 1:-1, 1:-1]
            for line in find_contours(psi_p, 0.0, mask=mask_p if p > 2 else None):
                if len(line) < 2:
                    continue
                pts = line * h
                closed = bool(np.allclose(line[0], line[-1]))
                contours.append(Contour((i, j), pts, closed))
                a, b = pts[:-1], pts[1:]
                seg = b - a
                keep = np.linalg.norm(seg, axis=1) > 0
                a, b, seg = a[keep], b[keep], seg[keep]
                mid = 0.5 * (a + b)
                g = np.stack([
                    ndimage.map_coordinates(grad[k], (mid / h).T, order=1, mode="grid-wrap") for k in range(2)
                ], axis=1)
                nrm = np.stack([-seg[:, 1], seg[:, 0]], axis=1) / np.linalg.norm(seg, axis=1)[:, None]
                # into phase i means against grad psi
                flip = np.sum(nrm * g, axis=1) > 0
                nrm[flip] *= -1
                starts.append(a)
                ends.append(b)
                normals.append(nrm)
                pairs.append(np.tile([i, j], (len(a), 1)))
    if not starts:
        mesh = _empty_mesh(grid)
        mesh.junctions = _find_junctions(first, grid, mesh)
        return mesh
    a = np.concatenate(starts)
    b = np.concatenate(ends)
    mesh = InterfaceMesh(
        grid,
        centers=np.mod(0.5 * (a + b), grid.length),
        pairs=np.concatenate(pairs).astype(int),
        measures=np.linalg.norm(b - a, axis=1),
        normals=np.concatenate(normals),
        starts=a,
        ends=b,
        contours=contours,
    )
    mesh.junctions = _find_junctions(first, grid, mesh) if p > 2 else np.zeros((0, 2))
    return mesh


def _wrap(d: np.ndarray, length: float) -> np.ndarray:
    return d - length * np.round(d / length)


def _find_junctions(labels: np.ndarray, grid: Grid, mesh: InterfaceMesh) -> np.ndarray:
    """Centroids of clusters of 2x2 blocks that contain at least three labels.

    A cluster counts as a junction when contour elements of three different
    pairs lie within two cells of its centroid.
    """
    n, h = grid.n, grid.h
    blocks = [labels, np.roll(labels, -1, 0), np.roll(labels, -1, 1), np.roll(np.roll(labels, -1, 0), -1, 1)]
    stack = np.stack(blocks)
    distinct = np.zeros(grid.shape, dtype=int)
    for v in np.unique(labels):
        distinct += np.any(stack == v, axis=0)
    hot = distinct >= 3
    if not np.any(hot):
        return np.zeros((0, 2))
    lab, count = ndimage.label(hot, structure=np.ones((3, 3)))
    # merge clusters across the periodic seam
    parent = list(range(count + 1))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for ax in range(2):
        lo = np.take(lab, 0, axis=ax)
        hi = np.take(lab, n - 1, axis=ax)
        for off in (-1, 0, 1):
            hi_s = np.roll(hi, off)
            for a, b in zip(lo[(lo > 0) & (hi_s > 0)], hi_s[(lo > 0) & (hi_s > 0)]):
                ra, rb = find(int(a)), find(int(b))
                if ra != rb:
                    parent[ra] = rb
    roots = np.array([find(k) for k in range(count + 1)])
    lab = roots[lab]
    out = []
    coords = np.stack(np.meshgrid(np.arange(n), np.arange(n), indexing="ij"), axis=-1).astype(float)
    for r in np.unique(lab[lab > 0]):
        pts = (coords[lab == r] + 0.5) * h
        ref = pts[0]
        c = np.mod(ref + np.mean(_wrap(pts - ref, grid.length), axis=0), grid.length)
        if mesh.size:
            near = np.linalg.norm(_wrap(mesh.centers - c, grid.length), axis=1) <= 2 * h + 0.5 * h
            if len({tuple(p) for p in mesh.pairs[near]}) < 3:
                continue
        out.append(c)
    return np.array(out).reshape(-1, 2)


def partition_energy(mesh: InterfaceMesh, sigma) -> float:
    """``sum_elements sigma_ij |element|``."""
    s = np.asarray(getattr(sigma, "sigma", sigma), dtype=np.float64)
    if mesh.size == 0:
        return 0.0
    if mesh.pairs.max() >= s.shape[0]:
        raise ValueError("mesh phases exceed the surface-tension matrix")
    return float(np.sum(s[mesh.pairs[:, 0], mesh.pairs[:, 1]] * mesh.measures))


def _fit_line(points: np.ndarray):
    c = points.mean(axis=0)
    _, _, vt = np.linalg.svd(points - c, full_matrices=False)
    return c, vt[0]


def junction_angles(mesh: InterfaceMesh, inner: float = 2.0, outer: float = 6.0, refine: int = 3) -> list:
    """Angles (degrees) between adjacent interface rays at every junction.

    Rays are fitted to contour points with ``inner h < |p - J| <= outer h``;
    the junction position is then moved to the least-squares intersection of
    the fitted lines and the fit repeated ``refine`` times.
    """
    grid = mesh.grid
    if grid.dim != 2:
        raise UnsupportedDimensionError("junction angles need d = 2")
    h = grid.h
    pts_all = np.concatenate([mesh.starts, mesh.ends]) if mesh.size else np.zeros((0, 2))
    pairs_all = np.concatenate([mesh.pairs, mesh.pairs]) if mesh.size else np.zeros((0, 2), dtype=int)
    result = []
    for j0 in mesh.junctions:
        center = np.array(j0, dtype=float)
        rays = None
        for _ in range(refine + 1):
            off = _wrap(pts_all - center, grid.length)
            r = np.linalg.norm(off, axis=1)
            sel = (r > inner * h) & (r <= outer * h)
            lines, rays = [], []
            for pair in {tuple(p) for p in pairs_all[sel]}:
                m = sel & (pairs_all[:, 0] == pair[0]) & (pairs_all[:, 1] == pair[1])
                pts = np.unique(np.round(off[m], 12), axis=0)
                if len(pts) < 2:
                    continue
                c, d = _fit_line(pts)
                if np.dot(d, c) < 0:
                    d = -d
                lines.append((c, d))
                rays.append(d)
            if len(lines) < 3:
                break
            # least-squares intersection of the fitted lines
            a = np.zeros((2, 2))
            b = np.zeros(2)
            for c, d in lines:
                proj = np.eye(2) - np.outer(d, d)
                a += proj
                b += proj @ c
            shift = np.linalg.lstsq(a, b, rcond=None)[0]
            if np.linalg.norm(shift) > 2 * h:
                break
            center = center + shift
        if rays is None or len(rays) < 3:
            continue
        ang = np.sort(np.mod(np.degrees([math.atan2(d[1], d[0]) for d in rays]), 360.0))
        gaps = np.diff(np.concatenate([ang, [ang[0] + 360.0]]))
        result.append(tuple(float(g) for g in gaps))
    return result


# ---------------------------------------------------------------------------
# trajectory monitors


@dataclass
class MonitorReport:
    times: np.ndarray
    energy_eps: np.ndarray
    energy_sharp: np.ndarray
    tol: float

    @property
    def gap(self) -> np.ndarray:
        return self.energy_eps - self.energy_sharp

    @property
    def integrated_gap(self) -> float:
        """``|int E_eps dt - int E(chi) dt|`` by the trapezoidal rule."""
        if len(self.times) < 2:
            return 0.0
        return float(abs(np.trapezoid(self.energy_eps, self.times) - np.trapezoid(self.energy_sharp, self.times)))

    @property
    def violations(self) -> np.ndarray:
        """Times where ``E(chi) > E_eps + tol``."""
        return self.times[self.energy_sharp > self.energy_eps + self.tol]

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["time", "energy_eps", "energy_sharp", "gap"])
        for row in zip(self.times, self.energy_eps, self.energy_sharp, self.gap):
            w.writerow([repr(float(v)) for v in row])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text


def convergence_monitor(times, energies_eps, meshes, sigma, tol: float = 1e-6) -> MonitorReport:
    """Phase-field energy against the sharp partition energy at shared times."""
    times = np.asarray(times, dtype=np.float64)
    energies_eps = np.asarray(energies_eps, dtype=np.float64)
    if not (len(times) == len(energies_eps) == len(meshes)):
        raise ValueError("times, energies and meshes must have the same length")
    if np.any(np.diff(times) <= 0):
        raise ValueError("times must increase strictly")
    sharp = np.array([partition_energy(m, sigma) for m in meshes])
    return MonitorReport(times, energies_eps, sharp, tol)


def monitor_trajectory(traj, pot: Potential, sigma, tol: float = 1e-6) -> MonitorReport:
    """:func:`convergence_monitor` over the stored states of a run."""
    obs = [o for o in traj.observations if o.state is not None]
    meshes = [interface_mesh(o.state, pot) for o in obs]
    return convergence_monitor([o.time for o in obs], [o.energy for o in obs], meshes, sigma, tol)


@dataclass(frozen=True)
class MotionSample:
    """Normal velocity along the normal into ``pair[0]`` and curvature ``div(normal)``.

    With this orientation a disk of phase ``pair[1]`` has ``H = 1/R`` and
    mean-curvature flow reads ``V = -H``.
    """

    time: float
    pair: tuple
    position: tuple
    velocity: float
    curvature: float
    flagged: bool = False


def _circle_fit(pts: np.ndarray):
    a = np.column_stack([pts[:, 0], pts[:, 1], np.ones(len(pts))])
    rhs = -(pts[:, 0] ** 2 + pts[:, 1] ** 2)
    sol, *_ = np.linalg.lstsq(a, rhs, rcond=None)
    center = -0.5 * sol[:2]
    r2 = center @ center - sol[2]
    if not np.isfinite(r2) or r2 <= 0:
        return None, np.inf
    return center, math.sqrt(r2)


def _curvatures(mesh: InterfaceMesh, stencil: int = 5):
    """Per-vertex signed curvature from circle fits to ``stencil`` consecutive contour points."""
    half = stencil // 2
    out_pts, out_pairs, out_h, out_n = [], [], [], []
    for c in mesh.contours:
        pts = c.points[:-1] if c.closed else c.points
        m = len(pts)
        if m < stencil:
            continue
        rng = range(m) if c.closed else range(half, m - half)
        for k in rng:
            idx = [(k + o) % m for o in range(-half, half + 1)]
            window = pts[idx]
            if c.closed:
                window = window[0] + _wrap(window - window[0], mesh.grid.length)
            center, r = _circle_fit(window)
            p = pts[k]
            tang = window[-1] - window[0]
            nrm = np.array([-tang[1], tang[0]]) / (np.linalg.norm(tang) + 1e-300)
            out_pts.append(np.mod(p, mesh.grid.length))
            out_pairs.append(c.pair)
            out_n.append(nrm)
            if center is None or not np.isfinite(r) or r > 1e6 * mesh.grid.length:
                out_h.append(0.0)
            else:
                out_h.append((center - p, r))
    return out_pts, out_pairs, out_h, out_n


def motion_samples(times, meshes, cap: float = 3.0, stencil: int = 5) -> list:
    """Velocity and curvature samples between consecutive interface meshes.

    Each vertex of the earlier contour is matched to the closest element
    center of the same pair in the later mesh; ``V`` is the displacement
    along the normal into ``pair[0]`` divided by the time step.  Matches
    farther than ``cap`` cells are flagged as topology changes.
    """
    if len(times) != len(meshes):
        raise ValueError("times and meshes must have the same length")
    samples = []
    for k in range(len(meshes) - 1):
        m0, m1 = meshes[k], meshes[k + 1]
        grid = m0.grid
        if grid.dim != 2:
            raise UnsupportedDimensionError("motion samples need d = 2")
        dt = times[k + 1] - times[k]
        pts, pairs, curv, _ = _curvatures(m0, stencil)
        for p, pair, hc in zip(pts, pairs, curv):
            sel = (m0.pairs[:, 0] == pair[0]) & (m0.pairs[:, 1] == pair[1])
            if not np.any(sel):
                continue
            # normal into pair[0] at the nearest element of the current mesh
            d0 = np.linalg.norm(_wrap(m0.centers[sel] - p, grid.length), axis=1)
            nu = m0.normals[sel][np.argmin(d0)]
            if isinstance(hc, tuple):
                to_center, r = hc
                # div(nu) > 0 when nu points away from the fitted center
                h_val = (1.0 / r) * (-1.0 if np.dot(to_center, nu) > 0 else 1.0)
            else:
                h_val = 0.0
            sel1 = (m1.pairs[:, 0] == pair[0]) & (m1.pairs[:, 1] == pair[1])
            if not np.any(sel1):
                samples.append(MotionSample(times[k], pair, tuple(p), float("nan"), h_val, True))
                continue
            off = _wrap(m1.centers[sel1] - p, grid.length)
            j = np.argmin(np.linalg.norm(off, axis=1))
            dist = float(np.linalg.norm(off[j]))
            flagged = dist > cap * grid.h
            v = float(np.dot(off[j], nu)) / dt
            samples.append(MotionSample(times[k], pair, tuple(p), v, h_val, flagged))
    return samples
