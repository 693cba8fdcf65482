"""Periodic uniform grids, spectral calculus and snapshot I/O.

Arrays are indexed ``[..., x, y, z]`` (``indexing="ij"``).  Phase fields store
their components along a leading axis, shape ``(N, n, ..., n)``.
"""

from __future__ import annotations

import math
import os
import struct
from dataclasses import dataclass, field as dc_field
from functools import lru_cache
from pathlib import Path

import numpy as np
import scipy.fft as sfft

_WORKERS = max(1, int(os.environ.get("MCFPF_THREADS", "1") or 1))


def set_threads(count: int) -> None:
    """Set the number of FFT worker threads used by every spectral operator."""
    global _WORKERS
    _WORKERS = max(1, int(count))


@dataclass(frozen=True)
class Grid:
    """Uniform periodic grid on the torus ``[0, length)^dim``."""

    dim: int
    n: int
    length: float = 1.0

    def __post_init__(self):
        if self.dim not in (1, 2, 3):
            raise ValueError("dim must be 1, 2 or 3")
        if self.n < 8 or self.n & (self.n - 1):
            raise ValueError("cells per axis must be a power of two and >= 8")
        if not self.length > 0:
            raise ValueError("box length must be positive")

    @property
    def h(self) -> float:
        return self.length / self.n

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n,) * self.dim

    @property
    def cell_volume(self) -> float:
        return self.h**self.dim

    @property
    def volume(self) -> float:
        return self.length**self.dim

    def axes(self) -> list[np.ndarray]:
        return [np.arange(self.n) * self.h for _ in range(self.dim)]

    def coordinates(self) -> np.ndarray:
        """Node coordinates, shape ``(dim, n, ..., n)``."""
        return np.array(np.meshgrid(*self.axes(), indexing="ij"))


@lru_cache(maxsize=32)
def _wavenumbers(dim: int, n: int, length: float):
    """Wavenumbers on the rfft layout; the last axis is halved."""
    full = 2 * np.pi * sfft.fftfreq(n, d=length / n)
    half = 2 * np.pi * sfft.rfftfreq(n, d=length / n)
    ks = []
    for axis in range(dim):
        k = half if axis == dim - 1 else full
        shape = [1] * dim
        shape[axis] = k.size
        ks.append(k.reshape(shape))
    k2 = sum(k * k for k in ks)
    # first derivatives drop the Nyquist mode so that they map real fields to real fields
    kd = []
    for axis, k in enumerate(ks):
        k = k.copy()
        k[np.abs(np.abs(k) - np.pi * n / length) < 1e-9 * n / length] = 0.0
        kd.append(k)
    return ks, kd, np.asarray(k2)


def wavenumbers(grid: Grid):
    """Return ``(k_axes, k_axes_derivative, |k|^2)`` on the rfft layout."""
    return _wavenumbers(grid.dim, grid.n, float(grid.length))


def _axes(grid: Grid) -> tuple[int, ...]:
    return tuple(range(-grid.dim, 0))


def fft(f: np.ndarray, grid: Grid) -> np.ndarray:
    return sfft.rfftn(f, axes=_axes(grid), workers=_WORKERS)


def ifft(fh: np.ndarray, grid: Grid) -> np.ndarray:
    return sfft.irfftn(fh, s=grid.shape, axes=_axes(grid), workers=_WORKERS)


def laplacian(f: np.ndarray, grid: Grid) -> np.ndarray:
    """Spectral Laplacian of a field (or stack of fields along leading axes)."""
    _, _, k2 = wavenumbers(grid)
    return ifft(-k2 * fft(f, grid), grid)


def gradient(f: np.ndarray, grid: Grid) -> np.ndarray:
    """Spectral gradient; the derivative axis is prepended, shape ``(dim,) + f.shape``."""
    _, kd, _ = wavenumbers(grid)
    fh = fft(f, grid)
    return np.stack([ifft(1j * k * fh, grid) for k in kd])


def divergence(v: np.ndarray, grid: Grid) -> np.ndarray:
    """Spectral divergence of a vector field with the component axis first."""
    _, kd, _ = wavenumbers(grid)
    acc = 0.0
    for axis, k in enumerate(kd):
        acc = acc + 1j * k * fft(v[axis], grid)
    return ifft(acc, grid)


def integrate(f: np.ndarray, grid: Grid, window: np.ndarray | None = None) -> float:
    """Midpoint-rule integral over the torus, optionally weighted by a window.

    Summation is numpy's pairwise reduction over a contiguous copy, so the
    result does not depend on the memory layout of ``f``.
    """
    f = np.asarray(f, dtype=np.float64)
    if f.shape[-grid.dim:] != grid.shape:
        raise ValueError(f"field shape {f.shape} does not match grid {grid.shape}")
    if window is not None:
        window = np.asarray(window, dtype=np.float64)
        if window.shape != grid.shape:
            raise ValueError(f"window shape {window.shape} does not match grid {grid.shape}")
        f = f * window
    return float(np.sum(np.ascontiguousarray(f).ravel()) * grid.cell_volume)


def spectral_integral_of_square(f: np.ndarray, grid: Grid) -> float:
    """``integrate(f**2)`` computed in wavenumber space (Parseval)."""
    fh = sfft.fftn(f, axes=_axes(grid), workers=_WORKERS)
    return float(np.sum(np.abs(fh) ** 2) * grid.volume / grid.n ** (2 * grid.dim))


def mean(f: np.ndarray, grid: Grid) -> float:
    return integrate(f, grid) / grid.volume


@dataclass
class PhaseField:
    """Order parameter ``u`` on a periodic grid together with ``epsilon`` and time."""

    grid: Grid
    values: np.ndarray
    epsilon: float
    time: float = 0.0
    resolution_warning: bool = dc_field(default=False, init=False)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.shape == self.grid.shape:
            values = values[np.newaxis]
        if values.shape[1:] != self.grid.shape:
            raise ValueError(f"values shape {values.shape} does not match grid {self.grid.shape}")
        if not np.all(np.isfinite(values)):
            raise ValueError("phase field contains non-finite values")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if self.time < 0:
            raise ValueError("time must be non-negative")
        self.values = values
        self.resolution_warning = self.epsilon < 2 * self.grid.h

    @property
    def dim_state(self) -> int:
        return self.values.shape[0]

    def copy(self, values=None, time=None) -> "PhaseField":
        return PhaseField(
            self.grid,
            self.values.copy() if values is None else values,
            self.epsilon,
            self.time if time is None else time,
        )

    def readonly(self) -> "PhaseField":
        """A view whose array cannot be written through."""
        view = self.values.view()
        view.flags.writeable = False
        out = object.__new__(PhaseField)
        out.__dict__.update(self.__dict__)
        out.values = view
        return out


# ---------------------------------------------------------------------------
# snapshots

MAGIC = b"MCFPF1\x00\x00"
_HEADER = struct.Struct("<8s3Q3d")


class SnapshotError(Exception):
    """Base class for snapshot format errors."""


class SnapshotHeaderError(SnapshotError):
    pass


class SnapshotTruncatedError(SnapshotError):
    pass


def save_snapshot(u: PhaseField, path) -> None:
    """Write ``u`` in the MCFPF1 binary format (little endian, x fastest)."""
    g = u.grid
    header = _HEADER.pack(MAGIC, g.dim, u.dim_state, g.n, float(g.length), float(u.epsilon), float(u.time))
    payload = b"".join(
        np.ascontiguousarray(comp.ravel(order="F"), dtype="<f8").tobytes() for comp in u.values
    )
    Path(path).write_bytes(header + payload)


def load_snapshot(path) -> PhaseField:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        if not data.startswith(MAGIC[: len(data)]) or len(data) < len(MAGIC):
            raise SnapshotHeaderError(f"{path}: not an MCFPF1 snapshot")
        raise SnapshotTruncatedError(f"{path}: header truncated")
    magic, dim, ncomp, n, length, eps, t = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise SnapshotHeaderError(f"{path}: bad magic {magic!r}")
    if dim not in (1, 2, 3) or ncomp < 1 or n < 8 or n & (n - 1):
        raise SnapshotHeaderError(f"{path}: invalid header d={dim} N={ncomp} n={n}")
    if not (math.isfinite(length) and length > 0 and math.isfinite(eps) and eps > 0 and t >= 0):
        raise SnapshotHeaderError(f"{path}: invalid header floats")
    count = ncomp * n**dim
    expected = _HEADER.size + 8 * count
    if len(data) != expected:
        raise SnapshotTruncatedError(f"{path}: payload has {len(data) - _HEADER.size} bytes, expected {8 * count}")
    flat = np.frombuffer(data, dtype="<f8", offset=_HEADER.size, count=count).astype(np.float64)
    grid = Grid(dim, n, length)
    values = np.stack([c.reshape(grid.shape, order="F") for c in flat.reshape(ncomp, -1)])
    return PhaseField(grid, values, eps, t)
