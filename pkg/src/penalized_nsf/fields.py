"""Cartesian grid on the reference box, cell-centred state, stencils and I/O.

Arrays are stored with ``indexing="ij"``: a scalar field has shape
``grid.shape`` and a vector field has shape ``(dim, *grid.shape)``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

SNAPSHOT_MAGIC = "PNSF-SNAPSHOT 1"


class SnapshotError(ValueError):
    """Malformed, truncated or non-finite snapshot file."""


@dataclass(frozen=True)
class Grid:
    """Uniform cell-centred grid on the box ``prod_k [lower_k, upper_k]``."""

    lower: tuple[float, ...]
    upper: tuple[float, ...]
    n: tuple[int, ...]

    def __post_init__(self):
        if not (len(self.lower) == len(self.upper) == len(self.n)):
            raise ValueError("lower, upper and n must have the same length")
        if self.dim not in (1, 2, 3):
            raise ValueError(f"unsupported dimension {self.dim}")
        if min(self.n) < 8:
            raise ValueError(f"need at least 8 cells per axis, got {self.n}")
        widths = [u - l for l, u in zip(self.lower, self.upper)]
        if min(widths) <= 0:
            raise ValueError("box extents must be positive")
        spacings = [w / k for w, k in zip(widths, self.n)]
        if max(spacings) - min(spacings) > 1e-12 * max(spacings):
            raise ValueError(f"grid spacing must be uniform, got {spacings}")

    @classmethod
    def uniform(cls, dim: int, n: int, lower: float = 0.0, upper: float = 1.0) -> "Grid":
        return cls((float(lower),) * dim, (float(upper),) * dim, (int(n),) * dim)

    @property
    def dim(self) -> int:
        return len(self.n)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(self.n)

    @property
    def h(self) -> float:
        return (self.upper[0] - self.lower[0]) / self.n[0]

    @property
    def cell_volume(self) -> float:
        return self.h**self.dim

    @property
    def size(self) -> int:
        return int(np.prod(self.n))

    def axes(self) -> list[np.ndarray]:
        h = self.h
        return [lo + h * (np.arange(k) + 0.5) for lo, k in zip(self.lower, self.n)]

    def centers(self) -> np.ndarray:
        """Cell centres, shape ``(dim, *shape)``."""
        return np.stack(np.meshgrid(*self.axes(), indexing="ij"))

    def center(self) -> np.ndarray:
        return 0.5 * (np.asarray(self.lower) + np.asarray(self.upper))

    def contains(self, x: np.ndarray) -> np.ndarray:
        """Boolean mask of points (leading axis = dimension) inside the closed box."""
        x = np.asarray(x, dtype=float)
        inside = np.ones(x.shape[1:], dtype=bool)
        for k in range(self.dim):
            inside &= (x[k] >= self.lower[k]) & (x[k] <= self.upper[k])
        return inside

    def integrate(self, f: np.ndarray) -> float:
        """Midpoint-rule integral over the box with a fixed summation order."""
        return float(np.sum(np.asarray(f, dtype=float).ravel()) * self.cell_volume)


@dataclass
class State:
    """Conserved cell averages: density, momentum and internal energy density."""

    rho: np.ndarray
    mom: np.ndarray
    rhoe: np.ndarray
    t: float = 0.0

    def copy(self) -> "State":
        return State(self.rho.copy(), self.mom.copy(), self.rhoe.copy(), float(self.t))

    @property
    def dim(self) -> int:
        return self.mom.shape[0]

    def fields(self) -> dict[str, np.ndarray]:
        out = {"rho": self.rho}
        for k in range(self.dim):
            out[f"mom{k}"] = self.mom[k]
        out["rhoe"] = self.rhoe
        return out


# --------------------------------------------------------------------------
# stencils


def _pad(f: np.ndarray, axis: int, bc: str) -> np.ndarray:
    """One ghost layer along ``axis``.

    ``neumann`` copies the boundary cell, ``noslip`` mirrors with sign change
    (zero face value), ``extrapolate`` continues quadratically so the
    centred difference stays second order at the wall.
    """
    pad = [(0, 0)] * f.ndim
    pad[axis] = (1, 1)
    if bc == "neumann":
        return np.pad(f, pad, mode="edge")
    if bc == "noslip":
        g = np.pad(f, pad, mode="edge")
        lo = [slice(None)] * f.ndim
        hi = [slice(None)] * f.ndim
        lo[axis] = 0
        hi[axis] = -1
        g[tuple(lo)] *= -1.0
        g[tuple(hi)] *= -1.0
        return g
    if bc == "extrapolate":
        g = np.pad(f, pad)
        n = f.shape[axis]
        take = lambda i: np.take(f, i, axis=axis)
        idx = [slice(None)] * f.ndim
        idx[axis] = 0
        g[tuple(idx)] = 3 * take(0) - 3 * take(1) + take(2)
        idx[axis] = n + 1
        g[tuple(idx)] = 3 * take(n - 1) - 3 * take(n - 2) + take(n - 3)
        return g
    raise ValueError(f"unknown boundary treatment {bc!r}")


def _centered(f: np.ndarray, axis: int, h: float, bc: str) -> np.ndarray:
    g = _pad(f, axis, bc)
    n = f.shape[axis]
    hi = [slice(None)] * f.ndim
    lo = [slice(None)] * f.ndim
    hi[axis] = slice(2, n + 2)
    lo[axis] = slice(0, n)
    return (g[tuple(hi)] - g[tuple(lo)]) / (2.0 * h)


def gradient(f: np.ndarray, grid: Grid, bc: str = "extrapolate") -> np.ndarray:
    """Centred second-order gradient of a cell scalar, shape ``(dim, *shape)``."""
    f = np.asarray(f, dtype=float)
    return np.stack([_centered(f, k, grid.h, bc) for k in range(grid.dim)])


def divergence(v: np.ndarray, grid: Grid, bc: str = "noslip") -> np.ndarray:
    """Centred divergence of a cell vector field; ghosts impose ``v = 0`` on the walls."""
    v = np.asarray(v, dtype=float)
    out = np.zeros(grid.shape)
    for k in range(grid.dim):
        out += _centered(v[k], k, grid.h, bc)
    return out


def velocity_gradient(u: np.ndarray, grid: Grid) -> np.ndarray:
    """``G[i, j] = d u_i / d x_j`` with no-slip ghosts, shape ``(dim, dim, *shape)``."""
    return np.stack([gradient(u[i], grid, bc="noslip") for i in range(grid.dim)])


def face_difference(f: np.ndarray, axis: int) -> np.ndarray:
    """Interior face jumps ``f[i+1] - f[i]`` along ``axis`` (n-1 faces)."""
    return np.diff(f, axis=axis)


def face_average(f: np.ndarray, axis: int) -> np.ndarray:
    n = f.shape[axis]
    a = np.take(f, np.arange(n - 1), axis=axis)
    b = np.take(f, np.arange(1, n), axis=axis)
    return 0.5 * (a + b)


def flux_divergence(flux: np.ndarray, axis: int, h: float) -> np.ndarray:
    """Cell divergence of interior face fluxes along ``axis``; wall fluxes are zero."""
    pad = [(0, 0)] * flux.ndim
    pad[axis] = (1, 1)
    full = np.pad(flux, pad)
    return np.diff(full, axis=axis) / h


# --------------------------------------------------------------------------
# snapshots


def write_snapshot(state: State, grid: Grid, path) -> Path:
    """Plain-text header followed by little-endian float64 fields in row-major order."""
    path = Path(path)
    names = list(state.fields())
    header = [
        SNAPSHOT_MAGIC,
        f"dim = {grid.dim}",
        "n = " + " ".join(str(k) for k in grid.n),
        "lower = " + " ".join(repr(float(x)) for x in grid.lower),
        "upper = " + " ".join(repr(float(x)) for x in grid.upper),
        f"time = {float(state.t)!r}",
        "fields = " + " ".join(names),
        "end",
    ]
    with open(path, "wb") as fh:
        fh.write(("\n".join(header) + "\n").encode("ascii"))
        for arr in state.fields().values():
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes(order="C"))
    return path


def read_snapshot(path) -> tuple[State, Grid]:
    path = Path(path)
    raw = path.read_bytes()
    meta: dict[str, str] = {}
    pos = 0
    first = True
    while True:
        nl = raw.find(b"\n", pos)
        if nl < 0:
            raise SnapshotError(f"{path}: unterminated header")
        line = raw[pos:nl].decode("ascii", errors="replace").strip()
        pos = nl + 1
        if first:
            if line != SNAPSHOT_MAGIC:
                raise SnapshotError(f"{path}: not a snapshot file")
            first = False
            continue
        if line == "end":
            break
        key, _, value = line.partition("=")
        meta[key.strip()] = value.strip()
    try:
        dim = int(meta["dim"])
        n = tuple(int(x) for x in meta["n"].split())
        lower = tuple(float(x) for x in meta["lower"].split())
        upper = tuple(float(x) for x in meta["upper"].split())
        t = float(meta["time"])
        names = meta["fields"].split()
    except (KeyError, ValueError) as exc:
        raise SnapshotError(f"{path}: bad header ({exc})") from exc
    grid = Grid(lower, upper, n)
    if grid.dim != dim or len(names) != dim + 2:
        raise SnapshotError(f"{path}: header shape mismatch")
    ncell = grid.size
    payload = raw[pos:]
    expected = 8 * ncell * len(names)
    if len(payload) != expected:
        raise SnapshotError(
            f"{path}: shape mismatch, expected {expected} data bytes, found {len(payload)}"
        )
    data = np.frombuffer(payload, dtype="<f8").reshape(len(names), *grid.shape)
    for name, arr in zip(names, data):
        bad = np.argwhere(~np.isfinite(arr))
        if bad.size:
            raise SnapshotError(f"{path}: non-finite value in {name} at cell {tuple(int(i) for i in bad[0])}")
    data = data.astype(float)
    state = State(rho=data[0].copy(), mom=data[1 : 1 + dim].copy(), rhoe=data[-1].copy(), t=t)
    return state, grid


# --------------------------------------------------------------------------
# time series


@dataclass
class CsvSeries:
    """Rows written in a declared, stable column order."""

    columns: Sequence[str]
    rows: list[dict] = field(default_factory=list)

    def append(self, row: dict) -> None:
        missing = [c for c in self.columns if c not in row]
        if missing:
            raise KeyError(f"row is missing columns {missing}")
        self.rows.append({c: row[c] for c in self.columns})

    def write(self, path) -> Path:
        path = Path(path)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(self.columns)
            for row in self.rows:
                w.writerow([_fmt(row[c]) for c in self.columns])
        return path


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)
