"""Truncated volume meshes, density states and cell-average projection."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import MeshError, ProjectionError

DEFAULT_QUAD_ORDER = 4


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Mesh:
    """Partition of ``]xmin, xmax]`` into cells ``]x_{i-1/2}, x_{i+1/2}]``.

    Only the edges are stored; centers and widths are derived once at
    construction and kept read-only.
    """

    edges: np.ndarray
    centers: np.ndarray = field(init=False, repr=False)
    widths: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        edges = _frozen(self.edges)
        if edges.ndim != 1 or edges.size < 2:
            raise MeshError("a mesh needs at least two edges")
        if not np.all(np.isfinite(edges)):
            raise MeshError("mesh edges must be finite")
        if edges[0] < 0:
            raise MeshError(f"left boundary must be >= 0, got {edges[0]!r}")
        widths = np.diff(edges)
        if np.any(widths <= 0):
            raise MeshError("mesh edges must be strictly increasing")
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "centers", _frozen(0.5 * (edges[:-1] + edges[1:])))
        object.__setattr__(self, "widths", _frozen(widths))

    @property
    def cells(self) -> int:
        return self.edges.size - 1

    @property
    def xmin(self) -> float:
        return float(self.edges[0])

    @property
    def xmax(self) -> float:
        return float(self.edges[-1])

    @property
    def h(self) -> float:
        """Largest cell width."""
        return float(self.widths.max())

    def locate(self, x):
        """Index of the cell containing ``x`` (left-open, right-closed).

        Points outside ``]xmin, xmax]`` map to -1.
        """
        x = np.asarray(x, dtype=float)
        idx = np.searchsorted(self.edges, x, side="left") - 1
        idx = np.where((x <= self.edges[0]) | (x > self.edges[-1]), -1, idx)
        return idx if idx.ndim else int(idx)

    def __len__(self):
        return self.cells

    def __eq__(self, other):
        if not isinstance(other, Mesh):
            return NotImplemented
        return np.array_equal(self.edges, other.edges)

    def __hash__(self):
        return hash(self.edges.tobytes())


@dataclass(frozen=True, eq=False)
class State:
    """Cell-averaged number density ``c_i`` at time ``time``."""

    mesh: Mesh
    time: float
    density: np.ndarray

    def __post_init__(self):
        density = _frozen(self.density)
        if density.shape != (self.mesh.cells,):
            raise ValueError(
                f"density has shape {density.shape}, mesh has {self.mesh.cells} cells"
            )
        if not np.all(np.isfinite(density)):
            raise ValueError("density must be finite")
        object.__setattr__(self, "density", density)
        object.__setattr__(self, "time", float(self.time))

    def with_density(self, density, time: float | None = None) -> "State":
        return State(self.mesh, self.time if time is None else time, density)


def _check_bounds(xmin, xmax):
    if not (math.isfinite(xmin) and math.isfinite(xmax)):
        raise MeshError("mesh bounds must be finite")
    if xmin < 0:
        raise MeshError(f"xmin must be >= 0, got {xmin!r}")
    if xmax <= xmin:
        raise MeshError(f"xmax ({xmax!r}) must exceed xmin ({xmin!r})")


def _check_cells(cells):
    if isinstance(cells, bool) or int(cells) != cells or cells < 1:
        raise MeshError(f"cells must be a positive integer, got {cells!r}")
    return int(cells)


def make_uniform_mesh(xmin: float, xmax: float, cells: int) -> Mesh:
    """Uniform mesh of ``cells`` cells of width ``(xmax - xmin) / cells``."""
    xmin, xmax = float(xmin), float(xmax)
    _check_bounds(xmin, xmax)
    cells = _check_cells(cells)
    edges = xmin + (xmax - xmin) * (np.arange(cells + 1) / cells)
    edges[0], edges[-1] = xmin, xmax
    return Mesh(edges)


def make_geometric_mesh(xmin: float, xmax: float, cells: int, ratio: float) -> Mesh:
    """Mesh whose widths grow geometrically, ``dx[i+1] = ratio * dx[i]``.

    The progression is rescaled so the edges span exactly ``[xmin, xmax]``;
    ``ratio == 1`` gives the same edges as :func:`make_uniform_mesh`.
    """
    xmin, xmax, ratio = float(xmin), float(xmax), float(ratio)
    _check_bounds(xmin, xmax)
    cells = _check_cells(cells)
    if not math.isfinite(ratio) or ratio <= 0:
        raise MeshError(f"ratio must be a positive finite number, got {ratio!r}")
    if ratio == 1.0:
        return make_uniform_mesh(xmin, xmax, cells)
    rel = ratio ** np.arange(cells, dtype=float)
    cum = np.concatenate(([0.0], np.cumsum(rel)))
    edges = xmin + (xmax - xmin) * (cum / cum[-1])
    edges[0], edges[-1] = xmin, xmax
    return Mesh(edges)


def cell_average_projection(
    f: Callable, mesh: Mesh, quad_order: int = DEFAULT_QUAD_ORDER
) -> State:
    """Project ``f`` onto ``mesh`` as cell averages using Gauss-Legendre per cell.

    ``f`` may be vectorised or scalar; scalar callables are evaluated pointwise.
    """
    if quad_order < 1:
        raise ValueError("quad_order must be >= 1")
    nodes, weights = np.polynomial.legendre.leggauss(quad_order)
    lo = mesh.edges[:-1, None]
    hi = mesh.edges[1:, None]
    pts = 0.5 * (hi - lo) * nodes + 0.5 * (hi + lo)
    try:
        vals = np.asarray(f(pts), dtype=float)
        if vals.shape != pts.shape:
            vals = np.broadcast_to(vals, pts.shape)
    except (TypeError, ValueError):
        vals = np.vectorize(lambda x: float(f(x)), otypes=[float])(pts)
    bad = ~np.all(np.isfinite(vals), axis=1)
    if bad.any():
        i = int(np.argmax(bad))
        raise ProjectionError(
            f"function is not finite in cell {i} "
            f"]{mesh.edges[i]!r}, {mesh.edges[i + 1]!r}]",
            cell=i,
        )
    avg = 0.5 * (vals @ weights)
    return State(mesh, 0.0, avg)
