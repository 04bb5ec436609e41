"""Uniform grid hash over the periodic window.

Buckets points by cell for O(1) expected neighborhood gathering; backs the
box-emptiness probes of the construction and the ordered cell walk of the
visibility engine.  The cell count per side must divide the window side so
cells tile the torus exactly.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .geometry import OrientedBox, Segment, Window, box_contains_points, torus_dist


@dataclass
class GridIndex:
    window: Window
    cells_per_side: int
    buckets: dict = field(default_factory=dict)
    _coords: list = field(default_factory=list)
    _coords_arr: np.ndarray | None = None

    @property
    def cell_size(self) -> float:
        return self.window.side / self.cells_per_side

    @property
    def n_points(self) -> int:
        return len(self._coords)

    def coords(self) -> np.ndarray:
        """All stored points as an (N, d) array (cached between inserts)."""
        if self._coords_arr is None:
            if self._coords:
                self._coords_arr = np.asarray(self._coords, dtype=float)
            else:
                self._coords_arr = np.empty((0, self.window.d))
        return self._coords_arr

    def cell_of(self, p) -> tuple:
        c = np.floor(np.asarray(p, dtype=float) / self.cell_size).astype(int)
        return tuple(c % self.cells_per_side)

    def insert(self, p) -> int:
        """Append one point; returns its identifier. Bucket order is insertion order."""
        p = np.asarray(p, dtype=float)
        pid = len(self._coords)
        self._coords.append(p)
        self._coords_arr = None
        self.buckets.setdefault(self.cell_of(p), []).append(pid)
        return pid

    def bucket_ids(self, cells) -> np.ndarray:
        """Point ids stored in the given cells, deduplicated, ascending."""
        ids: list[int] = []
        for cell in cells:
            ids.extend(self.buckets.get(cell, ()))
        if not ids:
            return np.empty(0, dtype=int)
        return np.unique(np.asarray(ids, dtype=int))


def index_build(points, cell_size: float, w: Window) -> GridIndex:
    """Build the grid; cell_size must divide L evenly (within 1e-9 relative)."""
    ratio = w.side / cell_size
    n = round(ratio)
    if n < 1 or abs(ratio - n) > 1e-9 * max(1.0, ratio):
        raise ConfigError(f"cell size {cell_size} does not evenly divide L = {w.side}")
    idx = GridIndex(window=w, cells_per_side=n)
    for p in np.atleast_2d(np.asarray(points, dtype=float)) if len(points) else []:
        idx.insert(p)
    return idx


def _ring_cells(idx: GridIndex, center_cell, ring: int):
    n = idx.cells_per_side
    span = range(-ring, ring + 1)
    for off in itertools.product(span, repeat=idx.window.d):
        yield tuple((c + o) % n for c, o in zip(center_cell, off))


def query_ball(idx: GridIndex, p, r: float) -> np.ndarray:
    """Ids of exactly the points within closed torus distance r of p."""
    if r > idx.window.side / 2:
        raise ConfigError(f"query radius {r} exceeds L/2")
    ring = math.ceil(r / idx.cell_size - 1e-12)
    ring = min(ring, idx.cells_per_side // 2 + 1)
    cand = idx.bucket_ids(_ring_cells(idx, idx.cell_of(p), ring))
    if cand.size == 0:
        return cand
    d = torus_dist(p, idx.coords()[cand], idx.window)
    return cand[d <= r]


def box_cell_range(idx: GridIndex, box: OrientedBox):
    """Cells overlapping the box's axis-aligned bounding box, lexicographic."""
    reach = np.abs(box.frame) @ box.half_extents
    h = idx.cell_size
    n = idx.cells_per_side
    lo = np.floor((box.center - reach) / h).astype(int)
    hi = np.floor((box.center + reach) / h).astype(int)
    spans = [range(int(a), int(b) + 1) for a, b in zip(lo, hi)]
    for raw in itertools.product(*spans):
        yield tuple(c % n for c in raw)


def query_box_nonempty(idx: GridIndex, box: OrientedBox) -> bool:
    """True iff some stored point lies in the closed box; early exit on first hit."""
    if box.circumradius > idx.window.side / 2:
        raise ConfigError("box circumradius exceeds L/2")
    coords = idx.coords()
    for cell in box_cell_range(idx, box):
        ids = idx.buckets.get(cell)
        if not ids:
            continue
        if np.any(box_contains_points(box, coords[ids], idx.window)):
            return True
    return False


def ray_cells(idx: GridIndex, seg: Segment):
    """Walk the cells pierced by the segment in entry-parameter order.

    Yields (cell, entry_t) pairs, each cell exactly once, entry parameters
    nondecreasing starting at 0 for the origin's cell.  Cells are half-open
    [ih, (i+1)h) boxes; a crossing that lands exactly on a boundary yields
    the next cell (closed segment endpoints included).  Multi-axis ties
    (corner crossings) conservatively yield every incident cell.
    """
    if seg.length > idx.window.side:
        raise ConfigError("segment longer than the window side")
    h = idx.cell_size
    n = idx.cells_per_side
    d = idx.window.d
    v = seg.direction
    pos = np.asarray(seg.origin, dtype=float) % idx.window.side
    cell = np.floor(pos / h).astype(int)

    t_max = np.full(d, np.inf)
    t_delta = np.full(d, np.inf)
    step = np.zeros(d, dtype=int)
    for i in range(d):
        if v[i] > 0:
            step[i] = 1
            t_max[i] = ((cell[i] + 1) * h - pos[i]) / v[i]
            t_delta[i] = h / v[i]
        elif v[i] < 0:
            step[i] = -1
            t_max[i] = (cell[i] * h - pos[i]) / v[i]
            t_delta[i] = -h / v[i]

    seen = set()

    def emit(c, t):
        key = tuple(ci % n for ci in c)
        if key not in seen:
            seen.add(key)
            yield key, t

    yield from emit(cell, 0.0)
    tie_tol = 1e-12 * max(1.0, seg.length)
    while True:
        t_next = float(np.min(t_max))
        if t_next > seg.length:
            return
        axes = [i for i in range(d) if t_max[i] <= t_next + tie_tol]
        if len(axes) > 1:
            # Corner crossing: yield every incident cell, single-axis steps first.
            for r in range(1, len(axes)):
                for combo in itertools.combinations(axes, r):
                    c = cell.copy()
                    for i in combo:
                        c[i] += step[i]
                    yield from emit(c, t_next)
        for i in axes:
            cell[i] += step[i]
            t_max[i] += t_delta[i]
        yield from emit(cell, t_next)
