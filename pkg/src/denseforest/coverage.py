"""Batched emptiness scans for the planar test-box families.

A test box at grid point g, rotation angle alpha contains a point p at polar
offset (rho, beta) from g iff rho |cos(beta - alpha)| <= a and
rho |sin(beta - alpha)| <= b, with a and b the long and short half extents.
For fixed p that condition carves out at most two angle intervals modulo pi,
so one point marks whole runs of rotation indices at once.  A difference
array over the index line then answers "which of the m rotated copies at g
contain no point" for every grid point of a unit cube in a handful of numpy
passes instead of n_grid * m * n_points predicate calls.

Claims of coverage are made slightly conservative (intervals shrunk by a
tiny angular slack) so that anything reported covered is covered under the
exact closed-box predicate; the exact predicate settles whatever a shrunken
scan could not prove.
"""

from __future__ import annotations

import itertools

import numpy as np

from .geometry import Window, torus_delta
from .testboxes import ScaleParams, check_window_fits, grid_coordinates_1d

# Angular slack (radians) guaranteeing scan coverage implies exact coverage.
# Trig round-off is ~1e-15 rad; the build uses a wider slack than the
# certification rescan so every box the build left alone stays provably full.
BUILD_SLACK = 2e-9
CERTIFY_SLACK = 1e-9

_REL = 1e-12  # relative inward shrink on the radial comparisons


def cube_grid(cube, params: ScaleParams) -> np.ndarray:
    """Grid point coordinates of one unit cube, grid-major lexicographic."""
    offs = grid_coordinates_1d(params)
    corner = np.asarray(cube, dtype=float)
    mesh = np.meshgrid(*([offs] * params.d), indexing="ij")
    pts = np.column_stack([m.ravel() for m in mesh])
    return pts + corner


def _interval_ranges(base, width, theta, m):
    """Index ranges [jlo, jhi] covered by angle intervals [base, base+width].

    base must lie in [0, pi); intervals wider than the remaining arc wrap
    around to index 0.  Rounds inward so every returned index angle truly
    lies inside the interval.
    """
    hi = base + width
    jlo = np.ceil(base / theta).astype(np.int64)
    jlo += (jlo * theta) < base  # float-division ulp guard
    jhi_raw = np.floor(np.minimum(hi, np.pi) / theta).astype(np.int64)
    jhi_raw -= (jhi_raw * theta) > hi
    jhi = np.minimum(jhi_raw, m - 1)

    los = [jlo]
    his = [jhi]
    keeps = [jlo <= jhi]

    wrapped = hi - np.pi
    has_wrap = wrapped > 0
    if np.any(has_wrap):
        jhi2 = np.floor(wrapped / theta).astype(np.int64)
        jhi2 -= (jhi2 * theta) > wrapped
        jhi2 = np.minimum(jhi2, m - 1)
        los.append(np.zeros_like(jhi2))
        his.append(jhi2)
        keeps.append(has_wrap & (jhi2 >= 0))
    return los, his, keeps


def coverage_matrix(grid_pts: np.ndarray, points: np.ndarray, params: ScaleParams,
                    w: Window, slack: float) -> np.ndarray:
    """Bool matrix (n_grid, m): which rotated copies at each grid point hold a point."""
    n_grid = len(grid_pts)
    m = params.rotations_per_axis
    covered = np.zeros((n_grid, m), dtype=bool)
    if len(points) == 0:
        return covered

    a = params.long_side / 2
    b = params.short_side / 2
    theta = params.theta
    r_gather = params.circumradius * (1 + 1e-9) + 1e-12

    delta = torus_delta(grid_pts[:, None, :], points[None, :, :], w)
    rho = np.hypot(delta[..., 0], delta[..., 1])

    # Points essentially at the grid point occupy every rotated copy.
    full_rows = np.any(rho <= b * (1 - _REL), axis=1)
    covered[full_rows] = True

    g_idx, p_idx = np.nonzero((rho <= r_gather) & ~full_rows[:, None])
    if g_idx.size == 0:
        return covered
    dx = delta[g_idx, p_idx, 0]
    dy = delta[g_idx, p_idx, 1]
    r = rho[g_idx, p_idx]

    beta = np.arctan2(dy, dx) % np.pi
    half_width = np.arcsin(np.minimum(b * (1 - _REL) / r, 1.0)) - slack
    inner_cut = np.arccos(np.minimum(a * (1 - _REL) / r, 1.0))
    inner_cut = np.where(inner_cut > 0, inner_cut + slack, 0.0)
    keep = half_width > inner_cut
    if not np.any(keep):
        return covered
    g_idx = g_idx[keep]
    beta = beta[keep]
    half_width = half_width[keep]
    inner_cut = inner_cut[keep]

    size = n_grid * (m + 1)
    diff = np.zeros(size, dtype=np.int64)
    width = half_width - inner_cut
    # Two symmetric intervals about beta (they coincide when inner_cut == 0).
    for lo_angle in (beta + inner_cut, beta - half_width):
        base = lo_angle % np.pi
        los, his, keeps = _interval_ranges(base, width, theta, m)
        for jlo, jhi, ok in zip(los, his, keeps):
            if not np.any(ok):
                continue
            flat_lo = g_idx[ok] * (m + 1) + jlo[ok]
            flat_hi = g_idx[ok] * (m + 1) + jhi[ok] + 1
            diff += np.bincount(flat_lo, minlength=size)
            diff -= np.bincount(flat_hi, minlength=size)
    runs = np.cumsum(diff.reshape(n_grid, m + 1), axis=1)[:, :m]
    covered |= runs > 0
    return covered


def _slab_points(points: np.ndarray, cube, w: Window, reach: float) -> np.ndarray:
    """Points within `reach` of the unit cube at `cube`, by torus slab masks."""
    if len(points) == 0:
        return points
    mask = np.ones(len(points), dtype=bool)
    L = w.side
    for axis, c in enumerate(cube):
        rel = (points[:, axis] - (c - reach)) % L
        mask &= rel <= 1 + 2 * reach
    return points[mask]


_PAIR_BUDGET = 1_500_000  # max entries in one (grid, point) work matrix


def iter_scale_coverage(points: np.ndarray, params: ScaleParams, w: Window,
                        slack: float):
    """Yield (cube, grid_pts, covered) per unit cube in lexicographic order.

    Grid rows are processed in chunks to bound the pairwise work matrices.
    """
    check_window_fits(params, w)
    points = np.asarray(points, dtype=float)
    n = params.grid_points_per_side
    m = params.rotations_per_axis
    reach = params.circumradius * (1 + 1e-9) + 1e-9
    for cube in itertools.product(range(w.L), repeat=params.d):
        grid_pts = cube_grid(cube, params)
        local = _slab_points(points, cube, w, reach)
        if len(local) == 0:
            covered = np.zeros((len(grid_pts), m), dtype=bool)
        else:
            rows_per_chunk = max(1, _PAIR_BUDGET // (n * len(local)))
            blocks = []
            for start in range(0, n, rows_per_chunk):
                rows = grid_pts[start * n:(start + rows_per_chunk) * n]
                blocks.append(coverage_matrix(rows, local, params, w, slack))
            covered = np.vstack(blocks)
        yield cube, grid_pts, covered


def count_empty_boxes(points: np.ndarray, params: ScaleParams, w: Window) -> int:
    """Number of family members (over the whole window) holding no point.

    Runs with zero slack so the count matches the exact closed-box predicate
    up to ties of measure zero.
    """
    empty = 0
    for _cube, _grid, covered in iter_scale_coverage(points, params, w, slack=0.0):
        empty += covered.size - int(np.count_nonzero(covered))
    return empty


def coverage_bitmap_single(grid_pt: np.ndarray, points: np.ndarray,
                           params: ScaleParams, w: Window, slack: float) -> np.ndarray:
    """Coverage of the m rotated copies at one grid point by the given points."""
    return coverage_matrix(grid_pt[None, :], np.asarray(points, dtype=float),
                           params, w, slack)[0]
