"""Per-scale test-box families: parameters, enumeration, and covering checks.

At scale eps = 2^-k the family consists of narrow boxes (d-1 short sides
eps/(4 sqrt d), one long side eps^-(d-1) E(1/eps) / (4 sqrt d)) centred on an
axis-aligned grid in each unit cube and rotated through multiples of
theta = 2 eps^(d+1) about every short-axis plane.  Any box with d-1 sides
2 eps and one side eps^-(d-1) E(1/eps) whose centre lies in the cube fully
contains one family member, so filling every empty family member bounds the
visibility at that scale.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, WindowTooSmallError
from .geometry import (
    OrientedBox,
    Window,
    box_contains_points,
    frame_from_rotation_indices,
)

# Counts are kept inside the range usable as array indices.
_COUNT_LIMIT = 2**63 - 1


@dataclass(frozen=True)
class ErrorTerm:
    """The slow-growing factor E in the visibility target eps^-(d-1) E(1/eps).

    kind "log" is E(x) = ln x.  kind "table" interpolates a user-supplied
    nondecreasing table linearly (xs strictly increasing, xs[0] <= 4).
    Admissibility on [2, inf): E nondecreasing and 1/x <= E(x) <= x.
    """

    kind: str = "log"
    xs: tuple[float, ...] | None = None
    ys: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.kind == "log":
            if self.xs is not None or self.ys is not None:
                raise ConfigError("log error term takes no table")
        elif self.kind == "table":
            if not self.xs or not self.ys or len(self.xs) != len(self.ys):
                raise ConfigError("table error term needs matching xs and ys")
            xs = np.asarray(self.xs, dtype=float)
            ys = np.asarray(self.ys, dtype=float)
            if np.any(np.diff(xs) <= 0):
                raise ConfigError("table xs must be strictly increasing")
            if np.any(np.diff(ys) < 0):
                raise ConfigError("error term must be nondecreasing")
            if xs[0] > 4:
                raise ConfigError("table must start at x <= 4 to cover coarse scales")
        else:
            raise ConfigError(f"unknown error term kind {self.kind!r}")

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "log":
            out = np.log(x)
        else:
            out = np.interp(x, self.xs, self.ys)
        return float(out) if out.ndim == 0 else out

    def check_admissible(self, x: float):
        """Raise unless 1/x <= E(x) <= x and E is locally nondecreasing at x."""
        val = self(x)
        if not (1.0 / x <= val <= x):
            raise ConfigError(
                f"error term E({x}) = {val} outside the admissible band [1/x, x]"
            )
        if self(min(x * 2, x + 1)) < val:
            raise ConfigError(f"error term decreases above x = {x}")

    def label(self) -> str:
        if self.kind == "log":
            return "log"
        pairs = ",".join(f"{x!r}:{y!r}" for x, y in zip(self.xs, self.ys))
        return f"table {pairs}"


def sqrt_d_constant(d: int) -> float:
    """(4 sqrt d)^d computed as 4^d * d^(d/2); exact float for even d."""
    return 4.0**d * float(d) ** (d / 2)


@dataclass(frozen=True)
class ScaleParams:
    """All derived constants for one (dimension, scale, error term) triple."""

    d: int
    k: int
    eps: float
    theta: float
    grid_spacing: float
    short_side: float
    long_side: float
    grid_points_per_side: int
    rotations_per_axis: int
    nominal_cardinality: float

    @property
    def half_extents(self) -> np.ndarray:
        h = np.full(self.d, self.short_side / 2)
        h[0] = self.long_side / 2
        return h

    @property
    def circumradius(self) -> float:
        return math.hypot(self.long_side / 2, math.sqrt(self.d - 1) * self.short_side / 2)

    @property
    def visibility_target(self) -> float:
        """V(eps): the long side times 4 sqrt d."""
        return self.long_side * 4 * math.sqrt(self.d)


def scale_params(d: int, k: int, error_term: ErrorTerm = ErrorTerm()) -> ScaleParams:
    """Derive every per-scale constant from (d, k, E) with eps = 2^-k."""
    if d < 2:
        raise ConfigError(f"dimension must be >= 2, got {d}")
    if k < 2:
        raise ConfigError(f"scale index must be >= 2, got {k}")
    eps = 2.0**-k
    error_term.check_admissible(1.0 / eps)
    root = 4 * math.sqrt(d)
    theta = 2 * eps ** (d + 1)
    spacing = eps / root
    long_side = eps ** -(d - 1) * error_term(1.0 / eps) / root
    n_side = math.ceil(root / eps)
    m_rot = math.floor(math.pi / theta) + 1
    nominal = (sqrt_d_constant(d) / eps**d) * (math.pi / (2 * eps ** (d + 1))) ** (d - 1)
    return ScaleParams(
        d=d,
        k=k,
        eps=eps,
        theta=theta,
        grid_spacing=spacing,
        short_side=spacing,
        long_side=long_side,
        grid_points_per_side=n_side,
        rotations_per_axis=m_rot,
        nominal_cardinality=nominal,
    )


@dataclass(frozen=True)
class TestBoxId:
    """Names one family member: unit cube, grid coordinates, rotation indices."""

    cube: tuple[int, ...]
    grid: tuple[int, ...]
    rot: tuple[int, ...]


def count_test_boxes(params: ScaleParams) -> int:
    """Family size per unit cube under the integer grid/rotation conventions."""
    count = params.grid_points_per_side**params.d * params.rotations_per_axis ** (
        params.d - 1
    )
    if count > _COUNT_LIMIT:
        raise OverflowError(
            f"test-box count {count} exceeds the indexable limit 2^63 - 1"
        )
    return count


def grid_coordinates_1d(params: ScaleParams) -> np.ndarray:
    """Grid offsets within a unit cube along one axis, anchored at the corner."""
    return np.arange(params.grid_points_per_side) * params.grid_spacing


def check_window_fits(params: ScaleParams, w: Window):
    if params.circumradius > w.side / 2:
        raise WindowTooSmallError(
            f"test box at scale k={params.k} has circumradius "
            f"{params.circumradius:.4g} > L/2 = {w.side / 2:.4g}"
        )


def enumerate_test_boxes(cube, params: ScaleParams, w: Window):
    """Stream the family for one unit cube in deterministic order.

    Grid-major lexicographic, then rotation-index lexicographic; the first
    box is axis aligned with long axis e_0.  Memory use is O(1) in the
    family size.
    """
    cube = tuple(int(c) for c in cube)
    if any(c < 0 or c >= w.L for c in cube) or len(cube) != params.d:
        raise ConfigError(f"cube {cube} not inside the window")
    check_window_fits(params, w)
    offsets = grid_coordinates_1d(params)
    half = params.half_extents
    corner = np.asarray(cube, dtype=float)
    n = params.grid_points_per_side
    m = params.rotations_per_axis
    for grid in itertools.product(range(n), repeat=params.d):
        center = corner + offsets[list(grid)]
        for rot in itertools.product(range(m), repeat=params.d - 1):
            frame = frame_from_rotation_indices(params.d, rot, params.theta)
            yield TestBoxId(cube, grid, rot), OrientedBox(center, half, frame)


def make_test_box(box_id: TestBoxId, params: ScaleParams) -> OrientedBox:
    """Materialize one family member from its id."""
    offsets = grid_coordinates_1d(params)
    center = np.asarray(box_id.cube, dtype=float) + offsets[list(box_id.grid)]
    frame = frame_from_rotation_indices(params.d, box_id.rot, params.theta)
    return OrientedBox(center, params.half_extents, frame)


def angle_margin_check(params: ScaleParams, error_term: ErrorTerm = ErrorTerm()):
    """Lower bound on the safe rotation angle and whether theta clears it.

    A scaled-down box centred within eps/2 of a larger box's centre can tilt
    by at least phi with sin phi >= 2 eps^d / E(1/eps); the family's step
    theta = 2 eps^(d+1) must not exceed that bound.
    """
    phi_lower = 2 * params.eps**params.d / error_term(1.0 / params.eps)
    return phi_lower, bool(phi_lower >= params.theta)


def large_box(params: ScaleParams, center, frame) -> OrientedBox:
    """The box family being covered: d-1 sides 2 eps, one side V(eps)."""
    half = np.full(params.d, params.eps)
    half[0] = params.visibility_target / 2
    return OrientedBox(np.asarray(center, dtype=float), half, frame)


def _axis_angles_from_frame(d: int, frame: np.ndarray) -> np.ndarray:
    """Tilt angles (one per short-axis plane) whose composed frame points the
    long axis along frame[:, 0]; inverse of frame_from_rotation_indices up to
    the box's symmetry under negating the long axis."""
    u = frame[:, 0].copy()
    if d == 2:
        return np.array([math.atan2(u[1], u[0]) % math.pi])
    if d == 3:
        if u[1] < 0:
            u = -u
        s1 = min(max(u[1], 0.0), 1.0)
        c1 = math.sqrt(max(1.0 - s1 * s1, 0.0))
        if c1 < 1e-12:
            return np.array([math.pi / 2, 0.0])
        sign = 1.0 if u[2] >= 0 else -1.0
        a1 = math.atan2(s1, sign * c1)
        a2 = math.atan2(sign * u[2], sign * u[0])
        if a2 < 0:
            a2 += math.pi
        return np.array([a1 % math.pi, a2])
    raise ConfigError(f"containment search supports d = 2 or 3, got d = {d}")


def _candidate_rotation_indices(angle: float, params: ScaleParams) -> np.ndarray:
    """Rotation indices whose angle is within 2 theta of `angle` modulo pi."""
    m = params.rotations_per_axis
    js = np.arange(m)
    diff = np.abs(js * params.theta - angle)
    diff = np.minimum(diff, math.pi - diff)
    cands = js[diff <= 2 * params.theta]
    return cands if cands.size else np.array([int(round(angle / params.theta)) % m])


def find_contained_test_box(large: OrientedBox, params: ScaleParams, w: Window):
    """Locate a family member fully inside the given large box, or None.

    Follows the covering argument: only grid points within eps/2 of the large
    box's centre (in its own unit cube) and rotation indices within a couple
    of steps of its orientation are candidates.  Returns the first contained
    candidate in (grid, rotation) lexicographic order; None means the
    covering claim failed for this instance.
    """
    half = np.full(params.d, params.eps)
    half[0] = params.visibility_target / 2
    if not np.allclose(large.half_extents, half, rtol=1e-9, atol=0):
        raise ConfigError("large box dimensions do not match the scale parameters")
    if large.circumradius > w.side / 2:
        raise WindowTooSmallError(
            f"large box circumradius {large.circumradius:.4g} > L/2 = {w.side / 2:.4g}"
        )
    cube = tuple(int(np.floor(c)) % w.L for c in large.center)
    corner = np.asarray(cube, dtype=float)
    offsets = grid_coordinates_1d(params)
    n = params.grid_points_per_side

    local = ((large.center - corner) % w.side) % 1.0
    reach = params.eps / 2
    axis_ranges = []
    for x in local:
        lo = max(0, math.floor((x - reach) / params.grid_spacing))
        hi = min(n - 1, math.ceil((x + reach) / params.grid_spacing))
        axis_ranges.append(range(lo, hi + 1))

    angles = _axis_angles_from_frame(params.d, large.frame)
    rot_candidates = [_candidate_rotation_indices(a, params) for a in angles]

    half_test = params.half_extents
    for grid in itertools.product(*axis_ranges):
        center = corner + offsets[list(grid)]
        for rot in itertools.product(*(c.tolist() for c in rot_candidates)):
            frame = frame_from_rotation_indices(params.d, rot, params.theta)
            candidate = OrientedBox(center, half_test, frame)
            if np.all(box_contains_points(large, candidate.corners(), w)):
                return TestBoxId(cube, tuple(grid), tuple(rot)), candidate
    return None
