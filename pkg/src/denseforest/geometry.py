"""Geometric primitives on a periodic window.

All coordinates live on the torus [0, L)^d with the wrap-around (minimal
image) metric.  Boxes are oriented: a center, per-axis half extents, and an
orthonormal frame whose column j is the direction of box axis j.  Axis 0 is
the long axis by convention.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError

FRAME_TOL = 1e-10
UNIT_TOL = 1e-12


@dataclass(frozen=True)
class Window:
    """Periodic fundamental domain [0, L)^d with integer side length."""

    d: int
    L: int

    def __post_init__(self):
        if self.d < 2:
            raise ConfigError(f"dimension must be >= 2, got {self.d}")
        if int(self.L) != self.L or self.L < 1:
            raise ConfigError(f"window side must be a positive integer, got {self.L}")

    @property
    def side(self) -> float:
        return float(self.L)

    def volume(self) -> float:
        return float(self.L) ** self.d

    def cubes(self):
        """Integer corners of the unit cubes tiling the window, in lexicographic order."""
        return itertools.product(range(self.L), repeat=self.d)


def wrap(coords, w: Window):
    """Reduce coordinates into [0, L) componentwise."""
    return np.asarray(coords, dtype=float) % w.side


def torus_delta(a, b, w: Window):
    """Minimal-image displacement b - a, each component in [-L/2, L/2)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    L = w.side
    return (b - a + L / 2) % L - L / 2


def torus_dist(a, b, w: Window):
    """Wrap-around Euclidean distance."""
    return np.linalg.norm(torus_delta(a, b, w), axis=-1)


def unit_vector(components):
    """Validate and return a direction of unit Euclidean norm."""
    v = np.asarray(components, dtype=float)
    n = np.linalg.norm(v)
    if abs(n - 1.0) > UNIT_TOL:
        raise ValueError(f"direction norm {n!r} is not 1 within {UNIT_TOL}")
    return v


@dataclass(frozen=True)
class Segment:
    """Directed sight line: origin + t * direction for t in [0, length]."""

    origin: np.ndarray
    direction: np.ndarray
    length: float

    def __post_init__(self):
        object.__setattr__(self, "origin", np.asarray(self.origin, dtype=float))
        object.__setattr__(self, "direction", unit_vector(self.direction))
        if not self.length > 0:
            raise ValueError(f"segment length must be positive, got {self.length}")

    def point_at(self, t: float) -> np.ndarray:
        """Unwrapped point at parameter t (callers wrap as needed)."""
        return self.origin + t * self.direction


@dataclass(frozen=True)
class OrientedBox:
    """Rotated closed box: |frame.T @ (p - center)|_j <= half_extents[j] for all j."""

    center: np.ndarray
    half_extents: np.ndarray
    frame: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float))
        object.__setattr__(self, "half_extents", np.asarray(self.half_extents, dtype=float))
        object.__setattr__(self, "frame", np.asarray(self.frame, dtype=float))
        if np.any(self.half_extents <= 0):
            raise ValueError("all half extents must be positive")
        gram = self.frame.T @ self.frame
        err = np.max(np.abs(gram - np.eye(len(self.half_extents))))
        if err > FRAME_TOL:
            raise ValueError(f"frame is not orthonormal (|F^T F - I|_max = {err:.2e})")

    @property
    def circumradius(self) -> float:
        """Center-to-corner distance; must stay <= L/2 for unambiguous wrapping."""
        return float(np.linalg.norm(self.half_extents))

    def corners(self) -> np.ndarray:
        """All 2^d corners, unwrapped."""
        d = len(self.half_extents)
        signs = np.array(list(itertools.product((-1.0, 1.0), repeat=d)))
        return self.center + (signs * self.half_extents) @ self.frame.T


def box_contains_points(box: OrientedBox, points, w: Window) -> np.ndarray:
    """Vectorized closed-box membership for an (n, d) array of points."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    local = torus_delta(box.center, pts, w) @ box.frame
    return np.all(np.abs(local) <= box.half_extents, axis=1)


def box_contains_point(box: OrientedBox, p, w: Window) -> bool:
    """Closed-box membership: boundary points count as inside."""
    return bool(box_contains_points(box, p, w)[0])


def box_contains_box(outer: OrientedBox, inner: OrientedBox, w: Window) -> bool:
    """True iff every corner of inner lies in outer (exact by convexity).

    Raises if inner's circumradius exceeds L/2: corner positions would be
    ambiguous under wrapping.
    """
    if inner.circumradius > w.side / 2:
        raise ValueError(
            f"inner circumradius {inner.circumradius:.6g} exceeds L/2 = {w.side / 2:.6g}"
        )
    return bool(np.all(box_contains_points(outer, inner.corners(), w)))


def elementary_rotation(d: int, axis: int, alpha: float) -> np.ndarray:
    """Rotation by alpha in the (e_0, e_axis) coordinate plane of R^d."""
    if not 1 <= axis < d:
        raise ValueError(f"rotation axis must be in [1, {d}), got {axis}")
    R = np.eye(d)
    c, s = np.cos(alpha), np.sin(alpha)
    R[0, 0] = c
    R[axis, axis] = c
    R[axis, 0] = s
    R[0, axis] = -s
    return R


def frame_from_rotation_indices(d: int, indices, theta: float) -> np.ndarray:
    """Orthonormal frame for a box tilted off the e_0 long axis.

    Applies the elementary rotation in the (e_0, e_j) plane by indices[j-1]
    * theta for j = 1..d-1, composed in increasing j order (the rotation for
    the last axis is applied last).  All rotation angles must lie in [0, pi].
    """
    indices = tuple(int(k) for k in indices)
    if len(indices) != d - 1:
        raise ValueError(f"expected {d - 1} rotation indices, got {len(indices)}")
    F = np.eye(d)
    for j, k in enumerate(indices, start=1):
        angle = k * theta
        if k < 0 or angle > np.pi + 1e-12:
            raise ValueError(f"rotation angle {angle!r} outside [0, pi]")
        F = elementary_rotation(d, j, angle) @ F
    return F


def rotation_frame_2d(alpha: float) -> np.ndarray:
    """Frame with long axis at angle alpha from e_0 (plane rotation matrix)."""
    c, s = np.cos(alpha), np.sin(alpha)
    return np.array([[c, -s], [s, c]])


_IMAGE_CACHE: dict[int, np.ndarray] = {}


def _image_shifts(d: int) -> np.ndarray:
    """The 3^d lattice shifts {-1, 0, 1}^d used for exact torus segment math."""
    if d not in _IMAGE_CACHE:
        _IMAGE_CACHE[d] = np.array(list(itertools.product((-1.0, 0.0, 1.0), repeat=d)))
    return _IMAGE_CACHE[d]


def dist_point_segment(p, seg: Segment, w: Window):
    """Minimal torus distance from p to the segment, with its parameter.

    Returns (distance, t) where t is the smallest minimizer in [0, length].
    Exact for segments no longer than L: the minimum is taken over the 3^d
    periodic images of p against the unwrapped segment.
    """
    if seg.length > w.side:
        raise ValueError(f"segment length {seg.length} exceeds window side {w.side}")
    delta0 = torus_delta(seg.origin, p, w)
    images = delta0 + _image_shifts(w.d) * w.side
    s = images @ seg.direction
    t = np.clip(s, 0.0, seg.length)
    dists = np.linalg.norm(images - t[:, None] * seg.direction, axis=1)
    best = np.min(dists)
    ties = dists == best
    return float(best), float(np.min(t[ties]))
