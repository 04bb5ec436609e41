"""Visibility queries, surveys, and the exhaustive scale certificate.

The visibility from x in direction v at scale eps is the smallest t >= 0
with some forest point within eps of x + t v (torus metric).  The engine
walks the index cells pierced by the ray in entry order, gathers candidate
points from a ring around each cell, and stops as soon as no unseen point
could touch earlier than the best time found; a linear-scan oracle with the
same first-touch arithmetic provides reference semantics.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from . import coverage
from .errors import ConfigError
from .forest import Forest
from .geometry import Segment, Window, _image_shifts, torus_delta, torus_dist
from .sampling import Seed, uniform_direction, uniform_points
from .spatial_index import GridIndex, query_box_nonempty, ray_cells
from .testboxes import make_test_box, scale_params, TestBoxId


@dataclass(frozen=True)
class VisibilityResult:
    """t is None when no point is reached within the horizon t_max."""

    t: float | None
    blocker: int | None
    horizon: float

    @property
    def beyond_horizon(self) -> bool:
        return self.t is None


def _first_touch(deltas: np.ndarray, v: np.ndarray, eps: float, t_max: float,
                 L: float):
    """Earliest touch parameter per point, over all periodic images.

    deltas: (n, d) minimal-image offsets point - origin.  Returns (n,) array
    of touch times, inf where the point is never within eps of the segment.
    """
    if len(deltas) == 0:
        return np.empty(0)
    shifts = _image_shifts(deltas.shape[1]) * L
    imgs = deltas[:, None, :] + shifts[None, :, :]  # (n, 3^d, d)
    s = imgs @ v
    u2 = np.einsum("nid,nid->ni", imgs, imgs) - s * s
    disc = eps * eps - u2
    reachable = disc >= 0
    root = np.sqrt(np.where(reachable, disc, 0.0))
    t_enter = s - root
    t_exit = s + root
    t_candidate = np.maximum(t_enter, 0.0)
    ok = reachable & (t_exit >= 0.0) & (t_candidate <= t_max)
    t_candidate = np.where(ok, t_candidate, np.inf)
    return t_candidate.min(axis=1)


def _best_of(times: np.ndarray, ids: np.ndarray):
    """(t, id) minimum with ties broken toward the smaller identifier."""
    finite = np.isfinite(times)
    if not np.any(finite):
        return None, None
    t_best = times[finite].min()
    tied = ids[finite & (times == t_best)]
    return float(t_best), int(tied.min())


def visibility_bruteforce(points, x, v, eps: float, t_max: float,
                          w: Window) -> VisibilityResult:
    """Reference query: linear scan of every point with the first-touch formula."""
    if not 0 < eps:
        raise ConfigError(f"eps must be positive, got {eps}")
    if t_max > w.side:
        raise ConfigError(f"t_max = {t_max} exceeds the window side {w.side}")
    points = np.asarray(points, dtype=float).reshape(-1, w.d)
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    deltas = torus_delta(x, points, w)
    times = _first_touch(deltas, v, eps, t_max, w.side)
    t, pid = _best_of(times, np.arange(len(points)))
    if t is None:
        return VisibilityResult(None, None, t_max)
    return VisibilityResult(t, pid, t_max)


def visibility_query(index: GridIndex, x, v, eps: float,
                     t_max: float) -> VisibilityResult:
    """Accelerated query over an indexed point set."""
    w = index.window
    if not 0 < eps:
        raise ConfigError(f"eps must be positive, got {eps}")
    if t_max > w.side:
        raise ConfigError(f"t_max = {t_max} exceeds the window side {w.side}")
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    coords = index.coords()
    if len(coords) == 0:
        return VisibilityResult(None, None, t_max)

    ring = max(1, math.ceil(eps / index.cell_size - 1e-12))
    seg = Segment(x % w.side, v, t_max)
    best_t = math.inf
    best_id = None
    seen: set[int] = set()
    offs = [range(-ring, ring + 1)] * w.d
    import itertools as _it

    ring_offsets = list(_it.product(*offs))
    n_cells = index.cells_per_side
    for cell, entry in ray_cells(index, seg):
        if entry > best_t:
            break
        fresh = []
        for off in ring_offsets:
            bucket = index.buckets.get(
                tuple((c + o) % n_cells for c, o in zip(cell, off))
            )
            if bucket:
                fresh.extend(pid for pid in bucket if pid not in seen)
        if not fresh:
            continue
        seen.update(fresh)
        ids = np.asarray(fresh, dtype=int)
        deltas = torus_delta(x, coords[ids], w)
        times = _first_touch(deltas, v, eps, t_max, w.side)
        t, pid = _best_of(times, ids)
        if t is not None and (t < best_t or (t == best_t and pid < best_id)):
            best_t, best_id = t, pid
    if not math.isfinite(best_t):
        return VisibilityResult(None, None, t_max)
    return VisibilityResult(best_t, best_id, t_max)


def visibility(forest: Forest, x, v, eps: float, t_max: float) -> VisibilityResult:
    return visibility_query(forest.index, x, v, eps, t_max)


# ---------------------------------------------------------------------------
# Surveys
# ---------------------------------------------------------------------------

@dataclass
class SurveyReport:
    """Monte Carlo visibility statistics at one scale.

    For d >= 3 the certified tube radius is the box corner distance, so
    queries run at eps_query = eps * sqrt(d - 1) while the bound stays
    V(eps); in the plane eps_query == eps.  A sample violates when no touch
    occurs by min(V_eps, t_max).
    """

    eps: float
    eps_query: float
    n: int
    t_max: float
    max_t: float
    p50: float
    p90: float
    p99: float
    violations: int
    V_eps: float
    times: np.ndarray | None = None  # per-sample touch times, not serialized

    CSV_HEADER = "eps,n,max_t,p50,p90,p99,violations,V_eps"

    def to_json_line(self) -> str:
        payload = {
            "eps": self.eps,
            "eps_query": self.eps_query,
            "n": self.n,
            "t_max": self.t_max,
            "max_t": self.max_t,
            "p50": self.p50,
            "p90": self.p90,
            "p99": self.p99,
            "violations": self.violations,
            "V_eps": self.V_eps,
        }
        return json.dumps(payload, sort_keys=True)

    def to_csv_row(self) -> str:
        cols = (self.eps, self.n, self.max_t, self.p50, self.p90, self.p99,
                self.violations, self.V_eps)
        return ",".join(repr(c) if isinstance(c, float) else str(c) for c in cols)


def visibility_bound(forest: Forest, eps: float) -> float:
    """V(eps) = eps^-(d-1) E(1/eps) under the forest's error term."""
    d = forest.window.d
    return eps ** -(d - 1) * forest.config.error_term(1.0 / eps)


def survey(forest: Forest, eps: float, n: int, seed: Seed) -> SurveyReport:
    """n independent uniform (x, v) queries with horizon min(L, 2 V(eps))."""
    if n < 1:
        raise ConfigError(f"sample count must be >= 1, got {n}")
    cfg = forest.config
    if cfg.k_max >= cfg.k_min:
        lo = 2.0**-cfg.k_max
        hi = 2.0**-cfg.k_min
        if not lo - 1e-12 <= eps <= hi + 1e-12:
            raise ConfigError(
                f"eps = {eps} outside the built range [{lo}, {hi}]"
            )
    d = forest.window.d
    V = visibility_bound(forest, eps)
    t_max = min(forest.window.side, 2 * V)
    eps_query = eps * math.sqrt(d - 1) if d >= 3 else eps

    xs = uniform_points(forest.window, n, seed.substream(0))
    vs = uniform_direction(d, seed.substream(1), n)
    times = np.empty(n)
    for i in range(n):
        res = visibility(forest, xs[i], vs[i], eps_query, t_max)
        times[i] = math.inf if res.beyond_horizon else res.t

    bound = min(V, t_max)
    violations = int(np.count_nonzero(times > bound))
    clipped = np.minimum(times, t_max)
    return SurveyReport(
        eps=eps,
        eps_query=eps_query,
        n=n,
        t_max=t_max,
        max_t=float(clipped.max()),
        p50=float(np.quantile(clipped, 0.5)),
        p90=float(np.quantile(clipped, 0.9)),
        p99=float(np.quantile(clipped, 0.99)),
        violations=violations,
        V_eps=V,
        times=times,
    )


# ---------------------------------------------------------------------------
# Exhaustive certification
# ---------------------------------------------------------------------------

def certify(forest: Forest, k: int) -> bool:
    """True iff a full rescan finds no empty family member at scale k.

    Deterministic and exhaustive: a sound interval scan proves most copies
    occupied, and every copy it cannot prove is settled by the exact
    closed-box predicate.  Together with the covering property this bounds
    the visibility at scale eps_k for the whole window.
    """
    cfg = forest.config
    if k not in cfg.scales():
        raise ConfigError(f"scale k = {k} was not built (range {cfg.k_min}..{cfg.k_max})")
    params = scale_params(forest.window.d, k, cfg.error_term)
    if forest.window.d != 2:
        return _certify_reference(forest, params)
    for cube, _grid, covered in coverage.iter_scale_coverage(
        forest.points, params, forest.window, slack=coverage.CERTIFY_SLACK
    ):
        holes = np.argwhere(~covered)
        n = params.grid_points_per_side
        for flat_g, j in holes:
            grid = (int(flat_g) // n, int(flat_g) % n)
            box = make_test_box(TestBoxId(cube, grid, (int(j),)), params)
            if not query_box_nonempty(forest.index, box):
                return False
    return True


def _certify_reference(forest: Forest, params) -> bool:
    from .testboxes import enumerate_test_boxes

    for cube in forest.window.cubes():
        for _box_id, box in enumerate_test_boxes(cube, params, forest.window):
            if not query_box_nonempty(forest.index, box):
                return False
    return True
