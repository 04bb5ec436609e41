"""The dense-forest construction and its accounting.

Build recipe: sample a Poisson process on the window, then sweep the scales
k = k_min..k_max coarse to fine.  At each scale, walk the test-box family in
deterministic order and drop a point at the centre of every box that holds
no forest point at the moment it is examined (points added earlier in the
same sweep count).  After the sweep no family member at any built scale is
empty, which bounds the visibility at those scales.
"""

from __future__ import annotations

import math
import sys
import time
from dataclasses import dataclass, field

import numpy as np

from . import coverage
from .errors import ConfigError, PointBudgetError, WindowTooSmallError
from .geometry import Window, torus_delta, torus_dist
from .sampling import PoissonConfig, Seed, sample_poisson
from .spatial_index import GridIndex, index_build, query_ball, query_box_nonempty
from .testboxes import (
    ErrorTerm,
    ScaleParams,
    count_test_boxes,
    enumerate_test_boxes,
    scale_params,
    sqrt_d_constant,
)

POISSON_PROVENANCE = 0


@dataclass(frozen=True)
class BuildConfig:
    window: Window
    lam: float
    k_max: int
    k_min: int = 2
    error_term: ErrorTerm = ErrorTerm()
    seed: Seed = Seed(1)
    point_cap: int = 10**8

    def __post_init__(self):
        if self.lam < 0:
            raise ConfigError(f"intensity must be nonnegative, got {self.lam}")
        if self.k_min < 2:
            raise ConfigError(f"k_min must be >= 2, got {self.k_min}")
        for k in self.scales():
            p = scale_params(self.window.d, k, self.error_term)
            if p.circumradius > self.window.side / 2:
                raise WindowTooSmallError(
                    f"window L = {self.window.L} too small for scale k = {k} "
                    f"(test-box circumradius {p.circumradius:.4g} > L/2)"
                )

    def scales(self) -> range:
        return range(self.k_min, self.k_max + 1)


def default_cell_count(window: Window, k_max: int | None) -> int:
    """Index cells per side: cell size max(eps_K, L/256), exact divisor of L."""
    if k_max is None:
        return min(max(window.L, 1), 256)
    return min(window.L * 2**k_max, 256)


@dataclass
class Forest:
    """The point set with provenance tags and its spatial index."""

    window: Window
    points: np.ndarray
    provenance: np.ndarray  # 0 = Poisson, k = added at scale k
    config: BuildConfig
    index: GridIndex = field(repr=False, default=None)

    @classmethod
    def from_points(cls, points, provenance, config: BuildConfig) -> "Forest":
        points = np.asarray(points, dtype=float).reshape(-1, config.window.d)
        provenance = np.asarray(provenance, dtype=np.int32)
        if len(points) != len(provenance):
            raise ConfigError("points and provenance lengths differ")
        k_max = config.k_max if config.k_max >= config.k_min else None
        n_cells = default_cell_count(config.window, k_max)
        idx = index_build(points, config.window.side / n_cells, config.window)
        return cls(config.window, points, provenance, config, idx)

    @property
    def n_points(self) -> int:
        return len(self.points)

    def added_mask(self, k: int | None = None) -> np.ndarray:
        if k is None:
            return self.provenance != POISSON_PROVENANCE
        return self.provenance == k

    def built_scales(self) -> range:
        return self.config.scales()


@dataclass
class ScaleStats:
    k: int
    eps: float
    added: int
    expected_added_per_cube: float
    empty_vs_poisson: int | None
    nominal_cardinality: float
    enumerated_count: int
    wall_time_s: float = 0.0  # kept in memory only; excluded from artifacts


@dataclass
class BuildReport:
    poisson_count: int
    total_points: int
    scales: list[ScaleStats]

    def scaled_empty_estimate(self, k: int) -> float | None:
        """Empty count rescaled to the nominal family size.

        The integer grid/rotation conventions enumerate slightly more boxes
        than the nominal cardinality; each is empty with the same
        probability, so empty * nominal / enumerated is the unbiased
        estimate of the nominal-family expectation L^d * N_k.
        """
        for s in self.scales:
            if s.k == k and s.empty_vs_poisson is not None:
                return s.empty_vs_poisson * s.nominal_cardinality / s.enumerated_count
        return None


def expected_added(d: int, k: int, lam: float, error_term: ErrorTerm = ErrorTerm()) -> float:
    """Expected number of empty family members per unit cube against the raw
    Poisson process: nominal cardinality times exp(-lam E(2^k) / (4 sqrt d)^d).

    This is an upper bound on the expectation of points actually added,
    since the sequential sweep re-checks against its own earlier additions.
    """
    params = scale_params(d, k, error_term)
    exponent = lam * error_term(2.0**k) / sqrt_d_constant(d)
    return params.nominal_cardinality * math.exp(-exponent)


@dataclass(frozen=True)
class ConvergenceInfo:
    threshold: float
    converges: bool
    growth_exponent: int       # d^2 + d - 1, from the per-scale family size
    loose_exponent: int        # 2 (d+1)^2, the coarser sufficient bound


def convergence_check(d: int, lam: float) -> ConvergenceInfo:
    """Whether the total expected additions over all scales is finite (E = ln).

    The k-th term is 2^(k [(d^2+d-1) - lam/(4 sqrt d)^d]), so the sum is a
    geometric series converging exactly when lam exceeds
    (d^2+d-1) (4 sqrt d)^d.
    """
    if d < 2:
        raise ConfigError(f"dimension must be >= 2, got {d}")
    growth = d * d + d - 1
    threshold = growth * sqrt_d_constant(d)
    return ConvergenceInfo(
        threshold=threshold,
        converges=bool(lam > threshold),
        growth_exponent=growth,
        loose_exponent=2 * (d + 1) ** 2,
    )


def density(forest: Forest, T: float, center) -> float:
    """Point count in the torus ball B(center, T) divided by T^d."""
    if not 0 < T <= forest.window.side / 2:
        raise ConfigError(f"radius T = {T} outside (0, L/2]")
    ids = query_ball(forest.index, np.asarray(center, dtype=float), T)
    return len(ids) / T**forest.window.d


# ---------------------------------------------------------------------------
# Build engines
# ---------------------------------------------------------------------------

def _build_scale_fast(points: np.ndarray, params: ScaleParams, w: Window):
    """One sweep of the d = 2 vectorized engine; returns centres added.

    Phase A scans coverage against the points present at sweep start; only
    grid points with some uncovered rotation can receive a centre.  Phase B
    replays those candidates in enumeration order against the centres added
    so far, which reproduces the sequential per-box semantics exactly: all
    copies at a grid point share its centre, so the first empty copy decides
    the addition and every later copy there is filled by it.
    """
    candidates = []  # (grid point, uncovered bitmap) in enumeration order
    for _cube, grid_pts, covered in coverage.iter_scale_coverage(
        points, params, w, slack=coverage.BUILD_SLACK
    ):
        rows = np.nonzero(~covered.all(axis=1))[0]
        for r in rows:
            candidates.append((grid_pts[r], ~covered[r]))

    added: list[np.ndarray] = []
    reach = params.circumradius * (1 + 1e-9) + 1e-12
    for grid_pt, uncov in candidates:
        if added:
            arr = np.asarray(added)
            near = arr[torus_dist(grid_pt, arr, w) <= reach]
            if len(near):
                bm = coverage.coverage_bitmap_single(
                    grid_pt, near, params, w, coverage.BUILD_SLACK
                )
                uncov = uncov & ~bm
        if uncov.any():
            added.append(grid_pt)
    return added


def _build_scale_reference(index: GridIndex, params: ScaleParams, w: Window):
    """Literal per-box sweep (any dimension): probe, and fill when empty."""
    added = []
    for cube in w.cubes():
        for _box_id, box in enumerate_test_boxes(cube, params, w):
            if not query_box_nonempty(index, box):
                index.insert(box.center)
                added.append(box.center)
    return added


def build(cfg: BuildConfig, engine: str = "auto",
          count_poisson_empty: bool = True, log=None):
    """Run the construction; returns (Forest, BuildReport).

    engine "fast" uses the planar interval scan, "reference" the literal
    per-box sweep; "auto" picks fast for d = 2.  Both produce a forest whose
    every built-scale family member holds a point.
    """
    if engine not in ("auto", "fast", "reference"):
        raise ConfigError(f"unknown engine {engine!r}")
    if engine == "auto":
        engine = "fast" if cfg.window.d == 2 else "reference"
    if engine == "fast" and cfg.window.d != 2:
        raise ConfigError("the fast engine is planar; use engine='reference'")

    info = convergence_check(cfg.window.d, cfg.lam)
    if not info.converges and cfg.k_max >= cfg.k_min and log is not None:
        print(
            f"warning: lambda = {cfg.lam} is at or below the convergence "
            f"threshold {info.threshold:g}; additions grow with k_max",
            file=log,
        )

    poisson = sample_poisson(PoissonConfig(cfg.lam, cfg.window), cfg.seed)
    points = poisson.copy()
    provenance = [POISSON_PROVENANCE] * len(points)
    stats: list[ScaleStats] = []

    ref_index = None
    if engine == "reference":
        n_cells = default_cell_count(cfg.window, cfg.k_max if cfg.k_max >= cfg.k_min else None)
        ref_index = index_build(points, cfg.window.side / n_cells, cfg.window)

    for k in cfg.scales():
        params = scale_params(cfg.window.d, k, cfg.error_term)
        t0 = time.perf_counter()
        empty_poisson = None
        if count_poisson_empty and cfg.window.d == 2:
            empty_poisson = coverage.count_empty_boxes(poisson, params, cfg.window)
        if engine == "fast":
            added = _build_scale_fast(points, params, cfg.window)
        else:
            added = _build_scale_reference(ref_index, params, cfg.window)
        if added:
            points = np.vstack([points, np.asarray(added)])
            provenance.extend([k] * len(added))
        if len(points) > cfg.point_cap:
            raise PointBudgetError(
                f"{len(points)} points exceed the configured cap {cfg.point_cap}"
            )
        stats.append(
            ScaleStats(
                k=k,
                eps=params.eps,
                added=len(added),
                expected_added_per_cube=expected_added(
                    cfg.window.d, k, cfg.lam, cfg.error_term
                ),
                empty_vs_poisson=empty_poisson,
                nominal_cardinality=params.nominal_cardinality,
                enumerated_count=count_test_boxes(params) * cfg.window.L**cfg.window.d,
                wall_time_s=time.perf_counter() - t0,
            )
        )

    forest = Forest.from_points(np.asarray(points).reshape(-1, cfg.window.d),
                                np.asarray(provenance, dtype=np.int32), cfg)
    report = BuildReport(
        poisson_count=len(poisson), total_points=forest.n_points, scales=stats
    )
    return forest, report


# ---------------------------------------------------------------------------
# Serialization (round-trips bit-exactly; floats written as shortest repr)
# ---------------------------------------------------------------------------

FORMAT_TAG = "denseforest-v1"


def _provenance_token(p: int) -> str:
    return "poisson" if p == POISSON_PROVENANCE else f"added@{p}"


def _parse_provenance(tok: str) -> int:
    if tok == "poisson":
        return POISSON_PROVENANCE
    if tok.startswith("added@"):
        return int(tok.split("@", 1)[1])
    raise ConfigError(f"bad provenance token {tok!r}")


def forest_to_text(forest: Forest) -> str:
    cfg = forest.config
    lines = [
        FORMAT_TAG,
        f"d {cfg.window.d}",
        f"L {cfg.window.L}",
        f"lambda {cfg.lam!r}",
        f"seed {cfg.seed.value} {cfg.seed.stream}",
        f"k_min {cfg.k_min}",
        f"k_max {cfg.k_max}",
        f"error_term {cfg.error_term.label()}",
        f"point_cap {cfg.point_cap}",
        f"points {forest.n_points}",
    ]
    for p, row in zip(forest.provenance, forest.points):
        coords = " ".join(repr(float(x)) for x in row)
        lines.append(f"{_provenance_token(int(p))} {coords}")
    return "\n".join(lines) + "\n"


def save_forest(forest: Forest, path):
    with open(path, "w", encoding="ascii") as f:
        f.write(forest_to_text(forest))


def _parse_error_term(label: str) -> ErrorTerm:
    if label == "log":
        return ErrorTerm()
    if label.startswith("table "):
        pairs = [item.split(":") for item in label[6:].split(",")]
        xs = tuple(float(x) for x, _ in pairs)
        ys = tuple(float(y) for _, y in pairs)
        return ErrorTerm(kind="table", xs=xs, ys=ys)
    raise ConfigError(f"bad error term label {label!r}")


def load_forest(path) -> Forest:
    with open(path, "r", encoding="ascii") as f:
        lines = f.read().splitlines()
    if not lines or lines[0] != FORMAT_TAG:
        raise ConfigError(f"not a {FORMAT_TAG} file: {path}")
    header = {}
    body_start = None
    for i, line in enumerate(lines[1:], start=1):
        key, _, rest = line.partition(" ")
        header[key] = rest
        if key == "points":
            body_start = i + 1
            break
    if body_start is None:
        raise ConfigError("missing points header")
    window = Window(d=int(header["d"]), L=int(header["L"]))
    sv, ss = header["seed"].split()
    cfg = BuildConfig(
        window=window,
        lam=float(header["lambda"]),
        k_min=int(header["k_min"]),
        k_max=int(header["k_max"]),
        error_term=_parse_error_term(header["error_term"]),
        seed=Seed(int(sv), int(ss)),
        point_cap=int(header.get("point_cap", 10**8)),
    )
    n = int(header["points"])
    rows = lines[body_start:body_start + n]
    if len(rows) != n:
        raise ConfigError(f"expected {n} point rows, found {len(rows)}")
    pts = np.empty((n, window.d))
    prov = np.empty(n, dtype=np.int32)
    for i, row in enumerate(rows):
        toks = row.split()
        prov[i] = _parse_provenance(toks[0])
        pts[i] = [float(t) for t in toks[1:]]
    return Forest.from_points(pts, prov, cfg)
