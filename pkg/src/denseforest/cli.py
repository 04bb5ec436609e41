"""Command-line surface for reproducible experiments.

Subcommands: build, verify-lemma, verify-build, survey, export-svg.  Every
randomized command is driven by an explicit integer seed; reruns with the
same configuration produce byte-identical artifacts.  Exit codes: 0 success,
1 verification failure, 2 configuration error.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .forest import (
    BuildConfig,
    build,
    expected_added,
    load_forest,
    save_forest,
)
from .geometry import Window, rotation_frame_2d
from .sampling import Seed, uniform_direction, uniform_points
from .testboxes import (
    ErrorTerm,
    angle_margin_check,
    find_contained_test_box,
    large_box,
    scale_params,
)
from .visibility import certify, survey, visibility


@dataclass
class RunConfig:
    """Flat build configuration; file values are overridden by CLI flags."""

    d: int = 2
    L: int = 4
    lam: float = 161.0
    k_min: int = 2
    k_max: int = 3
    error_term: str = "log"
    seed: int = 1
    stream: int = 0
    point_cap: int = 10**8
    out: str = "out"

    _FILE_KEYS = {
        "d": int, "L": int, "lambda": float, "k_min": int, "k_max": int,
        "error_term": str, "seed": int, "stream": int, "point_cap": int,
        "out": str,
    }

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        cfg = cls()
        for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, _, value = line.partition("=")
            key, value = key.strip(), value.strip()
            if key not in cls._FILE_KEYS:
                raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
            attr = "lam" if key == "lambda" else key
            try:
                setattr(cfg, attr, cls._FILE_KEYS[key](value))
            except ValueError as exc:
                raise ConfigError(f"{path}:{lineno}: bad value for {key}: {exc}")
        return cfg

    def apply_flags(self, args: argparse.Namespace):
        for flag, attr in (
            ("d", "d"), ("L", "L"), ("lam", "lam"), ("k_min", "k_min"),
            ("k_max", "k_max"), ("error_term", "error_term"), ("seed", "seed"),
            ("stream", "stream"), ("point_cap", "point_cap"), ("out", "out"),
        ):
            value = getattr(args, flag, None)
            if value is not None:
                setattr(self, attr, value)

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            key = "lambda" if f.name == "lam" else f.name
            value = getattr(self, f.name)
            lines.append(f"{key}={value!r}" if isinstance(value, float)
                         else f"{key}={value}")
        return "\n".join(lines) + "\n"

    def build_config(self) -> BuildConfig:
        if self.error_term != "log":
            raise ConfigError(f"unsupported error term {self.error_term!r} in CLI")
        return BuildConfig(
            window=Window(d=self.d, L=self.L),
            lam=self.lam,
            k_min=self.k_min,
            k_max=self.k_max,
            error_term=ErrorTerm(),
            seed=Seed(self.seed, self.stream),
            point_cap=self.point_cap,
        )


def _write_json(path: Path, payload, single_line=False):
    if single_line:
        text = json.dumps(payload, sort_keys=True) + "\n"
    else:
        text = json.dumps(payload, sort_keys=True, indent=2) + "\n"
    path.write_text(text)


def _float(x):
    return float(x) if x is not None else None


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_build(args) -> int:
    cfg = RunConfig.from_file(args.config) if args.config else RunConfig()
    cfg.apply_flags(args)
    build_cfg = cfg.build_config()
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)

    forest, report = build(build_cfg, log=sys.stderr)
    save_forest(forest, out / "forest.txt")
    (out / "config.txt").write_text(cfg.to_text())

    scale_rows = []
    for s in report.scales:
        scale_rows.append({
            "k": s.k,
            "eps": s.eps,
            "added": s.added,
            "expected_added_per_cube": s.expected_added_per_cube,
            "expected_added_window": s.expected_added_per_cube * forest.window.volume(),
            "empty_vs_poisson": s.empty_vs_poisson,
            "scaled_empty_estimate": _float(report.scaled_empty_estimate(s.k)),
            "nominal_cardinality_per_cube": s.nominal_cardinality,
            "enumerated_count_window": s.enumerated_count,
        })
        print(f"scale k={s.k}: added {s.added} "
              f"(analytic expectation {scale_rows[-1]['expected_added_window']:.2f} "
              f"per window) in {s.wall_time_s:.2f}s", file=sys.stderr)
    payload = {
        "d": cfg.d,
        "L": cfg.L,
        "lambda": cfg.lam,
        "seed": [cfg.seed, cfg.stream],
        "k_min": cfg.k_min,
        "k_max": cfg.k_max,
        "error_term": cfg.error_term,
        "poisson_count": report.poisson_count,
        "total_points": report.total_points,
        "scales": scale_rows,
    }
    _write_json(out / "build_report.json", payload)

    header = ("k,eps,added,expected_added_window,empty_vs_poisson,"
              "scaled_empty_estimate,enumerated_count_window")
    rows = [header]
    for r in scale_rows:
        rows.append(",".join(str(r[c]) for c in (
            "k", "eps", "added", "expected_added_window", "empty_vs_poisson",
            "scaled_empty_estimate", "enumerated_count_window")))
    (out / "build_scales.csv").write_text("\n".join(rows) + "\n")

    if not args.no_figure:
        from .figures import render_build_figure

        render_build_figure(forest, report, out / "build_report.png")
    print(f"wrote {out / 'forest.txt'} ({report.total_points} points)")
    return 0


def cmd_verify_lemma(args) -> int:
    if args.d not in (2, 3):
        raise ConfigError(f"lemma verification supports d = 2 or 3, got {args.d}")
    params = scale_params(args.d, args.k)
    if args.theta_scale != 1.0:
        theta = params.theta * args.theta_scale
        params = scale_params(args.d, args.k).__class__(
            **{**params.__dict__, "theta": theta,
               "rotations_per_axis": math.floor(math.pi / theta) + 1}
        )
    # Window chosen so the large boxes fit without wrap ambiguity.
    half_long = params.visibility_target / 2
    L = int(math.ceil(2 * math.hypot(half_long, params.eps * math.sqrt(args.d - 1)))) + 1
    w = Window(d=args.d, L=L)

    seed = Seed(args.seed)
    rng = seed.generator()
    base_cube = np.full(args.d, L // 2, dtype=float)
    failures = 0
    for _ in range(args.samples):
        center = base_cube + rng.random(args.d)
        if args.d == 2:
            frame = rotation_frame_2d(rng.uniform(0.0, math.pi))
        else:
            q, r = np.linalg.qr(rng.standard_normal((3, 3)))
            q *= np.sign(np.diag(r))
            frame = q
        big = large_box(params, center, frame)
        if find_contained_test_box(big, params, w) is None:
            failures += 1

    phi_lower, ok = angle_margin_check(params)
    payload = {
        "d": args.d,
        "k": args.k,
        "samples": args.samples,
        "failures": failures,
        "theta": params.theta,
        "theta_scale": args.theta_scale,
        "angle_margin_lower": phi_lower,
        "angle_margin_ok": ok,
    }
    text = json.dumps(payload, sort_keys=True, indent=2)
    print(text)
    if args.out:
        Path(args.out).write_text(text + "\n")
    return 0 if failures == 0 and ok else 1


def cmd_verify_build(args) -> int:
    forest = load_forest(args.forest)
    results = {}
    ok = True
    for k in forest.built_scales():
        good = certify(forest, k)
        results[str(k)] = good
        ok &= good
        print(f"scale k={k}: {'no empty test boxes' if good else 'EMPTY BOX FOUND'}")
    if args.out:
        _write_json(Path(args.out), results)
    return 0 if ok else 1


def cmd_survey(args) -> int:
    forest = load_forest(args.forest)
    report = survey(forest, args.eps, args.n, Seed(args.seed))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "survey_report.json").write_text(report.to_json_line() + "\n")
    (out / "survey.csv").write_text(
        report.CSV_HEADER + "\n" + report.to_csv_row() + "\n"
    )
    if not args.no_figure:
        from .figures import render_survey_figure

        render_survey_figure(report, out / "survey_report.png")
    print(report.to_json_line())
    return 0


def cmd_export_svg(args) -> int:
    forest = load_forest(args.forest)
    if forest.window.d != 2:
        raise ConfigError("SVG export is planar only (d = 2)")
    from .figures import forest_svg
    from .visibility import visibility_bound

    ray = None
    if args.ray:
        try:
            x0, y0, angle = (float(v) for v in args.ray.split(","))
        except ValueError:
            raise ConfigError("--ray expects 'x,y,angle'")
        v = np.array([math.cos(angle), math.sin(angle)])
        t_max = min(forest.window.side,
                    2 * visibility_bound(forest, args.eps))
        res = visibility(forest, np.array([x0, y0]), v, args.eps, t_max)
        t = res.t if not res.beyond_horizon else t_max
        ray = (np.array([x0, y0]), v, t)
    Path(args.out).write_text(forest_svg(forest, args.eps, ray=ray))
    print(f"wrote {args.out}")
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def make_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="denseforest",
        description="Build and verify dense forests on a periodic window.",
    )
    sub = p.add_subparsers(dest="command", required=True)

    b = sub.add_parser("build", help="sample, fill gaps, and write the forest")
    b.add_argument("--config", help="key=value config file")
    b.add_argument("--d", type=int)
    b.add_argument("--L", type=int)
    b.add_argument("--lambda", dest="lam", type=float)
    b.add_argument("--k-min", dest="k_min", type=int)
    b.add_argument("--k-max", dest="k_max", type=int)
    b.add_argument("--error-term", dest="error_term")
    b.add_argument("--seed", type=int)
    b.add_argument("--stream", type=int)
    b.add_argument("--point-cap", dest="point_cap", type=int)
    b.add_argument("--out")
    b.add_argument("--no-figure", action="store_true")
    b.set_defaults(func=cmd_build)

    vl = sub.add_parser("verify-lemma", help="Monte Carlo check of the covering family")
    vl.add_argument("--d", type=int, default=2)
    vl.add_argument("--k", type=int, default=2)
    vl.add_argument("--samples", type=int, default=10000)
    vl.add_argument("--seed", type=int, default=1)
    vl.add_argument("--theta-scale", dest="theta_scale", type=float, default=1.0,
                    help="coarsen the rotation step (negative control)")
    vl.add_argument("--out")
    vl.set_defaults(func=cmd_verify_lemma)

    vb = sub.add_parser("verify-build", help="rescan every built scale for empty boxes")
    vb.add_argument("forest")
    vb.add_argument("--out")
    vb.set_defaults(func=cmd_verify_build)

    sv = sub.add_parser("survey", help="Monte Carlo visibility statistics")
    sv.add_argument("forest")
    sv.add_argument("--eps", type=float, required=True)
    sv.add_argument("--n", type=int, default=10000)
    sv.add_argument("--seed", type=int, default=1)
    sv.add_argument("--out", default="out")
    sv.add_argument("--no-figure", action="store_true")
    sv.set_defaults(func=cmd_survey)

    ex = sub.add_parser("export-svg", help="draw a planar forest as SVG")
    ex.add_argument("forest")
    ex.add_argument("--eps", type=float, required=True)
    ex.add_argument("--out", required=True)
    ex.add_argument("--ray", help="'x,y,angle': draw one sight line with its tube")
    ex.set_defaults(func=cmd_export_svg)
    return p


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (OSError, OverflowError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
