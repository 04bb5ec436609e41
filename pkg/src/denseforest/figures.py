"""Figure rendering for reports, plus the SVG forest exporter.

Report figures go through matplotlib (Agg backend) and are written next to
the delimited outputs.  The standalone SVG export is emitted directly so its
bytes depend only on the forest contents.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .errors import ConfigError
from .forest import Forest, BuildReport, POISSON_PROVENANCE
from .visibility import SurveyReport, visibility_bound

_ADDED_COLORS = ("#d62728", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2")


def _scale_color(i: int) -> str:
    return _ADDED_COLORS[i % len(_ADDED_COLORS)]


def render_build_figure(forest: Forest, report: BuildReport, path):
    """Scatter of the forest by provenance plus the per-scale accounting bars."""
    fig, (ax0, ax1) = plt.subplots(1, 2, figsize=(11, 5))
    pts = forest.points
    mask0 = forest.provenance == POISSON_PROVENANCE
    ax0.scatter(pts[mask0, 0], pts[mask0, 1], s=3, c="#7f7f7f",
                label=f"poisson ({int(mask0.sum())})")
    for i, s in enumerate(report.scales):
        mk = forest.provenance == s.k
        ax0.scatter(pts[mk, 0], pts[mk, 1], s=8, c=_scale_color(i),
                    label=f"added k={s.k} ({int(mk.sum())})")
    L = forest.window.L
    ax0.set_xlim(0, L)
    ax0.set_ylim(0, L)
    ax0.set_aspect("equal")
    ax0.set_title("forest points")
    ax0.legend(loc="upper right", fontsize=8)

    if report.scales:
        ks = [s.k for s in report.scales]
        added = [s.added for s in report.scales]
        expect = [s.expected_added_per_cube * forest.window.volume()
                  for s in report.scales]
        x = np.arange(len(ks))
        ax1.bar(x - 0.2, added, width=0.4, label="added")
        ax1.bar(x + 0.2, expect, width=0.4, label="expected empty (analytic)")
        ax1.set_xticks(x, [f"k={k}" for k in ks])
        ax1.set_ylabel("points per window")
        ax1.legend()
    ax1.set_title("per-scale additions")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def render_survey_figure(report: SurveyReport, path):
    """Histogram of touch times against the bound and the horizon."""
    fig, ax = plt.subplots(figsize=(7, 4.5))
    times = report.times
    if times is not None and len(times):
        clipped = np.minimum(times, report.t_max)
        ax.hist(clipped, bins=60, color="#1f77b4")
    ax.axvline(min(report.V_eps, report.t_max), color="#d62728",
               label=f"bound min(V, t_max) = {min(report.V_eps, report.t_max):.4g}")
    ax.axvline(report.t_max, color="#7f7f7f", linestyle="--",
               label=f"horizon t_max = {report.t_max:.4g}")
    ax.set_xlabel("touch time t")
    ax.set_ylabel("samples")
    ax.set_title(f"visibility survey, eps = {report.eps:g}, "
                 f"violations = {report.violations}")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


# ---------------------------------------------------------------------------
# Deterministic SVG export (planar forests only)
# ---------------------------------------------------------------------------

_SVG_SCALE = 160  # pixels per window unit


def forest_svg(forest: Forest, eps: float, ray=None) -> str:
    """SVG 1.1 document: one circle per point, optional sight line with tube.

    Points are colored by provenance and the legend carries per-scale counts.
    Output bytes are a pure function of the inputs.
    """
    if forest.window.d != 2:
        raise ConfigError("SVG export is planar only (d = 2)")
    L = forest.window.L
    size = L * _SVG_SCALE
    margin = 40

    def sx(x):
        return repr(float(margin + x * _SVG_SCALE))

    def sy(y):
        return repr(float(margin + (L - y) * _SVG_SCALE))

    lines = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" '
        f'width="{size + 2 * margin}" height="{size + 2 * margin}" '
        f'viewBox="0 0 {size + 2 * margin} {size + 2 * margin}">',
        f'<rect x="{margin}" y="{margin}" width="{size}" height="{size}" '
        f'fill="white" stroke="black" stroke-width="1"/>',
    ]

    if ray is not None:
        x0, v, t = ray
        x1 = x0 + t * v
        tube = repr(float(eps * _SVG_SCALE))
        lines.append(
            f'<line x1="{sx(x0[0])}" y1="{sy(x0[1])}" x2="{sx(x1[0])}" '
            f'y2="{sy(x1[1])}" stroke="#2ca02c" stroke-width="{tube}" '
            f'stroke-opacity="0.25"/>'
        )
        lines.append(
            f'<line x1="{sx(x0[0])}" y1="{sy(x0[1])}" x2="{sx(x1[0])}" '
            f'y2="{sy(x1[1])}" stroke="#2ca02c" stroke-width="1.5"/>'
        )

    scales = sorted(k for k in set(int(q) for q in forest.provenance) if k)
    counts: dict[int, int] = {}
    for p, row in zip(forest.provenance, forest.points):
        p = int(p)
        counts[p] = counts.get(p, 0) + 1
        if p == POISSON_PROVENANCE:
            color, r = "#555555", 2.0
        else:
            color, r = _scale_color(scales.index(p)), 3.0
        lines.append(
            f'<circle cx="{sx(row[0])}" cy="{sy(row[1])}" r="{r}" fill="{color}"/>'
        )

    legend_y = 16
    entries = [("poisson", counts.get(POISSON_PROVENANCE, 0), "#555555")]
    for i, k in enumerate(sorted(k for k in counts if k != POISSON_PROVENANCE)):
        entries.append((f"added k={k}", counts[k], _scale_color(i)))
    for label, count, color in entries:
        lines.append(
            f'<text x="{margin}" y="{legend_y}" font-family="monospace" '
            f'font-size="12" fill="{color}">{label}: {count}</text>'
        )
        legend_y += 14
    lines.append("</svg>")
    return "\n".join(lines) + "\n"
