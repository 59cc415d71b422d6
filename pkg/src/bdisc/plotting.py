"""Deterministic SVG figures: t-SNE scatter panels, trial-pair grids, and
confusion-matrix heatmaps.

Everything is plain string assembly with fixed float formatting and fixed
element order, so identical inputs produce byte-identical documents. The
qualitative palette has 10 colors indexed by class/cluster id modulo 10.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from bdisc.errors import ValidationError

PALETTE = (
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
)


@dataclass
class PlotSpec:
    panel_size: int = 300
    margin: int = 46
    gap: int = 24
    point_radius: float = 2.0
    axis_label: str = "t-SNE coordinates, arbitrary units"
    palette: tuple = PALETTE
    title: str = ""

    def color(self, index: int) -> str:
        return self.palette[int(index) % len(self.palette)]


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def _bounds(coords_list):
    allc = np.vstack(coords_list)
    lo = allc.min(axis=0)
    hi = allc.max(axis=0)
    span = np.maximum(hi - lo, 1e-12)
    pad = 0.04 * span
    return lo - pad, hi + pad


def _scale(coords, lo, hi, x0, y0, size):
    span = hi - lo
    sx = x0 + (coords[:, 0] - lo[0]) / span[0] * size
    sy = y0 + size - (coords[:, 1] - lo[1]) / span[1] * size
    return sx, sy


def _panel(parts, x0, y0, size, coords, colors, subtitle, spec, lo, hi):
    parts.append(
        f'<rect x="{x0}" y="{y0}" width="{size}" height="{size}" '
        f'fill="white" stroke="#444444" stroke-width="1"/>'
    )
    parts.append(
        f'<text x="{x0 + size / 2:.1f}" y="{y0 - 6}" text-anchor="middle" '
        f'font-size="12" font-family="sans-serif">{subtitle}</text>'
    )
    sx, sy = _scale(coords, lo, hi, x0, y0, size)
    parts.append('<g class="points">')
    for x, y, color in zip(sx, sy, colors):
        parts.append(f'<circle cx="{_fmt(x)}" cy="{_fmt(y)}" r="{spec.point_radius}" fill="{color}"/>')
    parts.append("</g>")
    parts.append(
        f'<text x="{x0 + size / 2:.1f}" y="{y0 + size + 14}" text-anchor="middle" '
        f'font-size="9" font-family="sans-serif" fill="#555555">{spec.axis_label}</text>'
    )


def _legend(parts, x0, y0, entries, spec):
    for i, (index, label) in enumerate(entries):
        y = y0 + i * 16
        parts.append(
            f'<rect x="{x0}" y="{y}" width="10" height="10" fill="{spec.color(index)}"/>'
        )
        parts.append(
            f'<text x="{x0 + 14}" y="{y + 9}" font-size="10" font-family="sans-serif">{label}</text>'
        )


def _document(width, height, parts):
    head = (
        '<svg xmlns="http://www.w3.org/2000/svg" version="1.1" '
        f'width="{width}" height="{height}" viewBox="0 0 {width} {height}">'
    )
    return head + "".join(parts) + "</svg>\n"


def scatter_panels(coords, truth, assignments, labeled_mask, cluster_display,
                   spec: PlotSpec | None = None, class_names=None) -> str:
    """Four-panel scatter: truth labels / all assignments / labeled-only
    assignments / unlabeled-only assignments.

    ``cluster_display`` maps cluster index -> display index used for color
    (known clusters display as their class index, free clusters as the next
    unused index). All inputs must be row-aligned.
    """
    spec = spec or PlotSpec()
    coords = np.asarray(coords, dtype=np.float64)
    truth = np.asarray(truth, dtype=int)
    assignments = np.asarray(assignments, dtype=int)
    labeled_mask = np.asarray(labeled_mask, dtype=bool)
    n = len(coords)
    if not (len(truth) == len(assignments) == len(labeled_mask) == n):
        raise ValidationError("scatter_panels inputs are not row-aligned")

    lo, hi = _bounds([coords])
    size = spec.panel_size
    assign_display = np.array([cluster_display[int(a)] for a in assignments])
    truth_colors = [spec.color(t) if t >= 0 else "#bbbbbb" for t in truth]
    assign_colors = [spec.color(a) for a in assign_display]

    panels = [
        ("truth labels", coords, truth_colors),
        ("assignments (all)", coords, assign_colors),
        ("assignments (labeled)", coords[labeled_mask],
         [c for c, m in zip(assign_colors, labeled_mask) if m]),
        ("assignments (unlabeled)", coords[~labeled_mask],
         [c for c, m in zip(assign_colors, labeled_mask) if not m]),
    ]

    legend_entries = []
    if class_names:
        legend_entries = sorted((int(i), f"{i}:{name}") for i, name in class_names.items())
    free_ids = sorted({int(d) for d in cluster_display.values()} - {e[0] for e in legend_entries})
    legend_entries += [(i, f"{i}:free") for i in free_ids]

    legend_w = 110 if legend_entries else 0
    width = spec.margin * 2 + size * 2 + spec.gap + legend_w
    height = spec.margin * 2 + size * 2 + spec.gap + 20

    parts = []
    if spec.title:
        parts.append(
            f'<text x="{width / 2:.1f}" y="18" text-anchor="middle" font-size="14" '
            f'font-family="sans-serif">{spec.title}</text>'
        )
    for i, (subtitle, pc, colors) in enumerate(panels):
        px = spec.margin + (i % 2) * (size + spec.gap)
        py = spec.margin + (i // 2) * (size + spec.gap + 20)
        _panel(parts, px, py, size, pc, colors, subtitle, spec, lo, hi)
    if legend_entries:
        _legend(parts, spec.margin + size * 2 + spec.gap + 12, spec.margin, legend_entries, spec)
    return _document(width, height, parts)


def pair_grid(entries, spec: PlotSpec | None = None, pairs_per_row: int = 3) -> str:
    """Grid of (truth, assignments) scatter pairs, one per trial.

    Each entry is a dict with keys ``coords, truth, assignments,
    cluster_display, border_class, label``; the pair border is colored by
    the trial's removed class.
    """
    spec = spec or PlotSpec(panel_size=170, margin=30, gap=14, point_radius=1.4)
    if not entries:
        raise ValidationError("pair_grid needs at least one entry")
    size = spec.panel_size
    pair_w = size * 2 + 8
    pair_h = size + 30
    rows = (len(entries) + pairs_per_row - 1) // pairs_per_row
    width = spec.margin * 2 + pairs_per_row * pair_w + (pairs_per_row - 1) * spec.gap
    height = spec.margin * 2 + rows * pair_h + (rows - 1) * spec.gap

    parts = []
    for i, entry in enumerate(entries):
        coords = np.asarray(entry["coords"], dtype=np.float64)
        truth = np.asarray(entry["truth"], dtype=int)
        assignments = np.asarray(entry["assignments"], dtype=int)
        if not (len(coords) == len(truth) == len(assignments)):
            raise ValidationError(f"pair_grid entry {i} is not row-aligned")
        display = entry["cluster_display"]
        border = spec.color(entry["border_class"])
        x0 = spec.margin + (i % pairs_per_row) * (pair_w + spec.gap)
        y0 = spec.margin + (i // pairs_per_row) * (pair_h + spec.gap)
        parts.append(
            f'<g class="pair"><rect x="{x0 - 4}" y="{y0 - 18}" width="{pair_w + 8}" '
            f'height="{pair_h + 14}" fill="none" stroke="{border}" stroke-width="3"/>'
        )
        parts.append(
            f'<text x="{x0 + pair_w / 2:.1f}" y="{y0 - 22}" text-anchor="middle" '
            f'font-size="11" font-family="sans-serif">{entry["label"]}</text>'
        )
        lo, hi = _bounds([coords])
        truth_colors = [spec.color(t) if t >= 0 else "#bbbbbb" for t in truth]
        assign_colors = [spec.color(display[int(a)]) for a in assignments]
        _panel(parts, x0, y0, size, coords, truth_colors, "truth", spec, lo, hi)
        _panel(parts, x0 + size + 8, y0, size, coords, assign_colors, "assignments", spec, lo, hi)
        parts.append("</g>")
    return _document(width, height, parts)


def confusion_heatmap(matrix, row_labels, col_labels, spec: PlotSpec | None = None) -> str:
    """Heatmap with per-cell shading proportional to count and the count
    printed in every cell."""
    spec = spec or PlotSpec()
    matrix = np.asarray(matrix)
    if matrix.size == 0:
        raise ValidationError("confusion heatmap needs a non-empty matrix")
    n_rows, n_cols = matrix.shape
    if len(row_labels) != n_rows or len(col_labels) != n_cols:
        raise ValidationError("heatmap labels do not match matrix shape")
    cell = 42
    left, top = 110, 54
    width = left + n_cols * cell + 20
    height = top + n_rows * cell + 20
    peak = matrix.max()

    parts = []
    if spec.title:
        parts.append(
            f'<text x="{width / 2:.1f}" y="18" text-anchor="middle" font-size="13" '
            f'font-family="sans-serif">{spec.title}</text>'
        )
    for j, label in enumerate(col_labels):
        parts.append(
            f'<text x="{left + j * cell + cell / 2:.1f}" y="{top - 8}" text-anchor="middle" '
            f'font-size="10" font-family="sans-serif">{label}</text>'
        )
    for i, label in enumerate(row_labels):
        parts.append(
            f'<text x="{left - 8}" y="{top + i * cell + cell / 2 + 4:.1f}" text-anchor="end" '
            f'font-size="10" font-family="sans-serif">{label}</text>'
        )
    for i in range(n_rows):
        for j in range(n_cols):
            value = int(matrix[i, j])
            frac = 0.0 if peak == 0 else value / peak
            # white -> dark blue ramp
            r = int(round(255 - frac * (255 - 8)))
            g = int(round(255 - frac * (255 - 81)))
            b = int(round(255 - frac * (255 - 156)))
            fill = f"#{r:02x}{g:02x}{b:02x}"
            text_color = "#000000" if frac < 0.55 else "#ffffff"
            x = left + j * cell
            y = top + i * cell
            parts.append(
                f'<rect x="{x}" y="{y}" width="{cell}" height="{cell}" fill="{fill}" '
                f'stroke="#cccccc" stroke-width="0.5"/>'
            )
            parts.append(
                f'<text x="{x + cell / 2:.1f}" y="{y + cell / 2 + 4:.1f}" text-anchor="middle" '
                f'font-size="11" font-family="sans-serif" fill="{text_color}">{value}</text>'
            )
    return _document(width, height, parts)
