"""Trial artifact emission: JSON reports, CSV tables, SVG figures.

All outputs are deterministic byte-for-byte for a fixed trial result: JSON
is dumped with sorted keys, floats use repr round-tripping, and SVGs come
from the deterministic builders in :mod:`bdisc.plotting`.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from bdisc.encoder import save_params
from bdisc.errors import ValidationError
from bdisc.plotting import PlotSpec, confusion_heatmap, pair_grid, scatter_panels
from bdisc.protocols import SuiteResult, TrialResult

SCHEMA_VERSION = 1


def _display_map(result: TrialResult) -> dict[int, int]:
    """Cluster index -> display index (class index, or next free id)."""
    display = {}
    free_base = max(result.class_names) + 1
    free_seen = 0
    for cluster in sorted(result.cluster_to_class):
        cls = result.cluster_to_class[cluster]
        if cls is None:
            display[cluster] = free_base + free_seen
            free_seen += 1
        else:
            display[cluster] = cls
    return display


def trial_report_dict(result: TrialResult) -> dict:
    display = _display_map(result)
    free_clusters = [c for c, cls in result.cluster_to_class.items() if cls is None]
    best_match = (
        result.report.row_for(min(free_clusters)).best_match_class if free_clusters else None
    )
    return {
        "schema_version": SCHEMA_VERSION,
        "kind": result.kind,
        "ind_name": result.ind_name,
        "removed_class": result.rem_class,
        "discovered_cluster": result.disc_class,
        "accuracy": result.acc,
        "containment_score": result.cnt_score,
        "best_match_class": best_match,
        "novel": result.novel,
        "alpha": result.report.alpha,
        "mc_samples": result.report.mc_samples,
        "novelty_threshold": result.report.novelty_threshold,
        "seed": result.seed,
        "k": result.k,
        "n_labeled": result.n_labeled,
        "n_unlabeled": result.n_unlabeled,
        "window_index": result.window_index,
        "short_window": result.short_window,
        "stage_config_hash": result.stage_config_hash,
        "cluster_to_class": {str(c): cls for c, cls in sorted(result.cluster_to_class.items())},
        "cluster_display": {str(c): d for c, d in sorted(display.items())},
        "class_names": {str(c): n for c, n in sorted(result.class_names.items())},
        "containment": [row.as_dict() for row in result.report.rows],
        "skipped_classes": result.report.skipped_classes,
        "warnings": list(result.warnings),
    }


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")


def _write_csv(path: Path, header: list[str], rows) -> None:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_cell(v) for v in row))
    path.write_text("\n".join(lines) + "\n")


def _cell(v) -> str:
    if v is None:
        return "-"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _trial_tag(result: TrialResult) -> str:
    if result.window_index is not None:
        return f"window{result.window_index}"
    if result.rem_class is not None:
        return str(result.rem_class)
    return "none"


def write_trial(result: TrialResult, out_dir, save_encoder: bool = True) -> Path:
    """Write the full artifact set for one trial into ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    tag = _trial_tag(result)

    _write_json(out / "report.json", trial_report_dict(result))

    _write_csv(
        out / "assignments.csv", ["id", "cluster"],
        zip(result.ids, (int(a) for a in result.assignments)),
    )
    _write_csv(
        out / "coords.csv", ["id", "x", "y"],
        ((i, float(x), float(y)) for i, (x, y) in zip(result.ids, result.coords)),
    )
    _write_csv(
        out / "panels.csv", ["id", "x", "y", "truth", "cluster", "labeled"],
        (
            (i, float(x), float(y), int(t), int(a), int(l))
            for i, (x, y), t, a, l in zip(
                result.ids, result.coords, result.truth, result.assignments, result.labeled_mask
            )
        ),
    )
    if result.confusion is not None:
        _write_csv(
            out / "confusion.csv",
            ["truth_class"] + [f"c{c}" for c in range(result.k)],
            (
                [cls] + [int(v) for v in row]
                for cls, row in zip(result.confusion_classes, result.confusion)
            ),
        )
    classes = sorted(result.report.rows[0].scores) if result.report.rows else []
    _write_csv(
        out / "containment_matrix.csv",
        ["cluster"] + [f"class_{c}" for c in classes],
        (
            [row.cluster] + [row.scores[c] for c in classes]
            for row in result.report.rows
        ),
    )
    _write_csv(
        out / "loss_trace.csv", ["epoch", "loss"],
        ((e, float(v)) for e, v in enumerate(result.loss_trace)),
    )
    if save_encoder:
        save_params(result.encoder_params, out / "encoder.npz")

    write_trial_plots(result, out, tag)
    return out


def write_trial_plots(result: TrialResult, out_dir, tag: str | None = None) -> None:
    out = Path(out_dir)
    tag = tag or _trial_tag(result)
    display = _display_map(result)
    spec = PlotSpec(title=f"{result.kind}: {result.ind_name}")
    svg = scatter_panels(
        result.coords, result.truth, result.assignments, result.labeled_mask,
        display, spec, class_names=result.class_names,
    )
    (out / f"trial_{tag}_panels.svg").write_text(svg)
    if result.confusion is not None:
        heat = confusion_heatmap(
            result.confusion,
            [f"{c}:{result.class_names.get(c, '?')}" for c in result.confusion_classes],
            [f"c{c}" for c in range(result.k)],
            PlotSpec(title=f"confusion: {result.ind_name}"),
        )
        (out / f"trial_{tag}_confusion.svg").write_text(heat)


def suite_row(result: TrialResult) -> list:
    return [result.ind_name, result.rem_class, result.disc_class, result.acc, result.cnt_score]


SUITE_HEADER = ["ind:name", "rem_class", "disc_class", "acc", "cnt_score"]


def write_suite(suite: SuiteResult, out_dir) -> Path:
    """Write the two-table suite report plus per-trial directories."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    _write_csv(out / "suite_existing.csv", SUITE_HEADER,
               (suite_row(r) for r in suite.discovery))
    _write_csv(out / "suite_control.csv", SUITE_HEADER,
               (suite_row(r) for r in suite.control))
    payload = {
        "schema_version": SCHEMA_VERSION,
        "existing": [dict(zip(SUITE_HEADER, suite_row(r))) for r in suite.discovery],
        "control": [dict(zip(SUITE_HEADER, suite_row(r))) for r in suite.control],
        "errors": suite.errors,
    }
    _write_json(out / "suite_report.json", payload)

    for result in suite.discovery:
        write_trial(result, out / f"trial_{result.rem_class}_discovery")
    for result in suite.control:
        write_trial(result, out / f"trial_{result.rem_class}_control")

    for kind, results in (("discovery", suite.discovery), ("control", suite.control)):
        if not results:
            continue
        entries = [
            {
                "coords": r.coords,
                "truth": r.truth,
                "assignments": r.assignments,
                "cluster_display": _display_map(r),
                "border_class": r.rem_class,
                "label": r.ind_name,
            }
            for r in results
        ]
        (out / f"suite_{kind}_grid.svg").write_text(pair_grid(entries))
    return out


def regenerate_plots(trial_dir, out_dir=None) -> list[Path]:
    """Rebuild the SVG figures of a stored trial from its CSV artifacts."""
    trial_dir = Path(trial_dir)
    report_path = trial_dir / "report.json"
    if not report_path.exists():
        raise ValidationError(f"{trial_dir} has no report.json")
    report = json.loads(report_path.read_text())
    out = Path(out_dir) if out_dir else trial_dir
    out.mkdir(parents=True, exist_ok=True)

    rows = (trial_dir / "panels.csv").read_text().strip().split("\n")[1:]
    ids, xs, ys, truth, cluster, labeled = [], [], [], [], [], []
    for line in rows:
        i, x, y, t, c, l = line.split(",")
        ids.append(i)
        xs.append(float(x))
        ys.append(float(y))
        truth.append(int(t))
        cluster.append(int(c))
        labeled.append(bool(int(l)))
    coords = np.column_stack([xs, ys])
    display = {int(k): v for k, v in report["cluster_display"].items()}
    class_names = {int(k): v for k, v in report["class_names"].items()}

    if report["removed_class"] is not None:
        tag = str(report["removed_class"])
    elif report["window_index"] is not None:
        tag = f"window{report['window_index']}"
    else:
        tag = "none"
    written = []
    spec = PlotSpec(title=f"{report['kind']}: {report['ind_name']}")
    svg = scatter_panels(coords, truth, cluster, labeled, display, spec, class_names=class_names)
    path = out / f"trial_{tag}_panels.svg"
    path.write_text(svg)
    written.append(path)

    conf_path = trial_dir / "confusion.csv"
    if conf_path.exists():
        lines = conf_path.read_text().strip().split("\n")
        col_labels = lines[0].split(",")[1:]
        row_classes, matrix = [], []
        for line in lines[1:]:
            cells = line.split(",")
            row_classes.append(int(cells[0]))
            matrix.append([int(v) for v in cells[1:]])
        heat = confusion_heatmap(
            np.array(matrix),
            [f"{c}:{class_names.get(c, '?')}" for c in row_classes],
            col_labels,
            PlotSpec(title=f"confusion: {report['ind_name']}"),
        )
        path = out / f"trial_{tag}_confusion.svg"
        path.write_text(heat)
        written.append(path)
    return written
