"""Motion-snippet datasets: loading, validation, preprocessing, splits.

A snippet is a 4-channel x 20-step window (accel x/y/z in g, scalar speed).
Datasets declare their class index set explicitly (indices may have gaps),
carry a ``preprocessed`` flag so scaling is applied exactly once, and are
written as a wide CSV plus a JSON metadata sidecar.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from bdisc.errors import ParseError, ValidationError
from bdisc.seeds import derive_seed

N_CHANNELS = 4
N_TIMESTEPS = 20
ACCEL_CLIP = 2.0
SPEED_SCALE = 22.0

_CHANNEL_PREFIXES = ("ax", "ay", "az", "sp")
CSV_HEADER = ["id", "label"] + [
    f"{prefix}_{t}" for prefix in _CHANNEL_PREFIXES for t in range(N_TIMESTEPS)
]
_N_VALUE_COLUMNS = N_CHANNELS * N_TIMESTEPS


@dataclass
class MotionSnippet:
    """One sample: values of shape (4, 20), optional class label."""

    id: str
    values: np.ndarray
    label: int | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != (N_CHANNELS, N_TIMESTEPS):
            raise ValidationError(
                f"snippet {self.id}: expected shape {(N_CHANNELS, N_TIMESTEPS)}, "
                f"got {self.values.shape}"
            )
        if not np.all(np.isfinite(self.values)):
            raise ValidationError(f"snippet {self.id}: non-finite values")


@dataclass
class Dataset:
    """A list of snippets plus the declared class index -> name map."""

    snippets: list[MotionSnippet]
    class_names: dict[int, str] = field(default_factory=dict)
    preprocessed: bool = False

    def __post_init__(self):
        self.class_names = {int(k): str(v) for k, v in self.class_names.items()}
        known = set(self.class_names)
        for s in self.snippets:
            if s.label is not None and s.label not in known:
                raise ValidationError(
                    f"snippet {s.id}: label {s.label} not in declared class set {sorted(known)}"
                )

    def __len__(self):
        return len(self.snippets)

    def class_indices(self) -> list[int]:
        return sorted(self.class_names)

    def ids(self) -> list[str]:
        return [s.id for s in self.snippets]

    def values(self) -> np.ndarray:
        """Stack all snippets into an (N, 4, 20) array."""
        if not self.snippets:
            return np.zeros((0, N_CHANNELS, N_TIMESTEPS))
        return np.stack([s.values for s in self.snippets])

    def labels(self) -> np.ndarray:
        """Per-snippet labels, -1 where unlabeled."""
        return np.array([-1 if s.label is None else s.label for s in self.snippets], dtype=int)

    def class_counts(self) -> dict[int, int]:
        counts = {c: 0 for c in self.class_indices()}
        for s in self.snippets:
            if s.label is not None:
                counts[s.label] += 1
        return counts


@dataclass
class SplitSpec:
    """How to split an annotated dataset into labeled / unlabeled pools."""

    withheld_class: int | None = None
    seed: int = 0
    fraction_labeled: float = 0.5

    def __post_init__(self):
        if not 0.0 < self.fraction_labeled < 1.0:
            raise ValidationError("fraction_labeled must be strictly between 0 and 1")


def _sidecar_path(path) -> Path:
    return Path(path).with_suffix(".meta.json")


def load_csv(path) -> Dataset:
    """Load a wide-format snippet CSV and its metadata sidecar.

    Columns: ``id,label,ax_0..ax_19,ay_0..ay_19,az_0..az_19,sp_0..sp_19``.
    Label -1 marks an unlabeled row. The sidecar declares the class index
    set (gaps are legal) and the preprocessed flag.
    """
    path = Path(path)
    if not path.exists():
        raise ParseError(f"no such file: {path}")
    sidecar = _sidecar_path(path)
    if not sidecar.exists():
        raise ValidationError(
            f"missing metadata sidecar {sidecar}: the class set is declared, not inferred"
        )
    meta = json.loads(sidecar.read_text())
    class_names = {int(k): v for k, v in meta["class_names"].items()}
    preprocessed = bool(meta.get("preprocessed", False))

    snippets = []
    with open(path, newline="") as fh:
        header = fh.readline().rstrip("\n").split(",")
        if header != CSV_HEADER:
            raise ParseError(f"{path}: unexpected header (want {len(CSV_HEADER)} known columns)")
        for row_no, line in enumerate(fh, start=2):
            line = line.rstrip("\n")
            if not line:
                continue
            cells = line.split(",")
            if len(cells) != len(CSV_HEADER):
                raise ParseError(
                    f"{path} row {row_no}: expected {_N_VALUE_COLUMNS} values, "
                    f"got {len(cells) - 2}"
                )
            snippet_id = cells[0]
            try:
                label_raw = int(float(cells[1]))
                values = np.array([float(c) for c in cells[2:]], dtype=np.float64)
            except ValueError as exc:
                raise ParseError(f"{path} row {row_no}: non-numeric cell ({exc})") from None
            label = None if label_raw == -1 else label_raw
            if label is not None and label not in class_names:
                raise ValidationError(
                    f"{path} row {row_no}: unknown class index {label}"
                )
            snippets.append(
                MotionSnippet(snippet_id, values.reshape(N_CHANNELS, N_TIMESTEPS), label)
            )
    return Dataset(snippets, class_names, preprocessed=preprocessed)


def save_csv(dataset: Dataset, path) -> None:
    """Write a dataset as wide CSV plus metadata sidecar (deterministic bytes)."""
    path = Path(path)
    lines = [",".join(CSV_HEADER)]
    for s in dataset.snippets:
        label = -1 if s.label is None else s.label
        cells = [s.id, str(label)] + [repr(v) for v in s.values.ravel()]
        lines.append(",".join(cells))
    path.write_text("\n".join(lines) + "\n")
    meta = {
        "class_names": {str(k): dataset.class_names[k] for k in dataset.class_indices()},
        "preprocessed": dataset.preprocessed,
    }
    _sidecar_path(path).write_text(json.dumps(meta, sort_keys=True, indent=2) + "\n")


def preprocess(dataset: Dataset) -> Dataset:
    """Clamp accel channels to [-2, 2] g and scale speed by 1/22.

    Must be applied exactly once; a second call raises instead of silently
    re-scaling the speed channel.
    """
    if dataset.preprocessed:
        raise ValidationError("dataset already preprocessed; refusing to re-scale")
    out = []
    for s in dataset.snippets:
        values = s.values.copy()
        values[:3] = np.clip(values[:3], -ACCEL_CLIP, ACCEL_CLIP)
        values[3] = values[3] / SPEED_SCALE
        out.append(MotionSnippet(s.id, values, s.label))
    return Dataset(out, dict(dataset.class_names), preprocessed=True)


def split_discovery(dataset: Dataset, spec: SplitSpec):
    """Partition an annotated dataset into labeled / unlabeled pools.

    Every class other than the withheld one is split per class by seeded
    shuffle into a labeled and an unlabeled half (odd counts: the labeled
    side gets the extra sample). All samples of the withheld class go to
    the unlabeled side. With no withheld class the unlabeled pool contains
    only known classes (negative control). Original row order is preserved
    on both sides.

    Returns ``(labeled, unlabeled, truth)`` where ``truth`` maps unlabeled
    snippet id -> true class, for evaluation only.
    """
    labels = dataset.labels()
    if np.any(labels < 0):
        raise ValidationError("split requires a fully labeled dataset")
    withheld = spec.withheld_class
    if withheld is not None:
        if withheld not in dataset.class_names:
            raise ValidationError(f"withheld class {withheld} not in declared class set")
        if not np.any(labels == withheld):
            raise ValidationError(f"withheld class {withheld} has zero samples")

    unlabeled_ids = set()
    for cls in dataset.class_indices():
        idx = np.flatnonzero(labels == cls)
        if len(idx) == 0:
            continue
        if cls == withheld:
            unlabeled_ids.update(dataset.snippets[i].id for i in idx)
            continue
        rng = np.random.default_rng(derive_seed(spec.seed, "split", cls))
        perm = rng.permutation(len(idx))
        n_labeled = math.ceil(len(idx) * spec.fraction_labeled)
        for j in perm[n_labeled:]:
            unlabeled_ids.add(dataset.snippets[idx[j]].id)

    labeled_snips, unlabeled_snips, truth = [], [], {}
    for s in dataset.snippets:
        if s.id in unlabeled_ids:
            unlabeled_snips.append(MotionSnippet(s.id, s.values.copy(), None))
            truth[s.id] = s.label
        else:
            labeled_snips.append(MotionSnippet(s.id, s.values.copy(), s.label))

    labeled_names = {
        c: n for c, n in dataset.class_names.items() if c != withheld
    }
    labeled = Dataset(labeled_snips, labeled_names, preprocessed=dataset.preprocessed)
    unlabeled = Dataset(unlabeled_snips, dict(dataset.class_names), preprocessed=dataset.preprocessed)
    return labeled, unlabeled, truth
