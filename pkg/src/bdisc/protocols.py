"""End-to-end experiment drivers.

Three protocols share one pipeline (split -> preprocess -> train -> embed ->
semi-supervised K-means -> joint t-SNE -> per-cluster / per-class KDEs ->
containment report):

* existing-novel discovery: one class is withheld from supervision and its
  samples appear only in the unlabeled pool; the free cluster should
  recover it and score low containment.
* negative control: no class is withheld (all classes labeled, unlabeled
  pool contains only known behaviors); the extra cluster should score high
  containment. A bookkeeping "removed class" label may tag the trial.
* deployment: the encoder is trained once on a 50% labeled split, then
  sliding windows of an unlabeled stream are appended to the known
  unlabeled pool and each window is scored for novelty.

Paired discovery/control trials derive identical stage configurations from
the same trial seed and differ only in how the unlabeled pool is composed.
"""

from __future__ import annotations

import hashlib
import json
import warnings
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from bdisc.clustering import ClusterModel, confusion_matrix, ss_kmeans, withheld_accuracy
from bdisc.data import Dataset, MotionSnippet, SplitSpec, preprocess, split_discovery
from bdisc.density import (
    ContainmentReport,
    DensityConfig,
    MIN_KDE_POINTS,
    build_report,
    fit_kde,
)
from bdisc.encoder import (
    EmbeddingSet,
    EncoderConfig,
    EncoderParams,
    concat_embeddings,
    embed,
    train,
)
from bdisc.errors import ValidationError
from bdisc.seeds import derive_seed
from bdisc.tsne import Projection2D, TsneConfig, tsne_fit


@dataclass
class StageConfigs:
    """Per-stage settings shared by every protocol."""

    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    tsne: TsneConfig = field(default_factory=TsneConfig)
    density: DensityConfig = field(default_factory=DensityConfig)
    n_free: int = 1
    kmeans_max_iter: int = 300
    kmeans_tol: float = 1e-6
    fraction_labeled: float = 0.5
    class_kde_source: str = "labeled"  # or "assigned"

    def __post_init__(self):
        if self.class_kde_source not in ("labeled", "assigned"):
            raise ValidationError("class_kde_source must be 'labeled' or 'assigned'")
        if self.n_free < 0:
            raise ValidationError("n_free must be >= 0")


@dataclass
class TrialConfig:
    dataset: Dataset
    withheld_class: int | None = None
    seed: int = 0
    stages: StageConfigs = field(default_factory=StageConfigs)

    def __post_init__(self):
        if self.withheld_class is not None and self.withheld_class not in self.dataset.class_names:
            raise ValidationError(
                f"withheld class {self.withheld_class} not in dataset class set"
            )


@dataclass
class TrialResult:
    kind: str
    ind_name: str
    rem_class: int | None
    disc_class: int
    acc: float | None
    cnt_score: float | None
    novel: bool
    report: ContainmentReport
    confusion_classes: list[int] | None
    confusion: np.ndarray | None
    cluster_to_class: dict[int, int | None]
    stage_config_hash: str
    seed: int
    k: int
    n_labeled: int
    n_unlabeled: int
    ids: list[str]
    coords: np.ndarray
    truth: np.ndarray
    assignments: np.ndarray
    labeled_mask: np.ndarray
    class_names: dict[int, str]
    loss_trace: list[float]
    encoder_params: EncoderParams
    warnings: list[str] = field(default_factory=list)
    window_index: int | None = None
    short_window: bool = False


def stage_config_hash(seed: int, stages: StageConfigs) -> str:
    """Hash of every stage setting after trial-seed substitution.

    Paired discovery/control trials must agree on this hash: they differ
    only in unlabeled-pool composition.
    """
    payload = asdict(stages)
    payload["encoder"]["seed"] = derive_seed(seed, "train")
    payload["tsne"]["seed"] = derive_seed(seed, "tsne")
    payload["containment_seed"] = derive_seed(seed, "containment")
    payload["split_seed"] = derive_seed(seed, "split")
    text = json.dumps(payload, sort_keys=True)
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def _free_display_index(dataset: Dataset) -> int:
    return max(dataset.class_indices()) + 1


def _containment_stage(coords, emb: EmbeddingSet, model: ClusterModel,
                       stages: StageConfigs, seed: int):
    """Fit per-cluster and per-class KDEs and build the containment report.

    Cluster KDEs use all assigned points; class KDEs use labeled points (or
    the class cluster's assigned points when class_kde_source='assigned').
    Models with too few points become None. Small-sample warnings are
    captured into the returned list instead of escaping to the console.
    """
    cluster_models: dict[int, object] = {}
    class_models: dict[int, object] = {}
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        for c in range(model.k):
            pts = coords[model.assignments == c]
            cluster_models[c] = fit_kde(pts) if len(pts) >= MIN_KDE_POINTS else None
        for i, cls in enumerate(model.class_indices):
            if stages.class_kde_source == "labeled":
                pts = coords[emb.labels == cls]
            else:
                pts = coords[model.assignments == i]
            class_models[cls] = fit_kde(pts) if len(pts) >= MIN_KDE_POINTS else None
        report = build_report(cluster_models, class_models, stages.density, seed)
    return report, [str(w.message) for w in caught]


def _run_pipeline(cfg: TrialConfig, kind: str, withheld_for_split: int | None) -> TrialResult:
    dataset = cfg.dataset
    stages = cfg.stages
    seed = cfg.seed

    spec = SplitSpec(withheld_for_split, derive_seed(seed, "split"), stages.fraction_labeled)
    labeled, unlabeled, truth_map = split_discovery(dataset, spec)
    if not labeled.preprocessed:
        labeled = preprocess(labeled)
        unlabeled = preprocess(unlabeled)

    enc_cfg = replace(stages.encoder, seed=derive_seed(seed, "train"))
    params, loss_trace = train(labeled, enc_cfg)

    emb_l = embed(params, labeled)
    emb_l.truth = emb_l.labels.copy()
    emb_u = embed(params, unlabeled)
    emb_u.truth = np.array([truth_map[i] for i in emb_u.ids], dtype=int)
    emb = concat_embeddings(emb_l, emb_u)

    model = ss_kmeans(emb, stages.n_free, stages.kmeans_max_iter, stages.kmeans_tol)
    proj = tsne_fit(emb, replace(stages.tsne, seed=derive_seed(seed, "tsne")))

    report, caught = _containment_stage(
        proj.coords, emb, model, stages, derive_seed(seed, "containment")
    )

    free_row = report.row_for(model.free_cluster())
    acc = withheld_accuracy(model, emb, withheld_for_split) if kind == "discovery" else None
    conf_classes, conf = confusion_matrix(model, emb)

    rem_class = cfg.withheld_class
    if kind == "discovery":
        disc_class = rem_class
    else:
        disc_class = _free_display_index(dataset)
    if rem_class is not None:
        ind_name = f"{rem_class}:{dataset.class_names[rem_class]}"
    else:
        ind_name = "(none)"

    cluster_to_class: dict[int, int | None] = {
        i: cls for i, cls in enumerate(model.class_indices)
    }
    for free in range(model.n_known, model.k):
        cluster_to_class[free] = None

    return TrialResult(
        kind=kind,
        ind_name=ind_name,
        rem_class=rem_class,
        disc_class=disc_class,
        acc=acc,
        cnt_score=free_row.containment_score,
        novel=free_row.novel,
        report=report,
        confusion_classes=conf_classes,
        confusion=conf,
        cluster_to_class=cluster_to_class,
        stage_config_hash=stage_config_hash(seed, stages),
        seed=seed,
        k=model.k,
        n_labeled=len(emb_l),
        n_unlabeled=len(emb_u),
        ids=list(emb.ids),
        coords=proj.coords,
        truth=emb.truth,
        assignments=model.assignments,
        labeled_mask=emb.labeled_mask,
        class_names=dict(dataset.class_names),
        loss_trace=loss_trace,
        encoder_params=params,
        warnings=caught,
    )


def run_existing_discovery(cfg: TrialConfig) -> TrialResult:
    """Withheld-class trial: the free cluster is the candidate novel group."""
    if cfg.withheld_class is None:
        raise ValidationError("existing-novel requires withheld class")
    if cfg.stages.n_free < 1:
        raise ValidationError("discovery requires at least one free cluster")
    return _run_pipeline(cfg, "discovery", cfg.withheld_class)


def run_negative_control(cfg: TrialConfig) -> TrialResult:
    """Control trial: every class stays labeled; the unlabeled pool holds
    only known behaviors. ``withheld_class`` only labels the trial row."""
    if cfg.stages.n_free < 1:
        raise ValidationError("negative control requires a free cluster")
    return _run_pipeline(cfg, "control", None)


@dataclass
class SuiteResult:
    discovery: list[TrialResult]
    control: list[TrialResult]
    errors: list[dict] = field(default_factory=list)


def _suite_trial(args):
    dataset, cls, seed, stages, kind = args
    cfg = TrialConfig(dataset, cls, seed, stages)
    if kind == "discovery":
        return run_existing_discovery(cfg)
    return run_negative_control(cfg)


def run_suite(dataset: Dataset, seed: int, stages: StageConfigs, jobs: int = 1) -> SuiteResult:
    """One discovery plus one control trial per class.

    Per-trial failures are recorded and the suite continues. With jobs > 1,
    trials run in separate processes; results are assembled in class order
    either way, so output is independent of scheduling.
    """
    classes = dataset.class_indices()
    if len(classes) < 3:
        raise ValidationError("suite needs a dataset with >= 3 classes")
    tasks = []
    for cls in classes:
        trial_seed = derive_seed(seed, "trial", cls)
        tasks.append((dataset, cls, trial_seed, stages, "discovery"))
        tasks.append((dataset, cls, trial_seed, stages, "control"))

    outcomes: list = [None] * len(tasks)
    if jobs > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=jobs) as pool:
            for i, res in enumerate(pool.map(_try_suite_trial, tasks)):
                outcomes[i] = res
    else:
        for i, task in enumerate(tasks):
            outcomes[i] = _try_suite_trial(task)

    result = SuiteResult([], [])
    for task, outcome in zip(tasks, outcomes):
        _, cls, _, _, kind = task
        if isinstance(outcome, TrialResult):
            (result.discovery if kind == "discovery" else result.control).append(outcome)
        else:
            result.errors.append({"rem_class": cls, "kind": kind, "error": outcome})
    return result


def _try_suite_trial(task):
    try:
        return _suite_trial(task)
    except Exception as exc:  # recorded, suite continues
        return f"{type(exc).__name__}: {exc}"


@dataclass
class DeployConfig:
    window: int = 100
    stride: int = 100
    k: int | None = None  # clusters; None = n_known + 1
    seed: int = 0
    stages: StageConfigs = field(default_factory=StageConfigs)

    def __post_init__(self):
        if self.window < 1 or self.stride < 1:
            raise ValidationError("window and stride must be >= 1")


def run_deployment(base: Dataset, stream: list[MotionSnippet], cfg: DeployConfig,
                   stream_truth: dict | None = None) -> list[TrialResult]:
    """Score sliding stream windows for novelty.

    The encoder is trained once on the labeled half of ``base``; each
    window joins the known unlabeled half to form the trial's unlabeled
    pool. A trailing window shorter than configured is still processed and
    flagged. Returns one result per window (empty stream -> empty list).
    """
    stages = cfg.stages
    n_known = len(base.class_indices())
    if cfg.k is not None:
        n_free = cfg.k - n_known
        if n_free < 1:
            raise ValidationError(
                f"k={cfg.k} leaves no free cluster beyond the {n_known} known classes"
            )
    else:
        n_free = 1

    spec = SplitSpec(None, derive_seed(cfg.seed, "split"), stages.fraction_labeled)
    labeled, unlabeled_known, truth_map = split_discovery(base, spec)
    if not labeled.preprocessed:
        labeled = preprocess(labeled)
        unlabeled_known = preprocess(unlabeled_known)

    enc_cfg = replace(stages.encoder, seed=derive_seed(cfg.seed, "train"))
    params, loss_trace = train(labeled, enc_cfg)
    emb_l = embed(params, labeled)
    emb_l.truth = emb_l.labels.copy()
    emb_uk = embed(params, unlabeled_known)
    emb_uk.truth = np.array([truth_map[i] for i in emb_uk.ids], dtype=int)

    results = []
    disc_class = _free_display_index(base)
    for w_index, start in enumerate(range(0, len(stream), cfg.stride)):
        chunk = stream[start : start + cfg.window]
        if not chunk:
            break
        short = len(chunk) < cfg.window
        window_ds = Dataset(
            [MotionSnippet(s.id, s.values.copy(), None) for s in chunk],
            dict(base.class_names),
            preprocessed=base.preprocessed,
        )
        if not window_ds.preprocessed:
            window_ds = preprocess(window_ds)
        emb_w = embed(params, window_ds)
        if stream_truth is not None:
            emb_w.truth = np.array([stream_truth.get(i, -1) for i in emb_w.ids], dtype=int)
        else:
            emb_w.truth = np.full(len(emb_w), -1, dtype=int)
        emb = concat_embeddings(concat_embeddings(emb_l, emb_uk), emb_w)

        model = ss_kmeans(emb, n_free, stages.kmeans_max_iter, stages.kmeans_tol)
        proj = tsne_fit(
            emb, replace(stages.tsne, seed=derive_seed(cfg.seed, "window", w_index, "tsne"))
        )
        report, caught = _containment_stage(
            proj.coords, emb, model, stages,
            derive_seed(cfg.seed, "window", w_index, "containment"),
        )
        free_row = report.row_for(model.free_cluster())
        if short:
            caught = caught + [f"window {w_index}: only {len(chunk)} of {cfg.window} segments"]

        results.append(TrialResult(
            kind="window",
            ind_name=f"window {w_index}",
            rem_class=None,
            disc_class=disc_class,
            acc=None,
            cnt_score=free_row.containment_score,
            novel=free_row.novel,
            report=report,
            confusion_classes=None,
            confusion=None,
            cluster_to_class={i: cls for i, cls in enumerate(model.class_indices)}
            | {f: None for f in range(model.n_known, model.k)},
            stage_config_hash=stage_config_hash(cfg.seed, stages),
            seed=cfg.seed,
            k=model.k,
            n_labeled=len(emb_l),
            n_unlabeled=len(emb_uk) + len(emb_w),
            ids=list(emb.ids),
            coords=proj.coords,
            truth=emb.truth,
            assignments=model.assignments,
            labeled_mask=emb.labeled_mask,
            class_names=dict(base.class_names),
            loss_trace=loss_trace,
            encoder_params=params,
            warnings=caught,
            window_index=w_index,
            short_window=short,
        ))
    return results
