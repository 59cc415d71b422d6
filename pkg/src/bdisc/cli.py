"""Command-line surface: discover, control, suite, deploy, synth, plot.

Every stage setting is overridable by a flag; a JSON config file (--config)
may set the same fields, with flags winning. All randomness flows from one
--seed through documented sub-seed derivation, so re-running a command with
identical flags produces byte-identical JSON/CSV/SVG outputs.

Exit codes: 0 success, 2 configuration/input error, 3 runtime error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

from bdisc import __version__
from bdisc.data import Dataset, load_csv, save_csv
from bdisc.density import DensityConfig
from bdisc.encoder import EncoderConfig
from bdisc.errors import ParseError, ValidationError
from bdisc.protocols import (
    DeployConfig,
    StageConfigs,
    TrialConfig,
    run_deployment,
    run_existing_discovery,
    run_negative_control,
    run_suite,
)
from bdisc.reporting import (
    SCHEMA_VERSION,
    regenerate_plots,
    trial_report_dict,
    write_suite,
    write_trial,
)
from bdisc.seeds import derive_seed
from bdisc.synth import resolve_spec, synth_generate, synth_stream
from bdisc.tsne import TsneConfig

# (flag, type, section, field, help) - one row per overridable config field
_FLAG_TABLE = [
    ("--epochs", int, "encoder", "epochs", "encoder training epochs"),
    ("--learning-rate", float, "encoder", "learning_rate", "encoder AdamW learning rate"),
    ("--weight-decay", float, "encoder", "weight_decay", "AdamW decoupled weight decay"),
    ("--batch-size", int, "encoder", "batch_size", "minibatch size (default: full batch)"),
    ("--dropout", float, "encoder", "dropout_rate", "dropout rate after each conv block"),
    ("--channels", int, "encoder", "channels_per_layer", "conv channels per layer"),
    ("--conv-layers", int, "encoder", "conv_layers", "number of conv blocks"),
    ("--kernel-size", int, "encoder", "kernel_size", "conv kernel size (odd)"),
    ("--bn-momentum", float, "encoder", "bn_momentum", "batch-norm running-stat momentum"),
    ("--bn-epsilon", float, "encoder", "bn_epsilon", "batch-norm epsilon"),
    ("--beta1", float, "encoder", "beta1", "AdamW beta1"),
    ("--beta2", float, "encoder", "beta2", "AdamW beta2"),
    ("--adam-epsilon", float, "encoder", "adam_epsilon", "AdamW epsilon"),
    ("--perplexity", float, "tsne", "perplexity", "t-SNE target perplexity"),
    ("--tsne-iters", int, "tsne", "n_iter", "t-SNE iterations"),
    ("--tsne-lr", float, "tsne", "learning_rate", "t-SNE learning rate"),
    ("--early-exaggeration", float, "tsne", "early_exaggeration", "t-SNE exaggeration factor"),
    ("--exaggeration-iters", int, "tsne", "exaggeration_iters", "iterations with exaggeration"),
    ("--momentum-early", float, "tsne", "momentum_early", "t-SNE momentum before switch"),
    ("--momentum-late", float, "tsne", "momentum_late", "t-SNE momentum after switch"),
    ("--momentum-switch-iter", int, "tsne", "momentum_switch_iter", "t-SNE momentum switch iteration"),
    ("--init-std", float, "tsne", "init_std", "std of the PCA initialization"),
    ("--search-tol", float, "tsne", "search_tol", "perplexity search tolerance"),
    ("--search-max-steps", int, "tsne", "search_max_steps", "perplexity bisection step cap"),
    ("--alpha", float, "density", "alpha", "HDR boundary mass"),
    ("--mc", int, "density", "mc_samples", "Monte Carlo samples per KDE draw"),
    ("--novelty-threshold", float, "density", "novelty_threshold", "novelty cutoff on the containment score"),
    ("--n-free", int, "top", "n_free", "free clusters beyond the known classes"),
    ("--kmeans-max-iter", int, "top", "kmeans_max_iter", "K-means iteration cap"),
    ("--kmeans-tol", float, "top", "kmeans_tol", "K-means centroid-shift tolerance"),
    ("--fraction-labeled", float, "top", "fraction_labeled", "labeled fraction of each class"),
    ("--class-kde-source", str, "top", "class_kde_source", "class KDE points: labeled | assigned"),
]

_SECTION_TYPES = {"encoder": EncoderConfig, "tsne": TsneConfig, "density": DensityConfig}
_TOP_FIELDS = {"n_free", "kmeans_max_iter", "kmeans_tol", "fraction_labeled", "class_kde_source"}


def _flag_dest(flag: str) -> str:
    return flag.lstrip("-").replace("-", "_")


def _add_stage_flags(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("stage configuration")
    for flag, typ, _, _, help_text in _FLAG_TABLE:
        group.add_argument(flag, type=typ, default=None, help=help_text)
    group.add_argument("--config", type=str, default=None,
                       help="JSON config file; flags override its values")


def _add_data_flags(parser: argparse.ArgumentParser, require=True) -> None:
    group = parser.add_argument_group("data source")
    mx = group.add_mutually_exclusive_group(required=require)
    mx.add_argument("--data", type=str, help="snippet CSV (with .meta.json sidecar)")
    mx.add_argument("--synth", type=str, help="synthetic preset name or SynthSpec JSON path")
    group.add_argument("--counts", type=str, default=None,
                       help="comma-separated per-class counts for --synth")


def _load_config_file(path: str) -> dict:
    raw = json.loads(Path(path).read_text())
    known_sections = set(_SECTION_TYPES) | {"top"}
    unknown = set(raw) - known_sections
    if unknown:
        raise ValidationError(f"unknown config sections: {sorted(unknown)}")
    for section, cls in _SECTION_TYPES.items():
        if section in raw:
            fields = {f.name for f in dataclasses.fields(cls)}
            bad = set(raw[section]) - fields
            if bad:
                raise ValidationError(f"unknown keys in config section {section!r}: {sorted(bad)}")
    if "top" in raw:
        bad = set(raw["top"]) - _TOP_FIELDS
        if bad:
            raise ValidationError(f"unknown keys in config section 'top': {sorted(bad)}")
    return raw


def build_stages(args) -> StageConfigs:
    """Defaults <- config file <- flags."""
    sections = {"encoder": {}, "tsne": {}, "density": {}, "top": {}}
    if getattr(args, "config", None):
        file_cfg = _load_config_file(args.config)
        for section in sections:
            sections[section].update(file_cfg.get(section, {}))
    for flag, _, section, field_name, _ in _FLAG_TABLE:
        value = getattr(args, _flag_dest(flag), None)
        if value is not None:
            sections[section if section != "top" else "top"][field_name] = value
    return StageConfigs(
        encoder=EncoderConfig(**sections["encoder"]),
        tsne=TsneConfig(**sections["tsne"]),
        density=DensityConfig(**sections["density"]),
        **sections["top"],
    )


def _parse_counts(text: str | None):
    if text is None:
        return None
    try:
        return [int(v) for v in text.split(",") if v != ""]
    except ValueError:
        raise ValidationError(f"bad --counts value {text!r}") from None


def resolve_dataset(args) -> Dataset:
    if getattr(args, "data", None):
        return load_csv(args.data)
    spec = resolve_spec(args.synth)
    counts = _parse_counts(args.counts)
    if counts is None:
        counts = {c: n for c, n in spec.default_counts.items() if n > 0}
    return synth_generate(counts, spec, derive_seed(args.seed, "data"))


def _print_trial_summary(result) -> None:
    score = "-" if result.cnt_score is None else f"{result.cnt_score:.3f}"
    acc = "-" if result.acc is None else f"{result.acc:.3f}"
    print(f"{result.kind} {result.ind_name}: acc={acc} containment={score} novel={result.novel}")


def cmd_discover(args) -> int:
    dataset = resolve_dataset(args)
    stages = build_stages(args)
    cfg = TrialConfig(dataset, args.withhold, args.seed, stages)
    result = run_existing_discovery(cfg)
    write_trial(result, args.out)
    _print_trial_summary(result)
    print(f"wrote {Path(args.out) / 'report.json'}")
    return 0


def cmd_control(args) -> int:
    dataset = resolve_dataset(args)
    stages = build_stages(args)
    cfg = TrialConfig(dataset, args.withhold, args.seed, stages)
    result = run_negative_control(cfg)
    write_trial(result, args.out)
    _print_trial_summary(result)
    print(f"wrote {Path(args.out) / 'report.json'}")
    return 0


def cmd_suite(args) -> int:
    dataset = resolve_dataset(args)
    stages = build_stages(args)
    suite = run_suite(dataset, args.seed, stages, jobs=args.jobs)
    write_suite(suite, args.out)
    rows = len(suite.discovery) + len(suite.control)
    print(f"suite: {rows} trial rows, {len(suite.errors)} errors -> {args.out}")
    return 0


def cmd_deploy(args) -> int:
    stages = build_stages(args)
    if args.data:
        base = load_csv(args.data)
        if not args.stream:
            raise ValidationError("deploy with --data needs --stream CSV")
        stream_ds = load_csv(args.stream)
        stream = stream_ds.snippets
        truth = {s.id: s.label for s in stream if s.label is not None} or None
    else:
        spec = resolve_spec(args.synth)
        counts = _parse_counts(args.counts)
        if counts is None:
            counts = {c: n for c, n in spec.default_counts.items() if n > 0}
        base = synth_generate(counts, spec, derive_seed(args.seed, "data"))
        novel = args.novel_window if args.novel_window >= 0 else None
        stream, truth = synth_stream(
            spec, derive_seed(args.seed, "stream"), args.windows, args.window, novel
        )
    cfg = DeployConfig(window=args.window, stride=args.stride, k=args.k,
                       seed=args.seed, stages=stages)
    results = run_deployment(base, stream, cfg, stream_truth=truth)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    windows_payload = []
    for result in results:
        wdir = out / f"window_{result.window_index:03d}"
        write_trial(result, wdir, save_encoder=False)
        windows_payload.append({
            "window_index": result.window_index,
            "containment_score": result.cnt_score,
            "novel": result.novel,
            "short_window": result.short_window,
        })
    summary = {
        "schema_version": SCHEMA_VERSION,
        "window": args.window,
        "stride": args.stride,
        "k": args.k,
        "seed": args.seed,
        "n_windows": len(results),
        "windows": windows_payload,
    }
    (out / "deploy_summary.json").write_text(json.dumps(summary, sort_keys=True, indent=2) + "\n")
    flagged = [w["window_index"] for w in windows_payload if w["novel"]]
    print(f"deploy: {len(results)} windows, novel flagged: {flagged}")
    return 0


def cmd_synth(args) -> int:
    spec = resolve_spec(args.spec if args.spec else args.preset)
    counts = _parse_counts(args.counts)
    if counts is None:
        counts = {c: n for c, n in spec.default_counts.items() if n > 0}
    dataset = synth_generate(counts, spec, args.seed)
    save_csv(dataset, args.out)
    print(f"wrote {args.out} ({len(dataset)} snippets, {len(dataset.class_indices())} classes)")
    return 0


def cmd_plot(args) -> int:
    written = regenerate_plots(args.trial, args.out)
    for path in written:
        print(f"wrote {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bdisc",
        description="Behavior discovery from motion snippets: embeddings, "
                    "semi-supervised K-means, and KDE/HDR containment novelty scores.",
    )
    parser.add_argument("--version", action="version", version=f"bdisc {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("discover", help="withheld-class discovery trial")
    _add_data_flags(p)
    p.add_argument("--withhold", type=int, required=True, help="class index to withhold")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=str, required=True, help="output directory")
    _add_stage_flags(p)
    p.set_defaults(func=cmd_discover)

    p = sub.add_parser("control", help="negative-control trial (no novel class)")
    _add_data_flags(p)
    p.add_argument("--withhold", type=int, default=None,
                   help="bookkeeping label for the trial row (optional)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=str, required=True)
    _add_stage_flags(p)
    p.set_defaults(func=cmd_control)

    p = sub.add_parser("suite", help="discovery + control trial per class")
    _add_data_flags(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=str, required=True)
    p.add_argument("--jobs", type=int, default=1, help="parallel trial processes")
    _add_stage_flags(p)
    p.set_defaults(func=cmd_suite)

    p = sub.add_parser("deploy", help="sliding-window novelty scoring on a stream")
    _add_data_flags(p)
    p.add_argument("--stream", type=str, default=None, help="stream CSV (with --data)")
    p.add_argument("--windows", type=int, default=10, help="synthetic stream windows")
    p.add_argument("--novel-window", type=int, default=-1,
                   help="synthetic window index filled with the unseen class (-1: none)")
    p.add_argument("--window", type=int, default=100, help="segments per window")
    p.add_argument("--stride", type=int, default=100, help="window stride")
    p.add_argument("--k", type=int, default=10, help="total clusters (known + free)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=str, required=True)
    _add_stage_flags(p)
    p.set_defaults(func=cmd_deploy)

    p = sub.add_parser("synth", help="write a synthetic dataset CSV")
    p.add_argument("--preset", type=str, default=None, help="3class | 5class | 9class")
    p.add_argument("--spec", type=str, default=None, help="SynthSpec JSON path")
    p.add_argument("--counts", type=str, default=None, help="comma-separated per-class counts")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=str, required=True, help="output CSV path")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("plot", help="regenerate SVGs from stored trial artifacts")
    p.add_argument("--trial", type=str, required=True, help="trial directory")
    p.add_argument("--out", type=str, default=None, help="output directory (default: in place)")
    p.set_defaults(func=cmd_plot)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code else 0
    if getattr(args, "command", None) == "synth" and not (args.preset or args.spec):
        print("synth needs --preset or --spec", file=sys.stderr)
        return 2
    try:
        return args.func(args)
    except (ValidationError, ParseError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # runtime failure
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    raise SystemExit(main())
