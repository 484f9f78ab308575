"""Command-line front end: train, eval, predict.

All diagnostics go to stderr; stdout and declared output files carry
only machine-readable results. Exit status is 0 exactly when the
command completed.

Test and input files are sniffed by content: gzip or an IDX magic in
the first four bytes means IDX, anything else is read as CSV.
"""

import argparse
import struct
import sys

import numpy as np

from . import persist
from .config import RunConfig, load_config, with_base_seed
from .data import (
    IDX_IMAGES_MAGIC,
    IDX_LABELS_MAGIC,
    load_csv,
    load_features_csv,
    load_idx,
    load_idx_images,
    load_idx_labels,
    split,
    to_dataset,
)
from .errors import ConfigError, DataFormatError, SynpilError
from .report import (
    confusion_matrix,
    format_confusion,
    render_training_figures,
    training_report_lines,
    write_report,
)
from .synergy import predict as predict_scores
from .synergy import train_system_with_stats


def _sniff_format(path) -> str:
    with open(path, "rb") as f:
        head = f.read(4)
    if head[:2] == b"\x1f\x8b":
        return "idx"
    if len(head) == 4:
        (magic,) = struct.unpack(">I", head)
        if magic in (IDX_IMAGES_MAGIC, IDX_LABELS_MAGIC):
            return "idx"
    return "csv"


def _load_training_data(cfg: RunConfig):
    data = cfg.data
    if data.format == "idx":
        return load_idx(data.train, data.train_labels)
    raw = load_csv(data.train, data.label_column, data.has_header)
    return to_dataset(raw)


def cmd_train(args) -> int:
    cfg = load_config(args.config)
    if args.base_seed is not None:
        cfg = with_base_seed(cfg, args.base_seed)
    workers = args.workers
    if workers is None:
        workers = cfg.synergy.n_subsystems
    if workers < 1:
        raise ConfigError(f"--workers must be at least 1, got {workers}")

    ds = _load_training_data(cfg)
    train_ds, val_ds = split(
        ds,
        cfg.synergy.elementary.early_stop.val_fraction,
        seed=cfg.synergy.base_seed,
    )
    print(
        f"training on {train_ds.n_samples} samples "
        f"({val_ds.n_samples} held out for validation), "
        f"{cfg.synergy.n_subsystems} subsystem(s), {workers} worker(s)",
        file=sys.stderr,
    )
    sm, stats = train_system_with_stats(
        train_ds.x,
        train_ds.t,
        val_ds.x,
        val_ds.t,
        cfg.synergy,
        norm_stats=ds.norm_stats,
        class_names=ds.class_names,
        workers=workers,
    )
    persist.save(sm, args.out, config_echo=cfg.raw)
    print(
        f"validation accuracy {stats.final_val_accuracy:.4f} "
        f"in {stats.total_seconds:.2f}s; model written to {args.out}",
        file=sys.stderr,
    )
    if cfg.output.report is not None:
        write_report(training_report_lines(sm, stats), cfg.output.report)
        print(f"report written to {cfg.output.report}", file=sys.stderr)
        if cfg.output.figures:
            for fig_path in render_training_figures(sm, stats, cfg.output.report):
                print(f"figure written to {fig_path}", file=sys.stderr)
    return 0


def _looks_like_int(text: str) -> bool:
    try:
        int(text)
    except ValueError:
        return False
    return True


def _csv_read_options(args, echo):
    """Label column and header flag: CLI beats the model's config echo."""
    label_column, has_header = -1, False
    if isinstance(echo, dict):
        data = echo.get("data", {})
        if isinstance(data, dict) and data.get("format") == "csv":
            label_column = data.get("label_column", -1)
            has_header = bool(data.get("has_header", False))
    if args.label_column is not None:
        if _looks_like_int(args.label_column):
            label_column = int(args.label_column)
        else:
            label_column = args.label_column
    if args.has_header:
        has_header = True
    return label_column, has_header


def cmd_eval(args) -> int:
    sm = persist.load(args.model)
    if _sniff_format(args.test) == "idx":
        if args.test_labels is None:
            raise DataFormatError(
                f"{args.test} is an IDX image file; pass its label file "
                "with --test-labels"
            )
        x = load_idx_images(args.test)
        truths = [str(int(v)) for v in load_idx_labels(args.test_labels)]
    else:
        label_column, has_header = _csv_read_options(
            args, persist.read_metadata(args.model).get("config_echo")
        )
        raw = load_csv(args.test, label_column, has_header)
        x = np.ascontiguousarray(raw.features.T)
        truths = list(raw.labels)
    unknown = sorted(set(truths) - set(sm.class_names))
    if unknown:
        raise DataFormatError(
            f"test data contains classes the model does not know: "
            f"{', '.join(unknown)}"
        )
    predicted, _ = predict_scores(sm, x)
    accuracy = float(np.mean([p == t for p, t in zip(predicted, truths)]))
    counts = confusion_matrix(truths, predicted, sm.class_names)
    print(f"accuracy: {100.0 * accuracy:.2f}")
    print(format_confusion(counts, sm.class_names))
    return 0


def cmd_predict(args) -> int:
    sm = persist.load(args.model)
    if _sniff_format(args.input) == "idx":
        x = load_idx_images(args.input)
    else:
        x = np.ascontiguousarray(load_features_csv(args.input, args.has_header))
    labels, _ = predict_scores(sm, x)
    with open(args.output, "w", encoding="utf-8") as f:
        f.write("\n".join(labels) + "\n")
    print(f"{len(labels)} prediction(s) written to {args.output}", file=sys.stderr)
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="synpil",
        description=(
            "Train, evaluate, and apply gradient-free stacked classifier "
            "ensembles."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    train = sub.add_parser("train", help="train an ensemble from a YAML config")
    train.add_argument("--config", required=True, help="YAML run configuration")
    train.add_argument(
        "--workers",
        type=int,
        default=None,
        help="concurrent member trainings (default: number of subsystems)",
    )
    train.add_argument(
        "--base-seed",
        type=int,
        default=None,
        help="override synergy.base_seed from the config",
    )
    train.add_argument("--out", required=True, help="model file to write")
    train.set_defaults(func=cmd_train)

    evaluate = sub.add_parser("eval", help="accuracy and confusion on labeled data")
    evaluate.add_argument("--model", required=True)
    evaluate.add_argument("--test", required=True, help="CSV or IDX image file")
    evaluate.add_argument(
        "--test-labels", default=None, help="IDX label file (IDX input only)"
    )
    evaluate.add_argument(
        "--label-column",
        default=None,
        help="CSV label column index or name (default: from the model's config)",
    )
    evaluate.add_argument(
        "--has-header", action="store_true", help="CSV input has a header row"
    )
    evaluate.set_defaults(func=cmd_eval)

    pred = sub.add_parser("predict", help="write one class name per input sample")
    pred.add_argument("--model", required=True)
    pred.add_argument("--input", required=True, help="CSV features or IDX images")
    pred.add_argument("--output", required=True, help="label file to write")
    pred.add_argument(
        "--has-header", action="store_true", help="CSV input has a header row"
    )
    pred.set_defaults(func=cmd_predict)
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (SynpilError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
