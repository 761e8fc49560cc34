"""Command-line interface: validate, train, predict, evaluate, hyperopt, describe.

Exit codes: 0 success, 1 user error (bad config, bad data, missing file),
2 runtime failure (non-finite loss, corrupt artifact, unexpected fault).
Diagnostics go to stderr; data goes to files or stdout.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from pathlib import Path
from typing import Any, Sequence

from declml.artifact import load_artifact, predict_raw, save_artifact
from declml.config import canonical_render, load_config, override_path
from declml.data.dataset import ingest_table
from declml.errors import DeclMLError, UserError, ValidationError
from declml.features import DEFAULT_REGISTRY, FeatureType
from declml.hyperopt import run_search, write_results
from declml.pipeline import train_pipeline


class UsageError(UserError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        raise UsageError(f"{self.prog}: {message}")


def _emit(text: str, output: str | None) -> None:
    if output:
        Path(output).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _json(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def cmd_validate(args) -> int:
    config = load_config(args.config)
    sys.stdout.write(canonical_render(config))
    return 0


def cmd_train(args) -> int:
    config = load_config(args.config)
    if args.seed is not None:
        config = override_path(config, "training.seed", args.seed)
    dataset = ingest_table(args.data, config, delimiter=args.delimiter)
    result = train_pipeline(config, dataset, split_column=args.split_column)
    save_artifact(result.pipeline, args.output, result.report)
    summary = {
        "best_epoch": result.report.best_epoch,
        "stop_reason": result.report.stop_reason,
        "validation": result.report.best.validation_metrics,
        "test": result.test_report.metrics if result.test_report else None,
    }
    sys.stdout.write(_json(summary))
    return 0


def _format_prediction(value: Any, ftype: FeatureType, delimiter: str) -> str:
    if ftype is FeatureType.BINARY:
        return "true" if value else "false"
    if ftype is FeatureType.SET:
        return delimiter.join(value)
    if ftype is FeatureType.NUMERIC:
        return repr(float(value))
    return str(value)


def predictions_csv(pipeline, rows: Sequence[dict[str, Any]], delimiter: str = ",") -> str:
    """One ``<name>_prediction`` column per output plus ``<name>_probability`` for classifier heads."""
    header: list[str] = []
    for f in pipeline.config.output_features:
        header.append(f"{f.name}_prediction")
        if f.type is not FeatureType.NUMERIC:
            header.append(f"{f.name}_probability")
    buf = io.StringIO()
    writer = csv.writer(buf, delimiter=delimiter, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        out = []
        for f in pipeline.config.output_features:
            set_delim = getattr(pipeline.metadata[f.name], "delimiter", " ")
            out.append(_format_prediction(row[f.name], f.type, set_delim))
            if f.type is FeatureType.SET:
                out.append(json.dumps(row[f"{f.name}_probability"], sort_keys=True))
            elif f.type is not FeatureType.NUMERIC:
                out.append(repr(row[f"{f.name}_probability"]))
        writer.writerow(out)
    return buf.getvalue()


def cmd_predict(args) -> int:
    pipeline, _ = load_artifact(args.model)
    dataset = ingest_table(args.data, pipeline.config, delimiter=args.delimiter, require_outputs=False)
    rows = predict_raw(pipeline, dataset)
    _emit(predictions_csv(pipeline, rows, args.delimiter), args.output)
    return 0


def cmd_evaluate(args) -> int:
    pipeline, _ = load_artifact(args.model)
    dataset = ingest_table(args.data, pipeline.config, delimiter=args.delimiter)
    report = pipeline.evaluate(dataset, split=args.split_name)
    _emit(_json(report.to_dict()), args.output)
    return 0


def cmd_hyperopt(args) -> int:
    config = load_config(args.config)
    if config.hyperopt is None:
        raise ValidationError("hyperopt", "config has no hyperopt section")
    dataset = ingest_table(args.data, config, delimiter=args.delimiter)
    trials, best = run_search(config, dataset, workers=args.workers, split_column=args.split_column)
    write_results(args.output, trials, best, config.hyperopt)
    ok = [t for t in trials if t.status == "ok"]
    for t in trials:
        if t.status != "ok":
            print(f"trial {t.index} failed: {t.reason}", file=sys.stderr)
    sys.stdout.write(_json({"trials": len(trials), "ok": len(ok)}))
    return 0


def cmd_describe(args) -> int:
    _emit(_json(DEFAULT_REGISTRY.describe()), args.output)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="declml", description="Declarative encoder-combiner-decoder pipelines.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("validate", help="compile a config and print its resolved form")
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("train", help="train a pipeline and write a model artifact")
    p.add_argument("--config", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--output", required=True, help="artifact directory")
    p.add_argument("--seed", type=int)
    p.add_argument("--split-column")
    p.add_argument("--delimiter", default=",")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="predict raw rows with a saved artifact")
    p.add_argument("--model", required=True, help="artifact directory")
    p.add_argument("--data", required=True)
    p.add_argument("--output", help="predictions CSV (stdout when omitted)")
    p.add_argument("--delimiter", default=",")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", help="score a saved artifact on labeled rows")
    p.add_argument("--model", required=True, help="artifact directory")
    p.add_argument("--data", required=True)
    p.add_argument("--output", help="report file (stdout when omitted)")
    p.add_argument("--split-name", default="test", help="split id recorded in the report")
    p.add_argument("--delimiter", default=",")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("hyperopt", help="run the config's hyperparameter search")
    p.add_argument("--config", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--output", required=True, help="results directory")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--split-column")
    p.add_argument("--delimiter", default=",")
    p.set_defaults(func=cmd_hyperopt)

    p = sub.add_parser("describe", help="print the feature type registry")
    p.add_argument("--output", help="file (stdout when omitted)")
    p.set_defaults(func=cmd_describe)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except DeclMLError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # unexpected fault: still no traceback on the console
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
