"""Command-line entry point.

Subcommands: fit-gan, sample, filter, benchmark, eval.

Exit codes: 0 success, 1 usage or configuration error, 2 runtime failure.
Set TABSHIFT_THREADS to run benchmark cells on that many threads (default 1).

Schemas are YAML/JSON files with keys ``columns`` (each with ``name``,
``kind`` = continuous|categorical, optional ``categories``) and ``target``.
Time-based columns are not supported: leave them out of the CSV/schema.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

import numpy as np

from . import ctgan, persist
from .benchmark import THREADS_ENV, load_pair, read_cells, run_benchmark, summary_text, thread_count, write_reports
from .config import ConfigError, RunConfig, load_config, parse_config
from .data import MissingPolicy, Role, SchemaError, load_csv, load_schema, write_csv
from .pipeline import aggregate, filter_pool, final_score, substream

log = logging.getLogger("tabshift")

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would exit with 2, which we reserve for runtime failures
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _config(args, check_files: bool = False) -> RunConfig:
    cfg = load_config(args.config, check_files) if getattr(args, "config", None) else parse_config({})
    updates = {}
    if getattr(args, "seed", None) is not None:
        updates["seed"] = args.seed
    if getattr(args, "output_dir", None) is not None:
        updates["output_dir"] = Path(args.output_dir)
    return cfg.model_copy(update=updates) if updates else cfg


def _require(path: str, what: str) -> Path:
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"{what} not found: {p}")
    return p


def cmd_fit_gan(args) -> int:
    cfg = _config(args)
    schema = load_schema(_require(args.schema, "schema file"))
    data = load_csv(_require(args.data, "data file"), schema, args.missing_policy)
    model = ctgan.train(data, cfg.gan.build(), substream(cfg.seed, "gan"))
    persist.save_model(model, args.out)
    log.info("trained on %d rows, encoded width %d; model written to %s", len(data), model.transformer.width, args.out)
    return EXIT_OK


def cmd_sample(args) -> int:
    if args.n < 1:
        raise UsageError(f"--n must be >= 1, got {args.n}")
    model = persist.load_model(_require(args.model, "model file"))
    condition = None
    if args.condition:
        try:
            condition = ctgan.parse_condition_string(args.condition)
            model.parse_condition(condition)
        except ValueError as exc:
            raise UsageError(f"invalid condition: {exc}") from None
    rng = np.random.default_rng(substream(args.seed, "sample"))
    synth = ctgan.sample(model, args.n, condition, rng)
    write_csv(synth, args.out)
    stats = f"rows={args.n} condition=none"
    if condition is not None:
        col, label = condition
        hits = int((synth.values[:, synth.schema.index(col)] == synth.schema.column(col).categories.index(label)).sum())
        stats = f"rows={args.n} condition={col}={label} matching={hits} compliance={hits / args.n:.4f}"
    Path(str(args.out) + ".stats").write_text(stats + "\n", encoding="utf-8")
    print(stats)
    return EXIT_OK


def cmd_filter(args) -> int:
    cfg = _config(args)
    schema = load_schema(_require(args.schema, "schema file"))
    pool, test = load_pair(_require(args.pool, "pool file"), _require(args.test, "test file"), schema,
                           args.missing_policy)
    fcfg = cfg.filter.build(substream(cfg.seed, "filter"))
    res = filter_pool(pool, test.sealed(), fcfg, args.keep_n)
    write_csv(res.dataset, args.out)
    print(f"kept={len(res.dataset)} pool={len(pool)} adversarial_auc={res.adversarial_auc:.4f}")
    return EXIT_OK


def cmd_benchmark(args) -> int:
    cfg = _config(args, check_files=True)
    if not cfg.datasets:
        raise ConfigError("datasets: at least one dataset is required for a benchmark")
    cells = run_benchmark(cfg, thread_count())
    report = write_reports(cells, cfg.output_dir, cfg.strategies)
    sys.stdout.write(summary_text(report))
    return EXIT_OK


def _read_scores(path: Path) -> dict[str, dict[str, float]]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    if not rows or "dataset" not in rows[0]:
        raise UsageError(f"{path}: expected a header starting with 'dataset'")
    try:
        return {r["dataset"]: {k: float(v) for k, v in r.items() if k != "dataset"} for r in rows}
    except ValueError as exc:
        raise UsageError(f"{path}: {exc}") from None


def cmd_eval(args) -> int:
    if args.scores:
        best = _read_scores(_require(args.scores, "scores file"))
        strategies = [k for k in next(iter(best.values()))]
        report = aggregate(best, strategies)
        sys.stdout.write(summary_text(report))
        return EXIT_OK
    if args.cells:
        report = write_reports(read_cells(_require(args.cells, "cells file")), Path(args.output_dir or "."))
        sys.stdout.write(summary_text(report))
        return EXIT_OK
    if not (args.train and args.test and args.schema):
        raise UsageError("eval needs --scores, --cells, or all of --train, --test and --schema")
    cfg = _config(args)
    schema = load_schema(_require(args.schema, "schema file"))
    train, test = load_pair(_require(args.train, "train file"), _require(args.test, "test file"), schema,
                            args.missing_policy)
    auc, test_rate = final_score(train, test.sealed(), cfg.pipeline())
    print(f"roc_auc={auc:.6f} train_rows={len(train)} test_rows={len(test)} test_target_rate={test_rate:.4f}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="tabshift", description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, config=True, seed=True):
        if config:
            sp.add_argument("--config", help="YAML run configuration")
        if seed:
            sp.add_argument("--seed", type=int, help="master seed (overrides the config)")
        sp.add_argument("--missing-policy", choices=[m.value for m in MissingPolicy], default="impute")

    sp = sub.add_parser("fit-gan", help="train a CTGAN on a CSV and save the model file")
    sp.add_argument("--data", required=True)
    sp.add_argument("--schema", required=True)
    sp.add_argument("--out", required=True, help="model file to write")
    common(sp)
    sp.set_defaults(func=cmd_fit_gan)

    sp = sub.add_parser("sample", help="draw synthetic rows from a saved model")
    sp.add_argument("--model", required=True)
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--condition", help="fix a category, e.g. job=b")
    sp.add_argument("--out", required=True, help="CSV to write; a .stats sidecar is written next to it")
    sp.add_argument("--seed", type=int, default=0)
    sp.set_defaults(func=cmd_sample)

    sp = sub.add_parser("filter", help="keep the pool rows that look most like the test set")
    sp.add_argument("--pool", required=True)
    sp.add_argument("--test", required=True)
    sp.add_argument("--schema", required=True)
    sp.add_argument("--keep-n", type=int, help="rows to keep (default: the whole pool, reordered)")
    sp.add_argument("--out", required=True)
    common(sp)
    sp.set_defaults(func=cmd_filter)

    sp = sub.add_parser("benchmark", help="run every dataset x fraction x seed x strategy cell")
    sp.add_argument("--config", required=True)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--output-dir")
    sp.set_defaults(func=cmd_benchmark)

    sp = sub.add_parser("eval", help="score a train/test pair, or aggregate scores/cells into a report")
    sp.add_argument("--train")
    sp.add_argument("--test")
    sp.add_argument("--schema")
    sp.add_argument("--scores", help="CSV of best scores: dataset,<strategy>,...")
    sp.add_argument("--cells", help="cells.csv from a benchmark run")
    sp.add_argument("--output-dir", help="where --cells writes its summary files")
    common(sp)
    sp.set_defaults(func=cmd_eval)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"tabshift: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (UsageError, ConfigError, SchemaError) as exc:
        print(f"tabshift: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:
        print(f"tabshift: failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
