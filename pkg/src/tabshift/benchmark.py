"""Benchmark harness: (dataset x fraction x seed x strategy) cells and report files."""

from __future__ import annotations

import csv
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import fields
from pathlib import Path

import numpy as np

from .config import DatasetSection, RunConfig
from .data import Dataset, Role, load_csv, load_schema, sample_fraction, split
from .pipeline import BenchmarkReport, StrategyResult, aggregate_cells, run_strategy, substream
from .synthetic import shift_dataset

log = logging.getLogger(__name__)

THREADS_ENV = "TABSHIFT_THREADS"
CELL_COLUMNS = ["dataset"] + [f.name for f in fields(StrategyResult) if f.name != "dataset"]


def thread_count() -> int:
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"{THREADS_ENV} must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise ValueError(f"{THREADS_ENV} must be a positive integer, got {raw!r}")
    return n


def load_pair(train_path, test_path, schema, policy) -> tuple[Dataset, Dataset]:
    """Load a train/test CSV pair onto one shared schema (test categories taken from train)."""
    train = load_csv(train_path, schema, policy, Role.TRAIN)
    test = load_csv(test_path, train.schema, policy, Role.TEST)
    if test.schema != train.schema:
        # the test file introduced the missing-value category; train indices stay valid
        train = Dataset(test.schema, train.values, Role.TRAIN, train.imputed)
    return train, test


def materialise(ds_cfg: DatasetSection, master_seed: int, test_fraction: float) -> tuple[Dataset, Dataset]:
    if ds_cfg.synthetic is not None:
        s = ds_cfg.synthetic
        return shift_dataset(s.n_train, s.n_test, s.shift, substream(master_seed, f"data:{ds_cfg.name}"))
    schema = load_schema(ds_cfg.schema_file)
    if ds_cfg.test_data is not None:
        return load_pair(ds_cfg.data, ds_cfg.test_data, schema, ds_cfg.missing_policy)
    full = load_csv(ds_cfg.data, schema, ds_cfg.missing_policy)
    return split(full, test_fraction, substream(master_seed, "split"))


def _run_cell(name, strategy, fraction, seed, train_full, test, cfg: RunConfig) -> StrategyResult:
    try:
        train = sample_fraction(train_full, fraction, substream(seed, f"fraction:{fraction!r}"))
        res = run_strategy(strategy, train, test, cfg.pipeline(), seed, fraction)
    except Exception as exc:  # a failing cell is recorded, the run continues
        log.warning("cell %s/%s/%s/%s failed: %s", name, strategy, fraction, seed, exc)
        nan = float("nan")
        res = StrategyResult(strategy, fraction, seed, nan, nan, nan, 0, 0, status="error", error=str(exc))
    res.dataset = name
    return res


def run_benchmark(cfg: RunConfig, threads: int | None = None) -> list[StrategyResult]:
    threads = threads or thread_count()
    jobs = []
    results: dict[int, StrategyResult] = {}
    for ds_cfg in cfg.datasets:
        try:
            train_full, test = materialise(ds_cfg, cfg.seed, cfg.test_fraction)
            test = test.sealed()
        except Exception as exc:
            log.warning("dataset %s failed to load: %s", ds_cfg.name, exc)
            nan = float("nan")
            for f in cfg.train_fractions:
                for s in cfg.seeds:
                    for strat in cfg.strategies:
                        results[len(jobs)] = StrategyResult(strat, f, s, nan, nan, nan, 0, 0, dataset=ds_cfg.name,
                                                            status="error", error=str(exc))
                        jobs.append(None)
            continue
        for f in cfg.train_fractions:
            for s in cfg.seeds:
                for strat in cfg.strategies:
                    jobs.append((ds_cfg.name, strat, f, s, train_full, test, cfg))
    todo = [(i, j) for i, j in enumerate(jobs) if j is not None]
    if threads == 1:
        for i, j in todo:
            results[i] = _run_cell(*j)
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            for (i, _), res in zip(todo, pool.map(lambda ij: _run_cell(*ij[1]), todo)):
                results[i] = res
    return [results[i] for i in range(len(jobs))]


# -- report files -------------------------------------------------------------------------


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_cells(cells: list[StrategyResult], path: Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CELL_COLUMNS)
        for c in cells:
            row = c.as_row()
            w.writerow([_fmt(row[k]) for k in CELL_COLUMNS])


def read_cells(path: Path) -> list[StrategyResult]:
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            out.append(StrategyResult(
                row["strategy"], float(row["train_fraction"]), int(row["seed"]), float(row["roc_auc"]),
                float(row["train_rate"]), float(row["test_rate"]), int(row["same_target"]), int(row["n_train"]),
                int(row["n_synthetic"]), float(row["adversarial_auc"]) if row["adversarial_auc"] else None,
                row["dataset"], row["status"], row["error"],
            ))
    return out


def summary_rows(report: BenchmarkReport) -> list[list[str]]:
    rows = [["table", "dataset", "strategy", "same_target", "value"]]
    for d, r in report.best.items():
        rows += [["best", d, s, "", _fmt(v)] for s, v in r.items()]
    for d, r in report.scaled.items():
        rows += [["scaled", d, s, "", _fmt(v)] for s, v in r.items()]
    for d, ws in report.winners.items():
        rows += [["winner", d, s, "", _fmt(1.0 / len(ws))] for s in ws]
    for s, v in report.win_counts.items():
        rows.append(["win_count", "", s, "", _fmt(v)])
    for table, src in (("scaled_mean", report.scaled_mean), ("scaled_std", report.scaled_std),
                       ("cell_mean", report.cell_mean), ("cell_std", report.cell_std)):
        rows += [[table, "", s, "", _fmt(v)] for s, v in src.items()]
    for s, groups in report.same_target_means.items():
        rows += [["same_target_mean", "", s, str(flag), _fmt(v)] for flag, v in sorted(groups.items())]
    for d, msg in report.errors.items():
        rows.append(["error", d, "", "", msg])
    return rows


def summary_text(report: BenchmarkReport) -> str:
    strategies = list(report.win_counts)
    width = max([len("dataset")] + [len(d) for d in report.best] + [len(d) for d in report.errors]) + 2
    lines = ["Best ROC AUC per dataset (winner marked *)", ""]
    lines.append("dataset".ljust(width) + "".join(s.rjust(18) for s in strategies))
    for d, r in report.best.items():
        cells = "".join((f"{r[s]:.4f}" + ("*" if s in report.winners[d] else " ")).rjust(18) for s in strategies)
        lines.append(d.ljust(width) + cells)
    lines += ["", "Winner counts: " + ", ".join(f"{s}={report.win_counts[s]:g}" for s in strategies), ""]
    lines.append("Min-max scaled scores across datasets")
    lines.append("strategy".ljust(18) + "mean".rjust(10) + "std".rjust(10))
    for s in strategies:
        lines.append(s.ljust(18) + f"{report.scaled_mean[s]:.4f}".rjust(10) + f"{report.scaled_std[s]:.4f}".rjust(10))
    lines += ["", "ROC AUC over all cells"]
    lines.append("strategy".ljust(18) + "mean".rjust(10) + "std".rjust(10))
    for s in strategies:
        lines.append(s.ljust(18) + f"{report.cell_mean.get(s, np.nan):.4f}".rjust(10)
                     + f"{report.cell_std.get(s, np.nan):.4f}".rjust(10))
    lines += ["", "Mean ROC AUC by same-target flag (|train rate - test rate| <= 0.05)"]
    lines.append("strategy".ljust(18) + "same_target".rjust(12) + "mean".rjust(10))
    for s in strategies:
        for flag, v in sorted(report.same_target_means.get(s, {}).items()):
            lines.append(s.ljust(18) + str(flag).rjust(12) + f"{v:.4f}".rjust(10))
    if report.errors:
        lines += ["", "Errors"]
        lines += [f"{d}: {msg}" for d, msg in report.errors.items()]
    return "\n".join(lines) + "\n"


def write_reports(cells: list[StrategyResult], out_dir: Path, strategies=None) -> BenchmarkReport:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_cells(cells, out_dir / "cells.csv")
    report = aggregate_cells(cells, strategies)
    with open(out_dir / "summary.csv", "w", newline="", encoding="utf-8") as fh:
        csv.writer(fh, lineterminator="\n").writerows(summary_rows(report))
    (out_dir / "summary.txt").write_text(summary_text(report), encoding="utf-8")
    return report
