"""Adversarial-filtering experiment: GAN augmentation, filtering, strategy comparison."""

from __future__ import annotations

import enum
import logging
import zlib
from dataclasses import asdict, dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import ctgan
from .boosting import GbdtParams, fit_classifier, roc_auc
from .data import Dataset, Role, SchemaError, concat, same_target, target_rate

log = logging.getLogger(__name__)

FINAL_SCORER = "final_scorer"


class Strategy(str, enum.Enum):
    NONE = "none"
    GAN = "gan"
    SAMPLE_ORIGINAL = "sample_original"


STRATEGIES = tuple(Strategy)


def substream(seed: int, name: str) -> int:
    """Independent integer seed for the named component of a run."""
    ss = np.random.SeedSequence([int(seed), zlib.crc32(name.encode())])
    return int(ss.generate_state(1)[0])


# -- adversarial filtering ----------------------------------------------------------


@dataclass(frozen=True)
class FilterConfig:
    keep_n: int | None = None  # None keeps as many rows as the real training set
    gbdt: GbdtParams = field(default_factory=lambda: GbdtParams(trees=100, depth=3))
    folds: int = 4
    prior: float = 10.0
    seed: int = 0


@dataclass
class FilterResult:
    dataset: Dataset
    indices: np.ndarray  # selected pool rows, most test-like first
    scores: np.ndarray  # out-of-fold P(test) for every pool row
    adversarial_auc: float  # pool-vs-test separability on held-out folds


def _folds(labels: np.ndarray, groups: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """Fold id per row, stratified by label; rows sharing a group share a fold."""
    fold = np.empty(len(labels), dtype=np.int64)
    for lab in (0, 1):
        sel = np.flatnonzero(labels == lab)
        uniq = np.unique(groups[sel])
        perm = rng.permutation(len(uniq))
        gfold = dict(zip(uniq[perm].tolist(), (np.arange(len(uniq)) % k).tolist()))
        fold[sel] = [gfold[g] for g in groups[sel].tolist()]
    return fold


def adversarial_scores(pool: Dataset, test: Dataset, cfg: FilterConfig, groups=None) -> tuple[np.ndarray, float]:
    """Out-of-fold probability that each pool row belongs to the test set.

    Only non-target columns are used; the pool's and test set's ground-truth
    labels are never read here.
    """
    if pool.schema != test.schema:
        raise SchemaError("pool and test must share a schema")
    x = np.concatenate([pool.features(), test.features()], axis=0)
    adv = np.concatenate([np.zeros(len(pool), dtype=np.int64), np.ones(len(test), dtype=np.int64)])
    g_pool = np.arange(len(pool)) if groups is None else np.asarray(groups)
    grp = np.concatenate([g_pool, g_pool.max(initial=-1) + 1 + np.arange(len(test))])
    k = max(2, min(cfg.folds, len(pool), len(test)))
    fold = _folds(adv, grp, k, np.random.default_rng(cfg.seed))
    view = Dataset(pool.schema, np.zeros((0, pool.schema.width)))
    oof = np.empty(len(adv))
    for f in range(k):
        tr, te = fold != f, fold == f
        if len(np.unique(adv[tr])) < 2:
            oof[te] = adv[tr].mean()
            continue
        clf = _fit_features(view, x[tr], adv[tr], cfg)
        oof[te] = clf(x[te])
    auc = roc_auc(oof, adv)
    return oof[: len(pool)], auc


def _fit_features(view: Dataset, x: np.ndarray, y: np.ndarray, cfg: FilterConfig):
    from .boosting import fit_gbdt, fit_target_encoder, predict_proba

    cols = [view.schema.columns[j] for j in view.feature_columns()]
    cat = [i for i, c in enumerate(cols) if c.is_categorical]
    enc = fit_target_encoder(x, y, cat, [len(cols[i].categories) for i in cat], cfg.prior)
    model = fit_gbdt(enc.transform(x), y, cfg.gbdt)
    return lambda z: predict_proba(model, enc.transform(z))


def filter_pool(pool: Dataset, test: Dataset, cfg: FilterConfig, keep_n: int | None = None, groups=None) -> FilterResult:
    keep = cfg.keep_n if keep_n is None else keep_n
    keep = len(pool) if keep is None else keep
    if not 1 <= keep <= len(pool):
        raise ValueError(f"keep_n={keep} must lie in [1, {len(pool)}]")
    scores, auc = adversarial_scores(pool, test, cfg, groups)
    order = np.argsort(-scores, kind="stable")[:keep]
    return FilterResult(pool.take(order), order, scores, auc)


def adversarial_filter(pool: Dataset, test: Dataset, cfg: FilterConfig) -> Dataset:
    """Top ``keep_n`` pool rows by predicted test-likeness, with their own labels."""
    return filter_pool(pool, test, cfg).dataset


# -- strategies --------------------------------------------------------------------------


@dataclass(frozen=True)
class PipelineConfig:
    gan: ctgan.CtganConfig = field(default_factory=ctgan.CtganConfig)
    gbdt: GbdtParams = field(default_factory=GbdtParams)
    filter: FilterConfig = field(default_factory=FilterConfig)
    synth_size: int | None = None  # None: |T_train|
    resample_original: bool = False  # True: pool = T_train plus a bootstrap resample of it
    prior: float = 10.0


@dataclass
class StrategyResult:
    strategy: str
    train_fraction: float
    seed: int
    roc_auc: float
    train_rate: float
    test_rate: float
    same_target: int
    n_train: int
    n_synthetic: int = 0
    adversarial_auc: float | None = None
    dataset: str = ""
    status: str = "ok"
    error: str = ""

    def as_row(self) -> dict:
        return asdict(self)


def final_score(train_rows: Dataset, test: Dataset, cfg: PipelineConfig) -> tuple[float, float]:
    """Train the evaluator on ``train_rows`` and score it on ``test``; the only reader of test labels."""
    clf = fit_classifier(train_rows, train_rows.labels(), cfg.gbdt, cfg.prior)
    proba = clf.predict_proba(test)
    with test.reading_labels(FINAL_SCORER):
        y = test.labels()
    return roc_auc(proba, y), float(y.mean())


def run_strategy(
    strategy: Strategy | str,
    train: Dataset,
    test: Dataset,
    config: PipelineConfig | None = None,
    seed: int = 0,
    train_fraction: float = 1.0,
    synthetic: Dataset | None = None,
) -> StrategyResult:
    """Run one cell. ``synthetic`` may supply a pre-generated T_synth for the gan strategy."""
    cfg = config or PipelineConfig()
    strategy = Strategy(strategy)
    if train.schema != test.schema:
        raise SchemaError("train and test must share a schema")
    if not test.is_sealed:
        test = test.sealed()
    fcfg = FilterConfig(cfg.filter.keep_n, cfg.filter.gbdt, cfg.filter.folds, cfg.filter.prior,
                        substream(seed, "filter"))
    keep_n = fcfg.keep_n or len(train)
    n_synth, adv_auc = 0, None
    if strategy is Strategy.NONE:
        rows = train
    elif strategy is Strategy.GAN:
        if synthetic is None:
            size = cfg.synth_size or len(train)
            synthetic = ctgan.fit_and_sample(train, size, cfg.gan, substream(seed, "gan"))
        pool = concat([train.with_role(Role.TRAIN), synthetic.with_role(Role.TRAIN)])
        res = filter_pool(pool, test, fcfg, keep_n)
        rows, adv_auc = res.dataset, res.adversarial_auc
        n_synth = int((res.indices >= len(train)).sum())
    else:
        if cfg.resample_original:
            size = cfg.synth_size or len(train)
            extra = np.random.default_rng(substream(seed, "resample")).integers(len(train), size=size)
            src = np.concatenate([np.arange(len(train)), extra])
        else:
            src = np.arange(len(train))
        res = filter_pool(train.take(src), test, fcfg, keep_n, groups=src)
        rows, adv_auc = res.dataset, res.adversarial_auc
    auc, test_rate = final_score(rows, test, cfg)
    tr_rate = target_rate(rows)
    return StrategyResult(
        strategy.value, train_fraction, seed, auc, tr_rate, test_rate, same_target(tr_rate, test_rate),
        len(rows), n_synth, adv_auc,
    )


# -- aggregation ---------------------------------------------------------------------------


@dataclass
class BenchmarkReport:
    best: dict[str, dict[str, float]]
    winners: dict[str, list[str]]
    win_counts: dict[str, float]
    scaled: dict[str, dict[str, float]]
    scaled_mean: dict[str, float]
    scaled_std: dict[str, float]
    cell_mean: dict[str, float] = field(default_factory=dict)
    cell_std: dict[str, float] = field(default_factory=dict)
    same_target_means: dict[str, dict[int, float]] = field(default_factory=dict)
    errors: dict[str, str] = field(default_factory=dict)


def aggregate(
    best: Mapping[str, Mapping[str, float]],
    strategies: Sequence[str] = tuple(s.value for s in STRATEGIES),
) -> BenchmarkReport:
    """Min-max scale each dataset's strategy scores, count winners, average across datasets.

    A dataset whose scores are all equal scales to 1.0 everywhere; tied winners
    share the win fractionally.
    """
    if not best:
        raise ValueError("aggregate needs at least one dataset")
    scaled: dict[str, dict[str, float]] = {}
    winners: dict[str, list[str]] = {}
    counts = {s: 0.0 for s in strategies}
    for name, row in best.items():
        missing = [s for s in strategies if s not in row]
        if missing:
            raise ValueError(f"dataset {name!r} lacks scores for {missing}")
        vals = np.array([row[s] for s in strategies], dtype=np.float64)
        lo, hi = vals.min(), vals.max()
        scaled[name] = {s: (1.0 if hi == lo else float((row[s] - lo) / (hi - lo))) for s in strategies}
        winners[name] = [s for s in strategies if row[s] == hi]
        for s in winners[name]:
            counts[s] += 1.0 / len(winners[name])
    mat = np.array([[scaled[d][s] for s in strategies] for d in scaled])
    return BenchmarkReport(
        {d: {s: float(best[d][s]) for s in strategies} for d in best},
        winners,
        counts,
        scaled,
        {s: float(mat[:, i].mean()) for i, s in enumerate(strategies)},
        {s: float(mat[:, i].std()) for i, s in enumerate(strategies)},
    )


def aggregate_cells(cells: Iterable[StrategyResult], strategies: Sequence[str] | None = None) -> BenchmarkReport:
    """Report over benchmark cells: best score per (dataset, strategy), plus cell-level statistics."""
    cells = list(cells)
    strategies = list(strategies or [s.value for s in STRATEGIES])
    ok = [c for c in cells if c.status == "ok"]
    errors = {}
    for c in cells:
        if c.status != "ok":
            errors.setdefault(c.dataset, c.error)
    best: dict[str, dict[str, float]] = {}
    for c in ok:
        if c.dataset in errors:
            continue
        row = best.setdefault(c.dataset, {})
        row[c.strategy] = max(row.get(c.strategy, -np.inf), c.roc_auc)
    complete = {d: r for d, r in best.items() if all(s in r for s in strategies)}
    for d in best:
        if d not in complete:
            errors.setdefault(d, "incomplete strategy cells")
    if complete:
        report = aggregate(complete, strategies)
    else:
        empty = {s: float("nan") for s in strategies}
        report = BenchmarkReport({}, {}, {s: 0.0 for s in strategies}, {}, dict(empty), dict(empty))
    report.errors = errors
    kept = [c for c in ok if c.dataset in complete]
    for s in strategies:
        scores = np.array([c.roc_auc for c in kept if c.strategy == s])
        report.cell_mean[s] = float(scores.mean()) if scores.size else float("nan")
        report.cell_std[s] = float(scores.std()) if scores.size else float("nan")
        groups = {}
        for flag in (0, 1):
            vals = [c.roc_auc for c in kept if c.strategy == s and c.same_target == flag]
            if vals:
                groups[flag] = float(np.mean(vals))
        report.same_target_means[s] = groups
    return report
