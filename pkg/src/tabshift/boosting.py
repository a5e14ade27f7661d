"""Downstream learner: smoothed target encoding, logistic GBDT and ROC AUC."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.stats import rankdata

from .data import Dataset


def roc_auc(scores, labels) -> float:
    """P(random positive outscores random negative), ties counted 1/2 (Mann-Whitney U)."""
    s = np.asarray(scores, dtype=np.float64).reshape(-1)
    y = np.asarray(labels).reshape(-1)
    if s.shape != y.shape:
        raise ValueError("scores and labels must have the same length")
    pos = y == 1
    n_pos = int(pos.sum())
    n_neg = len(y) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("ROC AUC needs both classes present")
    ranks = rankdata(s)  # average ranks for ties
    u = ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


@dataclass(frozen=True)
class EvalScore:
    roc_auc: float
    n_pos: int
    n_neg: int

    @classmethod
    def compute(cls, scores, labels) -> "EvalScore":
        y = np.asarray(labels)
        return cls(roc_auc(scores, y), int((y == 1).sum()), int((y != 1).sum()))


# -- target encoding ---------------------------------------------------------------


@dataclass(frozen=True)
class TargetEncoder:
    """Category -> (sum(y) + prior * global_rate) / (count + prior), per categorical column."""

    columns: tuple[int, ...]
    tables: tuple[np.ndarray, ...]
    global_rate: float
    prior: float = 10.0

    def transform(self, x: np.ndarray) -> np.ndarray:
        out = np.array(x, dtype=np.float64, copy=True)
        for j, table in zip(self.columns, self.tables):
            idx = out[:, j].astype(np.int64)
            seen = (idx >= 0) & (idx < len(table))
            col = np.full(len(idx), self.global_rate)
            col[seen] = table[idx[seen]]
            out[:, j] = col
        return out


def fit_target_encoder(
    x: np.ndarray, labels, categorical: list[int], n_categories: list[int], prior: float = 10.0
) -> TargetEncoder:
    """Fit on a feature matrix whose ``categorical`` columns hold category indices."""
    y = np.asarray(labels, dtype=np.float64)
    if len(y) == 0:
        raise ValueError("cannot fit a target encoder on empty data")
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("labels must be binary")
    rate = float(y.mean())
    tables = []
    for j, k in zip(categorical, n_categories):
        idx = np.asarray(x[:, j], dtype=np.int64)
        sums = np.bincount(idx, weights=y, minlength=k)
        counts = np.bincount(idx, minlength=k).astype(np.float64)
        denom = counts + prior
        with np.errstate(invalid="ignore", divide="ignore"):
            enc = np.where(denom > 0, (sums + prior * rate) / np.where(denom > 0, denom, 1.0), rate)
        tables.append(enc)
    return TargetEncoder(tuple(categorical), tuple(tables), rate, prior)


def fit_dataset_encoder(train: Dataset, labels, prior: float = 10.0) -> TargetEncoder:
    """Target encoder over the non-target categorical columns of ``train.features()``."""
    cols = [train.schema.columns[j] for j in train.feature_columns()]
    cat = [i for i, c in enumerate(cols) if c.is_categorical]
    return fit_target_encoder(train.features(), labels, cat, [len(cols[i].categories) for i in cat], prior)


# -- gradient boosting ---------------------------------------------------------------


@dataclass(frozen=True)
class GbdtParams:
    trees: int = 200
    depth: int = 3
    lr: float = 0.1
    min_leaf: int = 5
    max_bins: int = 255


@dataclass
class Tree:
    feature: np.ndarray  # -1 marks a leaf
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    def apply(self, x: np.ndarray) -> np.ndarray:
        node = np.zeros(x.shape[0], dtype=np.int64)
        for _ in range(64):
            f = self.feature[node]
            inner = f >= 0
            if not inner.any():
                break
            rows = np.flatnonzero(inner)
            go_left = x[rows, f[rows]] <= self.threshold[node[rows]]
            node[rows] = np.where(go_left, self.left[node[rows]], self.right[node[rows]])
        return node

    def predict(self, x: np.ndarray) -> np.ndarray:
        return self.value[self.apply(x)]

    def to_dict(self) -> dict:
        return {k: getattr(self, k).tolist() for k in ("feature", "threshold", "left", "right", "value")}

    @classmethod
    def from_dict(cls, d: dict) -> "Tree":
        return cls(
            np.array(d["feature"], dtype=np.int64),
            np.array(d["threshold"], dtype=np.float64),
            np.array(d["left"], dtype=np.int64),
            np.array(d["right"], dtype=np.int64),
            np.array(d["value"], dtype=np.float64),
        )


@dataclass
class GbdtModel:
    trees: list[Tree]
    lr: float
    init_score: float
    n_features: int
    depth: int = 3
    train_loss: list[float] = field(default_factory=list)

    def raw_score(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.n_features:
            raise ValueError(f"expected {self.n_features} features, got shape {x.shape}")
        out = np.full(x.shape[0], self.init_score)
        for t in self.trees:
            out += self.lr * t.predict(x)
        return out

    def to_dict(self) -> dict:
        return {"lr": self.lr, "init_score": self.init_score, "n_features": self.n_features,
                "depth": self.depth, "trees": [t.to_dict() for t in self.trees]}

    @classmethod
    def from_dict(cls, d: dict) -> "GbdtModel":
        return cls([Tree.from_dict(t) for t in d["trees"]], d["lr"], d["init_score"], d["n_features"], d["depth"])


def sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(z, dtype=np.float64)))


def predict_proba(model: GbdtModel, features) -> np.ndarray:
    return sigmoid(model.raw_score(features))


def logistic_loss(raw: np.ndarray, y: np.ndarray) -> float:
    return float(np.mean(np.logaddexp(0.0, raw) - y * raw))


def _bin_edges(col: np.ndarray, max_bins: int) -> np.ndarray:
    """Split thresholds: midpoints between distinct values, thinned to quantiles if too many."""
    u = np.unique(col)
    mids = (u[:-1] + u[1:]) / 2.0
    if len(mids) > max_bins:
        q = np.linspace(0, 1, max_bins + 2)[1:-1]
        mids = np.unique(np.quantile(mids, q, method="nearest"))
    return mids


def _leaf_value(r: np.ndarray, h: np.ndarray, lr: float) -> float:
    # Newton step sum(r)/sum(h); the curvature floor n*lr/4 keeps every damped
    # step inside the region where the logistic loss (curvature <= 1/4) decreases.
    return float(r.sum() / max(h.sum(), 0.25 * lr * len(r)))


def _grow(binned, edges, residual, hess, rows, depth, params, nodes):
    """Append a subtree for ``rows`` to ``nodes``; returns its node id."""
    nid = len(nodes)
    nodes.append([-1, 0.0, -1, -1, _leaf_value(residual[rows], hess[rows], params.lr)])
    if depth == 0 or len(rows) < 2 * params.min_leaf:
        return nid
    r = residual[rows]
    total, n = r.sum(), len(rows)
    best_gain, best = 1e-12 * max(1.0, float((r * r).sum())), None
    for f, e in enumerate(edges):
        if len(e) == 0:
            continue
        b = binned[rows, f]
        nb = len(e) + 1
        s = np.bincount(b, weights=r, minlength=nb).cumsum()[:-1]
        c = np.bincount(b, minlength=nb).cumsum()[:-1]
        ok = (c >= params.min_leaf) & (n - c >= params.min_leaf)
        if not ok.any():
            continue
        cl = np.where(ok, c, 1)
        cr = np.where(ok, n - c, 1)
        gain = np.where(ok, s * s / cl + (total - s) ** 2 / cr - total * total / n, -np.inf)
        k = int(np.argmax(gain))
        if gain[k] > best_gain:
            best_gain, best = gain[k], (f, k)
    if best is None:
        return nid
    f, k = best
    go_left = binned[rows, f] <= k
    nodes[nid][0], nodes[nid][1] = f, float(edges[f][k])
    nodes[nid][2] = _grow(binned, edges, residual, hess, rows[go_left], depth - 1, params, nodes)
    nodes[nid][3] = _grow(binned, edges, residual, hess, rows[~go_left], depth - 1, params, nodes)
    return nid


def fit_gbdt(features, labels, params: GbdtParams | None = None) -> GbdtModel:
    """Logistic-loss gradient boosting.

    Each tree's splits are a least-squares fit to the residuals ``y - p`` (the
    negative gradient); leaves take a curvature-floored Newton step, so the
    training loss never increases from one round to the next.
    """
    p = params or GbdtParams()
    x = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64).reshape(-1)
    if x.ndim != 2 or x.shape[0] != len(y):
        raise ValueError("features must be (n, d) and aligned with labels")
    if len(y) < 2:
        raise ValueError("need at least 2 rows")
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("labels must be binary")
    rate = y.mean()
    if rate in (0.0, 1.0):
        raise ValueError("labels contain a single class")
    init = float(np.log(rate / (1 - rate)))
    edges = [_bin_edges(x[:, j], p.max_bins) for j in range(x.shape[1])]
    binned = np.stack([np.searchsorted(e, x[:, j], side="left") for j, e in enumerate(edges)], axis=1) \
        if x.shape[1] else np.zeros((len(y), 0), dtype=np.int64)
    raw = np.full(len(y), init)
    model = GbdtModel([], p.lr, init, x.shape[1], p.depth, [logistic_loss(raw, y)])
    all_rows = np.arange(len(y))
    for _ in range(p.trees):
        prob = sigmoid(raw)
        residual = y - prob
        nodes: list = []
        _grow(binned, edges, residual, prob * (1 - prob), all_rows, p.depth, p, nodes)
        arr = np.array(nodes, dtype=object)
        tree = Tree(arr[:, 0].astype(np.int64), arr[:, 1].astype(np.float64), arr[:, 2].astype(np.int64),
                    arr[:, 3].astype(np.int64), arr[:, 4].astype(np.float64))
        model.trees.append(tree)
        raw = raw + p.lr * tree.predict(x)
        model.train_loss.append(logistic_loss(raw, y))
    return model


# -- dataset-level helpers ---------------------------------------------------------------


@dataclass
class Classifier:
    """Target encoder + GBDT over the non-target columns of a dataset."""

    encoder: TargetEncoder
    model: GbdtModel

    def predict_proba(self, ds: Dataset) -> np.ndarray:
        return predict_proba(self.model, self.encoder.transform(ds.features()))


def fit_classifier(ds: Dataset, labels, params: GbdtParams | None = None, prior: float = 10.0) -> Classifier:
    enc = fit_dataset_encoder(ds, labels, prior)
    return Classifier(enc, fit_gbdt(enc.transform(ds.features()), labels, params))
