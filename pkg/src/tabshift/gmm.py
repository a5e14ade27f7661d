"""One-dimensional Gaussian mixtures fitted by EM, with mode-count selection."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

LOG_SQRT_2PI = 0.5 * np.log(2.0 * np.pi)


def logsumexp(a: np.ndarray, axis: int, keepdims: bool = False) -> np.ndarray:
    m = np.max(a, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    out = np.log(np.sum(np.exp(a - m), axis=axis, keepdims=True)) + m
    return out if keepdims else np.squeeze(out, axis=axis)


@dataclass(frozen=True)
class GaussianMixtureModel:
    weights: np.ndarray
    means: np.ndarray
    stds: np.ndarray
    trace: tuple[float, ...] = field(default=(), compare=False, repr=False)

    def __post_init__(self):
        for name in ("weights", "means", "stds"):
            arr = np.array(getattr(self, name), dtype=np.float64).reshape(-1)
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)
        m = len(self.weights)
        if m < 1 or len(self.means) != m or len(self.stds) != m:
            raise ValueError("weights, means and stds must share a length >= 1")
        if np.any(self.stds <= 0) or np.any(self.weights < 0):
            raise ValueError("stds must be positive and weights non-negative")
        if abs(self.weights.sum() - 1.0) > 1e-9:
            raise ValueError("weights must sum to 1")

    @property
    def n_modes(self) -> int:
        return len(self.weights)

    def to_dict(self) -> dict:
        return {"weights": self.weights.tolist(), "means": self.means.tolist(), "stds": self.stds.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "GaussianMixtureModel":
        return cls(np.array(d["weights"]), np.array(d["means"]), np.array(d["stds"]))


def _log_joint(g: GaussianMixtureModel, x: np.ndarray) -> np.ndarray:
    """log(pi_k) + log N(x; mu_k, sigma_k), shape (n, m)."""
    z = (x[:, None] - g.means[None, :]) / g.stds[None, :]
    with np.errstate(divide="ignore"):
        logw = np.log(g.weights)
    return logw[None, :] - np.log(g.stds)[None, :] - LOG_SQRT_2PI - 0.5 * z * z


def responsibilities(g: GaussianMixtureModel, c) -> np.ndarray:
    """Posterior mode probabilities for a value (or an array of values)."""
    x = np.atleast_1d(np.asarray(c, dtype=np.float64))
    lj = _log_joint(g, x)
    r = np.exp(lj - logsumexp(lj, axis=1, keepdims=True))
    return r[0] if np.ndim(c) == 0 else r


def log_likelihood(g: GaussianMixtureModel, values) -> float:
    x = np.asarray(values, dtype=np.float64).reshape(-1)
    if x.size == 0:
        return 0.0
    return float(logsumexp(_log_joint(g, x), axis=1).sum())


def sigma_floor(values: np.ndarray) -> float:
    span = float(np.ptp(values)) if values.size else 0.0
    if span == 0.0:
        span = max(abs(float(values[0])), 1.0) if values.size else 1.0
    return 1e-4 * span


def _kmeanspp(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    centers = [x[rng.integers(len(x))]]
    d2 = (x - centers[0]) ** 2
    for _ in range(1, k):
        total = d2.sum()
        if total <= 0:
            break
        nxt = x[rng.choice(len(x), p=d2 / total)]
        centers.append(nxt)
        d2 = np.minimum(d2, (x - nxt) ** 2)
    return np.sort(np.array(centers))


def _em(x, init: GaussianMixtureModel, floor, tol, max_iter) -> GaussianMixtureModel:
    w, mu, sd = init.weights.copy(), init.means.copy(), init.stds.copy()
    n = len(x)
    g = GaussianMixtureModel(w, mu, sd)
    lj = _log_joint(g, x)
    ll = float(logsumexp(lj, axis=1).sum())
    trace = [ll]
    for _ in range(max_iter):
        r = np.exp(lj - logsumexp(lj, axis=1, keepdims=True))
        nk = r.sum(axis=0)
        # zero-support components contribute nothing to the likelihood
        keep = nk > 1e-10 * n
        r, nk = r[:, keep], nk[keep]
        mu = (r * x[:, None]).sum(axis=0) / nk
        var = (r * (x[:, None] - mu[None, :]) ** 2).sum(axis=0) / nk
        sd = np.maximum(np.sqrt(var), floor)
        w = nk / nk.sum()
        g = GaussianMixtureModel(w, mu, sd)
        lj = _log_joint(g, x)
        new_ll = float(logsumexp(lj, axis=1).sum())
        trace.append(new_ll)
        if abs(new_ll - ll) <= tol * n:
            break
        ll = new_ll
    return GaussianMixtureModel(g.weights, g.means, g.stds, tuple(trace))


def _init(x, k, floor, rng) -> GaussianMixtureModel:
    centers = _kmeanspp(x, k, rng)
    assign = np.argmin(np.abs(x[:, None] - centers[None, :]), axis=1)
    ws, mus, sds = [], [], []
    for j in range(len(centers)):
        pts = x[assign == j]
        if pts.size == 0:
            continue
        ws.append(pts.size / len(x))
        mus.append(pts.mean())
        sds.append(max(pts.std(), floor))
    return GaussianMixtureModel(np.array(ws), np.array(mus), np.array(sds))


def _bic(g: GaussianMixtureModel, ll: float, n: int) -> float:
    return -2.0 * ll + (3 * g.n_modes - 1) * np.log(n)


def fit_em(
    values,
    m_max: int = 10,
    tol: float = 1e-6,
    max_iter: int = 300,
    prune_weight: float = 0.005,
    seed: int = 0,
    select: str = "bic",
) -> GaussianMixtureModel:
    """Fit a 1-D mixture and estimate its number of modes.

    With ``select="bic"`` every size 1..m_max is fitted by EM from a k-means++
    start and the lowest-BIC fit is kept; ``select="none"`` fits exactly
    ``m_max`` components. Components lighter than ``prune_weight`` are then
    dropped and the remaining weights renormalised. The returned model's
    ``trace`` is the per-iteration log-likelihood of the selected EM run.
    """
    x = np.asarray(values, dtype=np.float64).reshape(-1)
    if x.size == 0:
        raise ValueError("fit_em needs at least one value")
    if not np.all(np.isfinite(x)):
        raise ValueError("fit_em values must be finite")
    if m_max < 1:
        raise ValueError("m_max must be >= 1")
    if select not in ("bic", "none"):
        raise ValueError(f"unknown selection rule {select!r}")
    floor = sigma_floor(x)
    if np.ptp(x) == 0.0:
        return GaussianMixtureModel([1.0], [x[0]], [floor])

    rng = np.random.default_rng(seed)
    n_distinct = len(np.unique(x))
    sizes = range(1, min(m_max, n_distinct) + 1) if select == "bic" else [min(m_max, n_distinct)]
    best, best_bic = None, np.inf
    for k in sizes:
        g = _em(x, _init(x, k, floor, rng), floor, tol, max_iter)
        bic = _bic(g, g.trace[-1], len(x))
        if bic < best_bic:
            best, best_bic = g, bic
    return prune(best, prune_weight)


def prune(g: GaussianMixtureModel, prune_weight: float) -> GaussianMixtureModel:
    keep = g.weights >= prune_weight
    if not keep.any():
        keep = g.weights == g.weights.max()
    w = g.weights[keep]
    return GaussianMixtureModel(w / w.sum(), g.means[keep], g.stds[keep], g.trace)
