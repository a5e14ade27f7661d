"""Conditional tabular GAN trained with WGAN-GP and training-by-sampling."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .data import ColumnKind, Dataset, Role, TableSchema
from .nn import autograd as ag
from .nn.autograd import Tensor
from .nn.mlp import AdamState, Head, Mlp, NoiseSpec, apply_step, penalty_tensor
from .transform import GmmConfig, TableTransformer, decode, encode_dataset, fit_transformer

log = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    def __init__(self, message: str, trace: list):
        super().__init__(message)
        self.trace = trace


# -- conditional vector ---------------------------------------------------------


@dataclass(frozen=True)
class CondLayout:
    """Discrete columns in schema order with their category counts and encoded offsets."""

    names: tuple[str, ...]
    sizes: tuple[int, ...]
    encoded_offsets: tuple[int, ...] = ()

    @property
    def width(self) -> int:
        return sum(self.sizes)

    @property
    def offsets(self) -> tuple[int, ...]:
        return tuple(int(x) for x in np.cumsum((0,) + self.sizes[:-1])) if self.sizes else ()

    @property
    def n_columns(self) -> int:
        return len(self.sizes)

    def encoded_positions(self) -> np.ndarray:
        """Encoded-vector column for every cond position."""
        return np.concatenate([np.arange(o, o + s) for o, s in zip(self.encoded_offsets, self.sizes)])

    def locate(self, position: int) -> tuple[int, int]:
        """Inverse of :func:`build_cond`: cond position -> (column, category)."""
        for i, (o, s) in enumerate(zip(self.offsets, self.sizes)):
            if o <= position < o + s:
                return i, position - o
        raise IndexError(f"cond position {position} out of range")

    @classmethod
    def from_transformer(cls, t: TableTransformer) -> "CondLayout":
        spans = [s for s in t.spans if s.kind is ColumnKind.CATEGORICAL]
        return cls(tuple(s.column for s in spans), tuple(s.width for s in spans), tuple(s.offset for s in spans))

    def to_dict(self) -> dict:
        return {"names": list(self.names), "sizes": list(self.sizes), "encoded_offsets": list(self.encoded_offsets)}

    @classmethod
    def from_dict(cls, d: dict) -> "CondLayout":
        return cls(tuple(d["names"]), tuple(d["sizes"]), tuple(d["encoded_offsets"]))


@dataclass(frozen=True)
class CondVector:
    vector: np.ndarray
    column: int
    category: int


def build_cond(layout: CondLayout, column: int, category: int) -> CondVector:
    if not 0 <= column < layout.n_columns:
        raise IndexError(f"column index {column} out of range for {layout.n_columns} discrete columns")
    if not 0 <= category < layout.sizes[column]:
        raise IndexError(f"category index {category} out of range for column {layout.names[column]!r}")
    v = np.zeros(layout.width)
    v[layout.offsets[column] + category] = 1.0
    return CondVector(v, column, category)


def cond_matrix(layout: CondLayout, columns: np.ndarray, categories: np.ndarray) -> np.ndarray:
    out = np.zeros((len(columns), layout.width))
    out[np.arange(len(columns)), np.asarray(layout.offsets)[columns] + categories] = 1.0
    return out


# -- training-by-sampling ------------------------------------------------------------


@dataclass(frozen=True)
class FrequencyTable:
    counts: tuple[np.ndarray, ...]

    def __post_init__(self):
        counts = tuple(np.asarray(c, dtype=np.float64) for c in self.counts)
        if any(np.any(c < 0) for c in counts):
            raise ValueError("category counts must be non-negative")
        object.__setattr__(self, "counts", counts)

    @classmethod
    def from_encoded(cls, encoded: np.ndarray, layout: CondLayout) -> "FrequencyTable":
        return cls(tuple(encoded[:, o : o + s].sum(axis=0) for o, s in zip(layout.encoded_offsets, layout.sizes)))

    def probabilities(self, column: int, rule: str = "log") -> np.ndarray:
        c = self.counts[column]
        w = np.log1p(c) if rule == "log" else c.copy()
        total = w.sum()
        if total <= 0:
            raise ValueError("column has no observed categories")
        return w / total

    def usable_columns(self) -> list[int]:
        return [i for i, c in enumerate(self.counts) if c.sum() > 0]


def sample_cond_indices(freq: FrequencyTable, n: int, rng: np.random.Generator, rule: str = "log"):
    """Column uniform over discrete columns, category by log(1 + count) (or raw count)."""
    usable = freq.usable_columns()
    if not usable:
        raise ValueError("frequency table is empty")
    cols = np.asarray(usable)[rng.integers(len(usable), size=n)]
    u = rng.random(n)
    cats = np.empty(n, dtype=np.int64)
    for c in np.unique(cols):
        sel = cols == c
        cdf = np.cumsum(freq.probabilities(c, rule))
        cats[sel] = np.minimum(np.searchsorted(cdf, u[sel], side="right"), len(cdf) - 1)
    return cols, cats


def sample_training_cond(freq: FrequencyTable, rng: np.random.Generator, layout: CondLayout | None = None) -> CondVector:
    (col,), (cat,) = sample_cond_indices(freq, 1, rng)
    layout = layout or CondLayout(tuple(str(i) for i in range(len(freq.counts))), tuple(len(c) for c in freq.counts))
    return build_cond(layout, int(col), int(cat))


class RowIndex:
    """Row ids per (discrete column, category) for matching real rows to a cond."""

    def __init__(self, encoded: np.ndarray, layout: CondLayout):
        self.rows = [
            [np.flatnonzero(encoded[:, o + k] > 0.5) for k in range(s)]
            for o, s in zip(layout.encoded_offsets, layout.sizes)
        ]

    def draw(self, columns: np.ndarray, categories: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        out = np.empty(len(columns), dtype=np.int64)
        u = rng.random(len(columns))
        for i, (c, k) in enumerate(zip(columns, categories)):
            rows = self.rows[c][k]
            if rows.size == 0:
                raise LookupError(f"no real row has category {k} in discrete column {c}")
            out[i] = rows[min(int(u[i] * rows.size), rows.size - 1)]
        return out


def draw_matching_real(encoded: np.ndarray, layout: CondLayout, cond: CondVector, rng: np.random.Generator) -> np.ndarray:
    """A uniformly drawn encoded real row whose conditioned column equals the cond category."""
    pos = layout.encoded_offsets[cond.column] + cond.category
    rows = np.flatnonzero(encoded[:, pos] > 0.5)
    if rows.size == 0:
        raise LookupError("no real row matches the condition")
    return encoded[rows[rng.integers(rows.size)]]


# -- generator loss ------------------------------------------------------------------------


def generator_ce_loss(generated, cond_batch, layout: CondLayout):
    """Mean cross-entropy between the conditioned column's soft block and its mask.

    Works on arrays (returns a float) or on Tensors (returns a Tensor).
    """
    as_tensor = isinstance(generated, Tensor)
    g = generated if as_tensor else Tensor(np.atleast_2d(np.asarray(generated, dtype=np.float64)))
    cond = np.atleast_2d(np.asarray(cond_batch, dtype=np.float64))
    pos = layout.encoded_positions()
    gathered = ag.concat([ag.cols(g, int(p), int(p) + 1) for p in pos]) if not _contiguous(pos) else ag.cols(
        g, int(pos[0]), int(pos[-1]) + 1
    )
    picked = (gathered * cond).sum(axis=1)
    loss = -ag.log(picked).mean()
    return loss if as_tensor else float(loss.value)


def _contiguous(pos: np.ndarray) -> bool:
    return bool(pos.size) and bool(np.all(np.diff(pos) == 1))


# -- model -----------------------------------------------------------------------------------


@dataclass(frozen=True)
class CtganConfig:
    epochs: int = 300
    batch_size: int = 256
    noise_dim: int = 64
    generator_dims: tuple[int, ...] = (128, 128)
    critic_dims: tuple[int, ...] = (128, 128)
    lr: float = 2e-4
    beta1: float = 0.5
    beta2: float = 0.9
    gp_lambda: float = 10.0
    n_critic: int = 1
    tau: float = 0.2
    gmm: GmmConfig = field(default_factory=GmmConfig)

    def __post_init__(self):
        object.__setattr__(self, "generator_dims", tuple(self.generator_dims))
        object.__setattr__(self, "critic_dims", tuple(self.critic_dims))
        if isinstance(self.gmm, dict):
            object.__setattr__(self, "gmm", GmmConfig(**self.gmm))
        if self.epochs < 0 or self.batch_size < 2 or self.n_critic < 1 or self.tau <= 0:
            raise ValueError("invalid CTGAN configuration")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["generator_dims"] = list(self.generator_dims)
        d["critic_dims"] = list(self.critic_dims)
        return d


def generator_heads(t: TableTransformer, tau: float) -> list[Head]:
    heads = []
    for s in t.spans:
        if s.kind is ColumnKind.CONTINUOUS:
            heads.append(Head(s.offset, s.offset + 1, "tanh"))
            heads.append(Head(s.offset + 1, s.stop, "softmax", tau))
        else:
            heads.append(Head(s.offset, s.stop, "softmax", tau))
    return heads


@dataclass
class CtganModel:
    generator: Mlp
    critic: Mlp
    transformer: TableTransformer
    layout: CondLayout
    noise: NoiseSpec
    config: CtganConfig
    seed: int
    frequencies: FrequencyTable
    loss_trace: list[tuple[float, float]] = field(default_factory=list)

    def __post_init__(self):
        if self.generator.output_dim != self.transformer.width:
            raise ValueError("generator output width must equal the encoded width")
        if self.critic.input_dim != self.transformer.width + self.layout.width:
            raise ValueError("critic input width must equal encoded width + cond width")
        if self.generator.input_dim != self.noise.dim + self.layout.width:
            raise ValueError("generator input width must equal noise dim + cond width")

    @property
    def schema(self) -> TableSchema:
        return self.transformer.schema

    def parse_condition(self, condition: tuple[str, str] | None) -> tuple[int, int] | None:
        if condition is None:
            return None
        name, label = condition
        if name not in self.layout.names:
            raise ValueError(f"{name!r} is not a categorical column")
        col = self.layout.names.index(name)
        cats = self.schema.column(name).categories
        if label not in cats:
            raise ValueError(f"{label!r} is not a category of {name!r}")
        return col, cats.index(label)


def _init_nets(t: TableTransformer, layout: CondLayout, cfg: CtganConfig, rng) -> tuple[Mlp, Mlp]:
    gen = Mlp.build(
        [cfg.noise_dim + layout.width, *cfg.generator_dims, t.width],
        rng,
        hidden_activation="leaky_relu",
        batch_norm=True,
        heads=generator_heads(t, cfg.tau),
    )
    critic = Mlp.build([t.width + layout.width, *cfg.critic_dims, 1], rng, hidden_activation="leaky_relu")
    return gen, critic


def _generate(gen: Mlp, z: np.ndarray, cond: np.ndarray, train: bool) -> Tensor:
    return gen(Tensor(np.concatenate([z, cond], axis=1)), train=train)


def train(ds: Dataset, config: CtganConfig | None = None, seed: int = 0) -> CtganModel:
    """Fit the transformer on ``ds`` and train a CTGAN on its encoding."""
    cfg = config or CtganConfig()
    if len(ds) == 0:
        raise ValueError("cannot train on an empty dataset")
    ss = np.random.SeedSequence(seed)
    fit_seed, enc_seed, train_seed = (int(s.generate_state(1)[0]) for s in ss.spawn(3))
    transformer = fit_transformer(ds, cfg.gmm, seed=fit_seed)
    encoded = encode_dataset(transformer, ds, np.random.default_rng(enc_seed))
    return train_encoded(encoded, transformer, cfg, train_seed, seed)


def train_encoded(
    encoded: np.ndarray, transformer: TableTransformer, cfg: CtganConfig, stream_seed: int, seed: int | None = None
) -> CtganModel:
    if encoded.ndim != 2 or encoded.shape[0] == 0 or encoded.shape[1] != transformer.width:
        raise ValueError("encoded data must be a non-empty (n, width) matrix")
    rng = np.random.default_rng(stream_seed)
    layout = CondLayout.from_transformer(transformer)
    if layout.n_columns == 0:
        raise ValueError("CTGAN needs at least one categorical column to condition on")
    freq = FrequencyTable.from_encoded(encoded, layout)
    index = RowIndex(encoded, layout)
    noise = NoiseSpec(cfg.noise_dim)
    gen, critic = _init_nets(transformer, layout, cfg, rng)
    g_params, c_params = gen.parameters(), critic.parameters()
    g_opt = AdamState.for_params([p.value for p in g_params], lr=cfg.lr, beta1=cfg.beta1, beta2=cfg.beta2)
    c_opt = AdamState.for_params([p.value for p in c_params], lr=cfg.lr, beta1=cfg.beta1, beta2=cfg.beta2)

    n = encoded.shape[0]
    bs = min(cfg.batch_size, max(2, n))
    steps = max(1, n // bs)
    trace: list[tuple[float, float]] = []
    for epoch in range(cfg.epochs):
        for _ in range(steps):
            for _ in range(cfg.n_critic):
                cols, cats = sample_cond_indices(freq, bs, rng)
                cond = cond_matrix(layout, cols, cats)
                real = encoded[index.draw(cols, cats, rng)]
                z = noise.draw(bs, rng)
                with ag.no_grad():
                    fake = _generate(gen, z, cond, train=True).value
                x_real = np.concatenate([real, cond], axis=1)
                x_fake = np.concatenate([fake, cond], axis=1)
                with ag.enable_grad():
                    w_dist = critic(Tensor(x_real)).mean() - critic(Tensor(x_fake)).mean()
                    gp = penalty_tensor(critic, x_real, x_fake, cfg.gp_lambda, rng.random(bs))
                    loss_c = gp - w_dist
                grads = ag.grad(loss_c, c_params)
                apply_step(c_params, grads, c_opt)

            cols, cats = sample_cond_indices(freq, bs, rng)
            cond = cond_matrix(layout, cols, cats)
            z = noise.draw(bs, rng)
            with ag.enable_grad():
                fake_t = _generate(gen, z, cond, train=True)
                score = critic(ag.concat([fake_t, Tensor(cond)]))
                loss_g = generator_ce_loss(fake_t, cond, layout) - score.mean()
            grads = ag.grad(loss_g, g_params)
            apply_step(g_params, grads, g_opt)

            step_losses = (float(loss_c.value), float(loss_g.value))
            trace.append(step_losses)
            if not all(np.isfinite(step_losses)):
                raise TrainingError(f"non-finite loss at epoch {epoch}: {step_losses}", trace)
        if epoch % 50 == 0:
            log.debug("epoch %d critic %.4f generator %.4f", epoch, *trace[-1])
    return CtganModel(gen, critic, transformer, layout, noise, cfg, seed if seed is not None else stream_seed, freq, trace)


def sample_encoded(
    model: CtganModel, n: int, condition: tuple[int, int] | None, rng: np.random.Generator, batch: int = 1024
) -> np.ndarray:
    """Hardened encoded rows drawn from the generator in eval mode."""
    if n < 1:
        raise ValueError("n must be >= 1")
    parts = []
    remaining = n
    while remaining > 0:
        k = min(batch, remaining)
        if condition is None:
            cols, cats = sample_cond_indices(model.frequencies, k, rng, rule="raw")
        else:
            cols = np.full(k, condition[0])
            cats = np.full(k, condition[1])
        cond = cond_matrix(model.layout, cols, cats)
        z = model.noise.draw(k, rng)
        with ag.no_grad():
            parts.append(harden(model.transformer, _generate(model.generator, z, cond, train=False).value))
        remaining -= k
    return np.concatenate(parts, axis=0)


def harden(t: TableTransformer, soft: np.ndarray) -> np.ndarray:
    out = soft.copy()
    for a, b in t.softmax_blocks():
        block = np.zeros((soft.shape[0], b - a))
        block[np.arange(soft.shape[0]), np.argmax(soft[:, a:b], axis=1)] = 1.0
        out[:, a:b] = block
    return out


def sample(
    model: CtganModel,
    n: int,
    condition: tuple[str, str] | None = None,
    rng: np.random.Generator | int | None = None,
) -> Dataset:
    """Generate ``n`` synthetic rows, optionally with ``condition=(column, category)`` fixed."""
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    cond = model.parse_condition(condition)
    enc = sample_encoded(model, n, cond, rng)
    return Dataset(model.schema, decode(model.transformer, enc), Role.SYNTHETIC)


def fit_and_sample(train_ds: Dataset, n: int, config: CtganConfig, seed: int) -> Dataset:
    model = train(train_ds, config, seed)
    return sample(model, n, None, np.random.default_rng([seed, 1]))


def parse_condition_string(text: str) -> tuple[str, str]:
    if "=" not in text:
        raise ValueError(f"condition must look like 'column=category', got {text!r}")
    name, _, label = text.partition("=")
    return name.strip(), label.strip()


def named_arrays(model: CtganModel) -> dict[str, np.ndarray]:
    out = {}
    for prefix, net in (("generator", model.generator), ("critic", model.critic)):
        for name, p in net.named_parameters():
            out[f"{prefix}.{name}"] = p.value
        for name, buf in net.buffers():
            out[f"{prefix}.{name}"] = buf
    return out


def rebuild(
    transformer: TableTransformer, layout: CondLayout, cfg: CtganConfig, arrays: dict[str, np.ndarray]
) -> tuple[Mlp, Mlp]:
    gen, critic = _init_nets(transformer, layout, cfg, np.random.default_rng(0))
    for prefix, net in (("generator", gen), ("critic", critic)):
        for name, p in net.named_parameters():
            key = f"{prefix}.{name}"
            if key not in arrays or arrays[key].shape != p.shape:
                raise ValueError(f"model file lacks a matching array for {key}")
            p.value = arrays[key]
        for name, _ in net.buffers():
            net.set_buffer(name, arrays[f"{prefix}.{name}"])
    return gen, critic

