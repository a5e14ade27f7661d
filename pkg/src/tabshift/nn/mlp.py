"""Dense MLPs, batch-norm, Adam and the WGAN gradient penalty (float64 throughout)."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import autograd as ag
from .autograd import Tensor

ACTIVATIONS = ("leaky_relu", "tanh", "softmax", "identity")


@dataclass(frozen=True)
class NoiseSpec:
    dim: int

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("noise dimension must be >= 1")

    def draw(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return rng.standard_normal((n, self.dim))


@dataclass
class BatchNorm:
    gamma: Tensor
    beta: Tensor
    running_mean: np.ndarray
    running_var: np.ndarray
    momentum: float = 0.1
    eps: float = 1e-5

    @classmethod
    def create(cls, width: int) -> "BatchNorm":
        return cls(
            Tensor(np.ones(width), requires_grad=True),
            Tensor(np.zeros(width), requires_grad=True),
            np.zeros(width),
            np.ones(width),
        )

    def __call__(self, x: Tensor, train: bool) -> Tensor:
        if train:
            if x.shape[0] < 2:
                raise ValueError("batch-norm in train mode needs at least 2 rows")
            mu = x.mean(axis=0, keepdims=True)
            centred = x - mu
            var = (centred * centred).mean(axis=0, keepdims=True)
            n = x.shape[0]
            m = self.momentum
            self.running_mean = (1 - m) * self.running_mean + m * mu.value[0]
            self.running_var = (1 - m) * self.running_var + m * var.value[0] * n / (n - 1)
            xhat = centred / ag.sqrt(var + self.eps)
        else:
            xhat = (x - self.running_mean) * (1.0 / np.sqrt(self.running_var + self.eps))
        return xhat * self.gamma + self.beta


@dataclass(frozen=True)
class Head:
    """Activation applied to the output columns ``[start, stop)``."""

    start: int
    stop: int
    activation: str
    temperature: float = 1.0


@dataclass
class Layer:
    weight: Tensor
    bias: Tensor
    activation: str = "identity"
    batch_norm: BatchNorm | None = None
    heads: tuple[Head, ...] = ()
    slope: float = 0.2
    temperature: float = 1.0

    def __post_init__(self):
        if self.activation not in ACTIVATIONS and self.activation != "heads":
            raise ValueError(f"unknown activation {self.activation!r}")


def _activate(z: Tensor, kind: str, slope: float, temperature: float) -> Tensor:
    if kind == "leaky_relu":
        return ag.leaky_relu(z, slope)
    if kind == "tanh":
        return ag.tanh(z)
    if kind == "softmax":
        return ag.softmax(z, temperature)
    return z


def glorot(fan_in: int, fan_out: int, rng: np.random.Generator) -> np.ndarray:
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=(fan_in, fan_out))


@dataclass
class Mlp:
    layers: list[Layer]

    def __post_init__(self):
        for a, b in zip(self.layers, self.layers[1:]):
            if a.weight.shape[1] != b.weight.shape[0]:
                raise ValueError("adjacent layer dimensions do not match")
        for layer in self.layers[:-1]:
            if layer.activation in ("softmax", "heads"):
                raise ValueError("softmax blocks are only allowed at the output layer")

    @classmethod
    def build(
        cls,
        sizes: Sequence[int],
        rng: np.random.Generator,
        hidden_activation: str = "leaky_relu",
        output_activation: str = "identity",
        batch_norm: bool = False,
        heads: Sequence[Head] = (),
        slope: float = 0.2,
    ) -> "Mlp":
        layers = []
        last = len(sizes) - 2
        for i, (fi, fo) in enumerate(zip(sizes, sizes[1:])):
            out = i == last
            layers.append(
                Layer(
                    Tensor(glorot(fi, fo, rng), requires_grad=True),
                    Tensor(np.zeros(fo), requires_grad=True),
                    ("heads" if heads else output_activation) if out else hidden_activation,
                    None if (out or not batch_norm) else BatchNorm.create(fo),
                    tuple(heads) if out else (),
                    slope,
                )
            )
        return cls(layers)

    @property
    def input_dim(self) -> int:
        return self.layers[0].weight.shape[0]

    @property
    def output_dim(self) -> int:
        return self.layers[-1].weight.shape[1]

    @property
    def has_batch_norm(self) -> bool:
        return any(layer.batch_norm is not None for layer in self.layers)

    def named_parameters(self) -> list[tuple[str, Tensor]]:
        out = []
        for i, layer in enumerate(self.layers):
            out += [(f"layers.{i}.weight", layer.weight), (f"layers.{i}.bias", layer.bias)]
            if layer.batch_norm is not None:
                out += [(f"layers.{i}.bn.gamma", layer.batch_norm.gamma), (f"layers.{i}.bn.beta", layer.batch_norm.beta)]
        return out

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def buffers(self) -> list[tuple[str, np.ndarray]]:
        out = []
        for i, layer in enumerate(self.layers):
            if layer.batch_norm is not None:
                out += [(f"layers.{i}.bn.running_mean", layer.batch_norm.running_mean),
                        (f"layers.{i}.bn.running_var", layer.batch_norm.running_var)]
        return out

    def set_buffer(self, name: str, value: np.ndarray) -> None:
        parts = name.split(".")
        if len(parts) != 4 or parts[0] != "layers" or parts[2] != "bn":
            raise KeyError(f"unknown buffer {name!r}")
        i, attr = parts[1], parts[3]
        setattr(self.layers[int(i)].batch_norm, attr, np.array(value, dtype=np.float64))

    def __call__(self, x: Tensor, train: bool = True) -> Tensor:
        h = x
        for layer in self.layers:
            h = h @ layer.weight + layer.bias
            if layer.batch_norm is not None:
                h = layer.batch_norm(h, train)
            if layer.activation == "heads":
                h = ag.concat([_activate(ag.cols(h, hd.start, hd.stop), hd.activation, layer.slope, hd.temperature)
                               for hd in layer.heads])
            else:
                h = _activate(h, layer.activation, layer.slope, layer.temperature)
        return h


@dataclass
class Tape:
    output: Tensor
    params: list[Tensor]
    consumed: bool = False


def forward(net: Mlp, batch, mode: str = "train") -> tuple[np.ndarray, Tape]:
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    x = np.atleast_2d(np.asarray(batch, dtype=np.float64))
    if x.shape[1] != net.input_dim:
        raise ValueError(f"batch has {x.shape[1]} columns, network expects {net.input_dim}")
    if not np.all(np.isfinite(x)):
        raise ValueError("batch contains non-finite values")
    with ag.enable_grad():
        out = net(Tensor(x), train=mode == "train")
    return out.value, Tape(out, net.parameters())


def backward(tape: Tape, output_gradient) -> list[np.ndarray]:
    """Parameter gradients of ``sum(output * output_gradient)``; a tape is single-use."""
    if tape.consumed:
        raise RuntimeError("tape already consumed by a previous backward pass")
    tape.consumed = True
    return ag.grad(tape.output, tape.params, np.asarray(output_gradient, dtype=np.float64))


def penalty_tensor(critic: Mlp, real: np.ndarray, fake: np.ndarray, lam: float, eps: np.ndarray) -> Tensor:
    """``lam * mean((||d critic / d x_hat|| - 1)^2)`` as a differentiable Tensor."""
    if critic.has_batch_norm:
        raise ValueError("gradient penalty is undefined for critics with batch-norm")
    e = eps.reshape(-1, 1)
    x_hat = Tensor(e * real + (1.0 - e) * fake, requires_grad=True)
    with ag.enable_grad():
        score = critic(x_hat, train=True)
        (g,) = ag.grad(score, [x_hat], create_graph=True)
        dev = ag.row_norm(g) - 1.0
        return (dev * dev).mean() * lam


def gradient_penalty(critic: Mlp, real_batch, fake_batch, lam: float, rng: np.random.Generator):
    """Penalty value and its exact gradient w.r.t. every critic parameter."""
    real = np.asarray(real_batch, dtype=np.float64)
    fake = np.asarray(fake_batch, dtype=np.float64)
    if real.shape != fake.shape:
        raise ValueError("real and fake batches must have the same shape")
    if critic.output_dim != 1:
        raise ValueError("critic must output one score per row")
    eps = rng.random(real.shape[0])
    pen = penalty_tensor(critic, real, fake, lam, eps)
    grads = ag.grad(pen, critic.parameters())
    return float(pen.value), grads


@dataclass
class AdamState:
    lr: float = 2e-4
    beta1: float = 0.5
    beta2: float = 0.9
    eps: float = 1e-8
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)
    t: int = 0
    skipped: int = 0

    @classmethod
    def for_params(cls, params: Sequence[np.ndarray], **hyper) -> "AdamState":
        return cls(m=[np.zeros_like(p) for p in params], v=[np.zeros_like(p) for p in params], **hyper)


def adam_step(params: Sequence[np.ndarray], grads: Sequence[np.ndarray], state: AdamState):
    """One bias-corrected Adam update. Non-finite gradients skip the step and bump ``state.skipped``."""
    if len(params) != len(grads) or any(p.shape != g.shape for p, g in zip(params, grads)):
        raise ValueError("parameter and gradient shapes do not match")
    if not state.m:
        state.m = [np.zeros_like(p) for p in params]
        state.v = [np.zeros_like(p) for p in params]
    if any(m.shape != p.shape for m, p in zip(state.m, params)):
        raise ValueError("optimizer state does not match parameter shapes")
    if not all(np.all(np.isfinite(g)) for g in grads):
        state.skipped += 1
        return list(params), state
    state.t += 1
    c1 = 1.0 - state.beta1**state.t
    c2 = 1.0 - state.beta2**state.t
    out = []
    for i, (p, g) in enumerate(zip(params, grads)):
        state.m[i] = state.beta1 * state.m[i] + (1 - state.beta1) * g
        state.v[i] = state.beta2 * state.v[i] + (1 - state.beta2) * g * g
        mhat = state.m[i] / c1
        vhat = state.v[i] / c2
        out.append(p - state.lr * mhat / (np.sqrt(vhat) + state.eps))
    return out, state


def apply_step(tensors: Sequence[Tensor], grads: Sequence[np.ndarray], state: AdamState) -> None:
    new, _ = adam_step([t.value for t in tensors], grads, state)
    for t, v in zip(tensors, new):
        t.value = v
