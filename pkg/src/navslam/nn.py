"""Minimal verified neural-network core.

Fully connected layers with exact reverse-mode gradients, bias-corrected Adam
with optional L2, Polyak target averaging, and a checksummed binary weights
file.  Everything is float64: at this scale determinism and verifiability
outrank speed.

Shapes: a layer maps (B, fan_in) -> (B, fan_out) via x @ w.T + b, so w is
stored (fan_out, fan_in) and b is (fan_out,).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .storage import load_container, save_container

ACTIVATIONS = ("relu", "tanh", "sigmoid", "linear")
OUTPUT_INIT_BOUND = 3e-3

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8

WEIGHTS_FORMAT_VERSION = 1


def apply_activation(name: str, z: np.ndarray) -> np.ndarray:
    if name == "relu":
        return np.maximum(z, 0.0)
    if name == "tanh":
        return np.tanh(z)
    if name == "sigmoid":
        return 1.0 / (1.0 + np.exp(-z))
    if name == "linear":
        return z
    raise ValueError(f"unknown activation {name!r}")


def activation_grad(name: str, z: np.ndarray, a: np.ndarray) -> np.ndarray:
    """d activation / d preactivation, given both z and a = f(z)."""
    if name == "relu":
        return (z > 0.0).astype(z.dtype)
    if name == "tanh":
        return 1.0 - a * a
    if name == "sigmoid":
        return a * (1.0 - a)
    if name == "linear":
        return np.ones_like(z)
    raise ValueError(f"unknown activation {name!r}")


@dataclass
class Layer:
    w: np.ndarray
    b: np.ndarray
    activation: str

    @property
    def fan_in(self) -> int:
        return self.w.shape[1]

    @property
    def fan_out(self) -> int:
        return self.w.shape[0]


def init_layer(fan_in: int, fan_out: int, activation: str,
               rng: np.random.Generator, *, output: bool = False) -> Layer:
    """Uniform init: +-1/sqrt(fan_in) for hidden layers, +-3e-3 for output layers."""
    if activation not in ACTIVATIONS:
        raise ValueError(f"unknown activation {activation!r}")
    bound = OUTPUT_INIT_BOUND if output else 1.0 / math.sqrt(fan_in)
    return Layer(w=rng.uniform(-bound, bound, size=(fan_out, fan_in)),
                 b=rng.uniform(-bound, bound, size=fan_out),
                 activation=activation)


@dataclass
class Mlp:
    layers: list[Layer]

    @property
    def dims(self) -> list[int]:
        return [self.layers[0].fan_in] + [l.fan_out for l in self.layers]

    @property
    def activations(self) -> list[str]:
        return [l.activation for l in self.layers]

    def params(self) -> list[np.ndarray]:
        out: list[np.ndarray] = []
        for l in self.layers:
            out += [l.w, l.b]
        return out

    def clone(self) -> "Mlp":
        return Mlp([Layer(l.w.copy(), l.b.copy(), l.activation) for l in self.layers])


def init_mlp(dims: list[int], activations: list[str], rng: np.random.Generator) -> Mlp:
    """Build a fresh network; the last layer uses the small output init."""
    if len(dims) < 2:
        raise ValueError("need at least an input and an output dimension")
    if len(activations) != len(dims) - 1:
        raise ValueError(f"need {len(dims) - 1} activations, got {len(activations)}")
    layers = [init_layer(dims[i], dims[i + 1], activations[i], rng,
                         output=(i == len(dims) - 2))
              for i in range(len(dims) - 1)]
    return Mlp(layers)


def layer_forward(layer: Layer, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    z = x @ layer.w.T + layer.b
    return z, apply_activation(layer.activation, z)


def layer_backward(layer: Layer, x: np.ndarray, z: np.ndarray, a: np.ndarray,
                   ga: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Given upstream grad on the activation, return (gw, gb, gx)."""
    gz = ga * activation_grad(layer.activation, z, a)
    return gz.T @ x, gz.sum(axis=0), gz @ layer.w


def forward(net: Mlp, x: np.ndarray) -> tuple[np.ndarray, list]:
    """Run the network; returns the output and a cache for backward().

    Accepts a single input vector or a (B, fan_in) batch and returns matching rank.
    """
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.shape[1] != net.layers[0].fan_in:
        raise ValueError(f"input width {x.shape[1]} != fan_in {net.layers[0].fan_in}")
    cache = [("single", single)]
    for layer in net.layers:
        z, a = layer_forward(layer, x)
        cache.append((x, z, a))
        x = a
    return (x[0] if single else x), cache


def backward(net: Mlp, cache: list, output_gradient: np.ndarray) -> tuple[list[np.ndarray], np.ndarray]:
    """Exact reverse-mode gradients.

    Returns (grads, input_gradient); grads is aligned with net.params(),
    i.e. [gw0, gb0, gw1, gb1, ...].
    """
    _, single = cache[0]
    g = np.asarray(output_gradient, dtype=float)
    if single:
        g = g[None, :]
    if g.shape[1] != net.layers[-1].fan_out:
        raise ValueError("output_gradient width does not match the network head")
    grads: list[np.ndarray] = [None] * (2 * len(net.layers))
    for i in range(len(net.layers) - 1, -1, -1):
        x, z, a = cache[i + 1]
        gw, gb, g = layer_backward(net.layers[i], x, z, a, g)
        grads[2 * i] = gw
        grads[2 * i + 1] = gb
    return grads, (g[0] if single else g)


# ------------------------------------------------------------------ optimizer

@dataclass
class AdamState:
    """Per-parameter first/second moment accumulators plus hyperparameters.

    When l2 > 0 the gradient is augmented with l2 * param before the moment
    updates; decoupled=True applies the decay directly to the parameters
    after the Adam step instead.
    """

    lr: float
    beta1: float = ADAM_BETA1
    beta2: float = ADAM_BETA2
    eps: float = ADAM_EPS
    l2: float = 0.0
    decoupled: bool = False
    step_count: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)

    @classmethod
    def for_params(cls, params: list[np.ndarray], lr: float, *, l2: float = 0.0,
                   decoupled: bool = False) -> "AdamState":
        return cls(lr=lr, l2=l2, decoupled=decoupled,
                   m=[np.zeros_like(p) for p in params],
                   v=[np.zeros_like(p) for p in params])


def adam_step(params: list[np.ndarray], grads: list[np.ndarray], state: AdamState) -> None:
    """One bias-corrected Adam update, in place on params and state."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ValueError("params, grads and Adam state must have matching lengths")
    for i, g in enumerate(grads):
        if g.shape != params[i].shape:
            raise ValueError(f"gradient {i} shape {g.shape} != param shape {params[i].shape}")
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"gradient {i} (shape {g.shape}) contains non-finite values")
    state.step_count += 1
    t = state.step_count
    bc1 = 1.0 - state.beta1 ** t
    bc2 = 1.0 - state.beta2 ** t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if state.l2 > 0.0 and not state.decoupled:
            g = g + state.l2 * p
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        p -= state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
        if state.l2 > 0.0 and state.decoupled:
            p -= state.lr * state.l2 * p


def polyak_update(target: Mlp, online: Mlp, tau: float) -> Mlp:
    """target <- tau * online + (1 - tau) * target, elementwise in place."""
    if target.dims != online.dims or target.activations != online.activations:
        raise ValueError("polyak update requires identical architectures")
    polyak_update_params(target.params(), online.params(), tau)
    return target


def polyak_update_params(target_params: list[np.ndarray], online_params: list[np.ndarray],
                         tau: float) -> None:
    for tp, op in zip(target_params, online_params):
        if tp.shape != op.shape:
            raise ValueError("polyak update requires identical parameter shapes")
        tp *= 1.0 - tau
        tp += tau * op


# -------------------------------------------------------------- serialization

def layers_to_entries(prefix: str, layers: list[Layer]) -> dict:
    entries: dict = {
        f"{prefix}.meta": {
            "version": WEIGHTS_FORMAT_VERSION,
            "activations": [l.activation for l in layers],
            "dims": [layers[0].fan_in] + [l.fan_out for l in layers],
        }
    }
    for i, l in enumerate(layers):
        entries[f"{prefix}.layer{i}.w"] = l.w
        entries[f"{prefix}.layer{i}.b"] = l.b
    return entries


def layers_from_entries(prefix: str, entries: dict) -> list[Layer]:
    meta = entries[f"{prefix}.meta"]
    if meta.get("version") != WEIGHTS_FORMAT_VERSION:
        raise ValueError(f"unsupported weights version {meta.get('version')}")
    layers = []
    for i, act in enumerate(meta["activations"]):
        layers.append(Layer(w=entries[f"{prefix}.layer{i}.w"],
                            b=entries[f"{prefix}.layer{i}.b"], activation=act))
    return layers


def adam_to_entries(prefix: str, state: AdamState) -> dict:
    entries: dict = {
        f"{prefix}.meta": {
            "lr": state.lr, "beta1": state.beta1, "beta2": state.beta2,
            "eps": state.eps, "l2": state.l2, "decoupled": state.decoupled,
            "step_count": state.step_count, "n": len(state.m),
        }
    }
    for i, (m, v) in enumerate(zip(state.m, state.v)):
        entries[f"{prefix}.m{i}"] = m
        entries[f"{prefix}.v{i}"] = v
    return entries


def adam_from_entries(prefix: str, entries: dict) -> AdamState:
    meta = entries[f"{prefix}.meta"]
    n = meta["n"]
    return AdamState(lr=meta["lr"], beta1=meta["beta1"], beta2=meta["beta2"],
                     eps=meta["eps"], l2=meta["l2"], decoupled=meta["decoupled"],
                     step_count=meta["step_count"],
                     m=[entries[f"{prefix}.m{i}"] for i in range(n)],
                     v=[entries[f"{prefix}.v{i}"] for i in range(n)])


def save_weights(net: Mlp, path: str | Path) -> None:
    save_container(path, layers_to_entries("mlp", net.layers))


def load_weights(path: str | Path) -> Mlp:
    return Mlp(layers_from_entries("mlp", load_container(path)))
