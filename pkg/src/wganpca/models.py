"""Linear generator and fully connected ReLU critic."""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .errors import DimensionError, DomainError
from .rng import as_stream


@dataclass
class LinearGenerator:
    """``y = G x`` with ``G`` of shape ``(d, r)``; no bias."""

    g: np.ndarray

    @property
    def d(self) -> int:
        return self.g.shape[0]

    @property
    def r(self) -> int:
        return self.g.shape[1]

    def gram(self) -> np.ndarray:
        return self.g @ self.g.T

    def copy(self) -> "LinearGenerator":
        return LinearGenerator(self.g.copy())


@dataclass
class CriticNet:
    """ReLU MLP ``d -> hidden... -> 1``; the last layer is affine with no activation.

    ``weights[i]`` has shape ``(fan_in, fan_out)`` so a batch ``Y`` (rows are
    samples) maps as ``Y @ W + b``.
    """

    layer_sizes: list[int]
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def __post_init__(self):
        if len(self.layer_sizes) < 2 or self.layer_sizes[-1] != 1:
            raise DomainError(f"critic needs >= 2 layer sizes ending in 1, got {self.layer_sizes}")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (self.layer_sizes[i], self.layer_sizes[i + 1]) or b.shape != (self.layer_sizes[i + 1],):
                raise DimensionError(f"layer {i} has shapes {w.shape}, {b.shape}")

    def params(self) -> list[np.ndarray]:
        """Flat parameter list ``[W0, b0, W1, b1, ...]``."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def with_params(self, params: Sequence[np.ndarray]) -> "CriticNet":
        params = list(params)
        return CriticNet(list(self.layer_sizes), [np.array(p) for p in params[0::2]],
                         [np.array(p) for p in params[1::2]])

    def copy(self) -> "CriticNet":
        return self.with_params(self.params())


def glorot_bound(fan_in: int, fan_out: int) -> float:
    return float(np.sqrt(6.0 / (fan_in + fan_out)))


def glorot_init(layer_sizes: Sequence[int], rng) -> CriticNet:
    """Uniform Glorot weights, zero biases; one weight matrix drawn per layer, in order."""
    sizes = [int(s) for s in layer_sizes]
    if len(sizes) < 2:
        raise DomainError("need at least an input and an output size")
    gen = as_stream(rng).generator()
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        b = glorot_bound(fan_in, fan_out)
        weights.append(gen.uniform(-b, b, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return CriticNet(sizes, weights, biases)


def generator_glorot(d: int, r: int, rng) -> LinearGenerator:
    b = glorot_bound(r, d)
    return LinearGenerator(as_stream(rng).generator().uniform(-b, b, size=(d, r)))


def generator_forward(gen: LinearGenerator, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != gen.r:
        raise DimensionError(f"latent dimension {x.shape[-1]} != r={gen.r}")
    return x @ gen.g.T


def critic_forward(net: CriticNet, y, tape: ad.Tape, params: Sequence[ad.Var] | None = None):
    """Record ``D(y)`` for a batch ``y`` of shape ``(n, d)``; returns ``(out, params)``.

    ``out`` has shape ``(n,)``. Pass ``params`` to reuse parameter variables
    already on the tape (e.g. to evaluate real, fake and interpolated batches
    against one set of weights).
    """
    if not isinstance(y, ad.Var):
        y = tape.const(np.atleast_2d(np.asarray(y, dtype=np.float64)))
    if y.value.ndim != 2 or y.value.shape[1] != net.layer_sizes[0]:
        raise DimensionError(f"critic expects (n, {net.layer_sizes[0]}) input, got {y.value.shape}")
    if params is None:
        params = [tape.leaf(p) for p in net.params()]
    h = y
    n_layers = len(net.weights)
    for i in range(n_layers):
        h = ad.bias_add(ad.matmul(h, params[2 * i]), params[2 * i + 1])
        if i < n_layers - 1:
            h = ad.relu(h)
    return ad.reshape(h, (y.value.shape[0],)), params


def critic_apply(net: CriticNet, y) -> np.ndarray:
    """Numpy-only critic evaluation; accepts one sample or a batch."""
    y = np.asarray(y, dtype=np.float64)
    h = np.atleast_2d(y)
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        h = h @ w + b
        if i < len(net.weights) - 1:
            h = np.maximum(h, 0.0)
    out = h[:, 0]
    return out[0] if y.ndim == 1 else out


def layer_operator_norms(net: CriticNet) -> list[float]:
    return [float(np.linalg.norm(w, 2)) for w in net.weights]


def save_checkpoint(net: CriticNet, path, generator: LinearGenerator | None = None) -> Path:
    obj = {
        "layer_sizes": list(net.layer_sizes),
        "weights": [w.ravel().tolist() for w in net.weights],
        "biases": [b.tolist() for b in net.biases],
    }
    if generator is not None:
        obj["generator"] = {"shape": list(generator.g.shape), "g": generator.g.ravel().tolist()}
    path = Path(path)
    # json writes floats with repr(), i.e. shortest round-trip (17 significant digits at most)
    path.write_text(json.dumps(obj))
    return path


def load_checkpoint(path) -> tuple[CriticNet, LinearGenerator | None]:
    obj = json.loads(Path(path).read_text())
    sizes = obj["layer_sizes"]
    weights = [np.array(w).reshape(sizes[i], sizes[i + 1]) for i, w in enumerate(obj["weights"])]
    net = CriticNet(sizes, weights, [np.array(b) for b in obj["biases"]])
    gen = None
    if "generator" in obj:
        gen = LinearGenerator(np.array(obj["generator"]["g"]).reshape(obj["generator"]["shape"]))
    return net, gen
