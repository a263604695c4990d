"""Sine-activated coordinate network with a SoftPlus output head.

Layer widths run ``2 -> features -> ... -> features -> 1``. Every hidden
layer computes ``sin(omega0 * (h @ W + b))``; the output layer computes
``softplus(h @ W + b)``. Weights are stored as ``(fan_in, fan_out)`` arrays
and all arithmetic is float64. Gradients are computed by hand.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .grid import ImageGrid


@dataclass
class SirenConfig:
    hidden_layers: int = 4
    features: int = 256
    omega0: float = 25.0
    seed: int = 0

    def __post_init__(self):
        if self.hidden_layers < 1:
            raise ValueError("hidden_layers must be at least 1")
        if self.features < 1:
            raise ValueError("features must be at least 1")
        if not self.omega0 > 0:
            raise ValueError("omega0 must be positive")

    @property
    def dims(self) -> list[int]:
        return [2] + [self.features] * self.hidden_layers + [1]


class SirenParams:
    """Weights and biases of every layer plus the sine frequency scale."""

    def __init__(self, weights, biases, omega0):
        self.weights = [np.asarray(w, dtype=np.float64) for w in weights]
        self.biases = [np.asarray(b, dtype=np.float64) for b in biases]
        self.omega0 = float(omega0)
        if len(self.weights) != len(self.biases) or len(self.weights) < 2:
            raise ValueError("need matching weight/bias lists with at least two layers")
        prev = 2
        for w, b in zip(self.weights, self.biases):
            if w.ndim != 2 or w.shape[0] != prev or b.shape != (w.shape[1],):
                raise ValueError("layer dimensions do not chain")
            prev = w.shape[1]
        if prev != 1:
            raise ValueError("output layer must have a single unit")

    @property
    def dims(self) -> list[int]:
        return [2] + [w.shape[1] for w in self.weights]

    @property
    def n_params(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def to_vector(self) -> np.ndarray:
        return np.concatenate([a.ravel() for w, b in zip(self.weights, self.biases) for a in (w, b)])

    def from_vector(self, theta: np.ndarray) -> SirenParams:
        """New params with this layout and the values of ``theta``."""
        theta = np.asarray(theta, dtype=np.float64)
        if theta.size != self.n_params:
            raise ValueError(f"expected {self.n_params} values, got {theta.size}")
        weights, biases, k = [], [], 0
        for w, b in zip(self.weights, self.biases):
            weights.append(theta[k:k + w.size].reshape(w.shape))
            k += w.size
            biases.append(theta[k:k + b.size].copy())
            k += b.size
        return SirenParams(weights, biases, self.omega0)

    def zeros_like(self) -> SirenParams:
        return self.from_vector(np.zeros(self.n_params))

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(a)) for a in self.weights + self.biases)


def init_siren(config: SirenConfig) -> SirenParams:
    """Sine-network initialization.

    The first layer is drawn from ``U(-1/fan_in, 1/fan_in)``; later layers
    from ``U(-sqrt(6/fan_in)/omega0, +sqrt(6/fan_in)/omega0)`` so that the
    pre-activations stay in the same distribution from layer to layer.
    Biases start at zero.
    """
    rng = np.random.default_rng(config.seed)
    dims = config.dims
    weights, biases = [], []
    for i, (fan_in, fan_out) in enumerate(zip(dims[:-1], dims[1:])):
        bound = 1.0 / fan_in if i == 0 else np.sqrt(6.0 / fan_in) / config.omega0
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return SirenParams(weights, biases, config.omega0)


def coord_grid(height: int, width: int | None = None) -> np.ndarray:
    """Pixel-center coordinates in ``[-1, 1]^2``, row-major, columns ``(x, y)``.

    Outermost pixel centers map to -1 and +1; a single pixel maps to 0.
    """
    width = height if width is None else width

    def axis(n):
        return np.zeros(1) if n == 1 else np.linspace(-1.0, 1.0, n)

    x, y = np.meshgrid(axis(width), axis(height))
    return np.column_stack([x.ravel(), y.ravel()])


def softplus(x):
    return np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))


def sigmoid(x):
    # split by sign to avoid overflow in exp
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


@dataclass
class ForwardCache:
    inputs: list  # input of every layer, (n, fan_in)
    preacts: list  # h @ W + b of every layer, (n, fan_out)


def siren_forward(params: SirenParams, coords: np.ndarray) -> tuple[np.ndarray, ForwardCache]:
    coords = np.asarray(coords, dtype=np.float64)
    if coords.ndim != 2 or coords.shape[1] != 2 or coords.shape[0] == 0:
        raise ValueError("coords must be a non-empty (n, 2) array")
    if not params.is_finite():
        raise FloatingPointError("non-finite network parameter")
    w0 = params.omega0
    h = coords
    inputs, preacts = [], []
    n_layers = len(params.weights)
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        z = h @ w + b
        inputs.append(h)
        preacts.append(z)
        if i < n_layers - 1:
            h = np.sin(w0 * z)
    values = softplus(preacts[-1][:, 0])
    return values, ForwardCache(inputs, preacts)


def siren_backward(params: SirenParams, cache: ForwardCache, output_grad: np.ndarray) -> SirenParams:
    """Gradient of ``sum(output_grad * f(coords))`` with respect to the params."""
    g = np.asarray(output_grad, dtype=np.float64).ravel()
    if g.size != cache.preacts[-1].shape[0]:
        raise ValueError("output_grad does not match the cached batch")
    w0 = params.omega0
    delta = (g * sigmoid(cache.preacts[-1][:, 0]))[:, None]
    gw, gb = [], []
    for i in range(len(params.weights) - 1, -1, -1):
        if i < len(params.weights) - 1:
            delta = delta * (w0 * np.cos(w0 * cache.preacts[i]))
        gw.append(cache.inputs[i].T @ delta)
        gb.append(delta.sum(axis=0))
        if i > 0:
            delta = delta @ params.weights[i].T
    return SirenParams(gw[::-1], gb[::-1], params.omega0)


def render_image(params: SirenParams, shape: tuple[int, int], pixel_size: float = 2.0) -> ImageGrid:
    """Evaluate the network on every pixel center of a ``(height, width)`` grid."""
    values, _ = siren_forward(params, coord_grid(*shape))
    return ImageGrid(values.reshape(shape), pixel_size)


CHECKPOINT_MAGIC = b"IPW1"


def save_checkpoint(path, params: SirenParams):
    """Binary dump: magic, layer count, dims, omega0, then weights and biases
    of each layer as little-endian float64 (weights row-major fan_in x fan_out).
    """
    dims = params.dims
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(struct.pack("<I", len(dims)))
        f.write(struct.pack(f"<{len(dims)}I", *dims))
        f.write(struct.pack("<d", params.omega0))
        for w, b in zip(params.weights, params.biases):
            f.write(w.astype("<f8").tobytes())
            f.write(b.astype("<f8").tobytes())


def load_checkpoint(path) -> SirenParams:
    with open(path, "rb") as f:
        data = f.read()
    if data[:4] != CHECKPOINT_MAGIC:
        raise ValueError(f"{path}: not a network checkpoint")
    try:
        (n,) = struct.unpack_from("<I", data, 4)
        dims = struct.unpack_from(f"<{n}I", data, 8)
        (omega0,) = struct.unpack_from("<d", data, 8 + 4 * n)
    except struct.error as exc:
        raise ValueError(f"{path}: truncated header") from exc
    offset = 16 + 4 * n
    expected = offset + 8 * sum(a * b + b for a, b in zip(dims[:-1], dims[1:]))
    if len(data) != expected:
        raise ValueError(f"{path}: payload has {len(data)} bytes, expected {expected}")
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        weights.append(np.frombuffer(data, "<f8", fan_in * fan_out, offset).reshape(fan_in, fan_out).copy())
        offset += 8 * fan_in * fan_out
        biases.append(np.frombuffer(data, "<f8", fan_out, offset).copy())
        offset += 8 * fan_out
    return SirenParams(weights, biases, omega0)
