"""Classical iterative reconstructions: MLEM and BSREM with a quadratic
8-neighbour smoothness penalty."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from .grid import ImageGrid
from .objective import EvalRecord, poisson_loss
from .projector import SystemModel

# (row shift, col shift, weight) of the 8-connected neighbourhood
NEIGHBOURS = tuple(
    (dr, dc, 1.0 if dr == 0 or dc == 0 else 1.0 / math.sqrt(2.0))
    for dr in (-1, 0, 1) for dc in (-1, 0, 1) if (dr, dc) != (0, 0)
)

FLOOR = 1e-12


def _shifted_pairs(shape, dr, dc):
    """Slices (a, b) such that ``img[b]`` is the (dr, dc) neighbour of ``img[a]``."""
    h, w = shape

    def span(shift, n):
        if shift >= 0:
            return slice(0, n - shift), slice(shift, n)
        return slice(-shift, n), slice(0, n + shift)

    ra, rb = span(dr, h)
    ca, cb = span(dc, w)
    return (ra, ca), (rb, cb)


def penalty(image, neighbours=NEIGHBOURS) -> float:
    """Quadratic roughness, ``1/2 * sum over unordered neighbour pairs of
    w_jl (x_j - x_l)^2``, so that :func:`penalty_grad` is its exact gradient."""
    x = np.asarray(getattr(image, "values", image), dtype=np.float64)
    total = 0.0
    for dr, dc, w in neighbours:
        a, b = _shifted_pairs(x.shape, dr, dc)
        total += w * np.sum((x[a] - x[b]) ** 2)
    # every pair is visited twice
    return 0.25 * total


def penalty_grad(image, neighbours=NEIGHBOURS) -> np.ndarray:
    """``(grad R)_j = sum_{l in N(j)} w_jl (x_j - x_l)``; border pixels use the
    neighbours that exist."""
    x = np.asarray(getattr(image, "values", image), dtype=np.float64)
    g = np.zeros_like(x)
    for dr, dc, w in neighbours:
        a, b = _shifted_pairs(x.shape, dr, dc)
        g[a] += w * (x[a] - x[b])
    return g


def log_likelihood(model: SystemModel, x: np.ndarray, y: np.ndarray) -> float:
    """Poisson log-likelihood up to the constant ``-sum log(y!)``."""
    return -poisson_loss(model.expected(x), y)


def _init_image(model, init):
    sens = model.sensitivity_image
    fov = sens > 0
    if init is None:
        x = np.ones(model.n_pixels)
    else:
        x = np.array(getattr(init, "values", init), dtype=np.float64).ravel()
        if x.size != model.n_pixels:
            raise ValueError("initial image does not match the model")
        if np.any(x[fov] <= 0):
            raise ValueError("initial image must be positive inside the field of view")
    x[~fov] = 0.0
    return x, sens, fov


def _measured(measured):
    return np.asarray(getattr(measured, "values", measured), dtype=np.float64).ravel()


def mlem(measured, model: SystemModel, iterations: int = 100, init=None, callback=None):
    """Maximum-likelihood EM.

    Returns the final image and one record per iteration (iteration 0 is the
    initial image); the record's ``loss`` is the Poisson negative
    log-likelihood.
    """
    y = _measured(measured)
    x, sens, fov = _init_image(model, init)
    t0 = time.perf_counter()
    records = []

    def log_state(k, y_hat):
        rec = EvalRecord(k, poisson_loss(y_hat, y), float("nan"), time.perf_counter() - t0)
        records.append(rec)
        if callback is not None:
            callback(k, x.reshape(model.image_shape), rec)

    y_hat = model.expected(x)
    log_state(0, y_hat)
    for k in range(1, iterations + 1):
        ratio = np.divide(y, y_hat, out=np.zeros_like(y), where=y_hat > 0)
        x[fov] *= model.adjoint(ratio)[fov] / sens[fov]
        y_hat = model.expected(x)
        log_state(k, y_hat)
    return ImageGrid(x.reshape(model.image_shape), model.pixel_size), records


@dataclass
class BsremConfig:
    beta: float = 0.355
    n_subsets: int = 10
    iterations: int = 20
    alpha0: float = 1.0
    gamma: float = 0.1

    def __post_init__(self):
        if self.beta < 0:
            raise ValueError("beta must be non-negative")
        if self.n_subsets < 1:
            raise ValueError("n_subsets must be at least 1")
        if self.iterations < 0:
            raise ValueError("iterations must be non-negative")


class _Subset:
    def __init__(self, model: SystemModel, index: int, n_subsets: int):
        n_angles, n_bins = model.geometry.shape
        angles = np.arange(index, n_angles, n_subsets)
        self.bins = (angles[:, None] * n_bins + np.arange(n_bins)).ravel()
        self.matrix = model.matrix[self.bins]
        self.matrix_t = self.matrix.T.tocsr()
        self.background = model.background[self.bins]
        self.sensitivity = self.matrix_t @ np.ones(self.bins.size)


def bsrem(measured, model: SystemModel, config: BsremConfig | None = None, init=None, callback=None):
    """Relaxed, preconditioned subset ascent on the penalized likelihood.

    For each subset ``b`` of every ``n_subsets``-th angle::

        x <- max(x + a_k * D(x) * (grad L_b(x) - beta/n_subsets * grad R(x)), floor)

    with ``D(x) = x / (A^T 1 / n_subsets + beta/n_subsets * sum(w) * x)`` and
    ``a_k = alpha0 / (1 + gamma*k)``. The penalty-curvature term keeps the
    step bounded for large ``beta``; at ``beta = 0`` it is the EM scaling.
    Records carry the penalized objective ``-L(x) + beta R(x)`` as ``loss``.
    """
    cfg = config or BsremConfig()
    n_angles = model.geometry.n_angles
    if n_angles % cfg.n_subsets:
        raise ValueError(f"n_subsets={cfg.n_subsets} does not divide {n_angles} angles")
    y = _measured(measured)
    x, sens, fov = _init_image(model, init)
    subsets = [_Subset(model, b, cfg.n_subsets) for b in range(cfg.n_subsets)]
    sub_sens = sens / cfg.n_subsets
    curvature = cfg.beta / cfg.n_subsets * sum(w for _, _, w in NEIGHBOURS)
    shape = model.image_shape
    t0 = time.perf_counter()
    records = []

    def log_state(k):
        loss = poisson_loss(model.expected(x), y) + cfg.beta * penalty(x.reshape(shape))
        rec = EvalRecord(k, loss, float("nan"), time.perf_counter() - t0)
        records.append(rec)
        if callback is not None:
            callback(k, x.reshape(shape), rec)

    log_state(0)
    for k in range(cfg.iterations):
        step = cfg.alpha0 / (1.0 + cfg.gamma * k)
        for sub in subsets:
            y_b = y[sub.bins]
            y_hat = sub.matrix @ x + sub.background
            ratio = np.divide(y_b, y_hat, out=np.zeros_like(y_b), where=y_hat > 0)
            grad = sub.matrix_t @ ratio - sub.sensitivity
            if cfg.beta:
                grad -= (cfg.beta / cfg.n_subsets) * penalty_grad(x.reshape(shape)).ravel()
            xf = x[fov]
            precond = xf / (sub_sens[fov] + curvature * xf)
            x[fov] = np.maximum(xf + step * precond * grad[fov], FLOOR)
        log_state(k + 1)
    return ImageGrid(x.reshape(shape), model.pixel_size), records
