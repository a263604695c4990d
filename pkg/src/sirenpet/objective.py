"""Poisson negative log-likelihood and its gradient chain down to the network
parameters: loss -> expected sinogram -> image -> weights."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .projector import SystemModel
from .siren import SirenParams, coord_grid, siren_backward, siren_forward

EPS = 1e-9


def _check(y_hat, y, eps):
    y_hat = np.asarray(y_hat, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if y_hat.shape != y.shape:
        raise ValueError(f"length mismatch: {y_hat.size} vs {y.size}")
    if np.any(y < 0):
        raise ValueError("measured counts must be non-negative")
    if np.any(y_hat < -eps):
        raise ValueError("expected counts must be non-negative")
    return y_hat, y


def poisson_loss(y_hat, y, eps: float = EPS) -> float:
    """``sum(y_hat - y * log(max(y_hat, eps)))``; bins with ``y == 0`` add ``y_hat``."""
    y_hat, y = _check(y_hat, y, eps)
    log_term = np.zeros_like(y)
    nz = y > 0
    log_term[nz] = y[nz] * np.log(np.maximum(y_hat[nz], eps))
    return float(np.sum(y_hat - log_term))


def poisson_loss_grad(y_hat, y, eps: float = EPS) -> np.ndarray:
    y_hat, y = _check(y_hat, y, eps)
    return 1.0 - y / np.maximum(y_hat, eps)


@dataclass
class EvalRecord:
    iteration: int
    loss: float
    grad_norm: float
    time_s: float
    metrics: dict = field(default_factory=dict)


class Objective:
    """Poisson loss of a coordinate network's image under a system model.

    Calling the objective on a flat parameter vector returns ``(loss, grad)``,
    which is the interface :func:`sirenpet.optim.run_lbfgs` expects.
    """

    def __init__(self, model: SystemModel, measured, template: SirenParams, eps: float = EPS):
        y = measured.values if hasattr(measured, "values") else measured
        self.y = np.asarray(y, dtype=np.float64).ravel()
        if self.y.size != model.geometry.size:
            raise ValueError("measured sinogram does not match the model geometry")
        if np.any(self.y < 0):
            raise ValueError("measured counts must be non-negative")
        if not eps > 0:
            raise ValueError("eps must be positive")
        self.model = model
        self.eps = eps
        self.template = template
        self.coords = coord_grid(*model.image_shape)
        self.n_evals = 0

    def image(self, params: SirenParams) -> np.ndarray:
        values, _ = siren_forward(params, self.coords)
        return values.reshape(self.model.image_shape)

    def evaluate(self, params: SirenParams) -> tuple[float, SirenParams]:
        self.n_evals += 1
        lam, cache = siren_forward(params, self.coords)
        y_hat = self.model.expected(lam)
        loss = poisson_loss(y_hat, self.y, self.eps)
        pixel_grad = self.model.adjoint(poisson_loss_grad(y_hat, self.y, self.eps))
        return loss, siren_backward(params, cache, pixel_grad)

    def __call__(self, theta: np.ndarray) -> tuple[float, np.ndarray]:
        loss, grad = self.evaluate(self.template.from_vector(theta))
        return loss, grad.to_vector()


def eval_objective(obj: Objective, params: SirenParams, iteration: int = 0):
    """Loss, parameter gradient and a log record for one parameter set."""
    t0 = time.perf_counter()
    loss, grad = obj.evaluate(params)
    if not np.isfinite(loss):
        raise FloatingPointError("loss is not finite")
    record = EvalRecord(iteration, loss, float(np.linalg.norm(grad.to_vector())), time.perf_counter() - t0)
    return loss, grad, record
