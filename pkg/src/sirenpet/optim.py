"""Limited-memory BFGS with a backtracking Armijo line search."""

from __future__ import annotations

import logging
import time
from collections import deque
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .objective import EvalRecord

log = logging.getLogger(__name__)


@dataclass
class LbfgsConfig:
    memory: int = 10
    max_iterations: int = 50
    lr: float = 1.0
    c1: float = 1e-4
    shrink: float = 0.5
    max_trials: int = 25
    grad_tol: float = 1e-7
    loss_tol: float = 1e-10
    checkpoint_every: int = 0

    def __post_init__(self):
        if self.memory < 1:
            raise ValueError("memory must be at least 1")
        if self.max_iterations < 0:
            raise ValueError("max_iterations must be non-negative")
        if not (self.lr > 0 and self.grad_tol > 0 and self.loss_tol > 0):
            raise ValueError("lr and tolerances must be positive")
        if not 0 < self.shrink < 1 or not 0 < self.c1 < 1:
            raise ValueError("shrink and c1 must lie in (0, 1)")


@dataclass
class OptimTrajectory:
    records: list[EvalRecord] = field(default_factory=list)
    checkpoints: dict[int, np.ndarray] = field(default_factory=dict)
    status: str = "running"
    n_evals: int = 0

    @property
    def losses(self) -> np.ndarray:
        return np.array([r.loss for r in self.records])

    def append(self, record: EvalRecord):
        if self.records and record.iteration <= self.records[-1].iteration:
            raise ValueError("iteration indices must increase")
        self.records.append(record)


def two_loop(grad, pairs):
    """Apply the inverse-Hessian approximation stored in ``pairs`` to ``grad``.

    ``pairs`` holds ``(s, y, 1 / y.s)`` tuples, oldest first.
    """
    q = grad.copy()
    alphas = []
    for s, y, rho in reversed(pairs):
        a = rho * (s @ q)
        alphas.append(a)
        q -= a * y
    if pairs:
        s, y, _ = pairs[-1]
        q *= (s @ y) / (y @ y)
    for (s, y, rho), a in zip(pairs, reversed(alphas)):
        b = rho * (y @ q)
        q += (a - b) * s
    return q


def _armijo(fun, x, f, g, d, step, cfg):
    slope = g @ d
    for _ in range(cfg.max_trials):
        x_new = x + step * d
        f_new, g_new = fun(x_new)
        if np.isfinite(f_new) and f_new <= f + cfg.c1 * step * slope:
            return x_new, f_new, g_new, step
        step *= cfg.shrink
    return None


def run_lbfgs(fun: Callable[[np.ndarray], tuple[float, np.ndarray]], x0: np.ndarray,
              config: LbfgsConfig | None = None,
              callback: Callable[[int, np.ndarray, EvalRecord], None] | None = None):
    """Minimize ``fun`` (returning loss and gradient) from ``x0``.

    Returns the best parameters seen and the trajectory. Iteration 0 records
    the starting point; each later record is one accepted step. The first
    step is scaled by ``lr * min(1, 1/|g|_1)`` since no curvature is known
    yet; afterwards the trial step is ``lr`` along the quasi-Newton direction.

    Termination status is one of ``converged``, ``max_iterations`` or
    ``line_search_failed`` (two consecutive steepest-descent fallbacks
    without an acceptable step).
    """
    cfg = config or LbfgsConfig()
    t0 = time.perf_counter()
    traj = OptimTrajectory()
    x = np.array(x0, dtype=np.float64)
    f, g = fun(x)
    traj.n_evals = 1

    def record(k):
        rec = EvalRecord(k, float(f), float(np.linalg.norm(g)), time.perf_counter() - t0)
        traj.append(rec)
        if callback is not None:
            callback(k, x, rec)
        if cfg.checkpoint_every and k % cfg.checkpoint_every == 0:
            traj.checkpoints[k] = x.copy()

    record(0)
    pairs = deque(maxlen=cfg.memory)
    fallbacks = 0
    if np.linalg.norm(g) <= cfg.grad_tol * max(1.0, abs(f)):
        traj.status = "converged"
        return x, traj

    k = 0
    fallback_scale = cfg.lr
    while k < cfg.max_iterations:
        if pairs:
            d = -two_loop(g, list(pairs))
            step = cfg.lr
        else:
            d = -g
            step = cfg.lr * min(1.0, 1.0 / np.abs(g).sum())
        if g @ d >= 0:
            # lost descent; restart from steepest descent
            pairs.clear()
            d = -g
            step = cfg.lr * min(1.0, 1.0 / np.abs(g).sum())

        counted = _counting(fun, traj)
        found = _armijo(counted, x, f, g, d, step, cfg)
        if found is None:
            fallbacks += 1
            log.warning("line search failed at iteration %d", k)
            if fallbacks >= 2:
                traj.status = "line_search_failed"
                break
            fallback_scale *= 0.5
            pairs.clear()
            d = -g
            found = _armijo(counted, x, f, g, d, fallback_scale * min(1.0, 1.0 / np.abs(g).sum()), cfg)
            if found is None:
                traj.status = "line_search_failed"
                break
        else:
            fallbacks = 0

        x_new, f_new, g_new, _ = found
        s, y = x_new - x, g_new - g
        sy = s @ y
        if sy > 1e-10 * np.linalg.norm(s) * np.linalg.norm(y):
            pairs.append((s, y, 1.0 / sy))
        f_old = f
        x, f, g = x_new, f_new, g_new
        k += 1
        record(k)

        if np.linalg.norm(g) <= cfg.grad_tol * max(1.0, abs(f)):
            traj.status = "converged"
            break
        if abs(f_old - f) < cfg.loss_tol * max(1.0, abs(f_old)):
            traj.status = "converged"
            break
    else:
        traj.status = "max_iterations"
    return x, traj


def _counting(fun, traj):
    def wrapped(x):
        traj.n_evals += 1
        return fun(x)
    return wrapped
