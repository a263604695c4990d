"""End-to-end network reconstruction: fit a coordinate network to a measured
sinogram by L-BFGS on the Poisson loss."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import ImageGrid, LabelMap
from .metrics import evaluate
from .objective import Objective
from .optim import LbfgsConfig, OptimTrajectory, run_lbfgs
from .projector import SystemModel
from .siren import SirenConfig, SirenParams, init_siren


@dataclass
class SirenResult:
    image: ImageGrid
    params: SirenParams
    trajectory: OptimTrajectory
    objective: Objective

    def params_at(self, iteration: int) -> SirenParams:
        return self.params.from_vector(self.trajectory.checkpoints[iteration])


def reconstruct_siren(measured, model: SystemModel, siren_config: SirenConfig | None = None,
                      lbfgs_config: LbfgsConfig | None = None, gt: ImageGrid | None = None,
                      labels: LabelMap | None = None, callback=None) -> SirenResult:
    """Run the network reconstruction.

    With ``gt`` and ``labels`` given, every trajectory record also carries
    the image-quality metrics of that iterate.
    """
    params0 = init_siren(siren_config or SirenConfig())
    obj = Objective(model, measured, params0)

    def on_iter(k, theta, record):
        if gt is not None and labels is not None:
            record.metrics = evaluate(obj.image(params0.from_vector(theta)), gt, labels).as_dict()
        if callback is not None:
            callback(k, theta, record)

    theta, traj = run_lbfgs(obj, params0.to_vector(), lbfgs_config, on_iter)
    params = params0.from_vector(theta)
    image = ImageGrid(obj.image(params), model.pixel_size)
    return SirenResult(image, params, traj, obj)


def uniform_init_image(model: SystemModel) -> np.ndarray:
    """Image rendered by an all-zero network (softplus(0) everywhere)."""
    return np.full(model.image_shape, np.log(2.0))
