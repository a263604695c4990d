"""Coordinate-network PET reconstruction on a 2D parallel-beam geometry,
with MLEM/BSREM baselines and image-quality metrics."""

from .baselines import BsremConfig, bsrem, mlem, penalty, penalty_grad
from .grid import ImageGrid, LabelMap, Region
from .metrics import MetricsReport, evaluate, mssim, psnr
from .objective import Objective, poisson_loss, poisson_loss_grad
from .optim import LbfgsConfig, OptimTrajectory, run_lbfgs
from .phantom import PhantomSpec, build_attenuation_map, build_phantom
from .projector import (
    AcquisitionSpec,
    Sinogram,
    SinogramGeometry,
    SystemModel,
    build_geometry,
    build_system_matrix,
    simulate_acquisition,
)
from .recon import SirenResult, reconstruct_siren
from .siren import SirenConfig, SirenParams, init_siren, render_image, siren_backward, siren_forward

__version__ = "0.1.0"
