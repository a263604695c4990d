import numpy as np
import pytest

from sirenpet.grid import ImageGrid
from sirenpet.phantom import PhantomSpec, build_attenuation_map, build_phantom
from sirenpet.projector import AcquisitionSpec, SystemModel, build_geometry, build_system_matrix, simulate_acquisition


@pytest.fixture(scope="session")
def small_phantom():
    spec = PhantomSpec(size=64)
    gt, labels = build_phantom(spec)
    mu = build_attenuation_map(spec, labels)
    return spec, gt, labels, mu


@pytest.fixture(scope="session")
def small_data(small_phantom):
    """64x64 phantom, 30 angles, desk-scale counts."""
    _, gt, labels, mu = small_phantom
    geom = build_geometry(gt, 30)
    measured, model, acq = simulate_acquisition(gt, mu, geom, AcquisitionSpec(seed=3), return_means=True)
    return gt, labels, measured, model, acq


def random_model(shape=(16, 16), n_angles=24, seed=0, background=0.5):
    """Model with random attenuation and sensitivity factors."""
    rng = np.random.default_rng(seed)
    template = ImageGrid(np.zeros(shape))
    geom = build_geometry(template, n_angles)
    G = build_system_matrix(template, geom)
    return SystemModel(G, geom, shape, 2.0,
                       atten_factors=rng.uniform(0.2, 1.0, geom.size),
                       sensitivity=rng.uniform(0.5, 1.5, geom.size),
                       background=np.full(geom.size, background))
