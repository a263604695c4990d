# Build the phantom, project it and check the projector by hand.

import numpy as np

from sirenpet.grid import Region
from sirenpet.phantom import PhantomSpec, build_attenuation_map, build_phantom
from sirenpet.projector import SystemModel, build_geometry, build_system_matrix

spec = PhantomSpec(size=96)
gt, labels = build_phantom(spec)
mu = build_attenuation_map(spec, labels)

for region in Region:
    n = int((labels.values == region).sum())
    print(f"{region.name:<13} {n:6d} px   activity {gt.values[labels.values == region].max() if n else 0:5.2f}")

geom = build_geometry(gt, 180)
print("sinogram shape", geom.shape, "bin spacing", geom.bin_spacing, "mm")

G = build_system_matrix(gt, geom)
print("nonzeros per ray:", G.nnz / geom.size)

# uniform image: each angle integrates the image area
ones = np.ones(gt.shape[0] * gt.shape[1])
per_angle = (G @ ones).reshape(geom.shape).sum(axis=1)
print("area / spacing", (96 * 2.0) ** 2 / 2.0, "min/max per angle", per_angle.min(), per_angle.max())

# adjoint gap for a random pair
model = SystemModel(G, geom, gt.shape)
rng = np.random.default_rng(0)
x, y = rng.standard_normal(model.n_pixels), rng.standard_normal(geom.size)
ax = model.project(x)
print("adjoint gap", abs(ax @ y - x @ model.adjoint(y)) / (np.linalg.norm(ax) * np.linalg.norm(y)))
