# Simulate a desk-scale acquisition and look at the count budget.

import numpy as np

from sirenpet.phantom import PhantomSpec, build_attenuation_map, build_phantom
from sirenpet.projector import AcquisitionSpec, build_geometry, simulate_acquisition

spec = PhantomSpec(size=96)
gt, labels = build_phantom(spec)
mu = build_attenuation_map(spec, labels)
geom = build_geometry(gt, 180)

measured, model, acq = simulate_acquisition(gt, mu, geom, AcquisitionSpec(total_prompts=2e5, seed=0),
                                            return_means=True)

total = acq.expected.sum()
print("expected trues   ", acq.trues.sum(), acq.trues.sum() / total)
print("expected scatter ", acq.scatter.sum(), acq.scatter.sum() / total)
print("expected randoms ", acq.randoms.sum(), acq.randoms.sum() / total)
print("sampled prompts  ", measured.values.sum())
print("empty bins        %.1f%%" % (100 * np.mean(measured.values == 0)))

# attenuation: the longest chords lose most of their counts
print("attenuation factor range", model.atten_factors[model.atten_factors < 1].min(), model.atten_factors.max())

# the calibrated model reproduces the expected trues
print("max |A gt - trues|", np.abs(model.project(gt.ravel()) - acq.trues).max())
