# Desk-scale comparison: network fit by L-BFGS against MLEM and BSREM.
# Takes about half a minute on one core.

import numpy as np

from sirenpet.baselines import BsremConfig, bsrem, mlem
from sirenpet.metrics import evaluate
from sirenpet.optim import LbfgsConfig
from sirenpet.phantom import PhantomSpec, build_attenuation_map, build_phantom
from sirenpet.projector import AcquisitionSpec, build_geometry, simulate_acquisition
from sirenpet.recon import reconstruct_siren

spec = PhantomSpec(size=96)
gt, labels = build_phantom(spec)
mu = build_attenuation_map(spec, labels)
measured, model = simulate_acquisition(gt, mu, build_geometry(gt, 180), AcquisitionSpec(seed=0))


def show(name, image):
    r = evaluate(image, gt, labels)
    print(f"{name:<14} PSNR {r.psnr:6.2f}  SSIM {r.ssim:.3f}  AR {r.ar:.3f}  RB {r.rb:+.3f}  IR {r.ir:.3f}")


def every_tenth(k, theta, rec):
    if k % 10 == 0:
        m = rec.metrics
        print(f"  iter {k:2d}  loss {rec.loss:.2f}  PSNR {m['psnr']:.2f}  AR {m['ar']:.3f}")


result = reconstruct_siren(measured, model, None, LbfgsConfig(max_iterations=50), gt, labels, every_tenth)
show("siren", result.image)

em, _ = mlem(measured, model, 100)
show("mlem 100", em)

for beta in (0.1, 0.355, 1.0):
    img, _ = bsrem(measured, model, BsremConfig(beta=beta))
    show(f"bsrem b={beta}", img)

losses = result.trajectory.losses
print("loss change after iteration 15: %.3f%%" % (100 * abs(losses[15] - losses[-1]) / abs(losses[-1])))
