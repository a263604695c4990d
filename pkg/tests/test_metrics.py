import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.ndimage import correlate

from sirenpet.grid import LabelMap, Region
from sirenpet.metrics import (
    activity_recovery,
    evaluate,
    gaussian_window,
    image_roughness,
    mssim,
    psnr,
    relative_bias,
)
from sirenpet.phantom import PhantomSpec, build_phantom

MASK = np.ones((20, 20), bool)


def test_psnr_closed_forms():
    gt = np.zeros((20, 20))
    gt[5, 5] = 10.0
    assert psnr(gt, gt, MASK) == math.inf
    assert psnr(gt + 1.0, gt, MASK) == pytest.approx(20.0, abs=1e-12)
    assert psnr(gt + 2.0, gt, MASK) - psnr(gt + 1.0, gt, MASK) == pytest.approx(-10 * math.log10(4), abs=1e-12)
    assert 10 * math.log10(4) == pytest.approx(6.02, abs=1e-2)


def test_ssim_identity_and_shift():
    gt = np.random.default_rng(0).uniform(0, 5, (24, 24))
    mask = np.ones_like(gt, bool)
    assert mssim(gt, gt, mask) == 1.0
    assert mssim(gt + 20.0, gt, mask) < 1.0


def test_checkerboard_structure_term():
    n = 24
    board = (np.indices((n, n)).sum(axis=0) % 2).astype(float)
    x, y = 1.0 + board, 2.0 - board  # inverse checkerboards with equal means
    w = gaussian_window()
    p = 5
    c2 = (0.03 * 2.0) ** 2
    # direct windowed computation at one interior center
    r, c = 12, 12
    win = (slice(r - p, r + p + 1), slice(c - p, c + p + 1))
    mx, my = (w * x[win]).sum(), (w * y[win]).sum()
    sx = math.sqrt((w * (x[win] - mx) ** 2).sum())
    sy = math.sqrt((w * (y[win] - my) ** 2).sum())
    sxy = (w * (x[win] - mx) * (y[win] - my)).sum()
    assert sxy / (sx * sy) == pytest.approx(-1.0, abs=1e-12)
    # the full SSIM is dominated by that term: negative everywhere inside
    assert mssim(x, y, np.ones((n, n), bool)) < -0.9


def test_ssim_matches_reference_implementation():
    skimage = pytest.importorskip("skimage.metrics")
    rng = np.random.default_rng(1)
    gt = rng.uniform(0, 10, (40, 40))
    rec = gt + rng.normal(0, 1, gt.shape)
    _, smap = skimage.structural_similarity(rec, gt, data_range=gt.max(), gaussian_weights=True,
                                            sigma=1.5, use_sample_covariance=False, full=True)
    ours = mssim(rec, gt, np.ones_like(gt, bool))
    assert ours == pytest.approx(smap[5:-5, 5:-5].mean(), rel=1e-9)


def test_ar_rb_ir_closed_forms():
    gt = np.array([[2.0, 4.0], [6.0, 8.0]])
    roi = np.ones((2, 2), bool)
    assert activity_recovery(gt, gt, roi) == 1.0
    assert activity_recovery(0.5 * gt, gt, roi) == 0.5
    assert relative_bias(gt, gt, roi) == 0.0
    assert relative_bias(2 * gt, gt, roi) == 1.0
    assert image_roughness(np.full((3, 3), 4.0), np.ones((3, 3), bool)) == 0.0
    assert image_roughness(np.array([[1.0, 3.0]]), np.ones((1, 2), bool)) == pytest.approx(math.sqrt(2) / 2, abs=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(0.1, 100), min_size=3, max_size=30), st.floats(0.01, 1000))
def test_ir_scale_invariance(values, c):
    v = np.array([values])
    roi = np.ones_like(v, bool)
    assert image_roughness(c * v, roi) == pytest.approx(image_roughness(v, roi), rel=1e-9, abs=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_ar_rb_permutation_invariance(seed):
    rng = np.random.default_rng(seed)
    gt = rng.uniform(1, 5, (1, 12))
    rec = rng.uniform(0, 5, (1, 12))
    roi = np.ones_like(gt, bool)
    perm = rng.permutation(12)
    assert activity_recovery(rec[:, perm], gt[:, perm], roi) == pytest.approx(activity_recovery(rec, gt, roi), rel=1e-12)
    assert relative_bias(rec[:, perm], gt[:, perm], roi) == pytest.approx(relative_bias(rec, gt, roi), rel=1e-12, abs=1e-12)


def test_errors():
    roi = np.ones((2, 2), bool)
    with pytest.raises(ZeroDivisionError):
        activity_recovery(np.ones((2, 2)), np.zeros((2, 2)), roi)
    with pytest.raises(ValueError):
        psnr(np.ones((2, 2)), np.ones((2, 2)), np.zeros((2, 2), bool))
    with pytest.raises(ValueError):
        mssim(np.ones((5, 5)), np.ones((5, 5)), np.ones((5, 5), bool))


def test_evaluate_identity():
    gt, labels = build_phantom(PhantomSpec(size=64))
    r = evaluate(gt, gt, labels)
    assert (r.psnr, r.ssim, r.ar, r.rb, r.ir) == (math.inf, 1.0, 1.0, 0.0, 0.0)
    again = evaluate(gt.values * 0.9, gt, labels)
    assert again == evaluate(gt.values * 0.9, gt, labels)
