"""Image-quality figures of merit over labelled regions of interest."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy.ndimage import correlate

from .grid import LabelMap

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


def _arr(img):
    return np.asarray(getattr(img, "values", img), dtype=np.float64)


def _mask(mask, shape):
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != shape:
        raise ValueError(f"mask shape {mask.shape} does not match image {shape}")
    if not mask.any():
        raise ValueError("empty region of interest")
    return mask


def psnr(recon, gt, mask) -> float:
    """Peak signal-to-noise ratio in dB with peak = max of ``gt`` over the mask.

    Returns ``inf`` for identical images.
    """
    recon, gt = _arr(recon), _arr(gt)
    mask = _mask(mask, gt.shape)
    mse = np.mean((recon[mask] - gt[mask]) ** 2)
    if mse == 0:
        return math.inf
    peak = gt[mask].max()
    return float(10.0 * np.log10(peak**2 / mse))


def gaussian_window(size=SSIM_WINDOW, sigma=SSIM_SIGMA):
    r = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(r**2) / (2 * sigma**2))
    w = np.outer(g, g)
    return w / w.sum()


def ssim_map(recon, gt, data_range, size=SSIM_WINDOW, sigma=SSIM_SIGMA):
    """Local SSIM at every window center where the full window fits.

    Returns an array the shape of the image with NaN where the window would
    cross the border.
    """
    x, y = _arr(recon), _arr(gt)
    if x.shape != y.shape:
        raise ValueError("image shapes differ")
    if min(x.shape) < size:
        raise ValueError(f"image smaller than the {size}x{size} SSIM window")
    if not data_range > 0:
        raise ZeroDivisionError("SSIM dynamic range is zero")
    w = gaussian_window(size, sigma)
    c1 = (SSIM_K1 * data_range) ** 2
    c2 = (SSIM_K2 * data_range) ** 2

    def filt(a):
        return correlate(a, w, mode="constant")

    mx, my = filt(x), filt(y)
    vx = filt(x * x) - mx * mx
    vy = filt(y * y) - my * my
    cov = filt(x * y) - mx * my
    num = (2 * mx * my + c1) * (2 * cov + c2)
    den = (mx * mx + my * my + c1) * (vx + vy + c2)
    out = np.full(x.shape, np.nan)
    p = size // 2
    inner = (slice(p, x.shape[0] - p), slice(p, x.shape[1] - p))
    out[inner] = (num / den)[inner]
    return out


def mssim(recon, gt, mask) -> float:
    """Mean SSIM over windows centered in ``mask`` (11x11 Gaussian, sigma 1.5,
    dynamic range = max of ``gt`` over the mask)."""
    gt_arr = _arr(gt)
    mask = _mask(mask, gt_arr.shape)
    smap = ssim_map(recon, gt_arr, gt_arr[mask].max())
    valid = mask & np.isfinite(smap)
    if not valid.any():
        raise ValueError("no SSIM window centered inside the mask fits the image")
    return float(smap[valid].mean())


def _roi_mean(img, roi):
    img = _arr(img)
    return img[_mask(roi, img.shape)].mean()


def activity_recovery(recon, gt, hot_roi) -> float:
    ref = _roi_mean(gt, hot_roi)
    if ref == 0:
        raise ZeroDivisionError("ground-truth mean over the hot region is zero")
    return float(_roi_mean(recon, hot_roi) / ref)


def relative_bias(recon, gt, cold_roi) -> float:
    ref = _roi_mean(gt, cold_roi)
    if ref == 0:
        raise ZeroDivisionError("ground-truth mean over the cold region is zero")
    return float((_roi_mean(recon, cold_roi) - ref) / ref)


def image_roughness(recon, roi) -> float:
    """Sample standard deviation over the ROI divided by the ROI mean."""
    img = _arr(recon)
    vals = img[_mask(roi, img.shape)]
    if vals.size < 2:
        raise ValueError("image roughness needs at least two pixels")
    mean = vals.mean()
    if mean == 0:
        raise ZeroDivisionError("ROI mean is zero")
    return float(vals.std(ddof=1) / mean)


@dataclass
class MetricsReport:
    psnr: float
    ssim: float
    ar: float
    rb: float
    ir: float

    def as_dict(self) -> dict:
        return asdict(self)


def evaluate(recon, gt, labels: LabelMap) -> MetricsReport:
    """All figures of merit; the brain mask is every non-background pixel."""
    return MetricsReport(
        psnr=psnr(recon, gt, labels.brain_mask),
        ssim=mssim(recon, gt, labels.brain_mask),
        ar=activity_recovery(recon, gt, labels.hot_roi),
        rb=relative_bias(recon, gt, labels.cold_roi),
        ir=image_roughness(recon, labels.white_roi),
    )
