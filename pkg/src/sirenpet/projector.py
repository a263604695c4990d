"""Parallel-beam sinogram geometry, ray-traced system matrix and acquisition
simulation.

The image is centered on the origin. Pixel ``(row, col)`` covers
``x in [x0 + col*d, x0 + (col+1)*d]`` and ``y in [y0 + row*d, y0 + (row+1)*d]``
with ``x0 = -width*d/2`` and ``y0 = -height*d/2``. The ray of angle ``theta``
and radial offset ``s`` is the line ``s*(cos, sin) + t*(-sin, cos)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.ndimage import gaussian_filter1d

from .grid import ImageGrid


@dataclass(frozen=True)
class SinogramGeometry:
    n_angles: int
    n_bins: int
    bin_spacing: float
    center: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        if self.n_angles < 1 or self.n_bins < 1:
            raise ValueError("n_angles and n_bins must be at least 1")
        if not self.bin_spacing > 0:
            raise ValueError("bin_spacing must be positive")

    @property
    def angles(self) -> np.ndarray:
        return np.arange(self.n_angles) * (np.pi / self.n_angles)

    @property
    def offsets(self) -> np.ndarray:
        return (np.arange(self.n_bins) - (self.n_bins - 1) / 2.0) * self.bin_spacing

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_angles, self.n_bins)

    @property
    def size(self) -> int:
        return self.n_angles * self.n_bins


@dataclass(frozen=True, eq=False)
class Sinogram:
    geometry: SinogramGeometry
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64).reshape(self.geometry.shape)
        if np.any(values < 0):
            raise ValueError("sinogram values must be non-negative")
        object.__setattr__(self, "values", values)

    def ravel(self) -> np.ndarray:
        return self.values.ravel()


def build_geometry(image: ImageGrid, n_angles: int = 180) -> SinogramGeometry:
    """Geometry whose radial extent covers the image diagonal.

    The bin count is the smallest odd integer not below ``diagonal / spacing``
    so that the central bin passes through the image center.
    """
    if n_angles < 1:
        raise ValueError("n_angles must be at least 1")
    spacing = image.pixel_size
    diagonal = math.hypot(image.width, image.height) * image.pixel_size
    n_bins = math.ceil(diagonal / spacing - 1e-9)
    if n_bins % 2 == 0:
        n_bins += 1
    return SinogramGeometry(n_angles, max(n_bins, 1), spacing)


def _trace_angle(theta, offsets, width, height, d):
    """Intersection lengths of all rays of one angle with the pixel grid.

    Returns flat arrays (ray index, pixel index, length).
    """
    c, s = math.cos(theta), math.sin(theta)
    if abs(c) < 1e-15:
        c = 0.0
    if abs(s) < 1e-15:
        s = 0.0
    x0, y0 = -width * d / 2.0, -height * d / 2.0
    xe = x0 + d * np.arange(width + 1)
    ye = y0 + d * np.arange(height + 1)
    px, py = offsets * c, offsets * s  # foot point of each ray
    dx, dy = -s, c  # unit direction
    n = offsets.size

    # parametric range inside the bounding box, per ray
    t_lo = np.full(n, -np.inf)
    t_hi = np.full(n, np.inf)
    crossings = []
    for p, dd, edges in ((px, dx, xe), (py, dy, ye)):
        if dd == 0.0:
            outside = (p < edges[0]) | (p > edges[-1])
            t_lo[outside] = np.inf
            continue
        t_edges = (edges[None, :] - p[:, None]) / dd
        t_lo = np.maximum(t_lo, t_edges.min(axis=1))
        t_hi = np.minimum(t_hi, t_edges.max(axis=1))
        crossings.append(t_edges)

    hit = t_hi > t_lo
    if not hit.any():
        return np.empty(0, np.int64), np.empty(0, np.int64), np.empty(0)
    rays = np.nonzero(hit)[0]
    t_lo, t_hi = t_lo[hit], t_hi[hit]
    t = np.concatenate([t_lo[:, None], t_hi[:, None]] + [tc[hit] for tc in crossings], axis=1)
    t = np.clip(t, t_lo[:, None], t_hi[:, None])
    t.sort(axis=1)

    seg = np.diff(t, axis=1)
    mid = 0.5 * (t[:, 1:] + t[:, :-1])
    cols = np.floor((px[hit, None] + mid * dx - x0) / d).astype(np.int64)
    rows = np.floor((py[hit, None] + mid * dy - y0) / d).astype(np.int64)
    keep = (seg > 1e-12 * d) & (cols >= 0) & (cols < width) & (rows >= 0) & (rows < height)
    ray_idx = np.broadcast_to(rays[:, None], seg.shape)[keep]
    return ray_idx, (rows * width + cols)[keep], seg[keep]


def build_system_matrix(image: ImageGrid, geom: SinogramGeometry) -> sp.csr_matrix:
    """Sparse matrix of exact ray/pixel intersection lengths in mm.

    Row ``a * n_bins + b`` holds the ray of angle ``a`` and bin ``b``; the
    column index is the row-major pixel index. Rays missing the grid give
    empty rows.
    """
    width, height, d = image.width, image.height, image.pixel_size
    offsets = geom.offsets
    rows, cols, vals = [], [], []
    for a, theta in enumerate(geom.angles):
        r, c, v = _trace_angle(theta, offsets, width, height, d)
        rows.append(r + a * geom.n_bins)
        cols.append(c)
        vals.append(v)
    mat = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(geom.size, width * height),
    ).tocsr()
    mat.sum_duplicates()
    return mat


def compute_attenuation_factors(mu_map: ImageGrid, geom_matrix: sp.spmatrix) -> np.ndarray:
    """Survival probability ``exp(-line integral of mu)`` along every ray."""
    mu = mu_map.ravel()
    if mu.size != geom_matrix.shape[1]:
        raise ValueError("mu-map does not match the system matrix")
    if np.any(mu < 0):
        raise ValueError("attenuation coefficients must be non-negative")
    return np.exp(-(geom_matrix @ mu))


class SystemModel:
    """Affine forward model ``y_hat = diag(atten * sens) G x + r``.

    The effective matrix is stored once; the adjoint reads the same entries
    column-wise, so forward and back projection are an exact transpose pair.
    """

    def __init__(self, geom_matrix, geometry, image_shape, pixel_size=2.0,
                 atten_factors=None, sensitivity=None, background=None):
        self.geom_matrix = sp.csr_matrix(geom_matrix)
        self.geometry = geometry
        self.image_shape = tuple(image_shape)
        self.pixel_size = float(pixel_size)
        n = geometry.size
        if self.geom_matrix.shape != (n, self.image_shape[0] * self.image_shape[1]):
            raise ValueError("system matrix shape does not match geometry and image")
        self.atten_factors = self._per_bin(atten_factors, 1.0, n)
        self.sensitivity = self._per_bin(sensitivity, 1.0, n)
        self.background = self._per_bin(background, 0.0, n)
        # exp(-mu L) may underflow to 0 for very dense objects
        if np.any(self.atten_factors < 0) or np.any(self.atten_factors > 1):
            raise ValueError("attenuation factors must lie in [0, 1]")
        if np.any(self.sensitivity < 0) or np.any(self.background < 0):
            raise ValueError("sensitivity and background must be non-negative")
        self.matrix = (sp.diags(self.atten_factors * self.sensitivity) @ self.geom_matrix).tocsr()
        self._matrix_t = self.matrix.T.tocsr()
        self._sens_image = None

    @staticmethod
    def _per_bin(values, default, n):
        if values is None:
            return np.full(n, float(default))
        values = np.asarray(values, dtype=np.float64).ravel()
        if values.size != n:
            raise ValueError(f"expected {n} per-bin values, got {values.size}")
        return values.copy()

    @property
    def n_pixels(self) -> int:
        return self.image_shape[0] * self.image_shape[1]

    def with_background(self, background) -> SystemModel:
        return SystemModel(self.geom_matrix, self.geometry, self.image_shape, self.pixel_size,
                           self.atten_factors, self.sensitivity, background)

    def project(self, x: np.ndarray) -> np.ndarray:
        """Linear part ``A x`` on a flat pixel vector."""
        x = np.asarray(x, dtype=np.float64).ravel()
        if x.size != self.n_pixels:
            raise ValueError(f"expected {self.n_pixels} pixels, got {x.size}")
        return self.matrix @ x

    def adjoint(self, s: np.ndarray) -> np.ndarray:
        """``A^T s`` on a flat per-bin vector."""
        s = np.asarray(s, dtype=np.float64).ravel()
        if s.size != self.geometry.size:
            raise ValueError(f"expected {self.geometry.size} bins, got {s.size}")
        return self._matrix_t @ s

    def expected(self, x: np.ndarray) -> np.ndarray:
        """``A x + r`` on a flat pixel vector."""
        return self.project(x) + self.background

    @property
    def sensitivity_image(self) -> np.ndarray:
        """``A^T 1`` as a flat pixel vector."""
        if self._sens_image is None:
            self._sens_image = self.adjoint(np.ones(self.geometry.size))
        return self._sens_image


def forward_project(model: SystemModel, image: ImageGrid) -> Sinogram:
    if image.shape != model.image_shape:
        raise ValueError(f"image shape {image.shape} does not match model {model.image_shape}")
    return Sinogram(model.geometry, model.expected(image.ravel()))


def back_project(model: SystemModel, sino_like) -> ImageGrid:
    values = sino_like.values if isinstance(sino_like, Sinogram) else sino_like
    bp = model.adjoint(values).reshape(model.image_shape)
    return ImageGrid(bp, model.pixel_size, kind="mu")


@dataclass
class AcquisitionSpec:
    """Count budget of a simulated acquisition.

    ``total_prompts`` defaults to the desk-scale budget; the full-scale
    brain study used 3.5e6 prompts.
    """

    total_prompts: float = 2e5
    randoms_fraction: float = 0.35
    scatter_fraction: float = 0.30
    seed: int = 0
    scatter_sigma: float = 10.0  # radial bins
    sensitivity: np.ndarray | None = None

    def validate(self):
        if self.total_prompts < 0:
            raise ValueError("total_prompts must be non-negative")
        if self.randoms_fraction < 0 or self.scatter_fraction < 0:
            raise ValueError("fractions must be non-negative")
        if self.randoms_fraction + self.scatter_fraction >= 1:
            raise ValueError("randoms_fraction + scatter_fraction must be below 1")
        if not self.scatter_sigma > 0:
            raise ValueError("scatter_sigma must be positive")


@dataclass
class Acquisition:
    """Expected-count decomposition of a simulation, kept for inspection."""

    trues: np.ndarray
    scatter: np.ndarray
    randoms: np.ndarray

    @property
    def expected(self) -> np.ndarray:
        return self.trues + self.scatter + self.randoms


def simulate_acquisition(gt: ImageGrid, mu_map: ImageGrid, geom: SinogramGeometry,
                         spec: AcquisitionSpec, geom_matrix=None, return_means=False):
    """Simulate a noisy prompt sinogram and the matching system model.

    The count calibration is folded into the returned model's sensitivity so
    that ``A @ gt`` reproduces the expected trues exactly. The returned
    background is the true scatter + randoms mean.
    """
    spec.validate()
    if gt.shape != mu_map.shape:
        raise ValueError("activity and mu-map shapes differ")
    if geom_matrix is None:
        geom_matrix = build_system_matrix(gt, geom)
    atten = compute_attenuation_factors(mu_map, geom_matrix)
    sens = np.ones(geom.size) if spec.sensitivity is None else np.asarray(spec.sensitivity, float).ravel()

    n_trues = (1.0 - spec.randoms_fraction - spec.scatter_fraction) * spec.total_prompts
    n_scatter = spec.scatter_fraction * spec.total_prompts
    n_randoms = spec.randoms_fraction * spec.total_prompts

    raw = atten * sens * (geom_matrix @ gt.ravel())
    if spec.total_prompts > 0 and raw.sum() <= 0:
        raise ValueError("ground truth projects to zero; cannot scale to the requested prompts")
    scale = n_trues / raw.sum() if raw.sum() > 0 else 1.0
    trues = raw * scale

    if spec.total_prompts > 0:
        smooth = gaussian_filter1d(trues.reshape(geom.shape), spec.scatter_sigma, axis=1, mode="constant")
        scatter = (smooth * (n_scatter / smooth.sum())).ravel()
    else:
        scatter = np.zeros(geom.size)
    randoms = np.full(geom.size, n_randoms / geom.size)

    rng = np.random.default_rng(spec.seed)
    counts = rng.poisson(trues + scatter + randoms).astype(np.float64)

    model = SystemModel(geom_matrix, geom, gt.shape, gt.pixel_size,
                        atten_factors=atten, sensitivity=sens * scale, background=scatter + randoms)
    measured = Sinogram(geom, counts)
    if return_means:
        return measured, model, Acquisition(trues, scatter, randoms)
    return measured, model
