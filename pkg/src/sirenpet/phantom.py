"""Procedural brain-like activity phantom.

The layout is a set of nested analytic ellipses in normalized coordinates,
where the grid spans ``[-1, 1]`` along both axes: a scalp ring, a bone shell,
a gray-matter cortical band, a white-matter interior with two CSF ventricles,
and a circular hot tumor placed inside the left white matter. Pixel membership
is decided by pixel-center containment only, so the activity image is
strictly piecewise constant.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .grid import ImageGrid, LabelMap, Region

DEFAULT_SUV = {
    Region.BACKGROUND: 0.0,
    Region.OTHER_TISSUE: 1.0,
    Region.BONE: 0.2,
    Region.WHITE_MATTER: 2.0,
    Region.GRAY_MATTER: 6.0,
    Region.CSF: 0.5,
    Region.TUMOR: 10.0,
}

# linear attenuation at 511 keV, 1/mm
MU_SOFT_TISSUE = 0.0096
MU_BONE = 0.0151

DEFAULT_MU = {
    Region.BACKGROUND: 0.0,
    Region.OTHER_TISSUE: MU_SOFT_TISSUE,
    Region.BONE: MU_BONE,
    Region.WHITE_MATTER: MU_SOFT_TISSUE,
    Region.GRAY_MATTER: MU_SOFT_TISSUE,
    Region.CSF: MU_SOFT_TISSUE,
    Region.TUMOR: MU_SOFT_TISSUE,
}

# (region, center_x, center_y, semi_axis_x, semi_axis_y), painted in order
ELLIPSES = (
    (Region.OTHER_TISSUE, 0.0, 0.0, 0.92, 0.96),
    (Region.BONE, 0.0, 0.0, 0.88, 0.92),
    (Region.GRAY_MATTER, 0.0, 0.0, 0.84, 0.88),
    (Region.WHITE_MATTER, 0.0, 0.0, 0.70, 0.76),
    (Region.CSF, -0.22, -0.14, 0.20, 0.28),
    (Region.CSF, 0.22, -0.14, 0.20, 0.28),
)


class PlacementError(ValueError):
    """The tumor does not fit inside the white matter."""


@dataclass
class PhantomSpec:
    """Parameters of the procedural phantom.

    ``tumor_center`` is in normalized coordinates, ``tumor_radius`` in pixels.
    A non-None ``seed`` enables a small random jitter of the ellipse centers
    and axes.
    """

    size: int = 160
    pixel_size: float = 2.0
    suv: dict = field(default_factory=lambda: dict(DEFAULT_SUV))
    mu: dict = field(default_factory=lambda: dict(DEFAULT_MU))
    tumor_center: tuple[float, float] = (-0.18, 0.41)
    tumor_radius: float = 6.0
    seed: int | None = None
    jitter: float = 0.01

    def validate(self):
        if self.size < 1:
            raise ValueError("size must be at least 1")
        if not self.pixel_size > 0:
            raise ValueError("pixel_size must be positive")
        if not self.tumor_radius > 0:
            raise ValueError("tumor_radius must be positive")
        for name, table in (("suv", self.suv), ("mu", self.mu)):
            missing = set(Region) - {Region(k) for k in table}
            if missing:
                raise ValueError(f"{name} table misses {sorted(r.name for r in missing)}")
            if any(v < 0 for v in table.values()):
                raise ValueError(f"{name} values must be non-negative")


def _pixel_centers(size):
    # normalized pixel-center coordinates, grid edges at +-1
    u = (np.arange(size) + 0.5) * (2.0 / size) - 1.0
    x, y = np.meshgrid(u, u)
    return x, y


def build_labels(spec: PhantomSpec) -> LabelMap:
    spec.validate()
    x, y = _pixel_centers(spec.size)
    labels = np.zeros((spec.size, spec.size), dtype=np.uint8)

    ellipses = list(ELLIPSES)
    if spec.seed is not None:
        rng = np.random.default_rng(spec.seed)
        ellipses = [
            (region, cx + spec.jitter * rng.standard_normal(), cy + spec.jitter * rng.standard_normal(),
             ax * (1 + spec.jitter * rng.standard_normal()), ay * (1 + spec.jitter * rng.standard_normal()))
            for region, cx, cy, ax, ay in ellipses
        ]
    for region, cx, cy, ax, ay in ellipses:
        inside = ((x - cx) / ax) ** 2 + ((y - cy) / ay) ** 2 <= 1.0
        labels[inside] = region

    tumor = tumor_mask(spec)
    if not tumor.any():
        raise PlacementError("tumor covers no pixel center")
    if np.any(labels[tumor] != Region.WHITE_MATTER):
        raise PlacementError("tumor extends outside the white matter")
    labels[tumor] = Region.TUMOR
    return LabelMap(labels, spec.pixel_size)


def tumor_mask(spec: PhantomSpec) -> np.ndarray:
    """Pixels whose center lies in the tumor disc."""
    n = spec.size
    cx = (spec.tumor_center[0] + 1.0) * n / 2.0
    cy = (spec.tumor_center[1] + 1.0) * n / 2.0
    cols, rows = np.meshgrid(np.arange(n) + 0.5, np.arange(n) + 0.5)
    return (cols - cx) ** 2 + (rows - cy) ** 2 <= spec.tumor_radius**2


def _paint(labels: LabelMap, table: dict) -> np.ndarray:
    lut = np.zeros(max(Region) + 1)
    for region, value in table.items():
        lut[int(region)] = value
    return lut[labels.values]


def build_phantom(spec: PhantomSpec | None = None) -> tuple[ImageGrid, LabelMap]:
    """Piecewise-constant activity image and its label map."""
    spec = spec or PhantomSpec()
    labels = build_labels(spec)
    activity = ImageGrid(_paint(labels, spec.suv), spec.pixel_size, kind="activity")
    return activity, labels


def build_attenuation_map(spec: PhantomSpec, labels: LabelMap) -> ImageGrid:
    """Attenuation map in 1/mm painted from the label map."""
    spec.validate()
    if labels.shape != (spec.size, spec.size):
        raise ValueError(f"label map shape {labels.shape} does not match spec size {spec.size}")
    return ImageGrid(_paint(labels, spec.mu), spec.pixel_size, kind="mu")
