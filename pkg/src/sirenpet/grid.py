"""Image containers shared by every module."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np


class Region(enum.IntEnum):
    BACKGROUND = 0
    OTHER_TISSUE = 1
    BONE = 2
    WHITE_MATTER = 3
    GRAY_MATTER = 4
    CSF = 5
    TUMOR = 6


KINDS = ("activity", "mu", "label")


@dataclass(frozen=True, eq=False)
class ImageGrid:
    """A 2D image on a square-pixel grid.

    ``values`` is indexed ``[row, col]``; row-major flattening gives the pixel
    order used by the projector and by the coordinate network.
    """

    values: np.ndarray
    pixel_size: float = 2.0
    kind: str = "activity"

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2 or values.size == 0:
            raise ValueError(f"image must be a non-empty 2D array, got shape {values.shape}")
        if not self.pixel_size > 0:
            raise ValueError("pixel_size must be positive")
        if self.kind not in ("activity", "mu"):
            raise ValueError(f"unknown image kind {self.kind!r}")
        if self.kind == "activity" and np.any(values < 0):
            raise ValueError("activity images must be non-negative")
        object.__setattr__(self, "values", values)

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def ravel(self) -> np.ndarray:
        return self.values.ravel()


@dataclass(frozen=True, eq=False)
class LabelMap:
    """Per-pixel region labels (values of :class:`Region`)."""

    values: np.ndarray
    pixel_size: float = 2.0

    def __post_init__(self):
        values = np.asarray(self.values)
        if values.ndim != 2 or values.size == 0:
            raise ValueError("label map must be a non-empty 2D array")
        if values.min() < 0 or values.max() > max(Region):
            raise ValueError("label values outside the known regions")
        object.__setattr__(self, "values", values.astype(np.uint8))

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def mask(self, *regions: Region) -> np.ndarray:
        return np.isin(self.values, [int(r) for r in regions])

    @property
    def brain_mask(self) -> np.ndarray:
        """All non-background pixels."""
        return self.values != Region.BACKGROUND

    @property
    def hot_roi(self) -> np.ndarray:
        return self.mask(Region.TUMOR)

    @property
    def cold_roi(self) -> np.ndarray:
        return self.mask(Region.CSF)

    @property
    def white_roi(self) -> np.ndarray:
        return self.mask(Region.WHITE_MATTER)
