"""Binary grid and sinogram files, model bundles, run configuration,
trajectory CSV and PNG export.

Grid file (``.ipg``): 24-byte header ``<4sIIdB3x`` = magic ``IPG1``, width,
height, pixel size (mm), kind (0 activity, 1 mu, 2 label), then the
row-major payload as little-endian float64 (uint8 for labels).

Sinogram file (``.ips``): 20-byte header ``<4sIId`` = magic ``IPS1``,
n_angles, n_bins, bin spacing (mm), then angle-major little-endian float64.
"""

from __future__ import annotations

import configparser
import csv
import math
import struct
from pathlib import Path

import numpy as np

from .grid import ImageGrid, LabelMap
from .projector import Sinogram, SinogramGeometry, SystemModel, build_system_matrix

GRID_MAGIC = b"IPG1"
SINO_MAGIC = b"IPS1"
GRID_HEADER = struct.Struct("<4sIIdB3x")
SINO_HEADER = struct.Struct("<4sIId")
KIND_CODES = {"activity": 0, "mu": 1, "label": 2}


class FormatError(ValueError):
    pass


def write_grid(path, grid):
    if isinstance(grid, LabelMap):
        kind, payload = "label", grid.values.astype(np.uint8)
    else:
        kind, payload = grid.kind, grid.values.astype("<f8")
    h, w = grid.values.shape
    with open(path, "wb") as f:
        f.write(GRID_HEADER.pack(GRID_MAGIC, w, h, grid.pixel_size, KIND_CODES[kind]))
        f.write(np.ascontiguousarray(payload).tobytes())


def read_grid(path):
    """Read an ``ImageGrid`` or, for label files, a ``LabelMap``."""
    data = Path(path).read_bytes()
    if len(data) < GRID_HEADER.size:
        raise FormatError(f"{path}: file shorter than the grid header")
    magic, w, h, pixel_size, code = GRID_HEADER.unpack_from(data)
    if magic != GRID_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    kinds = {v: k for k, v in KIND_CODES.items()}
    if code not in kinds:
        raise FormatError(f"{path}: unknown kind tag {code}")
    kind = kinds[code]
    itemsize = 1 if kind == "label" else 8
    if len(data) - GRID_HEADER.size != w * h * itemsize:
        raise FormatError(f"{path}: payload is {len(data) - GRID_HEADER.size} bytes, "
                          f"expected {w * h * itemsize}")
    if kind == "label":
        values = np.frombuffer(data, np.uint8, w * h, GRID_HEADER.size).reshape(h, w)
        return LabelMap(values.copy(), pixel_size)
    values = np.frombuffer(data, "<f8", w * h, GRID_HEADER.size).reshape(h, w)
    return ImageGrid(values.astype(np.float64), pixel_size, kind=kind)


def write_sino(path, sino: Sinogram):
    g = sino.geometry
    with open(path, "wb") as f:
        f.write(SINO_HEADER.pack(SINO_MAGIC, g.n_angles, g.n_bins, g.bin_spacing))
        f.write(sino.values.astype("<f8").tobytes())


def read_sino(path) -> Sinogram:
    data = Path(path).read_bytes()
    if len(data) < SINO_HEADER.size:
        raise FormatError(f"{path}: file shorter than the sinogram header")
    magic, n_angles, n_bins, spacing = SINO_HEADER.unpack_from(data)
    if magic != SINO_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if len(data) - SINO_HEADER.size != 8 * n_angles * n_bins:
        raise FormatError(f"{path}: payload does not match {n_angles}x{n_bins}")
    values = np.frombuffer(data, "<f8", n_angles * n_bins, SINO_HEADER.size)
    return Sinogram(SinogramGeometry(n_angles, n_bins, spacing), values.astype(np.float64))


def save_model(directory, model: SystemModel):
    """Write the per-bin factors plus a small ini describing the image grid.

    The geometric matrix itself is not stored; :func:`load_model` rebuilds it
    deterministically from the geometry.
    """
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    g = model.geometry
    for name, values in (("atten", model.atten_factors), ("sensitivity", model.sensitivity),
                         ("background", model.background)):
        write_sino(d / f"{name}.ips", Sinogram(g, values))
    cfg = configparser.ConfigParser()
    cfg["model"] = {
        "height": str(model.image_shape[0]),
        "width": str(model.image_shape[1]),
        "pixel_size": repr(model.pixel_size),
        "n_angles": str(g.n_angles),
        "n_bins": str(g.n_bins),
        "bin_spacing": repr(g.bin_spacing),
    }
    with open(d / "model.ini", "w") as f:
        cfg.write(f)


def load_model(directory) -> SystemModel:
    d = Path(directory)
    cfg = configparser.ConfigParser()
    if not cfg.read(d / "model.ini"):
        raise FormatError(f"{d}: missing model.ini")
    s = cfg["model"]
    geom = SinogramGeometry(s.getint("n_angles"), s.getint("n_bins"), s.getfloat("bin_spacing"))
    shape = (s.getint("height"), s.getint("width"))
    pixel_size = s.getfloat("pixel_size")
    factors = {}
    for name in ("atten", "sensitivity", "background"):
        sino = read_sino(d / f"{name}.ips")
        if sino.geometry != geom:
            raise FormatError(f"{name}.ips geometry does not match model.ini")
        factors[name] = sino.ravel()
    template = ImageGrid(np.zeros(shape), pixel_size)
    return SystemModel(build_system_matrix(template, geom), geom, shape, pixel_size,
                       factors["atten"], factors["sensitivity"], factors["background"])


TRAJECTORY_COLUMNS = ("iter", "loss", "grad_norm", "time_s", "psnr", "ssim", "ar", "rb", "ir")


def write_trajectory(path, records):
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(TRAJECTORY_COLUMNS)
        for r in records:
            m = r.metrics or {}
            writer.writerow([r.iteration, repr(r.loss), repr(r.grad_norm), f"{r.time_s:.6f}"]
                            + [repr(m[k]) if k in m else "" for k in ("psnr", "ssim", "ar", "rb", "ir")])


def read_trajectory(path) -> list[dict]:
    with open(path, newline="") as f:
        return [{k: (float(v) if v not in ("", None) else math.nan) for k, v in row.items()}
                for row in csv.DictReader(f)]


def export_png(grid, path, window=None):
    """16-bit grayscale PNG; values are mapped linearly from ``window`` to
    ``[0, 65535]`` and clamped."""
    from PIL import Image

    values = np.asarray(getattr(grid, "values", grid), dtype=np.float64)
    lo, hi = window if window is not None else (values.min(), values.max())
    if hi > lo:
        scaled = (np.clip(values, lo, hi) - lo) / (hi - lo)
    else:
        scaled = np.zeros_like(values)
    pixels = np.round(scaled * 65535).astype(np.uint16)
    Image.fromarray(pixels).save(path)
    return pixels


# -- run configuration --------------------------------------------------

RNG_NAME = "numpy.random.Generator(PCG64)"

DEFAULTS = {
    "phantom": {"size": "160", "pixel_size": "2.0", "tumor_x": "-0.18", "tumor_y": "0.41",
                "tumor_radius": "6.0", "seed": "none"},
    "simulate": {"angles": "180", "prompts": "200000", "randoms_frac": "0.35",
                 "scatter_frac": "0.30", "scatter_sigma": "10.0", "seed": "0"},
    "siren": {"hidden_layers": "4", "features": "256", "omega0": "25.0", "seed": "0"},
    "lbfgs": {"max_iters": "50", "memory": "10", "lr": "1.0", "checkpoint_every": "0"},
    "mlem": {"iters": "100"},
    "bsrem": {"beta": "0.355", "subsets": "10", "iters": "20", "alpha0": "1.0", "gamma": "0.1"},
    "run": {"threads": "0", "rng": RNG_NAME},
}

_TYPES = {
    "phantom": {"size": int, "pixel_size": float, "tumor_x": float, "tumor_y": float,
                "tumor_radius": float, "seed": "optional_int"},
    "simulate": {"angles": int, "prompts": float, "randoms_frac": float, "scatter_frac": float,
                 "scatter_sigma": float, "seed": int},
    "siren": {"hidden_layers": int, "features": int, "omega0": float, "seed": int},
    "lbfgs": {"max_iters": int, "memory": int, "lr": float, "checkpoint_every": int},
    "mlem": {"iters": int},
    "bsrem": {"beta": float, "subsets": int, "iters": int, "alpha0": float, "gamma": float},
    "run": {"threads": int, "rng": str},
}


class ConfigError(ValueError):
    pass


class RunConfig:
    """Sectioned key/value settings with typed access.

    Values come from the defaults, then an optional ini file, then explicit
    overrides. Unknown sections or keys are rejected.
    """

    def __init__(self, path=None, overrides=None):
        self._cp = configparser.ConfigParser()
        self._cp.read_dict(DEFAULTS)
        if path is not None:
            other = configparser.ConfigParser()
            if not other.read(path):
                raise ConfigError(f"cannot read config file {path}")
            self._merge({s: dict(other[s]) for s in other.sections()})
        if overrides:
            self._merge(overrides)
        self.validate()

    def _merge(self, values):
        for section, items in values.items():
            if section not in DEFAULTS:
                raise ConfigError(f"unknown config section [{section}]")
            for key, value in items.items():
                if value is None:
                    continue
                if key not in DEFAULTS[section]:
                    raise ConfigError(f"unknown config key {section}.{key}")
                self._cp[section][key] = "none" if value == "none" else str(value)

    def get(self, section, key):
        raw = self._cp[section][key]
        kind = _TYPES[section][key]
        try:
            if kind == "optional_int":
                return None if raw.lower() == "none" else int(raw)
            return kind(raw)
        except ValueError as exc:
            raise ConfigError(f"{section}.{key}: cannot parse {raw!r}") from exc

    def section(self, name) -> dict:
        return {key: self.get(name, key) for key in DEFAULTS[name]}

    def validate(self):
        for section in DEFAULTS:
            for key in DEFAULTS[section]:
                self.get(section, key)
        if self.get("run", "rng") != RNG_NAME:
            raise ConfigError(f"run.rng must be {RNG_NAME!r}")

    def write(self, path):
        with open(path, "w") as f:
            self._cp.write(f)
