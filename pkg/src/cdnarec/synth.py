"""Seeded synthetic microarray scenes with exact ground truth.

A single block of ``rows x cols`` spots on a regular lattice.  Each spot has
a radial quadratic profile; jitter, dropout and additive Gaussian noise
model the imperfections of real slides.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields

import numpy as np

from .errors import GridCountMismatchError
from .gridding import GridGeometry
from .raster import Raster
from .segmentation import Mask

# ground-truth contour, as a fraction of spot contrast
MASK_LEVEL = 0.1


@dataclass(frozen=True)
class SynthSpec:
    rows: int = 4
    cols: int = 4
    spacing: int = 16
    radius: float = 5.0
    margin: int = 8
    jitter: float = 0.0
    dropout: float = 0.0
    spot_peak: float = 0.9
    background: float = 0.1
    noise_sigma: float = 0.02
    seed: int = 0

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise ValueError("rows and cols must be positive")
        if self.radius <= 0 or not self.spacing > 2 * self.radius:
            raise ValueError("need spacing > 2 * radius > 0")
        if self.margin < 0 or self.jitter < 0 or self.noise_sigma < 0:
            raise ValueError("margin, jitter and noise_sigma must be non-negative")
        if not 0.0 <= self.dropout <= 1.0:
            raise ValueError("dropout must lie in [0, 1]")
        if not 0.0 <= self.background < self.spot_peak <= 1.0:
            raise ValueError("need 0 <= background < spot_peak <= 1")

    @property
    def width(self) -> int:
        return 2 * self.margin + self.cols * self.spacing

    @property
    def height(self) -> int:
        return 2 * self.margin + self.rows * self.spacing

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2)

    @classmethod
    def from_dict(cls, doc: dict) -> "SynthSpec":
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown synth keys: {sorted(unknown)}")
        return cls(**doc)


@dataclass
class GroundTruth:
    grid: GridGeometry
    mask: Mask
    present: np.ndarray  # (rows, cols) booleans
    centers: np.ndarray  # (rows, cols, 2) spot centres as (x, y)


def generate(s: SynthSpec) -> tuple[Raster, GroundTruth]:
    rng = np.random.default_rng(s.seed)
    jitter = rng.uniform(-s.jitter, s.jitter, size=(s.rows, s.cols, 2))
    present = rng.uniform(size=(s.rows, s.cols)) >= s.dropout
    if s.dropout >= 1.0:
        present[:] = False

    nominal_x = s.margin + s.spacing * np.arange(s.cols) + s.spacing / 2.0
    nominal_y = s.margin + s.spacing * np.arange(s.rows) + s.spacing / 2.0
    centers = np.empty((s.rows, s.cols, 2))
    centers[..., 0] = nominal_x[None, :] + jitter[..., 0]
    centers[..., 1] = nominal_y[:, None] + jitter[..., 1]

    yy, xx = np.mgrid[0:s.height, 0:s.width].astype(np.float64)
    term = np.zeros((s.height, s.width))
    for ri in range(s.rows):
        for ci in range(s.cols):
            if not present[ri, ci]:
                continue
            cx, cy = centers[ri, ci]
            d2 = ((xx - cx) ** 2 + (yy - cy) ** 2) / s.radius ** 2
            np.maximum(term, np.maximum(0.0, 1.0 - d2), out=term)

    contrast = s.spot_peak - s.background
    clean = s.background + contrast * term
    noise = rng.normal(0.0, s.noise_sigma, size=clean.shape)
    image = Raster(np.clip(clean + noise, 0.0, 1.0))
    mask = Mask(contrast * term > MASK_LEVEL * contrast)

    v_lines = [float(s.margin + i * s.spacing) for i in range(s.cols + 1)]
    h_lines = [float(s.margin + i * s.spacing) for i in range(s.rows + 1)]
    grid = GridGeometry(v_lines, h_lines, [float(v) for v in nominal_x],
                        [float(v) for v in nominal_y], float(s.spacing), float(s.spacing),
                        extent=(s.width, s.height))
    return image, GroundTruth(grid, mask, present, centers)


def dice(a: Mask, b: Mask) -> float:
    if a.bits.shape != b.bits.shape:
        raise ValueError(f"mask shapes differ: {a.bits.shape} vs {b.bits.shape}")
    na, nb = int(a.bits.sum()), int(b.bits.sum())
    if na + nb == 0:
        return 1.0
    return 2.0 * int(np.logical_and(a.bits, b.bits).sum()) / (na + nb)


def grid_error(gt: GridGeometry, est: GridGeometry) -> tuple[float, float]:
    """Mean and max absolute line displacement over both axes."""
    diffs = []
    for axis, g_lines, e_lines in (("x", gt.vertical_lines, est.vertical_lines),
                                   ("y", gt.horizontal_lines, est.horizontal_lines)):
        if len(g_lines) != len(e_lines):
            raise GridCountMismatchError(axis, len(g_lines), len(e_lines))
        diffs.append(np.abs(np.sort(g_lines) - np.sort(e_lines)))
    d = np.concatenate(diffs)
    return float(d.mean()), float(d.max())
