"""Spot/background segmentation by combined global and per-cell thresholds.

Chain: contrast stretch -> logarithmic transform -> Otsu threshold over the
whole image, Otsu threshold inside each grid cell, then the two masks are
combined (conjunction by default).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import DegenerateThresholdError
from .gridding import GridGeometry, cells
from .raster import FieldMap, Raster

STATS_VERSION = 1


@dataclass(frozen=True, eq=False)
class Mask:
    bits: np.ndarray

    def __post_init__(self):
        bits = np.array(self.bits, dtype=bool)
        if bits.ndim != 2:
            raise ValueError("mask must be 2-D")
        bits.setflags(write=False)
        object.__setattr__(self, "bits", bits)

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    @property
    def area(self) -> int:
        return int(self.bits.sum())

    def to_raster(self) -> Raster:
        return Raster(self.bits.astype(np.float64))

    def __eq__(self, other):
        return isinstance(other, Mask) and np.array_equal(self.bits, other.bits)


@dataclass
class SpotStats:
    row_index: int
    col_index: int
    center: Optional[tuple[float, float]]  # (x, y); None when the cell is empty
    area: int
    fg_mean: Optional[float]
    bg_mean: Optional[float]
    circularity: float

    def to_dict(self) -> dict:
        return {
            "row": self.row_index,
            "col": self.col_index,
            "center": None if self.center is None else [float(c) for c in self.center],
            "area": self.area,
            "fg_mean": self.fg_mean,
            "bg_mean": self.bg_mean,
            "circularity": self.circularity,
        }


@dataclass
class SegmentConfig:
    low_pct: float = 1.0
    high_pct: float = 99.0
    beta: float = 19.0
    bins: int = 256
    contrast_guard: float = 0.1
    combine: str = "and"


@dataclass
class SpotSegmentation:
    mask: Mask
    stats: list[SpotStats]
    adjusted: Raster
    logged: Raster
    global_mask: Mask
    local_mask: Mask
    panels: dict = field(default_factory=dict)

    def stats_json(self) -> str:
        return json.dumps({"version": STATS_VERSION,
                           "cells": [s.to_dict() for s in self.stats]}, indent=2)


def adjust(r: FieldMap, low_pct: float = 1.0, high_pct: float = 99.0) -> Raster:
    """Linear stretch sending the two percentiles to 0 and 1, clipping outside."""
    if not 0.0 <= low_pct < high_pct <= 100.0:
        raise ValueError("need 0 <= low_pct < high_pct <= 100")
    lo, hi = np.percentile(r.data, [low_pct, high_pct])
    if hi <= lo:
        return Raster(np.zeros_like(r.data))
    return Raster(np.clip((r.data - lo) / (hi - lo), 0.0, 1.0))


def log_transform(r: Raster, beta: float = 19.0) -> Raster:
    if beta <= 0:
        raise ValueError("beta must be positive")
    out = np.log1p(beta * r.data) / math.log1p(beta)
    return Raster(np.clip(out, 0.0, 1.0))


def _bucket(values: np.ndarray, bins: int) -> np.ndarray:
    # right-closed buckets: a value on an upper edge belongs to the lower bucket,
    # so "value > threshold" and "bucket > t" agree
    idx = np.ceil(values * bins).astype(np.int64) - 1
    return np.clip(idx, 0, bins - 1)


def _otsu_bucket(values: np.ndarray, bins: int) -> int:
    if bins < 2:
        raise ValueError("bins must be >= 2")
    hist = np.bincount(_bucket(values.ravel(), bins), minlength=bins).astype(np.float64)
    centers = (np.arange(bins) + 0.5) / bins
    total = hist.sum()
    best_t, best_var = -1, -1.0
    w0 = 0.0
    s0 = 0.0
    s_all = float(np.dot(hist, centers))
    for t in range(bins - 1):
        w0 += hist[t]
        s0 += hist[t] * centers[t]
        w1 = total - w0
        if w0 == 0 or w1 == 0:
            continue
        mu0 = s0 / w0
        mu1 = (s_all - s0) / w1
        var = w0 * w1 * (mu0 - mu1) ** 2
        if var > best_var:
            best_t, best_var = t, var
    if best_t < 0:
        raise DegenerateThresholdError("all pixels fall in one histogram bucket")
    return best_t


def otsu_threshold(r: FieldMap, bins: int = 256) -> float:
    """Between-class-variance maximising threshold (upper edge of the chosen
    bucket); ties resolve to the lower threshold."""
    return (_otsu_bucket(np.asarray(r.data), bins) + 1) / bins


def _chain(r: Raster, cfg: SegmentConfig) -> tuple[Raster, Raster]:
    adjusted = adjust(r, cfg.low_pct, cfg.high_pct)
    return adjusted, log_transform(adjusted, cfg.beta)


def global_mask(r: Raster, cfg: SegmentConfig | None = None) -> Mask:
    cfg = cfg or SegmentConfig()
    _, logged = _chain(r, cfg)
    return _threshold_whole(logged, cfg.bins)


def _threshold_whole(img: Raster, bins: int) -> Mask:
    return Mask(_bucket(img.data, bins) > _otsu_bucket(img.data, bins))


def local_mask(r: FieldMap, g: GridGeometry, contrast_guard: float = 0.1,
               bins: int = 256) -> Mask:
    """Otsu threshold computed separately inside each grid cell.

    Cells whose intensity range is below ``contrast_guard`` are left entirely
    background; pixels outside the grid are background.
    """
    data = r.data
    bits = np.zeros(data.shape, dtype=bool)
    for c in cells(g):
        y0, y1 = max(c.y0, 0), min(c.y1, r.height)
        x0, x1 = max(c.x0, 0), min(c.x1, r.width)
        if y1 <= y0 or x1 <= x0:
            continue
        block = data[y0:y1, x0:x1]
        if float(block.max() - block.min()) < contrast_guard:
            continue
        try:
            t = _otsu_bucket(block, bins)
        except DegenerateThresholdError:
            continue
        bits[y0:y1, x0:x1] = _bucket(block, bins) > t
    return Mask(bits)


def combine_masks(global_m: Mask, local_m: Mask, mode: str = "and") -> Mask:
    if global_m.bits.shape != local_m.bits.shape:
        raise ValueError(f"mask shapes differ: {global_m.bits.shape} vs {local_m.bits.shape}")
    if mode == "and":
        return Mask(global_m.bits & local_m.bits)
    if mode == "or":
        return Mask(global_m.bits | local_m.bits)
    raise ValueError(f"unknown combine mode {mode!r}")


def circularity(bits: np.ndarray) -> float:
    """4π·area/perimeter², perimeter being the crack-edge length scaled by π/4
    (the mean projection correction for isotropic shapes).  Capped at 1."""
    area = int(bits.sum())
    if area == 0:
        return 0.0
    b = np.pad(bits, 1)
    cracks = int(np.sum(b[:, 1:] != b[:, :-1]) + np.sum(b[1:, :] != b[:-1, :]))
    perim = cracks * math.pi / 4.0
    return min(1.0, 4.0 * math.pi * area / perim ** 2)


def spot_stats(mask: Mask, original: FieldMap, g: GridGeometry) -> list[SpotStats]:
    out = []
    for c in cells(g):
        y0, y1 = max(c.y0, 0), min(c.y1, original.height)
        x0, x1 = max(c.x0, 0), min(c.x1, original.width)
        fg = mask.bits[y0:y1, x0:x1]
        vals = original.data[y0:y1, x0:x1]
        area = int(fg.sum())
        if area:
            ys, xs = np.nonzero(fg)
            center = (float(xs.mean() + x0), float(ys.mean() + y0))
            fg_mean = float(vals[fg].mean())
        else:
            center, fg_mean = None, None
        bg = ~fg
        bg_mean = float(vals[bg].mean()) if bg.any() else None
        out.append(SpotStats(c.row_index, c.col_index, center, area, fg_mean, bg_mean,
                             circularity(fg)))
    return out


def segment(r: Raster, g: GridGeometry, cfg: SegmentConfig | None = None,
            original: FieldMap | None = None) -> SpotSegmentation:
    """Full segmentation of ``r`` on grid ``g``.

    Spot statistics are measured on ``original`` (defaults to ``r``) so the
    enhancement chain does not distort intensity ratios.
    """
    cfg = cfg or SegmentConfig()
    adjusted, logged = _chain(r, cfg)
    gm = _threshold_whole(logged, cfg.bins)
    lm = local_mask(logged, g, cfg.contrast_guard, cfg.bins)
    combined = combine_masks(gm, lm, cfg.combine)
    stats = spot_stats(combined, original if original is not None else r, g)
    panels = {
        "A_enhanced": r,
        "B_adjusted": adjusted,
        "C_log": logged,
        "D_global": gm.to_raster(),
        "E_local": lm.to_raster(),
        "F_combined": combined.to_raster(),
    }
    return SpotSegmentation(combined, stats, adjusted, logged, gm, lm, panels)
