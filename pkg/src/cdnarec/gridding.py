"""Automatic spot gridding from autocorrelated intensity profiles.

For each axis the image is collapsed to a profile of column means, the
profile's autocorrelation gives the spot spacing, peaks of the smoothed
profile give spot centres, and the midpoints between neighbouring centres
give the grid lines.  The horizontal lines come from repeating the procedure
on the transposed image.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import GriddingError, InsufficientPeaksError, NoPeriodicityError
from .raster import FieldMap, transpose

GRID_VERSION = 1


@dataclass(frozen=True)
class Autocorrelation:
    values: np.ndarray
    degenerate: bool = False


@dataclass
class GridGeometry:
    vertical_lines: list[float]
    horizontal_lines: list[float]
    col_peaks: list[float]
    row_peaks: list[float]
    period_x: float
    period_y: float
    extent: tuple[int, int] = (0, 0)  # (width, height)

    @property
    def n_cols(self) -> int:
        return len(self.vertical_lines) - 1

    @property
    def n_rows(self) -> int:
        return len(self.horizontal_lines) - 1

    def to_json(self) -> str:
        doc = {
            "version": GRID_VERSION,
            "extent": list(self.extent),
            "vertical_lines": [float(v) for v in self.vertical_lines],
            "horizontal_lines": [float(v) for v in self.horizontal_lines],
            "col_peaks": [float(v) for v in self.col_peaks],
            "row_peaks": [float(v) for v in self.row_peaks],
            "period_x": float(self.period_x),
            "period_y": float(self.period_y),
        }
        return json.dumps(doc, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "GridGeometry":
        doc = json.loads(text)
        if doc.get("version") != GRID_VERSION:
            raise ValueError(f"unsupported grid document version {doc.get('version')!r}")
        return cls(
            vertical_lines=[float(v) for v in doc["vertical_lines"]],
            horizontal_lines=[float(v) for v in doc["horizontal_lines"]],
            col_peaks=[float(v) for v in doc["col_peaks"]],
            row_peaks=[float(v) for v in doc["row_peaks"]],
            period_x=float(doc["period_x"]),
            period_y=float(doc["period_y"]),
            extent=tuple(int(v) for v in doc["extent"]),
        )


@dataclass(frozen=True)
class Cell:
    x0: int
    y0: int
    x1: int
    y1: int
    row_index: int
    col_index: int

    @property
    def area(self) -> int:
        return (self.x1 - self.x0) * (self.y1 - self.y0)


@dataclass
class GridConfig:
    separation_factor: float = 0.5
    prominence_factor: float = 0.1
    initial_smoothing: int = 1  # the autocorrelation itself does the smoothing
    min_snr: float = 4.0        # profile variance over the variance pure noise would give


def column_profile(r: FieldMap) -> np.ndarray:
    return r.data.mean(axis=0)


def noise_sigma(r: FieldMap) -> float:
    """Robust pixel-noise estimate from the median absolute horizontal
    difference (the MAD of a difference of two iid samples is 0.6745·√2·σ)."""
    if r.width < 2:
        return 0.0
    d = np.abs(np.diff(r.data, axis=1))
    return float(np.median(d) / (0.6745 * np.sqrt(2.0)))


def _check_structure(r: FieldMap, profile: np.ndarray, min_snr: float) -> None:
    """Column means of pure noise have variance σ²/height; demand more than that."""
    sigma = noise_sigma(r)
    if sigma > 0 and float(profile.var()) < min_snr * sigma * sigma / r.height:
        raise NoPeriodicityError("profile variation is within the noise level")


def smooth(p: np.ndarray, width: int) -> np.ndarray:
    """Centred moving average with edge replication; even widths are bumped
    to the next odd width so symmetric peaks stay put."""
    width = max(1, int(width))
    if width % 2 == 0:
        width += 1
    if width == 1:
        return np.asarray(p, dtype=np.float64).copy()
    h = width // 2
    padded = np.pad(np.asarray(p, dtype=np.float64), h, mode="edge")
    kernel = np.full(width, 1.0 / width)
    return np.convolve(padded, kernel, mode="valid")


def autocorrelate(p: Sequence[float]) -> Autocorrelation:
    """Biased, mean-removed autocorrelation for lags 0..len//2, scaled to a(0)=1."""
    p = np.asarray(p, dtype=np.float64)
    if p.size < 2:
        raise ValueError("autocorrelation needs at least 2 samples")
    q = p - p.mean()
    max_lag = p.size // 2
    energy = float(np.dot(q, q))
    # relative floor: mean removal leaves rounding residue on constant input
    if energy <= 1e-24 * max(1.0, float(np.dot(p, p))):
        return Autocorrelation(np.zeros(max_lag + 1), degenerate=True)
    n = q.size
    a = np.array([np.dot(q[:n - tau], q[tau:]) for tau in range(max_lag + 1)]) / energy
    return Autocorrelation(a)


def estimate_period(a: Autocorrelation, min_lag: int = 2, min_value: float = 0.2) -> float:
    """Lag of the first autocorrelation maximum at ``tau >= min_lag`` reaching
    ``min_value``, refined by a parabola through its neighbours."""
    if a.degenerate:
        raise NoPeriodicityError("profile is constant")
    v = a.values
    for tau in range(max(min_lag, 1), v.size - 1):
        if v[tau] > v[tau - 1] and v[tau] >= v[tau + 1] and v[tau] >= min_value:
            denom = v[tau - 1] - 2.0 * v[tau] + v[tau + 1]
            offset = 0.0 if denom == 0 else 0.5 * (v[tau - 1] - v[tau + 1]) / denom
            return float(tau + offset)
    raise NoPeriodicityError("no autocorrelation peak above threshold")


def _prominence(p: np.ndarray, start: int, end: int) -> float:
    """Height of the plateau ``p[start..end]`` above its higher key col."""
    height = p[start]
    i = start
    left_min = height
    while i > 0 and p[i - 1] <= height:
        i -= 1
        left_min = min(left_min, p[i])
    j = end
    right_min = height
    while j < p.size - 1 and p[j + 1] <= height:
        j += 1
        right_min = min(right_min, p[j])
    return float(height - max(left_min, right_min))


def find_peaks(p: Sequence[float], min_separation: float = 1, min_prominence: float = 0.0) -> list[int]:
    """Strict local maxima (plateaus report their first index) whose
    prominence exceeds ``min_prominence``.  Of two maxima closer than
    ``min_separation`` the higher survives; equal heights keep the lower index."""
    if min_separation < 1:
        raise ValueError("min_separation must be >= 1")
    p = np.asarray(p, dtype=np.float64)
    n = p.size
    candidates = []
    i = 1
    while i < n - 1:
        if p[i] > p[i - 1]:
            j = i
            while j + 1 < n and p[j + 1] == p[i]:
                j += 1
            if j + 1 < n and p[j + 1] < p[i]:
                if _prominence(p, i, j) > min_prominence:
                    candidates.append(i)
            i = j + 1
        else:
            i += 1

    kept: list[int] = []
    for idx in sorted(candidates, key=lambda c: (-p[c], c)):
        if all(abs(idx - other) >= min_separation for other in kept):
            kept.append(idx)
    return sorted(kept)


def grid_lines_from_peaks(peaks: Sequence[float], period: float, extent: float) -> list[float]:
    if len(peaks) < 2:
        raise InsufficientPeaksError(f"need at least 2 peaks, found {len(peaks)}")
    if period <= 0:
        raise ValueError("period must be positive")
    pk = sorted(float(v) for v in peaks)
    mids = [(a + b) / 2.0 for a, b in zip(pk, pk[1:])]
    first = min(max(pk[0] - period / 2.0, 0.0), float(extent))
    last = min(max(pk[-1] + period / 2.0, 0.0), float(extent))
    return [first, *mids, last]


def _axis(r: FieldMap, axis: str, cfg: GridConfig):
    raw = column_profile(r)
    try:
        _check_structure(r, raw, cfg.min_snr)
        period = estimate_period(autocorrelate(smooth(raw, cfg.initial_smoothing)))
        prof = smooth(raw, max(3, round(period / 4)))
        floor = cfg.prominence_factor * float(prof.max() - prof.min())
        peaks = find_peaks(prof, max(1.0, cfg.separation_factor * period), floor)
        lines = grid_lines_from_peaks(peaks, period, r.width)
    except GriddingError as exc:
        raise type(exc)(str(exc), axis=axis) from None
    return lines, [float(v) for v in peaks], period


def compute_grid(r: FieldMap, cfg: GridConfig | None = None) -> GridGeometry:
    cfg = cfg or GridConfig()
    v_lines, col_peaks, px = _axis(r, "x", cfg)
    h_lines, row_peaks, py = _axis(transpose(r), "y", cfg)
    return GridGeometry(v_lines, h_lines, col_peaks, row_peaks, px, py,
                        extent=(r.width, r.height))


def _pixel_bounds(lines: Sequence[float]) -> list[int]:
    return [int(round(v)) for v in lines]


def cells(g: GridGeometry) -> list[Cell]:
    """Half-open cells in row-major order, line positions rounded to pixels."""
    xs = _pixel_bounds(g.vertical_lines)
    ys = _pixel_bounds(g.horizontal_lines)
    out = []
    for ri, (y0, y1) in enumerate(zip(ys, ys[1:])):
        for ci, (x0, x1) in enumerate(zip(xs, xs[1:])):
            out.append(Cell(x0, y0, x1, y1, ri, ci))
    return out
