"""Configuration and end-to-end orchestration: enhance, grid, segment, resize."""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from typing import Any

from .gabor import GaborParams, enhance
from .gridding import GridConfig, GridGeometry, compute_grid
from .mann import TrainConfig
from .raster import Raster, resize_bilinear
from .recognition import NetConfig
from .segmentation import SegmentConfig, SpotSegmentation, segment

SOURCES = ("raw", "enhanced")


@dataclass
class GaborConfig:
    k: float = math.pi / 2
    sigma: float = 2 * math.pi
    orientations: list[float] = field(default_factory=lambda: [0.0, math.pi / 2])
    half_width: int | None = None
    border: str = "replicate"

    def params(self) -> list[GaborParams]:
        return [GaborParams(self.k, self.sigma, phi, self.half_width) for phi in self.orientations]


@dataclass
class PipelineConfig:
    gabor: GaborConfig = field(default_factory=GaborConfig)
    gridding: GridConfig = field(default_factory=GridConfig)
    segmentation: SegmentConfig = field(default_factory=SegmentConfig)
    network: NetConfig = field(default_factory=NetConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    grid_source: str = "raw"
    segment_source: str = "raw"
    seed: int = 0

    def __post_init__(self):
        for name in ("grid_source", "segment_source"):
            if getattr(self, name) not in SOURCES:
                raise ValueError(f"{name} must be one of {SOURCES}")
        if self.segmentation.combine not in ("and", "or"):
            raise ValueError("segmentation.combine must be 'and' or 'or'")

    @classmethod
    def from_dict(cls, doc: dict[str, Any]) -> "PipelineConfig":
        sections = {f.name: f for f in dataclasses.fields(cls)}
        unknown = set(doc) - set(sections)
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        kwargs = {}
        for name, value in doc.items():
            f = sections[name]
            default = f.default_factory() if f.default_factory is not dataclasses.MISSING else None
            if dataclasses.is_dataclass(default):
                if not isinstance(value, dict):
                    raise ValueError(f"config section {name!r} must be an object")
                allowed = {g.name for g in dataclasses.fields(default)}
                bad = set(value) - allowed
                if bad:
                    raise ValueError(f"unknown keys in {name!r}: {sorted(bad)}")
                kwargs[name] = dataclasses.replace(default, **value)
            else:
                kwargs[name] = value
        return cls(**kwargs)

    @classmethod
    def from_json(cls, text: str) -> "PipelineConfig":
        return cls.from_dict(json.loads(text))

    def to_json(self) -> str:
        return json.dumps(dataclasses.asdict(self), indent=2)


@dataclass
class PipelineResult:
    enhanced: Raster
    grid: GridGeometry
    segmentation: SpotSegmentation
    matrix: Raster  # combined mask resized to the network input size


def run(image: Raster, cfg: PipelineConfig | None = None) -> PipelineResult:
    cfg = cfg or PipelineConfig()
    enhanced = enhance(image, cfg.gabor.params(), cfg.gabor.border)
    grid = compute_grid(image if cfg.grid_source == "raw" else enhanced, cfg.gridding)
    seg_in = image if cfg.segment_source == "raw" else enhanced
    seg = segment(seg_in, grid, cfg.segmentation, original=image)
    seg.panels["A_enhanced"] = enhanced
    matrix = resize_bilinear(seg.mask.to_raster(), cfg.network.in_w, cfg.network.in_h)
    return PipelineResult(enhanced, grid, seg, matrix)
