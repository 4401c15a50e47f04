"""Microarray spot gridding, segmentation and matrix-network recognition."""

from .errors import CdnaError
from .gabor import GaborParams, enhance, gabor_kernel
from .gridding import GridConfig, GridGeometry, cells, compute_grid
from .mann import MannNetwork, TrainConfig, TrainingTrace, forward, init_network, train
from .pipeline import PipelineConfig, run
from .raster import Raster, load_raster, save_pgm
from .recognition import Gallery, enroll, evaluate, match
from .segmentation import Mask, SegmentConfig, segment
from .synth import SynthSpec, dice, generate, grid_error

__version__ = "0.1.0"
