"""Bimodal learning separation from low-noise LPN: task samplers, learners,
reductions and a bit-agreement protocol built on them."""

from .gf2 import BitMatrix, BitVec
from .rng import Rng
from .taskgen import SeparationTask, TaskParams

__all__ = ["BitMatrix", "BitVec", "Rng", "SeparationTask", "TaskParams"]
__version__ = "0.1.0"
