"""Zero-padded OTFS link simulation with iterative rake detection."""

from .channel import DopplerSpreadSet, PathSet, apply_channel, discretize, eva_paths
from .detect import DetectorConfig, DetectorOutput, count_ops, detect
from .grid import FrameDims, OtfsFrame, map_bits, qam

__all__ = [
    "DetectorConfig",
    "DetectorOutput",
    "DopplerSpreadSet",
    "FrameDims",
    "OtfsFrame",
    "PathSet",
    "apply_channel",
    "count_ops",
    "detect",
    "discretize",
    "eva_paths",
    "map_bits",
    "qam",
]

__version__ = "0.1.0"
