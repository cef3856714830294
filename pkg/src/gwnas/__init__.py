"""Budget-aware hardware-aware neural architecture search for MCU sensor nodes."""

from .archmodel import Architecture, InputShape, LayerSpec, Topology, expand, kernel_counts, max_cells
from .costmodel import OverheadConfig, ResourceProfile, profile
from .spacegen import ConstraintSet, SearchSpace, build_extensive_space, crop_space, is_feasible

__version__ = "0.1.0"

__all__ = [
    "Architecture", "InputShape", "LayerSpec", "Topology", "expand", "kernel_counts", "max_cells",
    "OverheadConfig", "ResourceProfile", "profile",
    "ConstraintSet", "SearchSpace", "build_extensive_space", "crop_space", "is_feasible",
]
