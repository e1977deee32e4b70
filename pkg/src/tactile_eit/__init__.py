"""Simulation twin of a lattice-patterned flexible EIT tactile sensor.

Subpackages cover the full pipeline: sensor geometry and meshing, the
forward boundary-voltage problem, touch phantoms, the lattice design sweep,
image reconstruction (regularized and learned), dataset generation with
dihedral augmentation, image-quality metrics, touch-gesture classification,
and a streaming session service for interactive use.
"""

from .geometry import (CHANNEL, MATRIX, RASTER_N, SIGMA0_DEFAULT,
                       ConductivityField, Mesh, ReconstructionImage,
                       SensorGeometry, baseline_field, build_lattice_mask,
                       generate_mesh, rasterize)
from .forward import (ForwardSolver, MeasurementFrame, Protocol,
                      build_protocol, simulate_frame)
from .phantom import (TouchPhantom, TouchPoint, apply_phantom,
                      ground_truth_image, random_phantom)

__all__ = [
    "CHANNEL", "MATRIX", "RASTER_N", "SIGMA0_DEFAULT",
    "ConductivityField", "Mesh", "ReconstructionImage", "SensorGeometry",
    "baseline_field", "build_lattice_mask", "generate_mesh", "rasterize",
    "ForwardSolver", "MeasurementFrame", "Protocol", "build_protocol",
    "simulate_frame",
    "TouchPhantom", "TouchPoint", "apply_phantom", "ground_truth_image",
    "random_phantom",
]
