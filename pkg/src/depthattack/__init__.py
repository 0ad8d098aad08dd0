"""Query-only adversarial texture attacks on monocular depth estimators.

The engine searches, with a decomposition-based evolutionary
multi-objective optimizer, for minimal block-wise texture perturbations
on a target object that steer a black-box depth estimator's output
toward an attacker-chosen depth map.
"""

from .encoding import Bounds, PerturbationEncoder, Solution, apply_to_image, decode_assignment
from .imaging import (
    BlockGrid,
    DepthMap,
    Homography,
    Image,
    PerturbationField,
    RegionMask,
    block_grid,
    load_dmap,
    load_image,
    save_dmap,
    save_image,
    warp_delta,
)
from .moead import MoeadConfig, run
from .objectives import TargetSpec, depth_error, perturbation_norm, pseudo_volume, reduction_rate
from .oracle import BoxSceneOracle, MeanIntensityOracle, PlaneOracle, RemoteOracle

__version__ = "0.1.0"
