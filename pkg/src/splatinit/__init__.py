"""Motion initialization toolkit for monocular dynamic-scene Gaussian splatting.

Turns per-frame cameras, depth, optical flow and 2D tracks into refined 3D
scene flow, compact trajectory encodings and an initialized Gaussian set.
"""

from .config import PipelineConfig, load_config, save_config
from .detection import extract_regions, sampson_error, threshold_dynamic
from .encoding import (
    BasisSpec,
    DeformationParams,
    PolyFourierCurve,
    TrackCurve,
    eval_position,
    eval_positions,
    eval_rotation,
    eval_rotations,
    fit_curve,
    jacobian_position,
    jacobian_rotation,
)
from .errors import SplatinitError
from .formats import (
    DepthMap,
    FlowField,
    InstanceMaskFrame,
    TrackTable,
    read_flo,
    read_image_pfm,
    read_masks,
    read_pfm,
    read_tracks,
    write_flo,
    write_image_pfm,
    write_masks,
    write_pfm,
    write_tracks,
)
from .geometry import (
    CameraFrame,
    Quaternion,
    RigidTransform,
    fundamental_matrix,
    load_cameras,
    project,
    project_points,
    save_cameras,
    unproject,
    unproject_pixels,
)
from .initialize import estimate_scale, init_dynamic, log_magnitude, sample_static
from .losses import (
    LossWeights,
    combined_loss,
    l1_loss,
    loss_terms,
    pearson_depth_loss,
    ssim_loss,
)
from .pipeline import run_pipeline, run_stage
from .records import GaussianRecord, filter_by_instance, read_gaussians, write_gaussians
from .sceneflow import (
    InstanceMotion,
    Trajectory3D,
    assign_tracks,
    estimate_rigid,
    kabsch,
    lift_tracks,
    refine_instance,
)
from .tracking import DirectoryMaskProvider, MaskProvider, reverse_propagate, run_tracking

__version__ = "0.1.0"

__all__ = [
    "BasisSpec",
    "CameraFrame",
    "DeformationParams",
    "DepthMap",
    "DirectoryMaskProvider",
    "FlowField",
    "GaussianRecord",
    "InstanceMaskFrame",
    "InstanceMotion",
    "LossWeights",
    "MaskProvider",
    "PipelineConfig",
    "PolyFourierCurve",
    "Quaternion",
    "RigidTransform",
    "SplatinitError",
    "TrackCurve",
    "TrackTable",
    "Trajectory3D",
    "assign_tracks",
    "combined_loss",
    "estimate_rigid",
    "estimate_scale",
    "eval_position",
    "eval_positions",
    "eval_rotation",
    "eval_rotations",
    "extract_regions",
    "filter_by_instance",
    "fit_curve",
    "fundamental_matrix",
    "init_dynamic",
    "jacobian_position",
    "jacobian_rotation",
    "kabsch",
    "l1_loss",
    "lift_tracks",
    "load_cameras",
    "load_config",
    "log_magnitude",
    "loss_terms",
    "pearson_depth_loss",
    "project",
    "project_points",
    "read_flo",
    "read_gaussians",
    "read_image_pfm",
    "read_masks",
    "read_pfm",
    "read_tracks",
    "refine_instance",
    "reverse_propagate",
    "run_pipeline",
    "run_stage",
    "run_tracking",
    "sample_static",
    "sampson_error",
    "save_cameras",
    "save_config",
    "ssim_loss",
    "threshold_dynamic",
    "unproject",
    "unproject_pixels",
    "write_flo",
    "write_gaussians",
    "write_image_pfm",
    "write_masks",
    "write_pfm",
    "write_tracks",
]
