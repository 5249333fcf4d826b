"""Register dynamic Gaussian-splat scenes via clustered keypoints + RANSAC/ICP."""

from .cascade import CascadeMode, SceneSnapshot, cascade_extract, cascade_extract_bypass, make_snapshot
from .gaussian_model import (
    DeformationField,
    FieldKind,
    GaussianCloud,
    RigidTransform,
    apply_deformation,
    bbox_diagonal,
    covariance_from_params,
    evaluate_gaussian,
    identity_field,
    rbf_field,
    rigid_field,
    sinusoidal_field,
    transform_cloud,
)
from .metrics import PoseError, pose_error, rotation_error_deg, summarize, translation_error
from .ply_io import load_ply_gaussians, save_ply_gaussians
from .registration import (
    IcpParams,
    RansacParams,
    RegistrationReport,
    estimate_rigid,
    fpfh_descriptors,
    icp_refine,
    ransac_global,
    register_scenes,
)
from .runner import PairTemplate, RunConfig, run_ablation, run_bench, run_registration
from .swc import ClusterAssignment, KeypointSet, SwcParams, kmeans, masked_keypoints, opacity_mask, swc
from .synth import PairSpec, SceneSpec, generate_cloud, make_pair, random_rigid_transform

__all__ = [
    "CascadeMode", "SceneSnapshot", "cascade_extract", "cascade_extract_bypass", "make_snapshot",
    "DeformationField", "FieldKind", "GaussianCloud", "RigidTransform",
    "apply_deformation", "bbox_diagonal", "covariance_from_params", "evaluate_gaussian",
    "identity_field", "rbf_field", "rigid_field", "sinusoidal_field", "transform_cloud",
    "PoseError", "pose_error", "rotation_error_deg", "summarize", "translation_error",
    "load_ply_gaussians", "save_ply_gaussians",
    "IcpParams", "RansacParams", "RegistrationReport", "estimate_rigid",
    "fpfh_descriptors", "icp_refine", "ransac_global", "register_scenes",
    "PairTemplate", "RunConfig", "run_ablation", "run_bench", "run_registration",
    "ClusterAssignment", "KeypointSet", "SwcParams", "kmeans", "masked_keypoints",
    "opacity_mask", "swc",
    "PairSpec", "SceneSpec", "generate_cloud", "make_pair", "random_rigid_transform",
]

__version__ = "0.1.0"
