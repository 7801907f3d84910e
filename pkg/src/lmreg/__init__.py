"""Landmark-based 2D/3D registration of radiographs against CT landmarks."""

__version__ = "0.1.0"

from .errors import CaseRejectedError, InvalidArgumentError, RegistrationDivergedError
from .estimators import HeatmapDecoder, LandmarkPoseRegressor, RegistrationFrameTransformer
from .geometry import (CameraIntrinsics, Pose, VolumeFrame, detector_to_registration,
                       project_landmarks, project_point, registration_to_detector, rodrigues,
                       transform_point, voxel_to_world)
from .heatmap import bce_with_logits, gaussian_heatmap, hard_argmax, soft_argmax, softmax2d
from .registration import (OptimizerConfig, RegistrationProblem, RegistrationResult,
                           composite_loss, estimate_pose, loss_gradient, pose_rmse,
                           reprojection_loss)

__all__ = [
    "CameraIntrinsics", "CaseRejectedError", "HeatmapDecoder", "InvalidArgumentError",
    "LandmarkPoseRegressor", "OptimizerConfig", "Pose", "RegistrationDivergedError",
    "RegistrationFrameTransformer", "RegistrationProblem", "RegistrationResult", "VolumeFrame",
    "bce_with_logits", "composite_loss", "detector_to_registration", "estimate_pose",
    "gaussian_heatmap", "hard_argmax", "loss_gradient", "pose_rmse", "project_landmarks",
    "project_point", "registration_to_detector", "reprojection_loss", "rodrigues",
    "soft_argmax", "softmax2d", "transform_point", "voxel_to_world",
]
