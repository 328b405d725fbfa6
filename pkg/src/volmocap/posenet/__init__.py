"""Two-stage volumetric pose network, readout, losses and the estimator."""

from .estimator import TrainConfig, VolumetricPoseEstimator, train
from .network import TwoStageNet, VoxelNet
from .readout import focal_loss, l1_joint_loss, pose_loss, soft_argmax, temporal_filter

__all__ = ["TrainConfig", "TwoStageNet", "VolumetricPoseEstimator", "VoxelNet", "focal_loss",
           "l1_joint_loss", "pose_loss", "soft_argmax", "temporal_filter", "train"]
