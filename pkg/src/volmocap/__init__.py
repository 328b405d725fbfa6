"""Multi-view volumetric 3D pose estimation for closely interacting people."""

from .centers import CenterEstimator, PersonAnchors, greedy_reconstruct, track_anchors
from .evaluation import average_precision, center_error, match_poses, mpjpe, pck
from .exceptions import (DegenerateAnchors, DegenerateDepth, DivergedLoss, EmptyPool, FrameMismatch,
                         NoMatches, RankDeficient, SchemaError, ShapeMismatch, VolMocapError)
from .geometry import Camera, project, ring_rig, triangulate
from .pipeline import InferenceConfig, SequenceInference
from .posenet import TrainConfig, VolumetricPoseEstimator
from .skeleton import JOINT_NAMES, NUM_JOINTS, Skeleton3D
from .synth import AugmentConfig, MoCapClip
from .volumes import UnposeTransform, VolumeGrid, compute_unpose

__version__ = "0.1.0"

__all__ = [
    "AugmentConfig", "Camera", "CenterEstimator", "DegenerateAnchors", "DegenerateDepth", "DivergedLoss",
    "EmptyPool", "FrameMismatch", "InferenceConfig", "JOINT_NAMES", "MoCapClip", "NUM_JOINTS", "NoMatches",
    "PersonAnchors", "RankDeficient", "SchemaError", "SequenceInference", "ShapeMismatch", "Skeleton3D",
    "TrainConfig", "UnposeTransform", "VolMocapError", "VolumeGrid", "VolumetricPoseEstimator",
    "average_precision", "center_error", "compute_unpose", "greedy_reconstruct", "match_poses", "mpjpe",
    "pck", "project", "ring_rig", "track_anchors", "triangulate",
]
