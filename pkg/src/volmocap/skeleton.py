"""15-keypoint body definition and the per-person skeleton container."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

JOINT_NAMES = (
    "neck", "nose", "pelvis",
    "l_shoulder", "l_elbow", "l_wrist", "l_hip", "l_knee", "l_ankle",
    "r_shoulder", "r_elbow", "r_wrist", "r_hip", "r_knee", "r_ankle",
)
NUM_JOINTS = len(JOINT_NAMES)
NECK = 0
NOSE = 1
PELVIS = 2

BONES = (
    (PELVIS, NECK), (NECK, NOSE),
    (NECK, 3), (3, 4), (4, 5), (PELVIS, 6), (6, 7), (7, 8),
    (NECK, 9), (9, 10), (10, 11), (PELVIS, 12), (12, 13), (13, 14),
)

# left/right pairs aggregated for per-part reports
JOINT_GROUPS = {
    "Shoulder": (3, 9),
    "Elbow": (4, 10),
    "Wrist": (5, 11),
    "Hip": (6, 12),
    "Knee": (7, 13),
    "Ankle": (8, 14),
}


@dataclass
class Skeleton3D:
    """One person at one frame: world-frame joints in meters."""

    joints: np.ndarray
    id: int = 0
    confidence: np.ndarray | None = None
    status: str = "ok"
    score: float | None = None

    def __post_init__(self):
        self.joints = np.asarray(self.joints, dtype=float).reshape(NUM_JOINTS, 3)
        if self.confidence is None:
            self.confidence = np.ones(NUM_JOINTS)
        self.confidence = np.asarray(self.confidence, dtype=float).reshape(NUM_JOINTS)
        if not np.all(np.isfinite(self.joints)):
            raise ValueError("skeleton joints must be finite")
        if self.score is None:
            self.score = float(self.confidence.mean())

    @property
    def pelvis(self) -> np.ndarray:
        return self.joints[PELVIS]

    @property
    def neck(self) -> np.ndarray:
        return self.joints[NECK]


def bone_lengths(joints) -> np.ndarray:
    joints = np.asarray(joints)
    return np.array([np.linalg.norm(joints[a] - joints[b]) for a, b in BONES])
