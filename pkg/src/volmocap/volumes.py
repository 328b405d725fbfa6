"""Person-centred voxel grids: unposing, heatmap feature volumes and anchor fields."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .exceptions import DegenerateAnchors
from .geometry import Camera, project_many, sample_bilinear_many

DEFAULT_ANCHOR_SIGMA = 0.05


@dataclass(frozen=True)
class UnposeTransform:
    """Rigid map world -> standard frame: ``x_std = R @ (x - origin)``."""

    R: np.ndarray
    origin: np.ndarray

    @property
    def translation(self) -> np.ndarray:
        return -self.R @ self.origin

    def apply(self, points) -> np.ndarray:
        return (np.asarray(points, dtype=float) - self.origin) @ self.R.T

    def inverse(self, points) -> np.ndarray:
        return np.asarray(points, dtype=float) @ self.R + self.origin


def shortest_arc(a, b=(0.0, 0.0, 1.0)) -> np.ndarray:
    """Rotation matrix carrying unit direction ``a`` onto ``b`` along the
    shortest arc. Antiparallel inputs rotate by pi about an axis orthogonal
    to ``a``."""
    a = np.asarray(a, dtype=float)
    a = a / np.linalg.norm(a)
    b = np.asarray(b, dtype=float)
    b = b / np.linalg.norm(b)
    v = np.cross(a, b)
    c = float(np.dot(a, b))
    s = np.linalg.norm(v)
    if s < 1e-12:
        if c > 0:
            return np.eye(3)
        axis = np.cross(a, [1.0, 0.0, 0.0])
        if np.linalg.norm(axis) < 1e-6:
            axis = np.cross(a, [0.0, 1.0, 0.0])
        axis /= np.linalg.norm(axis)
        return 2.0 * np.outer(axis, axis) - np.eye(3)
    vx = np.array([[0.0, -v[2], v[1]], [v[2], 0.0, -v[0]], [-v[1], v[0], 0.0]])
    return np.eye(3) + vx + vx @ vx * ((1.0 - c) / s**2)


def compute_unpose(pelvis, neck) -> UnposeTransform:
    """Centre on the pelvis and align pelvis->neck with +z.

    Raises
    ------
    DegenerateAnchors
        If the two anchors are closer than 1e-6 m.
    """
    pelvis = np.asarray(pelvis, dtype=float)
    ref = np.asarray(neck, dtype=float) - pelvis
    if np.linalg.norm(ref) < 1e-6:
        raise DegenerateAnchors("pelvis and neck coincide")
    return UnposeTransform(shortest_arc(ref), pelvis.copy())


@dataclass(frozen=True)
class VolumeGrid:
    """Cubic grid in the standard frame, centred on the origin."""

    size: float = 2.0
    resolution: int = 32

    @property
    def pitch(self) -> float:
        return self.size / self.resolution

    @property
    def axis(self) -> np.ndarray:
        """Voxel-centre coordinate along one axis (cell midpoints)."""
        return -self.size / 2.0 + (np.arange(self.resolution) + 0.5) * self.pitch

    def centers(self) -> np.ndarray:
        """Standard-frame voxel centres, shape ``(R, R, R, 3)`` indexed (x, y, z)."""
        a = self.axis
        return np.stack(np.meshgrid(a, a, a, indexing="ij"), axis=-1)

    def world_centers(self, unpose: UnposeTransform) -> np.ndarray:
        return unpose.inverse(self.centers().reshape(-1, 3)).reshape(self.shape + (3,))

    @property
    def shape(self) -> tuple[int, int, int]:
        r = self.resolution
        return (r, r, r)

    def index_of(self, points_std) -> np.ndarray:
        """Integer voxel index containing each standard-frame point; -1 rows
        where the point falls outside the grid."""
        idx = np.floor((np.asarray(points_std, dtype=float) + self.size / 2.0) / self.pitch)
        idx = idx.astype(np.int64)
        inside = np.all((idx >= 0) & (idx < self.resolution), axis=-1)
        idx[~inside] = -1
        return idx


def build_keypoint_volume(grid: VolumeGrid, unpose: UnposeTransform, heatmaps,
                          cams: Sequence[Camera]) -> np.ndarray:
    """Average over views of each joint's heatmap sampled at every voxel's
    projection. Views where a voxel sits behind the camera add zero but still
    count in the average.

    Returns
    -------
    ndarray, shape (J, R, R, R), float32
    """
    if len(cams) == 0:
        raise ValueError("need at least one view")
    pts = grid.world_centers(unpose).reshape(-1, 3)
    J = np.asarray(heatmaps[0]).shape[0]
    acc = np.zeros((J, pts.shape[0]))
    for cam, maps in zip(cams, heatmaps):  # view-id order, fixed reduction
        uv, valid = project_many(pts, cam)
        acc += sample_bilinear_many(np.asarray(maps, dtype=float), uv / cam.heatmap_scale)
    acc /= len(cams)
    return acc.reshape((J,) + grid.shape).astype(np.float32)


def anchor_field(grid_world_pts, anchors, sigma=DEFAULT_ANCHOR_SIGMA) -> np.ndarray:
    """Gaussian response of every voxel to each anchor, shape ``(A, N)``."""
    anchors = np.asarray(anchors, dtype=float).reshape(-1, 3)
    d2 = ((grid_world_pts[None, :, :] - anchors[:, None, :]) ** 2).sum(-1)
    return np.exp(-d2 / (2.0 * sigma**2))


def build_anchor_volumes(grid: VolumeGrid, unpose: UnposeTransform, own, others=(),
                         sigma=DEFAULT_ANCHOR_SIGMA):
    """Positive field around the person's own (pelvis, neck) anchors and the
    element-wise max of every other person's field.

    ``own`` and each entry of ``others`` are ``(2, 3)`` arrays or
    :class:`~volmocap.centers.PersonAnchors`.

    Returns
    -------
    Z, Z_other : ndarray, shape (2, R, R, R), float32
    """
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    pts = grid.world_centers(unpose).reshape(-1, 3)
    shape = (2,) + grid.shape
    Z = anchor_field(pts, _anchor_points(own), sigma).reshape(shape)
    Z_other = np.zeros(shape)
    for other in others:
        Z_other = np.maximum(Z_other, anchor_field(pts, _anchor_points(other), sigma).reshape(shape))
    return Z.astype(np.float32), Z_other.astype(np.float32)


def _anchor_points(a) -> np.ndarray:
    if hasattr(a, "points"):
        return a.points
    return np.asarray(a, dtype=float).reshape(2, 3)


def gt_heatmap(grid: VolumeGrid, joints_std, sigma_voxels=1.5) -> np.ndarray:
    """Ground-truth 3D heatmap for every joint of every person.

    Each in-volume joint contributes a Gaussian centred on the voxel that
    contains it (so that voxel is exactly 1); people are fused by max.

    Parameters
    ----------
    joints_std : array, shape (P, J, 3)
        Standard-frame joint positions of all people.
    """
    joints_std = np.asarray(joints_std, dtype=float)
    if joints_std.ndim == 2:
        joints_std = joints_std[None]
    idx = grid.index_of(joints_std)
    return gt_heatmap_from_index(grid.resolution, idx, sigma_voxels)


def gt_heatmap_from_index(resolution, idx, sigma_voxels=1.5) -> np.ndarray:
    idx = np.asarray(idx)
    P, J, _ = idx.shape
    r = np.arange(resolution)
    out = np.zeros((J, resolution, resolution, resolution))
    for p in range(P):
        for j in range(J):
            if idx[p, j, 0] < 0:
                continue
            gx, gy, gz = (np.exp(-(r - idx[p, j, k]) ** 2 / (2.0 * sigma_voxels**2)) for k in range(3))
            g = gx[:, None, None] * gy[None, :, None] * gz[None, None, :]
            np.maximum(out[j], g, out=out[j])
    return out.astype(np.float32)
