"""Input checks shared by the estimators and the CLI."""

from __future__ import annotations

import numpy as np

from .exceptions import ShapeMismatch


def check_cameras(cams):
    """Validate intrinsics/extrinsics; returns the cameras as a list."""
    cams = list(cams)
    if not cams:
        raise ValueError("at least one camera is required")
    ids = [c.id for c in cams]
    if len(set(ids)) != len(ids):
        raise ValueError(f"duplicate camera ids: {ids}")
    for c in cams:
        R = c.R
        if not np.allclose(R @ R.T, np.eye(3), atol=1e-8) or abs(np.linalg.det(R) - 1.0) > 1e-8:
            raise ValueError(f"camera {c.id}: rotation is not a proper orthonormal matrix")
        K = c.K
        if K[0, 0] <= 0 or K[1, 1] <= 0 or np.any(np.tril(K, -1) != 0):
            raise ValueError(f"camera {c.id}: intrinsics must be upper triangular with positive focals")
        if min(c.image_size) <= 0:
            raise ValueError(f"camera {c.id}: image size must be positive")
    return cams


def check_heatmaps(heatmaps, cams, n_joints=None):
    """Per-view ``(J, rows, cols)`` arrays in [0, 1] matching each camera."""
    if len(heatmaps) != len(cams):
        raise ShapeMismatch(f"{len(heatmaps)} heatmap views for {len(cams)} cameras")
    out = []
    J = n_joints
    for maps, cam in zip(heatmaps, cams):
        maps = np.asarray(maps)
        if maps.ndim != 3:
            raise ShapeMismatch(f"view {cam.id}: heatmaps must be (J, rows, cols)")
        if J is None:
            J = maps.shape[0]
        if maps.shape[0] != J:
            raise ShapeMismatch(f"view {cam.id}: {maps.shape[0]} joints, expected {J}")
        if maps.shape[1:] != cam.heatmap_shape:
            raise ShapeMismatch(f"view {cam.id}: grid {maps.shape[1:]} != {cam.heatmap_shape}")
        if maps.size and (maps.min() < 0.0 or maps.max() > 1.0):
            raise ValueError(f"view {cam.id}: responses must lie in [0, 1]")
        out.append(maps)
    return out


def check_training_samples(samples, resolution=32):
    samples = list(samples)
    for s in samples:
        r = (resolution,) * 3
        if s.F.shape[1:] != r or s.Z.shape != (2,) + r or s.Z_other.shape != (2,) + r:
            raise ShapeMismatch(f"sample volumes must be at {resolution}^3")
    return samples
