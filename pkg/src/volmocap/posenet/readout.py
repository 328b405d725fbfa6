"""Expectation readout, temporal gating and the training loss."""

from __future__ import annotations

import numpy as np
import torch

from ..volumes import VolumeGrid
from ._kernels import focal_loss_fused


def grid_axis(grid: VolumeGrid, dtype=torch.float32) -> torch.Tensor:
    return torch.as_tensor(grid.axis, dtype=dtype)


def soft_argmax(P: torch.Tensor, R: torch.Tensor, origin: torch.Tensor, grid: VolumeGrid = VolumeGrid()):
    """Expected voxel-centre position of each joint, mapped back to world.

    Parameters
    ----------
    P : (B, J, R, R, R) probability volumes, indexed (x, y, z)
    R : (B, 3, 3) world->standard rotations
    origin : (B, 3) pelvis anchors

    Returns
    -------
    (B, J, 3) world coordinates
    """
    axis = grid_axis(grid, P.dtype)
    ex = (P.sum(dim=(3, 4)) * axis).sum(-1)
    ey = (P.sum(dim=(2, 4)) * axis).sum(-1)
    ez = (P.sum(dim=(2, 3)) * axis).sum(-1)
    std = torch.stack([ex, ey, ez], dim=-1)
    return torch.einsum("bjk,bkl->bjl", std, R) + origin[:, None, :]


def world_voxel_centers(R, origin, grid: VolumeGrid = VolumeGrid()):
    """(B, R^3, 3) world coordinates of every voxel centre."""
    c = torch.as_tensor(grid.centers().reshape(-1, 3), dtype=R.dtype)
    return torch.einsum("nk,bkl->bnl", c, R) + origin[:, None, :]


def temporal_filter(H, previous, R, origin, radius=0.05, grid: VolumeGrid = VolumeGrid(), keep_ratio=0.0):
    """Zero every voxel of joint j farther than ``radius`` from last frame's
    joint j. ``previous`` is (B, J, 3) in world coordinates.

    With ``keep_ratio > 0`` a channel whose masked peak falls below
    ``keep_ratio`` times its unmasked peak is treated as a lost track and
    left unfiltered, so a joint can be reacquired.
    """
    if not np.isfinite(radius):
        return H
    centers = world_voxel_centers(R, origin, grid)
    d = torch.cdist(previous.to(centers.dtype), centers)  # (B, J, N)
    keep = (d < radius).reshape(H.shape).to(H.dtype)
    out = H * keep
    if keep_ratio > 0:
        lost = out.flatten(2).amax(-1) < keep_ratio * H.flatten(2).amax(-1)
        out = torch.where(lost[..., None, None, None], H, out)
    return out


def focal_loss(pred, target, alpha=2.0, beta=4.0, eps=1e-6):
    """Penalty-reduced focal loss for Gaussian targets, normalized by the
    number of positive (target == 1) voxels of each sample, then averaged
    over the batch."""
    pred = pred.clamp(eps, 1.0 - eps)
    pos = (target >= 1.0).to(pred.dtype)
    neg = 1.0 - pos
    pos_loss = -torch.log(pred) * (1.0 - pred) ** alpha * pos
    neg_loss = -torch.log(1.0 - pred) * pred ** alpha * (1.0 - target) ** beta * neg
    dims = tuple(range(1, pred.dim()))
    n_pos = pos.sum(dim=dims).clamp(min=1.0)
    return ((pos_loss + neg_loss).sum(dim=dims) / n_pos).mean()


def l1_joint_loss(pred, target):
    """Mean over joints of the coordinate-wise L1 distance, batch-averaged."""
    return (pred - target).abs().sum(-1).mean()


def pose_loss(H, H_gt, y, y_gt, weight=1.0, alpha=2.0, beta=4.0):
    """``weight * focal(H, H_gt) + L1(y, y_gt)``; returns (total, focal, l1)."""
    f = focal_loss_fused(H, H_gt, alpha, beta) if weight else H.new_zeros(())
    l1 = l1_joint_loss(y, y_gt)
    return weight * f + l1, f, l1


def gt_heatmaps_torch(index, resolution=32, sigma_voxels=1.5, dtype=torch.float32):
    """Ground-truth heatmaps from voxel indices ``(B, P, J, 3)`` (-1 = absent)."""
    r = torch.arange(resolution, dtype=dtype)
    idx = index.to(dtype)
    g = torch.exp(-(r - idx[..., None]) ** 2 / (2.0 * sigma_voxels**2))  # (B, P, J, 3, R)
    vol = g[..., 0, :, None, None] * g[..., 1, None, :, None] * g[..., 2, None, None, :]
    present = (index[..., 0] >= 0).to(dtype)[..., None, None, None]
    return (vol * present).amax(dim=1)
