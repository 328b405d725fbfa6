"""Voxel-to-voxel networks for the two stages.

Each stage is a three-level encoder-decoder. The full 32^3 grid is folded
into 16^3 cells of 2x2x2 voxels (space-to-depth) on the way in and unfolded
on the way out, so no convolution runs at full resolution; every voxel still
gets its own output channel.
"""

from __future__ import annotations

import hashlib
import json

import torch
from torch import nn
from torch.nn import functional as F_

from ..exceptions import ShapeMismatch


def space_to_depth(x: torch.Tensor) -> torch.Tensor:
    b, c, d, h, w = x.shape
    x = x.reshape(b, c, d // 2, 2, h // 2, 2, w // 2, 2).permute(0, 1, 3, 5, 7, 2, 4, 6)
    return x.reshape(b, c * 8, d // 2, h // 2, w // 2)


def depth_to_space(x: torch.Tensor) -> torch.Tensor:
    b, c8, d, h, w = x.shape
    c = c8 // 8
    x = x.reshape(b, c, 2, 2, 2, d, h, w).permute(0, 1, 5, 2, 6, 3, 7, 4)
    return x.reshape(b, c, d * 2, h * 2, w * 2)


class VoxelNet(nn.Module):
    """Encoder-decoder mapping ``(B, in, R, R, R)`` to ``(B, out, R, R, R)``.

    Internal resolutions are R/2, R/4 and R/8 with skip connections between
    matching encoder and decoder levels. A per-channel scaled copy of the
    first ``out`` input channels is added to the output, which lets
    fine detail bypass the folded bottleneck.
    """

    def __init__(self, in_channels, out_channels, widths=(32, 64, 128), shortcut=0.0):
        super().__init__()
        if in_channels < out_channels:
            raise ValueError("in_channels must be at least out_channels")
        c0, c1, c2 = widths
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.stem = nn.Conv3d(8 * in_channels, c0, 1)
        self.enc0 = nn.Conv3d(c0, c0, 3, padding=1)
        self.down1 = nn.Conv3d(c0, c1, 3, stride=2, padding=1)
        self.enc1 = nn.Conv3d(c1, c1, 3, padding=1)
        self.down2 = nn.Conv3d(c1, c2, 3, stride=2, padding=1)
        self.enc2 = nn.Conv3d(c2, c2, 3, padding=1)
        self.up2 = nn.ConvTranspose3d(c2, c1, 2, stride=2)
        self.dec1 = nn.Conv3d(c1, c1, 3, padding=1)
        self.up1 = nn.ConvTranspose3d(c1, c0, 2, stride=2)
        self.dec0 = nn.Conv3d(c0, c0, 3, padding=1)
        self.head = nn.Conv3d(c0, 8 * out_channels, 1)
        self.shortcut = nn.Parameter(torch.full((out_channels,), float(shortcut)))

    def forward(self, x):
        a = F_.relu(self.enc0(F_.relu(self.stem(space_to_depth(x)))))
        b = F_.relu(self.enc1(F_.relu(self.down1(a))))
        c = F_.relu(self.enc2(F_.relu(self.down2(b))))
        b = F_.relu(self.dec1(F_.relu(self.up2(c)) + b))
        a = F_.relu(self.dec0(F_.relu(self.up1(b)) + a))
        y = depth_to_space(self.head(a))
        return y + self.shortcut.view(1, -1, 1, 1, 1) * x[:, : self.out_channels]


class TwoStageNet(nn.Module):
    """Heatmap estimation followed by conditioned keypoint localization.

    Parameters
    ----------
    n_joints : int
    widths : tuple of int
        Channel widths of the three encoder levels, shared by both stages.
    conditional : bool
        Feed the anchor fields to the second stage. ``False`` gives the
        ablated model that sees only the estimated 3D heatmaps.
    resolution : int
    """

    def __init__(self, n_joints=15, widths=(32, 64, 128), conditional=True, resolution=32):
        super().__init__()
        if resolution % 8:
            raise ValueError("resolution must be divisible by 8")
        self.n_joints = n_joints
        self.widths = tuple(int(w) for w in widths)
        self.conditional = conditional
        self.resolution = resolution
        # shortcuts start each stage close to a sharpened copy of its input
        self.hem = VoxelNet(n_joints, n_joints, self.widths, shortcut=6.0)
        self.klm = VoxelNet(n_joints + (4 if conditional else 0), n_joints, self.widths, shortcut=20.0)
        with torch.no_grad():
            # sparse heatmaps: start the sigmoid near a 0.01 prior
            self.hem.head.bias.fill_(-4.6)

    def config(self) -> dict:
        return dict(n_joints=self.n_joints, widths=list(self.widths),
                    conditional=self.conditional, resolution=self.resolution)

    def architecture_hash(self) -> bytes:
        return hashlib.md5(json.dumps(self.config(), sort_keys=True).encode()).digest()

    def _check(self, x, channels, name):
        r = self.resolution
        if x is None:
            raise ShapeMismatch(f"{name}: required by the conditional model")
        if x.dim() != 5 or x.shape[1] != channels or tuple(x.shape[2:]) != (r, r, r):
            raise ShapeMismatch(f"{name}: expected (B, {channels}, {r}, {r}, {r}), got {tuple(x.shape)}")

    def hem_forward(self, F):
        """3D heatmaps of every visible person, in [0, 1]."""
        self._check(F, self.n_joints, "keypoint volume")
        return torch.sigmoid(self.hem(F))

    def klm_logits(self, H, Z=None, Z_other=None):
        self._check(H, self.n_joints, "3D heatmap")
        x = H
        if self.conditional:
            self._check(Z, 2, "anchor volume")
            self._check(Z_other, 2, "other-anchor volume")
            x = torch.cat([H, Z, -Z_other], dim=1)
        return self.klm(x)

    def klm_forward(self, H, Z=None, Z_other=None):
        """Per-joint probability volumes (spatial softmax over all voxels)."""
        logits = self.klm_logits(H, Z, Z_other)
        b, j = logits.shape[:2]
        # normalized in double: a float32 sum over 32^3 voxels drifts past 1e-6
        P = torch.softmax(logits.reshape(b, j, -1).double(), dim=-1)
        return P.to(logits.dtype).reshape(logits.shape)

    def forward(self, F, Z=None, Z_other=None, heatmap_hook=None):
        H = self.hem_forward(F)
        if heatmap_hook is not None:
            H = heatmap_hook(H)
        return H, self.klm_forward(H, Z, Z_other)

    def n_parameters(self) -> int:
        return sum(p.numel() for p in self.parameters())
