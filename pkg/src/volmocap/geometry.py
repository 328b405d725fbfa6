"""Pinhole cameras, projection, bilinear sampling and linear triangulation.

All image-space quantities are in full-resolution pixels unless a function
says otherwise. Heatmaps live on a grid downscaled by ``Camera.heatmap_scale``;
heatmap coordinate ``(col, row)`` corresponds to image pixel
``(col * scale, row * scale)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .exceptions import DegenerateDepth, RankDeficient

MIN_DEPTH = 1e-9


@dataclass(frozen=True)
class Camera:
    """One calibrated view: ``x_cam = R @ x_world + t``, ``u ~ K @ x_cam``."""

    K: np.ndarray
    R: np.ndarray
    t: np.ndarray
    image_size: tuple[int, int]
    id: int = 0
    heatmap_scale: float = 4.0

    def __post_init__(self):
        object.__setattr__(self, "K", np.asarray(self.K, dtype=float).reshape(3, 3))
        object.__setattr__(self, "R", np.asarray(self.R, dtype=float).reshape(3, 3))
        object.__setattr__(self, "t", np.asarray(self.t, dtype=float).reshape(3))
        w, h = self.image_size
        object.__setattr__(self, "image_size", (int(w), int(h)))

    @property
    def center(self) -> np.ndarray:
        return -self.R.T @ self.t

    @property
    def P(self) -> np.ndarray:
        """3x4 projection matrix ``K [R | t]``."""
        return self.K @ np.hstack([self.R, self.t[:, None]])

    @property
    def heatmap_shape(self) -> tuple[int, int]:
        """(rows, cols) of this view's heatmap grid."""
        w, h = self.image_size
        return int(round(h / self.heatmap_scale)), int(round(w / self.heatmap_scale))


def look_at(position, target, up=(0.0, 0.0, 1.0)):
    """World-to-camera rotation and translation for a camera at ``position``
    looking at ``target`` (camera z forward, y down)."""
    position = np.asarray(position, dtype=float)
    forward = np.asarray(target, dtype=float) - position
    forward /= np.linalg.norm(forward)
    right = np.cross(forward, np.asarray(up, dtype=float))
    if np.linalg.norm(right) < 1e-9:
        right = np.cross(forward, np.array([0.0, 1.0, 0.0]))
    right /= np.linalg.norm(right)
    down = np.cross(forward, right)
    R = np.stack([right, down, forward])
    return R, -R @ position


def ring_rig(n_views=4, radius=4.0, height=2.0, image_size=(512, 512),
             focal=500.0, heatmap_scale=4.0, target=(0.0, 0.0, 1.0), phase=0.0):
    """Cameras evenly spaced on a horizontal circle, all aimed at ``target``."""
    w, h = image_size
    K = np.array([[focal, 0.0, w / 2.0], [0.0, focal, h / 2.0], [0.0, 0.0, 1.0]])
    cams = []
    for v in range(n_views):
        a = phase + 2.0 * np.pi * v / n_views
        pos = (radius * np.cos(a), radius * np.sin(a), height)
        R, t = look_at(pos, target)
        cams.append(Camera(K, R, t, image_size, id=v, heatmap_scale=heatmap_scale))
    return cams


def to_camera(points, cam: Camera) -> np.ndarray:
    return np.asarray(points, dtype=float) @ cam.R.T + cam.t


def project(point, cam: Camera) -> np.ndarray:
    """Project one world point to pixel coordinates.

    Raises
    ------
    DegenerateDepth
        If the camera-frame depth is at most 1e-9 m.
    """
    xc = cam.R @ np.asarray(point, dtype=float) + cam.t
    if not xc[2] > MIN_DEPTH:
        raise DegenerateDepth(f"depth {xc[2]:.3g} m in view {cam.id}")
    uvw = cam.K @ xc
    return uvw[:2] / uvw[2]


def project_many(points, cam: Camera):
    """Vectorized projection.

    Returns
    -------
    uv : ndarray, shape (N, 2)
        Pixel coordinates; NaN where the depth is degenerate.
    valid : ndarray of bool, shape (N,)
    """
    xc = to_camera(np.asarray(points, dtype=float).reshape(-1, 3), cam)
    valid = xc[:, 2] > MIN_DEPTH
    uvw = xc @ cam.K.T
    with np.errstate(divide="ignore", invalid="ignore"):
        uv = uvw[:, :2] / uvw[:, 2:3]
    uv[~valid] = np.nan
    return uv, valid


def sample_bilinear(grid, p) -> float:
    """Bilinear lookup of a 2D grid at ``p = (col, row)`` with zero padding."""
    return float(sample_bilinear_many(np.asarray(grid)[None], np.asarray(p, float)[None])[0, 0])


def sample_bilinear_many(maps, points) -> np.ndarray:
    """Sample a stack of maps ``(C, H, W)`` at ``points (N, 2)`` given as
    ``(col, row)``. Cells outside the grid read as zero; NaN points give 0.

    Returns an array of shape ``(C, N)``.
    """
    maps = np.asarray(maps)
    C, H, W = maps.shape
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    x = np.nan_to_num(pts[:, 0], nan=-10.0)
    y = np.nan_to_num(pts[:, 1], nan=-10.0)
    x = np.clip(x, -2.0, W + 1.0)
    y = np.clip(y, -2.0, H + 1.0)
    x0 = np.floor(x).astype(np.int64)
    y0 = np.floor(y).astype(np.int64)
    fx = x - x0
    fy = y - y0
    padded = np.zeros((C, H + 2, W + 2), dtype=maps.dtype)
    padded[:, 1:-1, 1:-1] = maps
    flat = padded.reshape(C, -1)
    stride = W + 2

    def tap(yy, xx):
        inside = (yy >= -1) & (yy <= H) & (xx >= -1) & (xx <= W)
        idx = np.where(inside, (yy + 1) * stride + (xx + 1), 0)
        vals = flat[:, idx]
        return np.where(inside[None], vals, 0.0)

    out = (tap(y0, x0) * ((1 - fx) * (1 - fy))[None]
           + tap(y0, x0 + 1) * (fx * (1 - fy))[None]
           + tap(y0 + 1, x0) * ((1 - fx) * fy)[None]
           + tap(y0 + 1, x0 + 1) * (fx * fy)[None])
    return out


def _camera_lookup(cams: Sequence[Camera]) -> dict[int, Camera]:
    return {c.id: c for c in cams}


def triangulate(observations, cams: Sequence[Camera], rank_tol=1e-10) -> np.ndarray:
    """Linear (DLT) triangulation from ``[(view_id, (u, v)), ...]``.

    Each observation contributes the two rows of ``x_n × (R X + t) = 0`` with
    ``x_n = K^-1 (u, v, 1)``; working in normalized coordinates keeps the
    system well conditioned regardless of focal length.

    Raises
    ------
    RankDeficient
        If the second-smallest singular value is within ``rank_tol`` (relative
        to the largest) of the smallest one.
    """
    lookup = _camera_lookup(cams)
    obs = list(observations)
    if len({int(v) for v, _ in obs}) < 2:
        raise RankDeficient("need observations from at least two distinct views")
    # sort by view so the result does not depend on input order
    obs.sort(key=lambda o: (int(o[0]), float(o[1][0]), float(o[1][1])))
    rows = []
    for v, uv in obs:
        cam = lookup[int(v)]
        xn = np.linalg.solve(cam.K, np.array([uv[0], uv[1], 1.0]))
        Rt = np.hstack([cam.R, cam.t[:, None]])
        r1 = xn[0] * Rt[2] - Rt[0]
        r2 = xn[1] * Rt[2] - Rt[1]
        rows.append(r1 / np.linalg.norm(r1))
        rows.append(r2 / np.linalg.norm(r2))
    A = np.asarray(rows)
    _, s, vt = np.linalg.svd(A)
    if s[-2] - s[-1] <= rank_tol * s[0] or abs(vt[-1, 3]) < 1e-15:
        raise RankDeficient(f"singular values {s[-2]:.3g}, {s[-1]:.3g}")
    X = vt[-1]
    return X[:3] / X[3]


def reprojection_error(point, observations, cams: Sequence[Camera]) -> np.ndarray:
    """Pixel distance per observation; +inf where the point is behind a camera."""
    lookup = _camera_lookup(cams)
    out = []
    for v, uv in observations:
        try:
            p = project(point, lookup[int(v)])
        except DegenerateDepth:
            out.append(np.inf)
            continue
        out.append(float(np.hypot(*(p - np.asarray(uv, dtype=float)))))
    return np.asarray(out)
