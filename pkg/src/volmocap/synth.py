"""Synthetic multi-view training data from MoCap skeletons and a camera rig."""

from __future__ import annotations

from dataclasses import asdict, dataclass, replace
from typing import Sequence

import numpy as np

from .exceptions import EmptyPool
from .geometry import Camera, project_many
from .skeleton import NECK, NUM_JOINTS, PELVIS
from .volumes import (DEFAULT_ANCHOR_SIGMA, UnposeTransform, VolumeGrid, build_anchor_volumes,
                      build_keypoint_volume, compute_unpose, gt_heatmap_from_index)


@dataclass
class MoCapClip:
    frames: np.ndarray  # (T, J, 3)
    subject: str = ""
    motion: str = ""
    fps: float = 30.0

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=float)
        if self.frames.ndim != 3 or self.frames.shape[1:] != (NUM_JOINTS, 3):
            raise ValueError(f"clip frames must be (T, {NUM_JOINTS}, 3), got {self.frames.shape}")


@dataclass
class AugmentConfig:
    """2D and 3D augmentation knobs. Distances in meters, offsets in heatmap px."""

    view_dropout: float = 0.1
    keypoint_dropout: float = 0.1
    value_range: tuple[float, float] = (0.5, 1.0)
    position_jitter: float = 1.5
    anisotropy: float = 0.3
    center_jitter: float = 0.02
    false_positive_rate: float = 0.05
    false_positive_amplitude: tuple[float, float] = (0.2, 0.6)
    attract_prob: float = 0.5
    attract_range: tuple[float, float] = (0.2, 0.8)
    gaussian_std: float = 2.0
    seed: int = 0

    def __post_init__(self):
        for name in ("view_dropout", "keypoint_dropout", "false_positive_rate", "attract_prob"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        for name in ("position_jitter", "anisotropy", "center_jitter", "gaussian_std"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        self.value_range = tuple(float(v) for v in self.value_range)
        self.false_positive_amplitude = tuple(float(v) for v in self.false_positive_amplitude)
        self.attract_range = tuple(float(v) for v in self.attract_range)

    @classmethod
    def none(cls, **kw):
        """No augmentation at all: exact Gaussians, exact anchors."""
        base = dict(view_dropout=0.0, keypoint_dropout=0.0, value_range=(1.0, 1.0), position_jitter=0.0,
                    anisotropy=0.0, center_jitter=0.0, false_positive_rate=0.0)
        base.update(kw)
        return cls(**base)

    @classmethod
    def mild(cls, **kw):
        base = dict(view_dropout=0.05, keypoint_dropout=0.05, value_range=(0.7, 1.0), position_jitter=0.75,
                    anisotropy=0.15, center_jitter=0.02, false_positive_rate=0.03)
        base.update(kw)
        return cls(**base)

    def without_heatmap_augmentation(self):
        """Same 3D augmentation, clean 2D heatmaps."""
        return replace(self, view_dropout=0.0, keypoint_dropout=0.0, value_range=(1.0, 1.0),
                       position_jitter=0.0, anisotropy=0.0, false_positive_rate=0.0)

    def to_dict(self):
        return asdict(self)


@dataclass
class SceneSample:
    cams: list
    skeletons: np.ndarray  # (N, J, 3) world frame
    heatmaps: list | None = None  # per view (J, rows, cols)
    dropped_views: tuple = ()

    @property
    def anchors(self) -> np.ndarray:
        """Ground-truth (pelvis, neck) per person, shape (N, 2, 3)."""
        return self.skeletons[:, [PELVIS, NECK]]


def filter_poses(clips: Sequence[MoCapClip], min_move=0.05) -> np.ndarray:
    """Drop near-duplicate frames.

    A frame is kept when some joint moved at least ``min_move`` since the
    last kept frame of the same clip; the first frame of a clip is always
    kept.
    """
    kept = []
    for clip in clips:
        last = None
        for frame in clip.frames:
            if last is None or np.max(np.linalg.norm(frame - last, axis=-1)) >= min_move:
                kept.append(frame)
                last = frame
    if not kept:
        raise EmptyPool("no frames survived filtering")
    return np.stack(kept)


def capture_bounds(cams: Sequence[Camera], extent=6.0, step=0.1, heights=(0.0, 1.0, 1.9),
                   margin=0.4, border=0.05):
    """Floor rectangle ``(xmin, xmax, ymin, ymax)`` in which a standing body
    stays inside every view.

    Floor points are tested at several heights against every image (with a
    fractional ``border``); the bounding box of the passing points is then
    shrunk by ``margin`` meters to leave room for limbs.
    """
    a = np.arange(-extent, extent + 1e-9, step)
    xx, yy = np.meshgrid(a, a, indexing="ij")
    ok = np.ones(xx.shape, dtype=bool)
    for z in heights:
        pts = np.stack([xx.ravel(), yy.ravel(), np.full(xx.size, z)], axis=-1)
        for cam in cams:
            uv, valid = project_many(pts, cam)
            w, h = cam.image_size
            inside = valid & (uv[:, 0] >= border * w) & (uv[:, 0] <= (1 - border) * w) \
                & (uv[:, 1] >= border * h) & (uv[:, 1] <= (1 - border) * h)
            ok &= inside.reshape(xx.shape)
    if not ok.any():
        raise ValueError("cameras share no common visible floor region")
    xs, ys = xx[ok], yy[ok]
    b = (xs.min() + margin, xs.max() - margin, ys.min() + margin, ys.max() - margin)
    if b[0] > b[1] or b[2] > b[3]:
        c = (xs.mean(), ys.mean())
        b = (c[0], c[0], c[1], c[1])
    return tuple(float(v) for v in b)


def _yaw(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def place_pose(pose, yaw, xy):
    """Rotate about the pelvis's vertical axis, move the pelvis to ``xy`` and
    drop the body so its lowest joint touches z = 0."""
    pose = np.asarray(pose, dtype=float)
    p0 = pose[PELVIS] * np.array([1.0, 1.0, 0.0])
    out = (pose - p0) @ _yaw(yaw).T
    out[:, :2] += np.asarray(xy, dtype=float)
    out[:, 2] -= out[:, 2].min()
    return out


def attract(a, b, distance):
    """Translate two poses horizontally toward their midpoint so the 3D
    pelvis distance becomes ``distance`` (or as close as height allows)."""
    pa, pb = a[PELVIS], b[PELVIS]
    dz = pb[2] - pa[2]
    dh = (pb - pa)[:2]
    n = np.linalg.norm(dh)
    direction = dh / n if n > 1e-12 else np.array([1.0, 0.0])
    target_h = np.sqrt(max(distance**2 - dz**2, 0.0))
    mid = 0.5 * (pa[:2] + pb[:2])
    new_a = mid - 0.5 * target_h * direction
    new_b = mid + 0.5 * target_h * direction
    a = a.copy()
    b = b.copy()
    a[:, :2] += new_a - pa[:2]
    b[:, :2] += new_b - pb[:2]
    return a, b


def compose_scene(pool, cams: Sequence[Camera], n_people, augment: AugmentConfig, rng,
                  bounds=None, attract_distance=None) -> SceneSample:
    """Draw ``n_people`` poses from ``pool`` and place them in the capture area.

    With probability ``augment.attract_prob`` (or always, when
    ``attract_distance`` is given) consecutive pairs of people are pulled
    together until their pelvis distance is drawn from
    ``augment.attract_range``.
    """
    if n_people < 1:
        raise ValueError("n_people must be >= 1")
    pool = np.asarray(pool)
    if bounds is None:
        bounds = capture_bounds(cams)
    xmin, xmax, ymin, ymax = bounds
    people = []
    for _ in range(n_people):
        pose = pool[rng.integers(len(pool))]
        xy = (rng.uniform(xmin, xmax), rng.uniform(ymin, ymax))
        people.append(place_pose(pose, rng.uniform(0.0, 2.0 * np.pi), xy))
    if n_people >= 2:
        order = rng.permutation(n_people)
        for k in range(0, n_people - 1, 2):
            i, j = order[k], order[k + 1]
            if attract_distance is not None:
                d = float(attract_distance)
            elif rng.random() < augment.attract_prob:
                d = rng.uniform(*augment.attract_range)
            else:
                continue
            people[i], people[j] = attract(people[i], people[j], d)
    return SceneSample(list(cams), np.stack(people))


def gaussian_2d(shape, center, std, amplitude=1.0, angle=0.0):
    """Possibly anisotropic 2D Gaussian on a ``(rows, cols)`` grid."""
    rows, cols = shape
    sx, sy = (std, std) if np.isscalar(std) else std
    x = np.arange(cols)[None, :] - center[0]
    y = np.arange(rows)[:, None] - center[1]
    if angle:
        c, s = np.cos(angle), np.sin(angle)
        x, y = c * x + s * y, -s * x + c * y
    return amplitude * np.exp(-0.5 * ((x / sx) ** 2 + (y / sy) ** 2))


def render_heatmaps(scene: SceneSample, cams: Sequence[Camera], augment: AugmentConfig, rng):
    """Project every joint of every person and draw it as a Gaussian.

    People are fused by per-pixel max. Augmentation (in this order per
    Gaussian): keypoint dropout, peak scaling, centre jitter, anisotropic
    stretch; then false-positive blobs and finally whole-view dropout, which
    always leaves at least two views.

    Returns
    -------
    list of ndarray, each (J, rows, cols) float32
    """
    maps = []
    std = augment.gaussian_std
    for cam in cams:
        rows, cols = cam.heatmap_shape
        hm = np.zeros((NUM_JOINTS, rows, cols))
        for person in scene.skeletons:
            uv, valid = project_many(person, cam)
            c = uv / cam.heatmap_scale
            for j in range(NUM_JOINTS):
                if not valid[j]:
                    continue
                if not (0.0 <= c[j, 0] <= cols - 1 and 0.0 <= c[j, 1] <= rows - 1):
                    continue
                if augment.keypoint_dropout and rng.random() < augment.keypoint_dropout:
                    continue
                lo, hi = augment.value_range
                amp = rng.uniform(lo, hi) if hi > lo else hi
                center = c[j]
                if augment.position_jitter:
                    center = center + rng.uniform(-augment.position_jitter, augment.position_jitter, 2)
                s, angle = std, 0.0
                if augment.anisotropy:
                    s = std * (1.0 + rng.uniform(-augment.anisotropy, augment.anisotropy, 2))
                    angle = rng.uniform(0.0, np.pi)
                np.maximum(hm[j], gaussian_2d((rows, cols), center, s, amp, angle), out=hm[j])
        if augment.false_positive_rate:
            for j in range(NUM_JOINTS):
                if rng.random() < augment.false_positive_rate:
                    center = (rng.uniform(0, cols - 1), rng.uniform(0, rows - 1))
                    amp = rng.uniform(*augment.false_positive_amplitude)
                    np.maximum(hm[j], gaussian_2d((rows, cols), center, std, amp), out=hm[j])
        maps.append(hm.astype(np.float32))
    dropped = []
    if augment.view_dropout and len(cams) > 2:
        drop = rng.random(len(cams)) < augment.view_dropout
        while len(cams) - drop.sum() < 2:
            drop[rng.choice(np.flatnonzero(drop))] = False
        for v in np.flatnonzero(drop):
            maps[v][:] = 0.0
            dropped.append(int(cams[v].id))
    scene.heatmaps = maps
    scene.dropped_views = tuple(dropped)
    return maps


def synthesize_scene(pool, cams, n_people, augment, rng, bounds=None, attract_distance=None):
    scene = compose_scene(pool, cams, n_people, augment, rng, bounds, attract_distance)
    render_heatmaps(scene, cams, augment, rng)
    return scene


@dataclass
class TrainingSample:
    """Network inputs and targets for one person of one scene."""

    F: np.ndarray          # (J, R, R, R)
    Z: np.ndarray          # (2, R, R, R)
    Z_other: np.ndarray    # (2, R, R, R)
    y: np.ndarray          # (J, 3) world frame, target person only
    unpose: UnposeTransform
    target_index: np.ndarray  # (P, J, 3) voxel index of every person's joints, -1 outside
    sigma_voxels: float = 1.5

    @property
    def H_gt(self) -> np.ndarray:
        return gt_heatmap_from_index(self.F.shape[-1], self.target_index, self.sigma_voxels)


def make_training_sample(scene: SceneSample, target: int, augment: AugmentConfig, rng,
                         grid: VolumeGrid = VolumeGrid(), anchor_sigma=DEFAULT_ANCHOR_SIGMA,
                         sigma_voxels=1.5) -> TrainingSample:
    """Build volumes around person ``target`` using jittered ground-truth anchors."""
    anchors = scene.anchors.copy()
    if augment.center_jitter:
        anchors = anchors + rng.normal(0.0, augment.center_jitter, anchors.shape)
    unpose = compute_unpose(anchors[target, 0], anchors[target, 1])
    F = build_keypoint_volume(grid, unpose, scene.heatmaps, scene.cams)
    others = [anchors[k] for k in range(len(anchors)) if k != target]
    Z, Z_other = build_anchor_volumes(grid, unpose, anchors[target], others, anchor_sigma)
    order = [target] + [k for k in range(len(anchors)) if k != target]
    idx = grid.index_of(unpose.apply(scene.skeletons[order]))
    return TrainingSample(F, Z, Z_other, scene.skeletons[target].copy(), unpose, idx, sigma_voxels)


def sample_rng(seed, index):
    """Independent per-sample stream derived from the master seed."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(index)]))


def generate_training_set(pool, cams, n_samples, n_people, augment: AugmentConfig, seed=0,
                          grid=VolumeGrid(), bounds=None, attract_distance=None,
                          people_per_scene=None):
    """``n_samples`` training samples; each draws a fresh scene and uses every
    person in it (or ``people_per_scene`` of them) until the count is met."""
    if bounds is None:
        bounds = capture_bounds(cams)
    out = []
    k = 0
    while len(out) < n_samples:
        rng = sample_rng(seed, k)
        scene = synthesize_scene(pool, cams, n_people, augment, rng, bounds, attract_distance)
        targets = range(n_people) if people_per_scene is None else range(min(people_per_scene, n_people))
        for i in targets:
            if len(out) < n_samples:
                out.append(make_training_sample(scene, i, augment, rng, grid))
        k += 1
    return out


def place_clip(frames, yaw, xy):
    """Apply the rigid placement that :func:`place_pose` gives the first frame
    to every frame of a clip, so motion is preserved."""
    frames = np.asarray(frames, dtype=float)
    first = frames[0]
    p0 = first[PELVIS] * np.array([1.0, 1.0, 0.0])
    R = _yaw(yaw)
    out = (frames - p0) @ R.T
    out[..., :2] += np.asarray(xy, dtype=float)
    out[..., 2] -= out[0, :, 2].min()
    return out


def synthesize_sequence(clips: Sequence[MoCapClip], cams, n_people, n_frames, augment: AugmentConfig,
                        rng, bounds=None, attract_distance=None) -> list:
    """Consecutive frames of ``n_people`` clips, each rigidly placed once.

    Attraction (when drawn) is decided on the first frame and the same
    horizontal shift is kept for the whole sequence. Clips shorter than
    ``n_frames`` hold their last frame.
    """
    if n_people < 1:
        raise ValueError("n_people must be >= 1")
    if bounds is None:
        bounds = capture_bounds(cams)
    xmin, xmax, ymin, ymax = bounds
    tracks = []
    for _ in range(n_people):
        clip = clips[rng.integers(len(clips))]
        T = len(clip.frames)
        start = int(rng.integers(max(T - n_frames, 0) + 1))
        idx = np.minimum(np.arange(start, start + n_frames), T - 1)
        xy = (rng.uniform(xmin, xmax), rng.uniform(ymin, ymax))
        tracks.append(place_clip(clip.frames[idx], rng.uniform(0.0, 2.0 * np.pi), xy))
    if n_people >= 2:
        order = rng.permutation(n_people)
        for k in range(0, n_people - 1, 2):
            i, j = order[k], order[k + 1]
            if attract_distance is not None:
                d = float(attract_distance)
            elif rng.random() < augment.attract_prob:
                d = rng.uniform(*augment.attract_range)
            else:
                continue
            a, b = attract(tracks[i][0], tracks[j][0], d)
            tracks[i] = tracks[i] + (a[0] - tracks[i][0, 0]) * np.array([1.0, 1.0, 0.0])
            tracks[j] = tracks[j] + (b[0] - tracks[j][0, 0]) * np.array([1.0, 1.0, 0.0])
    people = np.stack(tracks, axis=1)  # (T, N, J, 3)
    scenes = []
    for t in range(n_frames):
        scene = SceneSample(list(cams), people[t].copy())
        render_heatmaps(scene, cams, augment, rng)
        scenes.append(scene)
    return scenes


def samples_from_scenes(scenes, augment: AugmentConfig, seed=0, grid=VolumeGrid(),
                        anchor_sigma=DEFAULT_ANCHOR_SIGMA, sigma_voxels=1.5) -> list:
    """One training sample per person of every stored scene; anchor jitter
    uses a stream derived from ``seed`` and the scene index."""
    out = []
    for i, scene in enumerate(scenes):
        rng = np.random.default_rng(np.random.SeedSequence([int(seed), int(i), 1]))
        for k in range(len(scene.skeletons)):
            out.append(make_training_sample(scene, k, augment, rng, grid, anchor_sigma, sigma_voxels))
    return out
