"""Estimator wrapper: training, batched prediction and per-frame inference."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Callable

import numpy as np
import torch
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .._validation import check_training_samples
from ..exceptions import DegenerateAnchors, DivergedLoss
from ..skeleton import NUM_JOINTS, Skeleton3D
from ..volumes import (DEFAULT_ANCHOR_SIGMA, VolumeGrid, build_anchor_volumes, build_keypoint_volume,
                       compute_unpose)
from . import checkpoint
from .network import TwoStageNet
from ._kernels import gt_heatmaps_fused
from .readout import pose_loss, soft_argmax, temporal_filter

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    learning_rate: float = 1e-4
    lr_decay: float = 0.95
    epochs: int = 50
    batch_size: int = 32
    loss_weight: float = 1.0
    focal_alpha: float = 2.0
    focal_beta: float = 4.0
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate < 0 or self.loss_weight < 0 or self.epochs < 0:
            raise ValueError("learning_rate, loss_weight and epochs must be non-negative")
        if self.batch_size < 1:
            raise ValueError("batch_size must be positive")
        if not 0.0 < self.lr_decay <= 1.0:
            raise ValueError("lr_decay must lie in (0, 1]")


def _stack(samples, dtype=torch.float32):
    p_max = max(s.target_index.shape[0] for s in samples)
    idx = np.full((len(samples), p_max, NUM_JOINTS, 3), -1, dtype=np.int64)
    for k, s in enumerate(samples):
        idx[k, : s.target_index.shape[0]] = s.target_index
    return dict(
        F=torch.from_numpy(np.stack([s.F for s in samples]).astype(np.float32)),
        Z=torch.from_numpy(np.stack([s.Z for s in samples]).astype(np.float32)),
        Z_other=torch.from_numpy(np.stack([s.Z_other for s in samples]).astype(np.float32)),
        y=torch.as_tensor(np.stack([s.y for s in samples]), dtype=dtype),
        R=torch.as_tensor(np.stack([s.unpose.R for s in samples]), dtype=dtype),
        origin=torch.as_tensor(np.stack([s.unpose.origin for s in samples]), dtype=dtype),
        index=torch.from_numpy(idx),
    )


class VolumetricPoseEstimator(BaseEstimator):
    """Two-stage conditional volumetric pose network.

    ``fit`` takes a list of :class:`~volmocap.synth.TrainingSample`;
    ``predict`` returns world-frame joints ``(n, J, 3)`` for the same kind of
    input; :meth:`infer_frame` runs the full per-person pipeline from
    heatmaps and anchors.

    Parameters
    ----------
    widths : tuple of int
        Encoder channel widths of each stage.
    conditional : bool
        Use anchor fields as extra input to the localization stage.
    heatmap_supervision : bool
        Include the focal heatmap term in the loss.
    learning_rate, lr_decay, epochs, batch_size, loss_weight, focal_alpha, focal_beta
        Optimization settings; ``lr_decay`` is applied once per epoch.
    anchor_sigma : float
        Gaussian radius (m) of the anchor fields.
    sigma_voxels : float
        Radius of the ground-truth 3D heatmap Gaussians, in voxels.
    seed : int
    deterministic : bool
        Single-threaded, deterministic kernels, fixed reduction order.
    verbose : int
    """

    def __init__(self, widths=(32, 64, 128), conditional=True, heatmap_supervision=True,
                 learning_rate=1e-4, lr_decay=0.95, epochs=50, batch_size=32, loss_weight=1.0,
                 focal_alpha=2.0, focal_beta=4.0, anchor_sigma=DEFAULT_ANCHOR_SIGMA, sigma_voxels=1.5,
                 volume_size=2.0, resolution=32, seed=0, deterministic=True, verbose=0):
        self.widths = widths
        self.conditional = conditional
        self.heatmap_supervision = heatmap_supervision
        self.learning_rate = learning_rate
        self.lr_decay = lr_decay
        self.epochs = epochs
        self.batch_size = batch_size
        self.loss_weight = loss_weight
        self.focal_alpha = focal_alpha
        self.focal_beta = focal_beta
        self.anchor_sigma = anchor_sigma
        self.sigma_voxels = sigma_voxels
        self.volume_size = volume_size
        self.resolution = resolution
        self.seed = seed
        self.deterministic = deterministic
        self.verbose = verbose

    @classmethod
    def from_config(cls, config: TrainConfig, **kw):
        return cls(**{**asdict(config), **kw})

    @property
    def grid(self) -> VolumeGrid:
        return VolumeGrid(self.volume_size, self.resolution)

    def _build(self):
        torch.manual_seed(self.seed)
        return TwoStageNet(NUM_JOINTS, self.widths, self.conditional, self.resolution)

    def _check_fitted(self):
        if not hasattr(self, "net_"):
            raise NotFittedError("call fit or load a checkpoint first")

    def _setup_determinism(self):
        if self.deterministic:
            torch.set_num_threads(1)
            torch.use_deterministic_algorithms(True)

    def fit(self, X, y=None, X_val=None, callback: Callable | None = None):
        """Train end to end on ``X``; ``X_val`` (optional) is scored once per epoch."""
        X = check_training_samples(X, self.resolution)
        if not X:
            raise ValueError("training set is empty")
        self._setup_determinism()
        TrainConfig(self.learning_rate, self.lr_decay, self.epochs, self.batch_size,
                    self.loss_weight, self.focal_alpha, self.focal_beta, self.seed)
        self.net_ = self._build()
        self.history_ = []
        data = _stack(X)
        n = len(X)
        gen = torch.Generator().manual_seed(self.seed)
        opt = torch.optim.Adam(self.net_.parameters(), lr=self.learning_rate, betas=(0.9, 0.999), eps=1e-8)
        sched = torch.optim.lr_scheduler.ExponentialLR(opt, gamma=self.lr_decay)
        weight = self.loss_weight if self.heatmap_supervision else 0.0
        grid = self.grid
        last_finite = None
        for epoch in range(self.epochs):
            self.net_.train()
            perm = torch.randperm(n, generator=gen)
            tot, err, seen = 0.0, 0.0, 0
            for start in range(0, n, self.batch_size):
                b = perm[start:start + self.batch_size]
                H_gt = gt_heatmaps_fused(data["index"][b], self.resolution, self.sigma_voxels)
                H, P = self.net_(data["F"][b], data["Z"][b], data["Z_other"][b])
                y_hat = soft_argmax(P, data["R"][b], data["origin"][b], grid)
                loss, _, _ = pose_loss(H, H_gt, y_hat, data["y"][b], weight, self.focal_alpha, self.focal_beta)
                if not torch.isfinite(loss):
                    raise DivergedLoss(f"non-finite loss at epoch {epoch}", last_finite)
                opt.zero_grad()
                loss.backward()
                opt.step()
                tot += loss.item() * len(b)
                err += float((y_hat.detach() - data["y"][b]).norm(dim=-1).mean()) * len(b)
                seen += len(b)
            sched.step()
            last_finite = epoch
            record = dict(epoch=epoch, loss=tot / seen, train_mpjpe_mm=1000.0 * err / seen)
            if X_val:
                record["val_mpjpe_mm"] = self.mpjpe(X_val)
            self.history_.append(record)
            if self.verbose:
                log.info("epoch %d loss %.5f mpjpe %.1f mm", epoch, record["loss"], record["train_mpjpe_mm"])
            if callback is not None:
                callback(record)
        self.net_.eval()
        return self

    @torch.no_grad()
    def predict(self, X, batch_size=16, return_confidence=False):
        """World-frame joints ``(n, J, 3)`` for a list of training-style samples."""
        self._check_fitted()
        X = check_training_samples(X, self.resolution)
        self.net_.eval()
        out, conf = [], []
        for start in range(0, len(X), batch_size):
            d = _stack(X[start:start + batch_size])
            _, P = self.net_(d["F"], d["Z"], d["Z_other"])
            out.append(soft_argmax(P, d["R"], d["origin"], self.grid).double().numpy())
            conf.append(P.flatten(2).amax(-1).double().numpy())
        y = np.concatenate(out) if out else np.zeros((0, NUM_JOINTS, 3))
        if return_confidence:
            return y, (np.concatenate(conf) if conf else np.zeros((0, NUM_JOINTS)))
        return y

    def mpjpe(self, X) -> float:
        """Mean per-joint error in millimetres against the samples' ``y``."""
        y_hat = self.predict(X)
        y = np.stack([s.y for s in X])
        return float(1000.0 * np.linalg.norm(y_hat - y, axis=-1).mean())

    def score(self, X, y=None) -> float:
        return -self.mpjpe(X)

    @torch.no_grad()
    def infer_person(self, heatmaps, cams, anchors, others=(), previous=None, radius=0.05,
                     heatmap_hook=None, keep_ratio=0.0):
        """Pipeline for one person: unpose, volumes, both stages, readout.

        ``previous`` (J, 3), when given, gates the 3D heatmaps to within
        ``radius`` of last frame's joints. ``heatmap_hook`` may rewrite the
        3D heatmaps before localization (used for perturbation tests).
        ``keep_ratio`` is passed to :func:`temporal_filter`.

        Returns ``(joints (J, 3), confidence (J,))``.
        """
        self._check_fitted()
        grid = self.grid
        unpose = compute_unpose(anchors.pelvis, anchors.neck)
        F = build_keypoint_volume(grid, unpose, heatmaps, cams)
        Z, Zo = build_anchor_volumes(grid, unpose, anchors, others, self.anchor_sigma)
        R = torch.as_tensor(unpose.R[None], dtype=torch.float32)
        origin = torch.as_tensor(unpose.origin[None], dtype=torch.float32)
        H = self.net_.hem_forward(torch.from_numpy(F[None]))
        if heatmap_hook is not None:
            H = heatmap_hook(H, unpose)
        if previous is not None:
            prev = torch.as_tensor(np.asarray(previous)[None], dtype=torch.float32)
            H = temporal_filter(H, prev, R, origin, radius, grid, keep_ratio)
        P = self.net_.klm_forward(H, torch.from_numpy(Z[None]), torch.from_numpy(Zo[None]))
        y = soft_argmax(P.double(), R.double(), origin.double(), grid)[0].numpy()
        return y, P.flatten(2).amax(-1)[0].double().numpy()

    def infer_frame(self, heatmaps, cams, people, previous=None, radius=0.05, heatmap_hook=None,
                    keep_ratio=0.0):
        """Skeletons for every person in ``people`` (list of PersonAnchors).

        ``previous`` maps person id -> last frame's Skeleton3D. People whose
        anchors are degenerate come back with ``status="degenerate_anchors"``
        and NaN-free placeholder joints at the pelvis.
        """
        previous = previous or {}
        out = []
        for person in people:
            others = [p for p in people if p is not person]
            prev = previous.get(person.id)
            try:
                y, c = self.infer_person(heatmaps, cams, person, others,
                                         None if prev is None else prev.joints, radius, heatmap_hook,
                                         keep_ratio)
            except DegenerateAnchors:
                out.append(Skeleton3D(np.repeat(person.pelvis[None], NUM_JOINTS, 0), person.id,
                                      np.zeros(NUM_JOINTS), status="degenerate_anchors", score=0.0))
                continue
            out.append(Skeleton3D(y, person.id, c))
        return out

    def save(self, path):
        self._check_fitted()
        params = {k: (list(v) if isinstance(v, tuple) else v) for k, v in self.get_params().items()}
        data = checkpoint.dumps(self.net_.state_dict(), self.net_.config(), params,
                                self.anchor_sigma, self.loss_weight)
        Path(path).write_bytes(data)
        return path

    @classmethod
    def load(cls, path):
        header, arch, params, state = checkpoint.loads(Path(path).read_bytes())
        params["widths"] = tuple(params["widths"])
        est = cls(**params)
        est.net_ = TwoStageNet(arch["n_joints"], tuple(arch["widths"]), arch["conditional"], arch["resolution"])
        est.net_.load_state_dict(state)
        est.net_.eval()
        est.history_ = []
        est.checkpoint_header_ = header
        return est


def train(samples, config: TrainConfig, **kw) -> VolumetricPoseEstimator:
    """Fit a fresh estimator with ``config``; extra keywords go to the estimator."""
    return VolumetricPoseEstimator.from_config(config, **kw).fit(samples)
