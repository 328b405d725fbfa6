"""Sequence inference: anchors per frame, then the pose network per person."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass

import numpy as np

from ._validation import check_heatmaps
from .centers import DEFAULT_GATE_PX, DEFAULT_SCORE_THRESHOLD, CenterEstimator
from .skeleton import NUM_JOINTS, Skeleton3D

log = logging.getLogger(__name__)


@dataclass
class InferenceConfig:
    """Per-sequence inference options.

    The temporal filter needs identities that persist across frames, so it
    is active only while tracking is on.
    """

    tracking: bool = True
    temporal_filter: bool = True
    radius: float = 0.05
    gate_px: float = DEFAULT_GATE_PX
    score_threshold: float = DEFAULT_SCORE_THRESHOLD
    keep_ratio: float = 0.0  # > 0 lets the filter drop a lost track, see temporal_filter

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("temporal filter radius must be positive")
        if not 0.0 <= self.keep_ratio <= 1.0:
            raise ValueError("keep_ratio must be in [0, 1]")
        if self.gate_px <= 0:
            raise ValueError("gate_px must be positive")

    def to_dict(self):
        return asdict(self)


class SequenceInference:
    """Runs center estimation and pose inference frame by frame.

    Failures never abort the sequence: a frame whose anchors cannot be
    estimated yields no people and a frame status; a person whose pose
    cannot be inferred is returned with a non-``"ok"`` status.
    """

    def __init__(self, estimator, cams, config: InferenceConfig | None = None):
        self.estimator = estimator
        self.cams = list(cams)
        self.config = config or InferenceConfig()
        self.centers = CenterEstimator(self.cams, self.config.gate_px, self.config.score_threshold,
                                       tracking=self.config.tracking)
        self.previous_: dict = {}
        self.anchor_log_: list = []

    def reset(self):
        self.centers.reset()
        self.previous_ = {}
        self.anchor_log_ = []

    def step(self, heatmaps):
        """Returns ``(skeletons, frame_status)`` for one frame."""
        cfg = self.config
        try:
            heatmaps = check_heatmaps(heatmaps, self.cams, NUM_JOINTS)
            people = self.centers(heatmaps)
        except Exception as e:  # in-band: keep the sequence going
            log.warning("frame skipped: %s", e)
            self.anchor_log_.append([])
            self.previous_ = {}
            return [], f"center_failure: {e}"
        self.anchor_log_.append(people)
        use_filter = cfg.tracking and cfg.temporal_filter
        previous = self.previous_ if use_filter else {}
        try:
            skeletons = self.estimator.infer_frame(heatmaps, self.cams, people, previous, cfg.radius,
                                                   keep_ratio=cfg.keep_ratio)
        except Exception as e:  # in-band: report every person of the frame as failed
            log.warning("inference failed: %s", e)
            skeletons = [Skeleton3D(np.repeat(np.asarray(p.pelvis)[None], NUM_JOINTS, 0), p.id,
                                    np.zeros(NUM_JOINTS), status="inference_failure", score=0.0)
                         for p in people]
        if use_filter:
            self.previous_ = {s.id: s for s in skeletons if s.status == "ok"}
        return skeletons, "ok"

    def run(self, frames):
        """``frames`` yields ``(index, heatmaps)``; returns ``[(index, skeletons, status)]``."""
        self.reset()
        out = []
        for index, heatmaps in frames:
            skeletons, status = self.step(heatmaps)
            out.append((index, skeletons, status))
        return out
