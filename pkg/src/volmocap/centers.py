"""Per-frame recovery of each person's pelvis and neck anchors.

Two routes: greedy, score-ordered cross-view triangulation of heatmap peaks,
and tracking, which snaps last frame's anchors to the nearest current peaks.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.ndimage import maximum_filter

from .exceptions import RankDeficient
from .geometry import Camera, project_many, reprojection_error, triangulate
from .skeleton import NECK, PELVIS

DEFAULT_GATE_PX = 15.0
DEFAULT_SCORE_THRESHOLD = 0.3
NECK_DISTANCE_RANGE = (0.15, 0.8)


@dataclass(frozen=True)
class Candidate2D:
    view: int
    position: tuple[float, float]  # image pixels
    score: float
    joint: int = PELVIS


@dataclass
class PersonAnchors:
    id: int
    pelvis: np.ndarray
    neck: np.ndarray
    views: tuple[int, ...] = ()
    reprojection_error: float = 0.0

    def __post_init__(self):
        self.pelvis = np.asarray(self.pelvis, dtype=float)
        self.neck = np.asarray(self.neck, dtype=float)

    @property
    def points(self) -> np.ndarray:
        """Anchors stacked as ``(2, 3)``: pelvis then neck."""
        return np.stack([self.pelvis, self.neck])


@dataclass
class JointAnchor:
    """A single triangulated joint with its supporting candidates."""

    point: np.ndarray
    support: list = field(default_factory=list)
    error: float = 0.0

    @property
    def views(self) -> tuple[int, ...]:
        return tuple(sorted(c.view for c in self.support))


def extract_candidates(heatmaps, cams: Sequence[Camera], joint: int,
                       score_threshold=DEFAULT_SCORE_THRESHOLD) -> list[Candidate2D]:
    """Local maxima of one joint's map in every view, best first.

    Peaks use a 3x3 non-maximum window and are refined to sub-pixel with a
    separable quadratic fit before being scaled to image pixels.
    """
    out = []
    for cam, maps in zip(cams, heatmaps):
        m = np.asarray(maps[joint], dtype=float)
        if m.max() < score_threshold:
            continue
        peaks = (m == maximum_filter(m, size=3, mode="constant", cval=0.0)) & (m >= score_threshold)
        for r, c in zip(*np.nonzero(peaks)):
            dx = _parabola_offset(m, r, c, axis=1)
            dy = _parabola_offset(m, r, c, axis=0)
            pos = ((c + dx) * cam.heatmap_scale, (r + dy) * cam.heatmap_scale)
            out.append(Candidate2D(cam.id, pos, float(m[r, c]), joint))
    out.sort(key=lambda c: (-c.score, c.view, c.position))
    return out


def _parabola_offset(m, r, c, axis):
    n = m.shape[axis]
    i = r if axis == 0 else c
    if i == 0 or i == n - 1:
        return 0.0
    if axis == 0:
        lo, mid, hi = m[r - 1, c], m[r, c], m[r + 1, c]
    else:
        lo, mid, hi = m[r, c - 1], m[r, c], m[r, c + 1]
    denom = lo - 2.0 * mid + hi
    if denom >= 0:
        return 0.0
    return float(np.clip(0.5 * (lo - hi) / denom, -0.5, 0.5))


def _by_view(candidates):
    views = {}
    for c in candidates:
        views.setdefault(c.view, []).append(c)
    return views


def _gather_support(point, seed, by_view, used, cams, gate_px):
    """Seed candidates plus, per other view, the nearest unused candidate
    within the gate."""
    support = list(seed)
    seed_views = {c.view for c in seed}
    for cam in cams:
        if cam.id in seed_views or cam.id not in by_view:
            continue
        pool = [c for c in by_view[cam.id] if c not in used]
        if not pool:
            continue
        uv, valid = project_many(point[None], cam)
        if not valid[0]:
            continue
        d = [np.hypot(*(uv[0] - np.asarray(c.position))) for c in pool]
        k = int(np.argmin(d))
        if d[k] <= gate_px:
            support.append(pool[k])
    return support


def _fit(support, cams):
    obs = [(c.view, c.position) for c in support]
    point = triangulate(obs, cams)
    err = reprojection_error(point, obs, cams)
    return point, err


def greedy_reconstruct(candidates, cams: Sequence[Camera], gate_px=DEFAULT_GATE_PX,
                       min_views=2) -> list[JointAnchor]:
    """Greedy score-ordered association of one joint's candidates.

    Candidates are taken best first; each is paired with the best unused
    candidate of another view, the pair is triangulated and checked against
    every view. A pair is accepted when enough views support it and the
    refit mean reprojection error stays under ``gate_px``.

    The loop runs twice: first demanding support from three views (when the
    rig offers them), which stops two-view ghost points from stealing
    candidates; then accepting any two-view support on what is left.
    """
    cands = sorted(candidates, key=lambda c: (-c.score, c.view, c.position))
    by_view = _by_view(cands)
    used: set = set()
    found: list[JointAnchor] = []
    n_views = len(by_view)
    for required in sorted({min(3, n_views), min_views}, reverse=True):
        if required < 2:
            continue
        progress = True
        while progress:
            progress = False
            for a, b in _ordered_pairs(cands, used):
                try:
                    point, err = _fit([a, b], cams)
                except RankDeficient:
                    continue
                if not np.all(err <= gate_px):
                    continue
                support = _gather_support(point, [a, b], by_view, used, cams, gate_px)
                if len(support) < required:
                    continue
                try:
                    point, err = _fit(support, cams)
                except RankDeficient:
                    continue
                if not np.all(np.isfinite(err)) or err.mean() > gate_px:
                    continue
                used.update(support)
                found.append(JointAnchor(point, support, float(err.mean())))
                progress = True
                break
    return found


def _ordered_pairs(cands, used):
    free = [c for c in cands if c not in used]
    for i, a in enumerate(free):
        for b in free[i + 1:]:
            if b.view != a.view:
                yield a, b


def pair_anchors(pelvis: Sequence[JointAnchor], neck: Sequence[JointAnchor],
                 distance_range=NECK_DISTANCE_RANGE, first_id=0) -> list[PersonAnchors]:
    """Greedy nearest-neighbour pairing of pelvis and neck points."""
    lo, hi = distance_range
    edges = []
    for i, p in enumerate(pelvis):
        for j, n in enumerate(neck):
            d = float(np.linalg.norm(p.point - n.point))
            if lo <= d <= hi:
                edges.append((d, i, j))
    edges.sort()
    taken_p, taken_n, pairs = set(), set(), {}
    for d, i, j in edges:
        if i in taken_p or j in taken_n:
            continue
        taken_p.add(i)
        taken_n.add(j)
        pairs[i] = j
    people = []
    for k, i in enumerate(sorted(pairs)):
        p, n = pelvis[i], neck[pairs[i]]
        people.append(PersonAnchors(
            first_id + k, p.point, n.point,
            views=tuple(sorted(set(p.views) | set(n.views))),
            reprojection_error=0.5 * (p.error + n.error)))
    return people


class CenterEstimator:
    """Stateful per-sequence anchor estimator.

    Parameters
    ----------
    cams : list of Camera
    gate_px : float
        Reprojection gate at full image resolution.
    score_threshold : float
        Minimum heatmap response for a peak to become a candidate.
    tracking : bool
        Reuse the previous frame's anchors when available.
    """

    def __init__(self, cams, gate_px=DEFAULT_GATE_PX, score_threshold=DEFAULT_SCORE_THRESHOLD,
                 tracking=True):
        self.cams = list(cams)
        self.gate_px = gate_px
        self.score_threshold = score_threshold
        self.tracking = tracking
        self.previous_: list[PersonAnchors] | None = None
        self.next_id_ = 0

    def reset(self):
        self.previous_ = None
        self.next_id_ = 0

    def __call__(self, heatmaps) -> list[PersonAnchors]:
        if self.tracking and self.previous_:
            people = track_anchors(self.previous_, heatmaps, self.cams, self.gate_px,
                                   self.score_threshold, next_id=self.next_id_)
        else:
            people = reconstruct_people(heatmaps, self.cams, self.gate_px, self.score_threshold,
                                        first_id=self.next_id_ if self.tracking else 0)
        if self.tracking:
            self.previous_ = people
            if people:
                self.next_id_ = max(self.next_id_, max(p.id for p in people) + 1)
        return people


def reconstruct_people(heatmaps, cams, gate_px=DEFAULT_GATE_PX,
                       score_threshold=DEFAULT_SCORE_THRESHOLD, first_id=0):
    """Candidates -> greedy triangulation per anchor joint -> pairing."""
    pelvis = greedy_reconstruct(extract_candidates(heatmaps, cams, PELVIS, score_threshold),
                                cams, gate_px)
    neck = greedy_reconstruct(extract_candidates(heatmaps, cams, NECK, score_threshold),
                              cams, gate_px)
    return pair_anchors(pelvis, neck, first_id=first_id)


def _track_joint(point, by_view, used, cams, gate_px):
    support = []
    for cam in cams:
        pool = [c for c in by_view.get(cam.id, []) if c not in used]
        if not pool:
            continue
        uv, valid = project_many(point[None], cam)
        if not valid[0]:
            continue
        d = [np.hypot(*(uv[0] - np.asarray(c.position))) for c in pool]
        k = int(np.argmin(d))
        if d[k] <= gate_px:
            support.append(pool[k])
    if len(support) < 2:
        return None
    try:
        new_point, err = _fit(support, cams)
    except RankDeficient:
        return None
    if not np.all(np.isfinite(err)) or err.mean() > gate_px:
        return None
    return JointAnchor(new_point, support, float(err.mean()))


def track_anchors(previous: Sequence[PersonAnchors], heatmaps, cams: Sequence[Camera],
                  gate_px=DEFAULT_GATE_PX, score_threshold=DEFAULT_SCORE_THRESHOLD,
                  next_id=None, rebind_distance=0.3) -> list[PersonAnchors]:
    """Propagate last frame's people to the current frame.

    Each previous anchor is projected into every view and snapped to the
    nearest current candidate within the gate. People that cannot be tracked
    are looked for again with :func:`greedy_reconstruct` on the leftover
    candidates; a rediscovered person keeps its old id when its pelvis lies
    within ``rebind_distance`` of where it was last seen.
    """
    cand = {j: extract_candidates(heatmaps, cams, j, score_threshold) for j in (PELVIS, NECK)}
    by_view = {j: _by_view(c) for j, c in cand.items()}
    used = {PELVIS: set(), NECK: set()}
    people, lost = [], []
    for person in sorted(previous, key=lambda p: p.id):
        pel = _track_joint(person.pelvis, by_view[PELVIS], used[PELVIS], cams, gate_px)
        nek = _track_joint(person.neck, by_view[NECK], used[NECK], cams, gate_px) if pel else None
        if pel is None or nek is None:
            lost.append(person)
            continue
        d = np.linalg.norm(pel.point - nek.point)
        if not NECK_DISTANCE_RANGE[0] <= d <= NECK_DISTANCE_RANGE[1]:
            lost.append(person)
            continue
        used[PELVIS].update(pel.support)
        used[NECK].update(nek.support)
        people.append(PersonAnchors(
            person.id, pel.point, nek.point,
            views=tuple(sorted(set(pel.views) | set(nek.views))),
            reprojection_error=0.5 * (pel.error + nek.error)))

    leftovers = {j: [c for c in cand[j] if c not in used[j]] for j in cand}
    pel = greedy_reconstruct(leftovers[PELVIS], cams, gate_px)
    nek = greedy_reconstruct(leftovers[NECK], cams, gate_px)
    if next_id is None:
        next_id = max([p.id for p in previous] + [-1]) + 1
    for person in pair_anchors(pel, nek, first_id=0):
        best = None
        for old in lost:
            d = np.linalg.norm(old.pelvis - person.pelvis)
            if d <= rebind_distance and (best is None or d < best[0]):
                best = (d, old)
        if best is not None:
            lost.remove(best[1])
            person.id = best[1].id
        else:
            person.id = next_id
            next_id += 1
        people.append(person)
    people.sort(key=lambda p: p.id)
    return people
