"""Pose matching and accuracy metrics (MPJPE, 3DPCK, AP, centre error).

Distances inside the package are meters; every metric reports millimetres.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .exceptions import NoMatches
from .skeleton import JOINT_GROUPS, JOINT_NAMES

SWEEP_MM = tuple(range(0, 101, 10))


@dataclass
class MatchResult:
    pairs: list                       # (estimate index, gt index)
    false_positives: list
    misses: list
    distances_mm: np.ndarray          # (n_pairs, J)
    confidences: np.ndarray           # (n_pairs,)
    fp_confidences: np.ndarray = field(default_factory=lambda: np.zeros(0))
    n_joints: int = 15

    @property
    def n_gt(self) -> int:
        return len(self.pairs) + len(self.misses)


def _joints(p):
    return np.asarray(p.joints if hasattr(p, "joints") else p, dtype=float)


def _score(p):
    return float(getattr(p, "score", 1.0))


def mean_joint_distance(a, b) -> float:
    return float(np.linalg.norm(_joints(a) - _joints(b), axis=-1).mean())


def match_poses(estimates: Sequence, ground_truth: Sequence) -> MatchResult:
    """Match each estimate to its closest ground-truth pose (mean joint
    distance). When several estimates pick the same ground truth the most
    confident one wins; the rest are false positives."""
    n_j = _joints(ground_truth[0]).shape[0] if ground_truth else (
        _joints(estimates[0]).shape[0] if estimates else 15)
    if not ground_truth:
        return MatchResult([], list(range(len(estimates))), [], np.zeros((0, n_j)), np.zeros(0),
                           np.array([_score(e) for e in estimates]), n_j)
    nearest = {}
    for i, e in enumerate(estimates):
        d = [mean_joint_distance(e, g) for g in ground_truth]
        nearest[i] = int(np.argmin(d))
    pairs, fps = [], []
    for g in range(len(ground_truth)):
        claim = [i for i, k in nearest.items() if k == g]
        if not claim:
            continue
        # ties broken by lower estimate index
        winner = max(claim, key=lambda i: (_score(estimates[i]), -i))
        pairs.append((winner, g))
        fps.extend(i for i in claim if i != winner)
    matched_gt = {g for _, g in pairs}
    misses = [g for g in range(len(ground_truth)) if g not in matched_gt]
    dist = np.array([1000.0 * np.linalg.norm(_joints(estimates[i]) - _joints(ground_truth[g]), axis=-1)
                     for i, g in pairs]).reshape(len(pairs), n_j)
    conf = np.array([_score(estimates[i]) for i, _ in pairs])
    fps.sort()
    return MatchResult(pairs, fps, misses, dist, conf, np.array([_score(estimates[i]) for i in fps]), n_j)


def _merge(results):
    if isinstance(results, MatchResult):
        return [results]
    return list(results)


def mpjpe(results) -> float:
    """Mean joint error (mm) over all matched pairs of one or many frames."""
    d = [r.distances_mm for r in _merge(results) if len(r.pairs)]
    if not d:
        raise NoMatches("no matched pairs")
    return float(np.concatenate(d).mean())


def pck(results, threshold_mm=50.0) -> float:
    """Percentage of ground-truth joints whose matched estimate lies strictly
    within ``threshold_mm``; joints of unmatched ground truth count as wrong."""
    if threshold_mm <= 0:
        raise ValueError("threshold must be positive")
    correct = total = 0
    for r in _merge(results):
        correct += int((r.distances_mm < threshold_mm).sum())
        total += r.n_gt * r.n_joints
    return 100.0 * correct / total if total else 0.0


def pck_per_joint(results, threshold_mm=50.0) -> dict:
    res = _merge(results)
    n_j = res[0].n_joints if res else len(JOINT_NAMES)
    correct = np.zeros(n_j)
    total = 0
    for r in res:
        correct += (r.distances_mm < threshold_mm).sum(0) if len(r.pairs) else 0
        total += r.n_gt
    names = JOINT_NAMES if n_j == len(JOINT_NAMES) else [str(j) for j in range(n_j)]
    return {name: (100.0 * c / total if total else 0.0) for name, c in zip(names, correct)}


def pck_per_group(results, threshold_mm=50.0) -> dict:
    """Left and right joints pooled: Shoulder, Elbow, Wrist, Hip, Knee, Ankle."""
    res = _merge(results)
    out = {}
    for group, idx in JOINT_GROUPS.items():
        correct = sum(int((r.distances_mm[:, list(idx)] < threshold_mm).sum()) for r in res if len(r.pairs))
        total = sum(r.n_gt * len(idx) for r in res)
        out[group] = 100.0 * correct / total if total else 0.0
    return out


def pck_sweep(results, thresholds=SWEEP_MM, per_group=False):
    """PCK curve over ``thresholds``. A zero threshold scores 0 by definition."""
    curve = {"thresholds_mm": list(thresholds), "all": []}
    if per_group:
        for g in JOINT_GROUPS:
            curve[g] = []
    for t in thresholds:
        if t <= 0:
            curve["all"].append(0.0)
            for g in JOINT_GROUPS if per_group else ():
                curve[g].append(0.0)
            continue
        curve["all"].append(pck(results, t))
        if per_group:
            for g, v in pck_per_group(results, t).items():
                curve[g].append(v)
    return curve


def average_precision(results, threshold_mm) -> float:
    """AP (%) with confidence ranking pooled over all frames.

    A matched estimate is a true positive when its MPJPE to its ground truth
    is below ``threshold_mm``. Precision is made monotone (all-point
    interpolation) and integrated over recall.
    """
    res = _merge(results)
    n_gt = sum(r.n_gt for r in res)
    scored = []
    for r in res:
        for k in range(len(r.pairs)):
            scored.append((r.confidences[k], bool(r.distances_mm[k].mean() < threshold_mm)))
        scored.extend((c, False) for c in r.fp_confidences)
    if not scored or n_gt == 0:
        return 0.0
    scored.sort(key=lambda s: -s[0])
    tp = np.cumsum([s[1] for s in scored])
    fp = np.cumsum([not s[1] for s in scored])
    recall = tp / n_gt
    precision = tp / np.maximum(tp + fp, 1)
    mrec = np.concatenate([[0.0], recall, [1.0]])
    mpre = np.concatenate([[0.0], precision, [0.0]])
    for i in range(len(mpre) - 2, -1, -1):
        mpre[i] = max(mpre[i], mpre[i + 1])
    step = np.flatnonzero(mrec[1:] != mrec[:-1]) + 1
    return float(100.0 * np.sum((mrec[step] - mrec[step - 1]) * mpre[step]))


def center_error(estimated, ground_truth) -> float:
    """Mean pelvis distance (mm) after greedy nearest-pelvis matching.

    Both arguments are sequences of pelvis points or objects with a
    ``pelvis`` attribute.
    """
    est = [np.asarray(getattr(a, "pelvis", a), dtype=float) for a in estimated]
    gt = [np.asarray(getattr(a, "pelvis", a), dtype=float) for a in ground_truth]
    if not est or not gt:
        raise NoMatches("nothing to match")
    edges = sorted((float(np.linalg.norm(e - g)), i, k) for i, e in enumerate(est) for k, g in enumerate(gt))
    used_e, used_g, d = set(), set(), []
    for dist, i, k in edges:
        if i in used_e or k in used_g:
            continue
        used_e.add(i)
        used_g.add(k)
        d.append(dist)
    return 1000.0 * float(np.mean(d))


def evaluation_report(results, thresholds_mm=(25.0, 50.0, 100.0)) -> dict:
    """Everything the CLI writes: overall numbers, per-joint tables, sweeps."""
    res = _merge(results)
    try:
        err = mpjpe(res)
    except NoMatches:
        err = None
    return {
        "n_frames": len(res),
        "n_gt": sum(r.n_gt for r in res),
        "n_estimates": sum(len(r.pairs) + len(r.false_positives) for r in res),
        "mpjpe_mm": err,
        "pck": {str(t): pck(res, t) for t in thresholds_mm},
        "ap": {str(t): average_precision(res, t) for t in thresholds_mm},
        "pck_per_joint@50": pck_per_joint(res, 50.0),
        "pck_per_group@50": pck_per_group(res, 50.0),
        "sweep": pck_sweep(res, per_group=True),
    }
