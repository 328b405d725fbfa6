import itertools

import numpy as np
import pytest

from volmocap.centers import (Candidate2D, CenterEstimator, JointAnchor, extract_candidates,
                              greedy_reconstruct, pair_anchors, reconstruct_people, track_anchors)
from volmocap.geometry import project, reprojection_error, ring_rig, triangulate
from volmocap.skeleton import NECK, NUM_JOINTS, PELVIS
from volmocap.synth import gaussian_2d


def render_anchor_maps(people, cams, std=2.0):
    """Heatmaps with exact Gaussians at every person's pelvis and neck."""
    maps = []
    for cam in cams:
        hm = np.zeros((NUM_JOINTS,) + cam.heatmap_shape)
        for pel, neck in people:
            for j, X in ((PELVIS, pel), (NECK, neck)):
                uv = project(X, cam) / cam.heatmap_scale
                np.maximum(hm[j], gaussian_2d(cam.heatmap_shape, uv, std), out=hm[j])
        maps.append(hm.astype(np.float32))
    return maps


def exact_candidates(points, cams, joint=PELVIS):
    return [Candidate2D(c.id, tuple(project(X, c)), 1.0 - 0.01 * k, joint)
            for c in cams for k, X in enumerate(points)]


def random_people(rng, n, spacing=0.5):
    """Pelvis positions on the floor area, at least ``spacing`` apart."""
    pts = []
    while len(pts) < n:
        p = np.array([rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(0.8, 1.1)])
        if all(np.linalg.norm(p - q) > spacing for q in pts):
            pts.append(p)
    return pts


class TestExtractCandidates:
    def test_single_blob(self, rig4):
        cam = rig4[0]
        hm = np.zeros((1, NUM_JOINTS) + cam.heatmap_shape)
        hm[0, PELVIS] = gaussian_2d(cam.heatmap_shape, (40.3, 70.6), 2.0, 0.9)
        c = extract_candidates(hm, [cam], PELVIS)
        assert len(c) == 1
        assert np.hypot(c[0].position[0] / 4 - 40.3, c[0].position[1] / 4 - 70.6) < 0.5
        assert c[0].score == pytest.approx(0.9, abs=0.03)

    def test_two_blobs_ordered(self, rig4):
        cam = rig4[0]
        m = np.maximum(gaussian_2d(cam.heatmap_shape, (30, 60), 2.0, 0.8),
                       gaussian_2d(cam.heatmap_shape, (50, 60), 2.0, 0.9))
        hm = np.zeros((1, NUM_JOINTS) + cam.heatmap_shape)
        hm[0, PELVIS] = m
        c = extract_candidates(hm, [cam], PELVIS)
        assert [round(x.score, 2) for x in c] == [0.9, 0.8]
        # oracle: brute-force strict 3x3 local maxima above threshold
        peaks = [(r, q) for r in range(1, m.shape[0] - 1) for q in range(1, m.shape[1] - 1)
                 if m[r, q] >= 0.3 and m[r, q] == m[r - 1:r + 2, q - 1:q + 2].max()]
        assert len(peaks) == len(c)

    def test_zero_map(self, rig4):
        hm = [np.zeros((NUM_JOINTS,) + c.heatmap_shape) for c in rig4]
        assert extract_candidates(hm, rig4, PELVIS) == []


def brute_force_consistent(cands, cams, tol=1e-3):
    """Every one-candidate-per-view tuple whose triangulation reprojects
    within ``tol`` px in all its views; keeps maximal tuples."""
    by_view = {}
    for c in cands:
        by_view.setdefault(c.view, []).append(c)
    views = sorted(by_view)
    found = []
    for combo in itertools.product(*(by_view[v] for v in views)):
        obs = [(c.view, c.position) for c in combo]
        X = triangulate(obs, cams)
        if np.all(reprojection_error(X, obs, cams) < tol):
            found.append(X)
    return found


class TestGreedyReconstruct:
    def test_two_people_exact(self, rig4, rng):
        truth = random_people(rng, 2)
        found = greedy_reconstruct(exact_candidates(truth, rig4), rig4)
        assert len(found) == 2
        for X in truth:
            assert min(np.linalg.norm(a.point - X) for a in found) < 1e-4

    def test_single_view_gives_nothing(self, rig4):
        cands = exact_candidates([np.array([0.0, 0.0, 1.0])], rig4[:1])
        assert greedy_reconstruct(cands, rig4) == []

    @pytest.mark.parametrize("seed", range(10))
    @pytest.mark.parametrize("n", [1, 3, 5])
    def test_matches_brute_force(self, seed, n):
        r = np.random.default_rng(seed)
        cams = ring_rig(4)
        truth = random_people(r, n)
        cands = exact_candidates(truth, cams)
        found = greedy_reconstruct(cands, cams)
        oracle = brute_force_consistent(cands, cams)
        assert len(found) == n == len(oracle)
        for X in oracle:
            assert min(np.linalg.norm(a.point - X) for a in found) < 1e-3
        # supports are disjoint and within the gate
        seen = set()
        for a in found:
            assert not seen & set(a.support)
            seen |= set(a.support)
            assert a.error <= 15.0

    def test_occluded_in_one_view(self, rig4):
        cam = rig4[0]
        a = np.array([0.3, 0.2, 1.0])
        ray = a - cam.center
        b = a + 0.6 * ray / np.linalg.norm(ray)  # same pixel in view 0
        np.testing.assert_allclose(project(a, cam), project(b, cam), atol=1e-9)
        cands = [Candidate2D(0, tuple(project(a, cam)), 0.95)]
        cands += [Candidate2D(c.id, tuple(project(X, c)), s) for c in rig4[1:] for X, s in ((a, 0.9), (b, 0.8))]
        found = greedy_reconstruct(cands, rig4)
        assert len(found) == 2
        for X in (a, b):
            assert min(np.linalg.norm(f.point - X) for f in found) < 1e-6

    def test_rejects_above_gate(self, rig4, rng):
        truth = random_people(rng, 3)
        cands = [Candidate2D(c.view, tuple(np.asarray(c.position) + rng.normal(scale=3.0, size=2)),
                             c.score) for c in exact_candidates(truth, rig4)]
        for a in greedy_reconstruct(cands, rig4, gate_px=10.0):
            assert a.error <= 10.0


def _anchor(p):
    return JointAnchor(np.asarray(p, dtype=float), [], 0.0)


class TestPairAnchors:
    def test_one_person(self):
        people = pair_anchors([_anchor([0, 0, 0])], [_anchor([0, 0, 0.5])])
        assert len(people) == 1

    def test_too_far(self):
        assert pair_anchors([_anchor([0, 0, 0])], [_anchor([0, 0, 1.2])]) == []

    @pytest.mark.parametrize("seed", range(20))
    def test_two_by_two_brute_force(self, seed):
        r = np.random.default_rng(seed)
        pel = [r.uniform(-0.5, 0.5, 3) for _ in range(2)]
        nek = [p + np.array([0, 0, 0.5]) + r.normal(scale=0.15, size=3) for p in pel[::-1]]
        people = pair_anchors([_anchor(p) for p in pel], [_anchor(n) for n in nek])
        # oracle: greedy on sorted feasible edges, written independently
        edges = sorted((np.linalg.norm(pel[i] - nek[j]), i, j) for i in range(2) for j in range(2)
                       if 0.15 <= np.linalg.norm(pel[i] - nek[j]) <= 0.8)
        expect, used_i, used_j = {}, set(), set()
        for _, i, j in edges:
            if i not in used_i and j not in used_j:
                expect[i] = j
                used_i.add(i)
                used_j.add(j)
        got = {int(np.argmin([np.linalg.norm(p.pelvis - q) for q in pel])):
               int(np.argmin([np.linalg.norm(p.neck - q) for q in nek])) for p in people}
        assert got == expect
        assert len({p.neck.tobytes() for p in people}) == len(people)


class TestTracking:
    def setup_method(self):
        self.cams = ring_rig(4)
        self.people = [(np.array([0.3, 0.1, 0.95]), np.array([0.32, 0.1, 1.45])),
                       (np.array([-0.5, -0.3, 0.9]), np.array([-0.48, -0.3, 1.42]))]

    def test_static(self):
        maps = render_anchor_maps(self.people, self.cams)
        prev = reconstruct_people(maps, self.cams)
        cur = track_anchors(prev, maps, self.cams)
        assert [p.id for p in cur] == [p.id for p in prev]
        for a, b in zip(prev, cur):
            assert np.linalg.norm(a.pelvis - b.pelvis) < 1e-4
            assert np.linalg.norm(a.neck - b.neck) < 1e-4

    def test_moved_five_cm(self):
        prev = reconstruct_people(render_anchor_maps(self.people, self.cams), self.cams)
        shift = np.array([0.05, 0.0, 0.0])
        moved = [(p + shift, n + shift) for p, n in self.people]
        cur = track_anchors(prev, render_anchor_maps(moved, self.cams), self.cams)
        assert len(cur) == 2
        for person in cur:
            gt = moved[int(np.argmin([np.linalg.norm(person.pelvis - p) for p, _ in moved]))]
            assert np.linalg.norm(person.pelvis - gt[0]) < 1e-2  # heatmap-limited precision
        ids_prev = {p.id: p.pelvis for p in prev}
        for person in cur:
            assert np.linalg.norm(ids_prev[person.id] + shift - person.pelvis) < 2e-2

    def test_person_exits(self):
        prev = reconstruct_people(render_anchor_maps(self.people, self.cams), self.cams)
        cur = track_anchors(prev, render_anchor_maps(self.people[:1], self.cams), self.cams)
        assert len(cur) == 1
        gone = [p.id for p in prev if np.linalg.norm(p.pelvis - self.people[1][0]) < 0.05]
        assert gone and gone[0] not in [p.id for p in cur]

    def test_idempotent(self):
        maps = render_anchor_maps(self.people, self.cams)
        prev = reconstruct_people(maps, self.cams)
        a = track_anchors(prev, maps, self.cams)
        b = track_anchors(a, maps, self.cams)
        for x, y in zip(a, b):
            assert x.id == y.id
            np.testing.assert_allclose(x.points, y.points, atol=1e-12)

    def test_estimator_tracks_ids(self):
        est = CenterEstimator(self.cams)
        maps = render_anchor_maps(self.people, self.cams)
        ids0 = [p.id for p in est(maps)]
        ids1 = [p.id for p in est(maps)]
        assert ids0 == ids1 and len(ids0) == 2
