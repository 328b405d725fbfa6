"""On-disk formats: exact round-trips and field-naming schema errors."""

from __future__ import annotations

import json

import numpy as np
import pytest

from volmocap import io
from volmocap.config import PipelineConfig
from volmocap.exceptions import SchemaError
from volmocap.geometry import ring_rig
from volmocap.skeleton import Skeleton3D
from volmocap.synth import AugmentConfig, sample_rng, synthesize_scene

from conftest import random_camera


def _skeletons(rng, n):
    return [Skeleton3D(rng.normal(size=(15, 3)), k, rng.random(15), score=float(rng.random())) for k in range(n)]


class TestRig:
    def test_roundtrip_exact(self, tmp_path, rng):
        cams = [random_camera(rng, cam_id=i) for i in range(3)]
        back = io.load_rig(io.save_rig(tmp_path / "rig.json", cams))
        for a, b in zip(cams, back):
            for name in ("K", "R", "t"):
                np.testing.assert_array_equal(getattr(a, name), getattr(b, name))
            assert (a.id, a.image_size, a.heatmap_scale) == (b.id, b.image_size, b.heatmap_scale)

    @pytest.mark.parametrize("mutate, field", [
        (lambda d: d["cameras"][1].pop("K"), "cameras[1].K"),
        (lambda d: d["cameras"][0].__setitem__("R", [[1, 0, 0], [0, 1, 0]]), "cameras[0].R"),
        (lambda d: d["cameras"][0].__setitem__("R", [[2, 0, 0], [0, 1, 0], [0, 0, 1]]), "cameras[0].R"),
        (lambda d: d["cameras"][2].__setitem__("t", [0, "a", 0]), "cameras[2].t"),
        (lambda d: d["cameras"][0].__setitem__("image_size", [0, 10]), "cameras[0].image_size"),
        (lambda d: d["cameras"][1].__setitem__("id", 0), "cameras[1].id"),
        (lambda d: d["cameras"][0]["K"].__setitem__(0, [-5, 0, 1]), "cameras[0].K"),
        (lambda d: d.__setitem__("schema_version", 9), "schema_version"),
        (lambda d: d.pop("cameras"), "cameras"),
        (lambda d: d.__setitem__("cameras", []), "cameras"),
    ])
    def test_schema_errors_name_field(self, mutate, field):
        doc = io.rig_to_dict(ring_rig(3))
        mutate(doc)
        with pytest.raises(SchemaError) as e:
            io.rig_from_dict(doc)
        assert e.value.field == field
        assert field in str(e.value)

    def test_invalid_json(self, tmp_path):
        (tmp_path / "r.json").write_text("{not json")
        with pytest.raises(SchemaError):
            io.load_rig(tmp_path / "r.json")


class TestSkeletonSequence:
    def test_roundtrip_exact(self, tmp_path, rng):
        frames = [(i, _skeletons(rng, i % 3)) for i in range(5)]
        frames[2] = (2, frames[2][1], "center_failure: no views")
        path = io.write_skeleton_sequence(tmp_path / "s.jsonl", frames, meta={"source": "x"})
        back, meta = io.read_skeleton_sequence(path, with_meta=True)
        assert meta == {"source": "x"} and sorted(back) == list(range(5))
        for item in frames:
            i, people = item[0], item[1]
            assert len(back[i]) == len(people)
            for a, b in zip(people, back[i]):
                np.testing.assert_array_equal(a.joints, b.joints)
                np.testing.assert_array_equal(a.confidence, b.confidence)
                assert (a.id, a.status, a.score) == (b.id, b.status, b.score)
        assert json.loads(path.read_text().splitlines()[3])["status"].startswith("center_failure")

    def test_duplicate_frame_rejected(self, tmp_path, rng):
        p = tmp_path / "s.jsonl"
        io.write_skeleton_sequence(p, [(0, _skeletons(rng, 1)), (0, [])])
        with pytest.raises(SchemaError):
            io.read_skeleton_sequence(p)

    def test_bad_joint_shape_names_field(self, tmp_path):
        p = tmp_path / "s.jsonl"
        p.write_text(json.dumps({"frame": 0, "people": [{"id": 0, "joints": [[0, 0, 0, 1]] * 14}]}) + "\n")
        with pytest.raises(SchemaError) as e:
            io.read_skeleton_sequence(p)
        assert e.value.field == "line 1: people[0].joints"


class TestBinaryDumps:
    def test_heatmaps_roundtrip(self, tmp_path, rng):
        maps = [rng.random((15, 8, 6)).astype(np.float32), rng.random((15, 4, 4)).astype(np.float32)]
        ids, back = io.read_heatmaps(io.write_heatmaps(tmp_path / "a.hm", maps, [7, 3]))
        assert ids == [7, 3]
        for a, b in zip(maps, back):
            np.testing.assert_array_equal(a, b)

    def test_heatmaps_truncated(self, rng):
        data = io.heatmaps_to_bytes([rng.random((2, 3, 3))], [0])
        with pytest.raises(SchemaError):
            io.heatmaps_from_bytes(data[:-4])
        with pytest.raises(SchemaError):
            io.heatmaps_from_bytes(b"XXXX" + data[4:])

    def test_order_heatmaps_fills_missing(self):
        cams = ring_rig(3)
        maps = [np.ones((15,) + cams[0].heatmap_shape, np.float32)]
        out = io.order_heatmaps([2], maps, cams)
        assert [float(m.sum()) > 0 for m in out] == [False, False, True]

    @pytest.mark.parametrize("kind", io.VOLUME_KINDS)
    def test_volume_roundtrip(self, tmp_path, rng, kind):
        v = rng.random((2, 4, 5, 6)).astype(np.float32)
        back, k, pid = io.read_volume(io.write_volume(tmp_path / "v.vol", v, kind, 3))
        np.testing.assert_array_equal(back, v)
        assert (k, pid) == (kind, 3)

    def test_volume_corrupt(self, tmp_path, rng):
        p = io.write_volume(tmp_path / "v.vol", rng.random((1, 2, 2, 2)), "F")
        p.write_bytes(p.read_bytes()[:-1])
        with pytest.raises(SchemaError):
            io.read_volume(p)


class TestDataset:
    def test_record_roundtrip(self, tmp_path, pool, rig4):
        scene = synthesize_scene(pool, rig4, 2, AugmentConfig(), sample_rng(0, 0))
        io.save_rig(tmp_path / "rig.json", rig4)
        io.write_record(tmp_path, 0, scene)
        io.write_manifest(tmp_path, dict(count=1, n_people=2, seed=0, rig="rig.json"))
        manifest, cams, scenes = io.load_dataset(tmp_path)
        assert manifest["count"] == 1
        back = scenes[0]
        np.testing.assert_array_equal(back.skeletons, scene.skeletons)
        assert back.dropped_views == tuple(scene.dropped_views)
        for a, b in zip(scene.heatmaps, back.heatmaps):
            np.testing.assert_array_equal(np.asarray(a, np.float32), b)

    def test_manifest_missing_field(self, tmp_path):
        io.write_manifest(tmp_path, dict(count=1, n_people=2, rig="rig.json"))
        with pytest.raises(SchemaError) as e:
            io.read_manifest(tmp_path)
        assert e.value.field == "seed"

    def test_manifest_absent(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            io.read_manifest(tmp_path)


class TestCorpus:
    def test_bundled_corpus(self, corpus):
        assert len(corpus) >= 10
        assert all(c.frames.shape[1:] == (15, 3) and c.motion for c in corpus)

    def test_clip_roundtrip(self, tmp_path, corpus):
        c = corpus[0]
        back = io.read_clip(io.write_clip(tmp_path / "c.jsonl", c))
        np.testing.assert_array_equal(back.frames, c.frames)
        assert (back.subject, back.motion, back.fps) == (c.subject, c.motion, c.fps)


class TestConfig:
    def test_roundtrip(self, tmp_path):
        cfg = PipelineConfig(rig="r.json", seed=5)
        cfg.train.epochs = 3
        cfg.model.widths = (8, 16, 32)
        cfg.save(tmp_path / "c.json")
        back = PipelineConfig.load(tmp_path / "c.json")
        assert back.to_dict() == cfg.to_dict()

    @pytest.mark.parametrize("doc, field", [
        ({"bogus": 1}, "bogus"),
        ({"train": {"epochz": 3}}, "train.epochz"),
        ({"train": {"batch_size": 0}}, "train"),
        ({"inference": {"radius": -1.0}}, "inference"),
        ({"schema_version": 2}, "schema_version"),
    ])
    def test_schema_errors(self, doc, field):
        with pytest.raises(SchemaError) as e:
            PipelineConfig.from_dict(doc)
        assert e.value.field == field
