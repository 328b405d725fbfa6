"""On-disk formats: rigs, skeleton sequences, heatmap stacks and datasets.

* Rig / config files are JSON objects carrying ``schema_version``.
* Skeleton sequences are JSON Lines: an optional ``{"meta": {...}}`` first
  line, then one object per frame
  ``{"frame": i, "people": [{"id", "status", "joints": [[x, y, z, c], ...]}]}``.
  Floats are written with ``repr`` precision, so they round-trip exactly.
* Heatmap files: ``b"VMHM"``, u32 version, u32 view count, then per view
  an int32 header ``(view id, J, rows, cols)`` and ``J*rows*cols``
  little-endian float32 values.
* Volume dumps: ``b"VMVL"``, int32 ``(J, W, H, D, kind, person id)``, then
  little-endian float32 values; ``kind`` indexes :data:`VOLUME_KINDS`.
* A dataset is a directory with ``manifest.json``, ``rig.json`` and per
  record ``NNNNNN.hm`` (heatmaps) plus ``NNNNNN.json`` (ground truth).
"""

from __future__ import annotations

import json
import struct
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .exceptions import SchemaError
from .geometry import Camera
from .skeleton import NUM_JOINTS, Skeleton3D

SCHEMA_VERSION = 1
HEATMAP_MAGIC = b"VMHM"
HEATMAP_VERSION = 1
VOLUME_MAGIC = b"VMVL"
VOLUME_KINDS = ("F", "Z", "Z_other", "H", "P")


def _dump_json(obj, path):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _load_json(path):
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as e:
        raise SchemaError(f"{path}: not valid JSON ({e})", field="<document>") from e


def _require(obj, key, where, kind=None):
    if not isinstance(obj, dict) or key not in obj:
        raise SchemaError(f"missing field {where}{key}", field=f"{where}{key}")
    v = obj[key]
    if kind is not None and not isinstance(v, kind):
        raise SchemaError(f"field {where}{key} has the wrong type", field=f"{where}{key}")
    return v


def _matrix(value, shape, field):
    try:
        arr = np.asarray(value, dtype=float)
    except (TypeError, ValueError) as e:
        raise SchemaError(f"field {field} is not numeric", field=field) from e
    if arr.shape != shape or not np.all(np.isfinite(arr)):
        raise SchemaError(f"field {field} must be a finite array of shape {shape}", field=field)
    return arr


def _check_version(doc, where=""):
    v = _require(doc, "schema_version", where, int)
    if v != SCHEMA_VERSION:
        raise SchemaError(f"unsupported schema_version {v}", field=f"{where}schema_version")


# -- rig ---------------------------------------------------------------------

def rig_to_dict(cams: Sequence[Camera]) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "cameras": [
            {"id": int(c.id), "K": c.K.tolist(), "R": c.R.tolist(), "t": c.t.tolist(),
             "image_size": list(c.image_size), "heatmap_scale": float(c.heatmap_scale)}
            for c in cams
        ],
    }


def rig_from_dict(doc) -> list:
    """Parse and validate a rig document; errors name the offending field."""
    if not isinstance(doc, dict):
        raise SchemaError("rig must be a JSON object", field="<document>")
    _check_version(doc)
    cams_doc = _require(doc, "cameras", "", list)
    if not cams_doc:
        raise SchemaError("rig has no cameras", field="cameras")
    cams, ids = [], set()
    for i, c in enumerate(cams_doc):
        where = f"cameras[{i}]."
        cid = _require(c, "id", where, int)
        if cid in ids:
            raise SchemaError(f"duplicate camera id {cid}", field=f"{where}id")
        ids.add(cid)
        K = _matrix(_require(c, "K", where), (3, 3), where + "K")
        if K[0, 0] <= 0 or K[1, 1] <= 0 or np.any(np.tril(K, -1) != 0):
            raise SchemaError("intrinsics must be upper triangular with positive focals", field=where + "K")
        R = _matrix(_require(c, "R", where), (3, 3), where + "R")
        if not np.allclose(R @ R.T, np.eye(3), atol=1e-6) or np.linalg.det(R) < 0:
            raise SchemaError("R must be a rotation matrix", field=where + "R")
        t = _matrix(_require(c, "t", where), (3,), where + "t")
        size = _matrix(_require(c, "image_size", where), (2,), where + "image_size")
        if np.any(size <= 0) or np.any(size != np.round(size)):
            raise SchemaError("image_size must be two positive integers", field=where + "image_size")
        scale = float(c.get("heatmap_scale", 4.0))
        if not scale > 0:
            raise SchemaError("heatmap_scale must be positive", field=where + "heatmap_scale")
        cams.append(Camera(K, R, t, (int(size[0]), int(size[1])), id=cid, heatmap_scale=scale))
    return cams


def save_rig(path, cams):
    _dump_json(rig_to_dict(cams), path)
    return path


def load_rig(path) -> list:
    return rig_from_dict(_load_json(path))


# -- skeleton sequences ------------------------------------------------------

def _person_record(s: Skeleton3D) -> dict:
    joints = [[float(x), float(y), float(z), float(c)] for (x, y, z), c in zip(s.joints, s.confidence)]
    return {"id": int(s.id), "status": s.status, "score": float(s.score), "joints": joints}


def write_skeleton_sequence(path, frames: Iterable, meta: dict | None = None):
    """``frames`` yields ``(frame_index, [Skeleton3D, ...])`` pairs, or
    triples whose third item is a frame-level status string."""
    lines = []
    if meta is not None:
        lines.append(json.dumps({"meta": meta}, sort_keys=True))
    for item in frames:
        index, people = item[0], item[1]
        rec = {"frame": int(index), "people": [_person_record(p) for p in people]}
        if len(item) > 2 and item[2] != "ok":
            rec["status"] = str(item[2])
        lines.append(json.dumps(rec, sort_keys=True))
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""))
    return path


def read_skeleton_sequence(path, with_meta=False):
    """Returns ``{frame_index: [Skeleton3D, ...]}`` (and the meta dict)."""
    frames, meta = {}, {}
    for n, line in enumerate(Path(path).read_text().splitlines()):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as e:
            raise SchemaError(f"{path}:{n + 1}: invalid JSON", field=f"line {n + 1}") from e
        if n == 0 and "meta" in rec:
            meta = rec["meta"]
            continue
        where = f"line {n + 1}: "
        index = _require(rec, "frame", where, int)
        if index in frames:
            raise SchemaError(f"duplicate frame {index}", field=f"{where}frame")
        people = []
        for k, p in enumerate(_require(rec, "people", where, list)):
            pw = f"{where}people[{k}]."
            joints = _matrix(_require(p, "joints", pw), (NUM_JOINTS, 4), pw + "joints")
            people.append(Skeleton3D(joints[:, :3], int(_require(p, "id", pw, int)), joints[:, 3],
                                     status=str(p.get("status", "ok")), score=p.get("score")))
        frames[index] = people
    return (frames, meta) if with_meta else frames


# -- heatmaps ----------------------------------------------------------------

def heatmaps_to_bytes(heatmaps, view_ids) -> bytes:
    buf = [HEATMAP_MAGIC, struct.pack("<2I", HEATMAP_VERSION, len(heatmaps))]
    for vid, maps in zip(view_ids, heatmaps):
        maps = np.asarray(maps, dtype="<f4")
        J, rows, cols = maps.shape
        buf.append(struct.pack("<4i", int(vid), J, rows, cols))
        buf.append(maps.tobytes(order="C"))
    return b"".join(buf)


def heatmaps_from_bytes(data: bytes):
    """Returns ``(view_ids, [ (J, rows, cols) float32, ... ])``."""
    if data[:4] != HEATMAP_MAGIC:
        raise SchemaError("not a heatmap file", field="magic")
    version, n = struct.unpack_from("<2I", data, 4)
    if version != HEATMAP_VERSION:
        raise SchemaError(f"unsupported heatmap version {version}", field="version")
    pos, ids, maps = 12, [], []
    for _ in range(n):
        if pos + 16 > len(data):
            raise SchemaError("truncated heatmap file", field="header")
        vid, J, rows, cols = struct.unpack_from("<4i", data, pos)
        pos += 16
        count = J * rows * cols
        if min(J, rows, cols) < 0 or pos + 4 * count > len(data):
            raise SchemaError("truncated heatmap file", field="data")
        maps.append(np.frombuffer(data, dtype="<f4", count=count, offset=pos).reshape(J, rows, cols)
                    .astype(np.float32))
        ids.append(vid)
        pos += 4 * count
    return ids, maps


def write_heatmaps(path, heatmaps, view_ids):
    Path(path).write_bytes(heatmaps_to_bytes(heatmaps, view_ids))
    return path


def read_heatmaps(path):
    return heatmaps_from_bytes(Path(path).read_bytes())


def order_heatmaps(view_ids, maps, cams):
    """Reorder per-view maps to match ``cams``; missing views become zeros."""
    by_id = dict(zip(view_ids, maps))
    out = []
    J = maps[0].shape[0] if maps else NUM_JOINTS
    for c in cams:
        out.append(by_id.get(c.id, np.zeros((J,) + c.heatmap_shape, dtype=np.float32)))
    return out


# -- volume dumps ------------------------------------------------------------

def write_volume(path, volume, kind, person_id=0):
    vol = np.asarray(volume, dtype="<f4")
    if vol.ndim != 4:
        raise ValueError("volume must be (C, W, H, D)")
    header = struct.pack("<6i", *vol.shape, VOLUME_KINDS.index(kind), int(person_id))
    Path(path).write_bytes(VOLUME_MAGIC + header + vol.tobytes(order="C"))
    return path


def read_volume(path):
    """Returns ``(volume, kind, person_id)``."""
    data = Path(path).read_bytes()
    if data[:4] != VOLUME_MAGIC or len(data) < 28:
        raise SchemaError("not a volume dump", field="magic")
    C, W, H, D, kind, pid = struct.unpack_from("<6i", data, 4)
    if not 0 <= kind < len(VOLUME_KINDS) or len(data) != 28 + 4 * C * W * H * D:
        raise SchemaError("corrupt volume dump", field="header")
    vol = np.frombuffer(data, dtype="<f4", offset=28).reshape(C, W, H, D).astype(np.float32)
    return vol, VOLUME_KINDS[kind], pid


# -- datasets ----------------------------------------------------------------

def record_name(index: int) -> str:
    return f"{index:06d}"


def write_record(root, index, scene):
    """Heatmaps plus ground truth (skeletons, anchors, dropped views) of one scene."""
    root = Path(root)
    name = record_name(index)
    write_heatmaps(root / f"{name}.hm", scene.heatmaps, [c.id for c in scene.cams])
    gt = {"index": int(index), "skeletons": scene.skeletons.tolist(), "anchors": scene.anchors.tolist(),
          "dropped_views": list(scene.dropped_views)}
    Path(root / f"{name}.json").write_text(json.dumps(gt, sort_keys=True) + "\n")


def read_record(root, index, cams):
    """Returns a :class:`~volmocap.synth.SceneSample` rebuilt from disk."""
    from .synth import SceneSample

    root = Path(root)
    name = record_name(index)
    ids, maps = read_heatmaps(root / f"{name}.hm")
    gt = _load_json(root / f"{name}.json")
    skel = np.asarray(_require(gt, "skeletons", f"{name}.json: "), dtype=float).reshape(-1, NUM_JOINTS, 3)
    return SceneSample(list(cams), skel, order_heatmaps(ids, maps, cams), tuple(gt.get("dropped_views", ())))


def write_manifest(root, manifest: dict):
    _dump_json({"schema_version": SCHEMA_VERSION, **manifest}, Path(root) / "manifest.json")


def read_manifest(root) -> dict:
    path = Path(root) / "manifest.json"
    if not path.exists():
        raise FileNotFoundError(f"no dataset manifest at {path}")
    doc = _load_json(path)
    _check_version(doc)
    for key, kind in (("count", int), ("n_people", int), ("seed", int), ("rig", str)):
        _require(doc, key, "", kind)
    return doc


def load_dataset(root):
    """Returns ``(manifest, cams, [SceneSample, ...])`` in record order."""
    root = Path(root)
    manifest = read_manifest(root)
    cams = load_rig(root / manifest["rig"])
    return manifest, cams, [read_record(root, i, cams) for i in range(manifest["count"])]


# -- bundled motion corpus ---------------------------------------------------

def corpus_files() -> list:
    base = resources.files("volmocap") / "data" / "corpus"
    return sorted((p for p in base.iterdir() if p.name.endswith(".jsonl")), key=lambda p: p.name)


def read_clip(path):
    from .synth import MoCapClip

    frames, meta = read_skeleton_sequence(path, with_meta=True)
    if not frames:
        raise SchemaError(f"{path}: clip has no frames", field="frame")
    joints = np.stack([frames[k][0].joints for k in sorted(frames)])
    return MoCapClip(joints, str(meta.get("subject", "")), str(meta.get("motion", "")),
                     float(meta.get("fps", 30.0)))


def write_clip(path, clip):
    frames = ((t, [Skeleton3D(f)]) for t, f in enumerate(clip.frames))
    meta = {"subject": clip.subject, "motion": clip.motion, "fps": clip.fps}
    return write_skeleton_sequence(path, frames, meta)


def load_corpus(paths=None) -> list:
    """MoCap clips from skeleton-sequence files (default: the bundled corpus)."""
    paths = corpus_files() if paths is None else [Path(p) for p in paths]
    return [read_clip(p) for p in paths]
