"""Command line entry point: ``volmocap {synth,train,infer,eval,export-plots}``.

Every subcommand accepts ``--config`` (a PipelineConfig JSON file); flags
given on the command line override values from the file. Verbosity comes
from the ``VOLMOCAP_LOG`` environment variable (e.g. ``INFO``).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

from . import io
from .config import PipelineConfig
from .evaluation import evaluation_report, match_poses
from .exceptions import DivergedLoss, FrameMismatch, VolMocapError
from .geometry import ring_rig
from .pipeline import SequenceInference
from .skeleton import Skeleton3D
from .synth import (AugmentConfig, capture_bounds, filter_poses, sample_rng, samples_from_scenes,
                    synthesize_scene, synthesize_sequence)

log = logging.getLogger("volmocap")

AUGMENT_PRESETS = {"default": AugmentConfig, "mild": AugmentConfig.mild, "none": AugmentConfig.none}


def _fail(msg, code=2):
    print(f"error: {msg}", file=sys.stderr)
    return code


def _dump(obj, path):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _config(args) -> PipelineConfig:
    cfg = PipelineConfig.load(args.config) if getattr(args, "config", None) else PipelineConfig()
    for name in ("rig", "dataset", "checkpoint", "output", "seed"):
        v = getattr(args, name, None)
        if v is not None:
            setattr(cfg, name, v)
    if getattr(args, "nondeterministic", False):
        cfg.deterministic = False
    return cfg


# -- synth -------------------------------------------------------------------

def cmd_synth(args) -> int:
    cfg = _config(args)
    if cfg.output is None:
        return _fail("--output is required")
    augment = cfg.augment
    if args.augment is not None:
        augment = AUGMENT_PRESETS[args.augment]()
    if args.attract_range is not None:
        augment = replace(augment, attract_range=tuple(args.attract_range))
    if args.attract_prob is not None:
        augment = replace(augment, attract_prob=args.attract_prob)
    cams = io.load_rig(cfg.rig) if cfg.rig else ring_rig(args.views)
    clips = io.load_corpus(args.corpus) if args.corpus else io.load_corpus()
    if args.count < 0 or args.people < 1:
        return _fail("count must be >= 0 and people >= 1")
    out = Path(cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    io.save_rig(out / "rig.json", cams)
    bounds = capture_bounds(cams)
    if args.sequence:
        scenes = synthesize_sequence(clips, cams, args.people, args.count, augment,
                                     sample_rng(cfg.seed, 0), bounds) if args.count else []
    else:
        pool = filter_poses(clips)
        scenes = [synthesize_scene(pool, cams, args.people, augment, sample_rng(cfg.seed, i), bounds)
                  for i in range(args.count)]
    for i, scene in enumerate(scenes):
        io.write_record(out, i, scene)
    gt = ((i, [Skeleton3D(p, k) for k, p in enumerate(s.skeletons)]) for i, s in enumerate(scenes))
    io.write_skeleton_sequence(out / "gt.jsonl", gt)
    io.write_manifest(out, dict(rig="rig.json", n_people=args.people, augment=augment.to_dict(),
                                seed=cfg.seed, count=len(scenes), sequence=bool(args.sequence)))
    print(f"wrote {len(scenes)} records to {out} (people={args.people}, seed={cfg.seed})")
    return 0


# -- train -------------------------------------------------------------------

def cmd_train(args) -> int:
    from .posenet.estimator import VolumetricPoseEstimator

    cfg = _config(args)
    if cfg.dataset is None or cfg.checkpoint is None:
        return _fail("--dataset and --checkpoint are required")
    train = cfg.train if args.seed is None else replace(cfg.train, seed=args.seed)
    for flag, name in (("epochs", "epochs"), ("learning_rate", "learning_rate"),
                       ("batch_size", "batch_size"), ("lr_decay", "lr_decay")):
        v = getattr(args, flag)
        if v is not None:
            train = replace(train, **{name: v})
    model = cfg.model if args.widths is None else replace(cfg.model, widths=tuple(args.widths))
    if args.no_conditional:
        model = replace(model, conditional=False)
    manifest, cams, scenes = io.load_dataset(cfg.dataset)
    augment = AugmentConfig(**{k: v for k, v in manifest.get("augment", {}).items()})
    samples = samples_from_scenes(scenes, augment, cfg.seed, anchor_sigma=model.anchor_sigma,
                                  sigma_voxels=model.sigma_voxels)
    n_val = int(round(args.val_fraction * len(samples))) if len(samples) > 1 else 0
    train_set, val_set = samples[: len(samples) - n_val], samples[len(samples) - n_val:]
    if not train_set and train.epochs > 0:
        return _fail("dataset has no training samples")
    est = VolumetricPoseEstimator(
        widths=model.widths, conditional=model.conditional, heatmap_supervision=model.heatmap_supervision,
        learning_rate=train.learning_rate, lr_decay=train.lr_decay, epochs=train.epochs,
        batch_size=train.batch_size, loss_weight=train.loss_weight, focal_alpha=train.focal_alpha,
        focal_beta=train.focal_beta, anchor_sigma=model.anchor_sigma, sigma_voxels=model.sigma_voxels,
        seed=train.seed, deterministic=cfg.deterministic)
    log_path = Path(args.log) if args.log else Path(cfg.checkpoint).with_suffix(".log")
    lines = []

    def on_epoch(rec):
        lines.append(f"{rec['epoch']}\t{rec['loss']:.6f}\t{rec.get('val_mpjpe_mm', rec['train_mpjpe_mm']):.3f}")
        log.info("epoch %d loss %.5f", rec["epoch"], rec["loss"])

    try:
        est.fit(train_set, X_val=val_set or None, callback=on_epoch)
    except DivergedLoss as e:
        log_path.write_text("".join(line + "\n" for line in lines))
        return _fail(f"{e} (last finite epoch: {e.last_finite_epoch})", code=3)
    est.save(cfg.checkpoint)
    log_path.write_text("".join(line + "\n" for line in lines))
    print(f"wrote checkpoint {cfg.checkpoint} after {train.epochs} epochs")
    return 0


# -- infer -------------------------------------------------------------------

def cmd_infer(args) -> int:
    from .posenet.estimator import VolumetricPoseEstimator

    cfg = _config(args)
    if cfg.checkpoint is None or not Path(cfg.checkpoint).is_file():
        return _fail(f"checkpoint not found: {cfg.checkpoint}")
    if cfg.dataset is None or cfg.output is None:
        return _fail("--dataset and --output are required")
    inf = cfg.inference
    if args.no_tracking:
        inf = replace(inf, tracking=False)
    if args.no_temporal_filter:
        inf = replace(inf, temporal_filter=False)
    for flag in ("radius", "gate_px", "score_threshold", "keep_ratio"):
        v = getattr(args, flag)
        if v is not None:
            inf = replace(inf, **{flag: v})
    est = VolumetricPoseEstimator.load(cfg.checkpoint)
    if cfg.deterministic:
        est._setup_determinism()
    root = Path(cfg.dataset)
    manifest = io.read_manifest(root)
    cams = io.load_rig(Path(cfg.rig) if cfg.rig else root / manifest["rig"])

    def frames():
        for i in range(manifest["count"]):
            ids, maps = io.read_heatmaps(root / f"{io.record_name(i)}.hm")
            yield i, io.order_heatmaps(ids, maps, cams)

    results = SequenceInference(est, cams, inf).run(frames())
    io.write_skeleton_sequence(cfg.output, results)
    n_bad = sum(1 for _, people, status in results for p in people if p.status != "ok") + \
        sum(1 for _, _, status in results if status != "ok")
    print(f"wrote {len(results)} frames to {cfg.output} ({n_bad} failures)")
    return 0


# -- eval / plots ------------------------------------------------------------

def evaluate_files(estimates_path, gt_path, thresholds):
    est = io.read_skeleton_sequence(estimates_path)
    gt = io.read_skeleton_sequence(gt_path)
    if set(est) != set(gt):
        missing = sorted(set(gt) ^ set(est))
        raise FrameMismatch(f"frame index sets differ (e.g. {missing[:5]})")
    results = [match_poses([p for p in est[k] if p.status == "ok"], gt[k]) for k in sorted(gt)]
    return evaluation_report(results, thresholds)


def cmd_eval(args) -> int:
    try:
        report = evaluate_files(args.estimates, args.gt, tuple(args.thresholds))
    except FrameMismatch as e:
        return _fail(str(e))
    out = Path(args.output)
    out.parent.mkdir(parents=True, exist_ok=True)
    _dump(report, out)
    if args.plots:
        export_plots(report, args.plots)
    mpjpe = report["mpjpe_mm"]
    pck = report["pck"].get("50.0")
    print(f"MPJPE {'n/a' if mpjpe is None else f'{mpjpe:.2f}'} mm" +
          ("" if pck is None else f", PCK@50 {pck:.2f}%"))
    return 0


def export_plots(report: dict, out_dir) -> list:
    """PCK-vs-threshold curves (overall and per joint group) as PNG files."""
    import matplotlib

    matplotlib.use("Agg")
    from matplotlib import pyplot as plt

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    sweep = report["sweep"]
    t = sweep["thresholds_mm"]
    written = []
    for name, keys in (("pck_overall.png", ["all"]),
                       ("pck_per_group.png", [k for k in sweep if k not in ("thresholds_mm", "all")])):
        fig, ax = plt.subplots(figsize=(5, 4), dpi=100)
        for k in keys:
            ax.plot(t, sweep[k], marker="o", label=k)
        ax.set_xlabel("threshold (mm)")
        ax.set_ylabel("3DPCK (%)")
        ax.set_ylim(0, 100)
        ax.grid(alpha=0.3)
        ax.legend(loc="lower right", fontsize=8)
        fig.tight_layout()
        fig.savefig(out_dir / name, metadata={"Software": None})
        plt.close(fig)
        written.append(out_dir / name)
    return written


def cmd_export_plots(args) -> int:
    report = json.loads(Path(args.report).read_text())
    for path in export_plots(report, args.output):
        print(path)
    return 0


# -- argument parsing --------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="volmocap", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="PipelineConfig JSON file")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--nondeterministic", action="store_true", help="allow multithreaded kernels")

    s = sub.add_parser("synth", help="synthesize a dataset or a sequence")
    common(s)
    s.add_argument("--rig", help="rig JSON (default: ring of --views cameras)")
    s.add_argument("--views", type=int, default=4)
    s.add_argument("--output", "-o", help="dataset directory")
    s.add_argument("--count", type=int, default=10, help="scenes, or frames with --sequence")
    s.add_argument("--people", type=int, default=1)
    s.add_argument("--sequence", action="store_true", help="consecutive frames of moving people")
    s.add_argument("--augment", choices=sorted(AUGMENT_PRESETS))
    s.add_argument("--attract-range", type=float, nargs=2, metavar=("LO", "HI"))
    s.add_argument("--attract-prob", type=float)
    s.add_argument("--corpus", nargs="+", help="skeleton-sequence clip files (default: bundled)")
    s.set_defaults(func=cmd_synth)

    t = sub.add_parser("train", help="train the pose network")
    common(t)
    t.add_argument("--dataset", "-d")
    t.add_argument("--checkpoint", "-o")
    t.add_argument("--epochs", type=int)
    t.add_argument("--learning-rate", type=float)
    t.add_argument("--lr-decay", type=float)
    t.add_argument("--batch-size", type=int)
    t.add_argument("--widths", type=int, nargs=3)
    t.add_argument("--no-conditional", action="store_true", help="drop anchor inputs (ablation)")
    t.add_argument("--val-fraction", type=float, default=0.1)
    t.add_argument("--log", help="epoch log path (default: checkpoint with .log suffix)")
    t.set_defaults(func=cmd_train)

    i = sub.add_parser("infer", help="run the full pipeline over a heatmap sequence")
    common(i)
    i.add_argument("--checkpoint", "-c")
    i.add_argument("--dataset", "-d", help="directory with manifest and heatmap records")
    i.add_argument("--rig", help="override the dataset's rig")
    i.add_argument("--output", "-o", help="skeleton sequence (.jsonl)")
    i.add_argument("--no-tracking", action="store_true")
    i.add_argument("--no-temporal-filter", action="store_true")
    i.add_argument("--radius", type=float)
    i.add_argument("--gate-px", type=float)
    i.add_argument("--score-threshold", type=float)
    i.add_argument("--keep-ratio", type=float, help="let the temporal filter release lost joints (0 = pure mask)")
    i.set_defaults(func=cmd_infer)

    e = sub.add_parser("eval", help="score estimates against ground truth")
    e.add_argument("--estimates", required=True)
    e.add_argument("--gt", required=True)
    e.add_argument("--thresholds", type=float, nargs="+", default=[25.0, 50.0, 100.0])
    e.add_argument("--output", "-o", default="report.json")
    e.add_argument("--plots", help="also write PCK curves to this directory")
    e.set_defaults(func=cmd_eval)

    x = sub.add_parser("export-plots", help="render PCK curves from a report")
    x.add_argument("--report", required=True)
    x.add_argument("--output", "-o", default="plots")
    x.set_defaults(func=cmd_export_plots)
    return p


def main(argv=None) -> int:
    level = os.environ.get("VOLMOCAP_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(levelname)s %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (VolMocapError, FileNotFoundError) as e:
        return _fail(str(e))


if __name__ == "__main__":
    sys.exit(main())
