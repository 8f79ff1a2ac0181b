"""Command-line front end.

Commands: fuse, triangulate, train, score-surface, plan, heatmap,
render, show-config. Every command is a pure function of its input
files, the config and the seed; rerunning with identical inputs yields
byte-identical outputs. Exit codes: 0 success, 2 input or config error,
3 no result (no surface / no grasp), 4 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import fileio, fusion, synth
from .cloud import SurfaceCloud, read_ply
from .colors import score_colors
from .config import (gripper_model, load_config, out_dir, plan_config,
                     require_path, score_config)
from .errors import (DegenerateGeometryError, EmptySurfaceError,
                     GraspPlanningError, InvalidInputError, NoGraspFoundError)
from .grasp_gen import plan as run_plan
from .skeleton import Skeleton, SkeletonSpec, triangulate_keypoints
from .task_model import ExemplarAnnotation, TaskModel, score_surface, train

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NO_RESULT = 3
EXIT_NUMERICAL = 4


def _fail(stage: str, message: str, code: int) -> int:
    print(f"error[{stage}]: {message}", file=sys.stderr)
    return code


def _load_cloud(cfg) -> SurfaceCloud:
    cloud, _ = read_ply(require_path(cfg, "cloud"))
    return cloud


def _load_model_and_skeleton(cfg, baseline: bool):
    if baseline:
        return None, None
    model = TaskModel.load(require_path(cfg, "task_model"))
    skeleton = Skeleton.load(require_path(cfg, "skeleton_instance"))
    return model, skeleton


def cmd_fuse(cfg) -> int:
    frames = fileio.load_frames(require_path(cfg, "frames_dir"))
    fcfg = cfg["fusion"]
    truncation = fcfg["truncation_factor"] * fcfg["voxel_size"]
    margin = fcfg["bounds_margin"]
    lo, hi = fusion.bounds_from_frames(
        frames, margin=3.0 * truncation if margin is None else margin)
    volume = fusion.FusedVolume.from_bounds(lo, hi, fcfg["voxel_size"], truncation)
    for i, frame in enumerate(frames):
        stats = fusion.integrate(volume, frame, theta_max=fcfg["theta_max"])
        print(f"frame {i}: {stats.pixels_used} px used, "
              f"{stats.rays_rejected_grazing} grazing, "
              f"{stats.voxels_updated} voxel updates")
    cloud = fusion.extract_surface(volume, fcfg["target_point_count"],
                                   seed=cfg["seed"],
                                   neighborhood_k=fcfg["neighborhood_k"])
    out = out_dir(cfg)
    np.savez_compressed(out / "volume.npz", origin=volume.origin,
                        voxel_size=volume.voxel_size, dims=volume.dims,
                        truncation=volume.truncation, mean=volume.mean,
                        var=volume.var, observed=volume.observed,
                        seed=cfg["seed"])
    cloud.save_ply(out / "cloud.ply", comments=[f"seed {cfg['seed']}"])
    print(f"wrote {out / 'volume.npz'} and {out / 'cloud.ply'} "
          f"({len(cloud)} points)")
    return EXIT_OK


def cmd_triangulate(cfg) -> int:
    spec = SkeletonSpec.load(require_path(cfg, "skeleton_spec"))
    observations = fileio.load_observations(require_path(cfg, "observations"))
    if not observations:
        raise InvalidInputError("observation file contains no records")
    positions, residuals, missing = triangulate_keypoints(
        observations, len(spec.keypoints), min_views=cfg["triangulate"]["min_views"])
    cloud_positions = None
    if cfg["paths"].get("cloud"):
        cloud_positions = _load_cloud(cfg).positions
    skeleton = Skeleton.build(spec, positions, cloud_positions=cloud_positions,
                              residuals=residuals)
    out = out_dir(cfg)
    doc = skeleton.to_dict()
    doc["metadata"] = {"seed": cfg["seed"]}
    fileio.dump_json(doc, out / "skeleton.json")
    tag = f"; missing: {skeleton.missing}" if missing else ""
    print(f"wrote {out / 'skeleton.json'} "
          f"({len(spec.keypoints) - len(missing)}/{len(spec.keypoints)} keypoints{tag})")
    return EXIT_OK


def cmd_train(cfg) -> int:
    doc = fileio.load_json(require_path(cfg, "annotation"))
    cloud, _ = read_ply(doc["cloud"])
    skeleton = Skeleton.load(doc["skeleton"])
    idx = np.asarray(doc["grasp_point_indices"], dtype=int)
    if idx.size and (idx.min() < 0 or idx.max() >= len(cloud)):
        raise InvalidInputError("grasp point indices out of cloud range")
    annotation = ExemplarAnnotation(
        object_class=doc["class"], task=doc["task"], skeleton=skeleton,
        grasp_points=cloud.positions[idx])
    truncation = cfg["fusion"]["truncation_factor"] * cfg["fusion"]["voxel_size"]
    annotation.validate(cloud=cloud, truncation=truncation)
    model = train(annotation, max_components=cfg["train"]["max_components"],
                  seed=cfg["seed"])
    out = out_dir(cfg)
    model_doc = model.to_dict()
    model_doc["metadata"] = {"seed": cfg["seed"]}
    fileio.dump_json(model_doc, out / "task_model.json")
    flags = [name for name, g in model.gmms.items() if g.low_data]
    tag = f"; low-data keypoints: {flags}" if flags else ""
    print(f"wrote {out / 'task_model.json'} ({len(model.gmms)} keypoint mixtures{tag})")
    return EXIT_OK


def _surface_scores(cfg, baseline: bool):
    cloud = _load_cloud(cfg)
    if baseline:
        return cloud, np.ones(len(cloud))
    model, skeleton = _load_model_and_skeleton(cfg, baseline=False)
    return cloud, score_surface(model, skeleton, cloud)


def cmd_score_surface(cfg, baseline: bool) -> int:
    cloud, scores = _surface_scores(cfg, baseline)
    out = out_dir(cfg)
    cloud.save_ply(out / "scored_cloud.ply", scores=scores,
                   comments=[f"seed {cfg['seed']}"])
    print(f"wrote {out / 'scored_cloud.ply'} "
          f"(score mean {scores.mean():.4f}, max {scores.max():.4f})")
    return EXIT_OK


def cmd_heatmap(cfg, baseline: bool) -> int:
    cloud, scores = _surface_scores(cfg, baseline)
    out = out_dir(cfg)
    cloud.save_ply(out / "heatmap.ply", scores=scores,
                   colors=score_colors(scores), comments=[f"seed {cfg['seed']}"])
    print(f"wrote {out / 'heatmap.ply'}")
    return EXIT_OK


def cmd_plan(cfg, baseline: bool) -> int:
    cloud = _load_cloud(cfg)
    model, skeleton = _load_model_and_skeleton(cfg, baseline)
    result = run_plan(cloud, skeleton=skeleton, task_model=model,
                      plan_cfg=plan_config(cfg), score_cfg=score_config(cfg),
                      gripper=gripper_model(cfg))
    out = out_dir(cfg)
    fileio.dump_json(result.to_dict(), out / "grasps.json")
    contacts = result.best.contacts
    overlay = SurfaceCloud(
        positions=np.array([c.position for c in contacts]),
        normals=np.array([c.normal for c in contacts]),
        c=np.array([c.c for c in contacts]),
        u=np.array([c.u for c in contacts]))
    overlay.save_ply(out / "contacts.ply", comments=[f"seed {cfg['seed']}"])
    print(f"wrote {out / 'grasps.json'} ({len(result.candidates)} candidates, "
          f"best total {result.best.score.total:.4f})")
    return EXIT_OK


def cmd_render(cfg) -> int:
    scene = synth.SceneSpec.from_dict(fileio.load_json(require_path(cfg, "scene")))
    if scene.seed != cfg["seed"] and cfg["seed"] != 0:
        scene.seed = cfg["seed"]
    out = out_dir(cfg)
    frames_dir = out / "frames"
    for i in range(scene.camera_count):
        frame = synth.render_depth(scene, i)
        fileio.save_frame(frame, frames_dir, f"view{i:02d}")
    try:
        skeleton = synth.ground_truth_skeleton(scene)
        doc = skeleton.to_dict()
        doc["metadata"] = {"seed": scene.seed}
        fileio.dump_json(doc, out / "gt_skeleton.json")
    except GraspPlanningError:
        pass  # shape without a skeleton definition
    print(f"wrote {scene.camera_count} frames to {frames_dir}")
    return EXIT_OK


def cmd_show_config(cfg) -> int:
    print(json.dumps(cfg, indent=2, sort_keys=True))
    return EXIT_OK


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="taskgrasp",
        description="Task-oriented grasp planning on fused depth observations")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="run configuration JSON")
        p.add_argument("--seed", type=int, help="RNG seed for this run")
        p.add_argument("--out", help="output directory")

    p = sub.add_parser("fuse", help="fuse depth frames into a surface cloud")
    common(p)
    p.add_argument("--frames", help="directory of depth/mask/pose frames")
    p.add_argument("--voxel-size", type=float, dest="voxel_size")
    p.add_argument("--target-points", type=int, dest="target_points")

    p = sub.add_parser("triangulate", help="triangulate keypoints into a skeleton")
    common(p)
    p.add_argument("--observations", help="keypoint observations JSONL")
    p.add_argument("--skeleton-spec", dest="skeleton_spec")
    p.add_argument("--cloud", help="surface cloud PLY for the frame fallback")
    p.add_argument("--min-views", type=int, dest="min_views")

    p = sub.add_parser("train", help="train a task model from an exemplar")
    common(p)
    p.add_argument("--annotation", help="exemplar annotation JSON")
    p.add_argument("--max-components", type=int, dest="max_components")

    for name in ("score-surface", "heatmap"):
        p = sub.add_parser(name, help=f"{name} a cloud under a task model")
        common(p)
        p.add_argument("--cloud")
        p.add_argument("--task-model", dest="task_model")
        p.add_argument("--skeleton", dest="skeleton_instance")
        p.add_argument("--baseline", action="store_true",
                       help="no task model: every point scores 1")

    p = sub.add_parser("plan", help="generate and rank grasps")
    common(p)
    p.add_argument("--cloud")
    p.add_argument("--task-model", dest="task_model")
    p.add_argument("--skeleton", dest="skeleton_instance")
    p.add_argument("--baseline", action="store_true",
                   help="stability-only planning (no task model)")
    p.add_argument("--weights", help="w1,w2,w3 for the score combination")

    p = sub.add_parser("render", help="render synthetic depth frames")
    common(p)
    p.add_argument("--scene", help="scene spec JSON")

    p = sub.add_parser("show-config", help="print the effective configuration")
    common(p)
    return parser


def _overrides_from_args(args) -> dict:
    paths = {}
    for flag, key in (("frames", "frames_dir"), ("cloud", "cloud"),
                      ("observations", "observations"),
                      ("skeleton_spec", "skeleton_spec"),
                      ("skeleton_instance", "skeleton_instance"),
                      ("annotation", "annotation"),
                      ("task_model", "task_model"), ("scene", "scene"),
                      ("out", "out_dir")):
        value = getattr(args, flag, None)
        if value is not None:
            paths[key] = value
    overrides: dict = {"paths": paths} if paths else {}
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    fusion_over = {}
    if getattr(args, "voxel_size", None) is not None:
        fusion_over["voxel_size"] = args.voxel_size
    if getattr(args, "target_points", None) is not None:
        fusion_over["target_point_count"] = args.target_points
    if fusion_over:
        overrides["fusion"] = fusion_over
    if getattr(args, "min_views", None) is not None:
        overrides["triangulate"] = {"min_views": args.min_views}
    if getattr(args, "max_components", None) is not None:
        overrides["train"] = {"max_components": args.max_components}
    if getattr(args, "weights", None) is not None:
        try:
            weights = [float(w) for w in args.weights.split(",")]
        except ValueError:
            raise InvalidInputError(f"cannot parse --weights {args.weights!r}")
        overrides["score"] = {"weights": weights}
    if getattr(args, "baseline", False):
        overrides.setdefault("plan", {})["baseline"] = True
    return overrides


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, _overrides_from_args(args))
        baseline = cfg["plan"]["baseline"]
        if args.command == "fuse":
            return cmd_fuse(cfg)
        if args.command == "triangulate":
            return cmd_triangulate(cfg)
        if args.command == "train":
            return cmd_train(cfg)
        if args.command == "score-surface":
            return cmd_score_surface(cfg, baseline)
        if args.command == "heatmap":
            return cmd_heatmap(cfg, baseline)
        if args.command == "plan":
            return cmd_plan(cfg, baseline)
        if args.command == "render":
            return cmd_render(cfg)
        if args.command == "show-config":
            return cmd_show_config(cfg)
        raise InvalidInputError(f"unknown command {args.command!r}")
    except (NoGraspFoundError, EmptySurfaceError) as e:
        return _fail(args.command, str(e), EXIT_NO_RESULT)
    except (InvalidInputError, FileNotFoundError, NotADirectoryError,
            json.JSONDecodeError, KeyError) as e:
        return _fail(args.command, str(e), EXIT_INPUT)
    except (DegenerateGeometryError, GraspPlanningError,
            np.linalg.LinAlgError, FloatingPointError) as e:
        return _fail(args.command, str(e), EXIT_NUMERICAL)


if __name__ == "__main__":
    sys.exit(main())
