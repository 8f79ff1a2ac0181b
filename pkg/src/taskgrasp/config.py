"""Run configuration: one JSON file, flat sections, flag overrides.

Every command reads the same document; unknown keys are rejected so
typos surface early. All defaults live here and `show-config` prints
them, which makes runs self-documenting.
"""
from __future__ import annotations

import copy
import json
import math
from pathlib import Path

from .errors import InvalidConfigError
from .grasp_eval import ScoreConfig
from .grasp_gen import GripperModel, PlanConfig

DEFAULTS = {
    "seed": 0,
    "paths": {
        "frames_dir": None,          # directory of <stem>_depth.pgm / _mask.pgm / .json
        "skeleton_spec": None,       # class skeleton JSON
        "skeleton_instance": None,   # triangulated instance JSON
        "observations": None,        # keypoint observations JSONL
        "annotation": None,          # exemplar annotation JSON
        "cloud": None,               # surface cloud PLY
        "task_model": None,          # trained model JSON
        "scene": None,               # synthetic scene spec JSON
        "out_dir": "out",
    },
    "fusion": {
        "voxel_size": 3.0,
        "truncation_factor": 4.0,
        "theta_max": 1.3,
        "target_point_count": 10000,
        "neighborhood_k": 16,
        "bounds_margin": None,       # mm; None = 3 * truncation
    },
    "triangulate": {
        "min_views": 2,
    },
    "train": {
        "max_components": 4,
    },
    "score": {
        "weights": [0.4, 0.3, 0.3],
        "theta_fc": 0.8,
        "c_max": 3.0,
    },
    "gripper": {
        "max_opening": 80.0,
        "pad_width": 20.0,
        "pad_height": 15.0,
        "palm_depth": 50.0,
        "finger_thickness": 8.0,
        "palm_thickness": 25.0,
    },
    "plan": {
        "n_samples": 45,
        "roll_offsets_deg": [-20.0, 0.0, 20.0],
        "refine_iterations": 3,
        "refine_rot_offset_deg": 15.0,
        "refine_pos_offset": 5.0,
        "contact_threshold": 1.0,
        "collision_margin": 2.0,
        "table_normal": [0.0, 0.0, 1.0],
        "table_offset": 0.0,
        "baseline": False,
    },
}


def _merge(base: dict, override: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        where = f"{path}.{key}" if path else key
        if key not in base:
            raise InvalidConfigError(f"unknown config key {where!r}")
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise InvalidConfigError(f"config section {where!r} must be an object")
            out[key] = _merge(base[key], value, where)
        else:
            out[key] = value
    return out


def load_config(path=None, overrides: dict | None = None) -> dict:
    """Defaults, optionally overlaid with a JSON file and CLI overrides."""
    cfg = copy.deepcopy(DEFAULTS)
    if path is not None:
        with open(path) as fh:
            try:
                data = json.load(fh)
            except json.JSONDecodeError as e:
                raise InvalidConfigError(f"config {path} is not valid JSON: {e}") from e
        cfg = _merge(cfg, data)
    if overrides:
        cfg = _merge(cfg, overrides)
    return cfg


def require_path(cfg: dict, key: str) -> Path:
    value = cfg["paths"].get(key)
    if not value:
        raise InvalidConfigError(f"config paths.{key} is required for this command")
    p = Path(value)
    if not p.exists():
        raise InvalidConfigError(f"paths.{key}: {p} does not exist")
    return p


def out_dir(cfg: dict) -> Path:
    p = Path(cfg["paths"]["out_dir"])
    p.mkdir(parents=True, exist_ok=True)
    return p


def score_config(cfg: dict) -> ScoreConfig:
    s = cfg["score"]
    return ScoreConfig(weights=tuple(s["weights"]), theta_fc=s["theta_fc"],
                       c_max=s["c_max"])


def gripper_model(cfg: dict) -> GripperModel:
    return GripperModel(**cfg["gripper"])


def plan_config(cfg: dict) -> PlanConfig:
    p = cfg["plan"]
    table = p["table_normal"]
    return PlanConfig(
        n_samples=p["n_samples"],
        roll_offsets_deg=tuple(p["roll_offsets_deg"]),
        refine_iterations=p["refine_iterations"],
        refine_rot_offset_deg=p["refine_rot_offset_deg"],
        refine_pos_offset=p["refine_pos_offset"],
        seed=cfg["seed"],
        contact_threshold=p["contact_threshold"],
        collision_margin=p["collision_margin"],
        table_normal=None if table is None else tuple(table),
        table_offset=p["table_offset"],
    )
