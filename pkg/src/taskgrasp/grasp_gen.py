"""Sampling-based grasp generation for a parallel-jaw gripper.

Start points are drawn on the surface cloud with probability
proportional to the task score (uniform in baseline mode). At each
start point the gripper is posed with its closing axis opposing the
surface normal, the body on the up side, at rolls of 0 and +-20 deg
about the closing axis. Closing sweeps the moving pad along the axis
until it meets opposing surface points; candidates that close and clear
the table plane are scored, and the single best candidate is refined by
three iterations of greedy coordinate-wise pose perturbation with
halving offsets.

Gripper frame: origin at the fixed fingertip contact, z along the
closing axis (into the object), x toward the gripper body ("up" at
roll 0), y = z cross x.
"""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .cloud import SurfaceCloud
from .errors import InvalidInputError, InvalidPoseError, NoGraspFoundError
from .geometry import normalized, rigid, rotation_about_axis
from .grasp_eval import (Contact, GraspScore, ScoreConfig, combined_score,
                         contact_angle_score, surface_quality_score)
from .task_model import TaskModel, score_surface

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class GripperModel:
    """Parallel-jaw geometry in mm. Pads are rectangles: width along the
    gripper y-axis, height along x; fingers and palm get box volumes for
    the table collision check."""

    max_opening: float = 80.0
    pad_width: float = 20.0
    pad_height: float = 15.0
    palm_depth: float = 50.0
    finger_thickness: float = 8.0
    palm_thickness: float = 25.0

    def __post_init__(self):
        if min(self.max_opening, self.pad_width, self.pad_height,
               self.palm_depth, self.finger_thickness, self.palm_thickness) <= 0:
            raise InvalidInputError("gripper dimensions must be positive")

    def body_boxes(self, opening: float):
        """(lo, hi) corners of the body boxes in the gripper frame."""
        hx, hy = self.pad_height / 2.0, self.pad_width / 2.0
        ft = self.finger_thickness
        palm_x = hx + self.palm_depth
        return [
            ((-hx, -hy, -ft), (palm_x, hy, 0.0)),                       # fixed finger
            ((-hx, -hy, opening), (palm_x, hy, opening + ft)),          # moving finger
            ((palm_x, -hy, -ft), (palm_x + self.palm_thickness, hy, opening + ft)),
        ]


@dataclass(frozen=True)
class PlanConfig:
    """Sampling, refinement and collision parameters."""

    n_samples: int = 45
    roll_offsets_deg: tuple = (-20.0, 0.0, 20.0)
    refine_iterations: int = 3
    refine_rot_offset_deg: float = 15.0
    refine_pos_offset: float = 5.0
    seed: int = 0
    contact_threshold: float = 1.0
    collision_margin: float = 2.0
    table_normal: tuple | None = (0.0, 0.0, 1.0)
    table_offset: float = 0.0
    up: tuple = (0.0, 0.0, 1.0)

    def __post_init__(self):
        if self.n_samples < 1:
            raise InvalidInputError("n_samples must be >= 1")
        if self.refine_rot_offset_deg <= 0 or self.refine_pos_offset <= 0:
            raise InvalidInputError("refinement offsets must be positive")
        if self.contact_threshold <= 0:
            raise InvalidInputError("contact_threshold must be positive")

    def table_plane(self):
        if self.table_normal is None:
            return None
        return np.asarray(self.table_normal, dtype=float), float(self.table_offset)


@dataclass
class GraspCandidate:
    pose: np.ndarray
    roll: float
    start_index: int
    status: str = "unclosed"        # unclosed | collided | scored
    opening: float = float("nan")
    contacts: list = field(default_factory=list)
    contact_task_scores: list = field(default_factory=list)
    score: GraspScore | None = None

    def to_dict(self) -> dict:
        d = {
            "pose": np.asarray(self.pose).reshape(-1).tolist(),
            "roll_deg": math.degrees(self.roll),
            "start_index": int(self.start_index),
            "status": self.status,
            "opening": None if math.isnan(self.opening) else float(self.opening),
            "contacts": [{
                "position": c.position.tolist(),
                "normal": c.normal.tolist(),
                "closing_direction": c.closing_direction.tolist(),
                "c": float(c.c), "u": float(c.u),
            } for c in self.contacts],
            "contact_task_scores": [float(s) for s in self.contact_task_scores],
        }
        if self.score is not None:
            d["scores"] = self.score.to_dict()
        return d


@dataclass
class PlanResult:
    candidates: list                 # scored candidates, best first
    best: GraspCandidate             # refined best
    rejections: dict
    refine_trace: list
    seed: int

    def to_dict(self) -> dict:
        return {
            "metadata": {"seed": self.seed},
            "rejections": dict(self.rejections),
            "refinement": {"trace": [float(t) for t in self.refine_trace]},
            "best": self.best.to_dict(),
            "candidates": [c.to_dict() for c in self.candidates],
        }


def sample_start_points(cloud, task_scores, n_samples: int, seed=0) -> np.ndarray:
    """Draw start-point indices without replacement, probability
    proportional to the task score (uniform when scores are absent or
    all zero). Deterministic for a fixed seed.

    When fewer points carry positive mass than requested, all of them
    are taken and the remainder is drawn with replacement. Requests
    beyond the cloud size return every index with a warning.
    """
    n = len(cloud)
    if n == 0:
        raise InvalidInputError("cannot sample from an empty cloud")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    if task_scores is None:
        p = np.ones(n)
    else:
        p = np.asarray(task_scores, dtype=float).reshape(-1)
        if len(p) != n:
            raise InvalidInputError("task scores not aligned with the cloud")
        if np.any(p < 0):
            raise InvalidInputError("task scores must be non-negative")
        if p.sum() <= 0:
            p = np.ones(n)
    if n_samples > n:
        warnings.warn(f"requested {n_samples} samples from {n} points; using all")
        return np.arange(n)

    p = p / p.sum()
    positive = np.flatnonzero(p > 0)
    if len(positive) >= n_samples:
        # Gumbel top-k == sequential weighted sampling without replacement
        with np.errstate(divide="ignore"):
            keys = np.log(p) + rng.gumbel(size=n)
        return np.argsort(-keys, kind="stable")[:n_samples]
    extra = rng.choice(n, size=n_samples - len(positive), replace=True, p=p)
    return np.concatenate([positive, extra])


def pose_gripper(point, normal, roll: float, up=(0.0, 0.0, 1.0)):
    """Gripper pose for a fingertip at `point` opposing `normal`.

    Returns (pose, used_fallback). The closing axis is -normal; at
    roll 0 the body direction (gripper x) is the up vector projected
    orthogonal to the closing axis, so the body sits above the object.
    A normal parallel to up switches the reference to world +x.
    """
    n = normalized(normal)
    a = -n
    upv = normalized(up)
    fallback = float(np.linalg.norm(np.cross(n, upv))) < 1e-6
    ref = np.array([1.0, 0.0, 0.0]) if fallback else upv
    r0 = ref - (ref @ a) * a
    r0 = normalized(r0)
    x = rotation_about_axis(a, roll) @ r0
    y = np.cross(a, x)
    R = np.stack([x, y, a], axis=1)
    return rigid(R=R, t=np.asarray(point, dtype=float)), fallback


def close_gripper(pose, gripper: GripperModel, cloud: SurfaceCloud,
                  contact_threshold: float = 1.0, sample_point=None):
    """Simulate the closing sweep; returns (contacts, opening, status).

    The fixed pad sits at the gripper origin; the moving pad sweeps from
    max opening along the closing axis until its pad face comes within
    the contact threshold of opposing surface points, which must lie
    clear of the fixed pad's own contact slab. Each pad aggregates its
    contained points into one contact whose normal, c and u are the
    (equal-area) point averages. status is "scored" on success,
    "unclosed" otherwise.
    """
    pose = np.asarray(pose, dtype=float)
    R, t = pose[:3, :3], pose[:3, 3]
    local = (cloud.positions - t) @ R           # R columns = gripper axes
    hx, hy = gripper.pad_height / 2.0, gripper.pad_width / 2.0
    in_rect = (np.abs(local[:, 0]) <= hx) & (np.abs(local[:, 1]) <= hy)
    lz = local[:, 2]

    if sample_point is not None:
        sp = (np.asarray(sample_point, dtype=float) - t) @ R
        if not (abs(sp[0]) <= hx and abs(sp[1]) <= hy
                and abs(sp[2]) <= contact_threshold):
            raise InvalidPoseError("sampled point is not under the fixed pad")

    fixed_sel = in_rect & (np.abs(lz) <= contact_threshold)
    if not fixed_sel.any():
        return None, float("nan"), "unclosed"

    # opposing contacts must be distinct from the fixed pad's own slab
    eligible = in_rect & (lz >= 2.0 * contact_threshold) & (lz <= gripper.max_opening)
    if not eligible.any():
        return None, float("nan"), "unclosed"
    opening = float(lz[eligible].max())
    moving_sel = eligible & (lz >= opening - contact_threshold)

    closing_axis = R[:, 2]
    contacts = []
    for sel, direction in ((fixed_sel, closing_axis), (moving_sel, -closing_axis)):
        n_avg = cloud.normals[sel].mean(axis=0)
        nn = np.linalg.norm(n_avg)
        if nn < 1e-9:
            return None, float("nan"), "unclosed"   # normals cancel out
        contacts.append(Contact(
            position=cloud.positions[sel].mean(axis=0),
            normal=n_avg / nn,
            closing_direction=direction,
            c=float(cloud.c[sel].mean()),
            u=float(cloud.u[sel].mean()),
        ).validate())
    return contacts, opening, "scored"


def check_collision(pose, gripper: GripperModel, opening: float,
                    table_plane, margin: float = 2.0) -> bool:
    """True when every vertex of the gripper body clears the table plane
    by strictly more than the safety margin."""
    if table_plane is None:
        return True
    normal, offset = table_plane
    normal = np.asarray(normal, dtype=float)
    pose = np.asarray(pose, dtype=float)
    for lo, hi in gripper.body_boxes(opening):
        lo = np.asarray(lo)
        hi = np.asarray(hi)
        corners = np.array([[x, y, z] for x in (lo[0], hi[0])
                            for y in (lo[1], hi[1]) for z in (lo[2], hi[2])])
        world = corners @ pose[:3, :3].T + pose[:3, 3]
        if np.any(world @ normal - offset <= margin):
            return False
    return True


def _candidate_p3(contacts, model, skeleton):
    """Task criterion for a candidate: geometric mean of the task scores
    of its contact points (preserves [0, 1] and the absorbing zero)."""
    if model is None:
        return 1.0, []
    pts = np.array([c.position for c in contacts])
    s = score_surface(model, skeleton, pts)
    per_contact = [float(x) for x in s]
    if np.any(s <= 0.0):
        return 0.0, per_contact
    return min(float(np.exp(np.mean(np.log(s)))), 1.0), per_contact


def _evaluate(pose, roll, start_index, gripper, cloud, cfg, score_cfg,
              model, skeleton, sample_point=None) -> GraspCandidate:
    cand = GraspCandidate(pose=pose, roll=roll, start_index=start_index)
    contacts, opening, status = close_gripper(
        pose, gripper, cloud, cfg.contact_threshold, sample_point=sample_point)
    cand.status = status
    cand.opening = opening
    if status != "scored":
        return cand
    if not check_collision(pose, gripper, opening, cfg.table_plane(),
                           cfg.collision_margin):
        cand.status = "collided"
        return cand
    cand.contacts = contacts
    p1 = contact_angle_score(contacts, score_cfg.theta_fc)
    p2 = surface_quality_score(contacts, score_cfg.c_max)
    p3, per_contact = _candidate_p3(contacts, model, skeleton)
    cand.contact_task_scores = per_contact
    cand.score = combined_score(p1, p2, p3, score_cfg)
    return cand


def _perturbed(pose, dof: int, delta: float) -> np.ndarray:
    """Pose moved along/about one of its own axes (0..2 rotation, 3..5 translation)."""
    axis = np.eye(3)[dof % 3]
    if dof < 3:
        return pose @ rigid(R=rotation_about_axis(axis, delta))
    return pose @ rigid(t=axis * delta)


def plan(cloud: SurfaceCloud, skeleton=None, task_model: TaskModel | None = None,
         plan_cfg: PlanConfig = PlanConfig(), score_cfg: ScoreConfig = ScoreConfig(),
         gripper: GripperModel = GripperModel()) -> PlanResult:
    """Generate, score and refine grasp candidates on the cloud.

    With a task model, sampling is biased by per-point task scores and P3
    is the contacts' task-score geometric mean; without one the run is
    the stability-only baseline (uniform sampling, P3 = 1, its weight
    redistributed). Deterministic for fixed inputs and seed. Raises
    NoGraspFoundError with per-stage rejection counts when nothing
    survives closing and collision checks.
    """
    cloud.validate()
    if task_model is not None and skeleton is None:
        raise InvalidInputError("a task model needs the matching skeleton instance")
    task_scores = None
    if task_model is not None:
        task_scores = score_surface(task_model, skeleton, cloud)
    eff_score_cfg = score_cfg if task_model is not None else score_cfg.baseline()

    starts = sample_start_points(cloud, task_scores, plan_cfg.n_samples,
                                 seed=plan_cfg.seed)
    rolls = [math.radians(r) for r in plan_cfg.roll_offsets_deg]
    rejections = {"unclosed": 0, "collided": 0}
    scored: list[GraspCandidate] = []
    for idx in starts:
        point = cloud.positions[idx]
        normal = cloud.normals[idx]
        for roll in rolls:
            pose, _ = pose_gripper(point, normal, roll, up=plan_cfg.up)
            cand = _evaluate(pose, roll, int(idx), gripper, cloud, plan_cfg,
                             eff_score_cfg, task_model, skeleton,
                             sample_point=point)
            if cand.status == "scored":
                scored.append(cand)
            else:
                rejections[cand.status] += 1
    if not scored:
        raise NoGraspFoundError(
            f"no scoreable grasp among {len(starts) * len(rolls)} candidates",
            rejections)

    order = sorted(range(len(scored)), key=lambda i: (-scored[i].score.total, i))
    ranked = [scored[i] for i in order]

    # local refinement of the single best candidate
    best = ranked[0]
    current = best
    trace = [best.score.total]
    rot = math.radians(plan_cfg.refine_rot_offset_deg)
    pos = plan_cfg.refine_pos_offset
    for _ in range(plan_cfg.refine_iterations):
        for dof in range(6):
            delta = rot if dof < 3 else pos
            for sign in (1.0, -1.0):
                cand = _evaluate(_perturbed(current.pose, dof, sign * delta),
                                 current.roll, current.start_index, gripper,
                                 cloud, plan_cfg, eff_score_cfg, task_model,
                                 skeleton)
                if cand.status == "scored" and cand.score.total > current.score.total:
                    current = cand
        rot /= 2.0
        pos /= 2.0
        trace.append(current.score.total)

    return PlanResult(candidates=ranked, best=current, rejections=rejections,
                      refine_trace=trace, seed=plan_cfg.seed)
