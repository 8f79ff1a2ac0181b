"""Semantic keypoint skeletons.

A skeleton spec names an object class's keypoints, the links between
them, and a frame rule per link. Instances carry triangulated keypoint
positions, per-link lengths and a right-handed orthonormal frame at each
keypoint whose x-axis runs along its link. Surface points are encoded
relative to a keypoint as spherical angles (theta, phi) of the direction
vector scaled onto a sphere of the link length; the angles are invariant
to rigid motion and uniform scaling of the object.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (DegenerateGeometryError, FrameUndefinedError,
                     InvalidInputError, UndefinedDirectionError)
from .geometry import point_segment_distance, validate_rigid
from .sensor import CameraIntrinsics, focal_length

COLLINEAR_SIN_TOL = 1e-3


@dataclass(frozen=True)
class FrameRule:
    """How to orient the y/z axes of a link's keypoint frames.

    Either a third keypoint spans the reference plane, or the fallback
    uses the eigenvectors of the object's point cloud.
    """

    reference: int
    third: int | None = None
    eigen_fallback: bool = False

    def to_dict(self) -> dict:
        d = {"ref": self.reference}
        if self.eigen_fallback or self.third is None:
            d["eigen_fallback"] = True
        else:
            d["third"] = self.third
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "FrameRule":
        return cls(reference=int(d["ref"]), third=d.get("third"),
                   eigen_fallback=bool(d.get("eigen_fallback", False)))


@dataclass
class SkeletonSpec:
    """Class-level skeleton: keypoint names, links, frame rules."""

    name: str
    keypoints: list
    links: list
    frame_rules: list

    def __post_init__(self):
        if len(set(self.keypoints)) != len(self.keypoints):
            raise InvalidInputError("keypoint names must be unique")
        self.links = [tuple(int(x) for x in link) for link in self.links]
        k = len(self.keypoints)
        for i, j in self.links:
            if not (0 <= i < k and 0 <= j < k) or i == j:
                raise InvalidInputError(f"invalid link ({i}, {j}) for {k} keypoints")
        if len(self.frame_rules) != len(self.links):
            raise InvalidInputError("every link needs exactly one frame rule")
        for rule, (i, j) in zip(self.frame_rules, self.links):
            if rule.reference not in (i, j):
                raise InvalidInputError(
                    f"frame rule reference {rule.reference} not in link ({i}, {j})")
            if rule.third is not None and not 0 <= rule.third < k:
                raise InvalidInputError(f"frame rule third keypoint {rule.third} invalid")

    def index_of(self, name: str) -> int:
        return self.keypoints.index(name)

    def to_dict(self) -> dict:
        return {
            "class": self.name,
            "keypoints": list(self.keypoints),
            "links": [list(l) for l in self.links],
            "frame_rules": [r.to_dict() for r in self.frame_rules],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SkeletonSpec":
        return cls(
            name=d["class"],
            keypoints=list(d["keypoints"]),
            links=[tuple(l) for l in d["links"]],
            frame_rules=[FrameRule.from_dict(r) for r in d["frame_rules"]],
        )

    @classmethod
    def load(cls, path) -> "SkeletonSpec":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


@dataclass
class KeypointObservation:
    """A 2D keypoint detection in one view with its camera."""

    view: int
    keypoint: int
    pixel: np.ndarray
    pose: np.ndarray
    intrinsics: CameraIntrinsics

    def validate(self) -> "KeypointObservation":
        self.pixel = np.asarray(self.pixel, dtype=float).reshape(2)
        if not (0 <= self.pixel[0] <= self.intrinsics.x_res - 1
                and 0 <= self.pixel[1] <= self.intrinsics.y_res - 1):
            raise InvalidInputError(
                f"pixel {self.pixel} outside {self.intrinsics.x_res}x"
                f"{self.intrinsics.y_res} image")
        self.pose = validate_rigid(self.pose, what="observation camera pose")
        return self

    def ray(self):
        """(origin, unit direction) of the back-projected ray in world frame."""
        f = focal_length(self.intrinsics)
        d_cam = np.array([(self.pixel[0] - self.intrinsics.cx) / f,
                          (self.pixel[1] - self.intrinsics.cy) / f, 1.0])
        d = self.pose[:3, :3] @ d_cam
        return self.pose[:3, 3].copy(), d / np.linalg.norm(d)


def triangulate_keypoints(observations, n_keypoints: int, min_views: int = 2):
    """Least-squares 3D keypoint positions from multi-view pixel observations.

    Minimizes the sum of squared point-to-ray distances over the
    back-projected rays of each keypoint. Keypoints seen in fewer than
    min_views views are marked missing (NaN position). Returns
    (positions (K, 3), rms residuals (K,), missing index list).

    Raises DegenerateGeometryError when a keypoint's cameras share one
    center or its rays are near parallel.
    """
    if min_views < 2:
        raise InvalidInputError("min_views must be >= 2")
    positions = np.full((n_keypoints, 3), np.nan)
    residuals = np.full(n_keypoints, np.nan)
    by_kp: dict[int, list] = {}
    for obs in observations:
        obs.validate()
        if not 0 <= obs.keypoint < n_keypoints:
            raise InvalidInputError(f"keypoint index {obs.keypoint} out of range")
        by_kp.setdefault(obs.keypoint, []).append(obs)

    missing = []
    for kp in range(n_keypoints):
        group = by_kp.get(kp, [])
        if len(group) < min_views:
            missing.append(kp)
            continue
        origins = np.array([o.pose[:3, 3] for o in group])
        spread = np.linalg.norm(origins - origins.mean(axis=0), axis=1).max()
        if spread < 1e-6:
            raise DegenerateGeometryError(
                f"keypoint {kp}: all camera centers coincide")
        A = np.zeros((3, 3))
        b = np.zeros(3)
        projs = []
        for obs in group:
            o, u = obs.ray()
            P = np.eye(3) - np.outer(u, u)
            A += P
            b += P @ o
            projs.append((P, o))
        w = np.linalg.eigvalsh(A)
        if w[0] < 1e-9 * max(w[2], 1e-30):
            raise DegenerateGeometryError(
                f"keypoint {kp}: near-parallel rays, triangulation ill-conditioned")
        x = np.linalg.solve(A, b)
        d2 = [float(np.sum((P @ (x - o)) ** 2)) for P, o in projs]
        positions[kp] = x
        residuals[kp] = math.sqrt(sum(d2) / len(d2))
    return positions, residuals, missing


def _fallback_z(x, cloud_positions):
    """z-axis candidate from the cloud's covariance orthogonal to x.

    The two in-plane eigenvectors order by variance; z is the smaller
    one (a flat plate's normal), with its sign fixed toward world +z.
    """
    q = np.asarray(cloud_positions, dtype=float)
    q = q - q.mean(axis=0)
    q = q - np.outer(q @ x, x)
    cov = q.T @ q
    w, v = np.linalg.eigh(cov)
    z = v[:, 1]  # ascending order: [~0 along x, smaller in-plane, larger in-plane]
    z = z - (z @ x) * x
    n = np.linalg.norm(z)
    if n < 1e-12:
        raise FrameUndefinedError("cloud covariance degenerate orthogonal to link")
    z = z / n
    if z[2] < 0:
        z = -z
    return z


def build_frames(spec: SkeletonSpec, positions, cloud_positions=None) -> np.ndarray:
    """Per-keypoint frames as (K, 3, 3) with rows = x, y, z axes in world.

    Each keypoint's x-axis points along its first link toward the other
    endpoint. z comes from the link's frame rule: the normal of the plane
    spanned with a third keypoint, or the point-cloud eigenvector
    fallback when the rule says so, fewer than three keypoints exist, or
    the third keypoint is collinear with the link. y = z x x closes the
    right-handed frame. Keypoints with missing positions get NaN frames.
    """
    positions = np.asarray(positions, dtype=float).reshape(-1, 3)
    k = len(spec.keypoints)
    if len(positions) != k:
        raise InvalidInputError(f"expected {k} keypoint positions")
    frames = np.full((k, 3, 3), np.nan)

    for li, (i, j) in enumerate(spec.links):
        if not (np.all(np.isfinite(positions[i])) and np.all(np.isfinite(positions[j]))):
            continue
        rule = spec.frame_rules[li]
        link_vec = positions[j] - positions[i]
        link_len = np.linalg.norm(link_vec)
        if link_len < 1e-9:
            raise InvalidInputError(f"link ({i}, {j}) has zero length")

        use_fallback = rule.eigen_fallback or rule.third is None or k < 3
        z_plane = None
        if not use_fallback:
            third = positions[rule.third]
            if not np.all(np.isfinite(third)):
                use_fallback = True
            else:
                n = np.cross(link_vec, third - positions[i])
                sin_angle = np.linalg.norm(n) / (
                    link_len * max(np.linalg.norm(third - positions[i]), 1e-30))
                if sin_angle <= COLLINEAR_SIN_TOL:
                    use_fallback = True
                else:
                    z_plane = n / np.linalg.norm(n)

        for kp, other in ((i, j), (j, i)):
            if np.all(np.isfinite(frames[kp])):
                continue  # first link containing the keypoint wins
            x = (positions[other] - positions[kp]) / link_len
            if use_fallback:
                if cloud_positions is None or len(cloud_positions) < 3:
                    raise FrameUndefinedError(
                        f"link ({i}, {j}) needs the eigenvector fallback "
                        "but no object cloud was provided")
                z = _fallback_z(x, cloud_positions)
            else:
                z = z_plane - (z_plane @ x) * x  # exact already, kept for safety
                z = z / np.linalg.norm(z)
            y = np.cross(z, x)
            frames[kp] = np.stack([x, y, z])
    return frames


@dataclass
class Skeleton:
    """Skeleton instance: spec + positions + frames + link lengths."""

    spec: SkeletonSpec
    positions: np.ndarray
    frames: np.ndarray
    link_lengths: np.ndarray
    residuals: np.ndarray | None = None

    @classmethod
    def assemble(cls, spec, positions, frames, residuals=None) -> "Skeleton":
        positions = np.asarray(positions, dtype=float).reshape(-1, 3)
        lengths = np.array([
            np.linalg.norm(positions[j] - positions[i]) for i, j in spec.links])
        return cls(spec=spec, positions=positions,
                   frames=np.asarray(frames, dtype=float),
                   link_lengths=lengths, residuals=residuals)

    @classmethod
    def build(cls, spec, positions, cloud_positions=None, residuals=None) -> "Skeleton":
        frames = build_frames(spec, positions, cloud_positions)
        return cls.assemble(spec, positions, frames, residuals=residuals)

    @property
    def missing(self) -> list:
        return [name for name, p in zip(self.spec.keypoints, self.positions)
                if not np.all(np.isfinite(p))]

    def complete_links(self) -> list:
        out = []
        for li, (i, j) in enumerate(self.spec.links):
            if np.all(np.isfinite(self.positions[[i, j]])):
                out.append(li)
        return out

    def transformed(self, R=None, t=None, scale: float = 1.0) -> "Skeleton":
        """Rigidly transformed and/or uniformly scaled copy."""
        if scale <= 0:
            raise InvalidInputError("scale must be positive")
        R = np.eye(3) if R is None else np.asarray(R, dtype=float)
        t = np.zeros(3) if t is None else np.asarray(t, dtype=float)
        return Skeleton(
            spec=self.spec,
            positions=scale * (self.positions @ R.T) + t,
            frames=self.frames @ R.T,       # axis rows rotate covariantly
            link_lengths=self.link_lengths * scale,
            residuals=None if self.residuals is None else self.residuals.copy(),
        )

    def to_dict(self) -> dict:
        def arr(a):
            return None if not np.all(np.isfinite(a)) else np.asarray(a).reshape(-1).tolist()

        return {
            "spec": self.spec.to_dict(),
            "positions": [arr(p) for p in self.positions],
            "frames": [arr(f) for f in self.frames],
            "link_lengths": [None if not np.isfinite(s) else float(s)
                             for s in self.link_lengths],
            "missing": self.missing,
            "residuals": None if self.residuals is None else
                         [None if not np.isfinite(r) else float(r)
                          for r in self.residuals],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Skeleton":
        spec = SkeletonSpec.from_dict(d["spec"])
        k = len(spec.keypoints)
        positions = np.full((k, 3), np.nan)
        frames = np.full((k, 3, 3), np.nan)
        for idx in range(k):
            if d["positions"][idx] is not None:
                positions[idx] = d["positions"][idx]
            if d["frames"][idx] is not None:
                frames[idx] = np.asarray(d["frames"][idx]).reshape(3, 3)
        lengths = np.array([np.nan if s is None else s for s in d["link_lengths"]])
        res = d.get("residuals")
        residuals = None if res is None else np.array(
            [np.nan if r is None else r for r in res])
        return cls(spec=spec, positions=positions, frames=frames,
                   link_lengths=lengths, residuals=residuals)

    @classmethod
    def load(cls, path) -> "Skeleton":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def to_spherical(frame, keypoint_position, link_length: float, point):
    """Spherical angles of a surface point in a keypoint frame.

    The direction to the point, expressed in the frame (rows = axes),
    is scaled onto a sphere of radius link_length; theta = atan2(y, x)
    in (-pi, pi], phi = arccos(z / S) in [0, pi]. At the pole
    (x = y = 0) theta is pinned to 0.
    """
    v = np.asarray(point, dtype=float) - np.asarray(keypoint_position, dtype=float)
    r = np.linalg.norm(v)
    if r < 1e-12:
        raise UndefinedDirectionError("surface point coincides with the keypoint")
    local = np.asarray(frame, dtype=float) @ v
    scaled = local * (link_length / r)
    theta = math.atan2(scaled[1], scaled[0])  # atan2(0, 0) = 0: pole convention
    phi = math.acos(np.clip(scaled[2] / link_length, -1.0, 1.0))
    return theta, phi


def to_spherical_many(frame, keypoint_position, points):
    """Vectorized to_spherical over (N, 3) points; returns (theta, phi).

    Points coinciding with the keypoint use the pole convention (0, 0)
    instead of raising.
    """
    v = np.atleast_2d(np.asarray(points, dtype=float)) - np.asarray(
        keypoint_position, dtype=float)
    r = np.linalg.norm(v, axis=1)
    ok = r > 1e-12
    local = v @ np.asarray(frame, dtype=float).T
    theta = np.where(ok, np.arctan2(local[:, 1], local[:, 0]), 0.0)
    with np.errstate(invalid="ignore", divide="ignore"):
        cosphi = np.where(ok, local[:, 2] / np.where(ok, r, 1.0), 1.0)
    phi = np.arccos(np.clip(cosphi, -1.0, 1.0))
    return theta, phi


def nearest_link(skeleton: Skeleton, point) -> int:
    """Index of the link nearest to the point; ties go to the lowest index."""
    idx, _ = nearest_links(skeleton, np.asarray(point, dtype=float)[None, :])
    return int(idx[0])


def nearest_links(skeleton: Skeleton, points):
    """Vectorized nearest-link query: (link indices, distances)."""
    links = skeleton.complete_links()
    if not links:
        raise InvalidInputError("skeleton has no complete link")
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    dists = np.full((len(skeleton.spec.links), len(pts)), np.inf)
    for li in links:
        i, j = skeleton.spec.links[li]
        dists[li] = point_segment_distance(pts, skeleton.positions[i],
                                           skeleton.positions[j])
    idx = np.argmin(dists, axis=0)
    return idx, dists[idx, np.arange(len(pts))]
