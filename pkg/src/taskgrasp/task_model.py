"""Task- and object-class-specific grasp-location models.

From a single annotated exemplar, each keypoint of the class skeleton
gets a Gaussian mixture over the (theta, phi) directions of the good
grasp points, fitted in angle space so the model is invariant to rigid
motion and uniform scaling of new instances. A surface point is scored
by the mixtures of the two keypoints of its nearest link: each mixture
density is normalized by its peak value into [0, 1] and the two scores
multiply. Scores from several independent constraints combine as an
elementwise product.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .cloud import SurfaceCloud
from .errors import InvalidInputError, InvalidScoreError
from .geometry import point_segment_distance
from .mixtures import GaussianMixture2D, fit_best_bic, fit_em
from .skeleton import Skeleton, nearest_links, to_spherical_many

DEFAULT_MAX_COMPONENTS = 4
DEFAULT_DISTANCE_CAP_FACTOR = 3.0   # points beyond cap * S from every link score 0
LOW_DATA_MIN_POINTS = 3
_TWO_PI = 2.0 * math.pi


@dataclass
class ExemplarAnnotation:
    """Expert-marked good grasp points on one exemplar for one task."""

    object_class: str
    task: str
    skeleton: Skeleton
    grasp_points: np.ndarray

    def validate(self, cloud: SurfaceCloud | None = None,
                 truncation: float | None = None) -> "ExemplarAnnotation":
        self.grasp_points = np.asarray(self.grasp_points, dtype=float).reshape(-1, 3)
        if len(self.grasp_points) < LOW_DATA_MIN_POINTS:
            raise InvalidInputError(
                f"annotation needs >= {LOW_DATA_MIN_POINTS} grasp points, "
                f"got {len(self.grasp_points)}")
        if not self.skeleton.complete_links():
            raise InvalidInputError("exemplar skeleton has no complete link")
        if cloud is not None and truncation is not None:
            d, _ = cKDTree(cloud.positions).query(self.grasp_points, k=1)
            far = d > 2.0 * truncation
            if np.any(far):
                raise InvalidInputError(
                    f"{int(far.sum())} grasp points lie farther than 2*truncation "
                    "from the exemplar surface")
        return self


@dataclass
class KeypointGMM:
    """Mixture over grasp-point directions at one keypoint."""

    keypoint: str
    index: int
    mixture: GaussianMixture2D
    normalizer: float
    low_data: bool = False
    n_samples: int = 0
    bic_table: list = field(default_factory=list)

    def __post_init__(self):
        if self.normalizer <= 0:
            raise InvalidInputError("GMM normalizer must be positive")

    def score(self, theta, phi):
        """Normalized density in [0, 1]; theta evaluated on all branches.

        The density is taken as the max over theta, theta +- 2*pi so the
        angular seam at +-pi does not split clusters.
        """
        theta = np.asarray(theta, dtype=float)
        phi = np.asarray(phi, dtype=float)
        scalar = theta.ndim == 0
        theta = np.atleast_1d(theta)
        phi = np.atleast_1d(phi)
        dens = np.maximum.reduce([
            self.mixture.pdf(np.stack([theta + shift, phi], axis=1))
            for shift in (-_TWO_PI, 0.0, _TWO_PI)])
        s = np.minimum(dens / self.normalizer, 1.0)
        return float(s[0]) if scalar else s


@dataclass
class TaskModel:
    """Per-(class, task) collection of keypoint mixtures."""

    object_class: str
    task: str
    gmms: dict
    link_lengths: list
    seed: int = 0
    distance_cap_factor: float = DEFAULT_DISTANCE_CAP_FACTOR

    def gmm_for(self, name: str) -> KeypointGMM:
        try:
            return self.gmms[name]
        except KeyError:
            raise InvalidInputError(
                f"task model {self.object_class}/{self.task} has no mixture "
                f"for keypoint {name!r}") from None

    def to_dict(self) -> dict:
        return {
            "class": self.object_class,
            "task": self.task,
            "seed": self.seed,
            "distance_cap_factor": self.distance_cap_factor,
            "link_lengths": [float(s) for s in self.link_lengths],
            "keypoints": {
                name: {
                    "index": g.index,
                    "low_data": g.low_data,
                    "n_samples": g.n_samples,
                    "normalizer": g.normalizer,
                    "bic_table": [[int(k), float(b)] for k, b in g.bic_table],
                    "components": [
                        {"w": float(w), "mean": m.tolist(), "cov": c.tolist()}
                        for w, m, c in zip(g.mixture.weights, g.mixture.means,
                                           g.mixture.covariances)],
                }
                for name, g in self.gmms.items()
            },
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TaskModel":
        gmms = {}
        for name, g in d["keypoints"].items():
            mix = GaussianMixture2D(
                weights=np.array([comp["w"] for comp in g["components"]]),
                means=np.array([comp["mean"] for comp in g["components"]]),
                covariances=np.array([comp["cov"] for comp in g["components"]]),
            ).validate()
            gmms[name] = KeypointGMM(
                keypoint=name, index=int(g["index"]), mixture=mix,
                normalizer=float(g["normalizer"]), low_data=bool(g["low_data"]),
                n_samples=int(g["n_samples"]),
                bic_table=[tuple(row) for row in g["bic_table"]])
        return cls(object_class=d["class"], task=d["task"], gmms=gmms,
                   link_lengths=list(d["link_lengths"]), seed=int(d["seed"]),
                   distance_cap_factor=float(d.get("distance_cap_factor",
                                                   DEFAULT_DISTANCE_CAP_FACTOR)))

    @classmethod
    def load(cls, path) -> "TaskModel":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def _unwrap_theta(theta):
    """Shift each sample by 2*pi*k onto the branch nearest the circular mean."""
    mu = math.atan2(np.sin(theta).mean(), np.cos(theta).mean())
    return mu + np.mod(theta - mu + math.pi, _TWO_PI) - math.pi


def train(annotation: ExemplarAnnotation,
          max_components: int = DEFAULT_MAX_COMPONENTS,
          seed: int = 0) -> TaskModel:
    """Fit per-keypoint mixtures from one annotated exemplar.

    Grasp points are assigned to their nearest link; a keypoint trains on
    the points assigned to any of its links. Component count is selected
    by BIC over 1..max_components. A keypoint left with fewer than three
    points falls back to a single component over all grasp points and is
    flagged low_data.
    """
    annotation.validate()
    if max_components < 1:
        raise InvalidInputError("max_components must be >= 1")
    skel = annotation.skeleton
    pts = annotation.grasp_points
    link_of_point, _ = nearest_links(skel, pts)

    linked_keypoints: dict[int, list] = {}
    for li in skel.complete_links():
        i, j = skel.spec.links[li]
        linked_keypoints.setdefault(i, []).append(li)
        linked_keypoints.setdefault(j, []).append(li)

    children = np.random.SeedSequence(seed).spawn(len(skel.spec.keypoints))
    gmms = {}
    for kp, links in sorted(linked_keypoints.items()):
        name = skel.spec.keypoints[kp]
        sel = np.isin(link_of_point, links)
        kp_points = pts[sel]
        low_data = len(kp_points) < LOW_DATA_MIN_POINTS
        if low_data:
            kp_points = pts
        theta, phi = to_spherical_many(skel.frames[kp], skel.positions[kp], kp_points)
        samples = np.stack([_unwrap_theta(theta), phi], axis=1)
        rng = np.random.default_rng(children[kp])
        if low_data:
            result = fit_em(samples, 1, seed=rng)
            table = [(1, result.mixture.bic(samples))]
        else:
            result, table = fit_best_bic(samples, max_components, seed=rng)
        gmms[name] = KeypointGMM(
            keypoint=name, index=kp, mixture=result.mixture,
            normalizer=result.mixture.peak_density(),
            low_data=low_data, n_samples=len(samples), bic_table=table)

    return TaskModel(
        object_class=annotation.object_class, task=annotation.task,
        gmms=gmms, link_lengths=[float(s) for s in skel.link_lengths], seed=seed)


def score_point(model: TaskModel, skeleton: Skeleton, point) -> float:
    """Task probability of one surface point, in [0, 1]."""
    return float(score_surface(model, skeleton, np.asarray(point, dtype=float)[None, :])[0])


def score_surface(model: TaskModel, skeleton: Skeleton, points,
                  return_stats: bool = False):
    """Task probability per point: product of the nearest link's two
    keypoint scores; points beyond the distance cap of every link get 0.

    Deterministic and aligned with the input order. With return_stats
    the number of density clamping events is reported as well.
    """
    if isinstance(points, SurfaceCloud):
        points = points.positions
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if len(pts) == 0:
        raise InvalidInputError("no points to score")
    link_idx, dist = nearest_links(skeleton, pts)
    scores = np.zeros(len(pts))
    clamped = 0

    cap = model.distance_cap_factor
    within = np.zeros(len(pts), dtype=bool)
    for li in skeleton.complete_links():
        i, j = skeleton.spec.links[li]
        d = point_segment_distance(pts, skeleton.positions[i], skeleton.positions[j])
        within |= d <= cap * skeleton.link_lengths[li]

    for li in np.unique(link_idx):
        sel = (link_idx == li) & within
        if not sel.any():
            continue
        i, j = skeleton.spec.links[li]
        s = np.ones(int(sel.sum()))
        for kp in (i, j):
            gmm = model.gmm_for(skeleton.spec.keypoints[kp])
            theta, phi = to_spherical_many(skeleton.frames[kp],
                                           skeleton.positions[kp], pts[sel])
            dens = np.maximum.reduce([
                gmm.mixture.pdf(np.stack([theta + shift, phi], axis=1))
                for shift in (-_TWO_PI, 0.0, _TWO_PI)])
            ratio = dens / gmm.normalizer
            clamped += int(np.count_nonzero(ratio > 1.0))
            s *= np.minimum(ratio, 1.0)
        scores[sel] = s
    if return_stats:
        return scores, {"clamped": clamped,
                        "beyond_cap": int(np.count_nonzero(~within))}
    return scores


def combine_constraints(constraint_scores, n_points: int | None = None) -> np.ndarray:
    """Elementwise product of per-constraint score arrays.

    The empty product (no task constraints, the baseline) is all ones,
    which requires n_points. Scores outside [0, 1] are rejected.
    """
    arrays = [np.asarray(a, dtype=float).reshape(-1) for a in constraint_scores]
    if not arrays:
        if n_points is None:
            raise InvalidInputError("empty constraint set needs n_points")
        return np.ones(n_points)
    n = len(arrays[0])
    for a in arrays:
        if len(a) != n:
            raise InvalidInputError("constraint arrays differ in length")
        if np.any(a < 0.0) or np.any(a > 1.0):
            raise InvalidScoreError("constraint scores must lie in [0, 1]")
    return np.prod(arrays, axis=0)
