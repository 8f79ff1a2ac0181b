"""Probabilistic grasp scoring.

Three criteria in [0, 1] combine as a weighted sum with weights summing
to one:

* P1 rewards fingertip closing directions opposing the surface normals;
  any contact outside the friction cone gates the whole score to 0.
* P2 rewards well-recovered, low-variation contact surfaces via the
  per-contact factors (1 - c / c_max)(1 - 3u).
* P3 is the task-constraint product supplied by the task model.

The baseline comparison mode drops P3 and redistributes its weight onto
P1 and P2 proportionally.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidConfigError, InvalidContactError, InvalidScoreError

DEFAULT_WEIGHTS = (0.4, 0.3, 0.3)
DEFAULT_THETA_FC = 0.8   # rad, friction cone's maximum contact angle
DEFAULT_C_MAX = 3.0      # mm, uncertainty gate

_UNIT_TOL = 1e-6


@dataclass
class Contact:
    """One fingertip contact: where, surface normal, closing direction,
    and the surface quality annotations of the contacted points."""

    position: np.ndarray
    normal: np.ndarray
    closing_direction: np.ndarray
    c: float
    u: float

    def validate(self) -> "Contact":
        self.position = np.asarray(self.position, dtype=float).reshape(3)
        self.normal = np.asarray(self.normal, dtype=float).reshape(3)
        self.closing_direction = np.asarray(self.closing_direction,
                                            dtype=float).reshape(3)
        for name, v in (("normal", self.normal),
                        ("closing_direction", self.closing_direction)):
            n = np.linalg.norm(v)
            if abs(n - 1.0) > _UNIT_TOL:
                raise InvalidContactError(f"contact {name} must be unit length")
        if self.c < 0:
            raise InvalidContactError("contact uncertainty c must be >= 0")
        return self

    def alpha(self) -> float:
        """Angle between the closing direction and the outward normal;
        perfect opposition gives pi."""
        return math.acos(float(np.clip(
            self.closing_direction @ self.normal, -1.0, 1.0)))


@dataclass(frozen=True)
class ScoreConfig:
    weights: tuple = DEFAULT_WEIGHTS
    theta_fc: float = DEFAULT_THETA_FC
    c_max: float = DEFAULT_C_MAX

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.shape != (3,) or np.any(w < 0):
            raise InvalidConfigError("weights must be three non-negative values")
        if abs(float(w.sum()) - 1.0) > 1e-9:
            raise InvalidConfigError(f"weights must sum to 1, got {w.tolist()}")
        if not 0.0 < self.theta_fc < math.pi:
            raise InvalidConfigError("theta_fc must lie in (0, pi)")
        if self.c_max <= 0:
            raise InvalidConfigError("c_max must be positive")

    def baseline(self) -> "ScoreConfig":
        """Stability-only variant: P3 weight redistributed onto P1 and P2."""
        w1, w2, w3 = self.weights
        s = w1 + w2
        if s <= 0:
            raise InvalidConfigError("baseline mode needs w1 + w2 > 0")
        return ScoreConfig(weights=(w1 / s, w2 / s, 0.0),
                           theta_fc=self.theta_fc, c_max=self.c_max)


@dataclass(frozen=True)
class GraspScore:
    p1: float
    p2: float
    p3: float
    total: float

    def to_dict(self) -> dict:
        return {"p1": self.p1, "p2": self.p2, "p3": self.p3, "total": self.total}


def contact_angle_score(contacts, theta_fc: float = DEFAULT_THETA_FC) -> float:
    """P1: mean in-cone opposition quality, gated to 0 by any cone violation."""
    if not contacts:
        raise InvalidContactError("contact set is empty")
    devs = []
    for contact in contacts:
        contact.validate()
        devs.append(abs(math.pi - contact.alpha()))
    if any(dev >= theta_fc / 2.0 for dev in devs):
        return 0.0
    return float(np.mean([1.0 - (2.0 / theta_fc) * dev for dev in devs]))


def surface_quality_score(contacts, c_max: float = DEFAULT_C_MAX) -> float:
    """P2: product of per-contact surface factors; 0 when any c reaches c_max.

    u slightly above 1/3 can occur from numerical noise; its factor is
    clamped at 0 rather than going negative.
    """
    if not contacts:
        raise InvalidContactError("contact set is empty")
    p2 = 1.0
    for contact in contacts:
        contact.validate()
        if contact.c >= c_max:
            return 0.0
        p2 *= (1.0 - contact.c / c_max) * max(1.0 - 3.0 * contact.u, 0.0)
    return p2


def combined_score(p1: float, p2: float, p3: float,
                   config: ScoreConfig = ScoreConfig()) -> GraspScore:
    """Weighted sum of the three criteria."""
    for name, p in (("p1", p1), ("p2", p2), ("p3", p3)):
        if not 0.0 <= p <= 1.0:
            raise InvalidScoreError(f"{name}={p!r} outside [0, 1]")
    w1, w2, w3 = config.weights
    return GraspScore(p1=p1, p2=p2, p3=p3, total=w1 * p1 + w2 * p2 + w3 * p3)
