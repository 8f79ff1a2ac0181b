"""Stereo depth camera noise model.

Two error sources are combined per pixel, both in millimetres:

* depth RMS error of a localised plane,  E_drms = 0.08 * d^2 / (55 * f)
* incidence-angle error,                 E_theta = theta / (pi/2 - theta)^2

with f the focal length in pixels, f = 0.5 * x_res / tan(hfov / 2).
The fusion variance is the fully correlated combination
sigma^2 = (E_drms + E_theta)^2 in mm^2; treating the two sources as
correlated is conservative and keeps the result monotone in both inputs.

The incidence error diverges toward grazing incidence, so rays with
theta >= theta_max (default 1.3 rad) are rejected rather than fused.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import GrazingRayError, InvalidInputError, InvalidIntrinsicsError

#: Grazing-incidence clamp in radians; configurable per call.
DEFAULT_THETA_MAX = 1.3


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole intrinsics; x_res/y_res in pixels, hfov in radians.

    The focal length is always derived from x_res and hfov, never stored.
    """

    x_res: int
    y_res: int
    hfov: float
    cx: float
    cy: float

    def __post_init__(self):
        if self.x_res <= 0 or self.y_res <= 0:
            raise InvalidIntrinsicsError(
                f"resolution must be positive, got {self.x_res}x{self.y_res}")
        if not 0.0 < self.hfov < math.pi:
            raise InvalidIntrinsicsError(
                f"hfov must lie in (0, pi), got {self.hfov!r} rad")

    @property
    def f(self) -> float:
        """Focal length in pixels."""
        return focal_length(self)

    @classmethod
    def from_dict(cls, d: dict) -> "CameraIntrinsics":
        """Build from the JSON document form {x_res, y_res, hfov_deg, cx, cy}."""
        try:
            return cls(
                x_res=int(d["x_res"]),
                y_res=int(d["y_res"]),
                hfov=math.radians(float(d["hfov_deg"])),
                cx=float(d["cx"]),
                cy=float(d["cy"]),
            )
        except KeyError as e:
            raise InvalidIntrinsicsError(f"intrinsics document missing key {e}") from e

    def to_dict(self) -> dict:
        return {
            "x_res": self.x_res,
            "y_res": self.y_res,
            "hfov_deg": math.degrees(self.hfov),
            "cx": self.cx,
            "cy": self.cy,
        }

    @classmethod
    def load(cls, path) -> "CameraIntrinsics":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


@dataclass(frozen=True)
class NoiseEstimate:
    """Per-measurement error breakdown: RMS terms in mm, variance in mm^2."""

    depth_rms: float
    incidence_error: float
    total_variance: float


def focal_length(intr: CameraIntrinsics) -> float:
    """Focal length in pixels from horizontal resolution and field of view."""
    if not 0.0 < intr.hfov < math.pi:
        raise InvalidIntrinsicsError(f"hfov must lie in (0, pi), got {intr.hfov!r}")
    return 0.5 * intr.x_res / math.tan(0.5 * intr.hfov)


def depth_rms_error(d, f: float):
    """RMS depth error in mm for a localised plane at depth d mm.

    Quadratic in d; scalar or ndarray input.
    """
    if f <= 0.0:
        raise InvalidInputError(f"focal length must be positive, got {f!r}")
    d = np.asarray(d, dtype=float)
    if np.any(d < 0.0):
        raise InvalidInputError("depth must be non-negative")
    out = 0.08 * d * d / (55.0 * f)
    return float(out) if out.ndim == 0 else out


def incidence_error(theta: float, theta_max: float = DEFAULT_THETA_MAX) -> float:
    """Incidence-angle error in mm; theta measured from the surface normal.

    Raises GrazingRayError for theta >= theta_max, signalling that the ray
    must be excluded from fusion.
    """
    if theta < 0.0:
        raise InvalidInputError(f"incidence angle must be >= 0, got {theta!r}")
    if theta >= theta_max:
        raise GrazingRayError(
            f"incidence angle {theta:.3f} rad >= clamp {theta_max:.3f} rad")
    return theta / (0.5 * math.pi - theta) ** 2


def measurement_variance(d: float, theta: float, intr: CameraIntrinsics,
                         theta_max: float = DEFAULT_THETA_MAX) -> float:
    """Total measurement variance sigma^2 in mm^2 for one depth sample."""
    return noise_estimate(d, theta, intr, theta_max).total_variance


def noise_estimate(d: float, theta: float, intr: CameraIntrinsics,
                   theta_max: float = DEFAULT_THETA_MAX) -> NoiseEstimate:
    """Full error breakdown for one depth sample; see measurement_variance."""
    e_d = depth_rms_error(d, focal_length(intr))
    e_t = incidence_error(theta, theta_max)
    return NoiseEstimate(depth_rms=e_d, incidence_error=e_t,
                         total_variance=(e_d + e_t) ** 2)


def variance_map(depth, theta, f: float, theta_max: float = DEFAULT_THETA_MAX):
    """Vectorized variance for whole depth images.

    Returns (variance mm^2, accepted mask). Pixels with theta >= theta_max
    or non-positive depth are masked out instead of raising.
    """
    depth = np.asarray(depth, dtype=float)
    theta = np.asarray(theta, dtype=float)
    accepted = (depth > 0.0) & (theta >= 0.0) & (theta < theta_max)
    e_d = 0.08 * depth * depth / (55.0 * f)
    with np.errstate(divide="ignore", invalid="ignore"):
        e_t = theta / (0.5 * math.pi - theta) ** 2
    var = np.where(accepted, (e_d + e_t) ** 2, 0.0)
    return var, accepted
