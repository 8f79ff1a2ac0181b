"""Small rigid-transform and vector helpers used throughout the toolkit.

Conventions: points and distances in millimetres, angles in radians.
Rigid transforms are 4x4 row-major matrices mapping child coordinates
into the parent frame (``p_parent = T[:3, :3] @ p_child + T[:3, 3]``).
"""
from __future__ import annotations

import numpy as np

from .errors import InvalidInputError, UndefinedDirectionError

ROTATION_TOL = 1e-9


def normalized(v, eps: float = 1e-12) -> np.ndarray:
    """Return v scaled to unit length; raise on (near) zero length."""
    v = np.asarray(v, dtype=float)
    n = float(np.linalg.norm(v))
    if n < eps:
        raise UndefinedDirectionError("cannot normalize a zero-length vector")
    return v / n


def is_rotation(R, tol: float = ROTATION_TOL) -> bool:
    """True when R is orthonormal with determinant +1 within tol."""
    R = np.asarray(R, dtype=float)
    if R.shape != (3, 3) or not np.all(np.isfinite(R)):
        return False
    if not np.allclose(R @ R.T, np.eye(3), atol=tol):
        return False
    return abs(float(np.linalg.det(R)) - 1.0) <= tol


def validate_rigid(T, tol: float = ROTATION_TOL, what: str = "transform") -> np.ndarray:
    """Check a 4x4 proper rigid transform; return it as float64."""
    T = np.asarray(T, dtype=float)
    if T.shape != (4, 4):
        raise InvalidInputError(f"{what} must be 4x4, got {T.shape}")
    if not np.all(np.isfinite(T)):
        raise InvalidInputError(f"{what} contains non-finite values")
    if not np.allclose(T[3], [0.0, 0.0, 0.0, 1.0], atol=tol):
        raise InvalidInputError(f"{what} bottom row must be [0,0,0,1]")
    if not is_rotation(T[:3, :3], tol):
        raise InvalidInputError(f"{what} rotation block is not proper orthonormal")
    return T


def rigid(R=None, t=None) -> np.ndarray:
    """Assemble a 4x4 transform from a rotation and/or translation."""
    T = np.eye(4)
    if R is not None:
        T[:3, :3] = np.asarray(R, dtype=float)
    if t is not None:
        T[:3, 3] = np.asarray(t, dtype=float)
    return T


def invert_rigid(T) -> np.ndarray:
    T = np.asarray(T, dtype=float)
    R = T[:3, :3]
    out = np.eye(4)
    out[:3, :3] = R.T
    out[:3, 3] = -R.T @ T[:3, 3]
    return out


def transform_points(T, points) -> np.ndarray:
    """Apply a 4x4 transform to an (N, 3) array (or a single point)."""
    T = np.asarray(T, dtype=float)
    pts = np.asarray(points, dtype=float)
    single = pts.ndim == 1
    pts = np.atleast_2d(pts)
    out = pts @ T[:3, :3].T + T[:3, 3]
    return out[0] if single else out


def rotate_vectors(T_or_R, vectors) -> np.ndarray:
    """Rotate direction vectors (no translation) by a 3x3 or 4x4 transform."""
    M = np.asarray(T_or_R, dtype=float)
    R = M[:3, :3] if M.shape == (4, 4) else M
    vecs = np.asarray(vectors, dtype=float)
    single = vecs.ndim == 1
    vecs = np.atleast_2d(vecs)
    out = vecs @ R.T
    return out[0] if single else out


def rotation_about_axis(axis, angle: float) -> np.ndarray:
    """Rodrigues rotation matrix about a (not necessarily unit) axis."""
    a = normalized(axis)
    K = np.array([[0.0, -a[2], a[1]], [a[2], 0.0, -a[0]], [-a[1], a[0], 0.0]])
    return np.eye(3) + np.sin(angle) * K + (1.0 - np.cos(angle)) * (K @ K)


def look_at(eye, target, up=(0.0, 0.0, 1.0)) -> np.ndarray:
    """Camera pose (world <- camera) looking from eye toward target.

    Camera convention: +z forward along the optical axis, +x right,
    +y down (image row direction).
    """
    eye = np.asarray(eye, dtype=float)
    z = normalized(np.asarray(target, dtype=float) - eye)
    up = np.asarray(up, dtype=float)
    if np.linalg.norm(np.cross(z, up)) < 1e-9:
        up = np.array([1.0, 0.0, 0.0])  # forward parallel to up: pick a stand-in
    x = normalized(np.cross(z, up))
    y = np.cross(z, x)
    T = np.eye(4)
    T[:3, 0], T[:3, 1], T[:3, 2], T[:3, 3] = x, y, z, eye
    return T


def point_segment_distance(points, a, b) -> np.ndarray:
    """Euclidean distance from (N, 3) points to the segment [a, b]."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    ab = b - a
    denom = float(ab @ ab)
    if denom < 1e-18:
        d = np.linalg.norm(pts - a, axis=1)
    else:
        s = np.clip((pts - a) @ ab / denom, 0.0, 1.0)
        d = np.linalg.norm(pts - (a + s[:, None] * ab), axis=1)
    return d if np.asarray(points).ndim > 1 else float(d[0])
