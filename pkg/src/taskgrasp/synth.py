"""Synthetic test scenes: analytic solids, depth rendering, ground truth.

Solids are built from convex primitives (sphere, box, capped cylinder)
combined as CSG union-minus-holes. Ray casting is exact interval
arithmetic on the primitives, so noise-free depth images are accurate to
machine precision. Composite tool shapes (hammer, screwdriver, cup,
brush, dustpan) come with ground-truth keypoint skeletons and named
surface regions used by tests and exemplar annotations.

Object frames follow a common convention: elongated tools lie along +x,
the cup stands along +z, and the default scene pose rests the object on
the z=0 table plane.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import skeleton as sk
from .errors import DegenerateViewError, InvalidInputError, UnsupportedShapeError
from .fusion import DepthFrame
from .geometry import invert_rigid, look_at, rigid, rotate_vectors, transform_points, validate_rigid
from .sensor import CameraIntrinsics, depth_rms_error, focal_length

# Incidence clamp used only when injecting synthetic noise; keeps the
# injected sigma finite on grazing pixels.
_NOISE_THETA_CLAMP = 1.25


# ---------------------------------------------------------------------------
# convex primitives: ray intervals + signed distance + outward normals
# ---------------------------------------------------------------------------

class Sphere:
    def __init__(self, center, radius):
        self.center = np.asarray(center, dtype=float)
        self.radius = float(radius)
        if self.radius <= 0:
            raise InvalidInputError("sphere radius must be positive")

    def intervals(self, o, d):
        oc = o - self.center
        a = np.einsum("ij,ij->i", d, d)
        b = 2.0 * np.einsum("ij,ij->i", oc, d)
        c = np.einsum("ij,ij->i", oc, oc) - self.radius**2
        disc = b * b - 4.0 * a * c
        hit = disc >= 0.0
        sq = np.sqrt(np.where(hit, disc, 0.0))
        t0 = np.where(hit, (-b - sq) / (2.0 * a), np.inf)
        t1 = np.where(hit, (-b + sq) / (2.0 * a), -np.inf)
        return t0, t1

    def sdf(self, p):
        return np.linalg.norm(p - self.center, axis=-1) - self.radius

    def normal(self, p):
        return (p - self.center) / self.radius


class Box:
    """Axis-aligned box in the object frame."""

    def __init__(self, center, half_extents):
        self.center = np.asarray(center, dtype=float)
        self.half = np.asarray(half_extents, dtype=float)
        if np.any(self.half <= 0):
            raise InvalidInputError("box half extents must be positive")

    def intervals(self, o, d):
        oc = o - self.center
        with np.errstate(divide="ignore", invalid="ignore"):
            ta = (-self.half - oc) / d
            tb = (self.half - oc) / d
        lo = np.minimum(ta, tb)
        hi = np.maximum(ta, tb)
        # Rays parallel to a slab: inside gives (-inf, inf), outside misses.
        par = np.abs(d) < 1e-15
        inside = np.abs(oc) <= self.half
        lo = np.where(par, np.where(inside, -np.inf, np.inf), lo)
        hi = np.where(par, np.where(inside, np.inf, -np.inf), hi)
        t0 = lo.max(axis=1)
        t1 = hi.min(axis=1)
        miss = t0 > t1
        return np.where(miss, np.inf, t0), np.where(miss, -np.inf, t1)

    def sdf(self, p):
        q = np.abs(p - self.center) - self.half
        outside = np.linalg.norm(np.maximum(q, 0.0), axis=-1)
        inside = np.minimum(q.max(axis=-1), 0.0)
        return outside + inside

    def normal(self, p):
        q = p - self.center
        slack = self.half - np.abs(q)
        axis = np.argmin(slack, axis=-1)
        n = np.zeros_like(q)
        rows = np.arange(len(np.atleast_2d(q)))
        q2 = np.atleast_2d(q)
        n2 = np.atleast_2d(n)
        n2[rows, axis] = np.sign(q2[rows, axis])
        return n2.reshape(np.shape(p))


class Cylinder:
    """Finite capped cylinder from base along a unit axis."""

    def __init__(self, base, axis, length, radius):
        self.base = np.asarray(base, dtype=float)
        self.axis = np.asarray(axis, dtype=float) / np.linalg.norm(axis)
        self.length = float(length)
        self.radius = float(radius)
        if self.length <= 0 or self.radius <= 0:
            raise InvalidInputError("cylinder length and radius must be positive")

    def intervals(self, o, d):
        oc = o - self.base
        oz = oc @ self.axis
        dz = d @ self.axis
        orad = oc - oz[:, None] * self.axis
        drad = d - dz[:, None] * self.axis
        a = np.einsum("ij,ij->i", drad, drad)
        b = 2.0 * np.einsum("ij,ij->i", orad, drad)
        c = np.einsum("ij,ij->i", orad, orad) - self.radius**2

        # infinite-cylinder interval
        disc = b * b - 4.0 * a * c
        quad = a > 1e-15
        sq = np.sqrt(np.where(disc >= 0, disc, 0.0))
        with np.errstate(divide="ignore", invalid="ignore"):
            s0 = (-b - sq) / (2.0 * a)
            s1 = (-b + sq) / (2.0 * a)
        hit_side = quad & (disc >= 0)
        inside_inf = c <= 0.0
        s0 = np.where(hit_side, s0, np.where(inside_inf, -np.inf, np.inf))
        s1 = np.where(hit_side, s1, np.where(inside_inf, np.inf, -np.inf))

        # axial slab interval
        with np.errstate(divide="ignore", invalid="ignore"):
            u0 = (0.0 - oz) / dz
            u1 = (self.length - oz) / dz
        lo = np.minimum(u0, u1)
        hi = np.maximum(u0, u1)
        par = np.abs(dz) < 1e-15
        in_slab = (oz >= 0.0) & (oz <= self.length)
        lo = np.where(par, np.where(in_slab, -np.inf, np.inf), lo)
        hi = np.where(par, np.where(in_slab, np.inf, -np.inf), hi)

        t0 = np.maximum(s0, lo)
        t1 = np.minimum(s1, hi)
        miss = t0 > t1
        return np.where(miss, np.inf, t0), np.where(miss, -np.inf, t1)

    def sdf(self, p):
        oc = p - self.base
        z = oc @ self.axis
        r = np.linalg.norm(oc - z[..., None] * self.axis, axis=-1)
        dr = r - self.radius
        dz = np.maximum(-z, z - self.length)
        outside = np.sqrt(np.maximum(dr, 0.0) ** 2 + np.maximum(dz, 0.0) ** 2)
        inside = np.minimum(np.maximum(dr, dz), 0.0)
        return outside + inside

    def normal(self, p):
        p2 = np.atleast_2d(p)
        oc = p2 - self.base
        z = oc @ self.axis
        radial = oc - z[:, None] * self.axis
        rn = np.linalg.norm(radial, axis=1)
        side = np.divide(radial, np.where(rn > 1e-12, rn, 1.0)[:, None])
        n = np.where((z < 1e-9)[:, None], -self.axis,
                     np.where((z > self.length - 1e-9)[:, None], self.axis, side))
        return n.reshape(np.shape(p))


class Solid:
    """CSG solid: union of part primitives minus hole primitives."""

    def __init__(self, parts, holes=()):
        self.parts = list(parts)
        self.holes = list(holes)

    def sdf(self, p):
        d = np.min([prim.sdf(p) for prim in self.parts], axis=0)
        for hole in self.holes:
            d = np.maximum(d, -hole.sdf(p))
        return d

    def first_hit(self, origins, dirs, t_min=1e-9):
        """First boundary crossing per ray, assuming origins outside.

        Returns (t, hit mask, outward normals). t is in units of |dirs|,
        so unnormalized direction vectors give projective depth directly.
        """
        n = len(origins)
        part_iv = [prim.intervals(origins, dirs) for prim in self.parts]
        hole_iv = [prim.intervals(origins, dirs) for prim in self.holes]

        def in_part(t):
            ok = np.zeros(n, dtype=bool)
            for t0, t1 in part_iv:
                ok |= (t >= t0) & (t <= t1)
            return ok

        def in_hole_open(t, skip=None):
            ok = np.zeros(n, dtype=bool)
            for j, (h0, h1) in enumerate(hole_iv):
                if j == skip:
                    continue
                ok |= (t > h0) & (t < h1)
            return ok

        best_t = np.full(n, np.inf)
        best_prim = np.full(n, -1, dtype=int)
        best_neg = np.zeros(n, dtype=bool)  # True when the hit is a carved face

        for i, (t0, t1) in enumerate(part_iv):
            valid = (t0 <= t1) & (t0 >= t_min) & ~in_hole_open(t0)
            better = valid & (t0 < best_t)
            best_t = np.where(better, t0, best_t)
            best_prim = np.where(better, i, best_prim)
            best_neg = np.where(better, False, best_neg)

        for j, (h0, h1) in enumerate(hole_iv):
            t = h1
            valid = (h0 <= h1) & (t >= t_min) & in_part(t) & ~in_hole_open(t, skip=j)
            better = valid & (t < best_t)
            best_t = np.where(better, t, best_t)
            best_prim = np.where(better, j, best_prim)
            best_neg = np.where(better, True, best_neg)

        hit = np.isfinite(best_t)
        normals = np.zeros((n, 3))
        pts = origins + np.where(hit, best_t, 0.0)[:, None] * dirs
        for i, prim in enumerate(self.parts):
            sel = hit & (best_prim == i) & ~best_neg
            if sel.any():
                normals[sel] = prim.normal(pts[sel])
        for j, prim in enumerate(self.holes):
            sel = hit & (best_prim == j) & best_neg
            if sel.any():
                normals[sel] = -prim.normal(pts[sel])
        return best_t, hit, normals


# ---------------------------------------------------------------------------
# shape catalogue
# ---------------------------------------------------------------------------

@dataclass
class ShapeModel:
    """A parametric solid plus its skeleton and named surface regions."""

    name: str
    solid: Solid
    dims: dict
    rest_height: float                      # origin-to-table drop for the rest pose
    keypoints: np.ndarray | None = None     # (K, 3) object frame
    skeleton_spec: "sk.SkeletonSpec | None" = None
    # per-keypoint (y, z) axes in the object frame, used where the skeleton
    # frame rule is the eigenvector fallback (axisymmetric shapes)
    fallback_axes: dict = field(default_factory=dict)
    regions: dict = field(default_factory=dict)

    def region_mask(self, name, points_object):
        if name not in self.regions:
            raise UnsupportedShapeError(f"shape {self.name!r} has no region {name!r}")
        return self.regions[name](np.atleast_2d(np.asarray(points_object, dtype=float)))


def _screwdriver(handle_radius=15.0, handle_length=110.0,
                 shaft_radius=4.0, shaft_length=140.0):
    handle = Cylinder((0, 0, 0), (1, 0, 0), handle_length, handle_radius)
    shaft = Cylinder((handle_length, 0, 0), (1, 0, 0), shaft_length, shaft_radius)
    tip_x = handle_length + shaft_length
    spec = sk.SkeletonSpec(
        name="screwdriver",
        keypoints=["handle_start", "handle_end", "tip"],
        links=[(0, 1), (1, 2)],
        frame_rules=[sk.FrameRule(reference=0, eigen_fallback=True),
                     sk.FrameRule(reference=1, eigen_fallback=True)],
    )
    regions = {
        "handle": lambda p: (p[:, 0] >= 0) & (p[:, 0] <= handle_length),
        "shaft": lambda p: (p[:, 0] > handle_length) & (p[:, 0] <= tip_x),
        "tip": lambda p: p[:, 0] > tip_x - 0.35 * shaft_length,
    }
    return ShapeModel(
        name="screwdriver",
        solid=Solid([handle, shaft]),
        dims={"handle_radius": handle_radius, "handle_length": handle_length,
              "shaft_radius": shaft_radius, "shaft_length": shaft_length},
        rest_height=handle_radius,
        keypoints=np.array([[0, 0, 0], [handle_length, 0, 0], [tip_x, 0, 0]], dtype=float),
        skeleton_spec=spec,
        fallback_axes={0: ((0, 1, 0), (0, 0, 1)), 1: ((0, 1, 0), (0, 0, 1)),
                       2: ((0, 1, 0), (0, 0, 1))},
        regions=regions,
    )


def _hammer(handle_radius=12.0, handle_length=200.0,
            head_radius=18.0, head_length=90.0):
    handle = Cylinder((0, 0, 0), (1, 0, 0), handle_length, handle_radius)
    head = Cylinder((handle_length, -head_length / 2, 0), (0, 1, 0),
                    head_length, head_radius)
    spec = sk.SkeletonSpec(
        name="hammer",
        keypoints=["handle_end", "head_junction", "head_tip"],
        links=[(0, 1), (1, 2)],
        frame_rules=[sk.FrameRule(reference=0, third=2),
                     sk.FrameRule(reference=1, third=0)],
    )
    regions = {
        "handle": lambda p: p[:, 0] <= handle_length - head_radius,
        "head": lambda p: p[:, 0] > handle_length - head_radius,
    }
    return ShapeModel(
        name="hammer",
        solid=Solid([handle, head]),
        dims={"handle_radius": handle_radius, "handle_length": handle_length,
              "head_radius": head_radius, "head_length": head_length},
        rest_height=head_radius,
        keypoints=np.array([[0, 0, 0], [handle_length, 0, 0],
                            [handle_length, head_length / 2, 0]], dtype=float),
        skeleton_spec=spec,
        regions=regions,
    )


def _cup(radius=40.0, height=100.0, wall=4.0, handle_width=16.0):
    outer = Cylinder((0, 0, 0), (0, 0, 1), height, radius)
    bore = Cylinder((0, 0, wall), (0, 0, 1), height, radius - wall)
    handle = Box((radius + handle_width, 0, height / 2),
                 (handle_width, wall, height * 0.3))
    spec = sk.SkeletonSpec(
        name="cup",
        keypoints=["top", "bottom", "handle"],
        links=[(0, 1), (2, 0)],
        frame_rules=[sk.FrameRule(reference=0, third=2),
                     sk.FrameRule(reference=2, third=1)],
    )
    handle_x = radius + handle_width
    regions = {
        "handle": lambda p: p[:, 0] > radius + 0.5 * wall,
        "body": lambda p: p[:, 0] <= radius + 0.5 * wall,
        "rim": lambda p: p[:, 2] > height - 3 * wall,
    }
    return ShapeModel(
        name="cup",
        solid=Solid([outer, handle], holes=[bore]),
        dims={"radius": radius, "height": height, "wall": wall,
              "handle_width": handle_width},
        rest_height=0.0,
        keypoints=np.array([[0, 0, height], [0, 0, 0],
                            [handle_x + handle_width, 0, height / 2]], dtype=float),
        skeleton_spec=spec,
        regions=regions,
    )


def _brush(handle_radius=12.0, handle_length=120.0,
           head_length=60.0, head_width=40.0, head_height=25.0):
    handle = Cylinder((0, 0, 0), (1, 0, 0), handle_length, handle_radius)
    head = Box((handle_length + head_length / 2, 0, 0),
               (head_length / 2, head_width / 2, head_height / 2))
    spec = sk.SkeletonSpec(
        name="brush",
        keypoints=["handle_start", "handle_end"],
        links=[(0, 1)],
        frame_rules=[sk.FrameRule(reference=0, eigen_fallback=True)],
    )
    regions = {
        "handle": lambda p: p[:, 0] <= handle_length,
        "head": lambda p: p[:, 0] > handle_length,
    }
    return ShapeModel(
        name="brush",
        solid=Solid([handle, head]),
        dims={"handle_radius": handle_radius, "handle_length": handle_length,
              "head_length": head_length, "head_width": head_width,
              "head_height": head_height},
        rest_height=max(handle_radius, head_height / 2),
        keypoints=np.array([[0, 0, 0], [handle_length, 0, 0]], dtype=float),
        skeleton_spec=spec,
        fallback_axes={0: ((0, 1, 0), (0, 0, 1)), 1: ((0, 1, 0), (0, 0, 1))},
        regions=regions,
    )


def _dustpan(handle_radius=10.0, handle_length=150.0,
             pan_length=120.0, pan_width=150.0, pan_height=30.0):
    handle = Cylinder((0, 0, 0), (1, 0, 0), handle_length, handle_radius)
    pan = Box((handle_length + pan_length / 2, 0, 0),
              (pan_length / 2, pan_width / 2, pan_height / 2))
    front_x = handle_length + pan_length
    spec = sk.SkeletonSpec(
        name="dustpan",
        keypoints=["handle_end", "pan_junction", "pan_front"],
        links=[(0, 1), (1, 2)],
        frame_rules=[sk.FrameRule(reference=0, third=2),
                     sk.FrameRule(reference=1, third=0)],
    )
    regions = {
        "handle": lambda p: p[:, 0] <= handle_length,
        "pan": lambda p: p[:, 0] > handle_length,
    }
    return ShapeModel(
        name="dustpan",
        solid=Solid([handle, pan]),
        dims={"handle_radius": handle_radius, "handle_length": handle_length,
              "pan_length": pan_length, "pan_width": pan_width,
              "pan_height": pan_height},
        rest_height=pan_height / 2,
        keypoints=np.array([[0, 0, 0], [handle_length, 0, 0],
                            [front_x, 0, pan_height / 2]], dtype=float),
        skeleton_spec=spec,
        regions=regions,
    )


def _sphere(radius=50.0):
    return ShapeModel(
        name="sphere",
        solid=Solid([Sphere((0, 0, 0), radius)]),
        dims={"radius": radius},
        rest_height=radius,
    )


def _box(x_len=60.0, y_len=60.0, z_len=60.0):
    half = np.array([x_len, y_len, z_len]) / 2.0
    spec = sk.SkeletonSpec(
        name="box",
        keypoints=["end_a", "end_b"],
        links=[(0, 1)],
        frame_rules=[sk.FrameRule(reference=0, eigen_fallback=True)],
    )
    return ShapeModel(
        name="box",
        solid=Solid([Box((0, 0, 0), half)]),
        dims={"x_len": x_len, "y_len": y_len, "z_len": z_len},
        rest_height=z_len / 2,
        keypoints=np.array([[-half[0], 0, 0], [half[0], 0, 0]], dtype=float),
        skeleton_spec=spec,
        fallback_axes={0: ((0, 1, 0), (0, 0, 1)), 1: ((0, 1, 0), (0, 0, 1))},
    )


def _cylinder(radius=25.0, length=120.0):
    spec = sk.SkeletonSpec(
        name="cylinder",
        keypoints=["end_a", "end_b"],
        links=[(0, 1)],
        frame_rules=[sk.FrameRule(reference=0, eigen_fallback=True)],
    )
    return ShapeModel(
        name="cylinder",
        solid=Solid([Cylinder((-length / 2, 0, 0), (1, 0, 0), length, radius)]),
        dims={"radius": radius, "length": length},
        rest_height=radius,
        keypoints=np.array([[-length / 2, 0, 0], [length / 2, 0, 0]], dtype=float),
        skeleton_spec=spec,
        fallback_axes={0: ((0, 1, 0), (0, 0, 1)), 1: ((0, 1, 0), (0, 0, 1))},
    )


_SHAPE_BUILDERS = {
    "sphere": _sphere,
    "box": _box,
    "cylinder": _cylinder,
    "hammer": _hammer,
    "screwdriver": _screwdriver,
    "cup": _cup,
    "brush": _brush,
    "dustpan": _dustpan,
}


def make_shape(name: str, **dims) -> ShapeModel:
    try:
        builder = _SHAPE_BUILDERS[name]
    except KeyError:
        raise UnsupportedShapeError(
            f"unknown shape {name!r}; known: {sorted(_SHAPE_BUILDERS)}") from None
    return builder(**dims)


class MeshShape:
    """Triangle soup loaded from an OBJ file; rendered with exact
    ray-triangle intersection. Has no skeleton definition."""

    def __init__(self, vertices, faces):
        self.vertices = np.asarray(vertices, dtype=float)
        self.faces = np.asarray(faces, dtype=int)
        if self.faces.ndim != 2 or self.faces.shape[1] != 3:
            raise InvalidInputError("mesh faces must be (F, 3) vertex indices")

    @classmethod
    def load_obj(cls, path):
        verts, faces = [], []
        with open(path) as fh:
            for line in fh:
                parts = line.split()
                if not parts:
                    continue
                if parts[0] == "v":
                    verts.append([float(x) for x in parts[1:4]])
                elif parts[0] == "f":
                    idx = [int(tok.split("/")[0]) - 1 for tok in parts[1:]]
                    for k in range(1, len(idx) - 1):  # fan-triangulate polygons
                        faces.append([idx[0], idx[k], idx[k + 1]])
        if not verts or not faces:
            raise InvalidInputError(f"OBJ file {path} has no geometry")
        return cls(np.array(verts), np.array(faces))

    def first_hit(self, origins, dirs, t_min=1e-9):
        v0 = self.vertices[self.faces[:, 0]]
        e1 = self.vertices[self.faces[:, 1]] - v0
        e2 = self.vertices[self.faces[:, 2]] - v0
        n = len(origins)
        best_t = np.full(n, np.inf)
        best_f = np.full(n, -1, dtype=int)
        chunk = max(1, int(2e7) // max(len(self.faces), 1))
        for lo in range(0, n, chunk):
            hi = lo + chunk
            o = origins[lo:hi, None, :]
            d = dirs[lo:hi, None, :]
            pvec = np.cross(d, e2[None, :, :])
            det = np.einsum("rfk,fk->rf", pvec, e1)
            with np.errstate(divide="ignore", invalid="ignore"):
                inv = 1.0 / det
                tvec = o - v0[None, :, :]
                u = np.einsum("rfk,rfk->rf", tvec, pvec) * inv
                qvec = np.cross(tvec, e1[None, :, :])
                v = np.einsum("rfk,rfk->rf", d, qvec) * inv
                t = np.einsum("fk,rfk->rf", e2, qvec) * inv
            ok = (np.abs(det) > 1e-12) & (u >= 0) & (v >= 0) & (u + v <= 1) & (t >= t_min)
            t = np.where(ok, t, np.inf)
            fmin = np.argmin(t, axis=1)
            tmin = t[np.arange(len(t)), fmin]
            better = tmin < best_t[lo:hi]
            best_t[lo:hi] = np.where(better, tmin, best_t[lo:hi])
            best_f[lo:hi] = np.where(better, fmin, best_f[lo:hi])
        hit = np.isfinite(best_t)
        normals = np.zeros((n, 3))
        if hit.any():
            fidx = best_f[hit]
            fn = np.cross(e1[fidx], e2[fidx])
            fn /= np.linalg.norm(fn, axis=1, keepdims=True)
            # orient against the ray so normals face the camera
            flip = np.einsum("ij,ij->i", fn, dirs[hit]) > 0
            fn[flip] = -fn[flip]
            normals[hit] = fn
        return best_t, hit, normals

    def sdf(self, p):
        # crude bound, used only for the camera-inside check
        d = np.linalg.norm(np.atleast_2d(p)[:, None, :] - self.vertices[None, :, :], axis=2)
        return d.min(axis=1)


# ---------------------------------------------------------------------------
# scenes and rendering
# ---------------------------------------------------------------------------

@dataclass
class SceneSpec:
    """Parametric scene: one object, a camera ring, optional sensor noise."""

    shape: str = "sphere"
    dims: dict = field(default_factory=dict)
    pose: np.ndarray | None = None          # world <- object; None = rest on table
    camera_count: int = 4
    camera_radius: float = 450.0            # mm from look-at target
    camera_elevation: float = 0.6           # rad above the horizontal
    image_width: int = 640
    image_height: int = 480
    hfov_deg: float = 65.0
    noise: bool = False
    noise_scale: float = 1.0
    seed: int = 0
    table_normal: tuple = (0.0, 0.0, 1.0)
    table_offset: float = 0.0
    obj_path: str | None = None             # OBJ mesh instead of a parametric shape

    def __post_init__(self):
        if self.camera_count < 1:
            raise InvalidInputError("camera_count must be >= 1")
        if any(v <= 0 for v in self.dims.values() if isinstance(v, (int, float))):
            raise InvalidInputError("shape dimensions must be positive")

    def shape_model(self) -> ShapeModel:
        return make_shape(self.shape, **self.dims)

    def object_pose(self) -> np.ndarray:
        if self.pose is not None:
            return validate_rigid(self.pose, what="object pose")
        model = self.shape_model() if self.obj_path is None else None
        lift = model.rest_height if model is not None else 0.0
        return rigid(t=(0.0, 0.0, lift + self.table_offset))

    def solid(self):
        if self.obj_path is not None:
            return MeshShape.load_obj(self.obj_path)
        return self.shape_model().solid

    def look_target(self) -> np.ndarray:
        if self.obj_path is not None:
            mesh = MeshShape.load_obj(self.obj_path)
            center = 0.5 * (mesh.vertices.min(axis=0) + mesh.vertices.max(axis=0))
        else:
            model = self.shape_model()
            kp = model.keypoints
            if kp is not None and len(kp) > 0:
                center = 0.5 * (kp.min(axis=0) + kp.max(axis=0))
            else:
                center = np.zeros(3)
        return transform_points(self.object_pose(), center)

    def camera_pose(self, view_index: int) -> np.ndarray:
        if not 0 <= view_index < self.camera_count:
            raise InvalidInputError(
                f"view index {view_index} out of range 0..{self.camera_count - 1}")
        az = 2.0 * math.pi * view_index / self.camera_count
        target = self.look_target()
        offset = self.camera_radius * np.array([
            math.cos(az) * math.cos(self.camera_elevation),
            math.sin(az) * math.cos(self.camera_elevation),
            math.sin(self.camera_elevation),
        ])
        return look_at(target + offset, target)

    def intrinsics(self) -> CameraIntrinsics:
        return CameraIntrinsics(
            x_res=self.image_width, y_res=self.image_height,
            hfov=math.radians(self.hfov_deg),
            cx=self.image_width / 2.0, cy=self.image_height / 2.0)

    def table_plane(self):
        return np.asarray(self.table_normal, dtype=float), float(self.table_offset)

    def to_dict(self) -> dict:
        d = {
            "shape": self.shape, "dims": dict(self.dims),
            "camera_count": self.camera_count,
            "camera_radius": self.camera_radius,
            "camera_elevation_deg": math.degrees(self.camera_elevation),
            "image_width": self.image_width, "image_height": self.image_height,
            "hfov_deg": self.hfov_deg,
            "noise": self.noise, "noise_scale": self.noise_scale,
            "seed": self.seed,
            "table_normal": list(self.table_normal),
            "table_offset": self.table_offset,
        }
        if self.pose is not None:
            d["pose"] = np.asarray(self.pose).reshape(-1).tolist()
        if self.obj_path is not None:
            d["obj_path"] = self.obj_path
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SceneSpec":
        kw = dict(d)
        if "camera_elevation_deg" in kw:
            kw["camera_elevation"] = math.radians(kw.pop("camera_elevation_deg"))
        if "pose" in kw and kw["pose"] is not None:
            kw["pose"] = np.asarray(kw["pose"], dtype=float).reshape(4, 4)
        if "table_normal" in kw:
            kw["table_normal"] = tuple(kw["table_normal"])
        return cls(**kw)


def render_depth(scene: SceneSpec, view_index: int) -> DepthFrame:
    """Render one noise-free or noisy depth frame of the scene.

    Depth is the projective z-depth in mm; pixels off the object carry
    depth 0 and a false mask bit. Deterministic given scene.seed.
    """
    solid = scene.solid()
    T_wo = scene.object_pose()
    T_ow = invert_rigid(T_wo)
    cam = scene.camera_pose(view_index)
    intr = scene.intrinsics()
    f = focal_length(intr)

    cam_pos_obj = transform_points(T_ow, cam[:3, 3])
    if np.min(solid.sdf(cam_pos_obj[None, :])) <= 0.0:
        raise DegenerateViewError(f"camera {view_index} lies inside the object")

    w, h = scene.image_width, scene.image_height
    us, vs = np.meshgrid(np.arange(w, dtype=float), np.arange(h, dtype=float))
    dirs_cam = np.stack([(us - intr.cx) / f, (vs - intr.cy) / f,
                         np.ones_like(us)], axis=-1).reshape(-1, 3)
    dirs_world = rotate_vectors(cam, dirs_cam)
    dirs_obj = rotate_vectors(T_ow, dirs_world)
    origins = np.broadcast_to(cam_pos_obj, dirs_obj.shape).copy()

    # dir z-component is 1 in the camera frame, so the hit parameter t
    # is the projective depth directly
    t, hit, normals_obj = solid.first_hit(origins, dirs_obj)
    depth = np.where(hit, t, 0.0)

    if scene.noise:
        ray_unit = dirs_obj / np.linalg.norm(dirs_obj, axis=1, keepdims=True)
        cos_inc = np.abs(np.einsum("ij,ij->i", ray_unit, normals_obj))
        theta = np.arccos(np.clip(cos_inc, 0.0, 1.0))
        theta = np.minimum(theta, _NOISE_THETA_CLAMP)
        e_d = depth_rms_error(np.where(hit, depth, 0.0), f)
        e_t = theta / (0.5 * math.pi - theta) ** 2
        sigma = (e_d + e_t) * scene.noise_scale
        rng = np.random.default_rng(np.random.SeedSequence([scene.seed, view_index]))
        noise = rng.normal(0.0, 1.0, size=depth.shape) * sigma
        depth = np.where(hit, np.maximum(depth + noise, 0.1), 0.0)

    return DepthFrame(
        depth=depth.reshape(h, w),
        mask=hit.reshape(h, w),
        pose=cam,
        intrinsics=intr,
    )


def render_all(scene: SceneSpec):
    return [render_depth(scene, i) for i in range(scene.camera_count)]


def ground_truth_skeleton(scene: SceneSpec) -> "sk.Skeleton":
    """Exact skeleton instance from the parametric shape definition.

    Keypoints come from the shape parameters; frames use the skeleton
    frame rules, with the shape's declared object-frame axes standing in
    for the point-cloud eigenvector fallback on axisymmetric shapes.
    """
    if scene.obj_path is not None:
        raise UnsupportedShapeError("mesh objects have no skeleton definition")
    model = scene.shape_model()
    if model.skeleton_spec is None or model.keypoints is None:
        raise UnsupportedShapeError(f"shape {model.name!r} has no skeleton definition")
    T = scene.object_pose()
    positions = transform_points(T, model.keypoints)
    spec = model.skeleton_spec

    frames = np.full((len(spec.keypoints), 3, 3), np.nan)
    for li, (i, j) in enumerate(spec.links):
        rule = spec.frame_rules[li]
        for kp, other in ((i, j), (j, i)):
            if np.all(np.isfinite(frames[kp])):
                continue  # first link containing the keypoint wins
            x = positions[other] - positions[kp]
            x = x / np.linalg.norm(x)
            if rule.eigen_fallback or rule.third is None:
                y_obj, z_obj = model.fallback_axes[kp]
                z = rotate_vectors(T, np.asarray(z_obj, dtype=float))
                z = z - (z @ x) * x
                z /= np.linalg.norm(z)
                if z[2] < 0:
                    z = -z
            else:
                n = np.cross(positions[spec.links[li][1]] - positions[spec.links[li][0]],
                             positions[rule.third] - positions[spec.links[li][0]])
                z = n / np.linalg.norm(n)
            y = np.cross(z, x)
            frames[kp] = np.stack([x, y, z])
    return sk.Skeleton.assemble(spec, positions, frames)
