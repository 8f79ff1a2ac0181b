"""Oriented, uncertainty-annotated point clouds and their PLY form.

Clouds are written as binary little-endian PLY with per-vertex float
properties x, y, z, nx, ny, nz, c, u. Optional extras: a float ``score``
property and uchar red/green/blue for heatmaps. Values are stored as
float32; comment lines carry metadata such as the RNG seed so outputs
are reproducible byte for byte.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError

U_MAX = 1.0 / 3.0
_UNIT_TOL = 1e-6

_BASE_PROPS = ("x", "y", "z", "nx", "ny", "nz", "c", "u")


@dataclass
class SurfaceCloud:
    """Extracted surface points with outward normals and uncertainty.

    positions in mm, normals unit length, c = surface-location standard
    deviation in mm, u = surface variation in [0, 1/3].
    """

    positions: np.ndarray
    normals: np.ndarray
    c: np.ndarray
    u: np.ndarray

    def __len__(self) -> int:
        return len(self.positions)

    def validate(self) -> "SurfaceCloud":
        self.positions = np.asarray(self.positions, dtype=float).reshape(-1, 3)
        n = len(self.positions)
        self.normals = np.asarray(self.normals, dtype=float).reshape(-1, 3)
        self.c = np.asarray(self.c, dtype=float).reshape(-1)
        self.u = np.asarray(self.u, dtype=float).reshape(-1)
        if not (len(self.normals) == len(self.c) == len(self.u) == n):
            raise InvalidInputError("cloud field lengths disagree")
        norms = np.linalg.norm(self.normals, axis=1)
        if n and np.any(np.abs(norms - 1.0) > _UNIT_TOL):
            raise InvalidInputError("normals must be unit length")
        if np.any(self.c < 0):
            raise InvalidInputError("uncertainty c must be non-negative")
        if np.any(self.u < -1e-9) or np.any(self.u > U_MAX + 1e-9):
            raise InvalidInputError("surface variation u must lie in [0, 1/3]")
        return self

    def transformed(self, R=None, t=None, scale: float = 1.0) -> "SurfaceCloud":
        """Rigidly transformed and/or uniformly scaled copy.

        Scaling multiplies positions and the metric uncertainty c;
        normals and the dimensionless u are untouched by scale.
        """
        if scale <= 0:
            raise InvalidInputError("scale must be positive")
        R = np.eye(3) if R is None else np.asarray(R, dtype=float)
        t = np.zeros(3) if t is None else np.asarray(t, dtype=float)
        return SurfaceCloud(
            positions=scale * (self.positions @ R.T) + t,
            normals=self.normals @ R.T,
            c=self.c * scale,
            u=self.u.copy(),
        )

    def save_ply(self, path, scores=None, colors=None, comments=()) -> None:
        write_ply(path, self, scores=scores, colors=colors, comments=comments)

    @classmethod
    def load_ply(cls, path) -> "SurfaceCloud":
        cloud, _ = read_ply(path)
        return cloud


def write_ply(path, cloud: SurfaceCloud, scores=None, colors=None, comments=()):
    cloud.validate()
    n = len(cloud)
    names = list(_BASE_PROPS)
    cols = [cloud.positions[:, 0], cloud.positions[:, 1], cloud.positions[:, 2],
            cloud.normals[:, 0], cloud.normals[:, 1], cloud.normals[:, 2],
            cloud.c, cloud.u]
    if scores is not None:
        scores = np.asarray(scores, dtype=float).reshape(-1)
        if len(scores) != n:
            raise InvalidInputError("scores length does not match cloud")
        names.append("score")
        cols.append(scores)
    dtype = [(name, "<f4") for name in names]
    if colors is not None:
        colors = np.asarray(colors, dtype=np.uint8).reshape(-1, 3)
        if len(colors) != n:
            raise InvalidInputError("colors length does not match cloud")
        dtype += [("red", "u1"), ("green", "u1"), ("blue", "u1")]
    data = np.empty(n, dtype=dtype)
    for name, col in zip(names, cols):
        data[name] = col.astype(np.float32)
    if colors is not None:
        data["red"], data["green"], data["blue"] = colors[:, 0], colors[:, 1], colors[:, 2]

    header = ["ply", "format binary_little_endian 1.0"]
    header += [f"comment {line}" for line in comments]
    header.append(f"element vertex {n}")
    header += [f"property float {name}" for name in names]
    if colors is not None:
        header += ["property uchar red", "property uchar green", "property uchar blue"]
    header.append("end_header")
    with open(path, "wb") as fh:
        fh.write(("\n".join(header) + "\n").encode("ascii"))
        fh.write(data.tobytes())


def read_ply(path):
    """Read a binary little-endian PLY with float/uchar vertex properties.

    Returns (SurfaceCloud, extras) where extras maps any non-core
    property name (e.g. 'score', 'red') to its array.
    """
    type_map = {"float": "<f4", "float32": "<f4", "double": "<f8",
                "uchar": "u1", "uint8": "u1", "int": "<i4", "int32": "<i4"}
    with open(path, "rb") as fh:
        if fh.readline().strip() != b"ply":
            raise InvalidInputError(f"{path} is not a PLY file")
        fmt = fh.readline().strip()
        if fmt != b"format binary_little_endian 1.0":
            raise InvalidInputError(f"unsupported PLY format line: {fmt!r}")
        n = None
        props: list[tuple[str, str]] = []
        while True:
            line = fh.readline()
            if not line:
                raise InvalidInputError("unterminated PLY header")
            line = line.strip().decode("ascii")
            if line == "end_header":
                break
            parts = line.split()
            if parts[0] == "comment":
                continue
            if parts[0] == "element":
                if parts[1] == "vertex":
                    n = int(parts[2])
                elif int(parts[2]) != 0:
                    raise InvalidInputError(f"unsupported PLY element {parts[1]!r}")
            elif parts[0] == "property":
                if parts[1] == "list":
                    raise InvalidInputError("list properties are not supported")
                if parts[1] not in type_map:
                    raise InvalidInputError(f"unsupported property type {parts[1]!r}")
                props.append((parts[2], type_map[parts[1]]))
        if n is None:
            raise InvalidInputError("PLY header lacks a vertex element")
        data = np.frombuffer(fh.read(), dtype=[(nm, tp) for nm, tp in props], count=n)

    got = {nm for nm, _ in props}
    missing = [p for p in _BASE_PROPS if p not in got]
    if missing:
        raise InvalidInputError(f"PLY misses required properties: {missing}")
    cloud = SurfaceCloud(
        positions=np.stack([data["x"], data["y"], data["z"]], axis=1).astype(float),
        normals=np.stack([data["nx"], data["ny"], data["nz"]], axis=1).astype(float),
        c=data["c"].astype(float),
        u=np.clip(data["u"].astype(float), 0.0, U_MAX),
    )
    # float32 storage can leave normals a hair off unit length
    norms = np.linalg.norm(cloud.normals, axis=1)
    cloud.normals /= np.where(norms > 0, norms, 1.0)[:, None]
    cloud.validate()
    extras = {nm: np.array(data[nm]) for nm, _ in props if nm not in _BASE_PROPS}
    return cloud, extras
