"""Probabilistic signed-distance fusion of masked depth frames.

Each voxel near the measured surface stores a Gaussian belief over the
projective signed distance: positive behind the observed surface (object
interior), negative in front of it (free space). New measurements merge
by the precision-weighted update

    mean' = (mean * var_s + d_s * var) / (var + var_s)
    var'  = var * var_s / (var + var_s)

and the first measurement of a voxel is adopted directly. Distances are
only stored within a truncation band around the surface; the surface is
the zero level set, triangulated with marching cubes over observed
voxels and resampled into a uniform, uncertainty-annotated point cloud.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree
from skimage import measure

from .cloud import SurfaceCloud
from .errors import EmptySurfaceError, InvalidFrameError, InvalidInputError
from .geometry import invert_rigid, transform_points, validate_rigid
from .sensor import DEFAULT_THETA_MAX, CameraIntrinsics, focal_length, variance_map

log = logging.getLogger(__name__)

DEFAULT_VOXEL_SIZE = 3.0          # mm; tabletop objects 50-300 mm
DEFAULT_TRUNCATION_FACTOR = 4.0   # truncation = factor * voxel_size
DEFAULT_NEIGHBORHOOD_K = 16       # k nearest neighbors for surface variation


@dataclass
class DepthFrame:
    """One masked depth observation.

    depth: (H, W) projective z-depth in mm, 0 = invalid pixel.
    mask: (H, W) bool object segmentation.
    pose: 4x4 world <- camera, +z forward / +x right / +y down.
    """

    depth: np.ndarray
    mask: np.ndarray
    pose: np.ndarray
    intrinsics: CameraIntrinsics

    def validate(self) -> "DepthFrame":
        depth = np.asarray(self.depth, dtype=float)
        if depth.ndim != 2:
            raise InvalidFrameError(f"depth must be 2-D, got shape {depth.shape}")
        if not np.all(np.isfinite(depth)) or np.any(depth < 0):
            raise InvalidFrameError("depth must be finite and non-negative")
        mask = np.asarray(self.mask, dtype=bool)
        if mask.shape != depth.shape:
            raise InvalidFrameError(
                f"mask shape {mask.shape} != depth shape {depth.shape}")
        h, w = depth.shape
        if (w, h) != (self.intrinsics.x_res, self.intrinsics.y_res):
            raise InvalidFrameError(
                f"image {w}x{h} does not match intrinsics "
                f"{self.intrinsics.x_res}x{self.intrinsics.y_res}")
        try:
            validate_rigid(self.pose, what="camera pose")
        except InvalidInputError as e:
            raise InvalidFrameError(str(e)) from e
        return self


class FusedVolume:
    """Truncated voxel grid of Gaussian signed-distance beliefs.

    Samples live at lattice points ``origin + index * voxel_size``.
    Unobserved samples carry no distance data. After :meth:`freeze` the
    volume rejects further integration and is safe to share across
    readers.
    """

    def __init__(self, origin, voxel_size: float, dims, truncation: float | None = None):
        if voxel_size <= 0:
            raise InvalidInputError(f"voxel_size must be positive, got {voxel_size!r}")
        self.origin = np.asarray(origin, dtype=float).reshape(3)
        self.voxel_size = float(voxel_size)
        self.dims = tuple(int(d) for d in dims)
        if any(d < 2 for d in self.dims):
            raise InvalidInputError(f"volume dims must be >= 2, got {self.dims}")
        self.truncation = float(truncation) if truncation is not None \
            else DEFAULT_TRUNCATION_FACTOR * self.voxel_size
        if self.truncation <= 0:
            raise InvalidInputError("truncation must be positive")
        self.mean = np.zeros(self.dims)
        self.var = np.zeros(self.dims)
        self.observed = np.zeros(self.dims, dtype=bool)
        self._frozen = False

    @classmethod
    def from_bounds(cls, lower, upper, voxel_size: float = DEFAULT_VOXEL_SIZE,
                    truncation: float | None = None) -> "FusedVolume":
        lower = np.asarray(lower, dtype=float)
        upper = np.asarray(upper, dtype=float)
        if np.any(upper <= lower):
            raise InvalidInputError("upper bounds must exceed lower bounds")
        dims = np.ceil((upper - lower) / voxel_size).astype(int) + 1
        return cls(lower, voxel_size, dims, truncation)

    @property
    def frozen(self) -> bool:
        return self._frozen

    def freeze(self) -> "FusedVolume":
        self._frozen = True
        return self

    def sample_points(self) -> np.ndarray:
        """World coordinates of every lattice sample, shape (#samples, 3)."""
        ii, jj, kk = np.meshgrid(*(np.arange(d) for d in self.dims), indexing="ij")
        idx = np.stack([ii, jj, kk], axis=-1).reshape(-1, 3)
        return self.origin + idx * self.voxel_size


def gaussian_update(prior_mean, prior_var, meas_mean, meas_var):
    """Precision-weighted fusion of two Gaussian beliefs.

    Symmetric in its arguments; the posterior variance is strictly
    smaller than either input variance. Accepts scalars or arrays.
    """
    prior_var = np.asarray(prior_var, dtype=float)
    meas_var = np.asarray(meas_var, dtype=float)
    if np.any(prior_var <= 0) or np.any(meas_var <= 0):
        raise InvalidInputError("variances must be positive")
    prior_mean = np.asarray(prior_mean, dtype=float)
    meas_mean = np.asarray(meas_mean, dtype=float)
    denom = prior_var + meas_var
    mean = (prior_mean * meas_var + meas_mean * prior_var) / denom
    var = prior_var * meas_var / denom
    if mean.ndim == 0:
        return float(mean), float(var)
    return mean, var


@dataclass
class IntegrationStats:
    pixels_used: int = 0
    rays_rejected_grazing: int = 0
    voxels_updated: int = 0
    voxels_first_touch: int = 0


def incidence_angles(frame: DepthFrame) -> np.ndarray:
    """Per-pixel incidence angle from a 3x3 local plane fit.

    Backprojects the valid pixels of each 3x3 neighborhood, fits a plane
    (smallest eigenvector of the covariance) and measures the angle
    between the viewing ray and the plane normal. A fit needs at least
    three valid points; failed fits (border pixels, too few neighbors,
    rank-deficient neighborhoods) fall back to theta = 0.
    """
    depth = np.asarray(frame.depth, dtype=float)
    h, w = depth.shape
    intr = frame.intrinsics
    f = focal_length(intr)
    us, vs = np.meshgrid(np.arange(w, dtype=float), np.arange(h, dtype=float))
    rays = np.stack([(us - intr.cx) / f, (vs - intr.cy) / f, np.ones_like(us)], axis=-1)
    pts = depth[..., None] * rays
    valid = depth > 0

    theta = np.zeros((h, w))
    if h < 3 or w < 3:
        return theta

    # gather 3x3 neighborhoods of interior pixels: (h-2, w-2, 9, 3)
    blocks = np.empty((h - 2, w - 2, 9, 3))
    weights = np.empty((h - 2, w - 2, 9))
    n = 0
    for di in range(3):
        for dj in range(3):
            blocks[:, :, n, :] = pts[di:h - 2 + di, dj:w - 2 + dj]
            weights[:, :, n] = valid[di:h - 2 + di, dj:w - 2 + dj]
            n += 1
    counts = weights.sum(axis=2)
    ok = valid[1:-1, 1:-1] & (counts >= 3)
    if not ok.any():
        return theta

    q = blocks[ok]                                   # (M, 9, 3)
    wgt = weights[ok][:, :, None]
    cnt = counts[ok][:, None]
    centroid = (q * wgt).sum(axis=1, keepdims=True) / cnt[:, :, None]
    q = (q - centroid) * wgt
    cov = np.einsum("mkp,mkq->mpq", q, q) / cnt[:, :, None]
    eigvals, eigvecs = np.linalg.eigh(cov)
    normals = eigvecs[:, :, 0]                       # smallest eigenvalue
    planar = eigvals[:, 1] > 1e-12                   # rank >= 2: a plane exists
    ray_dirs = rays[1:-1, 1:-1][ok]
    ray_dirs = ray_dirs / np.linalg.norm(ray_dirs, axis=1, keepdims=True)
    cos_inc = np.abs(np.einsum("ij,ij->i", normals, ray_dirs))
    inner = np.zeros((h - 2, w - 2))
    inner[ok] = np.where(planar, np.arccos(np.clip(cos_inc, 0.0, 1.0)), 0.0)
    theta[1:-1, 1:-1] = inner
    return theta


def integrate(volume: FusedVolume, frame: DepthFrame,
              theta_max: float = DEFAULT_THETA_MAX) -> IntegrationStats:
    """Fuse one masked depth frame into the volume.

    Every voxel that projects onto a masked, valid, non-grazing pixel and
    lies within the truncation band of the measured surface receives a
    Gaussian update with variance from the sensor model; voxels touched
    for the first time adopt the measurement directly. An invalid frame
    raises before the volume is modified.
    """
    if volume.frozen:
        raise InvalidInputError("cannot integrate into a frozen volume")
    frame.validate()

    depth = np.asarray(frame.depth, dtype=float)
    mask = np.asarray(frame.mask, dtype=bool)
    intr = frame.intrinsics
    f = focal_length(intr)
    theta = incidence_angles(frame)
    var_px, accepted = variance_map(depth, theta, f, theta_max)
    usable = mask & accepted
    stats = IntegrationStats(
        pixels_used=int(np.count_nonzero(usable)),
        rays_rejected_grazing=int(np.count_nonzero(mask & (depth > 0) & ~accepted)),
    )
    if stats.pixels_used == 0:
        return stats

    pts_cam = transform_points(invert_rigid(frame.pose), volume.sample_points())
    z = pts_cam[:, 2]
    in_front = z > 1e-6
    with np.errstate(divide="ignore", invalid="ignore"):
        u = np.where(in_front, f * pts_cam[:, 0] / z + intr.cx, -1.0)
        v = np.where(in_front, f * pts_cam[:, 1] / z + intr.cy, -1.0)
    col = np.rint(u).astype(int)
    row = np.rint(v).astype(int)
    h, w = depth.shape
    in_img = in_front & (col >= 0) & (col < w) & (row >= 0) & (row < h)
    col_c = np.clip(col, 0, w - 1)
    row_c = np.clip(row, 0, h - 1)
    sel = in_img & usable[row_c, col_c]
    if not sel.any():
        return stats

    d_meas = depth[row_c[sel], col_c[sel]]
    # band membership by along-ray distance; the stored value is scaled
    # by the incidence cosine, correcting the along-ray inflation on
    # slanted surfaces (point-to-tangent-plane estimate)
    ray_dist = z[sel] - d_meas              # positive behind the surface
    band = np.abs(ray_dist) <= volume.truncation
    sdf = ray_dist * np.cos(theta[row_c[sel], col_c[sel]])
    if not band.any():
        return stats
    flat = np.flatnonzero(sel)[band]
    sdf = sdf[band]
    var_s = var_px[row_c[flat], col_c[flat]]

    idx = np.unravel_index(flat, volume.dims)
    seen = volume.observed[idx]
    new = ~seen
    if new.any():
        ni = tuple(a[new] for a in idx)
        volume.mean[ni] = sdf[new]
        volume.var[ni] = var_s[new]
        volume.observed[ni] = True
    if seen.any():
        si = tuple(a[seen] for a in idx)
        m, s2 = gaussian_update(volume.mean[si], volume.var[si], sdf[seen], var_s[seen])
        volume.mean[si] = m
        volume.var[si] = s2
    stats.voxels_updated = int(len(flat))
    stats.voxels_first_touch = int(np.count_nonzero(new))
    return stats


def bounds_from_frames(frames, margin: float | None = None):
    """Axis-aligned world bounds of the masked depth pixels of all frames."""
    pts = []
    for frame in frames:
        depth = np.asarray(frame.depth, dtype=float)
        mask = np.asarray(frame.mask, dtype=bool) & (depth > 0)
        if not mask.any():
            continue
        intr = frame.intrinsics
        f = focal_length(intr)
        vs, us = np.nonzero(mask)
        d = depth[vs, us]
        cam = np.stack([(us - intr.cx) / f * d, (vs - intr.cy) / f * d, d], axis=1)
        pts.append(transform_points(frame.pose, cam))
    if not pts:
        raise InvalidInputError("no masked depth pixels in any frame")
    pts = np.vstack(pts)
    if margin is None:
        margin = 3.0 * DEFAULT_TRUNCATION_FACTOR * DEFAULT_VOXEL_SIZE
    return pts.min(axis=0) - margin, pts.max(axis=0) + margin


def surface_variation(positions, k: int = DEFAULT_NEIGHBORHOOD_K):
    """Per-point surface variation u = l0 / (l0 + l1 + l2).

    Eigenvalues are those of the covariance of each point's k nearest
    neighbors (the point included). u is 0 on a plane and 1/3 for
    isotropic scatter. Returns (u, degenerate) where degenerate flags
    neighborhoods of coincident points, assigned u = 0 by convention.
    """
    positions = np.asarray(positions, dtype=float)
    n = len(positions)
    if n < k:
        raise InvalidInputError(f"need at least k={k} points, got {n}")
    tree = cKDTree(positions)
    _, nbr = tree.query(positions, k=k)
    q = positions[nbr]                              # (N, k, 3)
    q = q - q.mean(axis=1, keepdims=True)
    cov = np.einsum("nkp,nkq->npq", q, q) / k
    lam = np.linalg.eigvalsh(cov)
    lam = np.maximum(lam, 0.0)
    total = lam.sum(axis=1)
    degenerate = total < 1e-18
    u = np.where(degenerate, 0.0, lam[:, 0] / np.where(degenerate, 1.0, total))
    return u, degenerate


def _trilinear_gradient(volume: FusedVolume, cells, frac):
    """Gradient of the trilinear interpolant of the mean field.

    cells: (M, 3) integer lower-corner indices, frac: (M, 3) in [0, 1].
    """
    h = volume.voxel_size
    c = {}
    for di in (0, 1):
        for dj in (0, 1):
            for dk in (0, 1):
                c[(di, dj, dk)] = volume.mean[cells[:, 0] + di,
                                              cells[:, 1] + dj,
                                              cells[:, 2] + dk]
    fx, fy, fz = frac[:, 0], frac[:, 1], frac[:, 2]

    def lerp(a, b, t):
        return a + (b - a) * t

    # d/dx: difference of the yz-interpolated faces, etc.
    gx = lerp(lerp(c[1, 0, 0] - c[0, 0, 0], c[1, 0, 1] - c[0, 0, 1], fz),
              lerp(c[1, 1, 0] - c[0, 1, 0], c[1, 1, 1] - c[0, 1, 1], fz), fy) / h
    gy = lerp(lerp(c[0, 1, 0] - c[0, 0, 0], c[0, 1, 1] - c[0, 0, 1], fz),
              lerp(c[1, 1, 0] - c[1, 0, 0], c[1, 1, 1] - c[1, 0, 1], fz), fx) / h
    gz = lerp(lerp(c[0, 0, 1] - c[0, 0, 0], c[0, 1, 1] - c[0, 1, 0], fy),
              lerp(c[1, 0, 1] - c[1, 0, 0], c[1, 1, 1] - c[1, 1, 0], fy), fx) / h
    return np.stack([gx, gy, gz], axis=1)


def _trilinear_value(field, cells, frac):
    acc = np.zeros(len(cells))
    for di in (0, 1):
        for dj in (0, 1):
            for dk in (0, 1):
                wx = frac[:, 0] if di else 1.0 - frac[:, 0]
                wy = frac[:, 1] if dj else 1.0 - frac[:, 1]
                wz = frac[:, 2] if dk else 1.0 - frac[:, 2]
                acc += wx * wy * wz * field[cells[:, 0] + di,
                                            cells[:, 1] + dj,
                                            cells[:, 2] + dk]
    return acc


def _cells_for(volume: FusedVolume, idx_coords):
    """Lower-corner cell index and fraction for points in index coordinates,
    preferring a cell whose 8 corners are all observed."""
    max_cell = np.asarray(volume.dims) - 2
    cells = np.clip(np.floor(idx_coords).astype(int), 0, max_cell)
    frac = idx_coords - cells

    def complete(cs):
        ok = np.ones(len(cs), dtype=bool)
        for di in (0, 1):
            for dj in (0, 1):
                for dk in (0, 1):
                    ok &= volume.observed[cs[:, 0] + di, cs[:, 1] + dj, cs[:, 2] + dk]
        return ok

    good = complete(cells)
    if not good.all():
        # points sitting exactly on a cell face may belong to the neighbor cell
        bad = np.flatnonzero(~good)
        for axis in range(3):
            if not len(bad):
                break
            on_face = np.abs(frac[bad, axis]) < 1e-9
            shift = bad[on_face & (cells[bad, axis] > 0)]
            if len(shift):
                trial = cells[shift].copy()
                trial[:, axis] -= 1
                ok = complete(trial)
                fixed = shift[ok]
                cells[fixed] = trial[ok]
                frac[fixed, axis] = 1.0
                good[fixed] = True
                bad = np.flatnonzero(~good)
    return cells, frac, good


def extract_surface(volume: FusedVolume, target_point_count: int,
                    seed: int = 0, neighborhood_k: int = DEFAULT_NEIGHBORHOOD_K,
                    ) -> SurfaceCloud:
    """Triangulate the zero level set and resample it uniformly.

    Marching cubes runs over observed voxels only. Sampled points carry
    outward normals (oriented toward decreasing signed distance), the
    interpolated surface standard deviation c, and the local surface
    variation u. The resampling is a Poisson-disk style rejection,
    deterministic for a given seed, and returns exactly
    ``target_point_count`` points when the surface area suffices.
    """
    if target_point_count < 1:
        raise InvalidInputError("target_point_count must be >= 1")
    volume.freeze()
    if not volume.observed.any():
        raise EmptySurfaceError("volume has no observed voxels")
    obs_vals = volume.mean[volume.observed]
    if obs_vals.min() >= 0.0 or obs_vals.max() <= 0.0:
        raise EmptySurfaceError("signed-distance field has no zero crossing")

    # Unobserved samples get a positive sentinel; the phantom sheet this
    # creates against free-space voxels is removed below by keeping only
    # triangles whose cell has all eight corners observed.
    field = np.where(volume.observed, volume.mean, 2.0 * volume.truncation)
    try:
        verts, faces, _, _ = measure.marching_cubes(field, level=0.0)
    except (ValueError, RuntimeError) as e:
        raise EmptySurfaceError(f"marching cubes found no surface: {e}") from e
    if len(faces) == 0:
        raise EmptySurfaceError("marching cubes produced no triangles")

    tri = verts[faces]                                   # (F, 3, 3) index coords
    cross = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
    areas_idx = 0.5 * np.linalg.norm(cross, axis=1)
    keep = areas_idx > 1e-12
    bary_all = tri.mean(axis=1)
    cells_all, _, complete = _cells_for(volume, bary_all)
    keep &= complete
    tri, cross, areas_idx = tri[keep], cross[keep], areas_idx[keep]
    if len(tri) == 0:
        raise EmptySurfaceError("no surface triangles in fully observed cells")
    face_n = cross / np.linalg.norm(cross, axis=1, keepdims=True)

    # orient face normals outward: against the in-cell gradient of the mean
    bary = tri.mean(axis=1)
    cells, frac, _ = _cells_for(volume, bary)
    grad = _trilinear_gradient(volume, cells, frac)
    flip = np.einsum("ij,ij->i", face_n, grad) > 0
    face_n[flip] = -face_n[flip]

    h = volume.voxel_size
    areas = areas_idx * h * h
    total_area = float(areas.sum())

    # area-weighted candidate samples, then Poisson-disk thinning
    rng = np.random.default_rng(seed)
    n_cand = max(6 * target_point_count, 4000)
    fidx = rng.choice(len(tri), size=n_cand, p=areas / total_area)
    r1 = np.sqrt(rng.random(n_cand))
    r2 = rng.random(n_cand)
    b0 = 1.0 - r1
    b1 = r1 * (1.0 - r2)
    b2 = r1 * r2
    samples_idx = (b0[:, None] * tri[fidx, 0] + b1[:, None] * tri[fidx, 1]
                   + b2[:, None] * tri[fidx, 2])

    radius = math.sqrt(total_area / (math.pi * target_point_count)) * 0.7
    order = np.arange(n_cand)
    accepted: list[int] = []
    remaining = order
    pts_world = volume.origin + samples_idx * h
    while len(accepted) < target_point_count and len(remaining) and radius > h / 50.0:
        grid: dict[tuple, list[int]] = {}
        for i in accepted:
            key = tuple((pts_world[i] // radius).astype(int))
            grid.setdefault(key, []).append(i)
        rejected = []
        r2lim = radius * radius
        for i in remaining:
            p = pts_world[i]
            key = tuple((p // radius).astype(int))
            close = False
            for dx in (-1, 0, 1):
                for dy in (-1, 0, 1):
                    for dz in (-1, 0, 1):
                        for j in grid.get((key[0] + dx, key[1] + dy, key[2] + dz), ()):
                            d = pts_world[j] - p
                            if d @ d < r2lim:
                                close = True
                                break
                        if close:
                            break
                    if close:
                        break
                if close:
                    break
            if close:
                rejected.append(i)
            else:
                accepted.append(i)
                grid.setdefault(key, []).append(i)
                if len(accepted) >= target_point_count:
                    break
        remaining = np.array(rejected, dtype=int)
        radius *= 0.6
    if len(accepted) < target_point_count:
        log.warning("surface area only supports %d of %d requested points",
                    len(accepted), target_point_count)
    sel = np.array(accepted[:target_point_count], dtype=int)

    positions = pts_world[sel]
    normals = face_n[fidx[sel]]
    pcells, pfrac, _ = _cells_for(volume, samples_idx[sel])
    c = _trilinear_value(np.sqrt(volume.var), pcells, pfrac)
    u, _ = surface_variation(positions, k=min(neighborhood_k, len(positions)))
    return SurfaceCloud(positions=positions, normals=normals,
                        c=np.maximum(c, 0.0), u=u).validate()
