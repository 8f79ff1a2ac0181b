"""Shared synthetic-scene fixtures.

Fused scenes are expensive, so session-scoped assets are built once:
a sphere (fusion accuracy), a 60 mm cube (planner checks), and a
screwdriver with two trained task models (steering and transfer).
"""
from __future__ import annotations

import numpy as np
import pytest

import taskgrasp as tg
from taskgrasp.geometry import invert_rigid, transform_points
from taskgrasp.task_model import ExemplarAnnotation

SPHERE_CENTER = np.array([0.0, 0.0, 50.0])


def fuse_scene(scene, target_points, seed=0, voxel_size=3.0):
    """Render all views, integrate them and extract a cloud."""
    frames = [tg.render_depth(scene, i) for i in range(scene.camera_count)]
    lo, hi = tg.bounds_from_frames(frames)
    volume = tg.FusedVolume.from_bounds(lo, hi, voxel_size=voxel_size)
    for frame in frames:
        tg.integrate(volume, frame)
    cloud = tg.extract_surface(volume, target_points, seed=seed)
    return frames, volume, cloud


def object_frame_points(scene, cloud):
    return transform_points(invert_rigid(scene.object_pose()), cloud.positions)


def region_annotation(scene, cloud, skeleton, task, mask, limit=400):
    """Exemplar annotation from a region mask, subsampled for speed."""
    idx = np.flatnonzero(mask)
    if len(idx) > limit:
        idx = idx[:: max(1, len(idx) // limit)][:limit]
    return ExemplarAnnotation(
        object_class=skeleton.spec.name, task=task, skeleton=skeleton,
        grasp_points=cloud.positions[idx])


@pytest.fixture(scope="session")
def sphere_assets():
    scene = tg.SceneSpec(shape="sphere", dims={"radius": 50.0})
    frames, volume, cloud = fuse_scene(scene, 2000)
    return {"scene": scene, "frames": frames, "volume": volume, "cloud": cloud}


@pytest.fixture(scope="session")
def box_assets():
    scene = tg.SceneSpec(shape="box",
                         dims={"x_len": 60.0, "y_len": 60.0, "z_len": 60.0})
    frames, volume, cloud = fuse_scene(scene, 10000, seed=1)
    return {"scene": scene, "frames": frames, "volume": volume, "cloud": cloud}


@pytest.fixture(scope="session")
def screwdriver_assets():
    scene = tg.SceneSpec(shape="screwdriver", dims={})
    shape = scene.shape_model()
    frames, volume, cloud = fuse_scene(scene, 4000, seed=1)
    skeleton = tg.ground_truth_skeleton(scene)
    pts_obj = object_frame_points(scene, cloud)
    handle = shape.region_mask("handle", pts_obj)
    handle_band = handle & (pts_obj[:, 0] > 25) & (pts_obj[:, 0] < 85)
    near_tip = shape.region_mask("shaft", pts_obj) & (pts_obj[:, 0] > 180)

    tool_use = tg.train(region_annotation(scene, cloud, skeleton, "tool_use",
                                          handle_band), seed=3)
    handover = tg.train(region_annotation(scene, cloud, skeleton, "handover",
                                          near_tip), seed=3)
    return {
        "scene": scene, "shape": shape, "cloud": cloud, "skeleton": skeleton,
        "pts_obj": pts_obj, "handle_mask": handle,
        "tip_mask": shape.region_mask("tip", pts_obj),
        "tool_use": tool_use, "handover": handover,
    }


@pytest.fixture(scope="session")
def brush_assets():
    scene = tg.SceneSpec(shape="brush", dims={})
    frames, volume, cloud = fuse_scene(scene, 3000, seed=2)
    return {"scene": scene, "shape": scene.shape_model(), "cloud": cloud,
            "skeleton": tg.ground_truth_skeleton(scene)}


def make_wall_cloud(separation, half=20.0, step=2.0):
    """Two parallel square walls facing each other along +z."""
    ax = np.arange(-half, half + step / 2, step)
    grid = np.array([[x, y] for x in ax for y in ax])
    n = len(grid)
    near = np.column_stack([grid[:, 0], grid[:, 1], np.zeros(n)])
    far = np.column_stack([grid[:, 0], grid[:, 1], np.full(n, separation)])
    return tg.SurfaceCloud(
        positions=np.vstack([near, far]),
        normals=np.vstack([np.tile([0.0, 0.0, -1.0], (n, 1)),
                           np.tile([0.0, 0.0, 1.0], (n, 1))]),
        c=np.zeros(2 * n), u=np.zeros(2 * n)).validate()
