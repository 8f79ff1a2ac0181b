"""SurfaceCloud container and PLY round trips."""
import numpy as np
import pytest

import taskgrasp as tg
from taskgrasp.errors import InvalidInputError


def small_cloud(n=40, seed=0):
    rng = np.random.default_rng(seed)
    normals = rng.normal(size=(n, 3))
    normals /= np.linalg.norm(normals, axis=1, keepdims=True)
    return tg.SurfaceCloud(
        positions=rng.uniform(-50, 50, (n, 3)),
        normals=normals,
        c=rng.uniform(0, 3, n),
        u=rng.uniform(0, 1 / 3, n)).validate()


class TestValidation:
    def test_non_unit_normals_rejected(self):
        cloud = small_cloud()
        cloud.normals[3] *= 2.0
        with pytest.raises(InvalidInputError):
            cloud.validate()

    def test_negative_c_rejected(self):
        cloud = small_cloud()
        cloud.c[0] = -0.1
        with pytest.raises(InvalidInputError):
            cloud.validate()

    def test_u_out_of_range_rejected(self):
        cloud = small_cloud()
        cloud.u[0] = 0.4
        with pytest.raises(InvalidInputError):
            cloud.validate()

    def test_length_mismatch_rejected(self):
        cloud = small_cloud()
        cloud.c = cloud.c[:-1]
        with pytest.raises(InvalidInputError):
            cloud.validate()


class TestTransform:
    def test_rigid_preserves_annotations(self):
        cloud = small_cloud()
        from taskgrasp.geometry import rotation_about_axis
        R = rotation_about_axis([1, 2, 3], 0.7)
        moved = cloud.transformed(R=R, t=[10, -20, 5])
        np.testing.assert_allclose(moved.c, cloud.c)
        np.testing.assert_allclose(moved.u, cloud.u)
        np.testing.assert_allclose(np.linalg.norm(moved.normals, axis=1), 1.0,
                                   atol=1e-9)
        np.testing.assert_allclose(moved.positions,
                                   cloud.positions @ R.T + [10, -20, 5])

    def test_scale_scales_c_not_u(self):
        cloud = small_cloud()
        scaled = cloud.transformed(scale=2.5)
        np.testing.assert_allclose(scaled.c, 2.5 * cloud.c)
        np.testing.assert_allclose(scaled.u, cloud.u)
        np.testing.assert_allclose(scaled.positions, 2.5 * cloud.positions)

    def test_bad_scale(self):
        with pytest.raises(InvalidInputError):
            small_cloud().transformed(scale=0.0)


class TestPly:
    def test_base_round_trip(self, tmp_path):
        cloud = small_cloud()
        path = tmp_path / "cloud.ply"
        cloud.save_ply(path, comments=["seed 0"])
        again = tg.SurfaceCloud.load_ply(path)
        np.testing.assert_array_equal(again.positions,
                                      cloud.positions.astype(np.float32))
        np.testing.assert_array_equal(again.c, cloud.c.astype(np.float32))
        np.testing.assert_array_equal(again.u, cloud.u.astype(np.float32))

    def test_score_property_lossless(self, tmp_path):
        cloud = small_cloud()
        scores = np.random.default_rng(1).random(len(cloud))
        path = tmp_path / "scored.ply"
        cloud.save_ply(path, scores=scores)
        _, extras = tg.read_ply(path)
        assert np.array_equal(extras["score"], scores.astype(np.float32))

    def test_colors(self, tmp_path):
        cloud = small_cloud()
        colors = np.random.default_rng(2).integers(0, 256, (len(cloud), 3))
        path = tmp_path / "colored.ply"
        cloud.save_ply(path, colors=colors)
        _, extras = tg.read_ply(path)
        assert np.array_equal(extras["red"], colors[:, 0].astype(np.uint8))
        assert np.array_equal(extras["blue"], colors[:, 2].astype(np.uint8))

    def test_deterministic_bytes(self, tmp_path):
        cloud = small_cloud()
        a, b = tmp_path / "a.ply", tmp_path / "b.ply"
        cloud.save_ply(a, comments=["seed 5"])
        cloud.save_ply(b, comments=["seed 5"])
        assert a.read_bytes() == b.read_bytes()

    def test_missing_property_rejected(self, tmp_path):
        path = tmp_path / "bad.ply"
        header = ("ply\nformat binary_little_endian 1.0\n"
                  "element vertex 1\nproperty float x\nproperty float y\n"
                  "property float z\nend_header\n")
        path.write_bytes(header.encode() + np.zeros(3, "<f4").tobytes())
        with pytest.raises(InvalidInputError):
            tg.read_ply(path)

    def test_ascii_ply_rejected(self, tmp_path):
        path = tmp_path / "ascii.ply"
        path.write_text("ply\nformat ascii 1.0\nelement vertex 0\nend_header\n")
        with pytest.raises(InvalidInputError):
            tg.read_ply(path)

    def test_wrong_magic_rejected(self, tmp_path):
        path = tmp_path / "x.ply"
        path.write_bytes(b"not a ply\n")
        with pytest.raises(InvalidInputError):
            tg.read_ply(path)

    def test_fused_cloud_round_trip(self, tmp_path, sphere_assets):
        cloud = sphere_assets["cloud"]
        path = tmp_path / "sphere.ply"
        cloud.save_ply(path)
        again = tg.SurfaceCloud.load_ply(path)
        assert len(again) == len(cloud)
        assert np.allclose(again.positions, cloud.positions, atol=1e-2)


class TestColors:
    def test_ramp_endpoints_and_monotone_green(self):
        from taskgrasp.colors import score_colors
        rgb = score_colors([0.0, 0.25, 0.5, 0.75, 1.0])
        assert rgb.shape == (5, 3) and rgb.dtype == np.uint8
        assert rgb[0, 2] > rgb[0, 1]          # low scores: blue over green
        assert rgb[-1, 0] > 200 and rgb[-1, 1] > 200  # top of scale is bright
        greens = score_colors(np.linspace(0, 1, 11))[:, 1]
        assert np.all(np.diff(greens.astype(int)) >= 0)

    def test_clipping(self):
        from taskgrasp.colors import score_colors
        rgb = score_colors([-1.0, 2.0])
        assert np.array_equal(rgb[0], score_colors([0.0])[0])
        assert np.array_equal(rgb[1], score_colors([1.0])[0])
