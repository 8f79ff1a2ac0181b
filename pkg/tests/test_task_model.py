"""Task model training, scoring, invariance and serialization."""
import math

import numpy as np
import pytest

import taskgrasp as tg
from taskgrasp.errors import InvalidInputError, InvalidScoreError
from taskgrasp.geometry import rotation_about_axis
from taskgrasp.task_model import ExemplarAnnotation


def probe_skeleton():
    """Two-link skeleton with plane-rule frames, fully deterministic."""
    positions = np.array([[0.0, 0, 0], [100.0, 0, 0], [50.0, 80.0, 0]])
    spec = tg.SkeletonSpec(
        "probe", ["root", "end", "side"], [(0, 1), (1, 2)],
        frame_rules=[tg.FrameRule(reference=0, third=2),
                     tg.FrameRule(reference=1, third=0)])
    return tg.Skeleton.build(spec, positions)


def direction_points(skel, kp, theta, phi, radius, n, jitter, rng):
    """Surface points at given (theta, phi) in a keypoint frame."""
    frame = skel.frames[kp]
    out = []
    for _ in range(n):
        t = theta + rng.normal(0, jitter)
        p = phi + rng.normal(0, jitter)
        local = radius * np.array([math.sin(p) * math.cos(t),
                                   math.sin(p) * math.sin(t), math.cos(p)])
        out.append(skel.positions[kp] + frame.T @ local)
    return np.array(out)


class TestAnnotation:
    def test_requires_three_points(self):
        skel = probe_skeleton()
        with pytest.raises(InvalidInputError):
            ExemplarAnnotation("probe", "t", skel, np.zeros((2, 3))).validate()

    def test_far_points_rejected_against_cloud(self, sphere_assets):
        cloud = sphere_assets["cloud"]
        skel = probe_skeleton()
        far = np.array([[500.0, 500.0, 500.0]] * 3)
        ann = ExemplarAnnotation("probe", "t", skel, far)
        with pytest.raises(InvalidInputError):
            ann.validate(cloud=cloud, truncation=12.0)

    def test_on_surface_points_pass(self, sphere_assets):
        cloud = sphere_assets["cloud"]
        ann = ExemplarAnnotation("probe", "t", probe_skeleton(),
                                 cloud.positions[:5])
        ann.validate(cloud=cloud, truncation=12.0)


class TestTrain:
    def test_single_cluster_recovered(self):
        skel = probe_skeleton()
        rng = np.random.default_rng(0)
        pts = direction_points(skel, 0, 0.6, 1.1, 40.0, 40, 1e-3, rng)
        model = tg.train(ExemplarAnnotation("probe", "t", skel, pts), seed=2)
        g = model.gmms["root"]
        assert g.mixture.n_components == 1
        assert np.linalg.norm(g.mixture.means[0] - (0.6, 1.1)) < 0.01

    def test_two_clusters_recovered(self):
        skel = probe_skeleton()
        rng = np.random.default_rng(1)
        pts = np.vstack([
            direction_points(skel, 0, -0.7, 1.2, 40.0, 120, 0.1, rng),
            direction_points(skel, 0, 0.8, 1.2, 40.0, 120, 0.1, rng)])
        model = tg.train(ExemplarAnnotation("probe", "t", skel, pts), seed=2)
        g = model.gmms["root"]
        assert g.mixture.n_components == 2
        means = np.sort(g.mixture.means[:, 0])
        assert abs(means[0] - (-0.7)) < 0.05 and abs(means[1] - 0.8) < 0.05

    def test_low_data_keypoint_flagged(self):
        skel = probe_skeleton()
        rng = np.random.default_rng(2)
        # all grasp points near link 0; keypoint "side" (link 1 only) starves
        pts = direction_points(skel, 0, 0.3, 1.4, 30.0, 30, 1e-2, rng)
        model = tg.train(ExemplarAnnotation("probe", "t", skel, pts), seed=4)
        assert model.gmms["side"].low_data
        assert model.gmms["side"].mixture.n_components == 1
        assert not model.gmms["root"].low_data
        # every link endpoint carries a mixture regardless
        assert set(model.gmms) == {"root", "end", "side"}

    def test_em_traces_monotone(self):
        skel = probe_skeleton()
        rng = np.random.default_rng(3)
        pts = direction_points(skel, 0, 0.2, 1.0, 40.0, 60, 0.08, rng)
        from taskgrasp.mixtures import fit_em
        theta, phi = tg.to_spherical_many(skel.frames[0], skel.positions[0], pts)
        for seed in range(6):
            result = fit_em(np.stack([theta, phi], axis=1), 2, seed=seed)
            for trace in result.all_traces:
                assert np.all(np.diff(trace) >= -1e-9)

    def test_determinism(self):
        skel = probe_skeleton()
        rng = np.random.default_rng(4)
        pts = direction_points(skel, 0, 0.4, 1.3, 40.0, 50, 0.05, rng)
        ann = ExemplarAnnotation("probe", "t", skel, pts)
        m1 = tg.train(ann, seed=11)
        m2 = tg.train(ann, seed=11)
        assert m1.to_dict() == m2.to_dict()


class TestScoring:
    def _trained(self, seed=0, jitter=0.02):
        skel = probe_skeleton()
        rng = np.random.default_rng(seed)
        pts = direction_points(skel, 0, 0.5, 1.2, 40.0, 60, jitter, rng)
        model = tg.train(ExemplarAnnotation("probe", "t", skel, pts), seed=3)
        return skel, model, pts

    def test_training_point_scores_high(self):
        skel, model, pts = self._trained()
        scores = np.array([tg.score_point(model, skel, p) for p in pts[:20]])
        assert np.all(scores >= 0.5)

    def test_antipode_scores_near_zero(self):
        skel, model, _ = self._trained()
        rng = np.random.default_rng(9)
        anti = direction_points(skel, 0, 0.5 - math.pi, math.pi - 1.2, 40.0,
                                10, 1e-3, rng)
        scores = np.array([tg.score_point(model, skel, p) for p in anti])
        assert np.all(scores < 1e-6)

    def test_score_at_component_mean_clamps_to_one(self):
        skel, model, _ = self._trained(jitter=1e-3)
        g = model.gmms["root"]
        assert g.score(*g.mixture.means[0]) == pytest.approx(1.0)

    def test_keypoint_coincident_point_uses_pole(self):
        skel, model, _ = self._trained()
        s = tg.score_point(model, skel, skel.positions[0])
        assert 0.0 <= s <= 1.0

    def test_scores_bounded(self):
        skel, model, _ = self._trained()
        rng = np.random.default_rng(10)
        pts = rng.normal(0, 80, (300, 3)) + [50, 0, 0]
        scores = tg.score_surface(model, skel, pts)
        assert np.all((scores >= 0) & (scores <= 1))

    def test_clamp_events_reported(self):
        skel, model, _ = self._trained(jitter=1e-3)
        rng = np.random.default_rng(11)
        pts = direction_points(skel, 0, 0.5, 1.2, 40.0, 30, 1e-4, rng)
        _, stats = tg.score_surface(model, skel, pts, return_stats=True)
        assert stats["clamped"] >= 0

    def test_distance_cap_zeroes_far_points(self):
        skel, model, _ = self._trained()
        far = skel.positions[0] + np.array([0.0, 0.0, 1500.0])
        assert tg.score_point(model, skel, far) == 0.0

    def test_missing_keypoint_mixture_rejected(self):
        skel, model, _ = self._trained()
        del model.gmms["end"]
        with pytest.raises(InvalidInputError):
            tg.score_point(model, skel, [50.0, 10.0, 0.0])

    def test_theta_seam_continuity(self):
        """Directions at theta = pi scored on both branch sides agree."""
        skel = probe_skeleton()
        rng = np.random.default_rng(12)
        pts = direction_points(skel, 0, math.pi, 1.3, 40.0, 80, 0.05, rng)
        model = tg.train(ExemplarAnnotation("probe", "t", skel, pts), seed=5)
        just_below = direction_points(skel, 0, math.pi - 0.01, 1.3, 40.0, 5,
                                      1e-6, rng)
        just_above = direction_points(skel, 0, -math.pi + 0.01, 1.3, 40.0, 5,
                                      1e-6, rng)
        lo = np.array([tg.score_point(model, skel, p) for p in just_below])
        hi = np.array([tg.score_point(model, skel, p) for p in just_above])
        assert np.all(lo > 0.2) and np.all(hi > 0.2)
        assert abs(lo.mean() - hi.mean()) < 0.2


class TestInvariance:
    def test_rigid_and_scale_invariance_with_argmax(self):
        skel = probe_skeleton()
        rng = np.random.default_rng(13)
        train_pts = direction_points(skel, 0, 0.4, 1.1, 40.0, 60, 0.05, rng)
        model = tg.train(ExemplarAnnotation("probe", "t", skel, train_pts),
                         seed=6)
        query = rng.normal(0, 70, (200, 3)) + [50, 0, 0]
        base = tg.score_surface(model, skel, query)
        for case in range(10):
            crng = np.random.default_rng(100 + case)
            R = rotation_about_axis(crng.normal(size=3),
                                    crng.uniform(0, 2 * math.pi))
            t = crng.uniform(-400, 400, 3)
            scale = crng.uniform(0.4, 2.5)
            moved = tg.score_surface(model, skel.transformed(R=R, t=t, scale=scale),
                                     scale * (query @ R.T) + t)
            np.testing.assert_allclose(moved, base, atol=1e-9)
            assert np.argmax(moved) == np.argmax(base)


class TestCombineConstraints:
    def test_product(self):
        out = tg.combine_constraints([[0.5, 1.0], [0.5, 0.25]])
        np.testing.assert_allclose(out, [0.25, 0.25])

    def test_single_constraint_identity(self):
        np.testing.assert_allclose(tg.combine_constraints([[0.3, 0.7]]),
                                   [0.3, 0.7])

    def test_absorbing_zero(self):
        out = tg.combine_constraints([[0.9, 0.9], [0.0, 1.0]])
        assert out[0] == 0.0 and out[1] == pytest.approx(0.9)

    def test_empty_is_all_ones(self):
        np.testing.assert_array_equal(tg.combine_constraints([], n_points=4),
                                      np.ones(4))

    def test_out_of_range_rejected(self):
        with pytest.raises(InvalidScoreError):
            tg.combine_constraints([[1.2]])
        with pytest.raises(InvalidScoreError):
            tg.combine_constraints([[-0.1]])

    def test_length_mismatch_rejected(self):
        with pytest.raises(InvalidInputError):
            tg.combine_constraints([[0.5], [0.5, 0.5]])


class TestSerialization:
    def test_round_trip_scores_identical(self):
        skel = probe_skeleton()
        rng = np.random.default_rng(14)
        pts = direction_points(skel, 0, -0.2, 1.0, 40.0, 50, 0.08, rng)
        model = tg.train(ExemplarAnnotation("probe", "grip", skel, pts), seed=7)
        again = tg.TaskModel.from_dict(model.to_dict())
        query = rng.normal(0, 60, (100, 3)) + [50, 0, 0]
        np.testing.assert_array_equal(tg.score_surface(model, skel, query),
                                      tg.score_surface(again, skel, query))

    def test_json_file_round_trip(self, tmp_path):
        import json
        skel = probe_skeleton()
        rng = np.random.default_rng(15)
        pts = direction_points(skel, 0, 0.1, 1.5, 40.0, 40, 0.05, rng)
        model = tg.train(ExemplarAnnotation("probe", "grip", skel, pts), seed=8)
        path = tmp_path / "model.json"
        with open(path, "w") as fh:
            json.dump(model.to_dict(), fh)
        again = tg.TaskModel.load(path)
        assert again.object_class == "probe" and again.task == "grip"
        assert set(again.gmms) == set(model.gmms)
