"""Sensor noise model: focal length, depth RMS, incidence error."""
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

import taskgrasp as tg
from taskgrasp.errors import (GrazingRayError, InvalidInputError,
                              InvalidIntrinsicsError)
from taskgrasp.sensor import variance_map

REL = 1e-9


def realsense_like():
    return tg.CameraIntrinsics(x_res=1280, y_res=720,
                               hfov=math.radians(65.0), cx=640.0, cy=360.0)


class TestFocalLength:
    def test_realsense_value(self):
        # direct evaluation of the focal-length formula
        expected = 0.5 * 1280 / math.tan(math.radians(65.0) / 2.0)
        f = tg.focal_length(realsense_like())
        assert f == pytest.approx(expected, rel=REL)
        assert f == pytest.approx(1004.6, abs=0.05)

    def test_square_fov(self):
        intr = tg.CameraIntrinsics(2, 2, math.radians(90.0), 1.0, 1.0)
        assert tg.focal_length(intr) == pytest.approx(1.0, rel=REL)

    @pytest.mark.parametrize("hfov", [0.0, -0.3, math.pi, math.pi + 0.1])
    def test_degenerate_fov_rejected(self, hfov):
        with pytest.raises(InvalidIntrinsicsError):
            tg.CameraIntrinsics(1280, 720, hfov, 640.0, 360.0)

    def test_derived_property_matches(self):
        intr = realsense_like()
        assert intr.f == pytest.approx(0.5 * intr.x_res / math.tan(intr.hfov / 2),
                                       rel=REL)


class TestDepthRms:
    def test_zero_depth(self):
        assert tg.depth_rms_error(0.0, 1004.6) == 0.0

    def test_half_metre(self):
        f = tg.focal_length(realsense_like())
        assert tg.depth_rms_error(500.0, f) == pytest.approx(
            0.08 * 500.0**2 / (55.0 * f), rel=REL)
        assert tg.depth_rms_error(500.0, f) == pytest.approx(0.362, abs=5e-4)

    def test_quadratic_in_depth(self):
        f = tg.focal_length(realsense_like())
        assert tg.depth_rms_error(1000.0, f) == pytest.approx(
            4.0 * tg.depth_rms_error(500.0, f), rel=REL)
        assert tg.depth_rms_error(1000.0, f) == pytest.approx(1.448, abs=5e-4)

    @given(st.floats(min_value=1e-3, max_value=5e3))
    def test_doubling_law_exact(self, d):
        f = 1004.6
        assert tg.depth_rms_error(2.0 * d, f) == 4.0 * tg.depth_rms_error(d, f)

    def test_negative_depth_rejected(self):
        with pytest.raises(InvalidInputError):
            tg.depth_rms_error(-1.0, 1004.6)
        with pytest.raises(InvalidInputError):
            tg.depth_rms_error(100.0, 0.0)


class TestIncidenceError:
    def test_normal_incidence(self):
        assert tg.incidence_error(0.0) == 0.0

    def test_quarter_pi(self):
        assert tg.incidence_error(math.pi / 4) == pytest.approx(4.0 / math.pi,
                                                                rel=REL)

    def test_grazing_clamp(self):
        with pytest.raises(GrazingRayError):
            tg.incidence_error(1.4)
        with pytest.raises(GrazingRayError):
            tg.incidence_error(1.3)  # boundary rejected
        tg.incidence_error(1.299)    # just under the clamp is fine

    def test_negative_angle_rejected(self):
        with pytest.raises(InvalidInputError):
            tg.incidence_error(-0.1)

    @given(st.floats(min_value=0.0, max_value=1.29),
           st.floats(min_value=1e-6, max_value=0.009))
    def test_strictly_increasing(self, theta, delta):
        assert tg.incidence_error(theta + delta) > tg.incidence_error(theta)


class TestMeasurementVariance:
    def test_zero_inputs(self):
        assert tg.measurement_variance(0.0, 0.0, realsense_like()) == 0.0

    def test_composition(self):
        intr = realsense_like()
        f = tg.focal_length(intr)
        e_sum = tg.depth_rms_error(500.0, f) + tg.incidence_error(math.pi / 4)
        got = tg.measurement_variance(500.0, math.pi / 4, intr)
        assert got == pytest.approx(e_sum**2, rel=REL)
        assert got == pytest.approx(2.674, abs=2e-3)

    def test_rejected_theta_propagates(self):
        with pytest.raises(GrazingRayError):
            tg.measurement_variance(500.0, 1.35, realsense_like())

    @given(st.floats(min_value=0.0, max_value=3e3),
           st.floats(min_value=0.0, max_value=1.29))
    def test_non_negative(self, d, theta):
        assert tg.measurement_variance(d, theta, realsense_like()) >= 0.0

    def test_noise_estimate_fields(self):
        est = tg.noise_estimate(500.0, 0.5, realsense_like())
        assert est.depth_rms >= 0 and est.incidence_error >= 0
        assert est.total_variance == pytest.approx(
            (est.depth_rms + est.incidence_error) ** 2, rel=REL)


class TestVarianceMap:
    def test_masks_invalid_and_grazing(self):
        depth = np.array([[0.0, 500.0], [500.0, 500.0]])
        theta = np.array([[0.0, 0.2], [1.35, 0.4]])
        var, ok = variance_map(depth, theta, 1004.6)
        assert not ok[0, 0] and not ok[1, 0]
        assert ok[0, 1] and ok[1, 1]
        assert var[1, 0] == 0.0 and var[0, 1] > 0.0


class TestIntrinsicsDocument:
    def test_round_trip(self):
        intr = realsense_like()
        again = tg.CameraIntrinsics.from_dict(intr.to_dict())
        assert (again.x_res, again.y_res, again.cx, again.cy) == (
            intr.x_res, intr.y_res, intr.cx, intr.cy)
        assert again.hfov == pytest.approx(intr.hfov, rel=1e-15)

    def test_focal_length_recomputed_not_read(self):
        doc = realsense_like().to_dict()
        doc["f"] = 1.0  # must be ignored: derived, never read
        with pytest.raises(InvalidIntrinsicsError):
            tg.CameraIntrinsics.from_dict({**doc, "hfov_deg": 180.0})
        again = tg.CameraIntrinsics.from_dict(doc)
        assert again.f == pytest.approx(1004.6, abs=0.05)

    def test_missing_key(self):
        with pytest.raises(InvalidIntrinsicsError):
            tg.CameraIntrinsics.from_dict({"x_res": 100})
