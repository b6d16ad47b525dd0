import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from amr_navkit.codec import (
    LIDAR_GROUPS,
    LIDAR_POINTS,
    PHI_BINS,
    PHI_WIDTH,
    PSI_BINS,
    PSI_WIDTH,
    R_BINS,
    R_MAX,
    R_WIDTH,
    PolarStep,
    TokenizedStep,
    backproject_depth,
    decode_step,
    decode_trajectory,
    depth_position_features,
    encode_step,
    encode_trajectory,
    lidar_tokens,
    pose_from_step,
    sinusoidal_embed,
    step_from_pose,
)
from amr_navkit.errors import OutOfRange
from amr_navkit.geometry import CameraModel, Pose2, camera_to_robot_rotation, project_to_pixel
from amr_navkit.scene import LidarScan

steps_st = st.builds(
    PolarStep,
    st.floats(0, 2 * math.pi, exclude_max=True),
    st.floats(0, R_MAX),
    st.floats(0, 2 * math.pi, exclude_max=True),
)


class TestStepCodec:
    def test_bin_counts(self):
        assert (PSI_BINS, R_BINS, PHI_BINS) == (30, 32, 12)
        assert R_WIDTH == pytest.approx(0.00625)

    def test_r_midrange_example(self):
        tok = encode_step(PolarStep(0.0, 0.1, 0.0))
        assert tok.r_bin == 16
        assert tok.r_res == pytest.approx(-0.003125, abs=1e-15)
        assert decode_step(tok, use_residual=False).r == pytest.approx(0.103125, abs=1e-15)

    def test_psi_range_start(self):
        tok = encode_step(PolarStep(0.0, 0.05, 0.0))
        assert tok.psi_bin == 0
        assert tok.psi_res == pytest.approx(-math.pi / 30, abs=1e-15)

    def test_top_bin_clamped(self):
        tok = encode_step(PolarStep(0.0, R_MAX, 0.0))
        assert tok.r_bin == R_BINS - 1
        assert abs(tok.r_res) <= R_WIDTH / 2 + 1e-15

    def test_out_of_range(self):
        with pytest.raises(OutOfRange):
            PolarStep(0.0, 0.21, 0.0)

    @given(steps_st)
    @settings(max_examples=500)
    def test_roundtrip_exact(self, step):
        dec = decode_step(encode_step(step), use_residual=True)
        assert abs(dec.psi - step.psi) <= 1e-12
        assert abs(dec.r - step.r) <= 1e-12
        assert abs(dec.phi - step.phi) <= 1e-12

    @given(steps_st)
    @settings(max_examples=500)
    def test_residual_within_half_width(self, step):
        tok = encode_step(step)
        assert abs(tok.psi_res) <= PSI_WIDTH / 2 + 1e-12
        assert abs(tok.r_res) <= R_WIDTH / 2 + 1e-12
        assert abs(tok.phi_res) <= PHI_WIDTH / 2 + 1e-12

    @given(steps_st)
    @settings(max_examples=500)
    def test_center_decode_error_bounded(self, step):
        dec = decode_step(encode_step(step), use_residual=False)
        assert abs(dec.psi - step.psi) <= PSI_WIDTH / 2 + 1e-12
        assert abs(dec.r - step.r) <= R_WIDTH / 2 + 1e-12
        assert abs(dec.phi - step.phi) <= PHI_WIDTH / 2 + 1e-12

    def test_phi_center_error_at_most_15_deg(self):
        for phi in np.linspace(0, 2 * math.pi, 1000, endpoint=False):
            dec = decode_step(encode_step(PolarStep(0, 0.1, float(phi))), use_residual=False)
            assert abs(dec.phi - phi) <= math.radians(15) + 1e-12

    def test_bad_bin_index_rejected(self):
        with pytest.raises(ValueError):
            decode_step(TokenizedStep(30, 0, 0, 0, 0, 0))


class TestTrajectoryCodec:
    def test_straight_chain_identical_tokens(self):
        waypoints = [Pose2(0.1, 0, 0)] * 12
        toks = encode_trajectory(waypoints)
        assert all(t == toks[0] for t in toks)
        assert toks[0].psi_bin == 0 and toks[0].r_bin == 16 and toks[0].phi_bin == 0

    def test_zero_motion(self):
        toks = encode_trajectory([Pose2(0, 0, 0)] * 12)
        assert all(t.r_bin == 0 and abs(t.r_res + R_WIDTH / 2) < 1e-15 for t in toks)
        base = Pose2(1.0, -2.0, 0.4)
        poses = decode_trajectory(toks, base, use_residual=True)
        for p in poses:
            assert math.hypot(p.x - base.x, p.y - base.y) <= 1e-12
            assert abs(p.heading - base.heading) <= 1e-12

    def test_world_roundtrip_with_residuals(self):
        rng = np.random.default_rng(2)
        for _ in range(300):
            base = Pose2(rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(-math.pi, math.pi))
            rel = [
                pose_from_step(
                    PolarStep(rng.uniform(0, 2 * math.pi), rng.uniform(0, R_MAX), rng.uniform(0, 2 * math.pi))
                )
                for _ in range(12)
            ]
            world = []
            cur = base
            for r in rel:
                from amr_navkit.geometry import se2_compose

                cur = se2_compose(cur, r)
                world.append(cur)
            dec = decode_trajectory(encode_trajectory(rel), base, use_residual=True)
            for a, b in zip(world, dec):
                assert math.hypot(a.x - b.x, a.y - b.y) <= 1e-9
                assert abs(a.heading - b.heading) <= 1e-9

    def test_step_pose_conversion_inverse(self):
        rng = np.random.default_rng(3)
        for _ in range(200):
            step = PolarStep(rng.uniform(0, 2 * math.pi), rng.uniform(1e-6, R_MAX), rng.uniform(0, 2 * math.pi))
            back = step_from_pose(pose_from_step(step))
            assert abs(back.psi - step.psi) <= 1e-9
            assert abs(back.r - step.r) <= 1e-12

    def test_oversized_step_rejected(self):
        with pytest.raises(OutOfRange):
            encode_trajectory([Pose2(0.3, 0, 0)])


class TestLidarTokens:
    def _scan(self, ranges):
        return LidarScan(len(ranges), np.asarray(ranges, dtype=float), 10.0)

    def test_structure_and_bearing_grouping(self):
        rng = np.random.default_rng(4)
        scan = self._scan(rng.uniform(0.5, 9.5, size=360))
        toks = lidar_tokens(scan)
        assert toks.points.shape == (32, 8, 2)
        width = 2 * math.pi / LIDAR_GROUPS
        for g in range(LIDAR_GROUPS):
            for p in toks.points[g]:
                bearing = math.atan2(p[1], p[0]) % (2 * math.pi)
                assert g * width - 1e-9 <= bearing < (g + 1) * width + 1e-9

    def test_shift_by_one_bin_width(self):
        # 320 rays: one 11.25-degree group = exactly 10 source rays, so a
        # 10-ray roll rotates the world by one group width and shifts every
        # group index by one
        from amr_navkit.geometry import rot2

        rng = np.random.default_rng(5)
        ranges = rng.uniform(0.5, 9.5, size=320)
        base = lidar_tokens(self._scan(ranges))
        shifted = lidar_tokens(self._scan(np.roll(ranges, -10)))
        width = 2 * math.pi / LIDAR_GROUPS
        R = rot2(-width)
        for g in range(LIDAR_GROUPS):
            expect = base.points[(g + 1) % LIDAR_GROUPS] @ R.T
            np.testing.assert_allclose(shifted.points[g], expect, atol=1e-9)

    def test_uniform_ranges_on_circle(self):
        toks = lidar_tokens(self._scan(np.full(360, 10.0)))
        norms = np.linalg.norm(toks.points.reshape(-1, 2), axis=1)
        np.testing.assert_allclose(norms, 10.0, atol=1e-9)
        assert toks.points.reshape(-1, 2).shape[0] == LIDAR_POINTS


class TestDepthBackprojection:
    def test_optical_axis_ray(self):
        # principal point placed on a cell center: cell column 6 center = 104 px
        cam = CameraModel.pinhole(height=1.5, cx_px=104.0, cy_px=104.0)
        depth = np.full((14, 14), 2.0)
        grid = backproject_depth(depth, cam, tilt=0.0)
        np.testing.assert_allclose(grid.points[6, 6], [2.0, 0.0, 1.5], atol=1e-12)

    def test_straight_down_hits_floor(self):
        cam = CameraModel.pinhole(height=1.5, cx_px=104.0, cy_px=104.0)
        depth = np.full((14, 14), 1.5)
        grid = backproject_depth(depth, cam, tilt=math.pi / 2)
        np.testing.assert_allclose(grid.points[6, 6], [0.0, 0.0, 0.0], atol=1e-12)

    def test_matches_ray_parameterization_oracle(self):
        # oracle: robot-frame ray direction scaled by depth, from the camera origin
        rng = np.random.default_rng(6)
        cam = CameraModel.pinhole()
        for _ in range(20):
            tilt = rng.uniform(-0.8, 0.8)
            depth = rng.uniform(0.2, 8.0, size=(14, 14))
            grid = backproject_depth(depth, cam, tilt)
            R = camera_to_robot_rotation(tilt)
            for _ in range(20):
                i, j = rng.integers(14), rng.integers(14)
                u = (j + 0.5) * cam.image_width_px / 14
                v = (i + 0.5) * cam.image_height_px / 14
                ray_cam = np.array([(u - cam.cx_px) / cam.fx, (v - cam.cy_px) / cam.fy, 1.0])
                oracle = np.array([0.0, 0.0, cam.height]) + depth[i, j] * (R @ ray_cam)
                np.testing.assert_allclose(grid.points[i, j], oracle, atol=1e-9)

    def test_reprojection_hits_cell_center(self):
        rng = np.random.default_rng(7)
        cam = CameraModel.pinhole()
        su = cam.image_width_px / 14
        for _ in range(10):
            tilt = rng.uniform(-0.6, 0.6)
            depth = rng.uniform(0.3, 6.0, size=(14, 14))
            grid = backproject_depth(depth, cam, tilt)
            for _ in range(20):
                i, j = rng.integers(14), rng.integers(14)
                u, v = project_to_pixel(cam, tilt, grid.points[i, j])
                assert abs(u - (j + 0.5) * su) <= 0.5 * su
                assert abs(v - (i + 0.5) * su) <= 0.5 * su

    def test_nonpositive_depth_rejected(self):
        cam = CameraModel.pinhole()
        with pytest.raises(ValueError):
            backproject_depth(np.zeros((14, 14)), cam, 0.0)


class TestSinusoidalEmbed:
    def test_zero_value(self):
        out = sinusoidal_embed(0.0, dims=16)
        np.testing.assert_allclose(out[0::2], 0.0)
        np.testing.assert_allclose(out[1::2], 1.0)

    def test_constant_norm(self):
        for v in (-3.7, 0.0, 0.01, 12.3):
            out = sinusoidal_embed(v, dims=64)
            assert np.linalg.norm(out) == pytest.approx(math.sqrt(32), abs=1e-12)

    def test_lowest_frequency_periodicity(self):
        dims, base = 64, 10000.0
        v = 1.234
        period = 2 * math.pi  # pair 0 has frequency 1
        a = sinusoidal_embed(v, dims, base)
        b = sinusoidal_embed(v + period, dims, base)
        np.testing.assert_allclose(a[:2], b[:2], atol=1e-9)

    def test_dims_validation(self):
        with pytest.raises(ValueError):
            sinusoidal_embed(1.0, dims=7)

    def test_depth_feature_concatenation(self):
        cam = CameraModel.pinhole()
        grid = backproject_depth(np.full((14, 14), 2.0), cam, 0.1)
        feats = depth_position_features(grid, dims=8)
        assert feats.shape == (14, 14, 24)
        np.testing.assert_allclose(feats[3, 4, :8], sinusoidal_embed(grid.points[3, 4, 0], 8))
