import math
from dataclasses import replace

import numpy as np
import pytest

from amr_navkit.codec import encode_trajectory
from amr_navkit.controller import (
    CodecRoundtripPolicy,
    ExecutorConfig,
    OraclePolicy,
    PolicyAction,
    pure_pursuit,
    run_episode,
    tilt_step,
)
from amr_navkit.errors import EmptyTrajectory, InvalidCommand, NoPathFound
from amr_navkit.geometry import CameraModel, Pose2, compute_tilt
from amr_navkit.scene import (
    Bounds,
    DiffDrive,
    OmniDrive,
    OrientedBox,
    RobotState,
    Scene,
    SceneObject,
    _room_walls,
    command_omega,
    command_speed,
    sample_scene,
)
from amr_navkit.pipeline import Task, sample_task
from amr_navkit.geometry import GoalSpec, SideLabels


CFG_DIFF = ExecutorConfig(kinematics="differential")
CFG_OMNI = ExecutorConfig(kinematics="omnidirectional")


def make_task(scene, start, goal, target_id=0, radius=0.3) -> Task:
    return Task(
        scene_seed=scene.seed,
        start=start,
        robot_radius=radius,
        reference_view=start,
        target_id=target_id,
        side_labels=SideLabels.from_front(0),
        goal_spec=GoalSpec("front", 0.5, 0.0),
        goal_pose=goal,
        ffr=True,
        initially_visible=True,
    )


def room_with_target(w=12.0, h=12.0, box=None) -> Scene:
    box = box or OrientedBox(4.0, 0.0, 0.5, 0.5, 0.0)
    return Scene(Bounds(w, h), _room_walls(Bounds(w, h), 0.1), [SceneObject(0, box)], seed=0)


class TestPurePursuit:
    def test_straight_path_aligned(self):
        state = RobotState(Pose2(0, 0, 0), 0.3)
        traj = [Pose2(x, 0, 0) for x in np.linspace(0.1, 3.0, 30)]
        cmd = pure_pursuit(state, traj, CFG_DIFF)
        assert isinstance(cmd, DiffDrive)
        assert cmd.v == pytest.approx(CFG_DIFF.speed)
        assert cmd.omega == pytest.approx(0.0, abs=1e-12)

    def test_lateral_target_curvature(self):
        # lookahead target straight to the left at distance L: omega = 2*speed/L
        state = RobotState(Pose2(0, 0, 0), 0.3)
        traj = [Pose2(0, 0.5, 0), Pose2(0, 5.0, 0)]
        cmd = pure_pursuit(state, traj, CFG_DIFF)
        assert cmd.v == pytest.approx(CFG_DIFF.speed)
        expect = 2.0 * CFG_DIFF.speed * 0.5 / 0.25
        assert cmd.omega == pytest.approx(min(expect, CFG_DIFF.omega_max))

    def test_zero_command_at_final_point(self):
        state = RobotState(Pose2(2.0, 1.0, 0.5), 0.3)
        traj = [Pose2(2.0, 1.0, 0.5)]
        for cfg in (CFG_DIFF, CFG_OMNI):
            state2 = replace(state, kinematics=cfg.kinematics)
            cmd = pure_pursuit(state2, traj, cfg)
            assert command_speed(cmd) == 0.0
            assert command_omega(cmd) == 0.0

    def test_final_inplace_rotation(self):
        state = RobotState(Pose2(2.0, 1.0, 0.0), 0.3)
        traj = [Pose2(2.0, 1.0, 1.0)]
        cmd = pure_pursuit(state, traj, CFG_DIFF)
        assert cmd.v == 0.0
        assert cmd.omega > 0.0

    def test_omni_decoupled_servo(self):
        cfg = CFG_OMNI
        state = RobotState(Pose2(0, 0, 0), 0.3, kinematics="omnidirectional")
        traj = [Pose2(2.0, 0.0, 1.0)]
        cmd = pure_pursuit(state, traj, cfg)
        assert isinstance(cmd, OmniDrive)
        assert cmd.vx > 0 and abs(cmd.vy) < 1e-12
        assert cmd.omega > 0  # heading servo active while moving

    def test_speed_taper_near_goal(self):
        state = RobotState(Pose2(0, 0, 0), 0.3, kinematics="omnidirectional")
        traj = [Pose2(0.3, 0.0, 0.0)]
        cmd = pure_pursuit(state, traj, CFG_OMNI)
        assert command_speed(cmd) == pytest.approx(CFG_OMNI.speed * 0.3 / (2 * CFG_OMNI.lookahead))

    def test_empty_trajectory(self):
        with pytest.raises(EmptyTrajectory):
            pure_pursuit(RobotState(Pose2(0, 0, 0), 0.3), [], CFG_DIFF)

    def test_ackermann_unsupported(self):
        state = RobotState(Pose2(0, 0, 0), 0.3, kinematics="ackermann", wheelbase=0.5)
        with pytest.raises(InvalidCommand):
            pure_pursuit(state, [Pose2(1, 0, 0)], CFG_DIFF)

    def test_commands_respect_limits(self):
        rng = np.random.default_rng(0)
        for _ in range(300):
            kin = "differential" if rng.uniform() < 0.5 else "omnidirectional"
            state = RobotState(
                Pose2(rng.uniform(-3, 3), rng.uniform(-3, 3), rng.uniform(-math.pi, math.pi)),
                0.3,
                kinematics=kin,
            )
            traj = [
                Pose2(rng.uniform(-3, 3), rng.uniform(-3, 3), rng.uniform(-math.pi, math.pi))
                for _ in range(int(rng.integers(1, 15)))
            ]
            cfg = CFG_DIFF if kin == "differential" else CFG_OMNI
            cmd = pure_pursuit(replace(state, kinematics=kin), traj, cfg)
            assert command_speed(cmd) <= cfg.v_max + 1e-9
            assert command_omega(cmd) <= cfg.omega_max + 1e-9


class TestTiltStep:
    CAM = CameraModel.pinhole()

    def test_converges_to_setpoint(self):
        cfg = CFG_OMNI
        state = RobotState(Pose2(0, 0, 0), 0.3, tilt=0.0)
        point = (2.0, 0.0, 0.0)
        setpoint = compute_tilt(self.CAM, state.pose, point, tilt_limit=None)
        for _ in range(20):
            state = replace(state, tilt=tilt_step(state, self.CAM, point, cfg))
        assert state.tilt == pytest.approx(setpoint, abs=1e-12)

    def test_slew_limited(self):
        cfg = CFG_OMNI
        state = RobotState(Pose2(0, 0, 0), 0.3, tilt=0.0)
        new = tilt_step(state, self.CAM, (0.5, 0.0, 0.0), cfg)
        assert abs(new - state.tilt) <= cfg.tilt_rate * cfg.dt + 1e-12

    def test_monotone_on_approach(self):
        # closing in on a floor-level object looks further and further down
        cfg = CFG_OMNI
        tilts = []
        for rho in np.linspace(5.0, 1.0, 30):
            state = RobotState(Pose2(-rho, 0, 0), 0.3, tilt=0.6)
            tilts.append(compute_tilt(self.CAM, state.pose, (0.0, 0.0, 0.0), tilt_limit=None))
        assert all(b >= a for a, b in zip(tilts, tilts[1:]))

    def test_clamps_at_limit(self):
        cfg = CFG_OMNI
        state = RobotState(Pose2(0, 0, 0), 0.3, tilt=0.9)
        new = tilt_step(state, self.CAM, (0.05, 0.0, 0.0), cfg)
        assert new <= cfg.tilt_limit + 1e-12


class ZeroMotionPolicy:
    def query(self, state, scan, task, step):
        return PolicyAction(steps=encode_trajectory([Pose2(0, 0, 0)] * 12), tilt=0.0)


class WallCrashPolicy:
    """Commands straight ahead regardless of obstacles."""

    def query(self, state, scan, task, step):
        return PolicyAction(steps=encode_trajectory([Pose2(0.1, 0, 0)] * 12), tilt=0.0)


class CountingOracle(OraclePolicy):
    calls: int = 0

    def query(self, state, scan, task, step):
        CountingOracle.calls += 1
        return super().query(state, scan, task, step)


class TestRunEpisode:
    def test_oracle_reaches_goal_ahead(self):
        scene = room_with_target()
        start = Pose2(0.0, 0.0, 0.0)
        goal = Pose2(3.0, 0.0, 0.0)
        task = make_task(scene, start, goal)
        res = run_episode(scene, task, OraclePolicy(scene=scene), CFG_OMNI)
        assert res.outcome == "reached"
        assert res.distance_error <= CFG_OMNI.stop_pos_tol + 1e-9
        assert res.angle_error <= math.degrees(CFG_OMNI.stop_ang_tol) + 1e-9

    def test_differential_tracking_also_reaches(self):
        scene = room_with_target()
        task = make_task(scene, Pose2(0, 0, 0), Pose2(3.0, 0.6, 0.3))
        res = run_episode(scene, task, OraclePolicy(scene=scene), CFG_DIFF)
        assert res.outcome == "reached"
        assert res.distance_error <= CFG_DIFF.stop_pos_tol + 1e-9

    def test_zero_motion_policy_times_out(self):
        scene = room_with_target()
        cfg = replace(CFG_OMNI, max_steps=40)
        task = make_task(scene, Pose2(0, 0, 0), Pose2(3.0, 0, 0))
        res = run_episode(scene, task, ZeroMotionPolicy(), cfg)
        assert res.outcome == "timeout"
        assert res.steps == 40

    def test_crash_policy_collides(self):
        box = OrientedBox(1.5, 0.0, 0.3, 1.5, 0.0)
        scene = room_with_target(box=box)
        task = make_task(scene, Pose2(0, 0, 0), Pose2(4, 0, 0))
        res = run_episode(scene, task, WallCrashPolicy(), CFG_OMNI)
        assert res.outcome == "collision"
        assert res.min_clearance <= 0.0

    def test_no_path_outcome(self):
        class RefusingPolicy:
            def query(self, state, scan, task, step):
                raise NoPathFound("nope")

        scene = room_with_target()
        task = make_task(scene, Pose2(0, 0, 0), Pose2(3.0, 0, 0))
        res = run_episode(scene, task, RefusingPolicy(), CFG_OMNI)
        assert res.outcome == "no_path"
        assert res.steps == 0

    def test_replan_cadence(self):
        scene = room_with_target()
        task = make_task(scene, Pose2(0, 0, 0), Pose2(3.0, 0, 0))
        CountingOracle.calls = 0
        policy = CountingOracle(scene=scene)
        res = run_episode(scene, task, policy, CFG_OMNI)
        assert res.outcome == "reached"
        assert CountingOracle.calls == math.ceil(res.steps / CFG_OMNI.replan_every)
        ids = [e.trajectory_id for e in res.trace]
        assert ids == sorted(ids)
        assert len(set(ids)) == CountingOracle.calls

    def test_episode_deterministic(self):
        scene = sample_scene(30)
        task = sample_task(scene, 5)
        r1 = run_episode(scene, task, OraclePolicy(scene=scene, seed=4), CFG_OMNI)
        r2 = run_episode(scene, task, OraclePolicy(scene=scene, seed=4), CFG_OMNI)
        assert r1.outcome == r2.outcome
        assert r1.distance_error == r2.distance_error
        assert [e.pose for e in r1.trace] == [e.pose for e in r2.trace]

    def test_codec_roundtrip_residuals_on_matches_oracle_precision(self):
        scene = room_with_target()
        task = make_task(scene, Pose2(0, 0, 0), Pose2(3.0, 0, 0))
        res = run_episode(
            scene, task, CodecRoundtripPolicy(OraclePolicy(scene=scene), use_residual=True), CFG_OMNI
        )
        assert res.outcome == "reached"
        assert res.distance_error <= CFG_OMNI.stop_pos_tol + 1e-9

    def test_config_validation(self):
        with pytest.raises(ValueError):
            ExecutorConfig(replan_every=13, horizon_n=12)
        with pytest.raises(ValueError):
            ExecutorConfig(stop_pos_tol=0.0)

    def test_error_shrinks_with_stop_tolerance(self):
        scene = room_with_target()
        task = make_task(scene, Pose2(0, 0, 0), Pose2(3.0, 0, 0))
        errors = []
        for tol in (0.05, 0.02, 0.01):
            cfg = replace(CFG_OMNI, stop_pos_tol=tol)
            res = run_episode(scene, task, OraclePolicy(scene=scene), cfg)
            assert res.outcome == "reached"
            assert res.distance_error <= tol + 1e-9
            errors.append(res.distance_error)
        assert errors[-1] <= errors[0] + 1e-9
