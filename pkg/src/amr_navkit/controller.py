"""Closed-loop execution: pure-pursuit tracking, tilt regulation, replanning.

An episode queries a trajectory policy on a fixed cadence, tracks the
decoded world-frame waypoints with pure pursuit, slews the camera tilt
toward its geometric setpoint every step, and terminates on reaching the
goal, colliding, exhausting the step budget, or the policy reporting that
no path exists.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Protocol, Sequence

import numpy as np

from .codec import TokenizedStep, decode_trajectory, encode_trajectory
from .errors import EmptyTrajectory, InvalidCommand, NoPathFound
from .geometry import (
    CameraModel,
    Pose2,
    compute_tilt,
    pose_error,
    se2_relative,
    wrap_angle,
)
from .planner import (
    CostWeights,
    PlannerBudget,
    plan,
    waypoints_from_path,
)
from .scene import (
    Command,
    DiffDrive,
    LidarScan,
    OmniDrive,
    RobotState,
    Scene,
    SpeedLimits,
    clearance,
    command_omega,
    command_speed,
    raycast_lidar,
    step_kinematics,
)


@dataclass(frozen=True)
class ExecutorConfig:
    """Closed-loop execution parameters."""

    horizon_n: int = 12
    dt: float = 0.2
    replan_every: int = 8
    lookahead: float = 0.3
    speed: float = 0.5
    stop_pos_tol: float = 0.01
    stop_ang_tol: float = math.radians(0.5)
    max_steps: int = 600
    kinematics: str = "omnidirectional"
    wheelbase: float | None = None
    omega_gain: float = 2.0
    tilt_rate: float = math.radians(90.0)  # slew limit, rad/s
    tilt_limit: float = math.radians(60.0)
    v_max: float = 1.5
    omega_max: float = 3.0

    def __post_init__(self):
        if self.replan_every > self.horizon_n:
            raise ValueError("replan_every must not exceed horizon_n")
        if min(self.stop_pos_tol, self.stop_ang_tol) <= 0:
            raise ValueError("stop tolerances must be positive")

    @property
    def limits(self) -> SpeedLimits:
        return SpeedLimits(self.v_max, self.omega_max)


@dataclass(frozen=True)
class TraceEntry:
    step: int
    pose: Pose2
    tilt: float
    trajectory_id: int


@dataclass
class EpisodeResult:
    outcome: str  # reached | collision | timeout | no_path
    final_pose: Pose2
    distance_error: float
    angle_error: float  # degrees
    steps: int
    min_clearance: float
    trace: list[TraceEntry] = field(default_factory=list)


@dataclass(frozen=True)
class PolicyAction:
    """One policy query result: a tokenized waypoint horizon plus a tilt target."""

    steps: list[TokenizedStep]
    tilt: float


class TrajectoryPolicy(Protocol):
    """Anything that maps (state, scan, task, step) to tokenized waypoints."""

    def query(self, state: RobotState, scan: LidarScan, task, step: int) -> PolicyAction:
        ...


def _zero_command(kinematics: str) -> Command:
    if kinematics == "omnidirectional":
        return OmniDrive(0.0, 0.0, 0.0)
    return DiffDrive(0.0, 0.0)


def pure_pursuit(state: RobotState, trajectory_world: Sequence[Pose2], cfg: ExecutorConfig) -> Command:
    """Track a world-frame waypoint list with the pure-pursuit steering law.

    The target is the first waypoint at least one lookahead away (else the
    last). Near the trajectory end the speed tapers linearly with remaining
    distance and the final heading is aligned in place, so the commanded
    velocity reaches exactly zero once both stop tolerances are met.
    """
    if len(trajectory_world) == 0:
        raise EmptyTrajectory("pure pursuit needs at least one waypoint")
    if state.kinematics not in ("differential", "omnidirectional"):
        raise InvalidCommand(f"pure pursuit does not support {state.kinematics} kinematics")

    pos = np.array([state.pose.x, state.pose.y])
    pts = np.array([[p.x, p.y] for p in trajectory_world])
    dists = np.linalg.norm(pts - pos, axis=1)
    ahead = np.flatnonzero(dists >= cfg.lookahead)
    target = pts[int(ahead[0])] if ahead.size else pts[-1]
    terminal = trajectory_world[-1]
    goal_dist = float(dists[-1])
    heading_err = wrap_angle(terminal.heading - state.pose.heading)

    # linear speed taper inside 2 lookaheads of the trajectory end
    v_mag = min(cfg.speed, cfg.v_max) * min(1.0, goal_dist / (2 * cfg.lookahead))

    if state.kinematics == "omnidirectional":
        # position and heading servo independently, each with a deadband at
        # its stop tolerance, so the command reaches exactly zero at the end
        if goal_dist <= cfg.stop_pos_tol:
            vel = np.zeros(2)
        else:
            to_target = target - pos
            norm = float(np.linalg.norm(to_target))
            vel = v_mag * to_target / norm if norm > 1e-12 else np.zeros(2)
        if abs(heading_err) <= cfg.stop_ang_tol:
            omega = 0.0
        else:
            omega = float(np.clip(cfg.omega_gain * heading_err, -cfg.omega_max, cfg.omega_max))
        return OmniDrive(float(vel[0]), float(vel[1]), omega)

    if goal_dist <= cfg.stop_pos_tol:
        if abs(heading_err) <= cfg.stop_ang_tol:
            return _zero_command(state.kinematics)
        omega = float(np.clip(cfg.omega_gain * heading_err, -cfg.omega_max, cfg.omega_max))
        return DiffDrive(0.0, omega)

    c, s = math.cos(state.pose.heading), math.sin(state.pose.heading)
    rel = target - pos
    local_x = c * rel[0] + s * rel[1]
    local_y = -s * rel[0] + c * rel[1]
    dist_sq = local_x * local_x + local_y * local_y
    if dist_sq < 1e-18:
        omega = float(np.clip(cfg.omega_gain * heading_err, -cfg.omega_max, cfg.omega_max))
        return DiffDrive(0.0, omega)
    v = v_mag if local_x >= 0 else -v_mag
    omega = float(np.clip(2.0 * v * local_y / dist_sq, -cfg.omega_max, cfg.omega_max))
    return DiffDrive(v, omega)


def tilt_step(
    state: RobotState,
    camera: CameraModel,
    target_lowest_point: tuple[float, float, float],
    cfg: ExecutorConfig,
) -> float:
    """One slew-limited tilt update toward the geometric gaze setpoint."""
    try:
        setpoint = compute_tilt(camera, state.pose, target_lowest_point, tilt_limit=None)
    except ValueError:
        return state.tilt  # point on the camera axis; hold tilt
    setpoint = float(np.clip(setpoint, -cfg.tilt_limit, cfg.tilt_limit))
    slew = cfg.tilt_rate * cfg.dt
    return float(np.clip(setpoint, state.tilt - slew, state.tilt + slew))


def run_episode(
    scene: Scene,
    task,
    policy: TrajectoryPolicy,
    cfg: ExecutorConfig = ExecutorConfig(),
    camera: CameraModel = CameraModel.pinhole(),
    num_rays: int = 360,
    max_range: float = 10.0,
) -> EpisodeResult:
    """Run one closed-loop episode; deterministic given scene, task and policy."""
    state = RobotState(
        pose=task.start,
        radius=task.robot_radius,
        tilt=0.0,
        kinematics=cfg.kinematics,
        wheelbase=cfg.wheelbase,
    )
    target = scene.object_by_id(task.target_id)
    lowest = (target.box.cx, target.box.cy, target.base_height)

    trajectory: list[Pose2] = []
    trace: list[TraceEntry] = []
    traj_id = 0
    outcome = "timeout"
    min_clear = clearance(scene, state.pose, state.radius)

    for step in range(cfg.max_steps):
        if step % cfg.replan_every == 0:
            scan = raycast_lidar(scene, state.pose, num_rays, max_range)
            try:
                action = policy.query(state, scan, task, step)
            except NoPathFound:
                outcome = "no_path"
                break
            trajectory = decode_trajectory(action.steps, state.pose, use_residual=True)
            traj_id += 1

        cmd = pure_pursuit(state, trajectory, cfg)
        state = replace(state, tilt=tilt_step(state, camera, lowest, cfg))
        trace.append(TraceEntry(step, state.pose, state.tilt, traj_id))

        dist_err, ang_err = pose_error(state.pose, task.goal_pose)
        if (
            command_speed(cmd) < 1e-9
            and command_omega(cmd) < 1e-9
            and dist_err <= cfg.stop_pos_tol
            and ang_err <= math.degrees(cfg.stop_ang_tol)
        ):
            outcome = "reached"
            break

        state = step_kinematics(state, cmd, cfg.dt, cfg.limits)
        cl = clearance(scene, state.pose, state.radius)
        min_clear = min(min_clear, cl)
        if cl < 0:
            outcome = "collision"
            break

    dist_err, ang_err = pose_error(state.pose, task.goal_pose)
    return EpisodeResult(
        outcome=outcome,
        final_pose=state.pose,
        distance_error=dist_err,
        angle_error=ang_err,
        steps=len(trace),
        min_clearance=min_clear,
        trace=trace,
    )


# ---------------------------------------------------------------------------
# built-in policies


@dataclass
class OraclePolicy:
    """Expert policy: replans from the current state on every query.

    Planning uses a safety-margin-inflated footprint when possible so the
    tracked rollout keeps clearance; falls back to the true radius when the
    inflated problem has no solution.
    """

    scene: Scene
    weights: CostWeights = CostWeights()
    budget: PlannerBudget = PlannerBudget(batches=2, batch_size=16)
    camera: CameraModel = CameraModel.pinhole()
    horizon_n: int = 12
    dt: float = 0.2
    v_ref: float = 0.5
    omega_ref: float = 1.0
    safety_margin: float = 0.1
    snap_dist: float = 0.01
    seed: int = 0
    queries: int = 0

    def _plan(self, state: RobotState, task):
        from .errors import InvalidEndpoint

        target = self.scene.object_by_id(task.target_id)
        plan_seed = (self.seed * 1000003 + self.queries) % (2**63)
        # escalate the sampling budget (with fresh seeds) before giving up
        attempts = []
        for level, factor in enumerate((1, 3, 8)):
            budget = PlannerBudget(factor * self.budget.batches, self.budget.batch_size)
            seed = (plan_seed + level * 7_777_777) % (2**63)
            attempts.append((state.radius + self.safety_margin, budget, seed))
            attempts.append((state.radius, budget, seed))
        for radius, budget, seed in attempts:
            try:
                return plan(
                    self.scene,
                    state.pose,
                    task.goal_pose,
                    radius,
                    target.box.center,
                    self.weights,
                    budget,
                    seed=seed,
                )
            except (NoPathFound, InvalidEndpoint):
                continue
        raise NoPathFound("oracle could not plan to the goal")

    def _terminal_rotation(self, state: RobotState, task) -> list[Pose2]:
        """Hold the goal position and walk the heading to the goal heading.

        Used once the base is within the snap distance: replanning a
        sub-centimeter positional hop would otherwise spin the robot toward
        an arbitrary hop bearing on every replan.
        """
        goal = task.goal_pose
        steps = []
        prev = state.pose
        h = state.pose.heading
        for _ in range(self.horizon_n):
            err = wrap_angle(goal.heading - h)
            h = h + float(np.clip(err, -self.omega_ref * self.dt, self.omega_ref * self.dt))
            pose = Pose2(goal.x, goal.y, h)
            steps.append(pose)
        out = []
        for p in steps:
            out.append(se2_relative(prev, p))
            prev = p
        return out

    def query(self, state: RobotState, scan: LidarScan, task, step: int) -> PolicyAction:
        goal_dist = math.hypot(task.goal_pose.x - state.pose.x, task.goal_pose.y - state.pose.y)
        if goal_dist <= self.snap_dist:
            waypoints = self._terminal_rotation(state, task)
        else:
            path = self._plan(state, task)
            self.queries += 1
            waypoints = waypoints_from_path(
                path, state.pose, self.horizon_n, self.dt, self.v_ref, self.omega_ref
            )
        target = self.scene.object_by_id(task.target_id)
        tilt = compute_tilt(
            self.camera,
            state.pose,
            (target.box.cx, target.box.cy, target.base_height),
            tilt_limit=None,
        )
        return PolicyAction(steps=encode_trajectory(waypoints), tilt=tilt)


@dataclass
class CodecRoundtripPolicy:
    """Oracle filtered through the codec, optionally dropping the residuals.

    With residuals kept the roundtrip is exact; with them zeroed the decoded
    trajectory snaps to bin centers, exposing the raw quantization error.
    """

    inner: OraclePolicy
    use_residual: bool = True

    def query(self, state: RobotState, scan: LidarScan, task, step: int) -> PolicyAction:
        action = self.inner.query(state, scan, task, step)
        if self.use_residual:
            return action
        return PolicyAction(
            steps=[s.without_residual() for s in action.steps], tilt=action.tilt
        )
