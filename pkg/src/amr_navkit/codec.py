"""Trajectory and sensor tokenization.

Covers the discrete action interface: egocentric polar waypoint steps
quantized into uniform bins with arithmetic residuals, LiDAR scans
regrouped into directional point bins, depth-image backprojection into
robot-frame points, and sinusoidal position features.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

from .errors import OutOfRange
from .geometry import CameraModel, Pose2, camera_to_robot_rotation, se2_compose, wrap_2pi

if TYPE_CHECKING:
    from .scene import LidarScan

# bin layout for one waypoint sub-action (direction, distance, heading)
PSI_BINS = 30
R_BINS = 32
PHI_BINS = 12
R_MAX = 0.2

PSI_WIDTH = 2.0 * math.pi / PSI_BINS
R_WIDTH = R_MAX / R_BINS
PHI_WIDTH = 2.0 * math.pi / PHI_BINS

# LiDAR regrouping: 256 resampled points in 32 contiguous directional bins
LIDAR_POINTS = 256
LIDAR_GROUPS = 32
DEPTH_CELLS = 14


@dataclass(frozen=True)
class PolarStep:
    """One egocentric waypoint step in its predecessor's frame.

    psi is the displacement direction, r the displacement length, phi the
    new heading; psi and phi live in [0, 2*pi), r in [0, R_MAX].
    """

    psi: float
    r: float
    phi: float

    def __post_init__(self):
        object.__setattr__(self, "psi", wrap_2pi(self.psi))
        object.__setattr__(self, "phi", wrap_2pi(self.phi))
        if not -1e-12 <= self.r <= R_MAX + 1e-9:
            raise OutOfRange(f"step distance {self.r} outside [0, {R_MAX}]")


@dataclass(frozen=True)
class TokenizedStep:
    """Quantized polar step: bin indices plus residuals from bin centers."""

    psi_bin: int
    r_bin: int
    phi_bin: int
    psi_res: float
    r_res: float
    phi_res: float

    def without_residual(self) -> "TokenizedStep":
        return TokenizedStep(self.psi_bin, self.r_bin, self.phi_bin, 0.0, 0.0, 0.0)


def _quantize(value: float, width: float, nbins: int) -> tuple[int, float]:
    idx = min(int(value / width), nbins - 1)
    return idx, value - (idx + 0.5) * width


def encode_step(step: PolarStep) -> TokenizedStep:
    """Quantize a polar step into uniform bins with residuals.

    Bins are half-open [i*w, (i+1)*w) with the top bin clamped so the range
    maximum still encodes; the residual is the offset from the bin center.
    """
    if step.r > R_MAX + 1e-9:
        raise OutOfRange(f"step distance {step.r} exceeds {R_MAX}")
    psi_bin, psi_res = _quantize(step.psi, PSI_WIDTH, PSI_BINS)
    r_bin, r_res = _quantize(step.r, R_WIDTH, R_BINS)
    phi_bin, phi_res = _quantize(step.phi, PHI_WIDTH, PHI_BINS)
    return TokenizedStep(psi_bin, r_bin, phi_bin, psi_res, r_res, phi_res)


def decode_step(tok: TokenizedStep, use_residual: bool = True) -> PolarStep:
    """Recover a continuous step as bin center plus (optionally) the residual."""
    if not (0 <= tok.psi_bin < PSI_BINS and 0 <= tok.r_bin < R_BINS and 0 <= tok.phi_bin < PHI_BINS):
        raise ValueError("bin index out of range")
    psi = (tok.psi_bin + 0.5) * PSI_WIDTH
    r = (tok.r_bin + 0.5) * R_WIDTH
    phi = (tok.phi_bin + 0.5) * PHI_WIDTH
    if use_residual:
        psi += tok.psi_res
        r += tok.r_res
        phi += tok.phi_res
    return PolarStep(psi, max(0.0, min(r, R_MAX)), phi)


def step_from_pose(rel: Pose2) -> PolarStep:
    """Convert an egocentric pose delta into a polar step (psi=0 for zero motion)."""
    r = math.hypot(rel.x, rel.y)
    psi = math.atan2(rel.y, rel.x) if r > 1e-12 else 0.0
    return PolarStep(psi, r, rel.heading)


def pose_from_step(step: PolarStep) -> Pose2:
    """Pose delta in the predecessor frame realizing a polar step."""
    return Pose2(step.r * math.cos(step.psi), step.r * math.sin(step.psi), step.phi)


def encode_trajectory(waypoints: list[Pose2]) -> list[TokenizedStep]:
    """Tokenize a chain of egocentric pose deltas (each in its predecessor's frame)."""
    return [encode_step(step_from_pose(rel)) for rel in waypoints]


def decode_trajectory(
    tokens: list[TokenizedStep], base: Pose2, use_residual: bool = True
) -> list[Pose2]:
    """Chain decoded steps forward from a world base pose; returns world waypoints."""
    poses = []
    cur = base
    for tok in tokens:
        cur = se2_compose(cur, pose_from_step(decode_step(tok, use_residual)))
        poses.append(cur)
    return poses


@dataclass(frozen=True)
class LidarTokens:
    """256 robot-frame LiDAR points arranged as 32 directional groups of 8."""

    points: np.ndarray  # (32, 8, 2)

    def __post_init__(self):
        if self.points.shape != (LIDAR_GROUPS, LIDAR_POINTS // LIDAR_GROUPS, 2):
            raise ValueError(f"expected (32, 8, 2) points, got {self.points.shape}")


def lidar_tokens(scan: "LidarScan") -> LidarTokens:
    """Resample a scan to 256 points by angular interpolation and group them.

    Group k holds the 8 consecutive points whose bearings fall in the
    half-open 11.25-degree sector starting at k * 2*pi/32.
    """
    src_angles = np.arange(scan.num_rays) * (2.0 * math.pi / scan.num_rays)
    dst_angles = np.arange(LIDAR_POINTS) * (2.0 * math.pi / LIDAR_POINTS)
    ranges = np.interp(
        dst_angles,
        np.concatenate([src_angles, [2.0 * math.pi]]),
        np.concatenate([scan.ranges, [scan.ranges[0]]]),
    )
    pts = np.stack([ranges * np.cos(dst_angles), ranges * np.sin(dst_angles)], axis=1)
    return LidarTokens(pts.reshape(LIDAR_GROUPS, LIDAR_POINTS // LIDAR_GROUPS, 2))


@dataclass(frozen=True)
class DepthGrid:
    """A low-resolution depth image with per-cell robot-frame 3D points."""

    depth: np.ndarray  # (14, 14) meters
    points: np.ndarray  # (14, 14, 3) robot frame, x forward / y left / z up


def backproject_depth(depth: np.ndarray, camera: CameraModel, tilt: float) -> DepthGrid:
    """Lift a 14x14 depth grid into robot-frame 3D points.

    Each cell is backprojected through the camera intrinsics at the cell
    center pixel of the downscaled image and mapped by the camera-to-robot
    extrinsics (mount height plus downward tilt).
    """
    depth = np.asarray(depth, dtype=float)
    if depth.shape != (DEPTH_CELLS, DEPTH_CELLS):
        raise ValueError(f"expected ({DEPTH_CELLS}, {DEPTH_CELLS}) depth, got {depth.shape}")
    if np.any(depth <= 0):
        raise ValueError("depth values must be positive")
    su = camera.image_width_px / DEPTH_CELLS
    sv = camera.image_height_px / DEPTH_CELLS
    u = (np.arange(DEPTH_CELLS) + 0.5) * su
    v = (np.arange(DEPTH_CELLS) + 0.5) * sv
    uu, vv = np.meshgrid(u, v)  # vv varies along rows
    x_cam = (uu - camera.cx_px) / camera.fx * depth
    y_cam = (vv - camera.cy_px) / camera.fy * depth
    cam_pts = np.stack([x_cam, y_cam, depth], axis=-1)
    rot = camera_to_robot_rotation(tilt)
    pts = cam_pts @ rot.T + np.array([0.0, 0.0, camera.height])
    return DepthGrid(depth=depth, points=pts)


def sinusoidal_embed(value: float, dims: int = 64, base: float = 10000.0) -> np.ndarray:
    """Interleaved sin/cos position embedding; pair j uses frequency base^(-2j/dims)."""
    if dims < 2 or dims % 2 != 0:
        raise ValueError("dims must be an even number >= 2")
    freqs = base ** (-2.0 * np.arange(dims // 2) / dims)
    out = np.empty(dims)
    out[0::2] = np.sin(value * freqs)
    out[1::2] = np.cos(value * freqs)
    return out


def depth_position_features(grid: DepthGrid, dims: int = 64, base: float = 10000.0) -> np.ndarray:
    """Per-cell positional feature: concatenated embeddings of x', y', z'."""
    feats = np.empty((DEPTH_CELLS, DEPTH_CELLS, 3 * dims))
    for i in range(DEPTH_CELLS):
        for j in range(DEPTH_CELLS):
            x, y, z = grid.points[i, j]
            feats[i, j] = np.concatenate(
                [
                    sinusoidal_embed(x, dims, base),
                    sinusoidal_embed(y, dims, base),
                    sinusoidal_embed(z, dims, base),
                ]
            )
    return feats
