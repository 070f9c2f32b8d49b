"""Differential-drive robot model: kinematics, sensor simulation, battery."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .world import OccupancyGrid, Pose2D, ray_circle_distance, raycast_many

# straight-line fallback threshold for the arc integrator
_W_EPS = 1e-10


@dataclass
class LidarParams:
    beam_count: int = 72
    max_range: float = 10.0
    range_noise_sigma: float = 0.02


@dataclass
class UltrasonicParams:
    count: int = 10
    max_range: float = 2.0
    cone_halfangle: float = math.radians(15.0)
    rays_per_cone: int = 5


@dataclass
class RobotConfig:
    footprint_radius: float = 0.30
    max_linear_speed: float = 0.6
    max_angular_speed: float = 1.5
    base_load_w: float = 180.0
    lamp_power_w: float = 30.0
    lamps_per_side: int = 4
    lidar: LidarParams = field(default_factory=LidarParams)
    ultrasonic: UltrasonicParams = field(default_factory=UltrasonicParams)


@dataclass
class Twist:
    v: float = 0.0
    w: float = 0.0

    def clamped(self, config: RobotConfig) -> "Twist":
        v = min(max(self.v, -config.max_linear_speed), config.max_linear_speed)
        w = min(max(self.w, -config.max_angular_speed), config.max_angular_speed)
        return Twist(v, w)


@dataclass
class Scan:
    """Range scan in the robot frame: angles[i] is the bearing of ranges[i]."""

    angles: np.ndarray
    ranges: np.ndarray
    max_range: float
    t: float = 0.0


@dataclass
class BatteryState:
    capacity_wh: float = 1200.0
    remaining_wh: float = 1200.0

    @property
    def depleted(self) -> bool:
        return self.remaining_wh <= 0.0


def step_kinematics(pose: Pose2D, twist: Twist, dt: float) -> Pose2D:
    """Integrate the unicycle model exactly over dt.

    Constant (v, w) traces a circular arc of radius v/w; near-zero w falls
    back to a straight segment.  Exact integration makes the step composable:
    two steps of dt equal one step of 2*dt up to float rounding.
    """
    if dt < 0:
        raise ValueError("dt must be non-negative")
    v, w = twist.v, twist.w
    if abs(w) < _W_EPS:
        return Pose2D(pose.x + v * dt * math.cos(pose.theta),
                      pose.y + v * dt * math.sin(pose.theta),
                      pose.theta)
    radius = v / w
    theta1 = pose.theta + w * dt
    return Pose2D(pose.x + radius * (math.sin(theta1) - math.sin(pose.theta)),
                  pose.y - radius * (math.cos(theta1) - math.cos(pose.theta)),
                  theta1)


def lidar_beam_angles(beam_count: int) -> np.ndarray:
    """Robot-frame bearings of the merged 360-degree scan, evenly spaced."""
    return -math.pi + 2.0 * math.pi * np.arange(beam_count) / beam_count


def ultrasonic_bearings(count: int) -> np.ndarray:
    return 2.0 * math.pi * np.arange(count) / count


def _obstacle_hits(x: float, y: float, angles: np.ndarray,
                   obstacles, max_range: float) -> np.ndarray:
    """Min ray-circle distance per world-frame angle, capped at max_range."""
    hits = np.full(angles.shape[0], max_range)
    for cx, cy, radius in obstacles:
        for k in range(angles.shape[0]):
            t = ray_circle_distance(x, y, math.cos(angles[k]),
                                    math.sin(angles[k]), cx, cy, radius)
            if t < hits[k]:
                hits[k] = t
    return hits


def simulate_lidar(grid: OccupancyGrid, pose: Pose2D, config: RobotConfig,
                   rng: np.random.Generator, obstacles=(), t: float = 0.0) -> Scan:
    """Simulate the merged lidar: grid raycasts plus dynamic disk obstacles,
    with additive Gaussian range noise, clipped to [0, max_range]."""
    params = config.lidar
    angles = lidar_beam_angles(params.beam_count)
    world_angles = angles + pose.theta
    ranges = raycast_many(grid, pose.x, pose.y, world_angles, params.max_range)
    if obstacles:
        hits = _obstacle_hits(pose.x, pose.y, world_angles, obstacles,
                              params.max_range)
        ranges = np.minimum(ranges, hits)
    if params.range_noise_sigma > 0:
        # noise only perturbs beams that actually returned; a no-return is
        # reported as exactly max_range, never as a slightly-shorter phantom
        noise = rng.normal(0.0, params.range_noise_sigma,
                           size=params.beam_count)
        returned = ranges < params.max_range
        ranges = np.where(returned, ranges + noise, params.max_range)
    ranges = np.clip(ranges, 0.0, params.max_range)
    return Scan(angles=angles, ranges=ranges, max_range=params.max_range, t=t)


def simulate_ultrasonic(grid: OccupancyGrid, pose: Pose2D, config: RobotConfig,
                        obstacles=(), t: float = 0.0) -> Scan:
    """Simulate the ultrasonic ring: each sensor reports the minimum range
    over a fan of rays across its cone.  Deterministic (no noise)."""
    params = config.ultrasonic
    bearings = ultrasonic_bearings(params.count)
    offsets = np.linspace(-params.cone_halfangle, params.cone_halfangle,
                          params.rays_per_cone)
    ranges = np.empty(params.count)
    for i, bearing in enumerate(bearings):
        fan = pose.theta + bearing + offsets
        dists = raycast_many(grid, pose.x, pose.y, fan, params.max_range)
        if obstacles:
            hits = _obstacle_hits(pose.x, pose.y, fan, obstacles,
                                  params.max_range)
            dists = np.minimum(dists, hits)
        ranges[i] = dists.min()
    return Scan(angles=bearings, ranges=ranges, max_range=params.max_range, t=t)


def simulate_odometry(twist: Twist, sigma_v: float, sigma_w: float,
                      rng: np.random.Generator) -> Twist:
    """True twist corrupted by additive Gaussian noise on (v, w)."""
    return Twist(twist.v + rng.normal(0.0, sigma_v),
                 twist.w + rng.normal(0.0, sigma_w))


def consume_power(state: BatteryState, lamps_on: int, base_load_w: float,
                  dt: float, lamp_power_w: float = 30.0) -> BatteryState:
    """Drain the battery by (lamps_on * lamp_power + base_load) * dt.

    dt is in seconds; the battery is floored at zero.
    """
    if dt < 0:
        raise ValueError("dt must be non-negative")
    if lamps_on < 0:
        raise ValueError("lamps_on must be non-negative")
    load_w = lamps_on * lamp_power_w + base_load_w
    drained = state.remaining_wh - load_w * dt / 3600.0
    return BatteryState(state.capacity_wh, max(0.0, drained))
