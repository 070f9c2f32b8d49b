"""Reactive safety layer: collision guard, UV-C lamp interlock, status LED."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .world import HumanAgent, OccupancyGrid, Pose2D, raycast, wrap_angle
from .robot import Scan, Twist


class Side(Enum):
    LEFT = "left"
    RIGHT = "right"


class LedStatus(Enum):
    WAITING = "waiting"
    MOVING_TO_GOAL = "moving_to_goal"
    AVOIDING = "avoiding"
    ERROR = "error"


@dataclass
class LampBank:
    """One side-facing bank of UV-C lamps.

    lamps_set is the commanded level; lamps_on is what actually emits after
    the interlock has had its say.  The bank irradiates the open half-plane
    on its side of the robot's fore-aft axis.
    """

    side: Side
    lamps_set: int = 0
    lamps_on: int = 0
    unsafe_until: float = -math.inf

    def __post_init__(self) -> None:
        if not 0 <= self.lamps_set <= 4 or not 0 <= self.lamps_on <= 4:
            raise ValueError("lamp counts must be within 0..4")


def side_offset(pose: Pose2D, px: float, py: float) -> float:
    """Signed lateral offset of a world point in the robot frame (+ = left)."""
    return (-math.sin(pose.theta) * (px - pose.x)
            + math.cos(pose.theta) * (py - pose.y))


def in_half_plane(bank: LampBank, pose: Pose2D, px: float, py: float) -> bool:
    off = side_offset(pose, px, py)
    return off > 0.0 if bank.side == Side.LEFT else off < 0.0


def los_clear(grid: OccupancyGrid, pose: Pose2D, px: float, py: float) -> bool:
    """Line of sight from the robot to a world point, at grid granularity."""
    dist = math.hypot(px - pose.x, py - pose.y)
    if dist < grid.resolution:
        return True
    angle = math.atan2(py - pose.y, px - pose.x)
    return raycast(grid, pose.x, pose.y, angle, dist) >= dist - grid.resolution


@dataclass
class GuardParams:
    stop_distance: float = 0.35
    slow_distance: float = 0.9
    sector_halfangle: float = math.radians(60.0)
    v_limit: float = 0.6  # cap scale; normally the robot's max linear speed


def _sector_min_range(scan: Scan, center: float, halfangle: float) -> float:
    rel = np.abs(np.asarray([wrap_angle(a - center) for a in scan.angles]))
    sel = rel <= halfangle + 1e-12
    if not sel.any():
        return math.inf
    return float(scan.ranges[sel].min())


def collision_guard(twist: Twist, scan: Scan, ultrasonic: Scan | None,
                    params: GuardParams) -> Twist:
    """Cap the commanded speed from ranges in the motion-direction sector.

    Below stop_distance the twist is zeroed outright; between stop and slow
    the speed is capped at v_limit scaled linearly with clearance.  The cap
    depends only on the measured clearance, which makes the guard idempotent.
    Pure rotation (v == 0) passes through untouched.
    """
    if twist.v == 0.0:
        return Twist(twist.v, twist.w)
    center = 0.0 if twist.v > 0.0 else math.pi
    d = _sector_min_range(scan, center, params.sector_halfangle)
    if ultrasonic is not None:
        d = min(d, _sector_min_range(ultrasonic, center, params.sector_halfangle))
    if d < params.stop_distance:
        return Twist(0.0, 0.0)
    if d < params.slow_distance:
        span = params.slow_distance - params.stop_distance
        cap = params.v_limit * (d - params.stop_distance) / span
        v = math.copysign(min(abs(twist.v), cap), twist.v)
        return Twist(v, twist.w)
    return Twist(twist.v, twist.w)


@dataclass
class DetectionParams:
    detect_range: float = 10.0
    sector_halfangle: float = math.radians(45.0)
    sector_centers: tuple = (0.0, math.pi / 2.0, math.pi, -math.pi / 2.0)
    miss_rate: float = 0.0


def detect_humans(agents: list[HumanAgent], pose: Pose2D, grid: OccupancyGrid,
                  params: DetectionParams,
                  rng: np.random.Generator | None = None) -> list[bool]:
    """Camera-ring detection: in range, inside a camera sector, line of sight
    clear.  Deterministic unless a miss_rate and rng are supplied."""
    out = []
    for agent in agents:
        dx = agent.pose.x - pose.x
        dy = agent.pose.y - pose.y
        dist = math.hypot(dx, dy)
        if dist > params.detect_range:
            out.append(False)
            continue
        bearing = wrap_angle(math.atan2(dy, dx) - pose.theta)
        in_sector = any(abs(wrap_angle(bearing - c)) <= params.sector_halfangle + 1e-12
                        for c in params.sector_centers)
        if not in_sector:
            out.append(False)
            continue
        if not los_clear(grid, pose, agent.pose.x, agent.pose.y):
            out.append(False)
            continue
        if params.miss_rate > 0.0 and rng is not None:
            out.append(bool(rng.random() >= params.miss_rate))
        else:
            out.append(True)
    return out


@dataclass
class InterlockParams:
    safety_radius: float = 3.0
    holdoff: float = 3.0


def lamp_interlock(banks: list[LampBank], agents: list[HumanAgent],
                   detected: list[bool], pose: Pose2D, t: float,
                   params: InterlockParams) -> dict:
    """Force banks dark while a detected human occupies their safety zone.

    A bank's zone is the intersection of its emission half-plane and the
    safety radius.  The bank re-arms only after its zone has stayed clear
    for the hold-off period.  Returns {side: zone_occupied} for logging.
    """
    occupied = {}
    for bank in banks:
        zone = False
        for agent, seen in zip(agents, detected):
            if not seen:
                continue
            if math.hypot(agent.pose.x - pose.x, agent.pose.y - pose.y) > params.safety_radius:
                continue
            if in_half_plane(bank, pose, agent.pose.x, agent.pose.y):
                zone = True
                break
        if zone:
            bank.lamps_on = 0
            bank.unsafe_until = t + params.holdoff
        elif t >= bank.unsafe_until:
            bank.lamps_on = bank.lamps_set
        else:
            bank.lamps_on = 0
        occupied[bank.side] = zone
    return occupied


def led_status(error: bool, avoiding: bool, has_goal: bool) -> LedStatus:
    """Priority: error > avoiding > moving to goal > waiting."""
    if error:
        return LedStatus.ERROR
    if avoiding:
        return LedStatus.AVOIDING
    if has_goal:
        return LedStatus.MOVING_TO_GOAL
    return LedStatus.WAITING
