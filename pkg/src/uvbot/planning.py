"""Coverage trajectory generation, costmap path planning, pure-pursuit following."""
from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy import ndimage

from .world import OccupancyGrid, Pose2D, wrap_angle
from .robot import Twist

_TOL = 1e-9


class TrajectoryKind(Enum):
    SSHAPE = "sshape"
    ROLLING_RPS = "rollingup"
    UNFOLDING_RPS = "unfolding"
    PLANNED = "planned"


@dataclass
class Rect:
    x0: float
    y0: float
    x1: float
    y1: float

    def __post_init__(self) -> None:
        if self.x1 <= self.x0 or self.y1 <= self.y0:
            raise ValueError("rect must have positive extent")

    @property
    def width(self) -> float:
        return self.x1 - self.x0

    @property
    def height(self) -> float:
        return self.y1 - self.y0


@dataclass
class Trajectory:
    kind: TrajectoryKind
    waypoints: list
    lane_spacing: float = 0.0
    _cum: np.ndarray = field(default=None, repr=False, compare=False)

    def __post_init__(self) -> None:
        if len(self.waypoints) < 2:
            raise ValueError("trajectory needs at least two waypoints")
        for (x0, y0), (x1, y1) in zip(self.waypoints, self.waypoints[1:]):
            if abs(x1 - x0) <= _TOL and abs(y1 - y0) <= _TOL:
                raise ValueError("consecutive waypoints must be distinct")

    def points(self) -> np.ndarray:
        return np.asarray(self.waypoints, dtype=float)

    def cumulative_lengths(self) -> np.ndarray:
        if self._cum is None:
            pts = self.points()
            seg = np.hypot(np.diff(pts[:, 0]), np.diff(pts[:, 1]))
            self._cum = np.concatenate([[0.0], np.cumsum(seg)])
        return self._cum

    @property
    def length(self) -> float:
        return float(self.cumulative_lengths()[-1])

    def point_at(self, s: float) -> tuple[float, float]:
        """Point at arc length s, clamped to the path ends."""
        cum = self.cumulative_lengths()
        s = min(max(s, 0.0), cum[-1])
        i = int(np.searchsorted(cum, s, side="right")) - 1
        i = min(i, len(self.waypoints) - 2)
        seg = cum[i + 1] - cum[i]
        u = 0.0 if seg <= 0 else (s - cum[i]) / seg
        x0, y0 = self.waypoints[i]
        x1, y1 = self.waypoints[i + 1]
        return (x0 + u * (x1 - x0), y0 + u * (y1 - y0))

    def reversed(self, kind: TrajectoryKind) -> "Trajectory":
        return Trajectory(kind, list(reversed(self.waypoints)), self.lane_spacing)


def waypoints_csv(traj: Trajectory) -> str:
    """One "x,y" line per waypoint."""
    return "\n".join(f"{x!r},{y!r}" for x, y in traj.waypoints) + "\n"


def _lane_offsets(extent: float, spacing: float) -> list[float]:
    # Centered lane stack: pitch = spacing, leftover split evenly between the
    # two outer gaps so a disk of radius spacing/2 reaches the rect edges.
    k = int(math.floor(extent / spacing + _TOL))
    pad = (extent - k * spacing) / 2.0
    return [pad + i * spacing for i in range(k + 1)]


def gen_s_shape(rect: Rect, spacing: float, inset: float = 0.5) -> Trajectory:
    """Boustrophedon sweep with lanes parallel to the rect's long side."""
    if spacing <= 0:
        raise ValueError("spacing must be positive")
    ux = rect.width - 2.0 * inset
    uy = rect.height - 2.0 * inset
    if ux < -_TOL or uy < -_TOL or max(ux, uy) <= _TOL:
        raise ValueError("rect too small for one lane at this inset")
    along_x = rect.width >= rect.height
    if along_x:
        lanes = [rect.y0 + inset + o for o in _lane_offsets(uy, spacing)]
        lo, hi = rect.x0 + inset, rect.x1 - inset
        pts = []
        for i, y in enumerate(lanes):
            pair = [(lo, y), (hi, y)] if i % 2 == 0 else [(hi, y), (lo, y)]
            pts.extend(pair)
    else:
        lanes = [rect.x0 + inset + o for o in _lane_offsets(ux, spacing)]
        lo, hi = rect.y0 + inset, rect.y1 - inset
        pts = []
        for i, x in enumerate(lanes):
            pair = [(x, lo), (x, hi)] if i % 2 == 0 else [(x, hi), (x, lo)]
            pts.extend(pair)
    return Trajectory(TrajectoryKind.SSHAPE, pts, spacing)


def gen_rps(rect: Rect, spacing: float, inset: float = 0.5,
            unfolding: bool = False) -> Trajectory:
    """Rectangular planar spiral.

    The rolling-up variant starts on the inset perimeter at the bottom-left
    corner, walks the boundary counter-clockwise, and pulls each side inward
    by one lane spacing per pass, finishing with a half-pitch stub toward the
    center of whatever band remains.  The unfolding variant is the exact
    waypoint reversal.
    """
    if spacing <= 0:
        raise ValueError("spacing must be positive")
    xmin, ymin = rect.x0 + inset, rect.y0 + inset
    xmax, ymax = rect.x1 - inset, rect.y1 - inset
    ux, uy = xmax - xmin, ymax - ymin
    if ux < -_TOL or uy < -_TOL or max(ux, uy) <= _TOL:
        raise ValueError("rect too small for one lane at this inset")
    if min(ux, uy) <= spacing + _TOL:
        # no room to spiral: collapse to a single centered lane
        if ux >= uy:
            y = (ymin + ymax) / 2.0
            pts = [(xmin, y), (xmax, y)]
        else:
            x = (xmin + xmax) / 2.0
            pts = [(x, ymin), (x, ymax)]
        traj = Trajectory(TrajectoryKind.ROLLING_RPS, pts, spacing)
        return traj.reversed(TrajectoryKind.UNFOLDING_RPS) if unfolding else traj

    pts = [(xmin, ymin)]
    x, y = xmin, ymin
    d = 0  # 0 right, 1 up, 2 left, 3 down
    while True:
        if d == 0:
            tx, ty, reach = xmax, y, xmax - x
        elif d == 1:
            tx, ty, reach = x, ymax, ymax - y
        elif d == 2:
            tx, ty, reach = xmin, y, x - xmin
        else:
            tx, ty, reach = x, ymin, y - ymin
        if reach <= _TOL:
            break
        pts.append((tx, ty))
        x, y = tx, ty
        if d == 0:
            ymin += spacing
        elif d == 1:
            xmax -= spacing
        elif d == 2:
            ymax -= spacing
        else:
            xmin += spacing
        d = (d + 1) % 4
    # terminal stub: step along the blocked axis to the remaining band center
    if d in (0, 2):
        stub = ((xmin + xmax) / 2.0, y)
    else:
        stub = (x, (ymin + ymax) / 2.0)
    if abs(stub[0] - x) > _TOL or abs(stub[1] - y) > _TOL:
        pts.append(stub)
    traj = Trajectory(TrajectoryKind.ROLLING_RPS, pts, spacing)
    return traj.reversed(TrajectoryKind.UNFOLDING_RPS) if unfolding else traj


def gen_coverage(kind: TrajectoryKind, rect: Rect, spacing: float,
                 inset: float) -> Trajectory:
    if kind == TrajectoryKind.SSHAPE:
        return gen_s_shape(rect, spacing, inset)
    if kind == TrajectoryKind.ROLLING_RPS:
        return gen_rps(rect, spacing, inset, unfolding=False)
    if kind == TrajectoryKind.UNFOLDING_RPS:
        return gen_rps(rect, spacing, inset, unfolding=True)
    raise ValueError(f"not a coverage trajectory kind: {kind}")


@dataclass
class Costmap:
    """Static inflated costmap plus a decaying dynamic obstacle layer.

    lethal marks cells whose center is within inflation_radius of a blocked
    cell (occupied or unknown).  cost adds a soft penalty that decreases
    linearly to zero at soft_radius.  Dynamic obstacles mark inflated disks
    lethal until their per-cell expiry time passes.
    """

    grid: OccupancyGrid
    inflation_radius: float
    soft_radius: float
    soft_weight: float
    lethal: np.ndarray
    cost: np.ndarray
    dynamic_expiry: np.ndarray

    @property
    def resolution(self) -> float:
        return self.grid.resolution

    def lethal_at(self, t: float) -> np.ndarray:
        return self.lethal | (self.dynamic_expiry > t)

    def is_lethal(self, ix: int, iy: int, t: float) -> bool:
        if not self.grid.in_bounds(ix, iy):
            return True
        return bool(self.lethal[iy, ix] or self.dynamic_expiry[iy, ix] > t)

    def add_dynamic(self, points: np.ndarray, t: float, ttl: float = 5.0) -> None:
        """Mark inflated disks around world points lethal until t + ttl."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        if points.size == 0:
            return
        res = self.resolution
        r_cells = int(math.ceil(self.inflation_radius / res))
        span = np.arange(-r_cells, r_cells + 1)
        dx, dy = np.meshgrid(span, span)
        disk = (dx * dx + dy * dy) * res * res <= self.inflation_radius ** 2
        ox, oy = dx[disk], dy[disk]
        ix = np.floor((points[:, 0] - self.grid.origin_x) / res).astype(int)
        iy = np.floor((points[:, 1] - self.grid.origin_y) / res).astype(int)
        ax = (ix[:, None] + ox[None, :]).ravel()
        ay = (iy[:, None] + oy[None, :]).ravel()
        keep = (ax >= 0) & (ax < self.grid.width) & (ay >= 0) & (ay < self.grid.height)
        ax, ay = ax[keep], ay[keep]
        expiry = self.dynamic_expiry
        expiry[ay, ax] = np.maximum(expiry[ay, ax], t + ttl)


def build_costmap(grid: OccupancyGrid, inflation_radius: float,
                  soft_radius: float | None = None,
                  soft_weight: float = 2.0) -> Costmap:
    if inflation_radius <= 0:
        raise ValueError("inflation_radius must be positive")
    if soft_radius is None:
        soft_radius = inflation_radius + 0.45
    if soft_radius < inflation_radius:
        raise ValueError("soft_radius must be >= inflation_radius")
    blocked = grid.blocked_mask()
    if blocked.any():
        dist = ndimage.distance_transform_edt(~blocked) * grid.resolution
    else:
        dist = np.full(grid.cells.shape, np.inf)
    lethal = dist <= inflation_radius
    span = soft_radius - inflation_radius
    if span > 0:
        soft = np.clip((soft_radius - dist) / span, 0.0, 1.0) * soft_weight
    else:
        soft = np.zeros_like(dist)
    soft[lethal] = 0.0
    return Costmap(grid, inflation_radius, soft_radius, soft_weight,
                   lethal, soft, np.full(grid.cells.shape, -np.inf))


_STEPS = [(1, 0, 1.0), (-1, 0, 1.0), (0, 1, 1.0), (0, -1, 1.0),
          (1, 1, math.sqrt(2.0)), (1, -1, math.sqrt(2.0)),
          (-1, 1, math.sqrt(2.0)), (-1, -1, math.sqrt(2.0))]


def plan_path(cmap: Costmap, start: tuple[float, float], goal: tuple[float, float],
              t: float = 0.0, smooth: bool = False):
    """8-connected A* over the costmap; returns waypoints or None if unreachable.

    Edge cost is step_length * (1 + cost(destination)), so the Euclidean
    heuristic is admissible and the result matches Dijkstra's path cost.
    """
    grid = cmap.grid
    res = cmap.resolution
    sx, sy = grid.world_to_cell(*start)
    gx, gy = grid.world_to_cell(*goal)
    lethal = cmap.lethal_at(t)
    if not grid.in_bounds(sx, sy) or lethal[sy, sx]:
        return None
    if not grid.in_bounds(gx, gy) or lethal[gy, gx]:
        return None
    if (sx, sy) == (gx, gy):
        return [tuple(start)]
    h, w = grid.cells.shape
    g_score = np.full((h, w), np.inf)
    parent = np.full((h, w), -1, dtype=np.int64)
    g_score[sy, sx] = 0.0
    counter = 0
    start_h = res * math.hypot(gx - sx, gy - sy)
    heap = [(start_h, counter, sx, sy)]
    cost = cmap.cost
    found = False
    while heap:
        f, _, cx, cy = heapq.heappop(heap)
        if (cx, cy) == (gx, gy):
            found = True
            break
        if f > g_score[cy, cx] + res * math.hypot(gx - cx, gy - cy) + 1e-12:
            continue  # stale entry
        base = g_score[cy, cx]
        for dx, dy, step in _STEPS:
            nx, ny = cx + dx, cy + dy
            if nx < 0 or nx >= w or ny < 0 or ny >= h or lethal[ny, nx]:
                continue
            cand = base + step * res * (1.0 + cost[ny, nx])
            if cand < g_score[ny, nx] - 1e-15:
                g_score[ny, nx] = cand
                parent[ny, nx] = cy * w + cx
                counter += 1
                heur = res * math.hypot(gx - nx, gy - ny)
                heapq.heappush(heap, (cand + heur, counter, nx, ny))
    if not found:
        return None
    cells = [(gx, gy)]
    node = gy * w + gx
    while parent[node // w, node % w] >= 0:
        node = parent[node // w, node % w]
        cells.append((node % w, node // w))
    cells.reverse()
    path = [grid.cell_to_world(int(ix), int(iy)) for ix, iy in cells]
    if smooth:
        path = _shortcut(cmap, path, t)
    return path


def path_cost(cmap: Costmap, path, t: float = 0.0) -> float:
    """Traversal cost of a cell-center path under the A* edge cost model."""
    grid = cmap.grid
    total = 0.0
    for (x0, y0), (x1, y1) in zip(path, path[1:]):
        ix, iy = grid.world_to_cell(x1, y1)
        total += math.hypot(x1 - x0, y1 - y0) * (1.0 + cmap.cost[iy, ix])
    return total


def line_clear(cmap: Costmap, p: tuple[float, float], q: tuple[float, float],
               t: float = 0.0) -> bool:
    """True if the segment p-q stays out of lethal cells (half-cell sampling)."""
    dist = math.hypot(q[0] - p[0], q[1] - p[1])
    n = max(2, int(math.ceil(dist / (cmap.resolution * 0.5))) + 1)
    lethal = cmap.lethal_at(t)
    for u in np.linspace(0.0, 1.0, n):
        x = p[0] + u * (q[0] - p[0])
        y = p[1] + u * (q[1] - p[1])
        ix, iy = cmap.grid.world_to_cell(x, y)
        if not cmap.grid.in_bounds(ix, iy) or lethal[iy, ix]:
            return False
    return True


def _shortcut(cmap: Costmap, path, t: float):
    # greedy line-of-sight shortcutting; keeps endpoints
    if len(path) <= 2:
        return path
    out = [path[0]]
    i = 0
    while i < len(path) - 1:
        j = len(path) - 1
        while j > i + 1 and not line_clear(cmap, path[i], path[j], t):
            j -= 1
        out.append(path[j])
        i = j
    return out


def scan_hit_points(scan, pose: Pose2D) -> np.ndarray:
    """World-frame endpoints of beams that actually returned."""
    hit = scan.ranges < scan.max_range - 1e-9
    angles = scan.angles[hit] + pose.theta
    ranges = scan.ranges[hit]
    return np.column_stack([pose.x + ranges * np.cos(angles),
                            pose.y + ranges * np.sin(angles)])


def replan_on_obstacle(cmap: Costmap, scan, pose: Pose2D, traj: Trajectory | None,
                       goal: tuple[float, float], t: float, ttl: float = 5.0,
                       smooth: bool = True):
    """Feed scan hits into the dynamic layer and replan if the path is blocked.

    Returns (trajectory, replanned, blocked): trajectory is None while the
    goal is unreachable (blocked True).
    """
    pts = scan_hit_points(scan, pose)
    if pts.shape[0]:
        # only novel obstacles matter; cells already lethal change nothing
        res = cmap.resolution
        ix = np.floor((pts[:, 0] - cmap.grid.origin_x) / res).astype(int)
        iy = np.floor((pts[:, 1] - cmap.grid.origin_y) / res).astype(int)
        inside = ((ix >= 0) & (ix < cmap.grid.width)
                  & (iy >= 0) & (iy < cmap.grid.height))
        novel = np.zeros(pts.shape[0], dtype=bool)
        novel[inside] = ~cmap.lethal[iy[inside], ix[inside]]
        if novel.any():
            cmap.add_dynamic(pts[novel], t, ttl)
    blocked_now = traj is None or not _traj_clear(cmap, traj, pose, t)
    if not blocked_now:
        return traj, False, False
    path = plan_path(cmap, (pose.x, pose.y), goal, t=t, smooth=smooth)
    if path is None or len(path) < 2:
        return None, True, True
    return Trajectory(TrajectoryKind.PLANNED, path), True, False


def _traj_clear(cmap: Costmap, traj: Trajectory, pose: Pose2D, t: float) -> bool:
    # check the remaining path from the closest point onward
    pts = traj.points()
    d2 = (pts[:, 0] - pose.x) ** 2 + (pts[:, 1] - pose.y) ** 2
    k = int(np.argmin(d2))
    remaining = [(pose.x, pose.y)] + [tuple(p) for p in pts[k:]]
    for p, q in zip(remaining, remaining[1:]):
        if not line_clear(cmap, p, q, t):
            return False
    return True


@dataclass
class FollowParams:
    lookahead: float = 0.5
    k_heading: float = 2.0
    v_cruise: float = 0.3
    goal_tolerance: float = 0.12


def follow(traj: Trajectory, pose: Pose2D, params: FollowParams) -> tuple[Twist, bool]:
    """Pure pursuit: chase the path point one lookahead beyond the closest
    path point.  Angular rate is proportional to the heading error and the
    linear speed backs off linearly with it; returns (twist, done)."""
    pts = traj.points()
    end_x, end_y = pts[-1]
    if math.hypot(end_x - pose.x, end_y - pose.y) <= params.goal_tolerance:
        return Twist(0.0, 0.0), True
    seg = pts[1:] - pts[:-1]
    seg_len2 = np.maximum(np.sum(seg * seg, axis=1), 1e-18)
    rel = np.array([pose.x, pose.y]) - pts[:-1]
    u = np.clip(np.sum(rel * seg, axis=1) / seg_len2, 0.0, 1.0)
    proj = pts[:-1] + seg * u[:, None]
    d2 = (proj[:, 0] - pose.x) ** 2 + (proj[:, 1] - pose.y) ** 2
    i = int(np.argmin(d2))
    cum = traj.cumulative_lengths()
    s_closest = float(cum[i] + u[i] * math.sqrt(seg_len2[i]))
    tx, ty = traj.point_at(s_closest + params.lookahead)
    heading_err = wrap_angle(math.atan2(ty - pose.y, tx - pose.x) - pose.theta)
    w = params.k_heading * heading_err
    v = params.v_cruise * (1.0 - abs(heading_err) / math.pi)
    return Twist(max(v, 0.0), w), False
