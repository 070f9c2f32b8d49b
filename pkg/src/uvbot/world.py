"""Occupancy grid world model: map I/O, ray casting, scheduled human agents."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

TWO_PI = 2.0 * math.pi

# cell states (stored as uint8)
FREE = 0
OCCUPIED = 1
UNKNOWN = 2

_CELL_CHARS = {FREE: ".", OCCUPIED: "#", UNKNOWN: "?"}
_CHAR_CELLS = {v: k for k, v in _CELL_CHARS.items()}


class GridFormatError(ValueError):
    """Raised for malformed grid files."""


def wrap_angle(a: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    a = a % TWO_PI
    if a > math.pi:
        a -= TWO_PI
    return a


def wrap_angles(a: np.ndarray) -> np.ndarray:
    """Vectorized wrap_angle."""
    a = np.asarray(a) % TWO_PI
    return np.where(a > math.pi, a - TWO_PI, a)


@dataclass
class Pose2D:
    x: float
    y: float
    theta: float

    def __post_init__(self) -> None:
        self.theta = wrap_angle(self.theta)

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.x, self.y, self.theta)


@dataclass
class OccupancyGrid:
    """Tri-state occupancy grid.

    cells is a (height, width) uint8 array indexed [iy, ix]; cell (ix, iy)
    spans world x in [origin_x + ix*res, origin_x + (ix+1)*res) and likewise
    for y.  Unknown cells are treated as occupied by ray casting and motion.
    """

    resolution: float
    origin_x: float
    origin_y: float
    cells: np.ndarray

    def __post_init__(self) -> None:
        if self.resolution <= 0:
            raise ValueError("resolution must be positive")
        cells = np.ascontiguousarray(self.cells, dtype=np.uint8)
        if cells.ndim != 2 or cells.size == 0:
            raise ValueError("cells must be a non-empty 2-d array")
        if not np.isin(cells, (FREE, OCCUPIED, UNKNOWN)).all():
            raise ValueError("cells contain invalid states")
        self.cells = cells

    @property
    def height(self) -> int:
        return self.cells.shape[0]

    @property
    def width(self) -> int:
        return self.cells.shape[1]

    @property
    def size_x(self) -> float:
        return self.width * self.resolution

    @property
    def size_y(self) -> float:
        return self.height * self.resolution

    def world_to_cell(self, x: float, y: float) -> tuple[int, int]:
        ix = int(math.floor((x - self.origin_x) / self.resolution))
        iy = int(math.floor((y - self.origin_y) / self.resolution))
        return ix, iy

    def cell_to_world(self, ix: int, iy: int) -> tuple[float, float]:
        """Center of cell (ix, iy)."""
        x = self.origin_x + (ix + 0.5) * self.resolution
        y = self.origin_y + (iy + 0.5) * self.resolution
        return x, y

    def in_bounds(self, ix: int, iy: int) -> bool:
        return 0 <= ix < self.width and 0 <= iy < self.height

    def state_at(self, x: float, y: float) -> int:
        """Cell state at a world point; out-of-bounds reads as UNKNOWN."""
        ix, iy = self.world_to_cell(x, y)
        if not self.in_bounds(ix, iy):
            return UNKNOWN
        return int(self.cells[iy, ix])

    def is_free(self, x: float, y: float) -> bool:
        return self.state_at(x, y) == FREE

    def blocked_mask(self) -> np.ndarray:
        """Boolean mask of cells that block rays and motion (occupied or unknown)."""
        return self.cells != FREE

    def free_cell_centers(self) -> np.ndarray:
        """(n, 2) world coordinates of free cell centers."""
        iy, ix = np.nonzero(self.cells == FREE)
        xs = self.origin_x + (ix + 0.5) * self.resolution
        ys = self.origin_y + (iy + 0.5) * self.resolution
        return np.column_stack([xs, ys])

    def copy(self) -> "OccupancyGrid":
        return OccupancyGrid(self.resolution, self.origin_x, self.origin_y,
                             self.cells.copy())


def save_map(grid: OccupancyGrid, path: str) -> None:
    """Write a grid file: header line, then one text row per cell row (iy=0 first)."""
    lines = [f"GRID {grid.width} {grid.height} {grid.resolution!r} "
             f"{grid.origin_x!r} {grid.origin_y!r}"]
    lut = np.array([_CELL_CHARS[FREE], _CELL_CHARS[OCCUPIED], _CELL_CHARS[UNKNOWN]])
    for iy in range(grid.height):
        lines.append("".join(lut[grid.cells[iy]]))
    with open(path, "w", encoding="ascii") as fh:
        fh.write("\n".join(lines) + "\n")


def load_map(path: str) -> OccupancyGrid:
    with open(path, "r", encoding="ascii") as fh:
        raw = fh.read()
    lines = raw.splitlines()
    if not lines:
        raise GridFormatError("empty grid file")
    head = lines[0].split()
    if len(head) != 6 or head[0] != "GRID":
        raise GridFormatError(f"malformed header: {lines[0]!r}")
    try:
        width, height = int(head[1]), int(head[2])
        resolution = float(head[3])
        origin_x, origin_y = float(head[4]), float(head[5])
    except ValueError as exc:
        raise GridFormatError(f"malformed header: {lines[0]!r}") from exc
    if width <= 0 or height <= 0:
        raise GridFormatError("grid dimensions must be positive")
    rows = lines[1:]
    if len(rows) != height:
        raise GridFormatError(f"expected {height} rows, found {len(rows)}")
    cells = np.empty((height, width), dtype=np.uint8)
    for iy, row in enumerate(rows):
        if len(row) != width:
            raise GridFormatError(f"row {iy} has {len(row)} cells, expected {width}")
        for ix, ch in enumerate(row):
            try:
                cells[iy, ix] = _CHAR_CELLS[ch]
            except KeyError:
                raise GridFormatError(f"invalid cell character {ch!r} "
                                      f"at row {iy}") from None
    return OccupancyGrid(resolution, origin_x, origin_y, cells)


@njit(cache=True)
def _march_one(cells, res, px, py, dx, dy, max_range):
    # Exact cell-boundary stepping; px/py are grid-local meters.  Returns the
    # distance at which the ray enters the first blocking cell (occupied,
    # unknown, or out of bounds), capped at max_range.
    h, w = cells.shape
    ix = int(math.floor(px / res))
    iy = int(math.floor(py / res))
    if ix < 0 or ix >= w or iy < 0 or iy >= h:
        return 0.0
    if cells[iy, ix] != 0:
        return 0.0
    if dx > 0.0:
        step_x = 1
        t_max_x = ((ix + 1) * res - px) / dx
        t_dx = res / dx
    elif dx < 0.0:
        step_x = -1
        t_max_x = (px - ix * res) / -dx
        t_dx = res / -dx
    else:
        step_x = 0
        t_max_x = np.inf
        t_dx = np.inf
    if dy > 0.0:
        step_y = 1
        t_max_y = ((iy + 1) * res - py) / dy
        t_dy = res / dy
    elif dy < 0.0:
        step_y = -1
        t_max_y = (py - iy * res) / -dy
        t_dy = res / -dy
    else:
        step_y = 0
        t_max_y = np.inf
        t_dy = np.inf
    while True:
        if t_max_x < t_max_y:
            t = t_max_x
            t_max_x += t_dx
            ix += step_x
        else:
            t = t_max_y
            t_max_y += t_dy
            iy += step_y
        if t >= max_range:
            return max_range
        if ix < 0 or ix >= w or iy < 0 or iy >= h:
            return t
        if cells[iy, ix] != 0:
            return t


@njit(cache=True)
def _march_many(cells, res, px, py, angles, max_range, out):
    for k in range(angles.shape[0]):
        out[k] = _march_one(cells, res, px, py,
                            math.cos(angles[k]), math.sin(angles[k]), max_range)


def raycast(grid: OccupancyGrid, x: float, y: float, angle: float,
            max_range: float) -> float:
    """Distance from (x, y) along angle to the first blocking cell boundary.

    Unknown cells block like occupied ones, as does leaving the grid.
    Returns max_range if nothing blocks sooner.  The origin must lie in a
    free cell.
    """
    if max_range <= 0:
        raise ValueError("max_range must be positive")
    if not grid.is_free(x, y):
        raise ValueError(f"raycast origin ({x}, {y}) is not in a free cell")
    return float(_march_one(grid.cells, grid.resolution,
                            x - grid.origin_x, y - grid.origin_y,
                            math.cos(angle), math.sin(angle), max_range))


def raycast_many(grid: OccupancyGrid, x: float, y: float, angles: np.ndarray,
                 max_range: float) -> np.ndarray:
    """Batch raycast for an array of angles from a single free origin."""
    if not grid.is_free(x, y):
        raise ValueError(f"raycast origin ({x}, {y}) is not in a free cell")
    angles = np.ascontiguousarray(angles, dtype=np.float64)
    out = np.empty(angles.shape[0], dtype=np.float64)
    _march_many(grid.cells, grid.resolution,
                x - grid.origin_x, y - grid.origin_y, angles, max_range, out)
    return out


def ray_circle_distance(px: float, py: float, dx: float, dy: float,
                        cx: float, cy: float, radius: float) -> float:
    """First intersection distance of a unit-direction ray with a circle, or inf."""
    fx = px - cx
    fy = py - cy
    b = fx * dx + fy * dy
    c = fx * fx + fy * fy - radius * radius
    disc = b * b - c
    if disc < 0.0:
        return math.inf
    root = math.sqrt(disc)
    t = -b - root
    if t >= 0.0:
        return t
    t = -b + root  # ray starts inside the circle
    if t >= 0.0:
        return t
    return math.inf


@dataclass
class HumanAgent:
    """Disk-shaped agent following a piecewise-linear schedule of waypoints.

    schedule entries are (time, (x, y)) with strictly increasing times.  The
    agent holds the first waypoint before the schedule starts and the last
    one after it ends; an empty schedule means the agent never moves.
    """

    agent_id: str
    pose: Pose2D
    radius: float
    schedule: list = field(default_factory=list)

    def __post_init__(self) -> None:
        if self.radius <= 0:
            raise ValueError("agent radius must be positive")
        times = [entry[0] for entry in self.schedule]
        if any(t1 >= t2 for t1, t2 in zip(times, times[1:])):
            raise ValueError(f"agent {self.agent_id}: schedule times must be "
                             "strictly increasing")

    def position_at(self, t: float) -> tuple[float, float]:
        if not self.schedule:
            return (self.pose.x, self.pose.y)
        times = [entry[0] for entry in self.schedule]
        points = [entry[1] for entry in self.schedule]
        if t <= times[0]:
            return tuple(points[0])
        if t >= times[-1]:
            return tuple(points[-1])
        k = 0
        while times[k + 1] < t:
            k += 1
        u = (t - times[k]) / (times[k + 1] - times[k])
        x0, y0 = points[k]
        x1, y1 = points[k + 1]
        return (x0 + u * (x1 - x0), y0 + u * (y1 - y0))


def step_humans(agents: list[HumanAgent], t: float) -> None:
    """Move every agent to its scheduled position at absolute time t."""
    for agent in agents:
        x, y = agent.position_at(t)
        dx = x - agent.pose.x
        dy = y - agent.pose.y
        if dx * dx + dy * dy > 1e-18:
            agent.pose.theta = math.atan2(dy, dx)
        agent.pose.x = x
        agent.pose.y = y
