"""Deterministic fixed-timestep scenario simulation and reporting."""
from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from enum import Enum

import numpy as np
from numba import njit

from . import localization as mcl
from .world import (FREE, OCCUPIED, UNKNOWN, HumanAgent, OccupancyGrid, Pose2D,
                    step_humans, wrap_angle)
from .robot import (BatteryState, RobotConfig, Scan, Twist, consume_power,
                    simulate_lidar, simulate_odometry, simulate_ultrasonic,
                    step_kinematics)
from .planning import (Costmap, FollowParams, Rect, Trajectory, TrajectoryKind,
                       build_costmap, follow, gen_coverage, plan_path,
                       replan_on_obstacle)
from .safety import (DetectionParams, GuardParams, InterlockParams, LampBank,
                     LedStatus, Side, collision_guard, detect_humans,
                     lamp_interlock, led_status)
from .disinfection import DoseField, LampModel, accumulate_dose, irradiance_at


class Mode(Enum):
    MANUAL = "manual"
    AUTO_KNOWN = "auto_known"
    AUTO_UNKNOWN = "auto_unknown"


@dataclass
class CoverageTask:
    kind: TrajectoryKind
    rect: Rect
    spacing: float = 1.0
    inset: float | None = None  # None: footprint_radius + 0.2


@dataclass
class GotoTask:
    x: float
    y: float


@dataclass
class PlanParams:
    # footprint 0.3 plus a localization/tracking margin; paths that hug
    # the lethal boundary still clear walls with a few cm of estimate error
    inflation_radius: float = 0.40
    soft_radius: float = 0.8
    soft_weight: float = 2.0
    dynamic_ttl: float = 5.0
    smooth: bool = True
    replan_period: float = 2.0  # learned-map rebuild cadence (unknown mode)


@dataclass
class LogOddsParams:
    l_occ: float = 0.85
    l_free: float = -0.4
    clamp: float = 10.0


@dataclass
class Scenario:
    grid: OccupancyGrid
    start: Pose2D
    mode: Mode = Mode.AUTO_KNOWN
    task: CoverageTask | GotoTask | None = None
    humans: list = dc_field(default_factory=list)
    duration: float = 120.0
    dt: float = 0.05
    seed: int = 0
    robot: RobotConfig = dc_field(default_factory=RobotConfig)
    mcl_params: mcl.MclParams = dc_field(default_factory=mcl.MclParams)
    follow_params: FollowParams = dc_field(default_factory=FollowParams)
    guard_params: GuardParams = dc_field(default_factory=GuardParams)
    detection: DetectionParams = dc_field(default_factory=DetectionParams)
    interlock: InterlockParams = dc_field(default_factory=InterlockParams)
    lamp_model: LampModel = dc_field(default_factory=LampModel)
    plan_params: PlanParams = dc_field(default_factory=PlanParams)
    log_odds: LogOddsParams = dc_field(default_factory=LogOddsParams)
    lamps_left: int = 0
    lamps_right: int = 0
    battery_capacity_wh: float = 1200.0
    battery_initial_wh: float | None = None
    odom_sigma_v: float = 0.02
    odom_sigma_w: float = 0.02
    dose_enabled: bool = False
    manual_script: list = dc_field(default_factory=list)  # (t_from, v, w)
    start_at_path: bool = False  # coverage: place the robot on the path head


@dataclass
class HumanRecord:
    agent_id: str
    x: float
    y: float
    detected: bool


@dataclass
class TickRecord:
    t: float
    true_pose: tuple
    est_pose: tuple
    cmd: tuple
    applied: tuple
    left_set: int
    left_on: int
    right_set: int
    right_on: int
    led: str
    battery_wh: float
    humans: list = dc_field(default_factory=list)


@dataclass
class SimReport:
    seed: int
    dt: float
    records: list = dc_field(default_factory=list)
    events: list = dc_field(default_factory=list)  # (t, kind, detail)
    metrics: list = dc_field(default_factory=list)  # (name, value), fixed order
    dose_field: object = None  # DoseField when dose accumulation was on
    log_odds_map: object = None  # LogOddsMap in unknown-map mode


@dataclass
class TrajectoryMetrics:
    rmse: float
    max_error: float


def compute_metrics(report: SimReport) -> TrajectoryMetrics:
    """Position RMSE and maximum error of the estimate against ground truth."""
    if not report.records:
        return TrajectoryMetrics(0.0, 0.0)
    err2 = []
    for rec in report.records:
        dx = rec.est_pose[0] - rec.true_pose[0]
        dy = rec.est_pose[1] - rec.true_pose[1]
        err2.append(dx * dx + dy * dy)
    err2 = np.asarray(err2)
    return TrajectoryMetrics(float(np.sqrt(err2.mean())),
                             float(np.sqrt(err2.max())))


@dataclass
class LogOddsMap:
    """Log-odds occupancy estimate built from localized scans."""

    resolution: float
    origin_x: float
    origin_y: float
    values: np.ndarray
    touched: np.ndarray

    @classmethod
    def like(cls, grid: OccupancyGrid) -> "LogOddsMap":
        shape = grid.cells.shape
        return cls(grid.resolution, grid.origin_x, grid.origin_y,
                   np.zeros(shape), np.zeros(shape, dtype=np.bool_))

    def to_occupancy(self, threshold: float = 0.0,
                     optimistic: bool = False) -> OccupancyGrid:
        """Classify cells: above threshold occupied, below free, untouched
        unknown.  optimistic=True maps unknown to free (for planning)."""
        cells = np.full(self.values.shape, UNKNOWN, dtype=np.uint8)
        cells[self.touched & (self.values > threshold)] = OCCUPIED
        cells[self.touched & (self.values <= threshold)] = FREE
        if optimistic:
            cells[cells == UNKNOWN] = FREE
        return OccupancyGrid(self.resolution, self.origin_x, self.origin_y, cells)


@njit(cache=True)
def _logodds_trace(values, touched, res, px, py, angles, ranges, max_range,
                   l_free, l_occ, clamp):
    h, w = values.shape
    for k in range(angles.shape[0]):
        r = ranges[k]
        hit = r < max_range - 1e-9
        dx = math.cos(angles[k])
        dy = math.sin(angles[k])
        ix = int(math.floor(px / res))
        iy = int(math.floor(py / res))
        if ix < 0 or ix >= w or iy < 0 or iy >= h:
            continue
        if dx > 0.0:
            step_x, t_max_x, t_dx = 1, ((ix + 1) * res - px) / dx, res / dx
        elif dx < 0.0:
            step_x, t_max_x, t_dx = -1, (px - ix * res) / -dx, res / -dx
        else:
            step_x, t_max_x, t_dx = 0, np.inf, np.inf
        if dy > 0.0:
            step_y, t_max_y, t_dy = 1, ((iy + 1) * res - py) / dy, res / dy
        elif dy < 0.0:
            step_y, t_max_y, t_dy = -1, (py - iy * res) / -dy, res / -dy
        else:
            step_y, t_max_y, t_dy = 0, np.inf, np.inf
        while True:
            exit_t = t_max_x if t_max_x < t_max_y else t_max_y
            if exit_t >= r:
                # cell containing the endpoint
                if hit:
                    v = values[iy, ix] + l_occ
                else:
                    v = values[iy, ix] + l_free
                values[iy, ix] = min(max(v, -clamp), clamp)
                touched[iy, ix] = True
                break
            v = values[iy, ix] + l_free
            values[iy, ix] = min(max(v, -clamp), clamp)
            touched[iy, ix] = True
            if t_max_x < t_max_y:
                t_max_x += t_dx
                ix += step_x
            else:
                t_max_y += t_dy
                iy += step_y
            if ix < 0 or ix >= w or iy < 0 or iy >= h:
                break


def update_occupancy(lmap: LogOddsMap, pose: Pose2D, scan: Scan,
                     params: LogOddsParams) -> None:
    """Standard log-odds update: decrement along each beam, increment the
    endpoint cell of returned beams, clamp to +/-clamp."""
    world_angles = np.ascontiguousarray(scan.angles + pose.theta)
    ranges = np.ascontiguousarray(scan.ranges, dtype=np.float64)
    _logodds_trace(lmap.values, lmap.touched, lmap.resolution,
                   pose.x - lmap.origin_x, pose.y - lmap.origin_y,
                   world_angles, ranges, scan.max_range,
                   params.l_free, params.l_occ, params.clamp)


def _manual_twist(script, t: float) -> Twist:
    v, w = 0.0, 0.0
    for t_from, sv, sw in script:
        if t_from <= t + 1e-12:
            v, w = sv, sw
        else:
            break
    return Twist(v, w)


def _circle_hits_blocked(grid: OccupancyGrid, x: float, y: float, r: float) -> bool:
    """Exact test: does the disk at (x, y) overlap any blocked cell?"""
    res = grid.resolution
    ix0 = int(math.floor((x - r - grid.origin_x) / res))
    ix1 = int(math.floor((x + r - grid.origin_x) / res))
    iy0 = int(math.floor((y - r - grid.origin_y) / res))
    iy1 = int(math.floor((y + r - grid.origin_y) / res))
    for iy in range(iy0, iy1 + 1):
        for ix in range(ix0, ix1 + 1):
            if not grid.in_bounds(ix, iy):
                continue
            if grid.cells[iy, ix] == FREE:
                continue
            # closest point of the cell AABB to the disk center
            cx0 = grid.origin_x + ix * res
            cy0 = grid.origin_y + iy * res
            px = min(max(x, cx0), cx0 + res)
            py = min(max(y, cy0), cy0 + res)
            if (px - x) ** 2 + (py - y) ** 2 <= r * r:
                return True
    return False


def _human_disks(humans) -> list:
    return [(h.pose.x, h.pose.y, h.radius) for h in humans]


def run_scenario(scn: Scenario) -> SimReport:
    """Run the full control stack for scn.duration at fixed dt.

    Per tick: humans move, sensors fire from the true pose, the filter
    updates, the planner or script commands a twist, the collision guard
    caps it, detection and the lamp interlock run, the true pose integrates,
    dose and battery accumulate, and the tick is recorded.  All randomness
    comes from one generator seeded with scn.seed.
    """
    rng = np.random.default_rng(scn.seed)
    grid = scn.grid
    report = SimReport(seed=scn.seed, dt=scn.dt)

    start = scn.start
    pre_traj = None
    if scn.mode != Mode.MANUAL and isinstance(scn.task, CoverageTask):
        pre_inset = (scn.task.inset if scn.task.inset is not None
                     else scn.robot.footprint_radius + 0.2)
        pre_traj = gen_coverage(scn.task.kind, scn.task.rect,
                                scn.task.spacing, pre_inset)
        if scn.start_at_path:
            w0 = pre_traj.waypoints[0]
            w1 = pre_traj.waypoints[1]
            start = Pose2D(w0[0], w0[1],
                           math.atan2(w1[1] - w0[1], w1[0] - w0[0]))

    lfield = mcl.build_likelihood_field(grid)
    pset = mcl.init_gaussian(start, scn.mcl_params.n_particles, rng,
                             scn.mcl_params.sigma_init_xy,
                             scn.mcl_params.sigma_init_theta)
    est_pose, _ = mcl.estimate(pset)

    banks = [LampBank(Side.LEFT, scn.lamps_left, scn.lamps_left),
             LampBank(Side.RIGHT, scn.lamps_right, scn.lamps_right)]
    battery = BatteryState(scn.battery_capacity_wh,
                           scn.battery_initial_wh if scn.battery_initial_wh
                           is not None else scn.battery_capacity_wh)
    initial_battery = battery.remaining_wh

    lmap = LogOddsMap.like(grid) if scn.mode == Mode.AUTO_UNKNOWN else None
    dfield = DoseField(grid) if scn.dose_enabled else None

    trajectory = None
    goal = None
    traj_done = False
    goal_blocked = False
    cmap = None
    cmap_built_t = -math.inf
    if pre_traj is not None:
        trajectory = pre_traj
    if scn.mode != Mode.MANUAL and isinstance(scn.task, GotoTask):
        goal = (scn.task.x, scn.task.y)
        if scn.mode == Mode.AUTO_KNOWN:
            cmap = build_costmap(grid, scn.plan_params.inflation_radius,
                                 scn.plan_params.soft_radius,
                                 scn.plan_params.soft_weight)

    n_ticks = int(round(scn.duration / scn.dt)) if scn.duration > 0 else 0
    true_pose = Pose2D(start.x, start.y, start.theta)
    applied_prev = Twist(0.0, 0.0)
    depleted_logged = False
    exposure_count = 0
    collision_count = 0

    def _record(t, est, cmd, applied, led, detected):
        humans_out = [HumanRecord(h.agent_id, h.pose.x, h.pose.y, bool(d))
                      for h, d in zip(scn.humans, detected)]
        report.records.append(TickRecord(
            t=t,
            true_pose=(true_pose.x, true_pose.y, true_pose.theta),
            est_pose=(est.x, est.y, est.theta),
            cmd=(cmd.v, cmd.w),
            applied=(applied.v, applied.w),
            left_set=banks[0].lamps_set, left_on=banks[0].lamps_on,
            right_set=banks[1].lamps_set, right_on=banks[1].lamps_on,
            led=led.value, battery_wh=battery.remaining_wh,
            humans=humans_out))

    if n_ticks == 0:
        step_humans(scn.humans, 0.0)
        detected = detect_humans(scn.humans, true_pose, grid, scn.detection, rng)
        _record(0.0, est_pose, Twist(), Twist(), LedStatus.WAITING, detected)
        _finish_metrics(report, scn, initial_battery, battery, trajectory,
                        traj_done, exposure_count, collision_count)
        report.dose_field = dfield
        report.log_odds_map = lmap
        return report

    for k in range(n_ticks):
        t = k * scn.dt
        step_humans(scn.humans, t)
        disks = _human_disks(scn.humans)

        scan = simulate_lidar(grid, true_pose, scn.robot, rng, disks, t)
        ultra = simulate_ultrasonic(grid, true_pose, scn.robot, disks, t)

        odom = simulate_odometry(applied_prev, scn.odom_sigma_v,
                                 scn.odom_sigma_w, rng)
        mcl.motion_update(pset, (odom.v, odom.w, scn.dt), scn.mcl_params)
        was_reset = mcl.measurement_update(pset, scan, lfield, scn.mcl_params)
        if was_reset:
            report.events.append((t, "FilterReset", ""))
        mcl.resample(pset)
        est_pose, _ = mcl.estimate(pset)

        if lmap is not None:
            update_occupancy(lmap, est_pose, scan, scn.log_odds)

        replanned = False
        if scn.mode == Mode.MANUAL:
            cmd = _manual_twist(scn.manual_script, t)
        elif trajectory is not None or goal is not None:
            if goal is not None:
                if scn.mode == Mode.AUTO_UNKNOWN and (
                        cmap is None or t - cmap_built_t
                        >= scn.plan_params.replan_period):
                    learned = lmap.to_occupancy(optimistic=True)
                    cmap = build_costmap(learned, scn.plan_params.inflation_radius,
                                         scn.plan_params.soft_radius,
                                         scn.plan_params.soft_weight)
                    cmap_built_t = t
                    trajectory = None  # force a validity check on the new map
                trajectory, replanned, now_blocked = replan_on_obstacle(
                    cmap, scan, est_pose, trajectory, goal, t,
                    scn.plan_params.dynamic_ttl, scn.plan_params.smooth)
                if replanned:
                    report.events.append((t, "Replanned",
                                          "blocked" if now_blocked else "ok"))
                if now_blocked and not goal_blocked:
                    report.events.append((t, "GoalBlocked", ""))
                goal_blocked = now_blocked
            if trajectory is not None and not traj_done:
                cmd, done = follow(trajectory, est_pose, scn.follow_params)
                if done and not traj_done:
                    traj_done = True
                    report.events.append((t, "TrajectoryDone", ""))
            else:
                cmd = Twist(0.0, 0.0)
        else:
            cmd = Twist(0.0, 0.0)

        cmd = cmd.clamped(scn.robot)
        applied = collision_guard(cmd, scan, ultra, scn.guard_params)
        guard_acted = (applied.v != cmd.v) or (applied.w != cmd.w)

        detected = detect_humans(scn.humans, true_pose, grid, scn.detection, rng)
        lamp_interlock(banks, scn.humans, detected, true_pose, t, scn.interlock)

        error = goal_blocked or battery.depleted
        has_goal = (trajectory is not None and not traj_done) \
            or scn.mode == Mode.MANUAL and (applied.v != 0 or applied.w != 0)
        led = led_status(error, guard_acted or replanned, has_goal)

        _record(t, est_pose, cmd, applied, led, detected)

        # exposure accounting from the same pose the detector and interlock
        # just used; a post-move pose can flip a corner-grazing sight line
        for human, seen in zip(scn.humans, detected):
            if seen:
                continue
            irr = irradiance_at(true_pose, banks, human.pose.x, human.pose.y,
                                scn.lamp_model, grid)
            if irr > 0.0:
                exposure_count += 1
                report.events.append(
                    (t, "Exposure", f"{human.agent_id} {irr!r}"))

        true_pose = step_kinematics(true_pose, applied, scn.dt)
        applied_prev = applied

        if dfield is not None:
            accumulate_dose(dfield, true_pose, banks, scn.lamp_model, scn.dt)

        if _circle_hits_blocked(grid, true_pose.x, true_pose.y,
                                scn.robot.footprint_radius):
            collision_count += 1
            report.events.append((t, "Collision", ""))

        lamps_total = banks[0].lamps_on + banks[1].lamps_on
        battery = consume_power(battery, lamps_total, scn.robot.base_load_w,
                                scn.dt, scn.robot.lamp_power_w)
        if battery.depleted and not depleted_logged:
            depleted_logged = True
            report.events.append((t, "BatteryDepleted", ""))
            report.records[-1].battery_wh = battery.remaining_wh
            break
        report.records[-1].battery_wh = battery.remaining_wh

    _finish_metrics(report, scn, initial_battery, battery, trajectory,
                    traj_done, exposure_count, collision_count)
    report.dose_field = dfield
    report.log_odds_map = lmap
    return report


def _finish_metrics(report, scn, initial_wh, battery, trajectory, traj_done,
                    exposure_count, collision_count) -> None:
    tm = compute_metrics(report)
    coverage = 0.0
    if isinstance(scn.task, CoverageTask) and report.records:
        inset = (scn.task.inset if scn.task.inset is not None
                 else scn.robot.footprint_radius + 0.2)
        path = [(r.true_pose[0], r.true_pose[1]) for r in report.records]
        coverage = coverage_percent(scn.task.rect, inset,
                                    scn.task.spacing / 2.0, path)
    report.metrics = [
        ("rmse_position", tm.rmse),
        ("max_error", tm.max_error),
        ("coverage_percent", coverage),
        ("energy_wh", initial_wh - battery.remaining_wh),
        ("battery_remaining_wh", battery.remaining_wh),
        ("exposure_incidents", float(exposure_count)),
        ("collisions", float(collision_count)),
        ("trajectory_done", 1.0 if traj_done else 0.0),
        ("ticks", float(len(report.records))),
    ]


def coverage_percent(rect: Rect, inset: float, disk_radius: float,
                     path: list, raster: float = 0.05) -> float:
    """Fraction of the inset rect swept by a disk moving along the path."""
    x0, y0 = rect.x0 + inset, rect.y0 + inset
    x1, y1 = rect.x1 - inset, rect.y1 - inset
    if x1 <= x0 or y1 <= y0 or not path:
        return 0.0
    nx = max(1, int(round((x1 - x0) / raster)))
    ny = max(1, int(round((y1 - y0) / raster)))
    xs = x0 + (np.arange(nx) + 0.5) * (x1 - x0) / nx
    ys = y0 + (np.arange(ny) + 0.5) * (y1 - y0) / ny
    gx, gy = np.meshgrid(xs, ys)
    covered = np.zeros(gx.shape, dtype=bool)
    pts = np.asarray(path)
    # sample the path densely enough that sweep gaps cannot be missed
    dense = [pts[0]]
    for p, q in zip(pts[:-1], pts[1:]):
        d = math.hypot(q[0] - p[0], q[1] - p[1])
        n = max(1, int(math.ceil(d / (disk_radius * 0.5))))
        for i in range(1, n + 1):
            dense.append(p + (q - p) * (i / n))
    r2 = disk_radius * disk_radius
    for p in dense:
        covered |= (gx - p[0]) ** 2 + (gy - p[1]) ** 2 <= r2
    return float(covered.mean() * 100.0)


def bootstrap_mean_ci(samples, n_boot: int = 2000, confidence: float = 0.95,
                      seed: int = 0) -> tuple:
    """Percentile bootstrap interval for the mean: (mean, lo, hi)."""
    arr = np.asarray(samples, dtype=float)
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, arr.size, size=(n_boot, arr.size))
    means = arr[idx].mean(axis=1)
    alpha = (1.0 - confidence) / 2.0
    return (float(arr.mean()), float(np.quantile(means, alpha)),
            float(np.quantile(means, 1.0 - alpha)))


def paired_bootstrap_less(a, b, n_boot: int = 2000, seed: int = 0) -> float:
    """Confidence that mean(a) < mean(b) when a and b are paired by seed.

    Resamples the per-pair differences and returns the fraction of bootstrap
    means that are negative."""
    diff = np.asarray(a, dtype=float) - np.asarray(b, dtype=float)
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, diff.size, size=(n_boot, diff.size))
    means = diff[idx].mean(axis=1)
    return float((means < 0.0).mean())


# --- report serialization ---------------------------------------------------

def report_to_text(report: SimReport) -> str:
    """Line-delimited report; field order is fixed and floats use repr so two
    identical runs serialize byte-identically."""
    out = ["UVBOT-REPORT v1", f"seed {report.seed}", f"dt {report.dt!r}"]
    events_by_t = {}
    for t, kind, detail in report.events:
        events_by_t.setdefault(t, []).append((kind, detail))
    for rec in report.records:
        tx, ty, tth = rec.true_pose
        ex, ey, eth = rec.est_pose
        out.append(
            "TICK t={t!r} tx={tx!r} ty={ty!r} tth={tth!r} "
            "ex={ex!r} ey={ey!r} eth={eth!r} cv={cv!r} cw={cw!r} "
            "av={av!r} aw={aw!r} lset={ls} lon={lo} rset={rs} ron={ro} "
            "led={led} battery={b!r}".format(
                t=rec.t, tx=tx, ty=ty, tth=tth, ex=ex, ey=ey, eth=eth,
                cv=rec.cmd[0], cw=rec.cmd[1], av=rec.applied[0],
                aw=rec.applied[1], ls=rec.left_set, lo=rec.left_on,
                rs=rec.right_set, ro=rec.right_on, led=rec.led,
                b=rec.battery_wh))
        for h in rec.humans:
            out.append(f"HUMAN t={rec.t!r} id={h.agent_id} x={h.x!r} "
                       f"y={h.y!r} detected={int(h.detected)}")
        for kind, detail in events_by_t.get(rec.t, ()):
            out.append(f"EVENT t={rec.t!r} kind={kind} detail={detail}")
    for name, value in report.metrics:
        out.append(f"METRIC {name} {value!r}")
    out.append("END")
    return "\n".join(out) + "\n"


def parse_report(text: str) -> SimReport:
    """Inverse of report_to_text (events reattach by timestamp)."""
    report = SimReport(seed=0, dt=0.0)
    rec = None
    for line in text.splitlines():
        if line.startswith("seed "):
            report.seed = int(line.split()[1])
        elif line.startswith("dt "):
            report.dt = float(line.split()[1])
        elif line.startswith("TICK "):
            kv = dict(part.split("=", 1) for part in line[5:].split())
            rec = TickRecord(
                t=float(kv["t"]),
                true_pose=(float(kv["tx"]), float(kv["ty"]), float(kv["tth"])),
                est_pose=(float(kv["ex"]), float(kv["ey"]), float(kv["eth"])),
                cmd=(float(kv["cv"]), float(kv["cw"])),
                applied=(float(kv["av"]), float(kv["aw"])),
                left_set=int(kv["lset"]), left_on=int(kv["lon"]),
                right_set=int(kv["rset"]), right_on=int(kv["ron"]),
                led=kv["led"], battery_wh=float(kv["battery"]))
            report.records.append(rec)
        elif line.startswith("HUMAN "):
            kv = dict(part.split("=", 1) for part in line[6:].split())
            rec.humans.append(HumanRecord(kv["id"], float(kv["x"]),
                                          float(kv["y"]),
                                          bool(int(kv["detected"]))))
        elif line.startswith("EVENT "):
            body = line[6:]
            kv = {}
            for key in ("t", "kind", "detail"):
                marker = f"{key}="
                idx = body.find(marker)
                nxt = body.find(" kind=") if key == "t" else (
                    body.find(" detail=") if key == "kind" else -1)
                kv[key] = body[idx + len(marker):nxt if nxt >= 0 else None]
            report.events.append((float(kv["t"]), kv["kind"], kv["detail"]))
        elif line.startswith("METRIC "):
            _, name, value = line.split(" ", 2)
            report.metrics.append((name, float(value)))
    return report
