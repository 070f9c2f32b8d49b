"""Whole-system acceptance gates on the shipped fixtures.

Every test here drives the full simulator (or the full numeric stack) and
checks one end-to-end guarantee: coverage-pattern tracking accuracy,
calibration prediction windows, battery endurance, interlock soundness,
collision-free navigation, the core numeric invariants, run reproducibility,
and localization convergence.  These are the slow tests; the per-module
suites carry the fine-grained checks.
"""
import heapq
import math

import numpy as np
import pytest

from conftest import bordered_room, random_blocked_grid
from uvbot import localization as mcl
from uvbot.cli import main
from uvbot.config import build_scenario, fixture_path, load_config, load_scenario
from uvbot.disinfection import (DoseField, LampModel, accumulate_dose,
                                calibrate, load_observations, tbc_decrease)
from uvbot.planning import FollowParams, build_costmap, path_cost, plan_path
from uvbot.robot import (LidarParams, RobotConfig, Twist, simulate_lidar,
                         simulate_odometry, step_kinematics)
from uvbot.safety import LampBank, Side, in_half_plane, los_clear
from uvbot.sim import (GotoTask, Mode, Scenario, compute_metrics,
                       paired_bootstrap_less, run_scenario)
from uvbot.world import (FREE, OCCUPIED, HumanAgent, OccupancyGrid, Pose2D,
                         load_map, raycast, wrap_angle)


# ------------------------------------------------- coverage pattern ranking

def test_coverage_pattern_accuracy_ordering():
    """The inward spiral must track best, the boustrophedon second, the
    outward spiral worst, on both mean RMSE and mean peak error over 20
    seeds, with >= 95% paired-bootstrap confidence on the first gap, and
    the best pattern must stay at or under 0.10 m mean RMSE."""
    cfg0 = load_config(fixture_path("coverage_room.cfg"))
    kinds = ("rollingup", "sshape", "unfolding")
    rmse = {k: [] for k in kinds}
    peak = {k: [] for k in kinds}
    for kind in kinds:
        for seed in range(20):
            cfg = dict(cfg0)
            cfg["coverage_kind"] = kind
            cfg["seed"] = seed
            metrics = compute_metrics(run_scenario(build_scenario(cfg)))
            rmse[kind].append(metrics.rmse)
            peak[kind].append(metrics.max_error)
    mean_rmse = {k: float(np.mean(rmse[k])) for k in kinds}
    mean_peak = {k: float(np.mean(peak[k])) for k in kinds}
    assert mean_rmse["rollingup"] < mean_rmse["sshape"] < mean_rmse["unfolding"], mean_rmse
    assert mean_peak["rollingup"] < mean_peak["sshape"] < mean_peak["unfolding"], mean_peak
    confidence = paired_bootstrap_less(rmse["rollingup"], rmse["sshape"])
    assert confidence >= 0.95, confidence
    assert mean_rmse["rollingup"] <= 0.10, mean_rmse


# ------------------------------------------------- calibration windows

def test_calibration_prediction_windows():
    """A near-field fit of the survival constant must predict the ten-minute
    decrease inside the measured windows at both benchmark distances."""
    model = LampModel()
    observations = load_observations(fixture_path("table1.csv"))
    survival, _ = calibrate(observations, model, exposure_s=600.0,
                            fit_max_distance=3.0)

    def predicted(distance):
        dose = model.bank_irradiance(model.lamps_per_side, distance) * 600.0
        return float(tbc_decrease(dose, survival))

    assert 88.0 <= predicted(1.0) <= 98.0, predicted(1.0)
    assert 89.0 <= predicted(2.8) <= 99.0, predicted(2.8)


# ------------------------------------------------- endurance

def test_endurance_battery_budget():
    """A four-hour single-bank shift fits inside the battery: the run covers
    the whole duration and charge never goes negative."""
    scenario = load_scenario(fixture_path("endurance.cfg"))
    report = run_scenario(scenario)
    assert len(report.records) == int(round(scenario.duration / scenario.dt))
    assert report.records[-1].t == pytest.approx(scenario.duration - scenario.dt)
    assert min(rec.battery_wh for rec in report.records) >= 0.0


# ------------------------------------------------- interlock soundness

def _interlock_violations(report, grid, safety_radius):
    """Count ticks where a detected person stands inside an emitting bank's
    half-plane within range and with line-of-sight; also tally how often
    each bank tripped and how often it came back."""
    bad = 0
    engaged = {"left": 0, "right": 0}
    rearmed = {"left": 0, "right": 0}
    prev_on = {"left": None, "right": None}
    banks = {"left": LampBank(Side.LEFT), "right": LampBank(Side.RIGHT)}
    for rec in report.records:
        pose = Pose2D(*rec.true_pose)
        for side in ("left", "right"):
            on = getattr(rec, f"{side}_on")
            if on < getattr(rec, f"{side}_set"):
                engaged[side] += 1
            if prev_on[side] == 0 and on > 0:
                rearmed[side] += 1
            prev_on[side] = on
            if on <= 0:
                continue
            for human in rec.humans:
                if not human.detected:
                    continue
                d = math.hypot(human.x - pose.x, human.y - pose.y)
                if (d <= safety_radius
                        and in_half_plane(banks[side], pose, human.x, human.y)
                        and los_clear(grid, pose, human.x, human.y)):
                    bad += 1
    return bad, engaged, rearmed


def test_interlock_blocks_all_exposure():
    """Across every shipped human-interaction scenario the lamps never emit
    toward a detected person in the unsafe zone, nobody is irradiated while
    unseen, and the guard both trips and re-arms (it is not vacuously off)."""
    for name in ("hs_approach_left", "hs_approach_right", "hs_occluded",
                 "hs_crossing", "hs_loiter"):
        scenario = load_scenario(fixture_path(f"{name}.cfg"))
        report = run_scenario(scenario)
        bad, engaged, rearmed = _interlock_violations(
            report, scenario.grid, scenario.interlock.safety_radius)
        assert bad == 0, f"{name}: {bad} emitting ticks with a person in the zone"
        assert not any(k == "Exposure" for _, k, _ in report.events), name
        assert engaged["left"] + engaged["right"] > 0, f"{name} never tripped"
        assert rearmed["left"] + rearmed["right"] > 0, f"{name} never re-armed"
        if name == "hs_crossing":
            # walking across the bow must sweep both banks dark in turn
            assert engaged["left"] > 0 and engaged["right"] > 0
            assert any(k == "TrajectoryDone" for _, k, _ in report.events)


# ------------------------------------------------- randomized collision sweep

def _fill_rect(cells, res, x0, y0, x1, y1):
    ix0 = max(0, int(math.floor(x0 / res)))
    iy0 = max(0, int(math.floor(y0 / res)))
    ix1 = min(cells.shape[1], int(math.ceil(x1 / res)))
    iy1 = min(cells.shape[0], int(math.ceil(y1 / res)))
    cells[iy0:iy1, ix0:ix1] = OCCUPIED


def _random_goto_scenario(seed):
    """A 10x8 m room with 3-6 random box obstacles, a reachable random goal
    on the far side, and two people pacing random line segments."""
    rng = np.random.default_rng(seed)
    res = 0.05
    w_m, h_m = 10.0, 8.0
    start = Pose2D(1.0, 1.0, 0.0)
    while True:
        w = int(round(w_m / res)) + 2
        h = int(round(h_m / res)) + 2
        cells = np.full((h, w), OCCUPIED, dtype=np.uint8)
        cells[1:h - 1, 1:w - 1] = FREE
        inner = cells[1:, 1:]
        for _ in range(int(rng.integers(3, 7))):
            for _try in range(50):
                ox = float(rng.uniform(0.0, w_m - 0.4))
                oy = float(rng.uniform(0.0, h_m - 0.4))
                ow = float(rng.uniform(0.4, 1.2))
                oh = float(rng.uniform(0.4, 1.2))
                cx, cy = ox + ow / 2, oy + oh / 2
                if math.hypot(cx - start.x, cy - start.y) < 1.2 + max(ow, oh) / 2:
                    continue
                _fill_rect(inner, res, ox, oy, min(ox + ow, w_m), min(oy + oh, h_m))
                break
        grid = OccupancyGrid(res, -res, -res, cells)
        cmap = build_costmap(grid, 0.40, 0.8, 2.0)
        goal = None
        for _try in range(50):
            gx = float(rng.uniform(w_m - 3.0, w_m - 0.8))
            gy = float(rng.uniform(0.8, h_m - 0.8))
            igx, igy = grid.world_to_cell(gx, gy)
            if cmap.lethal[igy, igx]:
                continue
            if plan_path(cmap, (start.x, start.y), (gx, gy)) is not None:
                goal = (gx, gy)
                break
        if goal is None:
            continue  # obstacle draw walled the room off; redraw
        humans = []
        for hid in range(2):
            for _try in range(80):
                ax = float(rng.uniform(0.6, w_m - 0.6))
                ay = float(rng.uniform(0.6, h_m - 0.6))
                bx = float(rng.uniform(0.6, w_m - 0.6))
                by = float(rng.uniform(0.6, h_m - 0.6))
                seg = math.hypot(bx - ax, by - ay)
                if seg < 3.0:
                    continue
                ia, ja = grid.world_to_cell(ax, ay)
                ib, jb = grid.world_to_cell(bx, by)
                if grid.cells[ja, ia] != FREE or grid.cells[jb, ib] != FREE:
                    continue
                ang = math.atan2(by - ay, bx - ax)
                if raycast(grid, ax, ay, ang, seg) < seg - grid.resolution:
                    continue
                speed = float(rng.uniform(0.7, 1.2))
                tcur = float(rng.uniform(0.0, 8.0))
                leg = seg / speed
                # ping-pong for the whole run so nobody parks in a corridor
                sched = [(tcur, (ax, ay))]
                ends = [(bx, by), (ax, ay)]
                i = 0
                while tcur < 85.0:
                    tcur += leg
                    sched.append((tcur, ends[i % 2]))
                    tcur += 2.0
                    sched.append((tcur, ends[i % 2]))
                    i += 1
                humans.append(HumanAgent(str(hid + 1), Pose2D(ax, ay, 0.0),
                                         0.3, sched))
                break
        return Scenario(grid=grid, start=start, mode=Mode.AUTO_KNOWN,
                        task=GotoTask(goal[0], goal[1]), humans=humans,
                        duration=80.0, dt=0.1, seed=seed,
                        follow_params=FollowParams(v_cruise=0.45))


def test_randomized_goto_never_hits_obstacles():
    """100 randomized goto runs with random maps and pacing people: the
    footprint never overlaps an occupied cell, and most runs actually make
    it to the goal (so the sweep is not passing by standing still)."""
    collisions = 0
    reached = 0
    for seed in range(100):
        report = run_scenario(_random_goto_scenario(seed))
        collisions += sum(1 for _, k, _ in report.events if k == "Collision")
        reached += int(any(k == "TrajectoryDone" for _, k, _ in report.events))
    assert collisions == 0, f"{collisions} footprint-obstacle contacts"
    assert reached >= 50, f"only {reached}/100 runs reached the goal"


# ------------------------------------------------- core numeric invariants

def _dijkstra_cost(cmap, start, goal):
    """Independent optimal-cost oracle over the same 8-connected edge model."""
    grid = cmap.grid
    res = cmap.resolution
    sx, sy = grid.world_to_cell(*start)
    gx, gy = grid.world_to_cell(*goal)
    lethal = cmap.lethal_at(0.0)
    if lethal[sy, sx] or lethal[gy, gx]:
        return None
    h, w = grid.cells.shape
    dist = np.full((h, w), np.inf)
    dist[sy, sx] = 0.0
    heap = [(0.0, sx, sy)]
    steps = [(1, 0, 1.0), (-1, 0, 1.0), (0, 1, 1.0), (0, -1, 1.0),
             (1, 1, math.sqrt(2)), (1, -1, math.sqrt(2)),
             (-1, 1, math.sqrt(2)), (-1, -1, math.sqrt(2))]
    while heap:
        d, cx, cy = heapq.heappop(heap)
        if d > dist[cy, cx]:
            continue
        if (cx, cy) == (gx, gy):
            return d
        for dx, dy, step in steps:
            nx, ny = cx + dx, cy + dy
            if nx < 0 or nx >= w or ny < 0 or ny >= h or lethal[ny, nx]:
                continue
            nd = d + step * res * (1.0 + cmap.cost[ny, nx])
            if nd < dist[ny, nx]:
                dist[ny, nx] = nd
                heapq.heappush(heap, (nd, nx, ny))
    return None


def test_core_invariant_sweep():
    """The numeric backbone holds in one sweep: weights renormalize, the
    systematic resampler is proportional, the planner is optimal against
    Dijkstra on 50 random grids, irradiance follows the inverse square
    exactly, dose accumulation is linear and monotone, and rigid-body
    integration composes."""
    rng = np.random.default_rng(77)

    # particle weights sum to one after every measurement update
    room = bordered_room(30, 20)
    lfield = mcl.build_likelihood_field(room)
    params = mcl.MclParams(n_particles=400, beam_step=4)
    robot = RobotConfig()
    pset = mcl.init_uniform(room, params.n_particles, rng)
    for _ in range(3):
        scan = simulate_lidar(room, Pose2D(1.5, 1.0, 0.4), robot, rng)
        mcl.measurement_update(pset, scan, lfield, params)
        assert abs(float(pset.weights.sum()) - 1.0) < 1e-9
        mcl.resample(pset)

    # systematic resampling reproduces each parent within one copy of n*w
    for _ in range(20):
        n = int(rng.integers(3, 60))
        w = rng.random(n) + 1e-3
        w /= w.sum()
        children = mcl.systematic_resample(w, n, float(rng.random()))
        counts = np.bincount(children, minlength=n)
        assert np.all(np.abs(counts - n * w) <= 1.0 + 1e-12)

    # planned cost equals the Dijkstra optimum on 50 random grids
    checked = 0
    for _ in range(50):
        grid = random_blocked_grid(rng, 40, 40, p_occupied=0.12)
        cmap = build_costmap(grid, inflation_radius=0.1, soft_radius=0.3,
                             soft_weight=2.0)
        open_cells = np.argwhere(~cmap.lethal)
        if open_cells.shape[0] < 2:
            continue
        for _ in range(2):
            a = open_cells[rng.integers(open_cells.shape[0])]
            b = open_cells[rng.integers(open_cells.shape[0])]
            start = grid.cell_to_world(int(a[1]), int(a[0]))
            goal = grid.cell_to_world(int(b[1]), int(b[0]))
            want = _dijkstra_cost(cmap, start, goal)
            path = plan_path(cmap, start, goal)
            if want is None:
                assert path is None
                continue
            assert path is not None
            if (a == b).all():
                continue
            assert path_cost(cmap, path) == pytest.approx(want, abs=1e-9)
            checked += 1
    assert checked >= 30  # the sweep must actually exercise solvable cases

    # doubling distance quarters irradiance, exactly, for dyadic radii
    model = LampModel()
    assert model.bank_irradiance(4, 0.5) / model.bank_irradiance(4, 1.0) == 4.0
    assert model.bank_irradiance(4, 1.0) / model.bank_irradiance(4, 2.0) == 4.0

    # dose is linear in lamp count and never decreases as time accumulates
    pose = Pose2D(1.5, 1.0, 0.3)
    full = DoseField(room)
    half = DoseField(room)
    banks = lambda n: [LampBank(Side.LEFT, lamps_set=n, lamps_on=n),
                       LampBank(Side.RIGHT, lamps_set=n, lamps_on=n)]
    accumulate_dose(full, pose, banks(4), model, dt=1.0)
    accumulate_dose(half, pose, banks(2), model, dt=1.0)
    assert np.allclose(full.dose, 2.0 * half.dose, rtol=1e-12, atol=0.0)
    before = full.dose.copy()
    accumulate_dose(full, Pose2D(2.1, 1.3, -0.7), banks(4), model, dt=0.5)
    assert np.all(full.dose >= before)

    # integrating one twist over dt equals integrating it in two pieces
    for _ in range(50):
        pose = Pose2D(float(rng.uniform(-3, 3)), float(rng.uniform(-3, 3)),
                      float(rng.uniform(-np.pi, np.pi)))
        tw = Twist(float(rng.uniform(-1, 1)), float(rng.uniform(-2, 2)))
        a = float(rng.uniform(0.01, 0.5))
        b = float(rng.uniform(0.01, 0.5))
        whole = step_kinematics(pose, tw, a + b)
        parts = step_kinematics(step_kinematics(pose, tw, a), tw, b)
        assert math.hypot(whole.x - parts.x, whole.y - parts.y) < 1e-9
        assert abs(wrap_angle(whole.theta - parts.theta)) < 1e-9


# ------------------------------------------------- reproducibility

def test_cli_run_byte_determinism(tmp_path):
    """Two CLI runs with the same config and seed write byte-identical
    reports, including the full stochastic stack (lidar noise, odometry
    noise, particle filter, moving people)."""
    out_a = tmp_path / "a.report"
    out_b = tmp_path / "b.report"
    cfg = fixture_path("coverage_room.cfg")
    assert main(["run", "--config", cfg, "--out", str(out_a)]) == 0
    assert main(["run", "--config", cfg, "--out", str(out_b)]) == 0
    assert out_a.read_bytes() == out_b.read_bytes()


# ------------------------------------------------- localization convergence

def test_corridor_localization_convergence():
    """From a uniform prior in the corridor map, spinning in place must pull
    the estimate to within 3 cells of the true pose inside 30 sense-update
    cycles for at least 18 of 20 seeds."""
    grid = load_map(fixture_path("corridor.grid"))
    lfield = mcl.build_likelihood_field(grid)
    tol = 3 * grid.resolution
    robot = RobotConfig(lidar=LidarParams(beam_count=72, max_range=4.0,
                                          range_noise_sigma=0.02))
    converged = 0
    for seed in range(20):
        rng = np.random.default_rng(seed)
        true = Pose2D(2.5, 1.0, 0.0)
        params = mcl.MclParams(n_particles=30000, sigma_hit=0.3, beam_step=6,
                               sigma_v=0.05, sigma_w=0.06)
        pset = mcl.init_uniform(grid, params.n_particles, rng)
        for _ in range(30):
            scan = simulate_lidar(grid, true, robot, rng)
            odom = simulate_odometry(Twist(0.0, 0.4), 0.02, 0.02, rng)
            mcl.motion_update(pset, (odom.v, odom.w, 0.4), params)
            mcl.measurement_update(pset, scan, lfield, params)
            mcl.resample(pset)
            est, _ = mcl.estimate(pset)
            if math.hypot(est.x - true.x, est.y - true.y) < tol:
                converged += 1
                break
            true = step_kinematics(true, Twist(0.0, 0.4), 0.4)
    assert converged >= 18, f"only {converged}/20 seeds converged"
