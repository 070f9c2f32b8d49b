"""Flat key=value scenario configs with a self-documenting key registry."""
from __future__ import annotations

import math
import os
from dataclasses import dataclass

from . import localization as mcl
from .world import HumanAgent, Pose2D, load_map
from .robot import LidarParams, RobotConfig, UltrasonicParams
from .planning import FollowParams, Rect, TrajectoryKind
from .safety import DetectionParams, GuardParams, InterlockParams
from .disinfection import LampModel
from .sim import (CoverageTask, GotoTask, LogOddsParams, Mode, PlanParams,
                  Scenario)


class ConfigError(ValueError):
    pass


def fixture_path(name: str) -> str:
    """Absolute path of a data file shipped inside the package."""
    from importlib import resources
    return str(resources.files(__package__).joinpath("fixtures", name))


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {text!r}")


@dataclass(frozen=True)
class ConfigKey:
    default: object
    parse: object  # callable str -> value; None marks repeatable raw keys
    help: str


# Every accepted key.  Unknown keys are rejected outright, so a typo in a
# scenario file fails the run instead of silently using a default.
REGISTRY: dict = {
    "map": ConfigKey(None, str, "grid file path, relative to the config file"),
    "start_x": ConfigKey(1.0, float, "initial true x [m]"),
    "start_y": ConfigKey(1.0, float, "initial true y [m]"),
    "start_theta": ConfigKey(0.0, float, "initial true heading [rad]"),
    "mode": ConfigKey("auto_known", str,
                      "manual | auto_known | auto_unknown"),
    "task": ConfigKey("none", str, "none | coverage | goto"),
    "coverage_kind": ConfigKey("sshape", str,
                               "sshape | rollingup | unfolding"),
    "coverage_x0": ConfigKey(0.0, float, "coverage rect min x [m]"),
    "coverage_y0": ConfigKey(0.0, float, "coverage rect min y [m]"),
    "coverage_x1": ConfigKey(4.0, float, "coverage rect max x [m]"),
    "coverage_y1": ConfigKey(4.0, float, "coverage rect max y [m]"),
    "coverage_spacing": ConfigKey(1.0, float, "lane spacing [m]"),
    "coverage_inset": ConfigKey(-1.0, float,
                                "wall inset [m]; negative = footprint + 0.2"),
    "start_at_path": ConfigKey(False, _bool,
                               "coverage: start on the path head instead of "
                               "start_x/start_y"),
    "goal_x": ConfigKey(0.0, float, "goto goal x [m]"),
    "goal_y": ConfigKey(0.0, float, "goto goal y [m]"),
    "duration": ConfigKey(120.0, float, "simulated time [s]"),
    "dt": ConfigKey(0.05, float, "tick length [s]"),
    "seed": ConfigKey(0, int, "random generator seed"),
    "lamps_left": ConfigKey(0, int, "lamps switched on, left bank"),
    "lamps_right": ConfigKey(0, int, "lamps switched on, right bank"),
    "battery_capacity_wh": ConfigKey(1200.0, float, "battery capacity [Wh]"),
    "battery_initial_wh": ConfigKey(-1.0, float,
                                    "initial charge [Wh]; negative = full"),
    "odom_sigma_v": ConfigKey(0.02, float, "odometry linear noise sigma"),
    "odom_sigma_w": ConfigKey(0.02, float, "odometry angular noise sigma"),
    "dose_enabled": ConfigKey(False, _bool, "accumulate the UV dose field"),
    # robot geometry and sensors
    "footprint_radius": ConfigKey(0.30, float, "robot body radius [m]"),
    "max_linear_speed": ConfigKey(0.6, float, "linear speed limit [m/s]"),
    "max_angular_speed": ConfigKey(1.5, float, "angular speed limit [rad/s]"),
    "base_load_w": ConfigKey(180.0, float, "drive + compute load [W]"),
    "lamp_power_w": ConfigKey(30.0, float, "electrical draw per lamp [W]"),
    "lamps_per_side": ConfigKey(4, int, "lamps mounted on each bank"),
    "beam_count": ConfigKey(72, int, "lidar beams per scan"),
    "lidar_max_range": ConfigKey(10.0, float, "lidar range limit [m]"),
    "range_noise_sigma": ConfigKey(0.02, float, "lidar noise sigma [m]"),
    "us_count": ConfigKey(10, int, "ultrasonic sensors around the body"),
    "us_max_range": ConfigKey(2.0, float, "ultrasonic range limit [m]"),
    "us_cone_halfangle": ConfigKey(math.radians(15.0), float,
                                   "ultrasonic cone half-angle [rad]"),
    "us_rays_per_cone": ConfigKey(5, int, "rays sampled per ultrasonic cone"),
    # localization
    "particles": ConfigKey(500, int, "particle count"),
    "sigma_hit": ConfigKey(0.15, float, "likelihood field sigma [m]"),
    "z_hit": ConfigKey(0.95, float, "hit mixture weight"),
    "z_rand": ConfigKey(0.05, float, "uniform mixture weight"),
    "beam_step": ConfigKey(10, int, "use every beam_step-th beam"),
    "mcl_sigma_v": ConfigKey(0.08, float, "filter linear motion noise"),
    "mcl_sigma_w": ConfigKey(0.12, float, "filter angular motion noise"),
    "sigma_init_xy": ConfigKey(0.3, float, "initial cloud xy sigma [m]"),
    "sigma_init_theta": ConfigKey(0.2, float, "initial cloud heading sigma"),
    # path following
    "lookahead": ConfigKey(0.5, float, "pure pursuit lookahead [m]"),
    "k_heading": ConfigKey(2.0, float, "heading error gain"),
    "v_cruise": ConfigKey(0.3, float, "cruise speed [m/s]"),
    "goal_tolerance": ConfigKey(0.12, float, "trajectory end tolerance [m]"),
    # collision guard
    "stop_distance": ConfigKey(0.35, float, "full stop range [m]"),
    "slow_distance": ConfigKey(0.9, float, "speed taper range [m]"),
    "guard_sector_halfangle": ConfigKey(math.radians(60.0), float,
                                        "guard look sector half-angle [rad]"),
    "v_limit": ConfigKey(0.6, float, "guard speed cap at slow_distance"),
    # human detection + lamp interlock
    "detect_range": ConfigKey(10.0, float, "camera detection range [m]"),
    "detect_sector_halfangle": ConfigKey(math.radians(45.0), float,
                                         "camera sector half-angle [rad]"),
    "miss_rate": ConfigKey(0.0, float, "per-tick detection miss probability"),
    "safety_radius": ConfigKey(3.0, float, "lamp cutoff radius [m]"),
    "holdoff": ConfigKey(3.0, float, "clear time before lamps rearm [s]"),
    # lamp output model
    "uvc_power_w": ConfigKey(12.0, float, "UV-C output per lamp [W]"),
    "reflector_gain": ConfigKey(1.3, float, "reflector concentration factor"),
    "r_min": ConfigKey(0.3, float, "near-field clamp distance [m]"),
    # planner
    "inflation_radius": ConfigKey(0.40, float, "lethal inflation [m]"),
    "soft_radius": ConfigKey(0.8, float, "soft cost radius [m]"),
    "soft_weight": ConfigKey(2.0, float, "soft cost weight"),
    "dynamic_ttl": ConfigKey(5.0, float, "dynamic obstacle lifetime [s]"),
    "smooth": ConfigKey(True, _bool, "shortcut-smooth planned paths"),
    "replan_period": ConfigKey(2.0, float,
                               "learned-map rebuild period [s]"),
    # mapping (unknown-map mode)
    "l_occ": ConfigKey(0.85, float, "log-odds increment at beam endpoints"),
    "l_free": ConfigKey(-0.4, float, "log-odds decrement along beams"),
    "logodds_clamp": ConfigKey(10.0, float, "log-odds saturation bound"),
    # repeatable keys
    "human": ConfigKey(None, None,
                       "id radius t:x:y [t:x:y ...]  (repeatable)"),
    "manual": ConfigKey(None, None, "t_from v w  (repeatable)"),
}

_REPEATABLE = ("human", "manual")


def parse_config_text(text: str, source: str = "<string>") -> dict:
    """Parse key = value lines.  '#' starts a comment, blank lines are
    skipped, unknown or duplicated scalar keys raise ConfigError."""
    values: dict = {key: [] for key in _REPEATABLE}
    seen = set()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected key = value")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key not in REGISTRY:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        if key in _REPEATABLE:
            values[key].append(value)
            continue
        if key in seen:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        seen.add(key)
        try:
            values[key] = REGISTRY[key].parse(value)
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(f"{source}:{lineno}: bad value for {key}: {exc}")
    for key, entry in REGISTRY.items():
        if key not in values and key not in _REPEATABLE:
            values[key] = entry.default
    return values


def load_config(path: str) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    values = parse_config_text(text, source=path)
    values["_base_dir"] = os.path.dirname(os.path.abspath(path))
    return values


def _parse_human(entry: str) -> HumanAgent:
    parts = entry.split()
    if len(parts) < 3:
        raise ConfigError(f"human needs 'id radius t:x:y ...': {entry!r}")
    agent_id = parts[0]
    radius = float(parts[1])
    schedule = []
    for token in parts[2:]:
        fields = token.split(":")
        if len(fields) != 3:
            raise ConfigError(f"bad human waypoint {token!r}")
        schedule.append((float(fields[0]),
                         (float(fields[1]), float(fields[2]))))
    first = schedule[0][1]
    return HumanAgent(agent_id, Pose2D(first[0], first[1], 0.0), radius,
                      schedule)


def _parse_manual(entry: str) -> tuple:
    parts = entry.split()
    if len(parts) != 3:
        raise ConfigError(f"manual needs 't v w': {entry!r}")
    return (float(parts[0]), float(parts[1]), float(parts[2]))


def build_scenario(cfg: dict) -> Scenario:
    """Assemble a Scenario from parsed config values."""
    if not cfg.get("map"):
        raise ConfigError("config is missing the required 'map' key")
    map_path = cfg["map"]
    if not os.path.isabs(map_path):
        map_path = os.path.join(cfg.get("_base_dir", "."), map_path)
    grid = load_map(map_path)

    robot = RobotConfig(
        footprint_radius=cfg["footprint_radius"],
        max_linear_speed=cfg["max_linear_speed"],
        max_angular_speed=cfg["max_angular_speed"],
        base_load_w=cfg["base_load_w"],
        lamp_power_w=cfg["lamp_power_w"],
        lamps_per_side=cfg["lamps_per_side"],
        lidar=LidarParams(cfg["beam_count"], cfg["lidar_max_range"],
                          cfg["range_noise_sigma"]),
        ultrasonic=UltrasonicParams(cfg["us_count"], cfg["us_max_range"],
                                    cfg["us_cone_halfangle"],
                                    cfg["us_rays_per_cone"]))

    task: CoverageTask | GotoTask | None
    if cfg["task"] == "coverage":
        try:
            kind = TrajectoryKind(cfg["coverage_kind"])
        except ValueError:
            raise ConfigError(f"unknown coverage_kind {cfg['coverage_kind']!r}")
        if kind == TrajectoryKind.PLANNED:
            raise ConfigError("coverage_kind must be a coverage pattern")
        inset = cfg["coverage_inset"]
        task = CoverageTask(
            kind,
            Rect(cfg["coverage_x0"], cfg["coverage_y0"],
                 cfg["coverage_x1"], cfg["coverage_y1"]),
            cfg["coverage_spacing"],
            None if inset < 0 else inset)
    elif cfg["task"] == "goto":
        task = GotoTask(cfg["goal_x"], cfg["goal_y"])
    elif cfg["task"] == "none":
        task = None
    else:
        raise ConfigError(f"unknown task {cfg['task']!r}")

    try:
        mode = Mode(cfg["mode"])
    except ValueError:
        raise ConfigError(f"unknown mode {cfg['mode']!r}")

    humans = [_parse_human(entry) for entry in cfg["human"]]
    script = sorted(_parse_manual(entry) for entry in cfg["manual"])

    return Scenario(
        grid=grid,
        start=Pose2D(cfg["start_x"], cfg["start_y"], cfg["start_theta"]),
        mode=mode,
        task=task,
        humans=humans,
        duration=cfg["duration"],
        dt=cfg["dt"],
        seed=cfg["seed"],
        robot=robot,
        mcl_params=mcl.MclParams(
            n_particles=cfg["particles"], sigma_hit=cfg["sigma_hit"],
            z_hit=cfg["z_hit"], z_rand=cfg["z_rand"],
            beam_step=cfg["beam_step"], sigma_v=cfg["mcl_sigma_v"],
            sigma_w=cfg["mcl_sigma_w"], sigma_init_xy=cfg["sigma_init_xy"],
            sigma_init_theta=cfg["sigma_init_theta"]),
        follow_params=FollowParams(cfg["lookahead"], cfg["k_heading"],
                                   cfg["v_cruise"], cfg["goal_tolerance"]),
        guard_params=GuardParams(cfg["stop_distance"], cfg["slow_distance"],
                                 cfg["guard_sector_halfangle"],
                                 cfg["v_limit"]),
        detection=DetectionParams(
            detect_range=cfg["detect_range"],
            sector_halfangle=cfg["detect_sector_halfangle"],
            miss_rate=cfg["miss_rate"]),
        interlock=InterlockParams(cfg["safety_radius"], cfg["holdoff"]),
        lamp_model=LampModel(cfg["uvc_power_w"], cfg["lamps_per_side"],
                             cfg["reflector_gain"], cfg["r_min"]),
        plan_params=PlanParams(cfg["inflation_radius"], cfg["soft_radius"],
                               cfg["soft_weight"], cfg["dynamic_ttl"],
                               cfg["smooth"], cfg["replan_period"]),
        log_odds=LogOddsParams(cfg["l_occ"], cfg["l_free"],
                               cfg["logodds_clamp"]),
        lamps_left=cfg["lamps_left"],
        lamps_right=cfg["lamps_right"],
        battery_capacity_wh=cfg["battery_capacity_wh"],
        battery_initial_wh=(None if cfg["battery_initial_wh"] < 0
                            else cfg["battery_initial_wh"]),
        odom_sigma_v=cfg["odom_sigma_v"],
        odom_sigma_w=cfg["odom_sigma_w"],
        dose_enabled=cfg["dose_enabled"],
        manual_script=script,
        start_at_path=cfg["start_at_path"])


def load_scenario(path: str, seed: int | None = None) -> Scenario:
    cfg = load_config(path)
    if seed is not None:
        cfg["seed"] = seed
    return build_scenario(cfg)


def config_help() -> str:
    """One line per key: name, default, description."""
    lines = []
    width = max(len(k) for k in REGISTRY)
    for key, entry in REGISTRY.items():
        if key in _REPEATABLE:
            default = "(repeatable)"
        else:
            default = repr(entry.default)
        lines.append(f"{key:<{width}}  {default:<22}  {entry.help}")
    return "\n".join(lines) + "\n"
