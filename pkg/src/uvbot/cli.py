"""Command line front end: run scenarios, compare coverage patterns, fit the
disinfection model."""
from __future__ import annotations

import argparse
import logging
import os
import sys

from .config import (ConfigError, build_scenario, config_help, fixture_path,
                     load_config)
from .disinfection import (CalibrationError, LampModel, SurvivalModel,
                           calibrate, load_observations, write_dose_csv,
                           write_dose_pgm)
from .planning import TrajectoryKind
from .sim import (bootstrap_mean_ci, compute_metrics, paired_bootstrap_less,
                  report_to_text, run_scenario)
from .world import GridFormatError, save_map

log = logging.getLogger("uvbot")

_COVERAGE_KINDS = ("rollingup", "sshape", "unfolding")


def _emit(rows: list, fmt: str, out) -> None:
    """rows: list of (name, value).  kv prints 'name value', csv prints a
    two-line header/value table."""
    if fmt == "csv":
        out.write(",".join(str(name) for name, _ in rows) + "\n")
        out.write(",".join(repr(v) if isinstance(v, float) else str(v)
                           for _, v in rows) + "\n")
    else:
        for name, value in rows:
            value = repr(value) if isinstance(value, float) else value
            out.write(f"{name} {value}\n")


def cmd_run(args) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg["seed"] = args.seed
    scenario = build_scenario(cfg)
    report = run_scenario(scenario)
    text = report_to_text(report)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
        log.info("report written to %s", args.out)
        _emit(report.metrics, args.format, sys.stdout)
    else:
        sys.stdout.write(text)
    if args.dose_pgm:
        if report.dose_field is None:
            raise ConfigError("--dose-pgm needs dose_enabled = true")
        write_dose_pgm(report.dose_field, args.dose_pgm)
    if args.dose_csv:
        if report.dose_field is None:
            raise ConfigError("--dose-csv needs dose_enabled = true")
        if args.survival_k is not None:
            survival = SurvivalModel(args.survival_k)
        else:
            # fall back to the constant fitted on the shipped measurements
            survival, _ = calibrate(
                load_observations(fixture_path("table1.csv")),
                LampModel(uvc_power_w=cfg["uvc_power_w"],
                          lamps_per_side=cfg["lamps_per_side"],
                          reflector_gain=cfg["reflector_gain"],
                          r_min=cfg["r_min"]))
        write_dose_csv(report.dose_field, survival, args.dose_csv)
    if args.map_out:
        if report.log_odds_map is None:
            raise ConfigError("--map-out needs mode = auto_unknown")
        save_map(report.log_odds_map.to_occupancy(), args.map_out)
    return 0


def cmd_compare(args) -> int:
    cfg = load_config(args.config)
    if cfg["task"] != "coverage":
        raise ConfigError("compare needs a coverage config")
    seeds = list(range(args.seed_base, args.seed_base + args.seeds))
    kinds = args.kinds.split(",")
    for kind in kinds:
        if kind not in _COVERAGE_KINDS:
            raise ConfigError(f"unknown coverage kind {kind!r}")
    rmse: dict = {k: [] for k in kinds}
    max_err: dict = {k: [] for k in kinds}
    for kind in kinds:
        for seed in seeds:
            one = dict(cfg)
            one["coverage_kind"] = kind
            one["seed"] = seed
            report = run_scenario(build_scenario(one))
            tm = compute_metrics(report)
            rmse[kind].append(tm.rmse)
            max_err[kind].append(tm.max_error)
            log.info("%s seed=%d rmse=%.4f max=%.4f", kind, seed, tm.rmse,
                     tm.max_error)
    rows = []
    for kind in kinds:
        mean, lo, hi = bootstrap_mean_ci(rmse[kind])
        rows.append((f"{kind}_rmse_mean", mean))
        rows.append((f"{kind}_rmse_ci_lo", lo))
        rows.append((f"{kind}_rmse_ci_hi", hi))
        mmean, mlo, mhi = bootstrap_mean_ci(max_err[kind])
        rows.append((f"{kind}_max_mean", mmean))
        rows.append((f"{kind}_max_ci_lo", mlo))
        rows.append((f"{kind}_max_ci_hi", mhi))
    for a, b in zip(kinds[:-1], kinds[1:]):
        conf = paired_bootstrap_less(rmse[a], rmse[b])
        rows.append((f"confidence_{a}_lt_{b}", conf))
    out = sys.stdout
    if args.out:
        out = open(args.out, "w", encoding="utf-8")
    try:
        _emit(rows, args.format, out)
    finally:
        if args.out:
            out.close()
    return 0


def cmd_calibrate(args) -> int:
    observations = load_observations(args.table)
    lamp = LampModel(uvc_power_w=args.uvc_power_w,
                     lamps_per_side=args.lamps_per_side,
                     reflector_gain=args.reflector_gain)
    model, rows = calibrate(observations, lamp, exposure_s=args.exposure_s,
                            fit_max_distance=args.fit_max_distance)
    out_rows = [("k_m2_per_j", model.k)]
    for row in rows:
        tag = f"d{row.distance:g}_h{row.height:g}"
        out_rows.append((f"{tag}_measured_pct", row.measured_decrease))
        out_rows.append((f"{tag}_predicted_pct", row.predicted_decrease))
        out_rows.append((f"{tag}_fitted", int(row.fitted)))
    _emit(out_rows, args.format, sys.stdout)
    return 0


def cmd_help_config(args) -> int:
    sys.stdout.write(config_help())
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="uvbot",
        description="UV-C disinfection robot simulation toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one scenario config")
    p_run.add_argument("--config", required=True, help="scenario file")
    p_run.add_argument("--seed", type=int, default=None,
                       help="override the config seed")
    p_run.add_argument("--out", default=None,
                       help="write the tick report here instead of stdout")
    p_run.add_argument("--dose-pgm", default=None,
                       help="write the dose field as a 16-bit PGM")
    p_run.add_argument("--dose-csv", default=None,
                       help="write per-cell dose and predicted decrease")
    p_run.add_argument("--survival-k", type=float, default=None,
                       help="inactivation constant for --dose-csv; default "
                            "refits the shipped measurement table")
    p_run.add_argument("--map-out", default=None,
                       help="write the learned occupancy grid (unknown mode)")
    p_run.add_argument("--format", choices=("kv", "csv"), default="kv")
    p_run.set_defaults(func=cmd_run)

    p_cmp = sub.add_parser("compare",
                           help="run coverage patterns over a seed set")
    p_cmp.add_argument("--config", required=True,
                       help="coverage scenario file")
    p_cmp.add_argument("--seeds", type=int, default=20,
                       help="number of seeds")
    p_cmp.add_argument("--seed-base", type=int, default=0,
                       help="first seed value")
    p_cmp.add_argument("--kinds", default=",".join(_COVERAGE_KINDS),
                       help="comma list of patterns to compare")
    p_cmp.add_argument("--out", default=None)
    p_cmp.add_argument("--format", choices=("kv", "csv"), default="kv")
    p_cmp.set_defaults(func=cmd_compare)

    p_cal = sub.add_parser("calibrate",
                           help="fit the survival constant to measurements")
    p_cal.add_argument("--table", required=True,
                       help="csv: distance_m,height_m,before,after")
    p_cal.add_argument("--exposure-s", type=float, default=600.0)
    p_cal.add_argument("--fit-max-distance", type=float, default=3.0)
    p_cal.add_argument("--uvc-power-w", type=float, default=12.0)
    p_cal.add_argument("--lamps-per-side", type=int, default=4)
    p_cal.add_argument("--reflector-gain", type=float, default=1.3)
    p_cal.add_argument("--format", choices=("kv", "csv"), default="kv")
    p_cal.set_defaults(func=cmd_calibrate)

    p_help = sub.add_parser("help-config",
                            help="list every config key with its default")
    p_help.set_defaults(func=cmd_help_config)
    return parser


def main(argv=None) -> int:
    level = os.environ.get("UVBOT_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, GridFormatError, CalibrationError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
