"""UV-C irradiance, dose accumulation, and survival-model calibration."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .world import FREE, OccupancyGrid, Pose2D, raycast_many
from .safety import LampBank, Side, in_half_plane, los_clear


class CalibrationError(ValueError):
    pass


@dataclass
class LampModel:
    """Planar point-source model of one lamp bank.

    Lamps are mounted vertically; the 2-d collapse treats the whole column
    as a point source at the robot center, with a near-field clamp r_min so
    the inverse-square law cannot blow up against the robot shell.
    """

    uvc_power_w: float = 12.0
    lamps_per_side: int = 4
    reflector_gain: float = 1.3
    r_min: float = 0.3

    def __post_init__(self) -> None:
        if self.reflector_gain < 1.0:
            raise ValueError("reflector_gain must be >= 1")
        if self.r_min <= 0.0:
            raise ValueError("r_min must be positive")

    def bank_irradiance(self, lamps_on: int, r: float) -> float:
        """Unobstructed irradiance (W/m^2) of lamps_on lamps at range r."""
        r_eff = max(r, self.r_min)
        return (lamps_on * self.uvc_power_w * self.reflector_gain
                / (4.0 * math.pi * r_eff * r_eff))


@dataclass
class SurvivalModel:
    """First-order inactivation: surviving fraction S(D) = exp(-k D)."""

    k: float  # m^2 / J


def tbc_decrease(dose, model: SurvivalModel):
    """Predicted total-bacteria-count decrease in percent for a dose in J/m^2."""
    dose = np.asarray(dose, dtype=float)
    if (dose < 0).any():
        raise ValueError("dose must be non-negative")
    out = 100.0 * (1.0 - np.exp(-model.k * dose))
    return float(out) if out.ndim == 0 else out


def irradiance_at(pose: Pose2D, banks: list[LampBank], px: float, py: float,
                  model: LampModel, grid: OccupancyGrid | None = None) -> float:
    """Exact irradiance at a world point: inverse-square per active bank,
    restricted to each bank's emission half-plane, occluded by the grid."""
    total = 0.0
    for bank in banks:
        if bank.lamps_on <= 0:
            continue
        if not in_half_plane(bank, pose, px, py):
            continue
        if grid is not None and not los_clear(grid, pose, px, py):
            continue
        r = math.hypot(px - pose.x, py - pose.y)
        total += model.bank_irradiance(bank.lamps_on, r)
    return total


@dataclass
class DoseField:
    """Accumulated UV-C fluence (J/m^2) per grid cell; only free cells collect."""

    grid: OccupancyGrid
    dose: np.ndarray = None
    shadow_rays: int = 1440
    _cx: np.ndarray = field(default=None, repr=False)
    _cy: np.ndarray = field(default=None, repr=False)
    _free: np.ndarray = field(default=None, repr=False)

    def __post_init__(self) -> None:
        if self.dose is None:
            self.dose = np.zeros(self.grid.cells.shape, dtype=float)
        ix = np.arange(self.grid.width)
        iy = np.arange(self.grid.height)
        self._cx = self.grid.origin_x + (ix[None, :] + 0.5) * self.grid.resolution
        self._cy = self.grid.origin_y + (iy[:, None] + 0.5) * self.grid.resolution
        self._free = self.grid.cells == FREE


def accumulate_dose(dfield: DoseField, pose: Pose2D, banks: list[LampBank],
                    model: LampModel, dt: float) -> None:
    """Add irradiance(cell center) * dt to every visible free cell.

    Visibility is evaluated with a polar shadow map: a dense fan of exact
    grid raycasts from the robot, against which each cell center's range is
    compared in its angular bin.  At the default 1440 rays the bin arc is
    below half a cell out to ~11 m, so this matches per-cell raycasts away
    from shadow boundaries while staying fast enough to run every tick.
    """
    if dt < 0:
        raise ValueError("dt must be non-negative")
    active = [b for b in banks if b.lamps_on > 0]
    if not active or dt == 0.0:
        return
    grid = dfield.grid
    n = dfield.shadow_rays
    reach = math.hypot(grid.size_x, grid.size_y) + 1.0
    angles = -math.pi + 2.0 * math.pi * np.arange(n) / n
    vis = raycast_many(grid, pose.x, pose.y, angles, reach)
    dx = dfield._cx - pose.x
    dy = dfield._cy - pose.y
    r = np.hypot(dx, dy)
    bins = np.round((np.arctan2(dy, dx) + math.pi) * n / (2.0 * math.pi)).astype(int) % n
    visible = dfield._free & (r <= vis[bins] + 0.5 * grid.resolution)
    r_eff = np.maximum(r, model.r_min)
    inv_sq = 1.0 / (4.0 * math.pi * r_eff * r_eff)
    side = -math.sin(pose.theta) * dx + math.cos(pose.theta) * dy
    for bank in active:
        half = side > 0.0 if bank.side == Side.LEFT else side < 0.0
        mask = visible & half
        power = bank.lamps_on * model.uvc_power_w * model.reflector_gain
        dfield.dose[mask] += power * inv_sq[mask] * dt


@dataclass
class Observation:
    """One disinfection measurement: sample at a planar distance from the
    robot, colony counts before and after the exposure."""

    distance: float
    height: float
    before: float
    after: float

    @property
    def decrease(self) -> float:
        return 100.0 * (1.0 - self.after / self.before)


@dataclass
class CalibrationRow:
    distance: float
    height: float
    measured_decrease: float
    predicted_decrease: float
    fitted: bool


def calibrate(observations: list[Observation], model: LampModel,
              exposure_s: float = 600.0,
              fit_max_distance: float = 3.0) -> tuple[SurvivalModel, list[CalibrationRow]]:
    """Least-squares fit of the inactivation constant on linearized data.

    Each observation is assigned the dose D_i = irradiance(distance_i) *
    exposure_s of one full bank (heights collapse onto the plane) and a
    linearized response y_i = -ln(after/before).  k minimizes
    sum (y_i - k D_i)^2, i.e. k = sum(D_i y_i) / sum(D_i^2), over the
    near-field rows (distance <= fit_max_distance).  Far rows are reported
    as residuals but never fitted.  Rows with after == 0 (a 100% decrease)
    have unbounded y and are excluded; if every row is like that, k is
    unidentifiable and calibration fails.
    """
    if not observations:
        raise CalibrationError("no observations")
    if all(obs.after == 0 for obs in observations):
        raise CalibrationError("all observations at 100% decrease; k unidentifiable")
    num = 0.0
    den = 0.0
    used_any = False
    for obs in observations:
        if obs.before <= 0 or obs.after < 0:
            raise CalibrationError("colony counts must be positive before, >= 0 after")
        if obs.after == 0 or obs.distance > fit_max_distance:
            continue
        dose = model.bank_irradiance(model.lamps_per_side, obs.distance) * exposure_s
        y = -math.log(obs.after / obs.before)
        num += dose * y
        den += dose * dose
        used_any = True
    if not used_any or den == 0.0:
        raise CalibrationError("no usable near-field observations to fit")
    fitted = SurvivalModel(k=num / den)
    rows = []
    for obs in observations:
        dose = model.bank_irradiance(model.lamps_per_side, obs.distance) * exposure_s
        rows.append(CalibrationRow(
            distance=obs.distance,
            height=obs.height,
            measured_decrease=obs.decrease,
            predicted_decrease=tbc_decrease(dose, fitted),
            fitted=obs.after > 0 and obs.distance <= fit_max_distance,
        ))
    return fitted, rows


def load_observations(path: str) -> list[Observation]:
    """Read a calibration table: CSV rows distance_m,height_m,before,after.

    Lines starting with '#' and a leading header line are skipped.
    """
    rows = []
    with open(path, "r", encoding="ascii") as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = [p.strip() for p in line.split(",")]
            if parts[0].lower() in ("distance", "distance_m"):
                continue
            if len(parts) != 4:
                raise CalibrationError(f"bad calibration row: {line!r}")
            rows.append(Observation(float(parts[0]), float(parts[1]),
                                    float(parts[2]), float(parts[3])))
    if not rows:
        raise CalibrationError("calibration table is empty")
    return rows


def write_dose_pgm(dfield: DoseField, path: str) -> None:
    """16-bit binary portable graymap, linear from 0 to the recorded peak.

    The peak dose (the physical value of gray level 65535) is declared in a
    header comment.  Row iy=0 is written first, matching the grid file form.
    """
    peak = float(dfield.dose.max())
    if peak > 0:
        img = np.round(dfield.dose * (65535.0 / peak)).astype(">u2")
    else:
        img = np.zeros(dfield.dose.shape, dtype=">u2")
    header = (f"P5\n# dose_max_j_per_m2 {peak!r}\n"
              f"{dfield.grid.width} {dfield.grid.height}\n65535\n")
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(img.tobytes())


def write_dose_csv(dfield: DoseField, model: SurvivalModel, path: str) -> None:
    """Free-cell dose table: x,y,dose,predicted_decrease per line."""
    with open(path, "w", encoding="ascii") as fh:
        fh.write("x,y,dose,predicted_decrease\n")
        iy_all, ix_all = np.nonzero(dfield._free)
        for iy, ix in zip(iy_all, ix_all):
            # plain ints so the reprs come out as bare round-trip floats
            x, y = dfield.grid.cell_to_world(int(ix), int(iy))
            dose = float(dfield.dose[iy, ix])
            dec = tbc_decrease(dose, model)
            fh.write(f"{x!r},{y!r},{dose!r},{dec!r}\n")
