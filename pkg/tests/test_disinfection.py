import math

import numpy as np
import pytest

from conftest import bordered_room, grid_from_text
from uvbot.config import fixture_path
from uvbot.disinfection import (CalibrationError, DoseField, LampModel,
                                Observation, SurvivalModel, accumulate_dose,
                                calibrate, irradiance_at, load_observations,
                                tbc_decrease, write_dose_csv, write_dose_pgm)
from uvbot.safety import LampBank, Side
from uvbot.world import OCCUPIED, Pose2D


MODEL = LampModel(uvc_power_w=12.0, lamps_per_side=4, reflector_gain=1.3,
                  r_min=0.3)


def _banks(left=4, right=4):
    return [LampBank(Side.LEFT, lamps_set=left, lamps_on=left),
            LampBank(Side.RIGHT, lamps_set=right, lamps_on=right)]


# --------------------------------------------------------------- irradiance

def test_bank_irradiance_formula():
    # n * P * G / (4 pi r^2), written out by hand
    want = 4 * 12.0 * 1.3 / (4.0 * math.pi * 2.0 * 2.0)
    assert MODEL.bank_irradiance(4, 2.0) == pytest.approx(want, abs=1e-15)
    assert MODEL.bank_irradiance(0, 2.0) == 0.0


def test_inverse_square_ratio_is_exactly_four():
    for r in (0.5, 1.0, 1.7, 3.2):
        assert MODEL.bank_irradiance(4, r) / MODEL.bank_irradiance(4, 2 * r) == 4.0


def test_irradiance_linear_in_lamp_count():
    for n in range(5):
        assert (MODEL.bank_irradiance(n, 1.5)
                == pytest.approx(n * MODEL.bank_irradiance(1, 1.5), abs=1e-15))


def test_near_field_clamp():
    assert MODEL.bank_irradiance(4, 0.05) == MODEL.bank_irradiance(4, 0.3)
    assert MODEL.bank_irradiance(4, 0.31) < MODEL.bank_irradiance(4, 0.3)


def test_irradiance_at_half_plane_split():
    pose = Pose2D(0.0, 0.0, 0.0)
    banks = _banks(left=4, right=0)
    above = irradiance_at(pose, banks, 1.0, 1.0, MODEL)
    below = irradiance_at(pose, banks, 1.0, -1.0, MODEL)
    assert above == pytest.approx(MODEL.bank_irradiance(4, math.sqrt(2.0)))
    assert below == 0.0
    # the fore-aft axis is dark for both banks
    assert irradiance_at(pose, _banks(), 2.0, 0.0, MODEL) == 0.0


def test_irradiance_at_occluded_by_wall():
    grid = grid_from_text("""
        ......
        ..##..
        ......
    """)
    pose = Pose2D(0.15, 0.15, 0.0)  # middle row, heading east
    banks = _banks()
    lit = irradiance_at(pose, banks, 0.15, 0.25, MODEL, grid)
    assert lit > 0.0
    # point on the far side of the slab, same bearing band
    blocked = irradiance_at(pose, banks, 0.35, 0.27, MODEL, grid)
    assert blocked == 0.0


# --------------------------------------------------------------------- dose

def test_stationary_dose_matches_analytic_field():
    grid = bordered_room(60, 40)
    pose = Pose2D(3.0, 2.0, 0.0)
    banks = _banks()
    dfield = DoseField(grid)
    for _ in range(10):
        accumulate_dose(dfield, pose, banks, MODEL, dt=0.5)
    # open room: no occlusion, so dose = irradiance * time, cell by cell
    res = grid.resolution
    for iy in range(1, grid.height - 1):
        for ix in range(1, grid.width - 1):
            cx, cy = grid.cell_to_world(ix, iy)
            want = 5.0 * irradiance_at(pose, banks, cx, cy, MODEL)
            assert dfield.dose[iy, ix] == pytest.approx(want, rel=1e-9), (ix, iy)


def test_dose_linear_in_lamp_count():
    grid = bordered_room(40, 40)
    pose = Pose2D(2.0, 2.0, 0.0)
    full = DoseField(grid)
    half = DoseField(grid)
    accumulate_dose(full, pose, _banks(4, 4), MODEL, dt=1.0)
    accumulate_dose(half, pose, _banks(2, 2), MODEL, dt=1.0)
    assert np.allclose(full.dose, 2.0 * half.dose, atol=1e-12)


def test_dose_is_additive_over_ticks():
    grid = bordered_room(40, 40)
    pose = Pose2D(2.0, 2.0, 0.4)
    one = DoseField(grid)
    accumulate_dose(one, pose, _banks(), MODEL, dt=1.5)
    three = DoseField(grid)
    for _ in range(3):
        accumulate_dose(three, pose, _banks(), MODEL, dt=0.5)
    assert np.allclose(one.dose, three.dose, rtol=1e-12)


def test_dose_skips_dark_banks_and_zero_dt():
    grid = bordered_room(30, 30)
    dfield = DoseField(grid)
    accumulate_dose(dfield, Pose2D(1.5, 1.5, 0.0), _banks(0, 0), MODEL, 1.0)
    accumulate_dose(dfield, Pose2D(1.5, 1.5, 0.0), _banks(4, 4), MODEL, 0.0)
    assert not dfield.dose.any()
    with pytest.raises(ValueError):
        accumulate_dose(dfield, Pose2D(1.5, 1.5, 0.0), _banks(), MODEL, -0.1)


def test_walls_collect_no_dose():
    grid = bordered_room(30, 30)
    dfield = DoseField(grid)
    accumulate_dose(dfield, Pose2D(1.5, 1.5, 0.0), _banks(), MODEL, 2.0)
    assert dfield.dose[0, :].sum() == 0.0
    assert dfield.dose[:, -1].sum() == 0.0
    assert dfield.dose.max() > 0.0


def test_pillar_casts_shadow():
    grid = bordered_room(80, 80)
    grid.cells[38:43, 50:55] = OCCUPIED  # pillar east of the robot
    pose = Pose2D(2.0, 4.0, math.pi / 2)  # heading north: east is the right side
    dfield = DoseField(grid)
    accumulate_dose(dfield, pose, _banks(), MODEL, dt=1.0)
    # deep in the pillar's umbra, well away from the penumbra fringe
    sx, sy = grid.world_to_cell(7.2, 4.05)
    assert dfield.dose[sy, sx] == 0.0
    # flanking cell at the same range, clear bearing: lit per inverse square
    fx, fy = grid.world_to_cell(7.2, 2.0)
    wx, wy = grid.cell_to_world(fx, fy)
    want = irradiance_at(pose, _banks(), wx, wy, MODEL, grid)
    assert dfield.dose[fy, fx] == pytest.approx(want, rel=1e-6)


# ------------------------------------------------------------- survival fit

def test_tbc_decrease_hand_values():
    model = SurvivalModel(k=0.5)
    assert tbc_decrease(0.0, model) == 0.0
    want = 100.0 * (1.0 - math.exp(-1.0))
    assert tbc_decrease(2.0, model) == pytest.approx(want, abs=1e-12)
    arr = tbc_decrease(np.array([0.0, 2.0]), model)
    assert arr[1] == pytest.approx(want, abs=1e-12)
    with pytest.raises(ValueError):
        tbc_decrease(-1.0, model)


def test_calibrate_recovers_synthetic_constant():
    # survivors generated exactly from S = exp(-k D): the linearized fit
    # must return k to machine precision
    k_true = 0.002
    obs = []
    for d in (0.8, 1.4, 2.0, 2.9):
        dose = MODEL.bank_irradiance(4, d) * 600.0
        obs.append(Observation(d, 0.0, 1000.0, 1000.0 * math.exp(-k_true * dose)))
    fitted, rows = calibrate(obs, MODEL, exposure_s=600.0, fit_max_distance=3.0)
    assert fitted.k == pytest.approx(k_true, rel=1e-12)
    for row in rows:
        assert row.fitted
        assert row.predicted_decrease == pytest.approx(row.measured_decrease,
                                                       abs=1e-9)


def test_calibrate_matches_lstsq_oracle():
    rng = np.random.default_rng(23)
    obs = []
    for _ in range(8):
        d = float(rng.uniform(0.5, 2.9))
        before = float(rng.uniform(100, 900))
        after = float(rng.uniform(5, before * 0.8))
        obs.append(Observation(d, 0.0, before, after))
    fitted, _ = calibrate(obs, MODEL)
    doses = np.array([MODEL.bank_irradiance(4, o.distance) * 600.0 for o in obs])
    ys = np.array([-math.log(o.after / o.before) for o in obs])
    want = np.linalg.lstsq(doses[:, None], ys, rcond=None)[0][0]
    assert fitted.k == pytest.approx(float(want), rel=1e-12)


def test_calibrate_ignores_far_field_rows():
    k_true = 0.001
    obs = []
    for d in (1.0, 2.0, 2.8):
        dose = MODEL.bank_irradiance(4, d) * 600.0
        obs.append(Observation(d, 0.0, 500.0, 500.0 * math.exp(-k_true * dose)))
    # a wildly inconsistent far row that would drag the fit if included
    obs.append(Observation(8.0, 0.0, 500.0, 1.0))
    fitted, rows = calibrate(obs, MODEL, fit_max_distance=3.0)
    assert fitted.k == pytest.approx(k_true, rel=1e-12)
    assert [r.fitted for r in rows] == [True, True, True, False]
    # the far row still gets a reported prediction
    assert rows[3].predicted_decrease > 0.0


def test_calibrate_skips_total_kill_rows():
    k_true = 0.0015
    obs = []
    for d in (1.0, 2.0):
        dose = MODEL.bank_irradiance(4, d) * 600.0
        obs.append(Observation(d, 0.0, 400.0, 400.0 * math.exp(-k_true * dose)))
    obs.append(Observation(1.5, 0.0, 400.0, 0.0))  # unbounded response
    fitted, rows = calibrate(obs, MODEL)
    assert fitted.k == pytest.approx(k_true, rel=1e-12)
    assert not rows[2].fitted


def test_calibrate_error_paths():
    with pytest.raises(CalibrationError):
        calibrate([], MODEL)
    with pytest.raises(CalibrationError):
        calibrate([Observation(1.0, 0.0, 100.0, 0.0)], MODEL)
    with pytest.raises(CalibrationError):
        calibrate([Observation(1.0, 0.0, 0.0, 10.0)], MODEL)
    with pytest.raises(CalibrationError):
        # only far-field rows: nothing inside the fit window
        calibrate([Observation(9.0, 0.0, 100.0, 50.0)], MODEL)


def test_shipped_measurement_table_loads():
    obs = load_observations(fixture_path("table1.csv"))
    assert len(obs) == 7
    assert (obs[0].distance, obs[0].height) == (1.0, 0.0)
    assert (obs[0].before, obs[0].after) == (280.0, 20.0)
    assert obs[0].decrease == pytest.approx(100.0 * (1.0 - 20.0 / 280.0))
    assert (obs[2].distance, obs[2].height) == (2.8, 1.3)
    assert (obs[6].before, obs[6].after) == (190.0, 80.0)


def test_load_observations_rejects_malformed(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("distance_m,height_m,before,after\n1.0,0.0,100\n")
    with pytest.raises(CalibrationError):
        load_observations(str(bad))
    empty = tmp_path / "empty.csv"
    empty.write_text("# nothing here\n")
    with pytest.raises(CalibrationError):
        load_observations(str(empty))


# ------------------------------------------------------------------ exports

def test_dose_pgm_format(tmp_path):
    grid = bordered_room(20, 10)
    dfield = DoseField(grid)
    accumulate_dose(dfield, Pose2D(1.0, 0.5, 0.0), _banks(), MODEL, 5.0)
    out = tmp_path / "dose.pgm"
    write_dose_pgm(dfield, str(out))
    blob = out.read_bytes()
    header, rest = blob.split(b"65535\n", 1)
    lines = header.decode("ascii").splitlines()
    assert lines[0] == "P5"
    assert lines[1].startswith("# dose_max_j_per_m2 ")
    assert lines[2] == "20 10"
    img = np.frombuffer(rest, dtype=">u2").reshape(10, 20)
    assert img.max() == 65535  # peak maps to full scale
    peak = float(lines[1].split()[-1])
    assert peak == pytest.approx(float(dfield.dose.max()))


def test_dose_csv_lists_free_cells(tmp_path):
    grid = bordered_room(6, 5)
    dfield = DoseField(grid)
    accumulate_dose(dfield, Pose2D(0.3, 0.25, 0.0), _banks(), MODEL, 2.0)
    out = tmp_path / "dose.csv"
    write_dose_csv(dfield, SurvivalModel(k=0.001), str(out))
    lines = out.read_text().strip().splitlines()
    assert lines[0] == "x,y,dose,predicted_decrease"
    assert len(lines) - 1 == 4 * 3  # free interior of a 6 x 5 bordered grid
    x, y, dose, dec = map(float, lines[1].split(","))
    assert dec == pytest.approx(tbc_decrease(dose, SurvivalModel(k=0.001)))
