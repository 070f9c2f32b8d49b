"""Shared builders for the test suite.

Text grids read like floor plans: the first line is the top (highest y) row,
'.' free, '#' occupied, '?' unknown.
"""

import numpy as np
import pytest

from uvbot.world import FREE, OCCUPIED, UNKNOWN, OccupancyGrid

_CHARS = {".": FREE, "#": OCCUPIED, "?": UNKNOWN}


def grid_from_text(text: str, resolution: float = 0.1,
                   origin=(0.0, 0.0)) -> OccupancyGrid:
    rows = [line for line in (ln.strip() for ln in text.splitlines()) if line]
    if not rows or any(len(r) != len(rows[0]) for r in rows):
        raise ValueError("ragged text grid")
    height, width = len(rows), len(rows[0])
    cells = np.zeros((height, width), dtype=np.uint8)
    for i, row in enumerate(rows):
        iy = height - 1 - i  # first text line is the top row
        for ix, ch in enumerate(row):
            cells[iy, ix] = _CHARS[ch]
    return OccupancyGrid(resolution, origin[0], origin[1], cells)


def bordered_room(width_cells: int, height_cells: int,
                  resolution: float = 0.1) -> OccupancyGrid:
    """Free interior wrapped in a one-cell wall, origin at (0, 0)."""
    cells = np.zeros((height_cells, width_cells), dtype=np.uint8)
    cells[0, :] = OCCUPIED
    cells[-1, :] = OCCUPIED
    cells[:, 0] = OCCUPIED
    cells[:, -1] = OCCUPIED
    return OccupancyGrid(resolution, 0.0, 0.0, cells)


def random_blocked_grid(rng: np.random.Generator, width: int, height: int,
                        p_occupied: float = 0.15, p_unknown: float = 0.0,
                        resolution: float = 0.1,
                        border: bool = True) -> OccupancyGrid:
    """Random tri-state grid; with border=True the rim is always walls."""
    draw = rng.random((height, width))
    cells = np.full((height, width), FREE, dtype=np.uint8)
    cells[draw < p_occupied] = OCCUPIED
    cells[(draw >= p_occupied) & (draw < p_occupied + p_unknown)] = UNKNOWN
    if border:
        cells[0, :] = OCCUPIED
        cells[-1, :] = OCCUPIED
        cells[:, 0] = OCCUPIED
        cells[:, -1] = OCCUPIED
    return OccupancyGrid(resolution, 0.0, 0.0, cells)


@pytest.fixture
def small_room():
    # 2 m x 1.5 m free interior at 0.1 m resolution
    return bordered_room(22, 17)
