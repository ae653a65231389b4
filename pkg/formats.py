"""Text and image formats written and read by the command line."""
import csv
import logging
from typing import Any, BinaryIO, Iterable, Mapping, Optional, TextIO

import numpy as np

from basin import BasinMap, GridSpec
from consts import (CLASS_COLOURS, CLASS_PERIODIC, CSV_DIGITS, OTHER_PERIOD_COLOUR, PERIOD_1_COLOUR,
                    PERIOD_3_COLOUR)
from model import ModelParams, Trajectory

logger = logging.getLogger(__name__)

BASIN_HEADER: tuple[str, ...] = ('i', 'j', 'p0', 'q0', 'class', 'period')


def format_number(value: float) -> str:
    return f'{value:.{CSV_DIGITS}g}'


def format_value(value: Any) -> str:
    if isinstance(value, bool):
        return 'true' if value else 'false'
    if isinstance(value, float):
        return format_number(value)
    if value is None:
        return 'none'
    if isinstance(value, (tuple, list)):
        return ','.join(format_value(item) for item in value)
    return str(value)


def write_report(stream: TextIO, report: Mapping[str, Any]) -> None:
    """One `key=value` line per entry."""
    for key, value in report.items():
        stream.write(f'{key}={format_value(value)}\n')


def params_comment(params: ModelParams) -> str:
    return '# ' + ' '.join(f'{key}={format_value(value)}' for key, value in params.model_dump().items())


def write_trajectory_csv(stream: TextIO, traj: Optional[Trajectory], comment: Optional[str] = None,
                         escape: Optional[tuple[int, float]] = None) -> None:
    """
    Writes `t,p,q` rows. `comment` goes first as a `#` line; an escape is reported after the
    rows as `# escaped sign=<+1|-1> t=<time>`.
    """
    if comment:
        stream.write(comment + '\n')
    stream.write('t,p,q\n')
    if traj is not None:
        for t, (p, q) in zip(traj.times, traj.states):
            stream.write(f'{format_number(t)},{format_number(p)},{format_number(q)}\n')
    if escape is not None:
        sign, t = escape
        stream.write(f'# escaped sign={sign:+d} t={format_number(t)}\n')


def write_points_csv(stream: TextIO, points: np.ndarray, header: Iterable[str]) -> None:
    stream.write(','.join(header) + '\n')
    for row in points:
        stream.write(','.join(format_number(value) for value in row) + '\n')


def write_cycle_csv(stream: TextIO, cycle: Iterable[tuple[int, int, float, float]]) -> None:
    stream.write('k,index,p,q\n')
    for k, index, p, q in cycle:
        stream.write(f'{k},{index},{format_number(p)},{format_number(q)}\n')


def write_basin_csv(stream: TextIO, basin: BasinMap) -> None:
    """One row per cell, j outer and i inner, under the header `i,j,p0,q0,class,period`."""
    p, q = basin.grid.centers()
    stream.write(','.join(BASIN_HEADER) + '\n')
    for j in range(basin.grid.ny):
        q_text = format_number(q[j])
        for i in range(basin.grid.nx):
            stream.write(f'{i},{j},{format_number(p[i])},{q_text},{basin.classes[j, i]},{basin.periods[j, i]}\n')


def read_basin_csv(stream: TextIO) -> BasinMap:
    """
    Reads a map written by `write_basin_csv`. The window is recovered from the cell centers.

    Raises
    ------
    ValueError
        If the header is wrong, a cell appears twice or cells are missing.
    """
    reader = csv.DictReader(stream)
    if tuple(reader.fieldnames or ()) != BASIN_HEADER:
        raise ValueError(f'expected header {",".join(BASIN_HEADER)}, got {reader.fieldnames}')
    rows = [(int(row['i']), int(row['j']), float(row['p0']), float(row['q0']), int(row['class']), int(row['period']))
            for row in reader]
    if not rows:
        raise ValueError('basin file holds no cells')

    nx = max(row[0] for row in rows) + 1
    ny = max(row[1] for row in rows) + 1
    cells = {(row[0], row[1]) for row in rows}
    if len(cells) != len(rows):
        raise ValueError(f'{len(rows) - len(cells)} duplicate cell indices')
    if len(rows) != nx * ny:
        raise ValueError(f'expected {nx * ny} cells, found {len(rows)}')
    classes = np.zeros((ny, nx), dtype=np.int8)
    periods = np.zeros((ny, nx), dtype=np.int16)
    p_centers = np.zeros(nx)
    q_centers = np.zeros(ny)
    for i, j, p0, q0, code, period in rows:
        classes[j, i] = code
        periods[j, i] = period
        p_centers[i] = p0
        q_centers[j] = q0

    dp = (p_centers[-1] - p_centers[0]) / (nx - 1)
    dq = (q_centers[-1] - q_centers[0]) / (ny - 1)
    grid = GridSpec(p_min=p_centers[0] - dp / 2, p_max=p_centers[-1] + dp / 2,
                    q_min=q_centers[0] - dq / 2, q_max=q_centers[-1] + dq / 2, nx=nx, ny=ny)
    logger.debug(f'read {nx}x{ny} basin map')
    return BasinMap(grid=grid, classes=classes, periods=periods)


def basin_pixels(basin: BasinMap) -> np.ndarray:
    """RGB image of the map, shape (ny, nx, 3), with row j = ny - 1 on top."""
    image = np.zeros(basin.classes.shape + (3,), dtype=np.uint8)
    for code, colour in CLASS_COLOURS.items():
        image[basin.classes == code] = colour
    periodic = basin.classes == CLASS_PERIODIC
    image[periodic] = OTHER_PERIOD_COLOUR
    image[periodic & (basin.periods == 1)] = PERIOD_1_COLOUR
    image[periodic & (basin.periods == 3)] = PERIOD_3_COLOUR
    return image[::-1]


def write_basin_ppm(stream: BinaryIO, basin: BasinMap) -> None:
    """Binary P6 pixmap, one pixel per cell."""
    stream.write(f'P6\n{basin.grid.nx} {basin.grid.ny}\n255\n'.encode('ascii'))
    stream.write(np.ascontiguousarray(basin_pixels(basin)).tobytes())
