import concurrent.futures
import logging
import math
import os
import time
from typing import Optional, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy.stats import linregress

from consts import (BASIN_RESOLUTION, BASIN_WINDOW, BOX_MIN_CELLS, BOX_SCALES, CLASS_PERIODIC, CLASS_UNDECIDED)
from errors import DegenerateBoundaryError, DomainError
from melnikov import critical_amplitude
from model import ModelParams
from poincare import AttractorKind, PoincareOptions, classify_batch

logger = logging.getLogger(__name__)

# number of row bands handed to each worker, so slow bands do not leave workers idle
_BANDS_PER_WORKER = 4


class GridSpec(BaseModel):
    """A window of the section plane cut into nx by ny cells."""
    model_config = ConfigDict(frozen=True, allow_inf_nan=False)

    p_min: float = BASIN_WINDOW[0]
    p_max: float = BASIN_WINDOW[1]
    q_min: float = BASIN_WINDOW[2]
    q_max: float = BASIN_WINDOW[3]
    nx: int = Field(default=BASIN_RESOLUTION[0], ge=2)
    ny: int = Field(default=BASIN_RESOLUTION[1], ge=2)

    @model_validator(mode='after')
    def _check_window(self) -> 'GridSpec':
        if not (self.p_min < self.p_max and self.q_min < self.q_max):
            raise ValueError(f'empty window [{self.p_min}, {self.p_max}] x [{self.q_min}, {self.q_max}]')
        return self

    def centers(self) -> tuple[np.ndarray, np.ndarray]:
        """Cell-center coordinates along p (length nx) and along q (length ny)."""
        i, j = np.arange(self.nx), np.arange(self.ny)
        p = self.p_min + (i + 0.5) * (self.p_max - self.p_min) / self.nx
        q = self.q_min + (j + 0.5) * (self.q_max - self.q_min) / self.ny
        return p, q

    def seeds(self) -> np.ndarray:
        """Cell centers in row-major order (j outer, i inner), shape (nx ny, 2)."""
        p, q = self.centers()
        pp, qq = np.meshgrid(p, q)
        return np.column_stack((pp.ravel(), qq.ravel()))


class BasinMap(BaseModel):
    """
    Classification of every cell of a grid. `classes` and `periods` have shape (ny, nx), so
    their row-major flattening runs j outer, i inner. Maps read back from CSV carry no
    parameters.
    """
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    grid: GridSpec
    classes: np.ndarray
    periods: np.ndarray
    params_used: Optional[ModelParams] = None
    opts_used: Optional[PoincareOptions] = None

    @model_validator(mode='after')
    def _check_arrays(self) -> 'BasinMap':
        shape = (self.grid.ny, self.grid.nx)
        if self.classes.shape != shape or self.periods.shape != shape:
            raise ValueError(f'arrays {self.classes.shape}, {self.periods.shape} do not match grid {shape}')
        if np.any((self.periods != 0) != (self.classes == CLASS_PERIODIC)):
            raise ValueError('periods must be nonzero exactly on periodic cells')
        return self

    def labels(self, by_period: bool = False) -> np.ndarray:
        """Class codes; with `by_period`, periodic cells of different periods get different labels."""
        if not by_period:
            return self.classes.astype(int)
        return np.where(self.classes == CLASS_PERIODIC, 100 + self.periods.astype(int), self.classes.astype(int))


class BoxCountResult(BaseModel):
    model_config = ConfigDict(frozen=True)

    scales: tuple[int, ...]
    counts: tuple[int, ...]
    dimension: float
    r_squared: float


class BasinSummary(BaseModel):
    """Cell counts per class (by name) and per period of the periodic cells."""
    model_config = ConfigDict(frozen=True)

    total: int
    class_counts: dict[str, int]
    period_counts: dict[int, int]

    def fraction(self, kind: AttractorKind) -> float:
        return self.class_counts[kind.value] / self.total

    def period_fraction(self, period: int) -> float:
        return self.period_counts.get(period, 0) / self.total


class AmplitudeScanRow(BaseModel):
    """Attractors found by a coarse basin sweep at one forcing amplitude."""
    model_config = ConfigDict(frozen=True)

    a: float
    threshold_a: float
    above_threshold: bool
    periods: tuple[int, ...]
    summary: BasinSummary


# ---------------------------------------------------------------------------------------------------------------


def _classify_band(params: ModelParams, seeds: np.ndarray, opts: PoincareOptions) -> tuple[np.ndarray, np.ndarray]:
    results = classify_batch(params, seeds, opts)
    codes = np.array([result.code for result in results], dtype=np.int8)
    periods = np.array([result.period for result in results], dtype=np.int16)
    return codes, periods


def compute_basin(params: ModelParams, grid: Optional[GridSpec] = None, opts: Optional[PoincareOptions] = None,
                  workers: Optional[int] = None) -> BasinMap:
    """
    Classifies the center of every grid cell under the period map.

    Rows of cells are split into bands that run on a pool of `workers` processes (one per
    CPU by default; 1 runs in-process). Each band writes to its own slice of the output, and
    a cell's class depends only on its center, so the map is the same for any worker count.
    """
    grid = grid or GridSpec()
    opts = opts or PoincareOptions.for_params(params)
    opts.check_phase(params)
    workers = workers or os.cpu_count() or 1

    seeds = grid.seeds()
    codes = np.empty(seeds.shape[0], dtype=np.int8)
    periods = np.empty(seeds.shape[0], dtype=np.int16)
    rows_per_band = max(1, math.ceil(grid.ny / (workers * _BANDS_PER_WORKER)))
    bands = [slice(j * grid.nx, min(j + rows_per_band, grid.ny) * grid.nx) for j in range(0, grid.ny, rows_per_band)]

    logger.info(f'sweeping {grid.nx}x{grid.ny} cells (delta={params.delta}, a={params.a}) '
                f'in {len(bands)} bands on {workers} workers')
    start_time = time.monotonic()
    if workers == 1:
        for band in bands:
            codes[band], periods[band] = _classify_band(params, seeds[band], opts)
    else:
        with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as executor:
            futures = {executor.submit(_classify_band, params, seeds[band], opts): band for band in bands}
            for done, future in enumerate(concurrent.futures.as_completed(futures), start=1):
                band = futures[future]
                codes[band], periods[band] = future.result()
                logger.debug(f'band {done}/{len(bands)} done')
    logger.info(f'sweep finished in {time.monotonic() - start_time:.1f} seconds')

    shape = (grid.ny, grid.nx)
    undecided = int(np.count_nonzero(codes == CLASS_UNDECIDED))
    if undecided:
        logger.warning(f'{undecided} of {codes.size} cells undecided within {opts.max_iterations} iterations')
    return BasinMap(grid=grid, classes=codes.reshape(shape), periods=periods.reshape(shape),
                    params_used=params, opts_used=opts)


def boundary_mask(basin: BasinMap, by_period: bool = False) -> np.ndarray:
    """
    Cells with a 4-neighbour of a different class. With `by_period`, the borders between
    periodic basins of different periods count as well.
    """
    labels = basin.labels(by_period)
    boundary = np.zeros(labels.shape, dtype=bool)
    across = labels[:, 1:] != labels[:, :-1]
    boundary[:, 1:] |= across
    boundary[:, :-1] |= across
    along = labels[1:, :] != labels[:-1, :]
    boundary[1:, :] |= along
    boundary[:-1, :] |= along
    return boundary


def _occupied_boxes(mask: np.ndarray, s: int) -> int:
    ny, nx = mask.shape
    padded = np.zeros((math.ceil(ny / s) * s, math.ceil(nx / s) * s), dtype=bool)
    padded[:ny, :nx] = mask
    boxes = padded.reshape(padded.shape[0] // s, s, padded.shape[1] // s, s)
    return int(np.count_nonzero(boxes.any(axis=(1, 3))))


def box_count_boundary(basin: BasinMap, scales: Sequence[int] = BOX_SCALES, by_period: bool = False
                       ) -> BoxCountResult:
    """
    Box-counting dimension of the basin boundary: at each scale s the s x s boxes holding a
    boundary cell are counted, and log N is fitted against log(1/s). Boxes at the far edges
    may be partial when s does not divide the grid. `by_period` is passed on to `boundary_mask`.

    Raises
    ------
    DegenerateBoundaryError
        If every cell has the same class (the same label, with `by_period`).
    DomainError
        If the map is smaller than 64 x 64 or the scales are not distinct members of
        {1, 2, 4, 8, 16}.
    """
    if basin.grid.nx < BOX_MIN_CELLS or basin.grid.ny < BOX_MIN_CELLS:
        raise DomainError(f'box counting needs at least {BOX_MIN_CELLS}x{BOX_MIN_CELLS} cells')
    scales = tuple(sorted(set(scales)))
    if len(scales) < 2 or not set(scales) <= set(BOX_SCALES):
        raise DomainError(f'scales {scales} must be at least two of {BOX_SCALES}')
    if np.unique(basin.labels(by_period)).size < 2:
        raise DegenerateBoundaryError('the basin map holds a single class and has no boundary')

    mask = boundary_mask(basin, by_period)
    counts = tuple(_occupied_boxes(mask, s) for s in scales)
    fit = linregress(np.log(1.0 / np.array(scales, dtype=float)), np.log(np.array(counts, dtype=float)))
    dimension = float(np.clip(fit.slope, 0.0, 2.0))
    return BoxCountResult(scales=scales, counts=counts, dimension=dimension, r_squared=float(fit.rvalue ** 2))


def basin_summary(basin: BasinMap) -> BasinSummary:
    class_counts = {kind.value: int(np.count_nonzero(basin.classes == kind.code)) for kind in AttractorKind}
    found, tally = np.unique(basin.periods[basin.periods > 0], return_counts=True)
    return BasinSummary(total=int(basin.classes.size), class_counts=class_counts,
                        period_counts={int(k): int(n) for k, n in zip(found, tally)})


def scan_amplitudes(params: ModelParams, a_values: Sequence[float], grid: Optional[GridSpec] = None,
                    opts: Optional[PoincareOptions] = None, workers: Optional[int] = None) -> list[AmplitudeScanRow]:
    """
    Runs a coarse basin sweep for every forcing amplitude in `a_values` and records which periodic
    attractors show up, next to the Melnikov threshold of the same damping.
    """
    rows = []
    for a in a_values:
        forced = params.model_copy(update={'a': float(a)})
        basin = compute_basin(forced, grid, opts or PoincareOptions.for_params(forced), workers)
        summary = basin_summary(basin)
        threshold = critical_amplitude(forced)
        rows.append(AmplitudeScanRow(a=float(a), threshold_a=threshold, above_threshold=abs(a) > threshold,
                                     periods=tuple(sorted(summary.period_counts)), summary=summary))
        logger.info(f'a={a}: periods {rows[-1].periods}')
    return rows
