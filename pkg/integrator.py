import logging
import math
from enum import StrEnum
from typing import Callable, Iterator, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from consts import ESCAPE_RADIUS, MAX_STEPS, RK45_ABS_TOL, RK45_REL_TOL, RK45_TOLERANCE_MARGIN, STEPS_PER_PERIOD
from errors import DomainError
from model import (ArrayField, MarketParams, MarketState, ModelParams, State2, Trajectory, market_field,
                   planar_field)

logger = logging.getLogger(__name__)

"""Maps a state to (escape measure, value whose sign is the escape direction)."""
EscapeMeasure = Callable[[np.ndarray], tuple[np.ndarray, np.ndarray]]

# Dormand-Prince 5(4) tableau
_DP_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_DP_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
    (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84),
)
_DP_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_DP_B4 = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])
_DP_SAFETY = 0.9
_DP_MIN_FACTOR = 0.2
_DP_MAX_FACTOR = 10.0

# a step schedule never ends with a sliver shorter than this fraction of h
_SCHEDULE_SLACK = 1e-9


class Method(StrEnum):
    RK4 = 'rk4'
    RK45 = 'rk45'


class Status(StrEnum):
    COMPLETED = 'completed'
    ESCAPED = 'escaped'
    BUDGET_EXHAUSTED = 'budget_exhausted'


class SamplingMode(StrEnum):
    NONE = 'none'
    EVERY_STEP = 'every_step'
    EVERY_DT = 'every_dt'


class Sampling(BaseModel):
    """What an integration records: nothing, every accepted step, or every `dt` time units."""
    model_config = ConfigDict(frozen=True)

    mode: SamplingMode = SamplingMode.NONE
    dt: Optional[float] = Field(default=None, gt=0)

    @model_validator(mode='after')
    def _check_dt(self) -> 'Sampling':
        if self.mode is SamplingMode.EVERY_DT and self.dt is None:
            raise ValueError('sampling every dt needs dt')
        return self

    @classmethod
    def every(cls, dt: float) -> 'Sampling':
        return cls(mode=SamplingMode.EVERY_DT, dt=dt)


class IntegratorOptions(BaseModel):
    """
    Integration scheme and its controls. `step` is the fixed RK4 step (and the first trial
    step of RK45); when left unset it is one `STEPS_PER_PERIOD`-th of the forcing period.
    """
    model_config = ConfigDict(frozen=True, allow_inf_nan=False)

    method: Method = Method.RK4
    step: Optional[float] = Field(default=None, gt=0)
    rel_tol: float = Field(default=RK45_REL_TOL, gt=0)
    abs_tol: float = Field(default=RK45_ABS_TOL, gt=0)
    escape_radius: float = Field(default=ESCAPE_RADIUS, gt=0)
    max_steps: int = Field(default=MAX_STEPS, ge=1)

    def step_for(self, omega1: float) -> float:
        return self.step if self.step is not None else 2 * math.pi / omega1 / STEPS_PER_PERIOD


class IntegrationOutcome(BaseModel):
    """
    Result of one integration. An escaped run ends outside the escape radius, unless the
    escaping step overflowed or the adaptive step collapsed: then `overflowed` is set and
    `final_state` is the last finite state, which may still lie inside the radius.
    """
    model_config = ConfigDict(frozen=True)

    status: Status
    final_time: float
    final_state: State2
    escape_sign: Optional[int] = None
    overflowed: bool = False
    trajectory: Optional[Trajectory] = None


class MarketTrajectory(BaseModel):
    """Time-stamped (P, D, S) rows."""
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    times: np.ndarray
    states: np.ndarray

    def __len__(self) -> int:
        return self.times.shape[0]


class MarketOutcome(BaseModel):
    model_config = ConfigDict(frozen=True)

    status: Status
    final_time: float
    final_state: MarketState
    escape_sign: Optional[int] = None
    overflowed: bool = False
    trajectory: Optional[MarketTrajectory] = None


class BatchOutcome(BaseModel):
    """
    End states of a batch of planar integrations, shape (n, 2). `escape_signs` holds +1/-1
    for escaped members and 0 otherwise; escaped members keep the state at which they left.
    """
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    states: np.ndarray
    escape_signs: np.ndarray
    escape_times: np.ndarray

    @property
    def escaped(self) -> np.ndarray:
        return self.escape_signs != 0


class _Run:
    """Mutable bookkeeping of one integration."""

    def __init__(self, t: float, y: np.ndarray, sampling: Sampling) -> None:
        self.t = t
        self.y = y
        self.steps = 0
        self.status = Status.COMPLETED
        self.sign: Optional[int] = None
        self.overflowed = False
        self.record_steps = sampling.mode is SamplingMode.EVERY_STEP
        self.times: Optional[list[float]] = None if sampling.mode is SamplingMode.NONE else [t]
        self.states: Optional[list[np.ndarray]] = None if sampling.mode is SamplingMode.NONE else [y.copy()]

    def record(self) -> None:
        if self.times is not None and self.t > self.times[-1]:
            self.times.append(self.t)
            self.states.append(self.y.copy())


# ---------------------------------------------------------------------------------------------------------------


def step_schedule(t0: float, t1: float, h: float) -> Iterator[tuple[float, float]]:
    """
    Yields (t, h) pairs of a fixed-step march from t0 to t1. Step starts are t0 + k h, never
    accumulated, and the last step is shortened so the march lands exactly on t1.
    """
    n = max(1, math.ceil((t1 - t0) / h - _SCHEDULE_SLACK))
    for k in range(n - 1):
        yield t0 + k * h, h
    t_last = t0 + (n - 1) * h
    yield t_last, t1 - t_last


def rk4_step(field: ArrayField, t: float, y: np.ndarray, h: float) -> np.ndarray:
    half = 0.5 * h
    k1 = field(t, y)
    k2 = field(t + half, y + half * k1)
    k3 = field(t + half, y + half * k2)
    k4 = field(t + h, y + h * k3)
    return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def dopri_step(field: ArrayField, t: float, y: np.ndarray, h: float) -> tuple[np.ndarray, np.ndarray]:
    """One Dormand-Prince step; returns the fifth-order solution and the embedded error estimate."""
    stages = []
    for c, row in zip(_DP_C, _DP_A):
        y_stage = y + h * sum((a * k for a, k in zip(row, stages)), np.zeros_like(y))
        stages.append(field(t + c * h, y_stage))
    k = np.stack(stages)
    y_new = y + h * np.tensordot(_DP_B5, k, axes=1)
    error = h * np.tensordot(_DP_B5 - _DP_B4, k, axes=1)
    return y_new, error


def _escape_check(run: _Run, y_new: np.ndarray, radius: float, measure_escape: EscapeMeasure) -> bool:
    """Updates `run` with the new state; returns True if the state left the escape radius."""
    measure, direction = measure_escape(y_new)
    if measure <= radius:
        run.y = y_new
        return False
    finite = bool(np.all(np.isfinite(y_new)))
    if finite and direction != 0:
        run.sign = 1 if direction > 0 else -1
    else:
        # the last finite state decides the direction
        run.sign = 1 if measure_escape(run.y)[1] >= 0 else -1
    if finite:
        run.y = y_new
    else:
        run.overflowed = True
    run.status = Status.ESCAPED
    return True


def _march_rk4(field: ArrayField, run: _Run, t1: float, h: float, opts: IntegratorOptions,
               measure_escape: EscapeMeasure) -> None:
    for t, step in step_schedule(run.t, t1, h):
        if run.steps >= opts.max_steps:
            run.status = Status.BUDGET_EXHAUSTED
            return
        y_new = rk4_step(field, t, run.y, step)
        run.steps += 1
        run.t = t + step
        escaped = _escape_check(run, y_new, opts.escape_radius, measure_escape)
        if run.record_steps:
            run.record()
        if escaped:
            return


def _march_rk45(field: ArrayField, run: _Run, t1: float, h: float, opts: IntegratorOptions,
                measure_escape: EscapeMeasure) -> float:
    """Adaptive march to t1; returns the step size proposed for the next segment."""
    while run.t < t1:
        if run.steps >= opts.max_steps:
            run.status = Status.BUDGET_EXHAUSTED
            return h
        step = min(h, t1 - run.t)
        y_new, error = dopri_step(field, run.t, run.y, step)
        run.steps += 1
        scale = (opts.abs_tol + opts.rel_tol * np.maximum(np.abs(run.y), np.abs(y_new))) / RK45_TOLERANCE_MARGIN
        norm = float(np.sqrt(np.mean((error / scale) ** 2)))
        if not math.isfinite(norm):
            norm = math.inf
        if norm <= 1.0:
            run.t = t1 if step == t1 - run.t else run.t + step
            escaped = _escape_check(run, y_new, opts.escape_radius, measure_escape)
            if run.record_steps:
                run.record()
            if escaped:
                return h
        factor = _DP_MAX_FACTOR if norm == 0 else min(_DP_MAX_FACTOR, max(_DP_MIN_FACTOR, _DP_SAFETY * norm ** -0.2))
        h = step * factor
        if h < 1e-14 * max(1.0, abs(run.t)):
            # the error cannot be controlled any more, which here only happens during a blow-up
            run.sign = 1 if measure_escape(run.y)[1] >= 0 else -1
            run.overflowed = True
            run.status = Status.ESCAPED
            return h
    return h


def _integrate(field: ArrayField, y0: np.ndarray, t0: float, t1: float, omega1: float, opts: IntegratorOptions,
               sampling: Sampling, measure_escape: EscapeMeasure) -> _Run:
    if not np.all(np.isfinite(y0)) or not math.isfinite(t0) or not math.isfinite(t1):
        raise DomainError(f'non-finite initial state or time span: {y0}, [{t0}, {t1}]')
    if not t1 > t0:
        raise DomainError(f'end time {t1} must exceed start time {t0}')

    run = _Run(t0, np.array(y0, dtype=float), sampling)
    h = opts.step_for(omega1)
    if sampling.mode is SamplingMode.EVERY_DT:
        marks = [t0 + k * sampling.dt for k in range(1, math.ceil((t1 - t0) / sampling.dt - _SCHEDULE_SLACK))]
        marks.append(t1)
    else:
        marks = [t1]

    with np.errstate(over='ignore', invalid='ignore'):
        for mark in marks:
            if opts.method is Method.RK4:
                _march_rk4(field, run, mark, h, opts, measure_escape)
            else:
                h = _march_rk45(field, run, mark, h, opts, measure_escape)
            if run.status is not Status.COMPLETED:
                break
            run.record()

    if run.status is Status.ESCAPED:
        logger.debug(f'escaped with sign {run.sign:+d} at t={run.t:.6g}')
    elif run.status is Status.BUDGET_EXHAUSTED:
        logger.warning(f'step budget of {opts.max_steps} exhausted at t={run.t:.6g} before t1={t1:.6g}')
    return run


def _planar_escape(y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    return np.maximum(np.abs(y[0]), np.abs(y[1])), y[0] if y[0] != 0 else y[1]


def integrate(params: ModelParams, x0: State2, t0: float, t1: float, opts: Optional[IntegratorOptions] = None,
              record: Optional[Sampling] = None) -> IntegrationOutcome:
    """
    Integrates the planar system from (t0, x0) to t1.

    The run stops early with status `escaped` the first time max(|p|, |q|) exceeds the escape
    radius, the escape sign being the sign of p there; a state that turned non-finite counts
    as escaped in the direction of the last finite p. Status `budget_exhausted` means
    `max_steps` were spent before reaching t1.
    """
    opts = opts or IntegratorOptions()
    record = record or Sampling()
    run = _integrate(planar_field(params), x0.as_array(), t0, t1, params.omega1, opts, record, _planar_escape)
    trajectory = None
    if run.times is not None:
        trajectory = Trajectory(times=np.array(run.times), states=np.array(run.states))
    return IntegrationOutcome(status=run.status, final_time=run.t, final_state=State2.from_array(run.y),
                              escape_sign=run.sign, overflowed=run.overflowed, trajectory=trajectory)


def integrate_market(params: MarketParams, x0: MarketState, t0: float, t1: float,
                     opts: Optional[IntegratorOptions] = None, record: Optional[Sampling] = None) -> MarketOutcome:
    """As `integrate` for the full model; escape is measured on max(|P - P_d|, |D - S|)."""
    opts = opts or IntegratorOptions()
    record = record or Sampling()
    P_d = params.P_d

    def measure_escape(y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        p, q = y[0] - P_d, y[1] - y[2]
        return np.maximum(np.abs(p), np.abs(q)), p if p != 0 else q

    run = _integrate(market_field(params), x0.as_array(), t0, t1, params.omega1, opts, record, measure_escape)
    trajectory = None
    if run.times is not None:
        trajectory = MarketTrajectory(times=np.array(run.times), states=np.array(run.states))
    return MarketOutcome(status=run.status, final_time=run.t, final_state=MarketState.from_array(run.y),
                         escape_sign=run.sign, overflowed=run.overflowed, trajectory=trajectory)


def integrate_batch(params: ModelParams, states: np.ndarray, t0: float, t1: float,
                    opts: Optional[IntegratorOptions] = None) -> BatchOutcome:
    """
    Integrates many initial conditions, rows of `states`, over the same time span.

    With RK4 all members march through one shared step schedule in lockstep, using the
    arithmetic of `integrate` element by element, so each member ends bit-identical to a
    single run. Escaped members are frozen at their exit state. RK45 members run one by one.
    """
    opts = opts or IntegratorOptions()
    states = np.asarray(states, dtype=float).reshape(-1, 2)
    n = states.shape[0]
    if opts.method is Method.RK45:
        return _integrate_each(params, states, t0, t1, opts)
    if not t1 > t0:
        raise DomainError(f'end time {t1} must exceed start time {t0}')

    h = opts.step_for(params.omega1)
    schedule = list(step_schedule(t0, t1, h))
    if len(schedule) > opts.max_steps:
        raise DomainError(f'{len(schedule)} steps needed but the budget is {opts.max_steps}')

    field = planar_field(params)
    radius = opts.escape_radius
    y = states.T.copy()
    alive = np.all(np.isfinite(y), axis=0)
    signs = np.zeros(n, dtype=np.int8)
    signs[~alive] = np.where(np.nan_to_num(y[0, ~alive]) >= 0, 1, -1)
    exit_times = np.full(n, np.nan)
    exit_times[~alive] = t0

    with np.errstate(over='ignore', invalid='ignore'):
        for t, step in schedule:
            y_new = rk4_step(field, t, y, step)
            inside = np.maximum(np.abs(y_new[0]), np.abs(y_new[1])) <= radius
            leaving = alive & ~inside
            if leaving.any():
                finite = np.all(np.isfinite(y_new), axis=0)
                fallback = np.where(y[0] != 0, y[0], y[1])
                direction = np.where(finite & (y_new[0] != 0), y_new[0], np.where(finite, y_new[1], fallback))
                signs[leaving] = np.where(direction[leaving] >= 0, 1, -1)
                exit_times[leaving] = t + step
                y = np.where(alive & (inside | finite), y_new, y)
                alive &= inside
            else:
                y = np.where(alive, y_new, y)

    return BatchOutcome(states=y.T.copy(), escape_signs=signs, escape_times=exit_times)


def _integrate_each(params: ModelParams, states: np.ndarray, t0: float, t1: float,
                    opts: IntegratorOptions) -> BatchOutcome:
    n = states.shape[0]
    out = np.empty_like(states)
    signs = np.zeros(n, dtype=np.int8)
    exit_times = np.full(n, np.nan)
    for i, row in enumerate(states):
        outcome = integrate(params, State2.from_array(row), t0, t1, opts)
        out[i] = outcome.final_state.as_array()
        if outcome.status is Status.ESCAPED:
            signs[i] = outcome.escape_sign
            exit_times[i] = outcome.final_time
    return BatchOutcome(states=out, escape_signs=signs, escape_times=exit_times)
