import logging
from collections import deque
from enum import StrEnum
from typing import Any, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from consts import (CLASS_ESCAPE_NEGATIVE, CLASS_ESCAPE_POSITIVE, CLASS_PERIODIC, CLASS_UNDECIDED, CONFIRM_COUNT,
                    CYCLE_SEPARATION_FACTOR, LOW_DAMPING_MAX_ITERATIONS, LOW_DAMPING_THRESHOLD,
                    LOW_DAMPING_TRANSIENT_ITERATIONS, MATCH_TOLERANCE, MAX_ITERATIONS, MAX_PERIOD, NEWTON_MAX_STEPS,
                    NEWTON_RELATIVE_STEP, NEWTON_TOLERANCE, STEPS_PER_PERIOD, TRANSIENT_ITERATIONS)
from errors import DomainError, MapEscape, RefinementError
from integrator import BatchOutcome, IntegratorOptions, Sampling, Status, integrate, integrate_batch
from model import ModelParams, State2, Trajectory

logger = logging.getLogger(__name__)

# halvings of the Newton step before giving up on a descent direction
_MAX_HALVINGS = 10


class AttractorKind(StrEnum):
    PERIODIC = 'periodic'
    ESCAPE_POSITIVE = 'escape_positive'
    ESCAPE_NEGATIVE = 'escape_negative'
    UNDECIDED = 'undecided'

    @property
    def code(self) -> int:
        return {
            AttractorKind.UNDECIDED: CLASS_UNDECIDED,
            AttractorKind.PERIODIC: CLASS_PERIODIC,
            AttractorKind.ESCAPE_POSITIVE: CLASS_ESCAPE_POSITIVE,
            AttractorKind.ESCAPE_NEGATIVE: CLASS_ESCAPE_NEGATIVE,
        }[self]

    @classmethod
    def escape(cls, sign: int) -> 'AttractorKind':
        return cls.ESCAPE_POSITIVE if sign > 0 else cls.ESCAPE_NEGATIVE


class PoincareOptions(BaseModel):
    """
    Controls of the period map and of attractor classification.

    phase           section time offset, 0 <= phase < T
    transient       iterates discarded before cycle matching
    max_iterations  iterate budget
    period_max      largest period tested
    match_tol       distance below which two section points coincide
    confirm_count   consecutive matches required to accept a cycle
    """
    model_config = ConfigDict(frozen=True, allow_inf_nan=False)

    phase: float = Field(default=0.0, ge=0)
    transient: int = Field(default=TRANSIENT_ITERATIONS, ge=0)
    max_iterations: int = Field(default=MAX_ITERATIONS, ge=1)
    period_max: int = Field(default=MAX_PERIOD, ge=1)
    match_tol: float = Field(default=MATCH_TOLERANCE, gt=0)
    confirm_count: int = Field(default=CONFIRM_COUNT, ge=1)
    integrator: IntegratorOptions = IntegratorOptions()

    @model_validator(mode='after')
    def _check_budget(self) -> 'PoincareOptions':
        if not self.transient < self.max_iterations:
            raise ValueError(f'transient {self.transient} must be below max_iterations {self.max_iterations}')
        return self

    @classmethod
    def for_params(cls, params: ModelParams, **overrides: Any) -> 'PoincareOptions':
        """Defaults for `params`, with the longer settling budget of weakly damped systems."""
        values: dict[str, Any] = {}
        if params.delta <= LOW_DAMPING_THRESHOLD:
            values.update(transient=LOW_DAMPING_TRANSIENT_ITERATIONS, max_iterations=LOW_DAMPING_MAX_ITERATIONS)
        values.update({key: value for key, value in overrides.items() if value is not None})
        return cls(**values)

    def check_phase(self, params: ModelParams) -> None:
        if not self.phase < params.period:
            raise DomainError(f'section phase {self.phase} must lie in [0, {params.period})')


class AttractorClass(BaseModel):
    """Where one initial condition ends up under the period map."""
    model_config = ConfigDict(frozen=True)

    kind: AttractorKind
    period: int = 0
    cycle: tuple[State2, ...] = ()
    iterations_used: int

    @property
    def code(self) -> int:
        return self.kind.code


class SectionOrbit(BaseModel):
    """Iterates x0, F(x0), ... of the period map, cut short if the orbit escaped."""
    model_config = ConfigDict(frozen=True)

    points: list[State2]
    escape_sign: Optional[int] = None

    @property
    def escaped(self) -> bool:
        return self.escape_sign is not None


class RefinedCycle(BaseModel):
    model_config = ConfigDict(frozen=True)

    point: State2
    residual: float
    iterations: int


# ---------------------------------------------------------------------------------------------------------------


def _apply_map(params: ModelParams, states: np.ndarray, opts: PoincareOptions) -> BatchOutcome:
    # every application integrates [phase, phase + T], which keeps iterates bit-reproducible
    return integrate_batch(params, states, opts.phase, opts.phase + params.period, opts.integrator)


def poincare_map(params: ModelParams, x: State2, opts: Optional[PoincareOptions] = None) -> State2:
    """
    Advances x by one forcing period from the section time.

    Raises
    ------
    MapEscape
        If the trajectory escapes during the period.
    """
    opts = opts or PoincareOptions.for_params(params)
    opts.check_phase(params)
    outcome = _apply_map(params, x.as_array()[None, :], opts)
    if outcome.escaped[0]:
        raise MapEscape(int(outcome.escape_signs[0]), float(outcome.escape_times[0]))
    return State2.from_array(outcome.states[0])


def iterate_map(params: ModelParams, x0: State2, n: int, opts: Optional[PoincareOptions] = None) -> SectionOrbit:
    """Returns x0, F(x0), ..., F^n(x0), truncated at the first escape."""
    if n < 1:
        raise DomainError(f'need at least one iteration, got {n}')
    opts = opts or PoincareOptions.for_params(params)
    points = [x0]
    for _ in range(n):
        try:
            points.append(poincare_map(params, points[-1], opts))
        except MapEscape as escape:
            return SectionOrbit(points=points, escape_sign=escape.sign)
    return SectionOrbit(points=points)


def _distinct(cycle: np.ndarray, tol: np.ndarray) -> np.ndarray:
    """cycle has shape (k, n, 2); True where all k points of column c are more than tol[c] apart."""
    k = cycle.shape[0]
    apart = np.ones(cycle.shape[1], dtype=bool)
    for i in range(k):
        for j in range(i + 1, k):
            apart &= np.linalg.norm(cycle[i] - cycle[j], axis=1) > tol
    return apart


def classify_batch(params: ModelParams, seeds: np.ndarray, opts: Optional[PoincareOptions] = None
                   ) -> list[AttractorClass]:
    """
    Classifies every row of `seeds` under the period map. All seeds are iterated in lockstep;
    a seed leaves the batch as soon as it escapes or closes a cycle, and its result does not
    depend on the other seeds.

    After `transient` iterates, a seed is periodic with period k if k is the smallest period
    with |x_{n+k} - x_n| < match_tol for `confirm_count` consecutive n and the k cycle points
    are pairwise further apart than both match_tol and CYCLE_SEPARATION_FACTOR times the largest
    of those gaps. A fixed point approached along a slow spiral thus stays period 1. Seeds
    still unsettled after `max_iterations` are undecided.
    """
    opts = opts or PoincareOptions.for_params(params)
    opts.check_phase(params)
    seeds = np.asarray(seeds, dtype=float).reshape(-1, 2)
    m, k_max, tol = opts.confirm_count, opts.period_max, opts.match_tol

    results: list[Optional[AttractorClass]] = [None] * seeds.shape[0]
    active = np.arange(seeds.shape[0])
    x = seeds.copy()
    history: deque[np.ndarray] = deque(maxlen=k_max + m)

    for iteration in range(1, opts.max_iterations + 1):
        outcome = _apply_map(params, x, opts)
        x = outcome.states
        escaped = outcome.escaped
        for index in np.flatnonzero(escaped):
            results[active[index]] = AttractorClass(kind=AttractorKind.escape(int(outcome.escape_signs[index])),
                                                    iterations_used=iteration)

        periods = np.zeros(active.shape[0], dtype=int)
        if iteration > opts.transient:
            history.append(x)
            window = np.stack(history)
            size = window.shape[0]
            for k in range(1, k_max + 1):
                if size < m + k:
                    break
                gaps = np.linalg.norm(window[size - m:] - window[size - m - k:size - k], axis=2)
                closed = np.all(gaps < tol, axis=0) & (periods == 0) & ~escaped
                if not closed.any():
                    continue
                separation = np.maximum(tol, CYCLE_SEPARATION_FACTOR * gaps.max(axis=0))
                closed &= _distinct(window[size - k:], separation)
                periods[closed] = k
            for index in np.flatnonzero(periods):
                k = int(periods[index])
                cycle = tuple(State2.from_array(window[size - k + j, index]) for j in range(k))
                results[active[index]] = AttractorClass(kind=AttractorKind.PERIODIC, period=k, cycle=cycle,
                                                        iterations_used=iteration)

        keep = ~escaped & (periods == 0)
        if not keep.all():
            active, x = active[keep], x[keep]
            history = deque((past[keep] for past in history), maxlen=k_max + m)
        if active.shape[0] == 0:
            break

    for index in active:
        results[index] = AttractorClass(kind=AttractorKind.UNDECIDED, iterations_used=opts.max_iterations)
    if active.shape[0]:
        logger.debug(f'{active.shape[0]} of {seeds.shape[0]} seeds undecided after {opts.max_iterations} iterations')
    return results


def classify(params: ModelParams, x0: State2, opts: Optional[PoincareOptions] = None) -> AttractorClass:
    """Classifies the attractor reached from x0; see `classify_batch`."""
    return classify_batch(params, x0.as_array()[None, :], opts)[0]


def _cycle_residuals(params: ModelParams, points: np.ndarray, k: int, opts: PoincareOptions) -> np.ndarray:
    """F^k(x) - x for each row; rows that escape come back as inf."""
    current = points.copy()
    escaped = np.zeros(points.shape[0], dtype=bool)
    for _ in range(k):
        outcome = _apply_map(params, current, opts)
        current = outcome.states
        escaped |= outcome.escaped
    residuals = current - points
    residuals[escaped] = np.inf
    return residuals


def refine_cycle(params: ModelParams, guess: State2, k: int, opts: Optional[PoincareOptions] = None
                 ) -> RefinedCycle:
    """
    Solves F^k(x) = x near `guess` by damped Newton iteration with a forward-difference
    Jacobian of the k-fold map.

    Raises
    ------
    RefinementError
        If the residual does not drop below the tolerance within the step budget.
    """
    opts = opts or PoincareOptions.for_params(params)
    opts.check_phase(params)
    x = guess.as_array()
    residual = _cycle_residuals(params, x[None, :], k, opts)[0]
    norm = float(np.linalg.norm(residual))

    for iteration in range(NEWTON_MAX_STEPS):
        logger.debug(f'newton iteration {iteration}: |F^{k}(x) - x| = {norm:.3e}')
        if norm < NEWTON_TOLERANCE:
            return RefinedCycle(point=State2.from_array(x), residual=norm, iterations=iteration)
        if not np.isfinite(norm):
            raise RefinementError(f'period-{k} iteration escaped during refinement', None)

        steps = NEWTON_RELATIVE_STEP * np.maximum(np.abs(x), 1.0)
        perturbed = x + np.diag(steps)
        jacobian = ((_cycle_residuals(params, perturbed, k, opts) - residual) / steps[:, None]).T
        try:
            direction = np.linalg.solve(jacobian, -residual)
        except np.linalg.LinAlgError as ex:
            raise RefinementError(f'singular Jacobian of F^{k} - I: {ex}', norm) from ex

        scale = 1.0
        for _ in range(_MAX_HALVINGS + 1):
            candidate = x + scale * direction
            candidate_residual = _cycle_residuals(params, candidate[None, :], k, opts)[0]
            candidate_norm = float(np.linalg.norm(candidate_residual))
            if candidate_norm < norm:
                break
            scale *= 0.5
        else:
            raise RefinementError(f'no descent along the Newton direction for period {k}', norm)
        x, residual, norm = candidate, candidate_residual, candidate_norm

    if norm < NEWTON_TOLERANCE:
        return RefinedCycle(point=State2.from_array(x), residual=norm, iterations=NEWTON_MAX_STEPS)
    raise RefinementError(f'Newton did not converge in {NEWTON_MAX_STEPS} steps', norm)


def trace_cycle(params: ModelParams, point: State2, k: int, opts: Optional[PoincareOptions] = None,
                samples_per_period: int = STEPS_PER_PERIOD) -> Trajectory:
    """The continuous orbit through a period-k section point over k forcing periods."""
    opts = opts or PoincareOptions.for_params(params)
    opts.check_phase(params)
    T = params.period
    outcome = integrate(params, point, opts.phase, opts.phase + k * T, opts.integrator,
                        Sampling.every(T / samples_per_period))
    if outcome.status is Status.ESCAPED:
        raise MapEscape(outcome.escape_sign, outcome.final_time)
    return outcome.trajectory
