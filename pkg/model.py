import logging
import math
from enum import StrEnum
from typing import Callable, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy.integrate import cumulative_trapezoid

from errors import DomainError, ReductionError

logger = logging.getLogger(__name__)

"""Right-hand side on stacked arrays: f(t, y) with y[0], y[1], ... the state components."""
ArrayField = Callable[[float, np.ndarray], np.ndarray]

"""Half-width (in units of the orbit's rate) over which the separatrix frame is sampled."""
SEPARATRIX_SPAN: float = 6.0


class ModelParams(BaseModel):
    """
    Coefficients of the planar demand-supply system

        dp/dt = alpha q
        dq/dt = -beta p (1 - beta1 p^2) - gamma p - delta q + a sin(omega1 t)

    with p the price deviation from the demand threshold and q the excess demand.
    """
    model_config = ConfigDict(frozen=True, allow_inf_nan=False)

    alpha: float = Field(gt=0)
    beta: float = Field(gt=0)
    beta1: float = Field(gt=0)
    gamma: float = Field(gt=0)
    delta: float = Field(ge=0)
    a: float = 0.0
    omega1: float = Field(gt=0)

    @property
    def period(self) -> float:
        """Forcing period T = 2 pi / omega1."""
        return 2 * math.pi / self.omega1

    @property
    def is_integrable(self) -> bool:
        return self.delta == 0 and self.a == 0

    def unforced(self) -> 'ModelParams':
        """The same coefficients with damping and forcing switched off."""
        return self.model_copy(update={'delta': 0.0, 'a': 0.0})


class State2(BaseModel):
    """A point of the reduced phase plane."""
    model_config = ConfigDict(frozen=True, allow_inf_nan=False)

    p: float
    q: float

    def as_array(self) -> np.ndarray:
        return np.array([self.p, self.q], dtype=float)

    @classmethod
    def from_array(cls, y: np.ndarray) -> 'State2':
        return cls(p=float(y[0]), q=float(y[1]))


class Trajectory(BaseModel):
    """
    Time-stamped samples of the planar system. `states` has one row (p, q) per entry of
    `times`, and the times are strictly increasing.
    """
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    times: np.ndarray
    states: np.ndarray

    @model_validator(mode='after')
    def _check_shape(self) -> 'Trajectory':
        if self.times.ndim != 1 or self.states.ndim != 2 or self.states.shape[0] != self.times.shape[0]:
            raise ValueError(f'times {self.times.shape} and states {self.states.shape} do not line up')
        if np.any(np.diff(self.times) <= 0):
            raise ValueError('times must be strictly increasing')
        return self

    def __len__(self) -> int:
        return self.times.shape[0]

    def points(self) -> list[State2]:
        return [State2.from_array(row) for row in self.states]


class MarketParams(BaseModel):
    """
    Coefficients of the full price/demand/supply model

        dP/dt = alpha (D - S)
        dD/dt = beta (P_d - P) [1 - beta1 (P_d - P)^2] + a sin(omega1 t)
        dS/dt = -gamma (P_s - P) + delta (D - S) + c + b sin(omega2 t)
    """
    model_config = ConfigDict(frozen=True, allow_inf_nan=False)

    alpha: float = Field(gt=0)
    beta: float = Field(gt=0)
    beta1: float = Field(gt=0)
    gamma: float = Field(gt=0)
    delta: float = Field(ge=0)
    P_d: float = Field(gt=0)
    P_s: float = Field(gt=0)
    a: float = 0.0
    omega1: float = Field(gt=0)
    c: float = 0.0
    b: float = 0.0
    omega2: float = Field(default=1.0, gt=0)

    @model_validator(mode='after')
    def _check_saturation(self) -> 'MarketParams':
        # demand must already stall before the price reaches zero
        if not 1 < self.beta1 * self.P_d ** 2:
            raise ValueError(f'saturation condition 1 < beta1 * P_d^2 violated ({self.beta1 * self.P_d ** 2:.6g})')
        return self

    @property
    def reduction_residual(self) -> float:
        """Constant left in d(D - S)/dt after the change of variables; must vanish to reduce."""
        return self.c - self.gamma * (self.P_s - self.P_d)


class MarketState(BaseModel):
    """Average price, total demand and total supply."""
    model_config = ConfigDict(frozen=True, allow_inf_nan=False)

    P: float
    D: float
    S: float

    def as_array(self) -> np.ndarray:
        return np.array([self.P, self.D, self.S], dtype=float)

    @classmethod
    def from_array(cls, y: np.ndarray) -> 'MarketState':
        return cls(P=float(y[0]), D=float(y[1]), S=float(y[2]))


class Branch(StrEnum):
    UPPER = 'upper'
    LOWER = 'lower'


class HeteroclinicSpec(BaseModel):
    """Closed-form data of one heteroclinic orbit. Build it with `heteroclinic_spec`."""
    model_config = ConfigDict(frozen=True)

    A: float = Field(gt=0)
    Omega: float = Field(gt=0)
    t0: float = 0.0
    branch: Branch = Branch.UPPER


class FixedPointReport(BaseModel):
    """
    The three fixed points of the unforced, undamped system and their linear stability.
    Eigenvalues are stored as ((re, im), (re, im)) pairs.
    """
    model_config = ConfigDict(frozen=True)

    equilibrium: State2
    saturation: State2
    collectability: State2
    center_eigenvalues: tuple[tuple[float, float], tuple[float, float]]
    saddle_eigenvalues: tuple[tuple[float, float], tuple[float, float]]
    condition_sc2_holds: Optional[bool] = None
    saturation_price: Optional[float] = None
    collectability_price: Optional[float] = None


class MarketFixedPoint(BaseModel):
    """A fixed point of the planar system expressed in market terms (D = S there)."""
    model_config = ConfigDict(frozen=True)

    name: str
    price: float
    drift: float


class PriceFloorReport(BaseModel):
    """Samples of a planar trajectory whose market price P = p + P_d is negative."""
    model_config = ConfigDict(frozen=True)

    violations: int
    first_violation_time: Optional[float] = None

    @property
    def valid(self) -> bool:
        return self.violations == 0


# ---------------------------------------------------------------------------------------------------------------


def _require_finite(values: np.ndarray, what: str) -> None:
    if not np.all(np.isfinite(values)):
        raise DomainError(f'non-finite {what}: {values}')


def planar_field(params: ModelParams) -> ArrayField:
    """
    Returns the planar vector field acting on stacked arrays y = (p, q), where p and q may
    be scalars or equally shaped arrays. The forcing is evaluated once per call as a scalar.
    """
    alpha, beta, beta1, gamma = params.alpha, params.beta, params.beta1, params.gamma
    delta, a, omega1 = params.delta, params.a, params.omega1

    def field(t: float, y: np.ndarray) -> np.ndarray:
        p, q = y[0], y[1]
        forcing = a * math.sin(omega1 * t)
        return np.stack((alpha * q, -beta * p * (1.0 - beta1 * p * p) - gamma * p - delta * q + forcing))

    return field


def market_field(params: MarketParams) -> ArrayField:
    """Same as `planar_field` for the full model with y = (P, D, S)."""
    alpha, beta, beta1, gamma, delta = params.alpha, params.beta, params.beta1, params.gamma, params.delta
    P_d, P_s, c = params.P_d, params.P_s, params.c
    a, omega1, b, omega2 = params.a, params.omega1, params.b, params.omega2

    def field(t: float, y: np.ndarray) -> np.ndarray:
        P, D, S = y[0], y[1], y[2]
        gap = P_d - P
        return np.stack((
            alpha * (D - S),
            beta * gap * (1.0 - beta1 * gap * gap) + a * math.sin(omega1 * t),
            -gamma * (P_s - P) + delta * (D - S) + c + b * math.sin(omega2 * t),
        ))

    return field


def vector_field(params: ModelParams, t: float, x: State2) -> State2:
    """
    Time derivative of the planar system at (t, x).

    Raises
    ------
    DomainError
        If t or the state is not finite.
    """
    _require_finite(np.array([t, x.p, x.q]), 'time or state')
    return State2.from_array(planar_field(params)(t, x.as_array()))


def market_vector_field(params: MarketParams, t: float, x: MarketState) -> MarketState:
    """Time derivative of the full model at (t, x)."""
    _require_finite(np.array([t, x.P, x.D, x.S]), 'time or state')
    return MarketState.from_array(market_field(params)(t, x.as_array()))


def hamiltonian(params: ModelParams, x: State2) -> float:
    """
    Energy H = alpha q^2 / 2 + (beta + gamma) p^2 / 2 - beta beta1 p^4 / 4, conserved when
    delta = a = 0.
    """
    p, q = x.p, x.q
    return 0.5 * params.alpha * q * q + 0.5 * (params.beta + params.gamma) * p * p \
        - 0.25 * params.beta * params.beta1 * p ** 4


def saddle_distance(params: ModelParams | MarketParams) -> float:
    """|p| of the saturation and collectability fixed points."""
    return math.sqrt((params.beta + params.gamma) / (params.beta * params.beta1))


def fixed_points(params: ModelParams, P_d: Optional[float] = None) -> FixedPointReport:
    """
    Reports the market equilibrium (a centre) and the saturation and collectability saddles
    of the undamped, unforced system. When the demand threshold price `P_d` is known, also
    checks that both saddles lie at admissible prices, (beta + gamma) / beta < beta1 P_d^2,
    and converts them to prices.
    """
    A = saddle_distance(params)
    rate = params.alpha * (params.beta + params.gamma)
    centre = math.sqrt(rate)
    saddle = math.sqrt(2 * rate)

    sc2: Optional[bool] = None
    saturation_price = collectability_price = None
    if P_d is not None:
        sc2 = (params.beta + params.gamma) / params.beta < params.beta1 * P_d ** 2
        saturation_price, collectability_price = P_d - A, P_d + A
        if not sc2:
            logger.warning(f'saturation fixed point lies at a negative price for P_d={P_d}')

    return FixedPointReport(
        equilibrium=State2(p=0.0, q=0.0),
        saturation=State2(p=-A, q=0.0),
        collectability=State2(p=A, q=0.0),
        center_eigenvalues=((0.0, centre), (0.0, -centre)),
        saddle_eigenvalues=((saddle, 0.0), (-saddle, 0.0)),
        condition_sc2_holds=sc2,
        saturation_price=saturation_price,
        collectability_price=collectability_price,
    )


def market_fixed_points(params: MarketParams) -> list[MarketFixedPoint]:
    """
    The equilibrium, saturation and collectability points in market variables. Demand and
    supply are equal there and drift together at the returned rate (zero, negative, positive).
    """
    A = saddle_distance(params)
    points = []
    for name, p in (('equilibrium', 0.0), ('saturation', -A), ('collectability', A)):
        drift = -params.beta * p * (1.0 - params.beta1 * p * p)
        points.append(MarketFixedPoint(name=name, price=params.P_d + p, drift=drift))
    return points


def heteroclinic_spec(params: ModelParams, t0: float = 0.0, branch: Branch = Branch.UPPER) -> HeteroclinicSpec:
    return HeteroclinicSpec(
        A=saddle_distance(params),
        Omega=math.sqrt(0.5 * params.alpha * (params.beta + params.gamma)),
        t0=t0,
        branch=branch,
    )


def heteroclinic_points(params: ModelParams, t0: float, branch: Branch, t: np.ndarray) -> np.ndarray:
    """Vectorised `heteroclinic_orbit`; returns an array of shape (2, len(t))."""
    het = heteroclinic_spec(params, t0, branch)
    phase = het.Omega * np.asarray(t, dtype=float) + het.t0
    sech = 1.0 / np.cosh(np.clip(phase, -700.0, 700.0))
    orbit = np.stack((het.A * np.tanh(phase), het.A * het.Omega / params.alpha * sech * sech))
    return orbit if branch is Branch.UPPER else -orbit


def heteroclinic_orbit(params: ModelParams, t0: float, branch: Branch, t: float) -> State2:
    """
    Point at time t on the heteroclinic orbit joining the saddles: the upper branch is
    (A tanh(Omega t + t0), A Omega / alpha sech^2(Omega t + t0)), the lower one its negation.
    """
    return State2.from_array(heteroclinic_points(params, t0, branch, np.array([t]))[:, 0])


def separatrix_frame(params: ModelParams, n_points: int = 200) -> np.ndarray:
    """
    Samples the heteroclinic cycle, upper branch from the saturation to the collectability
    saddle and lower branch back, as an array of shape (2 n_points + 2, 2) with the saddles
    as first and middle rows.
    """
    het = heteroclinic_spec(params)
    t = np.linspace(-SEPARATRIX_SPAN, SEPARATRIX_SPAN, n_points) / het.Omega
    upper = heteroclinic_points(params, 0.0, Branch.UPPER, t).T
    lower = heteroclinic_points(params, 0.0, Branch.LOWER, t).T
    saddle = np.array([[het.A, 0.0]])
    return np.vstack((-saddle, upper, saddle, lower))


def reduce_to_planar(params: MarketParams) -> ModelParams:
    """
    Reduces the full model to the planar one through p = P - P_d, q = D - S.

    Raises
    ------
    ReductionError
        If the supply forcing oscillates (b != 0) or the constant c - gamma (P_s - P_d)
        does not vanish.
    """
    if params.b != 0:
        raise ReductionError(f'supply forcing b={params.b} cannot be absorbed', params.b)
    residual = params.reduction_residual
    if not math.isclose(residual, 0.0, abs_tol=1e-12):
        raise ReductionError(f'residual constant c - gamma (P_s - P_d) = {residual:.6g} is not zero', residual)
    return ModelParams(alpha=params.alpha, beta=params.beta, beta1=params.beta1, gamma=params.gamma,
                       delta=params.delta, a=params.a, omega1=params.omega1)


def reconstruct_market(traj: Trajectory, params: MarketParams, D0: float) -> list[MarketState]:
    """
    Recovers (P, D, S) along a planar trajectory. P = p + P_d, D integrates the demand law
    by the trapezoid rule over the samples starting from D0, and S = D - q.
    """
    reduce_to_planar(params)
    _require_finite(np.array([D0]), 'initial demand')
    p, q = traj.states[:, 0], traj.states[:, 1]
    demand_rate = -params.beta * p * (1.0 - params.beta1 * p * p) + params.a * np.sin(params.omega1 * traj.times)
    D = D0 + cumulative_trapezoid(demand_rate, traj.times, initial=0.0)
    P = p + params.P_d
    S = D - q
    return [MarketState(P=float(P[i]), D=float(D[i]), S=float(S[i])) for i in range(len(traj))]


def price_floor_violations(traj: Trajectory, P_d: float) -> PriceFloorReport:
    """Flags samples where the price P = p + P_d would be negative. Nothing is clipped."""
    negative = traj.states[:, 0] + P_d < 0
    count = int(np.count_nonzero(negative))
    first = float(traj.times[np.argmax(negative)]) if count else None
    return PriceFloorReport(violations=count, first_violation_time=first)
