"""
Melnikov analysis of the forced, damped planar system along its upper heteroclinic orbit.

Along the orbit p = A tanh(Omega t + t0), q = (A Omega / alpha) sech^2(Omega t + t0) the
Melnikov function evaluates to

    M(t0) = -4 delta A^2 Omega / (3 alpha) - 2 a A sin(omega1 t0 / Omega) I(omega1 / Omega)

with I(b) the integral of sech^2(tau) cos(b tau) over [0, inf). Simple zeros of M in t0 signal
a transversal heteroclinic tangle and hence chaos.
"""
import logging
import math
from typing import Optional

import numpy as np
from pydantic import BaseModel, ConfigDict
from scipy.integrate import quad

from errors import DomainError, NoRootsError
from model import ModelParams, heteroclinic_spec

logger = logging.getLogger(__name__)

"""The oracle integrates over |Omega t + t0| <= ORACLE_SPAN, beyond which sech^2 is below 1e-34."""
ORACLE_SPAN: float = 40.0
ORACLE_ABS_TOL: float = 1e-12

# beyond this x / sinh(x) underflows in the naive form
_SINH_CUTOFF = 700.0


class MelnikovReport(BaseModel):
    """Everything the Melnikov criterion says about one parameter set."""
    model_config = ConfigDict(frozen=True)

    integral_I: float
    offset_term: float
    amplitude_term: float
    threshold_a: float
    has_simple_roots: bool
    root_ratio: Optional[float] = None
    principal_roots: Optional[tuple[float, float]] = None

    def value(self, t0: float, frequency_ratio: float) -> float:
        """Reassembles M(t0) from the stored terms."""
        return self.offset_term - self.amplitude_term * math.sin(frequency_ratio * t0)


def sech2_cos_integral(b: float) -> float:
    """
    Closed form of the integral of sech^2(tau) cos(b tau) over [0, inf), i.e.
    (pi b / 2) / sinh(pi b / 2), continuously extended by 1 at b = 0.

    Raises
    ------
    DomainError
        If b is negative or not finite.
    """
    if not math.isfinite(b) or b < 0:
        raise DomainError(f'frequency ratio must be a finite non-negative number, got {b}')
    x = 0.5 * math.pi * b
    if x == 0:
        return 1.0
    if x > _SINH_CUTOFF:
        return 2 * x * math.exp(-x)
    return x / math.sinh(x)


def _orbit_constants(params: ModelParams) -> tuple[float, float, float]:
    het = heteroclinic_spec(params)
    return het.A, het.Omega, params.omega1 / het.Omega


def melnikov_value(params: ModelParams, t0: float) -> float:
    """Closed-form M(t0)."""
    A, Omega, ratio = _orbit_constants(params)
    offset = -4 * params.delta * A * A * Omega / (3 * params.alpha)
    return offset - 2 * params.a * A * math.sin(ratio * t0) * sech2_cos_integral(ratio)


def melnikov_derivative(params: ModelParams, t0: float) -> float:
    """dM/dt0, nonzero at every simple root."""
    A, Omega, ratio = _orbit_constants(params)
    return -2 * params.a * A * ratio * math.cos(ratio * t0) * sech2_cos_integral(ratio)


def critical_amplitude(params: ModelParams) -> float:
    """
    Forcing amplitude a_c = 2 delta A Omega / (3 alpha) / I(omega1 / Omega) above which M has
    simple roots. Zero without damping.
    """
    A, Omega, ratio = _orbit_constants(params)
    return 2 * params.delta * A * Omega / (3 * params.alpha) / sech2_cos_integral(ratio)


def root_ratio(params: ModelParams) -> Optional[float]:
    """sin(omega1 t0 / Omega) at the roots, or None when there is no forcing."""
    if params.a == 0:
        return None
    A, Omega, ratio = _orbit_constants(params)
    return -2 * params.delta * A * Omega / (3 * params.alpha * params.a) / sech2_cos_integral(ratio)


def melnikov_roots(params: ModelParams, n_periods: int = 1) -> list[float]:
    """
    The simple roots t0 of M over `n_periods` periods of sin(omega1 t0 / Omega), sorted and
    starting at the smallest non-negative root.

    Raises
    ------
    DomainError
        If n_periods is below 1.
    NoRootsError
        If |a| does not strictly exceed the critical amplitude; at equality the root is a
        tangency and is not simple.
    """
    if n_periods < 1:
        raise DomainError(f'need at least one period of roots, got {n_periods}')
    threshold = critical_amplitude(params)
    r = root_ratio(params)
    if r is None or not abs(params.a) > threshold or not abs(r) < 1:
        raise NoRootsError(params.a, threshold)

    _, Omega, _ = _orbit_constants(params)
    scale = Omega / params.omega1
    base = math.asin(r)
    angles = sorted((base % (2 * math.pi), (math.pi - base) % (2 * math.pi)))
    roots = [scale * (angle + 2 * math.pi * k) for k in range(n_periods) for angle in angles]
    return sorted(roots)


def melnikov_report(params: ModelParams) -> MelnikovReport:
    A, Omega, ratio = _orbit_constants(params)
    integral = sech2_cos_integral(ratio)
    threshold = critical_amplitude(params)
    has_roots = abs(params.a) > threshold
    r = root_ratio(params)
    principal = tuple(melnikov_roots(params, 1)) if has_roots else None
    return MelnikovReport(
        integral_I=integral,
        offset_term=-4 * params.delta * A * A * Omega / (3 * params.alpha),
        amplitude_term=2 * params.a * A * integral,
        threshold_a=threshold,
        has_simple_roots=has_roots,
        root_ratio=r,
        principal_roots=principal,
    )


def quadrature_oracle(params: ModelParams, t0: float) -> float:
    """
    M(t0) by adaptive quadrature of alpha (-delta q^2 + a q sin(omega1 t)) along the upper
    heteroclinic orbit, independently of the closed form.
    """
    het = heteroclinic_spec(params, t0)
    lower = (-ORACLE_SPAN - t0) / het.Omega
    upper = (ORACLE_SPAN - t0) / het.Omega

    height = het.A * het.Omega / params.alpha

    def integrand(t: float) -> float:
        q = height / math.cosh(het.Omega * t + t0) ** 2
        return params.alpha * (-params.delta * q * q + params.a * q * math.sin(params.omega1 * t))

    # split at whole forcing periods so each piece sees at most a few oscillations
    edges = np.append(np.arange(lower, upper, params.period), upper)
    total = 0.0
    for left, right in zip(edges[:-1], edges[1:]):
        value, _ = quad(integrand, left, right, epsabs=ORACLE_ABS_TOL / len(edges), epsrel=1e-13, limit=200)
        total += value
    return total
