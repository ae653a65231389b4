from typing import Optional


class DynamicsError(Exception):
    """Base class of every error raised by the toolkit."""


class DomainError(DynamicsError, ValueError):
    """An input lies outside the domain of an operation, e.g. a non-finite state."""


class ReductionError(DynamicsError):
    """
    The full market model cannot be reduced to the planar system because the constant
    left over in the supply equation does not vanish.
    """

    def __init__(self, message: str, residual: float) -> None:
        super().__init__(message)
        self.residual = residual


class NoRootsError(DynamicsError):
    """The Melnikov function has no simple roots for the given forcing amplitude."""

    def __init__(self, amplitude: float, threshold: float) -> None:
        super().__init__(f'|a| = {abs(amplitude):.6g} does not exceed the critical amplitude {threshold:.6g}')
        self.amplitude = amplitude
        self.threshold = threshold


class MapEscape(DynamicsError):
    """A trajectory escaped to infinity while the period map was being applied."""

    def __init__(self, sign: int, time: float) -> None:
        super().__init__(f'escaped with sign {sign:+d} at t={time:.6g}')
        self.sign = sign
        self.time = time


class RefinementError(DynamicsError):
    """Newton refinement of a periodic cycle did not converge."""

    def __init__(self, message: str, residual: Optional[float]) -> None:
        super().__init__(message)
        self.residual = residual


class DegenerateBoundaryError(DynamicsError):
    """A basin map holds a single class (or label) and therefore has no boundary."""
