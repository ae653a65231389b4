import math

"""
Model coefficients used throughout the numerical study of the demand-supply system.
The damping `delta` and forcing amplitude `a` are left free and must be chosen per run.
"""
DEFAULT_ALPHA: float = 1.0
DEFAULT_BETA: float = 1.0
DEFAULT_BETA1: float = 0.25
DEFAULT_GAMMA: float = 1.0
DEFAULT_OMEGA1: float = math.pi

"""Fixed RK4 steps per forcing period, i.e. the default step is h = T / STEPS_PER_PERIOD."""
STEPS_PER_PERIOD: int = 200

"""Phase-space radius beyond which a trajectory counts as escaped to infinity."""
ESCAPE_RADIUS: float = 50.0

"""Default step budget of a single integration."""
MAX_STEPS: int = 10_000_000

"""Default tolerances of the adaptive Dormand-Prince integrator."""
RK45_REL_TOL: float = 1e-8
RK45_ABS_TOL: float = 1e-10

"""
Factor by which the adaptive controller tightens the requested tolerances on every step. The endpoint
error over a few forcing periods then stays within ten times the requested relative tolerance.
"""
RK45_TOLERANCE_MARGIN: float = 100.0

"""
Defaults for attractor classification under the period map.
The transient is discarded before cycle matching starts.
"""
TRANSIENT_ITERATIONS: int = 200
MAX_ITERATIONS: int = 1000
MAX_PERIOD: int = 8
MATCH_TOLERANCE: float = 1e-6
CONFIRM_COUNT: int = 5

"""
A candidate cycle of period k > 1 is accepted only when its points lie further apart than
this multiple of the largest closure gap |x_{n+k} - x_n| seen while confirming it.
"""
CYCLE_SEPARATION_FACTOR: float = 1000.0

"""
Weakly damped systems settle slowly, so at or below this damping the classification
budget is raised to the values below.
"""
LOW_DAMPING_THRESHOLD: float = 0.02
LOW_DAMPING_TRANSIENT_ITERATIONS: int = 1000
LOW_DAMPING_MAX_ITERATIONS: int = 4000

"""Damped Newton refinement of periodic cycles."""
NEWTON_MAX_STEPS: int = 50
NEWTON_TOLERANCE: float = 1e-10
NEWTON_RELATIVE_STEP: float = 1e-6

"""
Default basin window, slightly wider than twice the saddle distance 2A = 5.66 of the
default coefficients, so the whole heteroclinic cycle and the three leaves are framed.
"""
BASIN_WINDOW: tuple[float, float, float, float] = (-6.0, 6.0, -6.0, 6.0)
BASIN_RESOLUTION: tuple[int, int] = (150, 150)
BASIN_MAX_ITERATIONS: int = 300

"""Box sizes (in cells) used by the box-counting estimator, and the smallest map it accepts."""
BOX_SCALES: tuple[int, ...] = (1, 2, 4, 8, 16)
BOX_MIN_CELLS: int = 64

"""Class codes of a basin map."""
CLASS_UNDECIDED: int = 0
CLASS_PERIODIC: int = 1
CLASS_ESCAPE_POSITIVE: int = 2
CLASS_ESCAPE_NEGATIVE: int = 3

"""
Colours of the basin pixmap. Periodic cells are coloured by period; periods other than
1 and 3 share one colour.
"""
PERIOD_1_COLOUR: tuple[int, int, int] = (255, 255, 255)
PERIOD_3_COLOUR: tuple[int, int, int] = (0, 160, 0)
OTHER_PERIOD_COLOUR: tuple[int, int, int] = (230, 200, 0)
CLASS_COLOURS: dict[int, tuple[int, int, int]] = {
    CLASS_ESCAPE_POSITIVE: (200, 0, 0),
    CLASS_ESCAPE_NEGATIVE: (0, 0, 200),
    CLASS_UNDECIDED: (0, 0, 0),
}

"""Significant digits used for every float written to CSV, enough for a lossless round trip."""
CSV_DIGITS: int = 17

"""Process exit codes of the command line."""
EXIT_OK: int = 0
EXIT_USAGE: int = 2
EXIT_IO: int = 3
EXIT_DEGENERATE: int = 4
