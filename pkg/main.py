"""Command line of the demand-supply dynamics toolkit"""
import argparse
import contextlib
import logging
import math
import os
import sys
from typing import Callable, Iterator, Optional, Sequence, TextIO

from dotenv import load_dotenv

from basin import GridSpec, basin_summary, box_count_boundary, compute_basin, scan_amplitudes
from consts import *
from errors import DegenerateBoundaryError, RefinementError
from formats import (format_number, params_comment, read_basin_csv, write_basin_csv, write_basin_ppm, write_cycle_csv,
                     write_points_csv, write_report, write_trajectory_csv)
from integrator import IntegratorOptions, Method, Sampling, Status, integrate
from melnikov import melnikov_report
from model import ModelParams, State2, fixed_points, price_floor_violations, separatrix_frame
from poincare import AttractorKind, PoincareOptions, classify, refine_cycle, trace_cycle

load_dotenv('.env')
# getenv reads always strings, which are truthy if not empty - thus checking for common false-ish tokens
DEV_MODE = os.getenv('DEV_MODE', False) not in {False, 'False', 'false', '0'}
LOG_LEVEL = 'DEBUG' if DEV_MODE else os.getenv('LOG_LEVEL', 'INFO').upper()
BASIN_WORKERS = int(os.getenv('BASIN_WORKERS', os.cpu_count() or 1))

logging.basicConfig(level=LOG_LEVEL, format='[%(asctime)s] [%(levelname)s] %(name)s: %(message)s')
logger = logging.getLogger(__name__)


def parse_omega(text: str) -> float:
    """A frequency given as a number or as the token `pi`."""
    if text.strip().lower() == 'pi':
        return math.pi
    try:
        return float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f'expected a number or pi, got {text!r}')


def parse_floats(count: Optional[int]) -> Callable[[str], tuple[float, ...]]:
    def parse(text: str) -> tuple[float, ...]:
        try:
            values = tuple(float(item) for item in text.split(','))
        except ValueError:
            raise argparse.ArgumentTypeError(f'expected comma separated numbers, got {text!r}')
        if count is not None and len(values) != count:
            raise argparse.ArgumentTypeError(f'expected {count} values, got {len(values)}')
        return values

    return parse


def parse_ints(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(item) for item in text.split(','))
    except ValueError:
        raise argparse.ArgumentTypeError(f'expected comma separated integers, got {text!r}')


@contextlib.contextmanager
def open_output(path: Optional[str]) -> Iterator[TextIO]:
    """Writes to `path`, or to standard output when no path (or `-`) is given."""
    if path is None or path == '-':
        yield sys.stdout
    else:
        with open(path, 'w', newline='') as stream:
            yield stream
        logger.info(f'wrote {path}')


# ---------------------------------------------------------------------------------------------------------------


def model_params(args: argparse.Namespace) -> ModelParams:
    return ModelParams(alpha=args.alpha, beta=args.beta, beta1=args.beta1, gamma=args.gamma,
                       delta=args.delta, a=getattr(args, 'a', None) or 0.0, omega1=args.omega1)


def integrator_options(args: argparse.Namespace) -> IntegratorOptions:
    return IntegratorOptions(method=args.method, step=args.step, escape_radius=args.escape_radius)


def poincare_options(args: argparse.Namespace, params: ModelParams,
                     sweep_iterations: Optional[int] = None) -> PoincareOptions:
    """Period map options from the flags; sweeps of well damped systems use the shorter sweep budget."""
    max_iterations = args.max_iterations
    if max_iterations is None and sweep_iterations is not None and params.delta > LOW_DAMPING_THRESHOLD:
        max_iterations = sweep_iterations
    return PoincareOptions.for_params(params, phase=args.phase, transient=args.transient,
                                      max_iterations=max_iterations, period_max=args.period_max,
                                      match_tol=args.match_tol, confirm_count=args.confirm_count,
                                      integrator=integrator_options(args))


def cmd_simulate(args: argparse.Namespace) -> int:
    params = model_params(args)
    opts = integrator_options(args)
    outcome = integrate(params, State2(p=args.p0, q=args.q0), args.t0, args.t_end, opts,
                        Sampling.every(args.dt or params.period / STEPS_PER_PERIOD))
    if args.pd is not None and outcome.trajectory is not None:
        report = price_floor_violations(outcome.trajectory, args.pd)
        if not report.valid:
            logger.warning(f'price below zero at {report.violations} samples, first at t={report.first_violation_time}')

    escape = None
    if outcome.status is Status.ESCAPED:
        escape = (outcome.escape_sign, outcome.final_time)
    elif outcome.status is Status.BUDGET_EXHAUSTED:
        logger.warning(f'stopped at t={outcome.final_time} after {opts.max_steps} steps')
    with open_output(args.out) as stream:
        write_trajectory_csv(stream, outcome.trajectory, params_comment(params), escape)
    return EXIT_OK


def cmd_melnikov(args: argparse.Namespace) -> int:
    params = model_params(args)
    report = melnikov_report(params)
    values = {'threshold_a': report.threshold_a, 'integral_I': report.integral_I,
              'offset_term': report.offset_term}
    if args.a is not None:
        values.update(amplitude_term=report.amplitude_term, root_ratio=report.root_ratio,
                      has_simple_roots=report.has_simple_roots, principal_roots=report.principal_roots)
    print(params_comment(params))
    write_report(sys.stdout, values)
    return EXIT_OK


def cmd_classify(args: argparse.Namespace) -> int:
    params = model_params(args)
    opts = poincare_options(args, params)
    result = classify(params, State2(p=args.p0, q=args.q0), opts)
    print(params_comment(params))
    print(f'kind={result.kind.value} period={result.period} iters={result.iterations_used}')
    if result.kind is not AttractorKind.PERIODIC:
        return EXIT_OK

    for index, point in enumerate(result.cycle):
        print(f'point={index},{format_number(point.p)},{format_number(point.q)}')
    start = result.cycle[0]
    if args.refine:
        try:
            refined = refine_cycle(params, start, result.period, opts)
            start = refined.point
            print(f'refined={format_number(start.p)},{format_number(start.q)} residual={refined.residual:.3e}')
        except RefinementError as ex:
            logger.warning(f'refinement failed, keeping the detected cycle point: {ex}')
    if args.out_cycle:
        with open_output(args.out_cycle) as stream:
            rows = ((result.period, index, point.p, point.q) for index, point in enumerate(result.cycle))
            write_cycle_csv(stream, rows)
    if args.out_orbit:
        orbit = trace_cycle(params, start, result.period, opts)
        with open_output(args.out_orbit) as stream:
            write_trajectory_csv(stream, orbit, params_comment(params))
    return EXIT_OK


def basin_grid(args: argparse.Namespace) -> GridSpec:
    p_min, p_max, q_min, q_max = args.window
    nx, ny = args.res
    return GridSpec(p_min=p_min, p_max=p_max, q_min=q_min, q_max=q_max, nx=nx, ny=ny)


def cmd_basin(args: argparse.Namespace) -> int:
    params = model_params(args)
    opts = poincare_options(args, params, BASIN_MAX_ITERATIONS)
    basin = compute_basin(params, basin_grid(args), opts, args.workers or BASIN_WORKERS)
    with open_output(args.out_csv) as stream:
        write_basin_csv(stream, basin)
    with open(args.out_ppm, 'wb') as stream:
        write_basin_ppm(stream, basin)
    logger.info(f'wrote {args.out_ppm}')

    summary = basin_summary(basin)
    print(params_comment(params))
    write_report(sys.stdout, {'total': summary.total}
                 | {f'count_{kind}': count for kind, count in summary.class_counts.items()}
                 | {f'count_period_{k}': count for k, count in summary.period_counts.items()})
    return EXIT_OK


def cmd_fractal(args: argparse.Namespace) -> int:
    with open(args.input) as stream:
        try:
            basin = read_basin_csv(stream)
        except ValueError as ex:
            logger.error(f'cannot read basin map {args.input}: {ex}')
            return EXIT_IO
    try:
        result = box_count_boundary(basin, args.scales, args.by_period)
    except DegenerateBoundaryError as ex:
        print(f'error: {ex}', file=sys.stderr)
        return EXIT_DEGENERATE
    write_report(sys.stdout, result.model_dump())
    return EXIT_OK


def cmd_scan(args: argparse.Namespace) -> int:
    params = model_params(args)
    opts = poincare_options(args, params, BASIN_MAX_ITERATIONS)
    rows = scan_amplitudes(params, args.a_values, basin_grid(args), opts, args.workers or BASIN_WORKERS)
    print(params_comment(params))
    for row in rows:
        write_report(sys.stdout, {'a': row.a, 'threshold_a': row.threshold_a, 'above_threshold': row.above_threshold,
                                  'periods': row.periods or 'none'})
    return EXIT_OK


def cmd_separatrix(args: argparse.Namespace) -> int:
    params = model_params(args)
    with open_output(args.out) as stream:
        write_points_csv(stream, separatrix_frame(params, args.points), ('p', 'q'))
    return EXIT_OK


def cmd_fixed_points(args: argparse.Namespace) -> int:
    params = model_params(args)
    report = fixed_points(params, args.pd)
    print(params_comment(params))
    write_report(sys.stdout, {
        'equilibrium': (report.equilibrium.p, report.equilibrium.q),
        'saturation': (report.saturation.p, report.saturation.q),
        'collectability': (report.collectability.p, report.collectability.q),
        'center_eigenvalues': report.center_eigenvalues[0],
        'saddle_eigenvalues': report.saddle_eigenvalues[0],
        'condition_sc2_holds': report.condition_sc2_holds,
        'saturation_price': report.saturation_price,
        'collectability_price': report.collectability_price,
    })
    return EXIT_OK


# ---------------------------------------------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    model = argparse.ArgumentParser(add_help=False)
    group = model.add_argument_group('model coefficients')
    group.add_argument('--alpha', type=float, default=DEFAULT_ALPHA, help='price response rate')
    group.add_argument('--beta', type=float, default=DEFAULT_BETA, help='demand response rate')
    group.add_argument('--beta1', type=float, default=DEFAULT_BETA1, help='collectability/saturation coefficient')
    group.add_argument('--gamma', type=float, default=DEFAULT_GAMMA, help='supply price response rate')
    group.add_argument('--omega1', type=parse_omega, default=DEFAULT_OMEGA1, help='forcing frequency (number or pi)')
    group.add_argument('--delta', type=float, required=True, help='supply gap response (damping)')

    forced = argparse.ArgumentParser(add_help=False)
    forced.add_argument('--a', type=float, required=True, help='forcing amplitude')

    integration = argparse.ArgumentParser(add_help=False)
    group = integration.add_argument_group('integration')
    group.add_argument('--method', type=Method, choices=list(Method), default=Method.RK4)
    group.add_argument('--step', type=float, help=f'integration step (default T/{STEPS_PER_PERIOD})')
    group.add_argument('--escape-radius', type=float, default=ESCAPE_RADIUS)

    section = argparse.ArgumentParser(add_help=False, parents=[integration])
    group = section.add_argument_group('period map')
    group.add_argument('--phase', type=float, help='section time offset in [0, T)')
    group.add_argument('--transient', type=int, help='iterates discarded before matching')
    group.add_argument('--max-iterations', type=int, help='iterate budget')
    group.add_argument('--period-max', type=int, help='largest period tested')
    group.add_argument('--match-tol', type=float, help='cycle closing distance')
    group.add_argument('--confirm-count', type=int, help='consecutive matches required')

    sweep = argparse.ArgumentParser(add_help=False)
    sweep.add_argument('--window', type=parse_floats(4), default=BASIN_WINDOW, help='pmin,pmax,qmin,qmax')
    sweep.add_argument('--workers', type=int, help='worker processes (default BASIN_WORKERS or CPU count)')

    parser = argparse.ArgumentParser(prog='demand-supply', description='Demand-supply dynamics toolkit')
    commands = parser.add_subparsers(dest='command', required=True)

    command = commands.add_parser('simulate', parents=[model, forced, integration], help='integrate a trajectory')
    command.add_argument('--p0', type=float, required=True)
    command.add_argument('--q0', type=float, required=True)
    command.add_argument('--t0', type=float, default=0.0)
    command.add_argument('--t-end', type=float, required=True)
    command.add_argument('--dt', type=float, help=f'sample interval (default T/{STEPS_PER_PERIOD})')
    command.add_argument('--pd', type=float, help='demand threshold price, enables the price floor check')
    command.add_argument('--out', help='CSV path (default standard output)')
    command.set_defaults(handler=cmd_simulate)

    command = commands.add_parser('melnikov', parents=[model], help='Melnikov threshold and roots')
    command.add_argument('--a', type=float, help='forcing amplitude')
    command.set_defaults(handler=cmd_melnikov)

    command = commands.add_parser('classify', parents=[model, forced, section], help='attractor of one point')
    command.add_argument('--p0', type=float, required=True)
    command.add_argument('--q0', type=float, required=True)
    command.add_argument('--refine', action='store_true', help='sharpen the cycle by Newton iteration')
    command.add_argument('--out-cycle', help='CSV of the cycle points')
    command.add_argument('--out-orbit', help='CSV of the continuous periodic orbit')
    command.set_defaults(handler=cmd_classify)

    command = commands.add_parser('basin', parents=[model, forced, section, sweep], help='basins of attraction')
    command.add_argument('--res', type=parse_ints, default=BASIN_RESOLUTION, help='nx,ny')
    command.add_argument('--out-csv', default='basin.csv')
    command.add_argument('--out-ppm', default='basin.ppm')
    command.set_defaults(handler=cmd_basin)

    command = commands.add_parser('fractal', help='box-counting dimension of a basin boundary')
    command.add_argument('--in', dest='input', required=True, help='basin CSV')
    command.add_argument('--scales', type=parse_ints, default=BOX_SCALES)
    command.add_argument('--by-period', action='store_true',
                         help='also count borders between periodic basins of different periods')
    command.set_defaults(handler=cmd_fractal)

    command = commands.add_parser('scan', parents=[model, section, sweep], help='attractors across amplitudes')
    command.add_argument('--a-values', type=parse_floats(None), required=True, help='comma separated amplitudes')
    command.add_argument('--res', type=parse_ints, default=(50, 50), help='nx,ny of the coarse sweep')
    command.set_defaults(handler=cmd_scan)

    command = commands.add_parser('separatrix', parents=[model], help='heteroclinic cycle as CSV')
    command.add_argument('--points', type=int, default=200, help='samples per branch')
    command.add_argument('--out', help='CSV path (default standard output)')
    command.set_defaults(handler=cmd_separatrix)

    command = commands.add_parser('fixed-points', parents=[model], help='fixed points and eigenvalues')
    command.add_argument('--pd', type=float, help='demand threshold price')
    command.set_defaults(handler=cmd_fixed_points)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as ex:
        return int(ex.code or 0)

    try:
        return args.handler(args)
    except OSError as ex:
        logger.error(f'I/O failure: {ex}')
        return EXIT_IO
    except ValueError as ex:
        # pydantic validation and domain errors are both ValueErrors
        parser.print_usage(sys.stderr)
        print(f'error: {ex}', file=sys.stderr)
        return EXIT_USAGE
    except Exception as ex:
        logger.error(f'An exception was raised while running {args.command}:\n{ex}')
        raise


if __name__ == '__main__':
    sys.exit(main())
