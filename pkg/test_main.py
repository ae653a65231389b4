import io
import math

import numpy as np
import pytest

from basin import BasinMap, box_count_boundary
from consts import CLASS_ESCAPE_NEGATIVE, CLASS_ESCAPE_POSITIVE, CLASS_PERIODIC, EXIT_DEGENERATE, EXIT_IO, EXIT_OK, \
    EXIT_USAGE
from conftest import make_map, make_params
from formats import (basin_pixels, format_number, params_comment, read_basin_csv, write_basin_csv, write_basin_ppm,
                     write_report, write_trajectory_csv)
from main import main, parse_omega
from model import Trajectory

FORCED = ['--delta', '0.1', '--a', '5']


def data_lines(text: str) -> list[str]:
    return [line for line in text.splitlines() if line and not line.startswith('#')]


def report_values(text: str) -> dict[str, str]:
    return dict(line.split('=', 1) for line in data_lines(text))


def test_format_number_is_lossless():
    for value in (math.pi, 0.1, -2.5e-17, 1e300):
        assert float(format_number(value)) == value
    assert format_number(0.0) == '0'


def test_write_report():
    stream = io.StringIO()
    write_report(stream, {'flag': True, 'none': None, 'pair': (1.5, -2.0), 'n': 3})
    assert stream.getvalue() == 'flag=true\nnone=none\npair=1.5,-2\nn=3\n'


def test_params_comment_echoes_defaults():
    comment = params_comment(make_params(delta=0.1, a=5.0))
    assert comment.startswith('# alpha=1 beta=1 beta1=0.25 gamma=1 delta=0.10000000000000001 a=5 omega1=3.14159')


def test_trajectory_csv_with_escape():
    traj = Trajectory(times=np.array([0.0, 0.5]), states=np.array([[1.0, 2.0], [3.0, 4.0]]))
    stream = io.StringIO()
    write_trajectory_csv(stream, traj, '# test', escape=(-1, 0.75))
    assert stream.getvalue() == '# test\nt,p,q\n0,1,2\n0.5,3,4\n# escaped sign=-1 t=0.75\n'


def test_basin_csv_round_trip(half_plane_map: BasinMap):
    stream = io.StringIO()
    write_basin_csv(stream, half_plane_map)
    lines = stream.getvalue().splitlines()
    assert lines[0] == 'i,j,p0,q0,class,period'
    assert len(lines) == 64 * 64 + 1
    assert lines[1].startswith('0,0,')

    stream.seek(0)
    restored = read_basin_csv(stream)
    np.testing.assert_array_equal(restored.classes, half_plane_map.classes)
    np.testing.assert_array_equal(restored.periods, half_plane_map.periods)
    assert restored.grid.nx == 64 and restored.grid.ny == 64
    assert restored.grid.p_min == pytest.approx(-6.0) and restored.grid.q_max == pytest.approx(6.0)
    assert box_count_boundary(restored) == box_count_boundary(half_plane_map)


def test_read_basin_csv_rejects_bad_input():
    with pytest.raises(ValueError):
        read_basin_csv(io.StringIO('a,b,c\n1,2,3\n'))
    with pytest.raises(ValueError):
        read_basin_csv(io.StringIO('i,j,p0,q0,class,period\n'))
    with pytest.raises(ValueError):
        read_basin_csv(io.StringIO('i,j,p0,q0,class,period\n0,0,0,0,2,0\n1,1,1,1,2,0\n'))
    with pytest.raises(ValueError):
        read_basin_csv(io.StringIO('i,j,p0,q0,class,period\n0,0,0,0,2,0\n0,0,0,0,2,0\n1,0,1,0,2,0\n1,1,1,1,2,0\n'))


def test_basin_image():
    classes = np.array([[CLASS_PERIODIC, CLASS_PERIODIC], [CLASS_ESCAPE_POSITIVE, CLASS_ESCAPE_NEGATIVE]])
    basin = make_map(classes, np.array([[1, 3], [0, 0]]))
    pixels = basin_pixels(basin)
    assert pixels.shape == (2, 2, 3)
    assert tuple(pixels[0, 0]) == (200, 0, 0)
    assert tuple(pixels[0, 1]) == (0, 0, 200)
    assert tuple(pixels[1, 0]) == (255, 255, 255)
    assert tuple(pixels[1, 1]) == (0, 160, 0)

    stream = io.BytesIO()
    write_basin_ppm(stream, basin)
    data = stream.getvalue()
    assert data.startswith(b'P6\n2 2\n255\n')
    assert len(data) == len(b'P6\n2 2\n255\n') + 12


def test_parse_omega():
    assert parse_omega('pi') == math.pi
    assert parse_omega(' PI ') == math.pi
    assert parse_omega('2.5') == 2.5


def test_simulate_equilibrium(capsys):
    assert main(['simulate', '--delta', '0', '--a', '0', '--p0', '0', '--q0', '0', '--t-end', '10']) == EXIT_OK
    out = capsys.readouterr().out
    assert out.startswith('# alpha=1 beta=1 beta1=0.25 gamma=1 delta=0 a=0 omega1=3.14159')
    rows = data_lines(out)
    assert rows[0] == 't,p,q'
    assert len(rows) == 1002
    assert all(row.endswith(',0,0') for row in rows[1:])
    assert rows[-1] == '10,0,0'


def test_simulate_escape(capsys):
    assert main(['simulate', *FORCED, '--p0', '30', '--q0', '30', '--t-end', '100']) == EXIT_OK
    last = capsys.readouterr().out.splitlines()[-1]
    assert last.startswith('# escaped sign=+1 t=')


def test_simulate_to_file(tmp_path):
    out = tmp_path / 'orbit.csv'
    assert main(['simulate', '--delta', '0.1', '--a', '2.6', '--p0', '0', '--q0', '0.1', '--t-end', '4',
                 '--dt', '0.5', '--method', 'rk45', '--out', str(out)]) == EXIT_OK
    rows = data_lines(out.read_text())
    assert len(rows) == 10
    assert rows[-1].startswith('4,')


def test_simulate_usage_errors(capsys):
    assert main(['simulate', '--delta', '0.1']) == EXIT_USAGE
    assert main(['simulate', '--delta', '-1', '--a', '0', '--p0', '0', '--q0', '0', '--t-end', '1']) == EXIT_USAGE
    assert main(['simulate', '--delta', '0', '--a', '0', '--p0', '0', '--q0', '0', '--t-end', '0']) == EXIT_USAGE
    assert 'usage' in capsys.readouterr().err


def test_simulate_unwritable_output(tmp_path):
    target = tmp_path / 'missing' / 'orbit.csv'
    assert main(['simulate', '--delta', '0', '--a', '0', '--p0', '0', '--q0', '0', '--t-end', '1',
                 '--out', str(target)]) == EXIT_IO


def test_melnikov_command(capsys):
    assert main(['melnikov', '--delta', '0.01']) == EXIT_OK
    values = report_values(capsys.readouterr().out)
    assert float(values['threshold_a']) == pytest.approx(0.2656, abs=1e-3)
    assert 'has_simple_roots' not in values

    assert main(['melnikov', '--delta', '0.1']) == EXIT_OK
    assert float(report_values(capsys.readouterr().out)['threshold_a']) == pytest.approx(2.656, abs=1e-2)

    assert main(['melnikov', '--delta', '0', '--a', '1']) == EXIT_OK
    values = report_values(capsys.readouterr().out)
    assert values['threshold_a'] == '0'
    assert values['has_simple_roots'] == 'true'
    assert len(values['principal_roots'].split(',')) == 2


def test_classify_command(capsys):
    assert main(['classify', *FORCED, '--p0', '0', '--q0', '40']) == EXIT_OK
    lines = data_lines(capsys.readouterr().out)
    assert lines == ['kind=escape_positive period=0 iters=1']


def test_classify_command_periodic(tmp_path, capsys):
    cycle = tmp_path / 'cycle.csv'
    orbit = tmp_path / 'orbit.csv'
    assert main(['classify', '--delta', '0.5', '--a', '0', '--p0', '0.5', '--q0', '0', '--transient', '20',
                 '--max-iterations', '100', '--refine', '--out-cycle', str(cycle), '--out-orbit', str(orbit)]) \
        == EXIT_OK
    lines = data_lines(capsys.readouterr().out)
    assert lines[0].startswith('kind=periodic period=1 ')
    assert lines[1].startswith('point=0,')
    assert lines[2].startswith('refined=')
    assert cycle.read_text().splitlines()[0] == 'k,index,p,q'
    assert len(cycle.read_text().splitlines()) == 2
    assert len(data_lines(orbit.read_text())) == 202


def test_basin_command_smoke(tmp_path, capsys):
    csv_path = tmp_path / 'basin.csv'
    ppm_path = tmp_path / 'basin.ppm'
    assert main(['basin', *FORCED, '--res', '4,4', '--transient', '2', '--max-iterations', '5', '--workers', '1',
                 '--out-csv', str(csv_path), '--out-ppm', str(ppm_path)]) == EXIT_OK
    assert len(csv_path.read_text().splitlines()) == 17
    assert ppm_path.read_bytes().startswith(b'P6\n4 4\n255\n')
    assert len(ppm_path.read_bytes()) == len(b'P6\n4 4\n255\n') + 48
    values = report_values(capsys.readouterr().out)
    assert values['total'] == '16'
    assert sum(int(values[f'count_{kind}']) for kind in
               ('periodic', 'escape_positive', 'escape_negative', 'undecided')) == 16


def test_basin_command_rejects_bad_window(tmp_path):
    assert main(['basin', *FORCED, '--window', '1,-1,0,1', '--res', '4,4', '--workers', '1',
                 '--out-csv', str(tmp_path / 'b.csv'), '--out-ppm', str(tmp_path / 'b.ppm')]) == EXIT_USAGE
    assert main(['basin', *FORCED, '--window', '1,2,3']) == EXIT_USAGE


def test_fractal_command(tmp_path, capsys, half_plane_map: BasinMap, single_class_map: BasinMap):
    half_plane = tmp_path / 'half.csv'
    with open(half_plane, 'w') as stream:
        write_basin_csv(stream, half_plane_map)
    assert main(['fractal', '--in', str(half_plane)]) == EXIT_OK
    values = report_values(capsys.readouterr().out)
    assert float(values['dimension']) == pytest.approx(1.0, abs=0.1)
    assert values['counts'] == '128,64,32,16,8'

    flat = tmp_path / 'flat.csv'
    with open(flat, 'w') as stream:
        write_basin_csv(stream, single_class_map)
    assert main(['fractal', '--in', str(flat)]) == EXIT_DEGENERATE

    assert main(['fractal', '--in', str(tmp_path / 'nowhere.csv')]) == EXIT_IO


def test_fractal_command_by_period(tmp_path, capsys):
    classes = np.full((64, 64), CLASS_PERIODIC)
    periods = np.ones((64, 64))
    periods[:, 32:] = 3
    path = tmp_path / 'periods.csv'
    with open(path, 'w') as stream:
        write_basin_csv(stream, make_map(classes, periods))
    assert main(['fractal', '--in', str(path)]) == EXIT_DEGENERATE
    assert main(['fractal', '--in', str(path), '--by-period']) == EXIT_OK
    assert report_values(capsys.readouterr().out)['counts'] == '128,64,32,16,8'


def test_scan_command(capsys):
    assert main(['scan', '--delta', '0.1', '--a-values', '1,5', '--res', '2,2', '--transient', '2',
                 '--max-iterations', '5', '--workers', '1']) == EXIT_OK
    lines = data_lines(capsys.readouterr().out)
    assert lines[0] == 'a=1'
    assert lines[2] == 'above_threshold=false'
    assert lines[4] == 'a=5'
    assert lines[6] == 'above_threshold=true'


def test_separatrix_command(capsys):
    assert main(['separatrix', '--delta', '0', '--points', '10']) == EXIT_OK
    rows = data_lines(capsys.readouterr().out)
    assert rows[0] == 'p,q'
    assert len(rows) == 23


def test_fixed_points_command(capsys):
    assert main(['fixed-points', '--delta', '0', '--pd', '3']) == EXIT_OK
    values = report_values(capsys.readouterr().out)
    assert values['equilibrium'] == '0,0'
    assert values['saddle_eigenvalues'] == '2,0'
    assert values['condition_sc2_holds'] == 'true'


def test_omega_token(capsys):
    assert main(['melnikov', '--delta', '0.1', '--omega1', 'pi']) == EXIT_OK
    assert 'omega1=3.1415926535897931' in capsys.readouterr().out
