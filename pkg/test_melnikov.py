import math

import numpy as np
import pytest
from scipy.integrate import quad

from conftest import make_params
from errors import DomainError, NoRootsError
from melnikov import (critical_amplitude, melnikov_derivative, melnikov_report, melnikov_roots, melnikov_value,
                      quadrature_oracle, root_ratio, sech2_cos_integral)
from model import heteroclinic_spec


def integral_by_quadrature(b: float) -> float:
    value, _ = quad(lambda tau: math.cos(b * tau) / math.cosh(tau) ** 2, 0.0, 40.0, epsabs=1e-13, epsrel=1e-13,
                    limit=200)
    return value


def test_sech2_cos_integral_examples():
    assert sech2_cos_integral(0.0) == 1.0
    assert sech2_cos_integral(math.pi) == pytest.approx(0.07098, abs=1e-4)
    assert sech2_cos_integral(1.0) == pytest.approx(integral_by_quadrature(1.0), abs=1e-10)
    assert sech2_cos_integral(math.pi) == pytest.approx(integral_by_quadrature(math.pi), abs=1e-10)


def test_sech2_cos_integral_large_ratio():
    assert 0.0 < sech2_cos_integral(400.0) < 1e-250
    assert sech2_cos_integral(1e6) == 0.0


@pytest.mark.parametrize('b', [-1.0, math.nan, math.inf])
def test_sech2_cos_integral_rejects(b: float):
    with pytest.raises(DomainError):
        sech2_cos_integral(b)


def test_critical_amplitude():
    assert critical_amplitude(make_params(delta=0.01)) == pytest.approx(0.2656, abs=1e-3)
    assert critical_amplitude(make_params(delta=0.1)) == pytest.approx(2.656, abs=1e-2)
    assert critical_amplitude(make_params(delta=0.0)) == 0.0


def test_melnikov_value_without_forcing():
    for t0 in np.linspace(0.0, 3.0, 7):
        assert melnikov_value(make_params(), t0) == 0.0
        assert melnikov_value(make_params(delta=0.1), t0) == pytest.approx(-4 * 0.1 * 8.0 / 3.0)


def test_roots_vanish(strongly_forced):
    roots = melnikov_roots(strongly_forced, n_periods=3)
    assert len(roots) == 6
    assert roots == sorted(roots)
    assert 0.0 <= roots[0]
    for t0 in roots:
        assert abs(melnikov_value(strongly_forced, t0)) < 1e-12
        assert melnikov_derivative(strongly_forced, t0) != 0.0


def test_undamped_roots_are_evenly_spaced():
    roots = melnikov_roots(make_params(delta=0.0, a=1.0), n_periods=2)
    np.testing.assert_allclose(roots, [0.0, 1.0, 2.0, 3.0], atol=1e-12)


def test_no_roots_at_or_below_threshold():
    params = make_params(delta=0.1, a=1.0)
    with pytest.raises(NoRootsError):
        melnikov_roots(params)

    at_threshold = params.model_copy(update={'a': critical_amplitude(params)})
    with pytest.raises(NoRootsError) as info:
        melnikov_roots(at_threshold)
    assert info.value.threshold == pytest.approx(2.656, abs=1e-2)

    with pytest.raises(NoRootsError):
        melnikov_roots(make_params(delta=0.1))


def test_root_ratio():
    assert root_ratio(make_params(delta=0.1)) is None
    assert root_ratio(make_params(delta=0.0, a=1.0)) == 0.0
    params = make_params(delta=0.1, a=5.0)
    assert root_ratio(params) == pytest.approx(-critical_amplitude(params) / 5.0)


@pytest.mark.parametrize('delta, a', [(0.1, 5.0), (0.1, 2.0), (0.01, 0.35), (0.0, 1.0), (0.2, -6.0)])
def test_report_is_consistent(delta: float, a: float):
    params = make_params(delta=delta, a=a)
    ratio = params.omega1 / heteroclinic_spec(params).Omega
    report = melnikov_report(params)
    assert report.has_simple_roots == (abs(a) > report.threshold_a) == (abs(report.root_ratio) < 1)
    for t0 in np.linspace(0.0, 2.0, 9):
        assert report.value(t0, ratio) == pytest.approx(melnikov_value(params, t0), abs=1e-12)
    if report.has_simple_roots:
        for t0 in report.principal_roots:
            assert abs(report.value(t0, ratio)) < 1e-12
    else:
        assert report.principal_roots is None


def test_report_without_forcing():
    report = melnikov_report(make_params(delta=0.1))
    assert not report.has_simple_roots
    assert report.root_ratio is None
    assert report.amplitude_term == 0.0


def test_closed_form_matches_quadrature(rng):
    for _ in range(50):
        params = make_params(delta=rng.uniform(0.0, 0.2), a=rng.uniform(0.0, 8.0))
        t0 = rng.uniform(0.0, 2.0)
        assert abs(melnikov_value(params, t0) - quadrature_oracle(params, t0)) < 1e-9


def test_sech2_cos_integral_near_zero():
    assert abs(sech2_cos_integral(1e-8) - 1.0) < 1e-7


@pytest.mark.parametrize('delta', [0.01, 0.05, 0.1])
def test_threshold_is_linear_in_damping(delta: float):
    doubled = critical_amplitude(make_params(delta=2 * delta))
    assert doubled == pytest.approx(2 * critical_amplitude(make_params(delta=delta)), rel=1e-12)


def test_value_examples():
    assert melnikov_value(make_params(delta=1.0), 0.0) == pytest.approx(-32.0 / 3.0, abs=1e-9)
    assert quadrature_oracle(make_params(delta=1.0), 0.0) == pytest.approx(-10.6667, abs=1e-4)
    assert melnikov_value(make_params(delta=0.0, a=1.0), 0.0) == 0.0
    assert abs(quadrature_oracle(make_params(delta=0.0, a=1.0), 0.0)) < 1e-9


@pytest.mark.parametrize('delta', [0.0, 0.01, 0.05, 0.1])
def test_roots_exist_exactly_above_threshold(delta: float):
    for a in np.linspace(0.0, 8.0, 33):
        params = make_params(delta=delta, a=a)
        if abs(a) > critical_amplitude(params):
            roots = melnikov_roots(params)
            assert len(roots) == 2
            for t0 in roots:
                assert abs(melnikov_value(params, t0)) < 1e-12
        else:
            with pytest.raises(NoRootsError):
                melnikov_roots(params)


def test_roots_need_at_least_one_period(strongly_forced):
    with pytest.raises(DomainError):
        melnikov_roots(strongly_forced, n_periods=0)
