from fractions import Fraction

import pytest
from gmpy2 import mpfr
from hypothesis import given, settings, strategies as st

from flatrenorm.mapcore import FlatCircleMap, FlatMapParams
from flatrenorm.numerics import working_precision
from flatrenorm.rotation import (
    GOLDEN,
    ContinuedFraction,
    TuningError,
    denominators,
    golden_denominators,
    golden_mean,
    return_times,
    rotation_number,
    rotation_number_of_lift,
    tune,
)

from conftest import BASE


def fib(n):
    a, b = 1, 1
    out = [1]
    for _ in range(n):
        out.append(b)
        a, b = b, a + b
    return out


def test_golden_denominators_are_fibonacci():
    assert golden_denominators(12) == fib(12)
    assert denominators(GOLDEN, 12) == fib(12)
    assert golden_denominators(20)[-1] == 10946


def test_denominators_of_sqrt2_minus_1():
    # [2, 2, 2, ...]: 1, 2, 5, 12, 29
    assert denominators(ContinuedFraction((2,)), 4) == [1, 2, 5, 12, 29]


def test_continued_fraction_rejects_zero():
    with pytest.raises(ValueError):
        ContinuedFraction((1, 0))


@given(st.integers(min_value=2, max_value=40))
def test_fibonacci_ratio_tends_to_golden_mean(n):
    q = golden_denominators(n)
    with working_precision(128):
        err = abs(mpfr(q[n - 1]) / q[n] - golden_mean(128))
    assert err <= mpfr(1) / (q[n] * q[n - 1])


def test_rigid_rotation_rotation_number():
    with working_precision(128):
        a = mpfr(2) / 7
        est = rotation_number_of_lift(lambda x: x + a, 1, 100, mpfr(0))
        assert abs(est.value - a) < mpfr(2) ** -100


def test_periodic_knob_is_exact_three_fifths():
    p = FlatMapParams.from_values(256, **BASE).with_knob("x4", "0.65")
    est = rotation_number(FlatCircleMap(p), 500)
    assert est.exact == Fraction(3, 5)
    assert est.error_bound == 0


@settings(max_examples=12, deadline=None)
@given(st.integers(min_value=0, max_value=100))
def test_rotation_number_monotone_in_knob(k):
    # moving the flat piece to the right lowers the rotation number
    p = FlatMapParams.from_values(256, **BASE)
    lo = mpfr("0.52", 256) + mpfr(k, 256) / 1000
    hi = lo + mpfr("0.01", 256)
    a = rotation_number(FlatCircleMap(p.with_knob("x4", lo)), 400).value
    b = rotation_number(FlatCircleMap(p.with_knob("x4", hi)), 400).value
    assert b <= a + mpfr(2) / 400


def test_tuned_return_times(quick_tuned):
    rt = return_times(quick_tuned, 10)
    assert rt.matches_fibonacci(10)
    assert rt.times == golden_denominators(10)[1:11]
    # closest returns alternate sides after the first
    assert all(a != b for a, b in zip(rt.sides[1:], rt.sides[2:]))


def test_tuned_rotation_number_near_golden(quick_tuned):
    est = rotation_number(quick_tuned, 144)
    assert abs(est.value - golden_mean()) < mpfr("0.01")


def test_untuned_map_terminates(base_map):
    rt = return_times(base_map, 12)
    assert not rt.matches_fibonacci(12)


def test_tune_bad_bracket():
    with pytest.raises(TuningError):
        tune(FlatMapParams.from_values(256, **BASE), "x4", ("0.60", "0.61"), 6)
