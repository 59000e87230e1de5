import gmpy2
import pytest
from gmpy2 import mpfr
from hypothesis import given, settings, strategies as st

from flatrenorm.numerics import (
    Bracket,
    BracketError,
    NonMonotoneError,
    PrecisionBudgetExceeded,
    check_budget,
    current_precision,
    decimal_digits,
    real,
    required_precision,
    solve_monotone,
    to_decimal,
    working_precision,
)


def test_working_precision_scopes_context():
    outer = current_precision()
    with working_precision(300):
        assert current_precision() == 300
        with working_precision(80):
            assert current_precision() == 80
        assert current_precision() == 300
    assert current_precision() == outer


def test_precision_floor():
    with pytest.raises(ValueError):
        with working_precision(32):
            pass


def test_real_rejects_binary_floats():
    with pytest.raises(TypeError):
        real(0.1, 128)
    assert real("0.1", 128).precision == 128


def test_decimal_round_trip_is_exact():
    with working_precision(256):
        x = mpfr(1) / 3
        s = to_decimal(x)
        assert mpfr(s, 256) == x


@settings(max_examples=50, deadline=None)
@given(st.integers(min_value=-10**30, max_value=10**30), st.integers(min_value=1, max_value=10**20))
def test_decimal_round_trip_property(num, den):
    with working_precision(200):
        x = mpfr(num) / den
        assert mpfr(to_decimal(x), 200) == x


def test_to_decimal_format():
    assert to_decimal(mpfr("-0.4", 64), 6) == "-4e-1"
    assert to_decimal(mpfr(0)) == "0"


def test_decimal_digits_grows():
    assert decimal_digits(256) > decimal_digits(64)


def test_solve_sqrt2():
    with working_precision(256):
        r = solve_monotone(lambda x: x * x, Bracket(mpfr(1), mpfr(2)), 2, tol=mpfr(2) ** -240)
        assert abs(r - gmpy2.sqrt(mpfr(2))) < mpfr(2) ** -230


def test_solve_decreasing():
    with working_precision(128):
        r = solve_monotone(lambda x: 1 / x, Bracket(mpfr(1), mpfr(4), "decreasing"), mpfr("0.5"), tol=mpfr(2) ** -120)
        assert abs(r - 2) < mpfr(2) ** -100


def test_solve_skewed_root_converges():
    # root extremely close to one end: interpolation alone would crawl
    with working_precision(256):
        f = lambda x: x**40 - mpfr("1e-30")
        r = solve_monotone(f, Bracket(mpfr(0), mpfr(1)), 0, tol=mpfr(0), xtol=mpfr(2) ** -200)
        assert abs(r**40 - mpfr("1e-30")) < mpfr("1e-60")


def test_solve_errors():
    with working_precision(128):
        with pytest.raises(BracketError):
            solve_monotone(lambda x: x, Bracket(mpfr(1), mpfr(2)), 5, tol=0)
        with pytest.raises(NonMonotoneError):
            solve_monotone(lambda x: x, Bracket(mpfr(1), mpfr(2), "decreasing"), mpfr("1.5"), tol=0)
    with pytest.raises(BracketError):
        Bracket(mpfr(2), mpfr(1))


def test_required_precision_and_budget(monkeypatch):
    assert required_precision(12) >= required_precision(6)
    monkeypatch.setenv("FLATRENORM_PRECISION_MAX", "200")
    with pytest.raises(PrecisionBudgetExceeded):
        check_budget(512)
    with pytest.raises(PrecisionBudgetExceeded):
        required_precision(20)


@given(st.integers(min_value=0, max_value=24))
def test_required_precision_monotone(n):
    assert required_precision(n + 1) >= required_precision(n) >= 256
