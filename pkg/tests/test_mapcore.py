import warnings

import mpmath
import pytest
from gmpy2 import mpfr
from hypothesis import given, settings, strategies as st

from flatrenorm import diffeo as df
from flatrenorm.mapcore import (
    DomainError,
    FlatCircleMap,
    FlatMapParams,
    JointWarning,
    RangeError,
    UndefinedSchwarzian,
    validate,
)
from flatrenorm.numerics import working_precision

from conftest import BASE, plain_map

mpmath.mp.prec = 256
P = {k: mpmath.mpf(v) for k, v in BASE.items()}


def oracle(x):
    """Direct evaluation of the normal form with mpmath."""
    x = mpmath.mpf(x)
    x1, x2, x3, x4, s, l1, l2 = (P[k] for k in ("x1", "x2", "x3", "x4", "s", "ell1", "ell2"))
    if x < 0:
        u = (x1 - x) / x1
        q = (((1 - s) * u + s) ** l2 - s**l2) / (1 - s**l2)
        return (1 - x2) * q + x2
    if x < x3:
        return x1 * ((x3 - x) / x3) ** l1
    if x < x4:
        return mpmath.mpf(0)
    return x2 * ((x - x4) / (1 - x4)) ** l2


fracs = st.integers(min_value=0, max_value=10**6).map(lambda k: k / 10**6)


@settings(max_examples=100, deadline=None)
@given(fracs)
def test_eval_matches_direct_formula(base_map, t):
    with working_precision(256):
        x = min(base_map.x1 + base_map.length * mpfr(repr(t)), mpfr(1))
        got = base_map(x)
    want = oracle(mpmath.mpf(str(x)))
    assert abs(mpmath.mpf(str(got)) - want) < mpmath.mpf(2) ** -240


def test_joint_values(base_map):
    f = base_map
    assert f(f.x1) == f.x2
    assert f(0) == f.x1  # ties go to the right-hand branch
    assert f.branch("f1", 0) == 1
    assert f(f.x3) == 0 and f(f.x4) == 0
    assert f(1) == f.x2


def test_lift_degree_one(base_map):
    f = base_map
    with working_precision(256):
        assert f.lift(1) - f.lift(f.x1) == f.length
        assert f.lift(mpfr("-0.000001")) <= f.lift(0)


@settings(max_examples=60, deadline=None)
@given(st.sampled_from(["f1", "f2", "f4"]), fracs)
def test_inverse_round_trip(base_map, name, t):
    f = base_map
    lo, hi = f.branch_image(name)
    with working_precision(256):
        y = lo + (hi - lo) * mpfr(repr(t))
        x = f.invert_branch(name, y)
        assert abs(f.branch(name, x) - y) <= mpfr(2) ** -200


@pytest.mark.parametrize("name", ["f1", "f2", "f4"])
def test_solve_agrees_with_analytic_inverse(base_map, name):
    f = base_map
    lo, hi = f.branch_image(name)
    with working_precision(256):
        y = (2 * lo + hi) / 3
        a = f.invert_branch(name, y)
        b = f.invert_branch(name, y, method="solve")
        assert abs(a - b) < mpfr(2) ** -200


def test_inverse_out_of_range(base_map):
    with pytest.raises(RangeError):
        base_map.invert_branch("f4", mpfr("0.5"))


def test_domain_error(base_map):
    with pytest.raises(DomainError):
        base_map(mpfr("1.5"))


def test_derivative_matches_closed_form(base_map):
    f = base_map
    with working_precision(256):
        x = mpfr("0.85")
        # f4' = x2 ell2 t^(ell2-1) / (1 - x4)
        t = (x - f.x4) / (1 - f.x4)
        want = f.x2 * f.ell2 * t ** (f.ell2 - 1) / (1 - f.x4)
        assert abs(f.derivative(x) - want) < mpfr(2) ** -240


def test_joint_warning_and_flat_schwarzian(base_map):
    with pytest.warns(JointWarning):
        base_map.derivative(0)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        base_map.derivative(0, side="left")
    with pytest.raises(UndefinedSchwarzian):
        base_map.schwarzian(mpfr("0.6"))


@settings(max_examples=60, deadline=None)
@given(st.sampled_from(["f1", "f2", "f4"]), st.integers(min_value=1, max_value=999))
def test_negative_schwarzian_on_branches(base_map, name, k):
    a, b = base_map.branch_domain(name)
    with working_precision(256):
        x = a + (b - a) * k / 1000
    assert base_map.schwarzian(x) < 0


def test_validate_passes_base(base_map):
    rep = validate(base_map, grid=512, schwarzian_samples=16)
    assert rep.passed, rep.failures()


@pytest.mark.parametrize(
    "over,failing",
    [
        ({"x2": "0.6"}, "critical_value_left_of_flat"),
        ({"ell1": "1.7"}, "exponents"),
        ({"ell2": "2.5"}, "exponents"),
        ({"x4": "0.4"}, "sigma_x"),
        ({"s": "1.2"}, "sigma_x"),
    ],
)
def test_validate_reports_violations(over, failing):
    rep = validate(plain_map(**over), grid=128, schwarzian_samples=4)
    assert not rep.passed
    assert failing in [c.name for c in rep.failures()]


def test_json_round_trip_preserves_bits(base_map):
    obj = base_map.to_json()
    g = FlatCircleMap.from_json(obj, 256)
    with working_precision(256):
        for x in ("-0.3", "0.1", "0.9"):
            assert g(mpfr(x)) == base_map(mpfr(x))


def test_json_precision_holds_long_strings():
    obj = dict(BASE, x4="0." + "7" * 120)
    bits = FlatMapParams.json_precision(obj)
    assert bits >= 120 * 3.32
    p = FlatMapParams.from_json(obj, bits)
    assert p.x4 != mpfr(obj["x4"], 256)


def test_with_knob_comoves_and_keeps_precision():
    p = FlatMapParams.from_values(512, **BASE)
    q = p.with_knob("x4", "0.71")
    assert q.x4.precision == 512
    with working_precision(512):
        assert q.x4 - q.x3 == p.x4 - p.x3
    r = p.with_knob("x4", "0.71", comove=False)
    assert r.x3 == p.x3


def test_nonidentity_diffeo_map():
    f = plain_map(phi={"kind": "moebius", "a": "1.2"})
    assert validate(f, grid=256, schwarzian_samples=8).passed
    with working_precision(256):
        y = mpfr("0.5")
        x = f.invert_branch("f1", y)
        assert abs(f(x) - y) < mpfr(2) ** -200
