import pytest
from gmpy2 import mpfr
from hypothesis import given, settings, strategies as st

from flatrenorm.numerics import working_precision
from flatrenorm.orbit import CombinatoricsError, critical_orbit
from flatrenorm.partition import (
    PartitionError,
    attractor_cover,
    backward_chain,
    boundary_on_orbit,
    build_partition,
    check_tiling,
    forward_orbit,
    gap_between,
    preimage_interval,
    refines,
    removed_length,
    scaling_ratio,
    scaling_ratios,
)
from flatrenorm.renorm import renormalize
from flatrenorm.rotation import golden_denominators


@pytest.fixture(scope="module")
def quick_run(quick_tuned):
    return renormalize(quick_tuned, 8)


def test_forward_orbit_start(quick_tuned):
    f = quick_tuned
    o = forward_orbit(f, 3)
    assert o[1] == 0 and o[2] == f.x1 and o[3] == f.x2


def test_preimages_nest_into_branches(quick_tuned):
    f = quick_tuned
    with f.context():
        for a, b in backward_chain(f, 20):
            assert f.x1 <= a < b <= 1
        # applying f to a pull-back gives back the previous interval
        a, b = preimage_interval(f, 5)
        c, d = preimage_interval(f, 4)
        assert abs(f(a) - c) < mpfr(2) ** -200 and abs(f(b) - d) < mpfr(2) ** -200


@pytest.mark.parametrize("n", range(1, 9))
def test_partition_tiles_chart(quick_tuned, n):
    f = quick_tuned
    ps = build_partition(f, n)
    q = golden_denominators(n)
    assert ps.sizes() == (q[n - 1], q[n], q[n], q[n])
    with f.context():
        total = sum((I.length for I in ps.intervals()), mpfr(0))
        assert abs(total - f.length) < mpfr(2) ** -200
    assert boundary_on_orbit(f, ps)


@pytest.mark.parametrize("n", range(2, 8))
def test_partitions_refine(quick_tuned, n):
    assert refines(build_partition(quick_tuned, n + 1), build_partition(quick_tuned, n))


@pytest.mark.parametrize("n", range(2, 9))
def test_central_ratio_matches_level_data(quick_tuned, quick_run, n):
    ps = build_partition(quick_tuned, n)
    st = quick_run.states[n - 1]
    with working_precision(256):
        ratio = ps.B[0].length / ps.A[0].length
        assert abs(ratio - st.x3 / (-st.x1)) < mpfr(2) ** -180


def test_tiling_detects_overlap(quick_tuned):
    ps = build_partition(quick_tuned, 4)
    ps.A[0].hi = ps.A[0].hi + mpfr("1e-6")
    with pytest.raises(PartitionError):
        check_tiling(quick_tuned, ps)


@settings(max_examples=30, deadline=None)
@given(st.integers(min_value=0, max_value=10**6))
def test_locate_returns_containing_member(quick_tuned, k):
    f = quick_tuned
    ps = build_partition(f, 6)
    with f.context():
        x = f.x1 + f.length * k / 10**6
        I = ps.locate(x)
        assert I.lo <= x <= I.hi


def test_scaling_ratios_in_unit_interval(quick_tuned):
    rs = scaling_ratios(quick_tuned, 10)
    assert sorted(rs) == list(range(1, 11))
    assert all(0 < r < 1 for r in rs.values())
    assert rs[4] == scaling_ratio(quick_tuned, 4)


def test_gap_through_cut(quick_tuned):
    f = quick_tuned
    with f.context():
        g = gap_between(f, (mpfr("0.9"), mpfr("0.95")), (f.x1, f.x1 + mpfr("0.05")))
        assert abs(g - mpfr("0.05")) < mpfr(2) ** -200


def test_attractor_cover_and_removed_length(quick_tuned):
    f = quick_tuned
    cover = attractor_cover(f, 10)
    with f.context():
        kept = sum((b - a for a, b in cover), mpfr(0))
        assert abs(kept + removed_length(f, 10) - f.length) < mpfr(2) ** -200
    assert removed_length(f, 12) >= removed_length(f, 10)


def test_untuned_orbit_hits_flat(base_map):
    with pytest.raises(CombinatoricsError):
        critical_orbit(base_map, 200)
