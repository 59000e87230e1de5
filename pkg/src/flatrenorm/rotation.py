"""Continued fractions, rotation numbers, return times, golden-mean tuning."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import gmpy2
from gmpy2 import mpfr

from .numerics import Bracket, BracketError, NonMonotoneError, solve_monotone, working_precision


class TuningError(RuntimeError):
    pass


@dataclass(frozen=True)
class ContinuedFraction:
    partial_quotients: tuple

    def __post_init__(self):
        if any(int(a) < 1 for a in self.partial_quotients):
            raise ValueError("partial quotients must be >= 1")

    def quotient(self, i: int) -> int:
        # a finite tuple is read as periodic, so [1] is the golden mean
        return int(self.partial_quotients[i % len(self.partial_quotients)])


GOLDEN = ContinuedFraction((1,))


def denominators(cf: ContinuedFraction, n: int) -> list:
    """q_0 = 1, q_1 = a_0, q_{k+1} = a_k q_k + q_{k-1}."""
    if n < 0:
        raise ValueError("n must be >= 0")
    q = [1]
    if n >= 1:
        q.append(cf.quotient(0))
    for k in range(1, n):
        q.append(cf.quotient(k) * q[k] + q[k - 1])
    return q


_GOLDEN_CACHE = [1, 1]


def golden_denominators(n: int) -> list:
    """The shared table q_0 = 1, q_1 = 1, q_2 = 2, ... (Fibonacci)."""
    while len(_GOLDEN_CACHE) <= n:
        _GOLDEN_CACHE.append(_GOLDEN_CACHE[-1] + _GOLDEN_CACHE[-2])
    return _GOLDEN_CACHE[: n + 1]


def golden_mean(bits: int = 256):
    with working_precision(bits):
        return (gmpy2.sqrt(mpfr(5)) - 1) / 2


@dataclass(frozen=True)
class RotationEstimate:
    value: object
    error_bound: object
    iterations: int
    exact: Fraction | None = None

    def __post_init__(self):
        if self.error_bound < 0:
            raise ValueError("error_bound must be >= 0")


def rotation_number_of_lift(lift, period, max_iter: int, x0) -> RotationEstimate:
    """(F^N(x0) - x0) / (N * period) for a lift F of a degree-one map."""
    if max_iter < 1:
        raise ValueError("max_iter must be >= 1")
    x = x0
    for _ in range(max_iter):
        x = lift(x)
    return RotationEstimate((x - x0) / (max_iter * period), mpfr(1) / max_iter, max_iter)


def rotation_number(f, max_iter: int, x0=0) -> RotationEstimate:
    """Lift-displacement estimate with the winding counted combinatorially.

    The orbit stays in the chart; each step taken from [0, 1] crosses the cut
    x1 = 1 once.  If the orbit reaches f(U) = 0 a second time after entering
    U, the combinatorics is periodic and the exact rational is returned.
    """
    if max_iter < 1:
        raise ValueError("max_iter must be >= 1")
    with f.context():
        x = mpfr(x0)
        start = x
        wind = 0
        seen_flat = False
        for i in range(1, max_iter + 1):
            if f.x3 <= x <= f.x4:
                seen_flat = True
            if x >= 0:
                wind += 1
            x = f._f(x)
            if seen_flat and x == 0:
                # f^i(x0) = f(U): from here on the orbit is the orbit of 0
                period, w = _cycle_of_zero(f, max_iter)
                if period is not None:
                    r = Fraction(w, period)
                    return RotationEstimate(mpfr(r.numerator) / r.denominator, mpfr(0), i + period, r)
        disp = (x - start) + wind * f.length
        value = disp / (max_iter * f.length)
        return RotationEstimate(value, mpfr(1) / max_iter, max_iter)


def _cycle_of_zero(f, max_iter):
    """Period and winding of the orbit of 0 if it returns to 0 within max_iter."""
    x = mpfr(0)
    wind = 0
    for k in range(1, max_iter + 1):
        if x >= 0:
            wind += 1
        x = f._f(x)
        if x == 0:
            return k, wind
    return None, None


@dataclass
class ReturnTimes:
    times: list
    sides: list
    terminated_at: int | None = None
    message: str = ""

    def matches_fibonacci(self, n: int) -> bool:
        q = golden_denominators(n)[1 : n + 1]
        return len(self.times) >= n and self.times[:n] == q


def return_times(f, depth: int) -> ReturnTimes:
    """Closest returns of the orbit of f(U) = 0 to itself, two-sided.

    t is recorded when f^t(0) is closer to 0 than every earlier point on the
    same side.  The first point f(0) = x1 is the chart endpoint and counts as a
    return by convention.  With this convention the golden-mean sequence is
    q_1, q_2, ... = 1, 2, 3, 5, 8, ...
    """
    if depth < 1:
        raise ValueError("depth must be >= 1")
    q = golden_denominators(depth + 2)
    horizon = q[-1] + q[-2]
    times, sides = [], []
    with f.context():
        left, right = f.x1, mpfr(1)
        x = mpfr(0)
        for t in range(1, horizon + 1):
            if f.x3 <= x <= f.x4:
                return ReturnTimes(times, sides, len(times), f"combinatorics terminates at level {len(times)}")
            x = f._f(x)
            if t == 1:
                times.append(1)
                sides.append("left")
                continue
            if left < x < 0:
                left = x
                times.append(t)
                sides.append("left")
            elif 0 < x < right:
                right = x
                times.append(t)
                sides.append("right")
            if len(times) >= depth:
                break
    return ReturnTimes(times, sides)


@dataclass
class TuneResult:
    params: object
    bracket: tuple
    depth: int
    evaluations: int
    precision: int
    log: list = field(default_factory=list)


def _bits_for_width(width, floor_bits):
    if width <= 0:
        return floor_bits
    need = 2 * int(math.ceil(-float(gmpy2.log2(width)))) + 160
    return max(floor_bits, need)


def _narrow(g, lo, hi, orient, factor=8, max_steps=64):
    """Shrink [lo, hi] geometrically towards the end where |g| is smaller.

    The root of x3 - x2 usually sits extremely close to one end of the tuning
    bracket, where interpolation steps crawl.
    """
    glo, ghi = g(lo), g(hi)
    if abs(glo) <= abs(ghi):
        near, far, gnear = lo, hi, glo
    else:
        near, far, gnear = hi, lo, ghi
    for _ in range(max_steps):
        x = near + (far - near) / factor
        gx = g(x)
        if (gx > 0) == (gnear > 0):
            near, gnear = x, gx
        else:
            far = x
            if abs(gx) > 64 * abs(gnear):
                continue
            break
    return (near, far) if near < far else (far, near)


def tune(base, knob: str = "x4", range_=None, depth: int = 10, precision: int | None = None, comove: bool = True, verbose: bool = False) -> TuneResult:
    """Bracket refinement on the failure level of golden combinatorics.

    Along the knob the first failing level alternates in parity on the two
    sides of the golden parameter.  Keeping endpoints with failure levels of
    opposite parity, the smaller level j is pushed deeper by locating the root
    of x_{3,j} - x_{2,j} and stepping just past it into the region of the
    same parity as j.
    """
    from .mapcore import FlatCircleMap
    from .orbit import first_return_levels

    if range_ is None:
        raise TuningError("a knob range is required")
    if depth < 1:
        raise TuningError("depth must be >= 1")
    floor_bits = precision or max(128, base.precision)
    try:
        with working_precision(floor_bits):
            br = Bracket(mpfr(range_[0]) if not isinstance(range_, Bracket) else range_.lo,
                         mpfr(range_[1]) if not isinstance(range_, Bracket) else range_.hi)
    except BracketError as e:
        raise TuningError(f"degenerate knob range: {e}") from e
    lo, hi = br.lo, br.hi
    nev = 0
    log = []

    def make(p, bits):
        return FlatCircleMap(base.at_precision(bits).with_knob(knob, mpfr(p, bits), comove), bits)

    def flev(p, bits):
        nonlocal nev
        nev += 1
        return first_return_levels(make(p, bits), depth).failure

    bits = _bits_for_width(hi - lo, floor_bits)
    jl, jh = flev(lo, bits), flev(hi, bits)
    if jl is None and jh is None:
        raise TuningError("both endpoints already pass; range does not straddle the golden parameter")
    if jl is None or jh is None:
        p = lo if jl is None else hi
        return TuneResult(base.with_knob(knob, p, comove), (lo, hi), depth, nev, bits, log)
    if (jl - jh) % 2 == 0:
        raise TuningError(f"endpoints do not straddle golden combinatorics (failure levels {jl}, {jh})")
    ratio = mpfr(2) ** -10
    while min(jl, jh) <= depth:
        j = min(jl, jh)
        w = hi - lo
        bits = _bits_for_width(w, floor_bits)

        def g(p):
            nonlocal nev
            nev += 1
            scan = first_return_levels(make(p, bits), j, stop_on_failure=False)
            if len(scan.levels) <= j:
                raise TuningError(f"level {j} unavailable inside the bracket: {scan.reason}")
            _, x2, x3, _ = scan.levels[j]
            return x3 - x2

        with working_precision(bits):
            tol = w * ratio**2 * mpfr(2) ** -16
            while True:
                # the endpoint failing at level j has x3 - x2 <= 0
                orient = "increasing" if jl == j else "decreasing"
                try:
                    a, b = _narrow(g, lo, hi, orient)
                    r = solve_monotone(g, Bracket(a, b, orient), 0, tol=mpfr(0), xtol=tol)
                except NonMonotoneError as e:
                    raise TuningError(f"x3-x2 not monotone in the knob at level {j}") from e
                # smallest d = 4 tol * 2^k leaving the level-j failure region,
                # found by galloping on k and then bisecting on k
                base_d = 4 * tol
                cache = {}

                def probe(k):
                    if k not in cache:
                        q = r + base_d * 2**k if jl == j else r - base_d * 2**k
                        cache[k] = (q, flev(q, bits) if lo < q < hi else "out")
                    return cache[k]

                k_in, k_out, step = -1, None, 1
                while k_out is None and step <= 4096:
                    k = k_in + step
                    _, lev = probe(k)
                    if lev == j:
                        k_in, step = k, step * 2
                    else:
                        k_out = k
                ok = False
                jp = None
                if k_out is not None:
                    while k_out - k_in > 1:
                        mid = (k_in + k_out) // 2
                        if probe(mid)[1] == j:
                            k_in = mid
                        else:
                            k_out = mid
                    p, jp = probe(k_out)
                    ok = jp != "out" and (jp is None or (jp - j) % 2 == 0)
                if ok:
                    break
                tol = tol * mpfr(2) ** -32
                if tol < w * mpfr(2) ** (8 - bits):
                    raise TuningError(f"cannot separate level {j} regions at {bits} bits")
        jp = depth + 1 if jp is None else jp
        if jl == j:
            lo, jl = p, jp
        else:
            hi, jh = p, jp
        ratio = (hi - lo) / w
        log.append((j, jl, jh, hi - lo))
        if verbose:
            print(f"level {j}: failure levels ({jl}, {jh}) width {float(hi - lo):.3e} bits {bits}", flush=True)
    bits = _bits_for_width(hi - lo, floor_bits)
    with working_precision(bits):
        mid = lo + (hi - lo) / 2
    params = base.at_precision(bits).with_knob(knob, mid, comove)
    return TuneResult(params, (lo, hi), depth, nev, bits, log)


def tune_to_fibonacci(base, knob: str = "x4", range_=None, depth: int = 10, **kw):
    """Parameters with golden-mean combinatorics to the requested depth."""
    return tune(base, knob, range_, depth, **kw).params
