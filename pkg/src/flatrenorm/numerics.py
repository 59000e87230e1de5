"""Arbitrary-precision arithmetic helpers and a bracketed monotone solver.

All orbit and renormalization code runs on ``gmpy2.mpfr`` values.  MPFR rounds
correctly to nearest, so a computation repeated at the same precision
reproduces the same bits.  The working precision is a thread-local gmpy2
context; :func:`working_precision` scopes it.
"""

from __future__ import annotations

import math
import os
from contextlib import contextmanager
from dataclasses import dataclass
from typing import Callable

import gmpy2
from gmpy2 import mpfr

Real = type(mpfr(0))

DEFAULT_PRECISION = 256
MIN_PRECISION = 64
DEFAULT_PRECISION_MAX = 1_048_576
PRECISION_ENV = "FLATRENORM_PRECISION_MAX"


class PrecisionBudgetExceeded(RuntimeError):
    pass


class BracketError(ValueError):
    pass


class NonMonotoneError(ValueError):
    pass


@contextmanager
def working_precision(bits: int):
    """Run the enclosed block with MPFR precision ``bits``."""
    if bits < MIN_PRECISION:
        raise ValueError(f"precision must be >= {MIN_PRECISION} bits, got {bits}")
    with gmpy2.context(gmpy2.get_context(), precision=int(bits)) as ctx:
        yield ctx


def current_precision() -> int:
    return gmpy2.get_context().precision


def real(value, bits: int | None = None) -> Real:
    """Convert ``value`` (str, int, mpfr, Fraction) to an mpfr.

    Strings are parsed directly at the target precision; binary floats are
    rejected so that no 53-bit value leaks into a computation.
    """
    if isinstance(value, float):
        raise TypeError("binary floats are not accepted; pass a decimal string")
    if bits is None:
        bits = current_precision()
    if isinstance(value, Real):
        return mpfr(value, bits)
    if isinstance(value, str):
        return mpfr(value.strip(), bits)
    return mpfr(value, bits)


def decimal_digits(bits: int) -> int:
    """Digits needed so that a decimal string round-trips ``bits`` exactly."""
    return int(math.ceil(bits * math.log10(2))) + 1


def to_decimal(x: Real, digits: int | None = None) -> str:
    """Deterministic scientific decimal string, e.g. ``-4.0000e-1``."""
    if digits is None:
        digits = decimal_digits(x.precision)
    if gmpy2.is_zero(x):
        return "0"
    if not gmpy2.is_finite(x):
        raise ValueError("non-finite value")
    mant, exp, _ = x.digits(10, digits)
    sign = ""
    if mant.startswith("-"):
        sign, mant = "-", mant[1:]
    mant = mant.rstrip("0") or "0"
    body = mant[0] + ("." + mant[1:] if len(mant) > 1 else "")
    return f"{sign}{body}e{exp - 1}"


def to_float(x) -> float:
    """Hardware float for report formatting only."""
    return float(x)


def precision_cap() -> int:
    raw = os.environ.get(PRECISION_ENV)
    if raw is None or raw.strip() == "":
        return DEFAULT_PRECISION_MAX
    cap = int(raw)
    if cap < MIN_PRECISION:
        raise ValueError(f"{PRECISION_ENV} must be >= {MIN_PRECISION}")
    return cap


def check_budget(bits: int, cap: int | None = None) -> int:
    cap = precision_cap() if cap is None else cap
    if bits > cap:
        raise PrecisionBudgetExceeded(f"precision budget exceeded: {bits} > {cap} bits")
    return bits


def required_precision(depth: int, lambda_u_nominal=1.6, c_u_nominal=-4.0, cap: int | None = None) -> int:
    """Bits needed to resolve scales ~exp(c_u * lambda_u**(depth/2)).

    bits = 128 + ceil(|c_u| * lambda_u**ceil(depth/2) * log2(e)) + 128.
    """
    if depth < 0:
        raise ValueError("depth must be >= 0")
    lam = float(lambda_u_nominal)
    c = abs(float(c_u_nominal))
    growth = c * lam ** math.ceil(depth / 2) * math.log2(math.e)
    bits = 128 + int(math.ceil(growth)) + 128
    return check_budget(max(bits, MIN_PRECISION), cap)


@dataclass(frozen=True)
class Bracket:
    lo: Real
    hi: Real
    orientation: str = "increasing"

    def __post_init__(self):
        if not self.lo < self.hi:
            raise BracketError("bracket requires lo < hi")
        if self.orientation not in ("increasing", "decreasing"):
            raise ValueError("orientation must be 'increasing' or 'decreasing'")


def solve_monotone(
    fn: Callable[[Real], Real],
    bracket: Bracket,
    target,
    tol,
    xtol=None,
    max_iter: int = 100_000,
) -> Real:
    """Solve fn(x) = target for strictly monotone fn on the bracket.

    Illinois (regula falsi with halving) steps are taken only when they land
    strictly inside the current bracket and shrink it fast enough; otherwise
    the step is a bisection.  Returns as soon as |fn(x) - target| <= tol, or
    when the bracket has collapsed below ``xtol`` (default: a few ulps), in
    which case the better endpoint is returned.
    """
    lo, hi = bracket.lo, bracket.hi
    target = mpfr(target)
    tol = mpfr(tol)
    sgn = 1 if bracket.orientation == "increasing" else -1
    flo = (fn(lo) - target) * sgn
    fhi = (fn(hi) - target) * sgn
    if flo > 0 or fhi < 0:
        if flo > 0 and fhi < 0:
            raise NonMonotoneError("function values contradict the bracket orientation")
        raise BracketError("target outside the image of the bracket")
    if abs(flo) <= tol:
        return lo
    if abs(fhi) <= tol:
        return hi
    if xtol is None:
        xtol = (abs(lo) + abs(hi)) * mpfr(2) ** (8 - current_precision())
    glo, ghi = flo, fhi  # Illinois-weighted copies
    side = 0
    widths = []
    for _ in range(max_iter):
        width = hi - lo
        x = None
        # bisect when three interpolation steps failed to halve the bracket
        if len(widths) < 3 or width <= widths[-3] / 2:
            cand = hi - ghi * width / (ghi - glo)
            if lo < cand < hi:
                x = cand
        if x is None:
            x = lo + width / 2
            side = 0
            widths = []
        widths.append(width)
        fx = (fn(x) - target) * sgn
        if abs(fx) <= tol:
            return x
        if fx < flo or fx > fhi:
            raise NonMonotoneError("sign pattern violation inside bracket")
        if fx < 0:
            lo, flo, glo = x, fx, fx
            if side == -1:
                ghi = ghi / 2
            side = -1
        else:
            hi, fhi, ghi = x, fx, fx
            if side == 1:
                glo = glo / 2
            side = 1
        if hi - lo <= xtol:
            return lo if -flo <= fhi else hi
    raise RuntimeError("solve_monotone did not converge")
