"""Critical-value orbit, pull-backs of the flat piece, first-return level data.

Shared by rotation (tuning), partition, and renorm (first-return path).

With P_0 = 1 and P_n = f^{q_n}(0) (so P_1 = x1), the level-n map is the
first return to a neighbourhood of 0 rescaled by 1/P_n, and

    x_{1,n} = f^{q_{n+1}}(0) / P_n,   x_{2,n} = f^{q_{n+2}}(0) / P_n,
    [x_{3,n}, x_{4,n}] = f^{-(q_{n+1}-1)}(U) / P_n.

The flat piece at level n+1 is the pull-back of the level-n one by q_n steps.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from gmpy2 import mpfr

from .rotation import golden_denominators


class CombinatoricsError(RuntimeError):
    def __init__(self, msg, step=None):
        super().__init__(msg)
        self.step = step


class PullbackError(RuntimeError):
    pass


def critical_orbit(f, n: int, start=None):
    """o[t] = f^t(0) for t = 0..n (o[1] = x1).  Raises if the orbit enters U."""
    with f.context():
        o = [mpfr(0)] if start is None else list(start)
        y = o[-1]
        x3, x4 = f.x3, f.x4
        while len(o) <= n:
            if x3 <= y <= x4:
                raise CombinatoricsError(f"orbit of f(U) enters U at step {len(o) - 1}", len(o) - 1)
            y = f._f(y)
            o.append(y)
        return o


def pull_back(f, a, b):
    """f^{-1}([a, b]) for an interval inside a single branch image."""
    x2 = f.x2
    if a >= x2:
        name = "f1"
    elif b <= 0:
        name = "f2"
    elif a >= 0 and b <= x2:
        name = "f4"
    else:
        raise PullbackError(f"interval [{a}, {b}] straddles branch images")
    # every branch is increasing
    return f._inv(name, a), f._inv(name, b), name


def pull_back_n(f, a, b, k: int, record=None):
    for _ in range(k):
        a, b, _name = pull_back(f, a, b)
        if record is not None:
            record.append((a, b))
    return a, b


@dataclass
class LevelScan:
    """Level data obtained from the base map's orbit (first-return path)."""

    levels: list = field(default_factory=list)  # (x1, x2, x3, x4) in level-n coordinates
    scales: list = field(default_factory=list)  # P_n
    flats: list = field(default_factory=list)  # level-n flat piece in base coordinates
    orbit: list = field(default_factory=list)
    failure: int | None = None
    reason: str = ""

    @property
    def depth(self) -> int:
        return len(self.levels) - 1


def level_violation(x1, x2, x3, x4) -> str:
    if not x1 < 0:
        return "x1 >= 0"
    if not 0 < x2:
        return "x2 <= 0"
    if not x2 < x3:
        return "x2 >= x3"
    if not x3 < x4 < 1:
        return "flat piece out of order"
    return ""


def first_return_levels(f, depth: int, stop_on_failure: bool = True) -> LevelScan:
    """Level data for n = 0..depth straight from the base orbit.

    Stops at the first level violating x1 < 0 < x2 < x3 < x4 < 1 and records it
    as ``failure``.  Orbit entry into U or an ambiguous pull-back also count as
    failures at the level being built.
    """
    q = golden_denominators(depth + 2)
    scan = LevelScan()
    with f.context():
        o = [mpfr(0), f.x1]
        ua, ub = f.x3, f.x4
        for j in range(depth + 1):
            try:
                o = critical_orbit(f, q[j + 2], start=o)
                if j >= 1:
                    ua, ub = pull_back_n(f, ua, ub, q[j - 1])
            except (CombinatoricsError, PullbackError) as e:
                scan.failure, scan.reason = j, str(e)
                break
            P = mpfr(1) if j == 0 else o[q[j]]
            lx1 = o[q[j + 1]] / P
            lx2 = o[q[j + 2]] / P
            a, b = ua / P, ub / P
            if b < a:
                a, b = b, a
            scan.levels.append((lx1, lx2, a, b))
            scan.scales.append(P)
            scan.flats.append((ua, ub))
            bad = level_violation(lx1, lx2, a, b)
            if bad:
                scan.failure, scan.reason = j, bad
                if stop_on_failure:
                    break
        scan.orbit = o
    return scan


def failure_level(f, depth: int):
    """First level <= depth that breaks golden combinatorics, or None."""
    return first_return_levels(f, depth).failure
