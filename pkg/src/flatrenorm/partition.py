"""Orbit bookkeeping for the flat piece and the level-n dynamical partitions.

Notation: f^i(U) for i >= 1 is a point (f(U) = 0, f^2(U) = x1, f^3(U) = x2),
f^{-q}(U) an interval.  With P_m = f^{q_m}(0) (P_0 = 1, P_1 = x1) and
C_n = f^{-(q_n - 1)}(U), the level-n partition consists of

    A_n = (0, P_n),  B_n = (C_n, 0),  C_n,  D_n = (P_{n-1}, C_n)

and their forward images A^i (0 <= i < q_{n-1}), B^j, C^j, D^j (0 <= j < q_n).
Each member is the arc between its two ends that avoids the flat piece; none
of them contains the cut x1 = 1 in its interior because x1 = f^2(U) is a
boundary point from level 1 on, so every member is a plain chart interval.
"""

from __future__ import annotations

import bisect
import csv
import io
from dataclasses import dataclass, field

from gmpy2 import mpfr

from .numerics import to_decimal
from .orbit import CombinatoricsError, PullbackError, critical_orbit, pull_back
from .rotation import golden_denominators


class PartitionError(RuntimeError):
    pass


class PrecisionError(RuntimeError):
    pass


@dataclass
class OrbitTable:
    forward: dict = field(default_factory=dict)
    backward: dict = field(default_factory=dict)


def forward_orbit(f, N: int) -> dict:
    """i -> f^i(U) for 1 <= i <= N; f(U) = 0."""
    try:
        o = critical_orbit(f, max(N - 1, 0))
    except CombinatoricsError as e:
        raise CombinatoricsError(f"orbit re-enters U before step {N}: {e}", e.step) from e
    return {i: o[i - 1] for i in range(1, N + 1)}


def backward_chain(f, k: int) -> list:
    """[U, f^{-1}(U), ..., f^{-k}(U)] as (lo, hi) pairs."""
    with f.context():
        out = [(f.x3, f.x4)]
        a, b = f.x3, f.x4
        for i in range(k):
            try:
                a, b, _ = pull_back(f, a, b)
            except PullbackError as e:
                raise PrecisionError(f"pull-back {i + 1} of U left a branch image: {e}") from e
            out.append((a, b))
        return out


def preimage_interval(f, q: int):
    """The interval f^{-q}(U).

    The branch at each step is the one whose image contains the current
    interval; the images [x2, 1], [x1, 0], [0, x2] are cut by the orbit points
    f(U), f^2(U), f^3(U), so this is the itinerary read off the combinatorics.
    """
    if q < 0:
        raise ValueError("q must be >= 0")
    return backward_chain(f, q)[-1]


def orbit_table(f, N: int, qs=()) -> OrbitTable:
    t = OrbitTable(forward=forward_orbit(f, N))
    if qs:
        chain = backward_chain(f, max(qs))
        t.backward = {q: chain[q] for q in qs}
    return t


def gap_between(f, I, J):
    """Shortest gap between two disjoint chart intervals (possibly through the cut)."""
    (a, b), (c, d) = I, J
    if b <= c:
        direct, other = c - b, (1 - d) + (a - f.x1)
    elif d <= a:
        direct, other = a - d, (1 - b) + (c - f.x1)
    else:
        return mpfr(0)
    return min(direct, other)


def scaling_ratio(f, n: int, warn: list | None = None):
    """alpha_n = gap / (|f^{-q_n}(U)| + gap) with gap the closest-endpoint distance to U."""
    q = golden_denominators(n)[n]
    with f.context():
        a, b = preimage_interval(f, q)
        gap = gap_between(f, (a, b), (f.x3, f.x4))
        if gap == 0:
            if warn is not None:
                warn.append(f"zero gap at n={n}")
            return mpfr(0)
        return gap / ((b - a) + gap)


def scaling_ratios(f, N: int) -> dict:
    """n -> alpha_n for 1 <= n <= N; each value lies in (0, 1) on a tuned map."""
    warn = []
    out = {n: scaling_ratio(f, n, warn) for n in range(1, N + 1)}
    if warn:
        raise PartitionError("; ".join(warn))
    return out


@dataclass
class Interval:
    family: str
    index: int
    lo: object
    hi: object

    @property
    def length(self):
        return self.hi - self.lo


@dataclass
class PartitionSystem:
    level: int
    A: list
    B: list
    C: list
    D: list
    precision: int
    orbit: list = field(default_factory=list)
    chain: list = field(default_factory=list)

    def families(self):
        return {"A": self.A, "B": self.B, "C": self.C, "D": self.D}

    def intervals(self):
        return self.A + self.B + self.C + self.D

    def sorted_intervals(self):
        return sorted(self.intervals(), key=lambda I: I.lo)

    def sizes(self):
        return (len(self.A), len(self.B), len(self.C), len(self.D))

    def boundary_points(self):
        pts = set()
        for I in self.intervals():
            pts.add(I.lo)
            pts.add(I.hi)
        return sorted(pts)

    def locate(self, x):
        """Partition member containing x (closed on the left)."""
        iv = self.sorted_intervals()
        los = [I.lo for I in iv]
        k = bisect.bisect_right(los, x) - 1
        return iv[max(k, 0)]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["level", "family", "index", "left", "right"])
        for fam in "ABCD":
            for I in self.families()[fam]:
                w.writerow([self.level, fam, I.index, to_decimal(I.lo), to_decimal(I.hi)])
        return buf.getvalue()


def _arc(f, family, index, p, q):
    """Chart interval between two ends; the point x1 (= 1) is placed on the side of the other end."""
    if p == f.x1 and q > 0:
        p = mpfr(1)
    if q == f.x1 and p > 0:
        q = mpfr(1)
    lo, hi = (p, q) if p < q else (q, p)
    return Interval(family, index, lo, hi)


def _gap_to(f, family, index, point, interval):
    a, b = interval
    if point == f.x1:
        point = mpfr(1) if a > 0 else f.x1
    if point >= b:
        return Interval(family, index, b, point)
    if point <= a:
        return Interval(family, index, point, a)
    raise PartitionError(f"{family}^{index}: orbit point inside its pulled-back interval")


def build_partition(f, n: int, check: bool = True) -> PartitionSystem:
    if n < 1:
        raise ValueError("partition level must be >= 1")
    q = golden_denominators(n + 1)
    qn, qm = q[n], q[n - 1]
    with f.context():
        o = critical_orbit(f, qn + qm)
        chain = backward_chain(f, qn - 1)
        # C^j = f^{j - (q_n - 1)}(U)
        C = [Interval("C", j, *chain[qn - 1 - j]) for j in range(qn)]
        A = [_arc(f, "A", i, o[i], o[i + qn]) for i in range(qm)]
        B = [_gap_to(f, "B", j, o[j], chain[qn - 1 - j]) for j in range(qn)]
        D = []
        for j in range(qn):
            p = o[j + qm] if not (n == 1 and j == 0) else mpfr(1)
            D.append(_gap_to(f, "D", j, p, chain[qn - 1 - j]))
        ps = PartitionSystem(n, A, B, C, D, f.precision, o, chain)
        if check:
            check_tiling(f, ps)
    return ps


def check_tiling(f, ps: PartitionSystem):
    """Pairwise disjoint interiors and exact cover of the chart [x1, 1]."""
    iv = ps.sorted_intervals()
    if iv[0].lo != f.x1 or iv[-1].hi != 1:
        raise PartitionError("partition does not reach both ends of the chart")
    for I, J in zip(iv, iv[1:]):
        if not I.lo < I.hi:
            raise PartitionError(f"degenerate member {I.family}^{I.index}")
        if I.hi != J.lo:
            raise PartitionError(
                f"members {I.family}^{I.index} and {J.family}^{J.index} overlap or leave a gap"
            )
    U = [I for I in ps.C if I.lo == f.x3 and I.hi == f.x4]
    if len(U) != 1:
        raise PartitionError("flat piece missing from the C family")
    return True


def boundary_on_orbit(f, ps: PartitionSystem, tol=None) -> bool:
    """Every endpoint is, within tol, on the forward orbit of f(U) or the backward orbit of the ends of U."""
    n = ps.level
    q = golden_denominators(n + 2)
    with f.context():
        if tol is None:
            tol = mpfr(2) ** (-(f.precision // 2))
        fresh = critical_orbit(f, q[n + 1])
        pts = list(fresh) + [mpfr(1)]
        for a, b in backward_chain(f, q[n] - 1):
            pts += [a, b]
        pts.sort()
        for x in ps.boundary_points():
            k = bisect.bisect_left(pts, x)
            near = [pts[i] for i in (k - 1, k) if 0 <= i < len(pts)]
            if not any(abs(x - y) <= tol for y in near):
                return False
    return True


def refines(fine: PartitionSystem, coarse: PartitionSystem) -> bool:
    """Every member of ``fine`` lies inside one member of ``coarse``."""
    civ = coarse.sorted_intervals()
    los = [I.lo for I in civ]
    for I in fine.intervals():
        k = bisect.bisect_right(los, I.lo) - 1
        P = civ[k]
        if not (P.lo <= I.lo and I.hi <= P.hi):
            return False
    return True


def attractor_cover(f, depth: int) -> list:
    """Chart intervals covering the circle minus f^{-i}(U), 0 <= i <= depth."""
    if depth < 0:
        raise ValueError("depth must be >= 0")
    with f.context():
        holes = sorted(backward_chain(f, depth))
        out = []
        left = f.x1
        for a, b in holes:
            if a > left:
                out.append((left, a))
            left = max(left, b)
        if left < 1:
            out.append((left, mpfr(1)))
        return out


def removed_length(f, depth: int):
    with f.context():
        return sum((b - a for a, b in backward_chain(f, depth)), mpfr(0))
