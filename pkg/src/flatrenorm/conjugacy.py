"""The conjugacy on partition data, derivative profiles Dh_n and the C1 verdict.

h is only known on the boundary points of the dynamical partitions: it sends
every member of P_n(f) to the member of P_n(g) with the same family and
index.  Dh_n(I) = |h(I)| / |I| is the piecewise-constant derivative profile.
"""

from __future__ import annotations

import bisect
import csv
import io
import math
from dataclasses import dataclass, field

import gmpy2
from gmpy2 import mpfr

from .numerics import required_precision, to_decimal, working_precision
from .partition import PartitionError, build_partition, scaling_ratio
from .rigidity import TOL_PLUS, TOL_U, ExponentMismatch, fingerprint, paired_comparison

C1 = "C1_diffeomorphism"
NOT_C1 = "not_C1"
INCONCLUSIVE = "inconclusive"


class CombinatoricsMismatch(RuntimeError):
    pass


class EscalationRequest(RuntimeError):
    pass


def _same_exponents(f, g):
    return (f.ell1, f.ell2) == (g.ell1, g.ell2) or (float(f.ell1), float(f.ell2)) == (float(g.ell1), float(g.ell2))


def working_pair(f, g, n: int):
    """Both maps at a precision adequate for level-n partitions."""
    bits = max(required_precision(n + 2), f.precision, g.precision)
    return f.at_precision(bits), g.at_precision(bits), bits


@dataclass
class PiecewiseAffineConjugacy:
    level: int
    pairs: list  # (x_f, x_g) sorted by x_f
    labels: list = field(default_factory=list)  # (family, index) in circle order

    def __call__(self, x):
        xs = [p[0] for p in self.pairs]
        k = bisect.bisect_right(xs, x) - 1
        k = min(max(k, 0), len(self.pairs) - 2)
        (a, ha), (b, hb) = self.pairs[k], self.pairs[k + 1]
        return ha + (hb - ha) * (x - a) / (b - a)

    def order_preserving(self) -> bool:
        return all(p[1] < q[1] for p, q in zip(self.pairs, self.pairs[1:]))


def _pair_partitions(ps_f, ps_g):
    if ps_f.sizes() != ps_g.sizes():
        raise CombinatoricsMismatch(f"partition sizes differ: {ps_f.sizes()} vs {ps_g.sizes()}")
    fi, gi = ps_f.sorted_intervals(), ps_g.sorted_intervals()
    lf = [(I.family, I.index) for I in fi]
    lg = [(I.family, I.index) for I in gi]
    if lf != lg:
        raise CombinatoricsMismatch("partition members appear in different circle order")
    return fi, gi, lf


def build_conjugacy(f, g, n: int, ps_f=None, ps_g=None) -> PiecewiseAffineConjugacy:
    if not _same_exponents(f, g):
        raise ExponentMismatch("conjugacy classification needs equal exponents")
    ps_f = ps_f or build_partition(f, n)
    ps_g = ps_g or build_partition(g, n)
    fi, gi, labels = _pair_partitions(ps_f, ps_g)
    pairs = [(fi[0].lo, gi[0].lo)] + [(I.hi, J.hi) for I, J in zip(fi, gi)]
    return PiecewiseAffineConjugacy(n, pairs, labels)


@dataclass
class DhProfile:
    level: int
    rows: list  # (family, index, |I_f|, |I_g|, ratio)
    integral: object
    total_g: object
    precision: int
    sup_log_change: object = None

    @property
    def ratios(self):
        return [r[4] for r in self.rows]

    @property
    def sup(self):
        return max(self.ratios)

    @property
    def inf(self):
        return min(self.ratios)

    @property
    def integral_deviation(self):
        return abs(self.integral - self.total_g)

    def ratio_of(self, family, index):
        return self._index()[(family, index)]

    def _index(self):
        if not hasattr(self, "_idx"):
            self._idx = {(r[0], r[1]): r[4] for r in self.rows}
        return self._idx

    def to_csv(self, digits: int = 30) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["level", "family", "index", "len_f", "len_g", "ratio"])
        for fam, idx, lf, lg, r in self.rows:
            w.writerow([self.level, fam, idx, to_decimal(lf, digits), to_decimal(lg, digits), to_decimal(r, digits)])
        return buf.getvalue()


def dh_profile(f, g, n: int, ps_f=None, ps_g=None) -> DhProfile:
    """Dh_n(I) = |h(I)| / |I| on every member of P_n(f)."""
    ps_f = ps_f or build_partition(f, n)
    ps_g = ps_g or build_partition(g, n)
    fi, gi, _ = _pair_partitions(ps_f, ps_g)
    bits = max(f.precision, g.precision)
    rows = []
    with working_precision(bits):
        integ = mpfr(0)
        for I, J in zip(fi, gi):
            lf, lg = I.hi - I.lo, J.hi - J.lo
            if not (lf > 0 and lg > 0):
                raise EscalationRequest(f"zero-length member {I.family}^{I.index} at level {n}")
            r = lg / lf
            integ += r * lf
            rows.append((I.family, I.index, lf, lg, r))
        return DhProfile(n, rows, integ, 1 - g.x1, bits)


def _parents(fine_ps, coarse_ps):
    civ = coarse_ps.sorted_intervals()
    los = [I.lo for I in civ]
    out = []
    for I in fine_ps.sorted_intervals():
        k = bisect.bisect_right(los, I.lo) - 1
        P = civ[max(k, 0)]
        if not (P.lo <= I.lo and I.hi <= P.hi):
            raise PartitionError(f"{I.family}^{I.index} at level {fine_ps.level} is not inside a level-{coarse_ps.level} member")
        out.append(((I.family, I.index), (P.family, P.index)))
    return out


@dataclass
class RateSequence:
    levels: list
    rates: list  # r_n = sup |log Dh_{n+1}/Dh_n|
    predicted: list  # bound max(alpha^{1/l1}, alpha^{1/l2}) + lam_s^p * |dc_s| (proxy)
    profiles: list
    proxy_note: str = "stable-mode amplitude difference of log x2 fits (normalization of E^s unknown)"

    def to_json(self):
        return {
            "levels": self.levels,
            "rates": [to_decimal(mpfr(r), 12) if r else "0" for r in self.rates],
            "predicted_bound": [None if p is None else format(p, ".6g") for p in self.predicted],
            "proxy": self.proxy_note,
        }


def profiles(f, g, N: int, start: int = 1):
    """Partitions and profiles for levels start..N at a common precision."""
    f, g, bits = working_pair(f, g, N)
    out = []
    for n in range(start, N + 1):
        pf, pg = build_partition(f, n), build_partition(g, n)
        out.append((pf, pg, dh_profile(f, g, n, pf, pg)))
    return f, g, out


def cauchy_rate(f, g, N: int, lambda_s=None, dcs: float = 0.0, _cache=None) -> RateSequence:
    """r_n for n = 1..N-1, each level-(n+1) member compared with its level-n parent."""
    if _cache is None:
        f, g, data = profiles(f, g, N)
    else:
        f, g, data = _cache
    levels, rates, pred = [], [], []
    l1, l2 = float(f.ell1), float(f.ell2)
    for (pf0, _, D0), (pf1, _, D1) in zip(data, data[1:]):
        with working_precision(D1.precision):
            worst = mpfr(0)
            for child, parent in _parents(pf1, pf0):
                v = abs(gmpy2.log(D1.ratio_of(*child) / D0.ratio_of(*parent)))
                worst = v if v > worst else worst
        n = D0.level
        levels.append(n)
        rates.append(worst)
        D1.sup_log_change = worst
        if n >= 3:
            a = float(scaling_ratio(f, n - 2))
            b = max(a ** (1 / l1), a ** (1 / l2))
            if lambda_s is not None:
                b += lambda_s ** (n // 2) * abs(dcs)
            pred.append(b)
        else:
            pred.append(None)
    return RateSequence(levels, rates, pred, [d[2] for d in data])


@dataclass
class LimitProfile:
    values: list  # (x, D estimate)
    error: object
    inf: object
    sup: object
    converged: bool
    message: str = ""


def limit_profile(f, g, N: int, sample_points=None, rates: RateSequence | None = None) -> LimitProfile:
    """D(x) ~ Dh_N(x) with the tail sum of r_n extrapolated geometrically."""
    if rates is None:
        rates = cauchy_rate(f, g, N)
    r = [float(v) for v in rates.rates]
    if all(v == 0 for v in r):
        err, ok = 0.0, True
    elif len(r) >= 2 and r[-2] > 0 and r[-1] < r[-2]:
        q = r[-1] / r[-2]
        err, ok = r[-1] * q / (1 - q), True
    else:
        return LimitProfile([], None, None, None, False, "no limit profile: rates do not decay")
    prof = rates.profiles[-1]
    fN, _, bits = working_pair(f, g, N)
    ps = build_partition(fN, N)
    if sample_points is None:
        sample_points = [I.lo + (I.hi - I.lo) / 2 for I in ps.sorted_intervals()[:: max(1, len(ps.intervals()) // 64)]]
    vals = []
    for x in sample_points:
        I = ps.locate(mpfr(x, bits))
        vals.append((x, prof.ratio_of(I.family, I.index)))
    ds = [v for _, v in vals]
    return LimitProfile(vals, err, min(ds), max(ds), ok)


@dataclass
class OneSided:
    k: int
    levels: list
    ratios: list  # partition-measured
    reduced: list  # from renormalization data (k = 0), or None


def one_sided_ratio(f, g, k: int, N: int, runs=None) -> OneSided:
    """(|B^k(g)|/|B^k(f)|) / (|A^k(g)|/|A^k(f)|) on even levels 2m <= N.

    For k = 0 the same quantity follows from renormalization data as
    r(g)/r(f) with r = x_{3,m-1}/(-x_{1,m-1}) at level m = 2m' (the gap B_m
    is the level-(m-1) flat piece's distance to 0, A_m its first-return
    interval).
    """
    from .rotation import golden_denominators

    q = golden_denominators(N + 1)
    levels = [m for m in range(2, N + 1, 2) if q[m - 1] > k]
    if not levels:
        raise ValueError(f"k = {k} too large for depth {N}")
    fN, gN, bits = working_pair(f, g, N)
    ratios, reduced = [], []
    if k == 0 and runs is None:
        from .renorm import renormalize

        runs = (renormalize(fN, N, precision=bits, dual=False), renormalize(gN, N, precision=bits, dual=False))
    with working_precision(bits):
        for m in levels:
            pf, pg = build_partition(fN, m), build_partition(gN, m)
            Bf, Bg = pf.B[k], pg.B[k]
            Af, Ag = pf.A[k], pg.A[k]
            ratios.append((Bg.length / Bf.length) / (Ag.length / Af.length))
            if k == 0:
                sf, sg = runs[0].states[m - 1], runs[1].states[m - 1]
                reduced.append((sg.x3 / -sg.x1) / (sf.x3 / -sf.x1))
    return OneSided(k, levels, ratios, reduced if k == 0 else None)


@dataclass
class Classification:
    verdict: str
    evidence: dict

    @property
    def exit_code(self):
        return {C1: 0, NOT_C1: 10, INCONCLUSIVE: 20}[self.verdict]

    def to_json(self):
        return {"verdict": self.verdict, "evidence": self.evidence}


def _profile_stats(profs):
    return [
        {"level": p.level, "inf": to_decimal(p.inf, 12), "sup": to_decimal(p.sup, 12), "integral_deviation": to_decimal(p.integral_deviation, 6) if p.integral_deviation else "0"}
        for p in profs
    ]


def classify(f, g, depth: int = 12, tol_u: float = TOL_U, tol_plus: float = TOL_PLUS, conj_depth: int | None = None, run_f=None, run_g=None) -> Classification:
    """Fingerprint comparison plus constructive evidence from the conjugacy.

    The fingerprints decide; constructive evidence can only downgrade a
    match to inconclusive, never overrule a mismatch.
    """
    from .renorm import renormalize

    if not _same_exponents(f, g):
        raise ExponentMismatch("classification needs equal exponents")
    same = f is g or f.params.to_json() == g.params.to_json()
    rf = run_f or renormalize(f, depth, dual=False)
    rg = rf if same else (run_g or renormalize(g, depth, dual=False))
    fp_f = fingerprint(rf)
    fp_g = fp_f if same else fingerprint(rg)
    cmp = paired_comparison(rf, rg, None, tol_u, tol_plus, fp_f=fp_f, fp_g=fp_g)
    N = conj_depth if conj_depth is not None else min(depth, 10)
    rates = cauchy_rate(f, g, N)
    lim = limit_profile(f, g, N, rates=rates)
    side = one_sided_ratio(f, g, 0, N)
    profs = rates.profiles
    r = [float(v) for v in rates.rates]
    decaying = all(v == 0 for v in r) or (len(r) >= 3 and r[-1] < r[-3] and r[-1] < 0.1)
    bounds_ok = all(p.inf > 0 and gmpy2.is_finite(p.sup) for p in profs)
    side_ok = abs(float(side.ratios[-1]) - 1) <= 0.1
    evidence = {
        "fingerprints": {"f": fp_f.to_json(), "g": fp_g.to_json()},
        "comparison": cmp.to_json(),
        "cauchy_rate": rates.to_json(),
        "profiles": _profile_stats(profs),
        "limit_profile": {"converged": lim.converged, "inf": None if lim.inf is None else to_decimal(lim.inf, 12), "sup": None if lim.sup is None else to_decimal(lim.sup, 12), "message": lim.message},
        "one_sided_ratio": {"levels": side.levels, "ratios": [to_decimal(v, 12) for v in side.ratios], "reduced": [to_decimal(v, 12) for v in side.reduced]},
        "constructive": {"rates_decay": decaying, "bounds": bounds_ok, "one_sided_to_one": side_ok},
        "tolerances": {"tol_u": tol_u, "tol_plus": tol_plus},
        "depth": depth,
        "conjugacy_depth": N,
        "precision": {"renormalization": rf.precision, "conjugacy": profs[-1].precision},
    }
    if cmp.verdict == "mismatch":
        verdict = NOT_C1
    elif cmp.verdict == "match" and decaying and bounds_ok and side_ok and lim.converged:
        verdict = C1
    else:
        verdict = INCONCLUSIVE
    return Classification(verdict, evidence)


def profiles_csv(profs) -> str:
    parts = [profs[0].to_csv()]
    for p in profs[1:]:
        parts.append(p.to_csv().split("\n", 1)[1])
    return "".join(parts)
