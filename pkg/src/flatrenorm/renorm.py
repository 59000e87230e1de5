"""The renormalization operator, its iterates and the coordinate changes.

Level n+1 is built from level n (in level-n coordinates, h(x) = x / x_{1,n}):

    left branch   f1' = h o f2 o h^-1
    right branches f2' = h o f4 o f1 o h^-1,  f4' = h o f2 o f1 o h^-1
    flat piece    U' = h(f1^-1(U))

so the exponent order swaps at every level.  Branches are kept as composition
chains of base branches evaluated in base coordinates X = P_n x with
P_{n+1} = P_n x_{1,n}; no normal-form factorization is attempted.  Because
f1' = ((1 - s') psi + s')**ell_second exactly, with s' = phi_l(S_1) and psi
the rescaled phi_l, the level-n parameter s_n is recovered exactly from
x_{2,n} = s_n ** ell_second.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import gmpy2
from gmpy2 import mpfr

from .jets import Jet, power
from .mapcore import Check, ValidationReport, q_s_inverse
from .numerics import PrecisionBudgetExceeded, check_budget, required_precision, to_decimal, working_precision
from .orbit import first_return_levels, level_violation


class RenormError(RuntimeError):
    def __init__(self, msg, level=None):
        super().__init__(f"level {level}: {msg}" if level is not None else msg)
        self.level = level


class DualPathMismatch(RenormError):
    pass


class EscalationRequest(RuntimeError):
    pass


# -- coordinate changes --------------------------------------------------------


def x_to_S(x1, x2, x3, x4, s):
    S1 = (x3 - x2) / x3
    S2 = (1 - x4) / (1 - x2)
    S3 = x3 / (1 - x4)
    S4 = -x2 / x1
    return (S1, S2, S3, S4, s)


def S_to_x(S1, S2, S3, S4, S5):
    """Algebraic inverse of x_to_S; x1 = -x2 / S4 carries the sign."""
    k = S3 * (1 - S1) * S2
    x2 = k / (1 + k)
    x3 = x2 / (1 - S1)
    x4 = 1 - x3 / S3
    x1 = -x2 / S4
    return (x1, x2, x3, x4, S5)


def S_to_y(S1, S2, S3, S4, S5):
    for i, v in enumerate((S2, S3, S4, S5), start=2):
        if v is None or not v > 0:
            raise ValueError(f"S{i} must be positive for the log coordinates")
    return (S1, gmpy2.log(S2), gmpy2.log(S3), gmpy2.log(S4), gmpy2.log(S5))


def y_to_S(y1, y2, y3, y4, y5):
    return (y1, gmpy2.exp(y2), gmpy2.exp(y3), gmpy2.exp(y4), gmpy2.exp(y5))


# -- branch chains -------------------------------------------------------------


class Chains:
    """Composition chains of the level-n branches in terms of base branches."""

    RULES = {"f1": ("f2",), "f2": ("f1", "f4"), "f4": ("f1", "f2")}

    def __init__(self, base):
        self.base = base

    def apply(self, name, n, X):
        if n == 0:
            return self.base._branch(name, X)
        for sub in self.RULES[name]:
            X = self.apply(sub, n - 1, X)
        return X

    def inverse(self, name, n, Y):
        if n == 0:
            return self.base._inv(name, Y)
        for sub in reversed(self.RULES[name]):
            Y = self.inverse(sub, n - 1, Y)
        return Y

    def word(self, name, n) -> list:
        if n == 0:
            return [name]
        out = []
        for sub in self.RULES[name]:
            out += self.word(sub, n - 1)
        return out

    def length(self, name, n) -> int:
        if n == 0:
            return 1
        return sum(self.length(sub, n - 1) for sub in self.RULES[name])


@dataclass
class RenormState:
    level: int
    exponent_order: tuple
    x1: object
    x2: object
    x3: object
    x4: object
    s: object
    scale: object  # P_n, the base-coordinate size of the level-n chart
    chains: Chains
    precision: int
    s_source: str = "normal form"
    base_ell: tuple = field(default=(None, None))

    @property
    def boundary(self):
        return (self.x1, self.x2, self.x3, self.x4)

    @property
    def S(self):
        return x_to_S(self.x1, self.x2, self.x3, self.x4, self.s)

    @property
    def y(self):
        return S_to_y(*self.S)

    @property
    def w(self):
        return w_vector(self)

    @property
    def domain_left(self):
        return self.x1

    @property
    def length(self):
        return 1 - self.x1

    def context(self):
        return working_precision(self.precision)

    # level-n branches in level-n coordinates; values or jets
    def _branch(self, name, x):
        if name == "flat":
            return mpfr(0) if not isinstance(x, Jet) else Jet(mpfr(0), mpfr(0), mpfr(0), mpfr(0))
        P = self.scale
        return self.chains.apply(name, self.level, x * P) / P

    def _inv(self, name, y):
        P = self.scale
        return self.chains.inverse(name, self.level, y * P) / P

    def _f(self, x):
        if x < 0:
            return self._branch("f1", x)
        if x < self.x3:
            return self._branch("f2", x)
        if x < self.x4:
            return mpfr(0)
        return self._branch("f4", x)

    def branch(self, name, x):
        with self.context():
            return self._branch(name, x if isinstance(x, Jet) else mpfr(x))

    def invert_branch(self, name, y):
        with self.context():
            return self._inv(name, mpfr(y))

    def branch_word(self, name) -> list:
        """The base-branch word of a level-n branch, applied left to right."""
        return self.chains.word(name, self.level)

    @property
    def branch_repr(self) -> dict:
        return {b: self.chains.length(b, self.level) for b in ("f1", "f2", "f4")}

    # normal-form diffeo parts, recovered pointwise
    def phi(self, t):
        ell = self.exponent_order[1]
        x = self.x1 * (1 - t)
        y = (self._branch("f1", x) - self.x2) / (1 - self.x2)
        return q_s_inverse(self.s, ell, y) if not isinstance(y, Jet) else _q_s_inverse_jet(self.s, ell, y)

    def phi_l(self, u):
        ell = self.exponent_order[0]
        return power(self._branch("f2", self.x3 - self.x3 * u) / self.x1, 1 / ell)

    def phi_r(self, v):
        ell = self.exponent_order[1]
        return power(self._branch("f4", self.x4 + (1 - self.x4) * v) / self.x2, 1 / ell)


def _q_s_inverse_jet(s, ell, y):
    sl = s**ell
    return (power(y * (1 - sl) + sl, 1 / ell) - s) / (1 - s)


def w_vector(state: RenormState):
    """(y2, y3, y4, y5) at the state's level."""
    return tuple(state.y[1:])


def level_zero(f) -> RenormState:
    with f.context():
        return RenormState(
            0, (f.ell1, f.ell2), f.x1, f.x2, f.x3, f.x4, f.s, mpfr(1), Chains(f), f.precision, "base map", (f.ell1, f.ell2)
        )


def renormalize_once(state: RenormState) -> RenormState:
    n = state.level
    bad = level_violation(*state.boundary)
    if bad:
        raise RenormError(f"not renormalizable ({bad})", n)
    with state.context():
        x1, x2, x3, x4 = state.boundary
        if not (x2 < x3 and x4 < 1):
            raise RenormError("f1 image fails to reach the flat piece", n)
        P = state.scale * x1
        nx1 = x2 / x1
        a = state._inv("f1", x4) / x1
        b = state._inv("f1", x3) / x1
        order = (state.exponent_order[1], state.exponent_order[0])
        new = RenormState(n + 1, order, nx1, None, a, b, None, P, state.chains, state.precision, "x2 = s**ell_second", state.base_ell)
        # x_{2,n+1}: the right branch at the chart end 1 (identified with x_{1,n+1})
        new.x2 = new._branch("f4", mpfr(1))
        if not new.x2 > 0:
            raise RenormError("critical value collapsed", n + 1)
        new.s = new.x2 ** (1 / order[1])
    return new


@dataclass
class RenormRun:
    states: list
    dual: list  # first-return (x1, x2, x3, x4) per level, or None
    discrepancy: list  # max relative difference per level
    precision: int
    escalations: int = 0
    precision_log: list = field(default_factory=list)

    @property
    def depth(self):
        return len(self.states) - 1

    def max_discrepancy(self, upto=None):
        vals = self.discrepancy if upto is None else self.discrepancy[: upto + 1]
        return max(vals) if vals else mpfr(0)

    def to_csv(self) -> str:
        return levels_csv(self.states, self.precision)


def _rel(a, b):
    if a == b:
        return mpfr(0)
    return abs(a - b) / max(abs(a), abs(b))


def _discrepancy(state, dual):
    x1, x2, x3, x4 = dual
    parts = [
        _rel(state.x1, x1),
        _rel(state.x2, x2),
        _rel(state.x3, x3),
        _rel(state.x4, x4),
        _rel(1 - state.x4, 1 - x4),
    ]
    return max(parts)


def _crowded(state, bits):
    x1, x2, x3, x4 = state.boundary
    gaps = (-x1, x2, x3 - x2, x4 - x3, 1 - x4)
    return min(abs(g) for g in gaps) < mpfr(2) ** (-(bits - 32))


def renormalize(f, n: int, precision="auto", dual: bool = True, dual_tol=None, max_escalations: int = 8) -> RenormRun:
    """Levels 0..n of the renormalization of f, with the first-return cross-check.

    Precision "auto" starts at required_precision(n).  Whenever two extracted
    endpoints of a level come closer than 2^-(bits-32) the whole run restarts at
    twice the precision.  ``dual_tol`` turns a first-return mismatch into
    DualPathMismatch.
    """
    # never below the map's own precision: tuned parameters carry it
    bits = max(required_precision(n), f.precision) if precision == "auto" else check_budget(int(precision))
    escalations = 0
    plog = []
    while True:
        g = f.at_precision(bits)
        states = [level_zero(g)]
        crowded = False
        for k in range(n):
            st = renormalize_once(states[-1])
            states.append(st)
            if _crowded(st, bits):
                crowded = True
                break
        plog.append(bits)
        if not crowded:
            break
        if escalations >= max_escalations:
            raise EscalationRequest(f"endpoints still crowded at {bits} bits")
        escalations += 1
        bits = check_budget(2 * bits)
    duals, disc = [], []
    if dual:
        scan = first_return_levels(g, n, stop_on_failure=True)
        with working_precision(bits):
            for k, st in enumerate(states):
                if k < len(scan.levels):
                    duals.append(scan.levels[k])
                    disc.append(_discrepancy(st, scan.levels[k]))
                else:
                    duals.append(None)
                    disc.append(mpfr("inf"))
        if dual_tol is not None:
            for k, d in enumerate(disc):
                if not d <= dual_tol:
                    raise DualPathMismatch(f"composition and first-return data differ by {d}", k)
    return RenormRun(states, duals, disc, bits, escalations, plog)


def validate_state(state: RenormState, grid: int = 512, schwarzian_samples: int = 16) -> ValidationReport:
    """Class membership of the level-n map, checked through its chains."""
    from .jets import schwarzian_of

    checks = []
    with state.context():
        x1, x2, x3, x4 = state.boundary
        checks.append(Check("sigma_x", bool(x1 < 0 < x2 and x3 < x4 < 1 and 0 < state.s < 1), ""))
        l1, l2 = state.exponent_order
        checks.append(Check("exponents", bool(1 < l1 < 2 and 1 < l2 < 2 and l1 != l2), ""))
        expect = tuple(state.base_ell) if state.level % 2 == 0 else tuple(reversed(state.base_ell))
        checks.append(Check("exponent_parity", tuple(state.exponent_order) == expect, ""))
        checks.append(Check("critical_value_left_of_flat", bool(0 < x2 < x3), ""))
        tol = mpfr(2) ** (-(state.precision // 2))
        gaps = (
            abs(state._branch("f1", x1) - x2),
            abs(state._branch("f1", mpfr(0)) - 1),
            abs(state._branch("f2", mpfr(0)) - x1) / abs(x1),
            abs(state._branch("f2", x3)),
            abs(state._branch("f4", x4)),
            abs(state._branch("f4", mpfr(1)) - x2) / x2,
        )
        worst = max(gaps)
        checks.append(Check("joint_continuity", bool(worst <= tol), to_decimal(worst, 6)))
        L = 1 - x1
        prev, mono = None, True
        for k in range(grid + 1):
            x = x1 + L * k / grid
            if x > 1:
                x = mpfr(1)
            y = state._f(x)
            F = y if x < 0 else y + L
            if prev is not None and F < prev:
                mono = False
                break
            prev = F
        checks.append(Check("lift_monotone", mono, ""))
        worst_s = None
        for name, (a, b) in (("f1", (x1, mpfr(0))), ("f2", (mpfr(0), x3)), ("f4", (x4, mpfr(1)))):
            for k in range(1, schwarzian_samples + 1):
                x = a + (b - a) * k / (schwarzian_samples + 1)
                sv = schwarzian_of(state._branch(name, Jet.variable(x)))
                worst_s = sv if worst_s is None or sv > worst_s else worst_s
        checks.append(Check("schwarzian_negative", bool(worst_s < 0), to_decimal(worst_s, 6)))
    return ValidationReport(checks)


def distortion(branch, interval, grid: int = 256):
    """sup over grid pairs of |log(branch'(x) / branch'(y))| on a closed interval.

    ``branch`` must accept jets.  Endpoints are excluded when a derivative is
    not finite there (power singularities of the branch ends).
    """
    a, b = mpfr(interval[0]), mpfr(interval[1])
    lo = hi = None
    for k in range(grid + 1):
        x = a + (b - a) * k / grid
        d = branch(Jet.variable(x)).d1
        if not gmpy2.is_finite(d) and k in (0, grid):
            continue
        if not d > 0:
            raise ValueError(f"derivative not positive at {x}")
        lo = d if lo is None or d < lo else lo
        hi = d if hi is None or d > hi else hi
    return gmpy2.log(hi) - gmpy2.log(lo)


def diffeo_distortions(state: RenormState, grid: int = 64) -> dict:
    with state.context():
        one = mpfr(1)
        return {
            "phi": distortion(state.phi, (mpfr(0), one), grid),
            "phi_l": distortion(state.phi_l, (mpfr(0), one), grid),
            "phi_r": distortion(state.phi_r, (mpfr(0), one), grid),
        }


LEVEL_COLUMNS = ["level", "x1", "x2", "x3", "x4", "S1", "S2", "S3", "S4", "S5", "y2", "y3", "y4", "y5", "precision_bits"]


def levels_csv(states, precision, digits: int = 40) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(LEVEL_COLUMNS)
    for st in states:
        with st.context():
            S = st.S
            y = st.y
            row = [st.level] + [to_decimal(v, digits) for v in st.boundary]
            row += [to_decimal(v, digits) for v in S]
            row += [to_decimal(v, digits) for v in y[1:]]
            row.append(precision)
        w.writerow(row)
    return buf.getvalue()
