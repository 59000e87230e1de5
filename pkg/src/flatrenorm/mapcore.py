"""Circle maps with a flat interval, in piecewise normal form.

The circle is the chart [x1, 1] with x1 identified with 1 (length 1 - x1).
On it

    f1(x) = (1 - x2) q_s(phi((x1 - x) / x1)) + x2          on [x1, 0]
    f2(x) = x1 (phi_l((x3 - x) / x3)) ** ell1               on [0, x3]
    f(x)  = 0                                              on U = [x3, x4]
    f4(x) = x2 (phi_r((x - x4) / (1 - x4))) ** ell2         on [x4, 1]

with q_s(u) = (((1 - s) u + s) ** ell2 - s ** ell2) / (1 - s ** ell2).
The branch images [x2, 1], [x1, 0] and [0, x2] have disjoint interiors, so f
is injective off U and every branch has a closed-form inverse.
"""

from __future__ import annotations

import json
import math
import random
import warnings
from dataclasses import dataclass, field, replace

import gmpy2
from gmpy2 import mpfr

from . import diffeo as df
from .jets import Jet, power, schwarzian_of
from .numerics import (
    Bracket,
    DEFAULT_PRECISION,
    real,
    solve_monotone,
    to_decimal,
    working_precision,
)

BRANCHES = ("f1", "f2", "f4")
PARAM_KEYS = ("x1", "x2", "x3", "x4", "s", "ell1", "ell2")


class DomainError(ValueError):
    pass


class RangeError(ValueError):
    pass


class UndefinedSchwarzian(ValueError):
    pass


class JointWarning(UserWarning):
    pass


def q_s_eval(s, ell2, x):
    """([(1-s)x+s]**ell2 - s**ell2) / (1 - s**ell2); works on jets."""
    if not (0 < s < 1):
        raise ValueError("q_s requires 0 < s < 1")
    sl = s**ell2
    return (power((1 - s) * x + s, ell2) - sl) / (1 - sl)


def q_s_inverse(s, ell2, y):
    sl = s**ell2
    return ((y * (1 - sl) + sl) ** (1 / ell2) - s) / (1 - s)


@dataclass(frozen=True)
class FlatMapParams:
    x1: object
    x2: object
    x3: object
    x4: object
    s: object
    ell1: object
    ell2: object
    phi: df.Diffeo = field(default_factory=df.Identity)
    phi_l: df.Diffeo = field(default_factory=df.Identity)
    phi_r: df.Diffeo = field(default_factory=df.Identity)

    @classmethod
    def from_values(cls, bits: int = DEFAULT_PRECISION, **kw) -> "FlatMapParams":
        vals = {k: real(kw[k], bits) for k in PARAM_KEYS}
        for k in ("phi", "phi_l", "phi_r"):
            d = kw.get(k)
            vals[k] = df.from_json(d, bits) if isinstance(d, dict) or d is None else d.at_precision(bits)
        return cls(**vals)

    @staticmethod
    def json_precision(obj: dict, floor: int = DEFAULT_PRECISION) -> int:
        """Bits that hold every decimal string of a map file without loss."""
        digits = 0
        for k in PARAM_KEYS:
            v = obj.get(k)
            if isinstance(v, str):
                mant = v.strip().lower().split("e")[0]
                digits = max(digits, sum(c.isdigit() for c in mant))
        return max(floor, int(math.ceil(digits * math.log2(10))) + 16)

    @classmethod
    def from_json(cls, obj: dict, bits: int = DEFAULT_PRECISION) -> "FlatMapParams":
        missing = [k for k in PARAM_KEYS if k not in obj]
        if missing:
            raise ValueError(f"map JSON lacks keys: {missing}")
        for k in PARAM_KEYS:
            if not isinstance(obj[k], str):
                raise ValueError(f"{k} must be a decimal string")
        return cls.from_values(bits, **{k: obj.get(k) for k in PARAM_KEYS + ("phi", "phi_l", "phi_r")})

    def to_json(self, digits: int | None = None) -> dict:
        out = {k: to_decimal(getattr(self, k), digits) for k in PARAM_KEYS}
        for k in ("phi", "phi_l", "phi_r"):
            out[k] = getattr(self, k).to_json()
        return out

    def at_precision(self, bits: int) -> "FlatMapParams":
        vals = {k: mpfr(getattr(self, k), bits) for k in PARAM_KEYS}
        for k in ("phi", "phi_l", "phi_r"):
            vals[k] = getattr(self, k).at_precision(bits)
        return FlatMapParams(**vals)

    def with_knob(self, knob: str, value, comove: bool = True) -> "FlatMapParams":
        """Set one parameter; for x4 (or x3) the other flat endpoint co-moves."""
        bits = self.precision
        with working_precision(bits):
            value = mpfr(value, bits)
            if knob == "x4" and comove:
                return replace(self, x3=value - (self.x4 - self.x3), x4=value)
            if knob == "x3" and comove:
                return replace(self, x3=value, x4=value + (self.x4 - self.x3))
            return replace(self, **{knob: value})

    @property
    def precision(self) -> int:
        return max(getattr(self, k).precision for k in PARAM_KEYS)


class FlatCircleMap:
    """Immutable evaluator for one parameter set at a fixed precision."""

    def __init__(self, params: FlatMapParams, precision: int | None = None):
        if precision is None:
            precision = params.precision
        self.precision = int(precision)
        self.params = params.at_precision(self.precision)
        p = self.params
        with working_precision(self.precision):
            self.x1, self.x2, self.x3, self.x4 = p.x1, p.x2, p.x3, p.x4
            self.s, self.ell1, self.ell2 = p.s, p.ell1, p.ell2
            self.phi, self.phi_l, self.phi_r = p.phi, p.phi_l, p.phi_r
            self.length = 1 - p.x1
            self._sl = p.s**p.ell2
            self._inv1 = 1 / p.ell1
            self._inv2 = 1 / p.ell2
            self._plain = p.phi.is_identity() and p.phi_l.is_identity() and p.phi_r.is_identity()

    # -- construction helpers ----------------------------------------------
    @classmethod
    def from_json(cls, obj: dict, bits: int = DEFAULT_PRECISION) -> "FlatCircleMap":
        return cls(FlatMapParams.from_json(obj, bits), bits)

    @classmethod
    def load(cls, path, bits: int = DEFAULT_PRECISION) -> "FlatCircleMap":
        with open(path) as fh:
            return cls.from_json(json.load(fh), bits)

    def at_precision(self, bits: int) -> "FlatCircleMap":
        return FlatCircleMap(self.params, bits)

    def context(self):
        return working_precision(self.precision)

    # -- raw branches (caller holds the precision context) -----------------
    def _f1(self, x):
        t = (self.x1 - x) / self.x1
        if not self._plain:
            t = self.phi(t)
        return (1 - self.x2) * self._qs(t) + self.x2

    def _qs(self, u):
        return (power((1 - self.s) * u + self.s, self.ell2) - self._sl) / (1 - self._sl)

    def _f2(self, x):
        t = (self.x3 - x) / self.x3
        if not self._plain:
            t = self.phi_l(t)
        return self.x1 * power(t, self.ell1)

    def _f4(self, x):
        t = (x - self.x4) / (1 - self.x4)
        if not self._plain:
            t = self.phi_r(t)
        return self.x2 * power(t, self.ell2)

    def _branch(self, name, x):
        if name == "f1":
            return self._f1(x)
        if name == "f2":
            return self._f2(x)
        if name == "f4":
            return self._f4(x)
        if name == "flat":
            return mpfr(0) if not isinstance(x, Jet) else Jet(mpfr(0), mpfr(0), mpfr(0), mpfr(0))
        raise ValueError(f"unknown branch {name!r}")

    def _inv(self, name, y):
        if name == "f1":
            q = (y - self.x2) / (1 - self.x2)
            t = ((q * (1 - self._sl) + self._sl) ** self._inv2 - self.s) / (1 - self.s)
            if not self._plain:
                t = self.phi.inverse(t)
            return self.x1 * (1 - t)
        if name == "f2":
            u = (y / self.x1) ** self._inv1
            if not self._plain:
                u = self.phi_l.inverse(u)
            return self.x3 - self.x3 * u
        if name == "f4":
            u = (y / self.x2) ** self._inv2
            if not self._plain:
                u = self.phi_r.inverse(u)
            return self.x4 + (1 - self.x4) * u
        raise ValueError(f"unknown branch {name!r}")

    def _f(self, x):
        if x < 0:
            return self._f1(x)
        if x < self.x3:
            return self._f2(x)
        if x < self.x4:
            return mpfr(0)
        return self._f4(x)

    def branch_of(self, x) -> str:
        """Branch used by eval at x (ties go to the right-hand branch)."""
        if x < 0:
            return "f1"
        if x < self.x3:
            return "f2"
        if x < self.x4:
            return "flat"
        return "f4"

    def image_branch(self, y) -> str:
        """Branch whose image contains y; at image endpoints the interior side is ambiguous."""
        if y >= self.x2:
            return "f1"
        if y <= 0:
            return "f2"
        return "f4"

    def _check_domain(self, x):
        if not (self.x1 <= x <= 1):
            raise DomainError(f"point {x} outside the chart [x1, 1]")

    # -- public API --------------------------------------------------------
    def eval(self, x):
        with self.context():
            x = mpfr(x)
            self._check_domain(x)
            return self._f(x)

    __call__ = eval

    def branch(self, name: str, x):
        with self.context():
            return self._branch(name, mpfr(x) if not isinstance(x, Jet) else x)

    def lift(self, x):
        """Degree-one lift: f on [x1, 0), f + (1 - x1) on [0, 1]."""
        with self.context():
            x = mpfr(x)
            self._check_domain(x)
            y = self._f(x)
            return y if x < 0 else y + self.length

    def joints(self):
        return (self.x1, mpfr(0), self.x3, self.x4, mpfr(1))

    def _jet(self, x, side):
        name = self.branch_of(x)
        if side == "left":
            if x == 0:
                name = "f1"
            elif x == self.x3:
                name = "f2"
            elif x == self.x4:
                name = "flat"
            elif x == 1:
                name = "f4"
        return name, self._branch(name, Jet.variable(x))

    def _at_joint(self, x):
        return any(x == j for j in self.joints())

    def derivative(self, x, side: str | None = None):
        with self.context():
            x = mpfr(x)
            self._check_domain(x)
            if side is None and self._at_joint(x):
                warnings.warn(f"derivative at joint {x}: right-hand branch used", JointWarning, stacklevel=2)
            _, j = self._jet(x, side)
            return j.d1

    def schwarzian(self, x, side: str | None = None):
        with self.context():
            x = mpfr(x)
            self._check_domain(x)
            if self.x3 < x < self.x4:
                raise UndefinedSchwarzian("Schwarzian undefined on the flat piece")
            if side is None and self._at_joint(x):
                warnings.warn(f"Schwarzian at joint {x}: right-hand branch used", JointWarning, stacklevel=2)
            name, j = self._jet(x, side)
            if name == "flat":
                raise UndefinedSchwarzian("Schwarzian undefined on the flat piece")
            return schwarzian_of(j)

    def branch_image(self, name: str):
        if name == "f1":
            return (self.x2, mpfr(1))
        if name == "f2":
            return (self.x1, mpfr(0))
        if name == "f4":
            return (mpfr(0), self.x2)
        raise ValueError(f"unknown branch {name!r}")

    def branch_domain(self, name: str):
        return {"f1": (self.x1, mpfr(0)), "f2": (mpfr(0), self.x3), "f4": (self.x4, mpfr(1))}[name]

    def invert_branch(self, name: str, y, method: str = "analytic", tol=None):
        """Unique preimage of y on the named branch.

        ``method="analytic"`` uses the closed-form inverse; ``"solve"`` runs
        the bracketed monotone solver on the forward branch instead.
        """
        with self.context():
            y = mpfr(y)
            lo, hi = self.branch_image(name)
            if not (lo <= y <= hi):
                raise RangeError(f"{y} outside the image of {name}")
            if method == "analytic":
                return self._inv(name, y)
            if method != "solve":
                raise ValueError("method must be 'analytic' or 'solve'")
            a, b = self.branch_domain(name)
            if tol is None:
                tol = mpfr(2) ** (16 - self.precision)
            return solve_monotone(lambda t: self._branch(name, t), Bracket(a, b), y, tol)

    def to_json(self) -> dict:
        return self.params.to_json()


# -- validation --------------------------------------------------------------


@dataclass
class Check:
    name: str
    passed: bool
    detail: str = ""


@dataclass
class ValidationReport:
    checks: list

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def failures(self):
        return [c for c in self.checks if not c.passed]

    def get(self, name):
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def to_json(self) -> dict:
        return {
            "passed": self.passed,
            "checks": [{"name": c.name, "passed": c.passed, "detail": c.detail} for c in self.checks],
        }


def _fmt(x) -> str:
    return to_decimal(mpfr(x), 12)


def validate(f: FlatCircleMap, grid: int = 4096, schwarzian_samples: int = 64, seed: int = 0) -> ValidationReport:
    """Membership checks for the class; failures are report entries, never exceptions."""
    p = f.params
    checks = []
    with f.context():
        x1, x2, x3, x4, s = p.x1, p.x2, p.x3, p.x4, p.s
        sig = x1 < 0 < x2 and x3 < x4 < 1 and 0 < s < 1
        checks.append(Check("sigma_x", bool(sig), f"x1={_fmt(x1)} x2={_fmt(x2)} x3={_fmt(x3)} x4={_fmt(x4)} s={_fmt(s)}"))
        ex = 1 < p.ell1 < 2 and 1 < p.ell2 < 2 and p.ell1 != p.ell2
        checks.append(Check("exponents", bool(ex), f"ell1={_fmt(p.ell1)} ell2={_fmt(p.ell2)}"))
        cv = 0 < x2 < x3
        checks.append(Check("critical_value_left_of_flat", bool(cv), "requires 0 < x2 < x3"))
        for k in ("phi", "phi_l", "phi_r"):
            d = df.check_diffeo(getattr(p, k), grid=256)
            ok = d["endpoints_fixed"] and d["derivative_positive"] and d["third_derivative_bounded"]
            checks.append(Check(f"diffeo_{k}", bool(ok), f"min D={_fmt(d['min_derivative'])}"))
        if not (sig and ex):
            # the branch formulas are meaningless outside the parameter domain
            return ValidationReport(checks)

        tol = mpfr(2) ** (16 - f.precision)
        gaps = {
            "x1=1": abs(f._f1(x1) - f._f4(mpfr(1))),
            "0": abs((f._f1(mpfr(0)) - f.length) - f._f2(mpfr(0))),
            "x3": abs(f._f2(x3)),
            "x4": abs(f._f4(x4)),
            "f1(x1)=x2": abs(f._f1(x1) - x2),
        }
        worst = max(gaps.values())
        checks.append(
            Check("joint_continuity", bool(worst <= tol), "max gap " + _fmt(worst) + " tol " + _fmt(tol))
        )

        prev = None
        mono = True
        for k in range(grid + 1):
            x = x1 + f.length * k / grid
            if x > 1:
                x = mpfr(1)
            y = f._f(x)
            fx = y if x < 0 else y + f.length
            if prev is not None and fx < prev:
                mono = False
                break
            prev = fx
        checks.append(Check("lift_monotone", mono, f"{grid}-point grid"))

        worst_s = None
        for name in BRANCHES:
            a, b = f.branch_domain(name)
            for k in range(1, schwarzian_samples + 1):
                x = a + (b - a) * k / (schwarzian_samples + 1)
                sv = schwarzian_of(f._branch(name, Jet.variable(x)))
                if worst_s is None or sv > worst_s:
                    worst_s = sv
        checks.append(Check("schwarzian_negative", bool(worst_s < 0), "max sampled " + _fmt(worst_s)))

        rng = random.Random(seed)
        inj = True
        for name in BRANCHES:
            a, b = f.branch_domain(name)
            for _ in range(32):
                u, v = sorted((rng.random(), rng.random()))
                if u == v:
                    continue
                xa = a + (b - a) * real(repr(u))
                xb = a + (b - a) * real(repr(v))
                if f._branch(name, xa) == f._branch(name, xb):
                    inj = False
        checks.append(Check("injective_off_flat", inj, "random pairs per branch"))
    return ValidationReport(checks)
