"""Third-order jets (truncated derivative towers) for analytic derivatives.

A ``Jet`` carries (f, f', f'', f''') at a point.  Branch formulas are written
with ordinary arithmetic plus :func:`power`, so the same code evaluates a
plain value or a jet.
"""

from __future__ import annotations

import gmpy2
from gmpy2 import mpfr


class Jet:
    __slots__ = ("d0", "d1", "d2", "d3")

    def __init__(self, d0, d1=0, d2=0, d3=0):
        self.d0, self.d1, self.d2, self.d3 = d0, d1, d2, d3

    @classmethod
    def variable(cls, x):
        return cls(mpfr(x), mpfr(1), mpfr(0), mpfr(0))

    def _lift(self, other):
        return other if isinstance(other, Jet) else Jet(other, 0, 0, 0)

    def __add__(self, other):
        o = self._lift(other)
        return Jet(self.d0 + o.d0, self.d1 + o.d1, self.d2 + o.d2, self.d3 + o.d3)

    __radd__ = __add__

    def __neg__(self):
        return Jet(-self.d0, -self.d1, -self.d2, -self.d3)

    def __sub__(self, other):
        return self + (-self._lift(other))

    def __rsub__(self, other):
        return self._lift(other) + (-self)

    def __mul__(self, other):
        if not isinstance(other, Jet):
            return Jet(self.d0 * other, self.d1 * other, self.d2 * other, self.d3 * other)
        a, b = self, other
        return Jet(
            a.d0 * b.d0,
            a.d1 * b.d0 + a.d0 * b.d1,
            a.d2 * b.d0 + 2 * a.d1 * b.d1 + a.d0 * b.d2,
            a.d3 * b.d0 + 3 * a.d2 * b.d1 + 3 * a.d1 * b.d2 + a.d0 * b.d3,
        )

    __rmul__ = __mul__

    def reciprocal(self):
        # derivatives of 1/u by the chain rule with g(t) = 1/t
        u = self.d0
        g1, g2, g3 = -1 / u**2, 2 / u**3, -6 / u**4
        return self._compose(1 / u, g1, g2, g3)

    def __truediv__(self, other):
        if not isinstance(other, Jet):
            return Jet(self.d0 / other, self.d1 / other, self.d2 / other, self.d3 / other)
        return self * other.reciprocal()

    def __rtruediv__(self, other):
        return self.reciprocal() * other

    def _compose(self, g0, g1, g2, g3):
        """Jet of g(u) given g and its derivatives at u = self.d0 (Faa di Bruno)."""
        u1, u2, u3 = self.d1, self.d2, self.d3
        return Jet(
            g0,
            g1 * u1,
            g2 * u1 * u1 + g1 * u2,
            g3 * u1 * u1 * u1 + 3 * g2 * u1 * u2 + g1 * u3,
        )

    def __repr__(self):
        return f"Jet({self.d0}, {self.d1}, {self.d2}, {self.d3})"


def power(u, ell):
    """u**ell for u >= 0, on values or jets."""
    if not isinstance(u, Jet):
        return u**ell
    x = u.d0
    if x == 0:
        # one-sided: the derivative tower of t**ell (1<ell<2) blows up at 0
        g0 = mpfr(0)
        return Jet(g0, mpfr(0) if ell > 1 else gmpy2.inf(), gmpy2.inf(), gmpy2.inf())
    p = x**ell
    g1 = ell * p / x
    g2 = (ell - 1) * g1 / x
    g3 = (ell - 2) * g2 / x
    return u._compose(p, g1, g2, g3)


def value(u):
    return u.d0 if isinstance(u, Jet) else u


def schwarzian_of(j: Jet):
    """S = f'''/f' - 3/2 (f''/f')**2."""
    r = j.d2 / j.d1
    return j.d3 / j.d1 - 3 * r * r / 2
