"""Closed family of orientation-preserving diffeomorphisms of [0, 1].

identity, Moebius m_a(t) = a t / (1 + (a - 1) t) with a > 0, and finite
compositions.  Every member fixes 0 and 1, has an explicit inverse and
zero Schwarzian derivative.
"""

from __future__ import annotations

from dataclasses import dataclass

import gmpy2
from gmpy2 import mpfr

from .jets import Jet
from .numerics import real, to_decimal


class Diffeo:
    kind = "abstract"

    def __call__(self, t):
        raise NotImplementedError

    def inverse(self, y):
        raise NotImplementedError

    def to_json(self) -> dict:
        raise NotImplementedError

    def at_precision(self, bits: int) -> "Diffeo":
        return self

    def is_identity(self) -> bool:
        return False


@dataclass(frozen=True)
class Identity(Diffeo):
    kind = "identity"

    def __call__(self, t):
        return t

    def inverse(self, y):
        return y

    def to_json(self):
        return {"kind": "identity"}

    def is_identity(self):
        return True


@dataclass(frozen=True)
class Moebius(Diffeo):
    a: object
    kind = "moebius"

    def __post_init__(self):
        if not self.a > 0:
            raise ValueError("moebius parameter a must be > 0")

    def __call__(self, t):
        a = self.a
        return a * t / (1 + (a - 1) * t)

    def inverse(self, y):
        a = self.a
        return y / (a - (a - 1) * y)

    def to_json(self):
        return {"kind": "moebius", "a": to_decimal(self.a)}

    def at_precision(self, bits):
        return Moebius(real(self.a, bits))

    def is_identity(self):
        return self.a == 1


@dataclass(frozen=True)
class Composite(Diffeo):
    """parts[0] o parts[1] o ... (the last part is applied first)."""

    parts: tuple
    kind = "composite"

    def __call__(self, t):
        for p in reversed(self.parts):
            t = p(t)
        return t

    def inverse(self, y):
        for p in self.parts:
            y = p.inverse(y)
        return y

    def to_json(self):
        return {"kind": "composite", "parts": [p.to_json() for p in self.parts]}

    def at_precision(self, bits):
        return Composite(tuple(p.at_precision(bits) for p in self.parts))

    def is_identity(self):
        return all(p.is_identity() for p in self.parts)


def from_json(obj, bits: int | None = None) -> Diffeo:
    if obj is None:
        return Identity()
    kind = obj.get("kind")
    if kind == "identity":
        return Identity()
    if kind == "moebius":
        return Moebius(real(obj["a"], bits))
    if kind == "composite":
        return Composite(tuple(from_json(p, bits) for p in obj["parts"]))
    raise ValueError(f"unknown diffeo kind: {kind!r}")


def check_diffeo(phi: Diffeo, grid: int = 1024) -> dict:
    """Endpoint, positivity and third-derivative checks on a uniform grid."""
    ends_ok = phi(mpfr(0)) == 0 and phi(mpfr(1)) == 1
    min_d1 = None
    max_d3 = mpfr(0)
    for k in range(grid + 1):
        j = phi(Jet.variable(mpfr(k) / grid))
        if min_d1 is None or j.d1 < min_d1:
            min_d1 = j.d1
        max_d3 = max(max_d3, abs(j.d3))
    # finite-difference third derivative as an independent C^3 proxy
    h = mpfr(1) / grid
    fd3 = mpfr(0)
    for k in range(grid - 2):
        t = mpfr(k) / grid
        v = [phi(t + i * h) for i in range(4)]
        fd3 = max(fd3, abs((v[3] - 3 * v[2] + 3 * v[1] - v[0]) / h**3))
    return {
        "endpoints_fixed": bool(ends_ok),
        "min_derivative": min_d1,
        "derivative_positive": bool(min_d1 > 0),
        "max_third_derivative": max_d3,
        "fd_third_derivative": fd3,
        "third_derivative_bounded": bool(gmpy2.is_finite(max_d3) and gmpy2.is_finite(fd3)),
    }

