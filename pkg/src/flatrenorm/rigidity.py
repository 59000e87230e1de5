"""Rigidity characteristics estimated from renormalization level tables.

Along one parity the level data behave like

    log x_{2,n}          = a * lam_u**p + b * lam_s**p + ...
    log(-x_{1,n}) - log x_{2,n} = a' * lam_u**p + b' * lam_s**p + const + ...
    sum_{k<=n} log S_{4,k} = A * lam_u**p + B * p + C + D * lam_s**p + ...

with p = floor(n/2) and B = c_+ + c'_+.  The exponential rates are found by
linear prediction (Prony) on first differences, which removes the constants
and allows the stable mode to be resolved instead of biasing the unstable one.
Amplitudes and B then come from linear least squares with the rates fixed.

Fits run in float64 on the log-scale table; the tables themselves are built
from MPFR level data.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import gmpy2
import numpy as np
from gmpy2 import mpfr

from .numerics import working_precision
from .rotation import golden_denominators

TOL_U = 0.02
TOL_PLUS = 0.05
FIT_START = 8
MIN_CPLUS_DEPTH = 10
MIN_LAMBDA_DEPTH = 8

# flags that make a fingerprint unusable for a verdict
BLOCKING = {"lambda_u_nonconvergent", "cplus_ill_conditioned", "cu_nonconvergent"}


class ExponentMismatch(ValueError):
    pass


# -- level tables --------------------------------------------------------------


@dataclass
class LevelTable:
    """Per-level boundary data as float64 logs (computed from MPFR values)."""

    log_x2: np.ndarray
    log_mx1: np.ndarray  # log(-x1)
    log_x3: np.ndarray
    S1: np.ndarray
    exponents: tuple = (None, None)
    precision: int | None = None
    source: str = "renormalization"

    @property
    def depth(self) -> int:
        return len(self.log_x2) - 1

    @property
    def levels(self):
        return np.arange(len(self.log_x2))

    @property
    def log_S4(self):
        return self.log_x2 - self.log_mx1

    @property
    def cum_log_S4(self):
        return np.cumsum(self.log_S4)

    @property
    def gap_D(self):
        """log(-x_{1,n}) - log x_{2,n}."""
        return self.log_mx1 - self.log_x2

    def truncate(self, depth: int) -> "LevelTable":
        k = depth + 1
        return LevelTable(self.log_x2[:k], self.log_mx1[:k], self.log_x3[:k], self.S1[:k], self.exponents, self.precision, self.source)

    @classmethod
    def from_states(cls, states, exponents=None):
        lx2, lmx1, lx3, s1 = [], [], [], []
        for st in states:
            with st.context():
                lx2.append(float(gmpy2.log(st.x2)))
                lmx1.append(float(gmpy2.log(-st.x1)))
                lx3.append(float(gmpy2.log(st.x3)))
                s1.append(float((st.x3 - st.x2) / st.x3))
        exps = exponents or tuple(float(v) for v in states[0].exponent_order)
        return cls(np.array(lx2), np.array(lmx1), np.array(lx3), np.array(s1), exps, states[0].precision)

    @classmethod
    def from_run(cls, run):
        return cls.from_states(run.states)


def as_table(obj, depth: int | None = None) -> LevelTable:
    """A LevelTable from a table, a renormalization run, or a map (renormalized here)."""
    from .renorm import RenormRun, renormalize

    if isinstance(obj, LevelTable):
        return obj if depth is None else obj.truncate(depth)
    if isinstance(obj, RenormRun):
        t = LevelTable.from_run(obj)
        return t if depth is None else t.truncate(depth)
    if depth is None:
        raise ValueError("depth is required when renormalizing a map")
    return LevelTable.from_run(renormalize(obj, depth))


# -- synthetic data ------------------------------------------------------------


@dataclass(frozen=True)
class SyntheticModel:
    """Exact expansion used to test the estimators, one set of constants per parity."""

    lambda_u: float = 1.43
    lambda_s: float = 0.3
    cu: tuple = (-2.5, -1.8)  # c_u * (e_2 + e_3), even and odd levels
    cu4: tuple = (-0.9, -0.7)  # c_u * e_4
    cs: tuple = (0.4, -0.3)
    cs4: tuple = (0.2, 0.1)
    cplus: tuple = (1.7, 1.2)  # c_+ and c'_+
    ell: tuple = (1.4, 1.7)

    @property
    def cplus_sum(self):
        return self.cplus[0] + self.cplus[1]


def synthetic_table(model: SyntheticModel = SyntheticModel(), depth: int = 20, noise: float = 0.0, seed: int = 0) -> LevelTable:
    """Level table generated from the model with optional relative noise on the logs."""
    rng = np.random.default_rng(seed)
    n = np.arange(depth + 1)
    p = n // 2
    par = n % 2
    lu, ls = model.lambda_u**p, model.lambda_s**p
    cu, cu4 = np.take(model.cu, par), np.take(model.cu4, par)
    cs, cs4 = np.take(model.cs, par), np.take(model.cs4, par)
    cp = np.take(model.cplus, par)
    log_x2 = cu * lu + cs * ls
    log_S4 = cu4 * lu + cs4 * ls + cp
    log_mx1 = log_x2 - log_S4
    if noise:
        log_x2 = log_x2 * (1 + noise * rng.standard_normal(n.size))
        log_mx1 = log_mx1 * (1 + noise * rng.standard_normal(n.size))
    ellbar = max(model.ell)
    S1 = np.exp(log_x2 / ellbar)
    log_x3 = log_x2 - np.log1p(-S1)
    return LevelTable(log_x2, log_mx1, log_x3, S1, tuple(model.ell), None, "synthetic")


# -- fits --------------------------------------------------------------------


@dataclass
class FitDiagnostics:
    model: str
    parameters: dict
    residuals: list
    goodness: float
    window: tuple
    flags: list = field(default_factory=list)

    def to_json(self):
        return {
            "model": self.model,
            "parameters": {k: _num(v) for k, v in self.parameters.items()},
            "residuals": [_num(r) for r in self.residuals],
            "goodness": _num(self.goodness),
            "window": list(self.window),
            "flags": list(self.flags),
        }


def _num(v):
    if v is None:
        return None
    if isinstance(v, (list, tuple)):
        return [_num(u) for u in v]
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return int(v)
    if isinstance(v, str):
        return v
    v = float(v)
    if not math.isfinite(v):
        return str(v)
    return format(v, ".17g")


def _r2(y, fit):
    ss = float(np.sum((y - np.mean(y)) ** 2))
    res = float(np.sum((y - fit) ** 2))
    return 1.0 if ss == 0 else 1.0 - res / ss


def _parity_series(values, parity, start, stop):
    n = np.arange(len(values))
    sel = (n % 2 == parity) & (n >= start) & (n <= stop)
    return n[sel] // 2, values[sel]


def prony_rates(series_list, kind="x2"):
    """Rates of a two-mode recurrence d_{P+2} = sigma d_{P+1} - pi d_P fitted jointly.

    ``series_list`` holds one sequence per parity; each is differenced first
    so that constants drop out.  Returns (roots sorted by modulus desc,
    residual rows, coefficient pair).
    """
    rows, rhs = [], []
    for y in series_list:
        d = np.diff(np.asarray(y, dtype=float))
        for k in range(len(d) - 2):
            rows.append((d[k + 1], -d[k]))
            rhs.append(d[k + 2])
    if len(rows) < 2:
        raise ValueError("not enough levels for a two-mode fit")
    X, b = np.array(rows), np.array(rhs)
    scale = np.abs(b) + np.abs(X).sum(axis=1)
    scale[scale == 0] = 1.0
    coef, *_ = np.linalg.lstsq(X / scale[:, None], b / scale, rcond=None)
    sigma, pi = coef
    roots = np.roots([1.0, -sigma, pi])
    roots = sorted(roots, key=lambda z: -abs(z))
    return roots, (b - X @ coef), (sigma, pi)


def _rates_from_roots(roots):
    flags = []
    if any(abs(np.imag(z)) > 1e-12 for z in roots):
        flags.append("complex_rates")
    lu, ls = float(np.real(roots[0])), float(np.real(roots[1]))
    return lu, ls, flags


def naive_ratios(values):
    """Successive ratios log x_{2,n+2} / log x_{2,n}."""
    v = np.asarray(values, dtype=float)
    return v[2:] / v[:-2]


def _window(table, start, stop):
    stop = table.depth if stop is None else min(stop, table.depth)
    return start, stop


def single_rate(series_list):
    """Least-squares ratio of consecutive differences, d_{P+1} = lam d_P."""
    num = den = 0.0
    res = []
    for y in series_list:
        d = np.diff(np.asarray(y, dtype=float))
        num += float(np.dot(d[1:], d[:-1]))
        den += float(np.dot(d[:-1], d[:-1]))
    if den == 0:
        raise ValueError("not enough levels for a rate fit")
    lam = num / den
    for y in series_list:
        d = np.diff(np.asarray(y, dtype=float))
        res += list(d[1:] - lam * d[:-1])
    return lam, np.array(res)


def estimate_rates(series, table, start=FIT_START, stop=None, name="log x2"):
    """Two-mode rates when the window allows at least four recurrence rows, else one mode."""
    start, stop = _window(table, start, stop)
    parts = [_parity_series(series, par, start, stop)[1] for par in (0, 1)]
    rows = sum(max(len(p) - 3, 0) for p in parts)
    if rows >= 4:
        roots, res, (sigma, pi) = prony_rates(parts)
        lu, ls, flags = _rates_from_roots(roots)
        return lu, ls, res, flags, (sigma, pi), (start, stop)
    lu, res = single_rate(parts)
    return lu, None, res, ["single_mode"], (lu, 0.0), (start, stop)


def estimate_lambda_u(obj, depth: int | None = None, start: int = FIT_START, stop: int | None = None):
    """lambda_u from log x_{2,n}, both parities jointly; returns (value, diagnostics).

    An error bar comes from refitting on windows shortened by one level at
    either end.  The naive ratio sequence log x_{2,n+2}/log x_{2,n} is kept
    in the diagnostics together with its last-two spread.
    """
    table = as_table(obj, depth)
    flags = []
    if table.depth < MIN_LAMBDA_DEPTH:
        flags.append("lambda_u_nonconvergent")
    try:
        lu, ls, res, fl, coef, win = estimate_rates(table.log_x2, table, start, stop)
    except ValueError:
        return None, FitDiagnostics("prony(log x2)", {}, [], float("nan"), (start, stop), flags + ["lambda_u_nonconvergent"])
    flags += fl
    alts = []
    for a, b in ((win[0] + 1, win[1]), (win[0], win[1] - 1)):
        try:
            alts.append(estimate_rates(table.log_x2, table, a, b)[0])
        except ValueError:
            pass
    err = max((abs(a - lu) for a in alts), default=float("inf"))
    if not lu > 1:
        flags.append("lambda_u_nonconvergent")
    ratios = naive_ratios(table.log_x2)
    spread = abs(ratios[-1] - ratios[-3]) / abs(ratios[-1]) if len(ratios) >= 3 else float("inf")
    diag = FitDiagnostics(
        "d_{P+2} = sigma d_{P+1} - pi d_P on differences of log x2",
        {"lambda_u": lu, "lambda_s": ls, "sigma": coef[0], "pi": coef[1], "error": err,
         "naive_ratios": list(ratios), "naive_last_two_spread": spread},
        list(res),
        1.0 - float(np.sum(res**2)) / max(float(np.sum(np.diff(table.log_x2) ** 2)), 1e-300),
        win,
        flags,
    )
    return lu, diag


def estimate_lambda_u_gap(obj, depth: int | None = None, start: int = FIT_START, stop: int | None = None):
    """Second lambda_u estimator from log(-x_{1,n}) - log x_{2,n}."""
    table = as_table(obj, depth)
    lu, ls, res, flags, coef, win = estimate_rates(table.gap_D, table, start, stop)
    if not lu > 1:
        flags.append("lambda_u_nonconvergent")
    return lu, FitDiagnostics("prony(log(-x1) - log x2)", {"lambda_u": lu, "lambda_s": ls}, list(res), float("nan"), win, flags)


def estimate_lambda_s(obj, depth: int | None = None, start: int = FIT_START, stop: int | None = None):
    """lambda_s as the second root of the log x2 recurrence, or a flag.

    The stable mode is declared unresolved when its contribution is below the
    residual level of the fit or the root leaves (0, 1).
    """
    table = as_table(obj, depth)
    lu, diag = estimate_lambda_u(table, None, start, stop)
    flags = [f for f in diag.flags if f != "lambda_u_nonconvergent"]
    ls = diag.parameters.get("lambda_s")
    if ls is None or not 0 < ls < 1 or "complex_rates" in flags:
        return None, FitDiagnostics("stable root", {"lambda_s": ls}, diag.residuals, float("nan"), diag.window, flags + ["lambda_s_unresolved"])
    # amplitude of the stable mode against the fit residual
    amp = _mode_amplitudes(table.log_x2, table, lu, ls, start, stop)
    resid = max((abs(r) for r in diag.residuals), default=0.0)
    stable_size = max(abs(a[1]) * ls ** a[2] for a in amp)
    if stable_size <= 10 * resid:
        flags.append("lambda_s_unresolved")
    return (ls if "lambda_s_unresolved" not in flags else None), FitDiagnostics(
        "stable root of the log x2 recurrence", {"lambda_s": ls, "stable_size": stable_size, "residual": resid}, diag.residuals, diag.goodness, diag.window, flags
    )


def _design(P, lu, ls, linear=False, const=True):
    cols = [lu**P]
    if linear:
        cols.append(P.astype(float))
    if const:
        cols.append(np.ones_like(P, dtype=float))
    if ls is not None:
        cols.append(ls**P)
    return np.stack(cols, 1)


def _mode_amplitudes(values, table, lu, ls, start, stop):
    start, stop = _window(table, start, stop)
    out = []
    for par in (0, 1):
        P, y = _parity_series(values, par, start, stop)
        X = _design(P, lu, ls)
        c, *_ = np.linalg.lstsq(X, y, rcond=None)
        out.append((c[0], c[2], int(P.max())))
    return out


def fit_cplus(table, lu, ls=None, parity: int = 0, start: int = FIT_START, stop: int | None = None):
    """Least squares for cum log S4 = A lam_u**p + B p + C (+ D lam_s**p) on one parity."""
    start, stop = _window(table, start, stop)
    P, y = _parity_series(table.cum_log_S4, parity, start, stop)
    X = _design(P, lu, ls, linear=True)
    if len(y) < X.shape[1]:
        raise ValueError("too few levels for the cumulative fit")
    c, *_ = np.linalg.lstsq(X, y, rcond=None)
    fit = X @ c
    cond = float(np.linalg.cond(X))
    return c, y - fit, _r2(y, fit), cond, (start, stop)


def estimate_cplus_sum(obj, depth: int | None = None, lambda_u=None, lambda_s=None, start: int = FIT_START, stop: int | None = None, stable: bool = True):
    """c_+ + c'_+ as the linear coefficient of the cumulative log S4 on even levels.

    The stable mode is included when lambda_s is known (stable=True); the
    odd-level fit is reported alongside as a consistency check.
    """
    table = as_table(obj, depth)
    flags = []
    if lambda_u is None:
        lambda_u, d = estimate_lambda_u(table, None, start, stop)
        flags += [f for f in d.flags if f == "lambda_u_nonconvergent"]
        if lambda_s is None and stable:
            lambda_s = d.parameters.get("lambda_s")
    if lambda_u is None:
        return None, FitDiagnostics("cum log S4", {}, [], float("nan"), (start, stop), flags + ["cplus_ill_conditioned"])
    ls = lambda_s if (stable and lambda_s is not None and 0 < lambda_s < 1) else None
    if table.depth < MIN_CPLUS_DEPTH:
        flags.append("cplus_ill_conditioned")
    try:
        c, res, r2, cond, win = fit_cplus(table, lambda_u, ls, 0, start, stop)
        c_odd, res_odd, _, _, _ = fit_cplus(table, lambda_u, ls, 1, start, stop)
    except ValueError:
        return None, FitDiagnostics("cum log S4", {}, [], float("nan"), (start, stop), flags + ["cplus_ill_conditioned"])
    alt = []
    for a, b in ((win[0] + 2, win[1]), (win[0], win[1] - 2)):
        try:
            alt.append(fit_cplus(table, lambda_u, ls, 0, a, b)[0][1])
        except ValueError:
            pass
    err = max((abs(a - c[1]) for a in alt), default=float("inf"))
    if not np.isfinite(cond) or cond > 1e12:
        flags.append("cplus_ill_conditioned")
    params = {"A": c[0], "B": c[1], "C": c[2], "B_odd": c_odd[1], "error": err, "condition": cond, "lambda_u": lambda_u, "lambda_s": ls}
    if ls is not None:
        params["D"] = c[3]
    return float(c[1]), FitDiagnostics("cum log S4 = A lam_u^p + B p + C" + (" + D lam_s^p" if ls is not None else ""), params, list(res), r2, win, flags)


def estimate_cu_amplitudes(obj, depth=None, lambda_u=None, lambda_s=None, start=FIT_START, stop=None):
    """Unstable amplitudes of log x2 per parity (c_u, c'_u times the shared E^u factor)."""
    table = as_table(obj, depth)
    if lambda_u is None:
        lambda_u, d = estimate_lambda_u(table, None, start, stop)
        lambda_s = d.parameters.get("lambda_s") if lambda_s is None else lambda_s
    ls = lambda_s if lambda_s is not None and 0 < lambda_s < 1 else None
    start, stop = _window(table, start, stop)
    amps = []
    for par in (0, 1):
        P, y = _parity_series(table.log_x2, par, start, stop)
        X = _design(P, lambda_u, ls)
        c, *_ = np.linalg.lstsq(X, y, rcond=None)
        amps.append(float(c[0]))
    return tuple(amps)


def pooled_rates(tables, start: int = FIT_START, stop: int | None = None):
    """One (lambda_u, lambda_s) fitted jointly over several maps' log x2.

    Maps with equal exponents share their rates, so pooling removes the
    map-to-map scatter of the rate estimate that otherwise leaks into the
    amplitudes and the linear coefficient B.
    """
    parts = []
    for t in tables:
        a, b = _window(t, start, stop)
        parts += [_parity_series(t.log_x2, par, a, b)[1] for par in (0, 1)]
    rows = sum(max(len(p) - 3, 0) for p in parts)
    if rows >= 4:
        roots, _, _ = prony_rates(parts)
        lu, ls, flags = _rates_from_roots(roots)
        if not 0 < ls < 1 or "complex_rates" in flags:
            ls = None
        return lu, ls, flags
    lu, _ = single_rate(parts)
    return lu, None, ["single_mode"]


def estimate_cu_ratio(f, g, depth: int | None = None, start: int = FIT_START, stop: int | None = None):
    """c_u(f)/c_u(g) (even levels) and c'_u(f)/c'_u(g) (odd levels).

    Both maps are fitted with the same pooled rates, so the ratio is free of
    the E^u normalization.  The raw last-level ratios
    log x_{2,n}(f)/log x_{2,n}(g) are returned in the diagnostics.
    """
    tf, tg = as_table(f, depth), as_table(g, depth)
    if _exps(tf) != _exps(tg):
        raise ExponentMismatch("critical exponents differ; the comparison needs equal exponents")
    lu, ls, _ = pooled_rates((tf, tg), start, stop)
    af = estimate_cu_amplitudes(tf, None, lu, ls, start, stop)
    ag = estimate_cu_amplitudes(tg, None, lu, ls, start, stop)
    ratios = (af[0] / ag[0], af[1] / ag[1])
    k = min(tf.depth, tg.depth)
    raw = tf.log_x2[: k + 1] / tg.log_x2[: k + 1]
    return ratios, {"raw_ratios": list(raw), "lambda_u": lu, "lambda_s": ls, "amplitudes_f": af, "amplitudes_g": ag}


def _exps(t):
    return tuple(round(float(e), 12) for e in t.exponents) if t.exponents[0] is not None else None


# -- identities and checks ---------------------------------------------------


@dataclass
class ProductIdentity:
    level: int
    lhs: object
    rhs: object
    gap: object
    floor: object

    def to_json(self):
        from .numerics import to_decimal

        return {"level": self.level, "lhs": to_decimal(self.lhs, 30), "rhs": to_decimal(self.rhs, 30), "gap": to_decimal(self.gap, 6) if self.gap else "0"}


def product_identity(f, n: int, run=None):
    """lhs = |f^{q_{n+2}}(0)| / |x1| from the orbit of f(U); rhs = prod_{k<=n} S_{4,k}.

    S_{4,k} = -x_{2,k}/x_{1,k} = -x_{1,k+1}, so the product telescopes to
    |P_{n+2}| / |P_1| with P_m = f^{q_m}(0).  The right side uses the
    composition-path states, the left side the plain orbit.
    """
    from .orbit import critical_orbit
    from .renorm import renormalize

    if run is None or run.depth < n:
        run = renormalize(f, n, dual=False)
    bits = run.precision
    g = f.at_precision(bits)
    q = golden_denominators(n + 2)
    o = critical_orbit(g, q[n + 2])
    out = []
    with working_precision(bits):
        rhs = mpfr(1)
        for k in range(n + 1):
            st = run.states[k]
            rhs *= -st.x2 / st.x1
            lhs = abs(o[q[k + 2]]) / abs(g.x1)
            gap = abs(lhs - rhs) / rhs
            out.append(ProductIdentity(k, lhs, rhs, gap, mpfr(2) ** (-(bits - 32))))
    return out


def gap_non_increasing(rows, start: int = 3) -> bool:
    """Non-increasing from level ``start`` on, with values under the rounding floor counted as ties."""
    seq = [r for r in rows if r.level >= start]
    for a, b in zip(seq, seq[1:]):
        if b.gap > max(a.gap, a.floor):
            return False
    return True


def cumulative_fit_residual(obj, depth=None):
    """The asymptotic reading of the product identity: residual of the cumulative model."""
    B, diag = estimate_cplus_sum(obj, depth)
    return diag


@dataclass
class CheckReport:
    checks: dict

    @property
    def passed(self):
        return all(v["passed"] for v in self.checks.values())

    def to_json(self):
        return {k: {kk: _num(vv) if kk != "passed" else vv for kk, vv in v.items()} for k, v in self.checks.items()}


def asymptotic_checks(obj, depth=None, tol_ratio: float = 1e-3, tol_estimators: float = 0.10, start=FIT_START, stop=None) -> CheckReport:
    table = as_table(obj, depth)
    stop_ = table.depth if stop is None else stop
    even = [n for n in range(stop_ + 1) if n % 2 == 0]
    deep = even[-1]
    ratio = math.exp(table.log_x2[deep] - table.log_x3[deep])
    s1 = table.S1[start : stop_ + 1]
    # S1 decreasing along each parity beyond the transient
    dec = all(np.all(np.diff(s1[par::2]) < 0) for par in (0, 1))
    lu1, d1 = estimate_lambda_u(table, None, start, stop)
    lu2, d2 = estimate_lambda_u_gap(table, None, start, stop)
    agree = lu1 is not None and lu2 is not None and abs(lu1 - lu2) <= tol_estimators * abs(lu1)
    return CheckReport({
        "x2_over_x3": {"passed": abs(ratio - 1) <= tol_ratio, "value": ratio, "level": deep},
        "S1_decreasing": {"passed": bool(dec), "values": list(s1)},
        "lambda_u_estimators": {"passed": bool(agree), "from_x2": lu1, "from_gap": lu2, "error_x2": d1.parameters.get("error")},
    })


# -- fingerprints --------------------------------------------------------------


@dataclass
class RigidityFingerprint:
    lambda_u: float | None
    lambda_s: float | None
    cu_even: float | None
    cu_odd: float | None
    cplus_sum: float | None
    cs_even: float | None = None
    cs_odd: float | None = None
    residuals: list = field(default_factory=list)
    depth: int = 0
    exponents: tuple = (None, None)
    errors: dict = field(default_factory=dict)
    flags: list = field(default_factory=list)
    tolerances: dict = field(default_factory=lambda: {"tol_u": TOL_U, "tol_plus": TOL_PLUS})

    @property
    def blocked(self):
        return bool(BLOCKING & set(self.flags))

    def to_json(self) -> dict:
        d = asdict(self)
        out = {}
        for k, v in d.items():
            if k in ("flags",):
                out[k] = list(v)
            elif k == "exponents":
                out[k] = [_num(e) for e in v]
            elif k == "depth":
                out[k] = int(v)
            elif isinstance(v, dict):
                out[k] = {kk: _num(vv) for kk, vv in v.items()}
            else:
                out[k] = _num(v)
        return out

    @classmethod
    def from_json(cls, obj: dict):
        def val(v):
            return None if v is None else float(v)

        return cls(
            lambda_u=val(obj.get("lambda_u")),
            lambda_s=val(obj.get("lambda_s")),
            cu_even=val(obj.get("cu_even")),
            cu_odd=val(obj.get("cu_odd")),
            cplus_sum=val(obj.get("cplus_sum")),
            cs_even=val(obj.get("cs_even")),
            cs_odd=val(obj.get("cs_odd")),
            residuals=[float(r) for r in obj.get("residuals", [])],
            depth=int(obj.get("depth", 0)),
            exponents=tuple(val(e) for e in obj.get("exponents", (None, None))),
            errors={k: val(v) for k, v in obj.get("errors", {}).items()},
            flags=list(obj.get("flags", [])),
            tolerances={k: float(v) for k, v in obj.get("tolerances", {}).items()},
        )

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2, sort_keys=True)


def fingerprint(obj, depth: int | None = None, start: int = FIT_START, stop: int | None = None) -> RigidityFingerprint:
    table = as_table(obj, depth)
    flags = []
    lu, dl = estimate_lambda_u(table, None, start, stop)
    flags += dl.flags
    ls, ds = estimate_lambda_s(table, None, start, stop)
    flags += [f for f in ds.flags if f not in flags]
    lsf = dl.parameters.get("lambda_s")
    B, dB = estimate_cplus_sum(table, None, lu, lsf, start, stop)
    flags += [f for f in dB.flags if f not in flags]
    cu = cs = (None, None)
    if lu is not None and lu > 1:
        cu = estimate_cu_amplitudes(table, None, lu, lsf, start, stop)
        if lsf is not None and 0 < lsf < 1:
            amps = _mode_amplitudes(table.log_x2, table, lu, lsf, start, stop)
            cs = (float(amps[0][1]), float(amps[1][1]))
    else:
        flags.append("cu_nonconvergent")
    if cu[0] is not None and not (cu[0] < 0 and cu[1] < 0):
        flags.append("cu_nonconvergent")
    return RigidityFingerprint(
        lambda_u=lu,
        lambda_s=ls,
        cu_even=cu[0],
        cu_odd=cu[1],
        cplus_sum=B,
        cs_even=cs[0],
        cs_odd=cs[1],
        residuals=list(dB.residuals),
        depth=table.depth,
        exponents=tuple(table.exponents),
        errors={"lambda_u": dl.parameters.get("error"), "cplus_sum": dB.parameters.get("error"), "cplus_odd_fit": dB.parameters.get("B_odd")},
        flags=flags,
    )


@dataclass
class Comparison:
    verdict: str  # match | mismatch | inconclusive
    details: dict

    def to_json(self):
        return {"verdict": self.verdict, "details": {k: _num(v) if not isinstance(v, (list, dict, bool)) else v for k, v in self.details.items()}}


def compare_fingerprints(fp_f: RigidityFingerprint, fp_g: RigidityFingerprint, tol_u: float = TOL_U, tol_plus: float = TOL_PLUS) -> Comparison:
    """match iff both c_u ratios are within tol_u of 1 and |dB| <= tol_plus |B(f)|."""
    ef = tuple(round(float(e), 12) for e in fp_f.exponents) if fp_f.exponents[0] is not None else None
    eg = tuple(round(float(e), 12) for e in fp_g.exponents) if fp_g.exponents[0] is not None else None
    if ef is not None and eg is not None and ef != eg:
        raise ExponentMismatch("critical exponents differ; the comparison needs equal exponents")
    details = {"tol_u": tol_u, "tol_plus": tol_plus, "flags_f": list(fp_f.flags), "flags_g": list(fp_g.flags)}
    if fp_f.blocked or fp_g.blocked or None in (fp_f.cu_even, fp_g.cu_even, fp_f.cplus_sum, fp_g.cplus_sum):
        return Comparison("inconclusive", details)
    ru = (fp_f.cu_even / fp_g.cu_even, fp_f.cu_odd / fp_g.cu_odd)
    dB = abs(fp_f.cplus_sum - fp_g.cplus_sum)
    limit = tol_plus * abs(fp_f.cplus_sum)
    details.update({"cu_ratio_even": ru[0], "cu_ratio_odd": ru[1], "cplus_f": fp_f.cplus_sum, "cplus_g": fp_g.cplus_sum, "cplus_diff": dB, "cplus_limit": limit})
    cited = []
    if abs(ru[0] - 1) > tol_u:
        cited.append("cu_even")
    if abs(ru[1] - 1) > tol_u:
        cited.append("cu_odd")
    if dB > limit:
        cited.append("cplus_sum")
    details["mismatched"] = cited
    return Comparison("mismatch" if cited else "match", details)


def paired_comparison(f, g, depth: int | None = None, tol_u: float = TOL_U, tol_plus: float = TOL_PLUS, start: int = FIT_START, stop: int | None = None, fp_f=None, fp_g=None) -> Comparison:
    """The fingerprint test on two maps refitted with pooled rates.

    Per-map fingerprints can disagree in B only because their lambda_u
    estimates differ; here both amplitudes and B use one shared rate pair.
    Blocking flags of either fingerprint still give inconclusive.
    """
    tf, tg = as_table(f, depth), as_table(g, depth)
    if _exps(tf) != _exps(tg):
        raise ExponentMismatch("critical exponents differ; the comparison needs equal exponents")
    fp_f = fp_f or fingerprint(tf, None, start, stop)
    fp_g = fp_g or fingerprint(tg, None, start, stop)
    details = {"tol_u": tol_u, "tol_plus": tol_plus, "flags_f": list(fp_f.flags), "flags_g": list(fp_g.flags)}
    if fp_f.blocked or fp_g.blocked:
        return Comparison("inconclusive", details)
    lu, ls, flags = pooled_rates((tf, tg), start, stop)
    af = estimate_cu_amplitudes(tf, None, lu, ls, start, stop)
    ag = estimate_cu_amplitudes(tg, None, lu, ls, start, stop)
    Bf, dBf = estimate_cplus_sum(tf, None, lu, ls, start, stop, stable=ls is not None)
    Bg, dBg = estimate_cplus_sum(tg, None, lu, ls, start, stop, stable=ls is not None)
    details.update({"pooled_lambda_u": lu, "pooled_lambda_s": ls, "pooled_flags": flags})
    if Bf is None or Bg is None or not lu > 1:
        return Comparison("inconclusive", details)
    ru = (af[0] / ag[0], af[1] / ag[1])
    dB = abs(Bf - Bg)
    limit = tol_plus * abs(Bf)
    details.update({
        "cu_ratio_even": ru[0], "cu_ratio_odd": ru[1], "cplus_f": Bf, "cplus_g": Bg,
        "cplus_diff": dB, "cplus_limit": limit,
        "cplus_error_f": dBf.parameters.get("error"), "cplus_error_g": dBg.parameters.get("error"),
    })
    cited = []
    if abs(ru[0] - 1) > tol_u:
        cited.append("cu_even")
    if abs(ru[1] - 1) > tol_u:
        cited.append("cu_odd")
    if dB > limit:
        cited.append("cplus_sum")
    details["mismatched"] = cited
    return Comparison("mismatch" if cited else "match", details)
