"""Command-line runner: flatrenorm <validate|tune|renorm|fingerprint|classify>.

Exit codes: 0 success (or C1 verdict), 1 usage/parse error, 2 validation
failure, 3 tuning failure, 4 dual-path mismatch, 5 precision budget exceeded,
10 not-C1 verdict, 20 inconclusive verdict.

Every output carries the hash of its configuration, the precision used per
stage and the library version; nothing time- or host-dependent is written,
so equal configs give byte-identical files.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path

from . import __version__
from .mapcore import FlatCircleMap, FlatMapParams, validate
from .numerics import DEFAULT_PRECISION, PrecisionBudgetExceeded, to_decimal

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_INVALID = 2
EXIT_TUNE = 3
EXIT_DUAL = 4
EXIT_BUDGET = 5
EXIT_NOT_C1 = 10
EXIT_INCONCLUSIVE = 20


class UsageError(Exception):
    pass


def _load_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as e:
        raise UsageError(f"cannot read {path}: {e}") from e


def _load_map(path, bits):
    obj = _load_json(path)
    if not isinstance(obj, dict):
        raise UsageError(f"{path}: map JSON must be an object")
    try:
        bits = FlatMapParams.json_precision(obj, bits)
        return FlatCircleMap(FlatMapParams.from_json(obj, bits), bits), obj
    except (ValueError, TypeError, KeyError) as e:
        raise UsageError(f"{path}: {e}") from e


def _bits(value):
    if value == "auto":
        return "auto"
    try:
        b = int(value)
    except ValueError as e:
        raise UsageError(f"precision must be an integer or 'auto', got {value!r}") from e
    if b < 64:
        raise UsageError("precision must be >= 64 bits")
    return b


def _config(args, files=()) -> dict:
    cfg = {k: v for k, v in sorted(vars(args).items()) if k not in ("func", "out")}
    for name in files:
        path = getattr(args, name)
        cfg[f"{name}_sha256"] = hashlib.sha256(Path(path).read_bytes()).hexdigest()
    return cfg


def _config_hash(cfg) -> str:
    return hashlib.sha256(json.dumps(cfg, sort_keys=True, default=str).encode()).hexdigest()


def _meta(cfg, precision: dict) -> dict:
    return {"config_hash": _config_hash(cfg), "precision_bits": precision, "version": __version__, "config": cfg}


def _write(text: str, out):
    if out in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _csv_header(meta) -> str:
    return "".join(f"# {k}={json.dumps(meta[k], sort_keys=True)}\n" for k in ("config_hash", "precision_bits", "version"))


# -- commands ----------------------------------------------------------------


def cmd_validate(args) -> int:
    bits = _bits(args.precision)
    bits = DEFAULT_PRECISION if bits == "auto" else bits
    f, _ = _load_map(args.map, bits)
    rep = validate(f, grid=args.grid, schwarzian_samples=args.samples, seed=args.seed)
    cfg = _config(args, ["map"])
    out = {"report": rep.to_json(), "meta": _meta(cfg, {"validate": bits})}
    if not rep.passed:
        out["violations"] = [c.name for c in rep.failures()]
    _write(_dump(out), args.out)
    return EXIT_OK if rep.passed else EXIT_INVALID


def cmd_tune(args) -> int:
    from .rotation import TuningError, return_times, tune

    bits = _bits(args.precision)
    bits = DEFAULT_PRECISION if bits == "auto" else bits
    f, obj = _load_map(args.base, bits)
    try:
        res = tune(f.params, args.knob, tuple(args.range), args.depth, precision=bits, comove=not args.no_comove)
    except TuningError as e:
        print(f"tuning failed: {e}", file=sys.stderr)
        return EXIT_TUNE
    except PrecisionBudgetExceeded as e:
        print(str(e), file=sys.stderr)
        return EXIT_BUDGET
    g = FlatCircleMap(res.params)
    rt = return_times(g, args.depth)
    cfg = _config(args, ["base"])
    tuned = res.params.to_json()
    tuned["meta"] = _meta(cfg, {"tune": res.precision})
    tuned["meta"].update({
        "tuned_depth": args.depth,
        "knob": args.knob,
        "bracket": [to_decimal(res.bracket[0]), to_decimal(res.bracket[1])],
        "evaluations": res.evaluations,
        "return_times": rt.times,
    })
    _write(_dump(tuned), args.out)
    if args.log:
        lines = [f"# return times of f(U), depth {args.depth}\n"] + [f"{t} {s}\n" for t, s in zip(rt.times, rt.sides)]
        Path(args.log).write_text("".join(lines))
    return EXIT_OK


def _renorm_run(f, depth, precision, dual_tol=None):
    from .renorm import renormalize

    return renormalize(f, depth, precision=precision, dual=True, dual_tol=dual_tol)


def cmd_renorm(args) -> int:
    from .renorm import DualPathMismatch, RenormError, levels_csv, validate_state

    bits = _bits(args.precision)
    start_bits = DEFAULT_PRECISION if bits == "auto" else bits
    f, _ = _load_map(args.map, start_bits)
    try:
        run = _renorm_run(f, args.depth, bits, args.dual_tol)
    except DualPathMismatch as e:
        print(f"dual-path mismatch at level {e.level}: {e}", file=sys.stderr)
        return EXIT_DUAL
    except PrecisionBudgetExceeded as e:
        print(str(e), file=sys.stderr)
        return EXIT_BUDGET
    except RenormError as e:
        print(str(e), file=sys.stderr)
        return EXIT_INVALID
    states = run.states[1:]
    flags = [validate_state(st, grid=args.grid, schwarzian_samples=8).passed for st in states]
    cfg = _config(args, ["map"])
    meta = _meta(cfg, {"renormalize": run.precision, "escalations": run.escalations})
    body = levels_csv(states, run.precision, args.digits).splitlines()
    rows = [body[0] + ",class_ok,dual_discrepancy"]
    for line, ok, disc in zip(body[1:], flags, run.discrepancy[1:]):
        rows.append(f"{line},{str(ok).lower()},{to_decimal(disc, 6) if disc else '0'}")
    _write(_csv_header(meta) + "\n".join(rows) + "\n", args.out)
    return EXIT_OK if all(flags) else EXIT_INVALID


def cmd_fingerprint(args) -> int:
    from .rigidity import fingerprint

    bits = _bits(args.precision)
    f, _ = _load_map(args.map, DEFAULT_PRECISION if bits == "auto" else bits)
    try:
        run = _renorm_run(f, args.depth, bits)
    except PrecisionBudgetExceeded as e:
        print(str(e), file=sys.stderr)
        return EXIT_BUDGET
    fp = fingerprint(run)
    out = fp.to_json()
    out["meta"] = _meta(_config(args, ["map"]), {"renormalize": run.precision})
    _write(_dump(out), args.out)
    return EXIT_OK


def cmd_classify(args) -> int:
    from .conjugacy import classify
    from .rigidity import ExponentMismatch

    bits = _bits(args.precision)
    start = DEFAULT_PRECISION if bits == "auto" else bits
    f, _ = _load_map(args.f, start)
    g, _ = _load_map(args.g, start)
    try:
        rf = _renorm_run(f, args.depth, bits)
        rg = _renorm_run(g, args.depth, bits)
        c = classify(f, g, args.depth, args.tol_u, args.tol_plus, args.conj_depth, rf, rg)
    except ExponentMismatch as e:
        raise UsageError(str(e)) from e
    except PrecisionBudgetExceeded as e:
        print(str(e), file=sys.stderr)
        return EXIT_BUDGET
    out = c.to_json()
    out["meta"] = _meta(_config(args, ["f", "g"]), {"renormalize": rf.precision, "conjugacy": c.evidence["precision"]["conjugacy"]})
    _write(_dump(out), args.out)
    return c.exit_code


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="flatrenorm", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    v = sub.add_parser("validate", help="class-membership checks for a map")
    v.add_argument("map")
    v.add_argument("--precision", default=str(DEFAULT_PRECISION))
    v.add_argument("--grid", type=int, default=4096)
    v.add_argument("--samples", type=int, default=64)
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--out")
    v.set_defaults(func=cmd_validate)

    t = sub.add_parser("tune", help="tune a knob to golden-mean combinatorics")
    t.add_argument("base")
    t.add_argument("--knob", default="x4", choices=["x1", "x2", "x3", "x4", "s"])
    t.add_argument("--range", nargs=2, required=True, metavar=("LO", "HI"))
    t.add_argument("--depth", type=int, required=True)
    t.add_argument("--precision", default=str(DEFAULT_PRECISION))
    t.add_argument("--no-comove", action="store_true", help="move only the knob, not the whole flat piece")
    t.add_argument("--log", help="write the return-times log here")
    t.add_argument("--out")
    t.set_defaults(func=cmd_tune)

    r = sub.add_parser("renorm", help="renormalization level data as CSV")
    r.add_argument("map")
    r.add_argument("--depth", type=int, required=True)
    r.add_argument("--precision", default="auto")
    r.add_argument("--dual-tol", type=float, default=None, help="fail when the two level-data paths differ by more")
    r.add_argument("--digits", type=int, default=40)
    r.add_argument("--grid", type=int, default=256)
    r.add_argument("--out")
    r.set_defaults(func=cmd_renorm)

    fp = sub.add_parser("fingerprint", help="rigidity characteristics of a tuned map")
    fp.add_argument("map")
    fp.add_argument("--depth", type=int, required=True)
    fp.add_argument("--precision", default="auto")
    fp.add_argument("--out")
    fp.set_defaults(func=cmd_fingerprint)

    c = sub.add_parser("classify", help="C1 classification of the conjugacy between two maps")
    c.add_argument("f")
    c.add_argument("g")
    c.add_argument("--depth", type=int, required=True)
    c.add_argument("--tol-u", type=float, default=0.02)
    c.add_argument("--tol-plus", type=float, default=0.05)
    c.add_argument("--conj-depth", type=int, default=None)
    c.add_argument("--precision", default="auto")
    c.add_argument("--out")
    c.set_defaults(func=cmd_classify)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code else EXIT_OK
    if getattr(args, "depth", 1) is not None and getattr(args, "depth", 1) < 1:
        print("depth must be >= 1", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
