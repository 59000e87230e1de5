"""Tuned example maps shipped with the package (decimal-string JSON)."""

from __future__ import annotations

import json
from importlib import resources

from .mapcore import FlatCircleMap, FlatMapParams

EXAMPLES = ("golden_base", "golden_partner", "golden_third")


def example_path(name: str):
    if name not in EXAMPLES:
        raise KeyError(f"unknown example {name!r}; choose from {EXAMPLES}")
    return resources.files("flatrenorm") / "data" / f"{name}.json"


def example_json(name: str) -> dict:
    return json.loads(example_path(name).read_text())


def load_example(name: str, bits: int | None = None) -> FlatCircleMap:
    """The example map at its full stored precision (or ``bits`` if larger)."""
    obj = example_json(name)
    b = FlatMapParams.json_precision(obj, bits or 0)
    return FlatCircleMap(FlatMapParams.from_json(obj, b), b)


def tuned_depth(name: str) -> int:
    return int(example_json(name)["meta"]["tuned_depth"])
