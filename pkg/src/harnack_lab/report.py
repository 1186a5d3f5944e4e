"""Check records and versioned JSON reports.

Reports are byte-deterministic for a fixed configuration: keys are sorted,
floats go through ``repr``, non-finite numbers become strings and nothing
time-dependent is written.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

SCHEMA = 1
PROVENANCE = ("FORMULA", "DERIVED-CONSTANT", "PLUMBING")


@dataclass
class CheckRecord:
    """One inequality: passes when ``margin >= 0``; ``tolerance`` is the threshold folded into it."""

    id: str
    anchor: str
    margin: float
    tolerance: float
    provenance: str
    detail: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.provenance not in PROVENANCE:
            raise ValueError(f"provenance must be one of {PROVENANCE}")
        self.margin = float(self.margin)
        self.tolerance = float(self.tolerance)

    @property
    def passed(self) -> bool:
        return bool(self.margin >= 0)  # NaN fails

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "anchor": self.anchor,
            "margin": self.margin,
            "tolerance": self.tolerance,
            "pass": self.passed,
            "provenance": self.provenance,
            "detail": self.detail,
        }


def at_most(id: str, anchor: str, value: float, limit: float, provenance: str = "FORMULA", **detail) -> CheckRecord:
    """``value <= limit``."""
    return CheckRecord(id, anchor, limit - value, limit, provenance, {"value": value, **detail})


def at_least(id: str, anchor: str, value: float, floor: float, provenance: str = "FORMULA", **detail) -> CheckRecord:
    """``value >= floor``."""
    return CheckRecord(id, anchor, value - floor, floor, provenance, {"value": value, **detail})


def holds(id: str, anchor: str, ok: bool, provenance: str = "PLUMBING", **detail) -> CheckRecord:
    """A boolean check mapped to margin 1 or -1."""
    return CheckRecord(id, anchor, 1.0 if ok else -1.0, 0.0, provenance, detail)


@dataclass
class VerificationReport:
    suite: str
    records: list[CheckRecord] = field(default_factory=list)
    environment: dict = field(default_factory=dict)
    constants: dict = field(default_factory=dict)
    results: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.records)

    def add(self, *records: CheckRecord) -> None:
        self.records.extend(records)

    def constant(self, name: str, value, recipe: str) -> None:
        """Register a derived constant together with how it was obtained."""
        self.constants[name] = {"value": value, "recipe": recipe}

    def merge(self, other: "VerificationReport") -> None:
        self.records.extend(other.records)
        self.constants.update(other.constants)
        self.results[other.suite] = other.results
        for k, v in other.environment.items():
            if isinstance(v, list):
                self.environment.setdefault(k, []).extend(v)
            else:
                self.environment.setdefault(k, v)

    def to_dict(self) -> dict:
        return {
            "schema": SCHEMA,
            "suite": self.suite,
            "passed": self.passed,
            "records": [r.to_dict() for r in self.records],
            "environment": self.environment,
            "constants": self.constants,
            "results": self.results,
        }

    def to_json(self) -> str:
        return dumps(self.to_dict())

    def summary_lines(self) -> list[str]:
        return [f"{'PASS' if r.passed else 'FAIL'} {r.id} margin={r.margin:.6g}" for r in self.records]


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isfinite(x):
            return x
        return "nan" if math.isnan(x) else ("inf" if x > 0 else "-inf")
    if obj is None or isinstance(obj, str):
        return obj
    if hasattr(obj, "to_dict"):
        return _plain(obj.to_dict())
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def dumps(obj) -> str:
    """Stable UTF-8 JSON text."""
    return json.dumps(_plain(obj), sort_keys=True, indent=2, ensure_ascii=False, allow_nan=False) + "\n"
