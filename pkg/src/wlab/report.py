"""Verification reports with byte-deterministic JSON output."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import __version__

REPORT_SCHEMA_VERSION = 1


def _fmt_float(x):
    if math.isnan(x):
        return '"nan"'
    if math.isinf(x):
        return '"inf"' if x > 0 else '"-inf"'
    text = format(x, ".17g")
    if all(c not in text for c in ".en"):
        text += ".0"
    return text


def dumps(obj, indent=2, _level=0):
    """JSON with insertion-ordered keys and reals printed to 17 significant digits."""
    pad = " " * (indent * (_level + 1))
    end = " " * (indent * _level)
    if obj is None:
        return "null"
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _fmt_float(float(obj))
    if isinstance(obj, str):
        return _quote(obj)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{_quote(str(k))}: {dumps(v, indent, _level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        seq = list(obj)
        if not seq:
            return "[]"
        if all(not isinstance(v, (dict, list, tuple, np.ndarray)) for v in seq):
            return "[" + ", ".join(dumps(v, indent, _level + 1) for v in seq) + "]"
        items = [pad + dumps(v, indent, _level + 1) for v in seq]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _quote(s):
    import json

    return json.dumps(s, ensure_ascii=True)


@dataclass
class VerificationReport:
    spec: dict
    grid: dict
    checks: list = field(default_factory=list)
    timings: dict | None = None
    notes: list = field(default_factory=list)

    def add(self, result):
        """Append a check (any object with ``to_dict``, or a dict with ``name`` and ``pass``)."""
        doc = result.to_dict() if hasattr(result, "to_dict") else dict(result)
        if "pass" not in doc:
            raise ValueError(f"check {doc.get('name')!r} carries no verdict")
        self.checks.append(doc)
        return doc

    @property
    def passed(self):
        return all(bool(c["pass"]) for c in self.checks)

    def failed(self):
        return [c["name"] for c in self.checks if not c["pass"]]

    def to_dict(self):
        out = {
            "tool": "wlab",
            "version": __version__,
            "schema_version": REPORT_SCHEMA_VERSION,
            "spec": self.spec,
            "grid": self.grid,
            "checks": self.checks,
            "pass": self.passed,
            "failed": self.failed(),
        }
        if self.notes:
            out["notes"] = list(self.notes)
        if self.timings is not None:
            out["timings"] = self.timings
        return out

    def to_json(self):
        return dumps(self.to_dict()) + "\n"
