"""Hypothesis-test reports and plain-text serialisation helpers."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from typing import Any, Iterable, Sequence

import numpy as np

REPORT_KEYS = ("test", "statistic", "threshold", "pass", "samples", "seed")


@dataclass
class TestReport:
    """Outcome of one statistical test; ``passed`` is statistic < threshold."""

    __test__ = False  # keep pytest from collecting the class

    test: str
    statistic: float
    threshold: float
    samples: int
    seed: int
    details: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return bool(self.statistic < self.threshold)

    def to_dict(self) -> dict:
        return {
            "test": self.test,
            "statistic": float(self.statistic),
            "threshold": float(self.threshold),
            "pass": self.passed,
            "samples": int(self.samples),
            "seed": int(self.seed),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "TestReport":
        return cls(data["test"], data["statistic"], data["threshold"], data["samples"], data["seed"])


def _jsonable(value: Any):
    if isinstance(value, TestReport):
        return value.to_dict()
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, (np.floating,)):
        return float(value)
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.bool_,)):
        return bool(value)
    if isinstance(value, complex):
        return {"re": value.real, "im": value.imag}
    raise TypeError(f"cannot serialise {type(value).__name__}")


def dumps_json(obj) -> str:
    """Deterministic JSON text (sorted keys, fixed float repr, trailing newline)."""
    return json.dumps(obj, default=_jsonable, indent=2, sort_keys=True) + "\n"


def format_csv(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_cell(v) for v in row])
    return buf.getvalue()


def _cell(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def histogram_rows(values, bins: int = 40, value_range: tuple[float, float] | None = None):
    """Rows ``(bin_left, bin_right, density)`` of a normalised histogram."""
    dens, edges = np.histogram(np.asarray(values, dtype=float), bins=bins, range=value_range, density=True)
    return [(edges[i], edges[i + 1], dens[i]) for i in range(bins)]
