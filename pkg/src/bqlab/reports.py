"""Estimate reports: measured sides of an inequality, fitted constant, verdict."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np


def _clean(value):
    if isinstance(value, dict):
        return {str(k): _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    if isinstance(value, np.ndarray):
        return _clean(value.tolist())
    if isinstance(value, (np.floating, float)):
        v = float(value)
        return v if math.isfinite(v) else str(v)
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, np.bool_):
        return bool(value)
    return value


@dataclass
class EstimateReport:
    """Outcome of one inequality check.

    ``lhs`` and ``rhs`` hold the per-sample measured sides, ``fitted_C`` the
    smallest constant making ``lhs <= C * rhs`` hold over the family.
    """

    inequality_id: str
    lhs: list
    rhs: list
    fitted_C: float
    samples: int
    passed: bool
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return _clean(
            {
                "inequality_id": self.inequality_id,
                "lhs": list(self.lhs),
                "rhs": list(self.rhs),
                "fitted_C": self.fitted_C,
                "samples": self.samples,
                "pass": bool(self.passed),
                "details": self.details,
            }
        )

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)

    @classmethod
    def from_dict(cls, data: dict) -> "EstimateReport":
        return cls(
            inequality_id=data["inequality_id"],
            lhs=data["lhs"],
            rhs=data["rhs"],
            fitted_C=float(data["fitted_C"]),
            samples=int(data["samples"]),
            passed=bool(data["pass"]),
            details=data.get("details", {}),
        )

    def summary(self) -> str:
        verdict = "PASS" if self.passed else "FAIL"
        return f"{verdict} {self.inequality_id}: C={self.fitted_C:.4g} over {self.samples} samples"


def fit_constant(lhs, rhs, atol: float = 0.0) -> float:
    """Smallest C with lhs <= C*rhs over samples; 0/0 pairs are ignored.

    Returns ``inf`` when some lhs is positive while its rhs vanishes.
    """
    lhs = np.asarray(lhs, dtype=float)
    rhs = np.asarray(rhs, dtype=float)
    live = lhs > atol
    if not np.any(live):
        return 0.0
    if np.any(rhs[live] <= 0):
        return math.inf
    return float(np.max(lhs[live] / rhs[live]))


def relative_spread(values) -> float:
    """max |v/v[0] - 1| over positive constants; the first entry is the reference."""
    v = np.asarray(values, dtype=float)
    if not np.all(np.isfinite(v)) or np.any(v <= 0):
        return math.inf
    ref = v[0]
    return float(np.max(np.abs(v / ref - 1.0)))


def loglog_slope(t, y) -> float:
    """Least-squares slope of log y against log t."""
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    return float(np.polyfit(np.log(t), np.log(y), 1)[0])
