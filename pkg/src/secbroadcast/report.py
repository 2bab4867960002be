"""Rate reports and unit handling."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .errors import SpecError

BOUND_KINDS = ("upper", "lower", "exact")
UNITS = ("nats", "bits")


def to_units(x: float, units: str) -> float:
    if units not in UNITS:
        raise SpecError(f"unknown units {units!r}")
    return x / math.log(2) if units == "bits" else x


def jsonable(obj: Any) -> Any:
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if hasattr(obj, "to_dict"):
        return jsonable(obj.to_dict())
    return obj


@dataclass
class RateReport:
    value: float
    bound_kind: str
    argmax: dict = field(default_factory=dict)
    solver_diag: dict = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.bound_kind not in BOUND_KINDS:
            raise SpecError(f"bound_kind must be one of {BOUND_KINDS}")
        v = float(self.value)
        if v < 0:
            if v < -1e-9:
                raise SpecError(f"rate value {v} is negative")
            v = 0.0
        self.value = v

    def to_dict(self, units: str = "nats") -> dict:
        conv = lambda x: to_units(x, units)  # noqa: E731
        diag = dict(jsonable(self.solver_diag))
        for k in ("stderr", "witness_upper", "witness_lower"):
            if diag.get(k) is not None:
                diag[k] = conv(diag[k])
        return {
            "value": conv(self.value),
            "units": units,
            "bound_kind": self.bound_kind,
            "argmax": jsonable(self.argmax),
            "solver_diag": diag,
            "metadata": jsonable(self.metadata),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RateReport":
        scale = math.log(2) if d.get("units", "nats") == "bits" else 1.0
        diag = dict(d.get("solver_diag", {}))
        for k in ("stderr", "witness_upper", "witness_lower"):
            if diag.get(k) is not None:
                diag[k] = diag[k] * scale
        return cls(d["value"] * scale, d["bound_kind"], dict(d.get("argmax", {})), diag,
                   dict(d.get("metadata", {})))
