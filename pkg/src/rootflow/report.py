"""Evidence records produced by the verification routines."""
import math
from dataclasses import dataclass, field

import numpy as np


@dataclass
class ReportEntry:
    """One verified property: a residual, the resolved tolerance and the verdict.

    ``passed`` is ``residual <= tolerance`` unless ``error`` is set (the check
    could not be carried out, which counts as a failure).
    """

    check: str
    residual: float
    tolerance: float
    witness: dict = field(default_factory=dict)
    counts: dict = field(default_factory=dict)
    label: str = ""
    details: dict = field(default_factory=dict)
    untestable: list = field(default_factory=list)
    error: str = ""

    @property
    def passed(self):
        if self.error:
            return False
        return bool(self.residual <= self.tolerance)

    def to_dict(self):
        return {
            "check": self.check,
            "residual": json_float(self.residual),
            "tolerance": json_float(self.tolerance),
            "passed": self.passed,
            "label": self.label,
            "witness": to_jsonable(self.witness),
            "counts": to_jsonable(self.counts),
            "details": to_jsonable(self.details),
            "untestable": to_jsonable(self.untestable),
            "error": self.error,
        }


def failed_entry(check, message, **details):
    return ReportEntry(check, math.inf, 0.0, error=message, details=details)


@dataclass
class VerificationReport:
    entries: list = field(default_factory=list)

    def add(self, entry):
        self.entries.append(entry)
        return entry

    def __getitem__(self, check):
        for e in self.entries:
            if e.check == check:
                return e
        raise KeyError(check)

    def __contains__(self, check):
        return any(e.check == check for e in self.entries)

    def __iter__(self):
        return iter(self.entries)

    @property
    def passed(self):
        return all(e.passed for e in self.entries)

    def to_list(self):
        return [e.to_dict() for e in self.entries]

    def summary(self):
        lines = []
        for e in self.entries:
            mark = "PASS" if e.passed else "FAIL"
            lines.append(f"{mark} {e.check:<28} residual={e.residual:.3e} tol={e.tolerance:.3e} {e.label}".rstrip())
        return "\n".join(lines)


def json_float(x):
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return x


def to_jsonable(obj):
    """Convert numpy scalars/arrays and tuples into plain JSON values."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return json_float(obj)
    return obj
