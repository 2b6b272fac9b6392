"""Exception hierarchy shared by every dynkit module.

Each error carries a stable ``code`` string used in the CLI's machine-readable
error JSON. Numeric failures map to exit code 3, usage problems to exit 2.
"""

from __future__ import annotations


class DynkitError(Exception):
    """Base class for all toolkit errors."""

    code = "DynkitError"
    usage = False

    def __init__(self, message: str = "", **details):
        super().__init__(message or self.code)
        self.details = details

    def to_dict(self) -> dict:
        out = {"error": self.code, "message": str(self)}
        if self.details:
            out["details"] = {k: _jsonable(v) for k, v in self.details.items()}
        return out


def _jsonable(v):
    if isinstance(v, (str, int, float, bool)) or v is None:
        return v
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    return str(v)


def _make(name: str, usage: bool = False, base=DynkitError):
    cls = type(name, (base,), {"code": name, "usage": usage})
    cls.__module__ = __name__
    return cls


# usage-type errors
UnknownSystem = _make("UnknownSystem", usage=True)
UnknownParam = _make("UnknownParam", usage=True)
DimensionMismatch = _make("DimensionMismatch", usage=True)
SchemaViolation = _make("SchemaViolation", usage=True)
InvalidWord = _make("InvalidWord", usage=True)
DepthTooLarge = _make("DepthTooLarge", usage=True)
OrderTooHigh = _make("OrderTooHigh", usage=True)

# numeric failures
StepLimitExceeded = _make("StepLimitExceeded")
NonFiniteState = _make("NonFiniteState")
NoConvergence = _make("NoConvergence")
SingularJacobian = _make("SingularJacobian")
NotHurwitz = _make("NotHurwitz")
IllConditionedSplit = _make("IllConditionedSplit")
ResonanceObstruction = _make("ResonanceObstruction")
SmallDivisor = _make("SmallDivisor")
StrongResonance = _make("StrongResonance")
NoCycleFound = _make("NoCycleFound")
PoorFit = _make("PoorFit")
NoReturn = _make("NoReturn")
TangentialCrossing = _make("TangentialCrossing")
CollapsedToEquilibrium = _make("CollapsedToEquilibrium")
CascadeLost = _make("CascadeLost")
NotCritical = _make("NotCritical")
BranchLost = _make("BranchLost")
EmptySupport = _make("EmptySupport")
Degenerate = _make("Degenerate")
DegenerateCloud = _make("DegenerateCloud")
Escaped = _make("Escaped")

__all__ = [
    "DynkitError",
    "UnknownSystem", "UnknownParam", "DimensionMismatch", "SchemaViolation",
    "InvalidWord", "DepthTooLarge", "OrderTooHigh", "StepLimitExceeded",
    "NonFiniteState", "NoConvergence", "SingularJacobian", "NotHurwitz",
    "IllConditionedSplit", "ResonanceObstruction", "SmallDivisor",
    "StrongResonance", "NoCycleFound", "PoorFit", "NoReturn",
    "TangentialCrossing", "CollapsedToEquilibrium", "CascadeLost",
    "NotCritical", "BranchLost", "EmptySupport", "Degenerate",
    "DegenerateCloud", "Escaped",
]
