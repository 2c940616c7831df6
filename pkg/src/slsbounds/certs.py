"""Certificate records shared by all modules."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field


@dataclass
class Certificate:
    """One checked inequality: ``observed <= bound`` (or a reversed claim)."""

    claim: str
    bound: float
    observed: float
    holds: bool
    params: dict = field(default_factory=dict)
    source: str = ""

    def to_json(self) -> dict:
        d = asdict(self)
        d["bound"] = _num(self.bound)
        d["observed"] = _num(self.observed)
        d["holds"] = bool(self.holds)
        return d


def _num(v):
    v = float(v)
    if math.isnan(v) or math.isinf(v):
        return str(v)
    return v


def upper(claim, observed, bound, source="", tol=0.0, **params) -> Certificate:
    """Certificate for ``observed <= bound`` with an absolute slack ``tol``."""
    return Certificate(claim, float(bound), float(observed),
                       bool(observed <= bound + tol), params, source)
