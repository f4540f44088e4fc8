"""Verdicts and result records returned by the samplers and duplicate finders."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional


class Verdict(str, enum.Enum):
    ACCEPT = "ACCEPT"
    FAIL = "FAIL"
    ZERO = "ZERO"
    DENSE = "DENSE"
    DUPLICATE = "DUPLICATE"
    NO_DUPLICATE = "NO-DUPLICATE"

    def __str__(self):
        return self.value


ZERO = Verdict.ZERO
DENSE = Verdict.DENSE


@dataclass(frozen=True)
class SampleResult:
    """Outcome of one sampling attempt.

    ``index`` is 1-based and set for ``ACCEPT``; ``estimate`` approximates
    ``x[index]`` and is present iff the verdict is ``ACCEPT``.
    """

    verdict: Verdict
    index: Optional[int] = None
    estimate: Optional[float] = None
    info: dict = field(default_factory=dict, compare=False, repr=False)

    @property
    def accepted(self):
        return self.verdict is Verdict.ACCEPT


@dataclass(frozen=True)
class DupVerdict:
    """Answer of a duplicate finder: ``DUPLICATE(index)``, ``NO-DUPLICATE`` or ``FAIL``."""

    kind: Verdict
    index: Optional[int] = None
    info: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        if self.kind not in (Verdict.DUPLICATE, Verdict.NO_DUPLICATE, Verdict.FAIL):
            raise ValueError(f"invalid duplicate verdict {self.kind}")
        if (self.kind is Verdict.DUPLICATE) != (self.index is not None):
            raise ValueError("index must be given exactly for DUPLICATE")
