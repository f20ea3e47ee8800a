"""Design-rule violation records shared by the validators and the legalizer."""
from __future__ import annotations

from dataclasses import dataclass

OVER_COMPRESSION = "over_compression"
UNDER_COMPRESSION = "under_compression"
MISSING_LOWER_PARENT = "missing_lower_parent"

VIOLATION_KINDS = (OVER_COMPRESSION, UNDER_COMPRESSION, MISSING_LOWER_PARENT)


@dataclass(frozen=True)
class DesignRuleViolation:
    """One design-rule violation at a specific position.

    For compressor trees, ``column``/``stage`` address the offending tensor
    cell; under-compression is reported at the final stage index. For prefix
    bitmaps the pair is the node coordinate (i, j).
    """

    kind: str
    column: int
    stage: int
    magnitude: int = 1

    def __post_init__(self):
        if self.kind not in VIOLATION_KINDS:
            raise ValueError(f"unknown violation kind {self.kind!r}")
        if self.magnitude < 1:
            raise ValueError("violation magnitude must be >= 1")
