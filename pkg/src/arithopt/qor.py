"""Analytical quality-of-results model.

Each assembled multiplier is scored under two design scenarios
(timing-driven, area-driven) sharing one unit-gate timing model; delay is the
critical-path arrival, area the summed cell areas, both normalized against
the same-width Wallace-plus-serial-adder reference. The scalar cost is
y = (w * sum(delay_i) + (1 - w) * sum(area_i)) / n_scenarios.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

from .ct import CompressorTree, wallace_tree
from .netlist import (
    DEFAULT_TIMING,
    Netlist,
    TimingModel,
    assemble_multiplier,
    critical_path,
    total_area,
)
from .prefix import PrefixBitmap

SCENARIOS = ("timing_driven", "area_driven")

DEFAULT_TRADEOFF_WEIGHT = 0.66

FORMAT_VERSION = 1


class MissingReferenceError(ValueError):
    """No normalization reference supplied and none derivable."""


@dataclass(frozen=True)
class QoRLabel:
    """Per-scenario unit delay/area plus the normalized scalar cost y."""

    delays: tuple[float, ...]
    areas: tuple[float, ...]
    y: float
    weight: float

    def __post_init__(self):
        if self.y <= 0:
            raise ValueError("cost must be positive")

    def to_json(self) -> dict:
        return {
            "format_version": FORMAT_VERSION,
            "scenarios": list(SCENARIOS),
            "delay": list(self.delays),
            "area": list(self.areas),
            "y": self.y,
            "w": self.weight,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "QoRLabel":
        return cls(
            delays=tuple(doc["delay"]),
            areas=tuple(doc["area"]),
            y=float(doc["y"]),
            weight=float(doc["w"]),
        )


def netlist_metrics(nl: Netlist, timing: TimingModel = DEFAULT_TIMING) -> tuple[float, float]:
    """(critical-path delay, total area) in unit-gate terms."""
    return critical_path(nl, timing), total_area(nl, timing)


@lru_cache(maxsize=None)
def _wallace_reference_default(n: int, extra_stages: int) -> tuple[float, float]:
    nl = assemble_multiplier(wallace_tree(n, extra_stages))
    return netlist_metrics(nl, DEFAULT_TIMING)


def wallace_reference(
    n: int, timing: TimingModel = DEFAULT_TIMING, extra_stages: int = 1
) -> tuple[float, float]:
    """Reference (delay, area): same-width Wallace tree with the serial adder."""
    if timing is DEFAULT_TIMING:
        return _wallace_reference_default(n, extra_stages)
    nl = assemble_multiplier(wallace_tree(n, extra_stages), timing=timing)
    return netlist_metrics(nl, timing)


def evaluate_qor(
    nl: Netlist,
    timing: TimingModel = DEFAULT_TIMING,
    w: float = DEFAULT_TRADEOFF_WEIGHT,
    reference: tuple[float, float] | None = None,
    n: int | None = None,
) -> QoRLabel:
    """Score an assembled multiplier netlist against the Wallace reference.

    Both scenarios share the analytical model, so their metrics coincide; the
    per-scenario fields are kept for schema stability. Pass either an explicit
    ``reference`` (delay, area) or the bit-width ``n`` to derive one.
    """
    if reference is None:
        if n is None:
            raise MissingReferenceError(
                "supply reference=(delay, area) or n to derive the Wallace reference"
            )
        reference = wallace_reference(n, timing)
    ref_delay, ref_area = reference
    delay, area = netlist_metrics(nl, timing)
    delays = tuple(delay for _ in SCENARIOS)
    areas = tuple(area for _ in SCENARIOS)
    d_norm = sum(d / ref_delay for d in delays)
    a_norm = sum(a / ref_area for a in areas)
    y = (w * d_norm + (1 - w) * a_norm) / len(SCENARIOS)
    return QoRLabel(delays=delays, areas=areas, y=y, weight=w)


def evaluate_design(
    design: CompressorTree | PrefixBitmap,
    *,
    ct: CompressorTree | None = None,
    cpa: PrefixBitmap | None = None,
    timing: TimingModel = DEFAULT_TIMING,
    w: float = DEFAULT_TRADEOFF_WEIGHT,
    extra_stages: int = 1,
) -> QoRLabel:
    """Assemble the design into a full multiplier and score it.

    Compressor trees pair with ``cpa`` (default: serial). Prefix designs serve
    as the carry-propagate adder of the multiplier given by ``ct`` (default:
    the Wallace tree of the matching width, n = adder width / 2).
    """
    if isinstance(design, CompressorTree):
        nl = assemble_multiplier(design, cpa, timing=timing)
        n = design.n
    elif isinstance(design, PrefixBitmap):
        if design.n % 2:
            raise ValueError("adder width for a multiplier CPA must be even")
        n = design.n // 2
        host = ct if ct is not None else wallace_tree(n, extra_stages)
        nl = assemble_multiplier(host, design, timing=timing)
    else:
        raise TypeError(f"cannot evaluate {type(design).__name__}")
    return evaluate_qor(nl, timing, w, reference=wallace_reference(n, timing, extra_stages))
