"""Attention-memory accounting: sum of squared window lengths.

A flat encoder over L tokens in one window materializes an L x L attention
matrix. The hierarchical model only ever attends inside one step window of
``k + n_t + k`` positions, so its cost is the sum of those squares; with k=0
and M equal segments that is L**2 / M.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable

from .log_tree import SegmentPlan


def hierarchical_cost(segment_lengths: Iterable[int] | SegmentPlan, summary_slots: int) -> int:
    if isinstance(segment_lengths, SegmentPlan):
        segment_lengths = [len(s.token_ids) for s in segment_lengths.steps]
    return sum((2 * summary_slots + n) ** 2 for n in segment_lengths)


def flat_cost(n_tokens: int, window: int) -> int:
    full, rest = divmod(n_tokens, window)
    return full * window * window + rest * rest


@dataclass(frozen=True)
class MemoryRow:
    record_id: str
    tokens: int
    segments: int
    largest_window: int
    hierarchical: int
    flat: int

    @property
    def ratio(self) -> Fraction:
        return Fraction(self.hierarchical, self.flat)

    def to_dict(self) -> dict:
        return {
            "record_id": self.record_id,
            "tokens": self.tokens,
            "segments": self.segments,
            "largest_window": self.largest_window,
            "hierarchical": self.hierarchical,
            "flat": self.flat,
            "ratio": float(self.ratio),
            "ratio_exact": str(self.ratio),
        }


def memory_row(record_id: str, segment_lengths: list[int], flat_tokens: int,
               summary_slots: int, window: int) -> MemoryRow:
    return MemoryRow(
        record_id=record_id,
        tokens=flat_tokens,
        segments=len(segment_lengths),
        largest_window=max(2 * summary_slots + n for n in segment_lengths),
        hierarchical=hierarchical_cost(segment_lengths, summary_slots),
        flat=flat_cost(flat_tokens, window),
    )
